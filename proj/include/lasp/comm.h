// Copyright 2026 The LASP Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LASP_COMM_H_
#define LASP_COMM_H_

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string_view>
#include <vector>

#include "lasp/matrix.h"

namespace lasp {

enum class MessageTag { kKvForward, kDkvBackward };

// "KV_FWD" / "DKV_BWD"
std::string_view tag_name(MessageTag tag);
std::optional<MessageTag> parse_tag(std::string_view name);

// One point-to-point transfer of a d_h x d_h state.
struct Message {
  int src = 0;
  int dst = 0;
  MessageTag tag = MessageTag::kKvForward;
  int layer = 0;
  int head = 0;
  Matrix payload;
};

struct TraceRecord {
  std::uint64_t step = 0;
  int src = 0;
  int dst = 0;
  MessageTag tag = MessageTag::kKvForward;
  int layer = 0;
  int head = 0;
  std::uint64_t elements = 0;
  std::uint64_t bytes = 0;

  friend bool operator==(const TraceRecord &, const TraceRecord &) = default;
};

// Ordered log of every simulated message, exported as JSON lines:
//   {"step":..,"src":..,"dst":..,"tag":"KV_FWD","layer":..,"head":..,
//    "elements":..,"bytes":..}
class CommTrace {
 public:
  // Assigns the next step number.
  void append(TraceRecord record);

  const std::vector<TraceRecord> &records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  void write_jsonl(std::ostream &out) const;
  // Throws FormatError on malformed records.
  static CommTrace read_jsonl(std::istream &in);

 private:
  std::vector<TraceRecord> records_;
};

enum class EventKind { kSend, kRecv };

// Send / receive events in the order the mailbox observed them.
struct ProtocolEvent {
  std::uint64_t seq = 0;
  int rank = 0;
  int peer = 0;
  EventKind kind = EventKind::kSend;
  MessageTag tag = MessageTag::kKvForward;
  int layer = 0;
  int head = 0;
  std::size_t elements = 0;
};

// In-process point-to-point transport. Messages are matched on
// (dst, src, tag, layer, head); payloads move by value.
class Mailbox {
 public:
  explicit Mailbox(int world_size);

  void post(Message message);

  // Removes the matching message. With no wait budget a missing message is a
  // ProtocolError immediately; otherwise blocks up to `wait`.
  Message take(int dst, int src, MessageTag tag, int layer, int head,
               std::optional<std::chrono::milliseconds> wait);

  // Wakes all blocked receivers, which then fail with ProtocolError.
  void abort();
  // Drops undelivered messages and clears the abort flag. Events are kept.
  void reset();

  std::size_t pending() const;
  std::vector<ProtocolEvent> events() const;

 private:
  void record(int rank, int peer, EventKind kind, const Message &m);

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::deque<Message>> queues_;
  std::vector<ProtocolEvent> events_;
  std::uint64_t next_seq_ = 0;
  bool aborted_ = false;
};

}  // namespace lasp

#endif  // LASP_COMM_H_
