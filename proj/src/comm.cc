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

#include "lasp/comm.h"

#include <algorithm>
#include <istream>
#include <ostream>
#include <string>

#include "json.hpp"
#include "lasp/errors.h"

namespace lasp {

std::string_view tag_name(MessageTag tag) {
  return tag == MessageTag::kKvForward ? "KV_FWD" : "DKV_BWD";
}

std::optional<MessageTag> parse_tag(std::string_view name) {
  if (name == "KV_FWD") return MessageTag::kKvForward;
  if (name == "DKV_BWD") return MessageTag::kDkvBackward;
  return std::nullopt;
}

void CommTrace::append(TraceRecord record) {
  record.step = records_.size();
  records_.push_back(record);
}

void CommTrace::write_jsonl(std::ostream &out) const {
  for (const auto &r : records_) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["src"] = r.src;
    j["dst"] = r.dst;
    j["tag"] = tag_name(r.tag);
    j["layer"] = r.layer;
    j["head"] = r.head;
    j["elements"] = r.elements;
    j["bytes"] = r.bytes;
    out << j.dump() << "\n";
  }
}

CommTrace CommTrace::read_jsonl(std::istream &in) {
  CommTrace trace;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TraceRecord r;
      r.step = j.at("step").get<std::uint64_t>();
      r.src = j.at("src").get<int>();
      r.dst = j.at("dst").get<int>();
      const auto tag = parse_tag(j.at("tag").get<std::string>());
      if (!tag) throw FormatError("unknown tag");
      r.tag = *tag;
      r.layer = j.at("layer").get<int>();
      r.head = j.at("head").get<int>();
      r.elements = j.at("elements").get<std::uint64_t>();
      r.bytes = j.at("bytes").get<std::uint64_t>();
      trace.records_.push_back(r);
    } catch (const nlohmann::json::exception &e) {
      throw FormatError("trace line " + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError &e) {
      throw FormatError("trace line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return trace;
}

Mailbox::Mailbox(int world_size) : queues_(static_cast<std::size_t>(world_size)) {}

void Mailbox::record(int rank, int peer, EventKind kind, const Message &m) {
  events_.push_back(
      {next_seq_++, rank, peer, kind, m.tag, m.layer, m.head, m.payload.size()});
}

void Mailbox::post(Message message) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (message.dst < 0 || static_cast<std::size_t>(message.dst) >= queues_.size()) {
      throw ProtocolError("send from rank " + std::to_string(message.src) +
                          " to nonexistent rank " + std::to_string(message.dst));
    }
    record(message.src, message.dst, EventKind::kSend, message);
    queues_[static_cast<std::size_t>(message.dst)].push_back(std::move(message));
  }
  cv_.notify_all();
}

Message Mailbox::take(int dst, int src, MessageTag tag, int layer, int head,
                      std::optional<std::chrono::milliseconds> wait) {
  auto describe = [&] {
    return "rank " + std::to_string(dst) + " expected " + std::string(tag_name(tag)) +
           " from rank " + std::to_string(src) + " (layer " + std::to_string(layer) +
           ", head " + std::to_string(head) + ")";
  };
  std::unique_lock<std::mutex> lock(mu_);
  auto &queue = queues_.at(static_cast<std::size_t>(dst));
  auto match = [&] {
    return std::find_if(queue.begin(), queue.end(), [&](const Message &m) {
      return m.src == src && m.tag == tag && m.layer == layer && m.head == head;
    });
  };
  auto it = match();
  if (it == queue.end() && wait) {
    const bool ready = cv_.wait_for(lock, *wait, [&] {
      it = match();
      return aborted_ || it != queue.end();
    });
    if (!ready) throw ProtocolError("timed out: " + describe());
  }
  if (it == queue.end()) {
    throw ProtocolError((aborted_ ? "aborted: " : "missing message: ") + describe());
  }
  Message m = std::move(*it);
  queue.erase(it);
  record(dst, src, EventKind::kRecv, m);
  return m;
}

void Mailbox::abort() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    aborted_ = true;
  }
  cv_.notify_all();
}

void Mailbox::reset() {
  std::lock_guard<std::mutex> lock(mu_);
  for (auto &q : queues_) q.clear();
  aborted_ = false;
}

std::size_t Mailbox::pending() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::size_t n = 0;
  for (const auto &q : queues_) n += q.size();
  return n;
}

std::vector<ProtocolEvent> Mailbox::events() const {
  std::lock_guard<std::mutex> lock(mu_);
  return events_;
}

}  // namespace lasp
