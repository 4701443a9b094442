#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tacitree/corpus.hpp"
#include "tacitree/gateway/gateway.hpp"
#include "tacitree/gateway/mock_backend.hpp"
#include "tacitree/memory_model.hpp"

namespace tacitree::testing {

std::unique_ptr<Gateway> mock_gateway(MockOptions opts = {}, int max_inflight = 4);

// Chat backend answering through a callback; counts its calls.
class ScriptedBackend final : public ChatBackend {
 public:
  using Fn = std::function<std::string(const ChatRequest&)>;
  explicit ScriptedBackend(Fn fn) : fn_(std::move(fn)) {}
  std::string complete(const ChatRequest& r) override {
    ++calls;
    return fn_(r);
  }
  std::atomic<int> calls{0};

 private:
  Fn fn_;
};

// Every chat role goes to `chat`; embeddings come from the mock.
std::unique_ptr<Gateway> scripted_gateway(std::shared_ptr<ChatBackend> chat, int max_inflight = 1);

// Pseudo word owned by one topic; words of different topics never coincide.
std::string topic_word(std::size_t topic, std::size_t j);

struct TopicFacts {
  std::vector<Fact> facts;
  std::vector<std::size_t> topic;  // per fact
};

// n facts spread over `topics` lexical topics; three facts per session.
TopicFacts topic_facts(std::size_t n, std::size_t topics, std::uint64_t seed, std::size_t words_per_topic = 12);

// Raw persona strings, `n` of them, drawn from a fixed list.
std::vector<std::string> personas(std::size_t n, std::uint64_t seed);

// Noise sessions that talk about persona-related things in ordinary words.
std::vector<PoolSource> make_pool(const std::vector<std::string>& personas, std::size_t sources,
                                  std::size_t per_source, std::uint64_t seed);

// Writes each source as NAME.jsonl under dir.
void write_pool(const std::vector<PoolSource>& pool, const std::string& dir);

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace tacitree::testing
