#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "tacitree/gateway/backend.hpp"

namespace tacitree {

struct MockOptions {
  int embed_dim = 64;
  // 0 disables truncation of mock summaries.
  std::size_t summary_cap_bytes = 0;
  std::uint64_t seed = 0;
};

// Hashed bag-of-words: every non-stopword term adds +-1 at hash(term) % dim.
// The result is L2-normalized (zero only if all terms cancel).
Embedding mock_embedding(std::string_view text, int dim = 64);

// Deterministic stand-in for both chat and embedding roles. Responses are a
// pure function of the template id, the bound variables and the seed.
class MockBackend final : public ChatBackend, public EmbedBackend {
 public:
  explicit MockBackend(MockOptions opts = {}) : opts_(opts) {}

  std::string complete(const ChatRequest& request) override;
  std::vector<Embedding> embed(std::span<const std::string> texts) override;
  std::string model() const override { return "mock"; }

  const MockOptions& options() const { return opts_; }

 private:
  MockOptions opts_;
};

// Vocabulary used by the mock for generated text. Scenario words contain one
// of x/z/q/k/y/w/j and never collide with filler words.
std::string mock_filler_word(std::uint64_t h);
std::string mock_scenario_word(std::uint64_t h);

}  // namespace tacitree
