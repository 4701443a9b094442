#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string_view>
#include <vector>

#include "tacitree/gateway/backend.hpp"
#include "tacitree/gateway/tokenizer.hpp"

namespace tacitree {

struct ChatResult {
  std::string text;
  CallRecord record;
};

struct UsageTotals {
  std::size_t calls = 0;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

// Uniform access to the chat and embedding backends bound per role. Safe for
// concurrent use: the only shared state is the in-flight limiter, the call
// log and the embedding cache.
class Gateway {
 public:
  explicit Gateway(int max_inflight = 4, Tokenizer tokenizer = {});
  ~Gateway();

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  void bind_chat(BackendProfile profile, std::shared_ptr<ChatBackend> backend);
  void bind_embed(BackendProfile profile, std::shared_ptr<EmbedBackend> backend);

  // Renders the template and sends it to the backend bound to `role`,
  // retrying transient failures with exponential backoff.
  ChatResult chat(Role role, const PromptTemplate& tmpl, const TemplateVars& vars, std::string_view suffix = {});

  // One unit-norm vector per input, order preserved.
  std::vector<Embedding> embed(std::span<const std::string> texts);
  Embedding embed_one(std::string_view text);

  const Tokenizer& tokenizer() const { return tokenizer_; }
  void set_tokenizer(Tokenizer t) { tokenizer_ = std::move(t); }
  int max_inflight() const { return max_inflight_; }

  std::vector<CallRecord> call_log() const;
  UsageTotals usage(std::optional<Role> role = std::nullopt) const;
  void clear_log();

  // Default decoding temperature per role: 0.8 for generation, 0 otherwise.
  static double temperature_for(Role role);

 private:
  struct ChatBinding {
    BackendProfile profile;
    std::shared_ptr<ChatBackend> backend;
  };

  template <typename Fn>
  auto with_retries(const BackendProfile& profile, Fn&& fn, int& retries) -> decltype(fn());

  void log(CallRecord rec);

  int max_inflight_;
  Tokenizer tokenizer_;
  std::counting_semaphore<4096> limiter_;
  std::map<Role, ChatBinding> chat_;
  std::optional<BackendProfile> embed_profile_;
  std::shared_ptr<EmbedBackend> embed_backend_;

  mutable std::mutex log_mutex_;
  std::vector<CallRecord> log_;

  std::mutex cache_mutex_;
  std::map<std::string, Embedding, std::less<>> embed_cache_;
};

// L2-normalizes in place; zero vectors are left untouched.
void normalize(Embedding& v);
double cosine(const Embedding& a, const Embedding& b);

}  // namespace tacitree
