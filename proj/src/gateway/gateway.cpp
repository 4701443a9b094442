#include "tacitree/gateway/gateway.hpp"

#include <chrono>
#include <cmath>
#include <set>
#include <thread>

#include "tacitree/error.hpp"

namespace tacitree {

namespace {

constexpr std::size_t kEmbedChunk = 64;

template <typename Sem>
class InflightGuard {
 public:
  explicit InflightGuard(Sem& s) : s_(s) { s_.acquire(); }
  ~InflightGuard() { s_.release(); }
  InflightGuard(const InflightGuard&) = delete;
  InflightGuard& operator=(const InflightGuard&) = delete;

 private:
  Sem& s_;
};

}  // namespace

const char* role_name(Role r) {
  switch (r) {
    case Role::generator_m1: return "generator_M1";
    case Role::framework_m2: return "framework_M2";
    case Role::embedder_e: return "embedder_E";
    case Role::judge: return "judge";
  }
  return "unknown";
}

Role parse_role(std::string_view s) {
  if (s == "generator_M1" || s == "generator_m1") return Role::generator_m1;
  if (s == "framework_M2" || s == "framework_m2") return Role::framework_m2;
  if (s == "embedder_E" || s == "embedder_e") return Role::embedder_e;
  if (s == "judge") return Role::judge;
  throw Error(Errc::invalid_config, std::string(s), "unknown role");
}

const char* backend_kind_name(BackendKind k) {
  switch (k) {
    case BackendKind::http_chat: return "http_chat";
    case BackendKind::http_embed: return "http_embed";
    case BackendKind::mock: return "mock";
  }
  return "unknown";
}

BackendKind parse_backend_kind(std::string_view s) {
  if (s == "http_chat") return BackendKind::http_chat;
  if (s == "http_embed") return BackendKind::http_embed;
  if (s == "mock") return BackendKind::mock;
  throw Error(Errc::invalid_config, std::string(s), "unknown backend kind");
}

void BackendProfile::validate() const {
  if (kind != BackendKind::mock && (endpoint.empty() || model_name.empty()))
    throw Error(Errc::invalid_config, role_name(role), "http backends need endpoint and model_name");
  if (max_retries < 0) throw Error(Errc::invalid_config, role_name(role), "max_retries must be >= 0");
}

void normalize(Embedding& v) {
  const double n = v.norm();
  if (n > 0.0) v /= n;
}

double cosine(const Embedding& a, const Embedding& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

Gateway::Gateway(int max_inflight, Tokenizer tokenizer)
    : max_inflight_(max_inflight), tokenizer_(std::move(tokenizer)), limiter_(max_inflight) {
  if (max_inflight < 1) throw Error(Errc::invalid_config, "max_inflight", "must be positive");
}

Gateway::~Gateway() = default;

void Gateway::bind_chat(BackendProfile profile, std::shared_ptr<ChatBackend> backend) {
  profile.validate();
  const Role r = profile.role;
  chat_[r] = ChatBinding{std::move(profile), std::move(backend)};
}

void Gateway::bind_embed(BackendProfile profile, std::shared_ptr<EmbedBackend> backend) {
  profile.validate();
  embed_profile_ = std::move(profile);
  embed_backend_ = std::move(backend);
}

double Gateway::temperature_for(Role role) { return role == Role::generator_m1 ? 0.8 : 0.0; }

template <typename Fn>
auto Gateway::with_retries(const BackendProfile& profile, Fn&& fn, int& retries) -> decltype(fn()) {
  std::string last_error;
  for (int attempt = 0; attempt <= profile.max_retries; ++attempt) {
    if (attempt > 0) {
      ++retries;
      std::this_thread::sleep_for(profile.backoff_base * (1LL << (attempt - 1)));
    }
    try {
      InflightGuard guard(limiter_);
      return fn();
    } catch (const TransientBackendError& e) {
      last_error = e.what();
    }
  }
  throw Error(Errc::backend_unavailable, role_name(profile.role), last_error);
}

ChatResult Gateway::chat(Role role, const PromptTemplate& tmpl, const TemplateVars& vars, std::string_view suffix) {
  auto it = chat_.find(role);
  if (it == chat_.end() || !it->second.backend) throw Error(Errc::invalid_config, role_name(role), "no chat backend bound");
  const auto& binding = it->second;

  std::string prompt = tmpl.render(vars);
  prompt += suffix;

  ChatRequest req{role, binding.profile.model_name, tmpl.id(), prompt, vars, temperature_for(role)};
  CallRecord rec;
  rec.role = role;
  rec.template_id = tmpl.id();
  rec.prompt_tokens = tokenizer_.count(prompt);

  const auto start = std::chrono::steady_clock::now();
  std::string text = with_retries(binding.profile, [&] { return binding.backend->complete(req); }, rec.retry_count);
  rec.latency = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start);
  rec.completion_tokens = tokenizer_.count(text);
  log(rec);
  return {std::move(text), std::move(rec)};
}

std::vector<Embedding> Gateway::embed(std::span<const std::string> texts) {
  if (texts.empty()) throw Error(Errc::empty_input, "embed");
  if (!embed_backend_) throw Error(Errc::invalid_config, role_name(Role::embedder_e), "no embedding backend bound");

  std::vector<std::string> missing;
  {
    std::lock_guard lock(cache_mutex_);
    std::set<std::string_view> queued;
    for (const auto& t : texts) {
      if (!embed_cache_.count(t) && queued.insert(t).second) missing.push_back(t);
    }
  }

  for (std::size_t off = 0; off < missing.size(); off += kEmbedChunk) {
    const std::size_t n = std::min(kEmbedChunk, missing.size() - off);
    std::span<const std::string> chunk(missing.data() + off, n);
    CallRecord rec;
    rec.role = Role::embedder_e;
    rec.template_id = "embed";
    for (const auto& t : chunk) rec.prompt_tokens += tokenizer_.count(t);
    const auto start = std::chrono::steady_clock::now();
    auto vecs = with_retries(*embed_profile_, [&] { return embed_backend_->embed(chunk); }, rec.retry_count);
    rec.latency = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start);
    if (vecs.size() != n) throw Error(Errc::backend_unavailable, "embed", "backend returned wrong vector count");
    std::lock_guard lock(cache_mutex_);
    for (std::size_t i = 0; i < n; ++i) {
      auto& v = vecs[i];
      if (v.size() == 0 || !v.allFinite()) throw Error(Errc::backend_unavailable, "embed", "non-finite or empty vector");
      if (!embed_cache_.empty() && embed_cache_.begin()->second.size() != v.size())
        throw Error(Errc::backend_unavailable, "embed", "inconsistent embedding dimension");
      normalize(v);
      embed_cache_.emplace(chunk[i], std::move(v));
    }
    log(std::move(rec));
  }

  std::vector<Embedding> out;
  out.reserve(texts.size());
  std::lock_guard lock(cache_mutex_);
  for (const auto& t : texts) out.push_back(embed_cache_.find(t)->second);
  return out;
}

Embedding Gateway::embed_one(std::string_view text) {
  std::string t(text);
  return embed(std::span<const std::string>(&t, 1)).front();
}

void Gateway::log(CallRecord rec) {
  std::lock_guard lock(log_mutex_);
  log_.push_back(std::move(rec));
}

std::vector<CallRecord> Gateway::call_log() const {
  std::lock_guard lock(log_mutex_);
  return log_;
}

UsageTotals Gateway::usage(std::optional<Role> role) const {
  std::lock_guard lock(log_mutex_);
  UsageTotals u;
  for (const auto& r : log_) {
    if (role && r.role != *role) continue;
    ++u.calls;
    u.prompt_tokens += r.prompt_tokens;
    u.completion_tokens += r.completion_tokens;
  }
  return u;
}

void Gateway::clear_log() {
  std::lock_guard lock(log_mutex_);
  log_.clear();
}

}  // namespace tacitree
