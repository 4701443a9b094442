#pragma once

#include <chrono>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tacitree/gateway/prompt.hpp"
#include "tacitree/memory_model.hpp"

namespace tacitree {

// generator_m1 builds corpora, framework_m2 runs extraction/summaries/relevance,
// embedder_e embeds, judge grades answers.
enum class Role { generator_m1, framework_m2, embedder_e, judge };

const char* role_name(Role r);
Role parse_role(std::string_view s);

enum class BackendKind { http_chat, http_embed, mock };

const char* backend_kind_name(BackendKind k);
BackendKind parse_backend_kind(std::string_view s);

struct BackendProfile {
  BackendKind kind = BackendKind::mock;
  std::string endpoint;
  std::string model_name = "mock";
  std::string api_key_env;
  int max_retries = 3;
  std::chrono::milliseconds timeout{60000};
  std::chrono::milliseconds backoff_base{1000};
  Role role = Role::framework_m2;

  void validate() const;
};

struct CallRecord {
  Role role = Role::framework_m2;
  std::string template_id;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  std::chrono::microseconds latency{0};
  int retry_count = 0;
};

struct ChatRequest {
  Role role;
  std::string_view model;
  std::string_view template_id;
  std::string_view prompt;
  const TemplateVars& vars;
  double temperature;
};

// Thrown by backends for failures that are worth retrying (timeouts,
// connection errors, 429/5xx).
class TransientBackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
};

class EmbedBackend {
 public:
  virtual ~EmbedBackend() = default;
  virtual std::vector<Embedding> embed(std::span<const std::string> texts) = 0;
  virtual std::string model() const = 0;
};

}  // namespace tacitree
