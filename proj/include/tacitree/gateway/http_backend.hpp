#pragma once

#include <string>

#include "tacitree/gateway/backend.hpp"

namespace tacitree {

// Talks the chat-completions / embeddings JSON shape:
//   POST {endpoint} {"model", "messages": [{"role": "user", "content"}], "temperature"}
//   POST {endpoint} {"model", "input": [...]}
// The API key, if any, is read from the environment variable named in the
// profile and sent as a bearer token.
class HttpChatBackend final : public ChatBackend {
 public:
  explicit HttpChatBackend(BackendProfile profile);
  std::string complete(const ChatRequest& request) override;

 private:
  BackendProfile profile_;
};

class HttpEmbedBackend final : public EmbedBackend {
 public:
  explicit HttpEmbedBackend(BackendProfile profile);
  std::vector<Embedding> embed(std::span<const std::string> texts) override;
  std::string model() const override { return profile_.model_name; }

 private:
  BackendProfile profile_;
};

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl parse_url(const std::string& url);

}  // namespace tacitree
