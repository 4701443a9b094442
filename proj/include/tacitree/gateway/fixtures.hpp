#pragma once

#include <filesystem>
#include <memory>
#include <mutex>

#include "tacitree/gateway/backend.hpp"

namespace tacitree {

// Replays (or records) backend responses keyed by a hash of the request.
// File layout: {"chat": {key: text}, "embed": {key: [values]}}.
class FixtureStore {
 public:
  FixtureStore() = default;
  static std::shared_ptr<FixtureStore> load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::optional<std::string> chat(const std::string& key) const;
  std::optional<Embedding> embedding(const std::string& key) const;
  void put_chat(const std::string& key, std::string text);
  void put_embedding(const std::string& key, const Embedding& v);

  std::size_t size() const;

  static std::string chat_key(const ChatRequest& req);
  static std::string embed_key(std::string_view model, std::string_view text);

 private:
  mutable std::mutex mu_;
  json chat_ = json::object();
  json embed_ = json::object();
};

// With an inner backend the wrapper records; without one it replays and a
// missing entry is a BackendUnavailable error.
class FixtureChatBackend final : public ChatBackend {
 public:
  FixtureChatBackend(std::shared_ptr<FixtureStore> store, std::shared_ptr<ChatBackend> inner = nullptr)
      : store_(std::move(store)), inner_(std::move(inner)) {}
  std::string complete(const ChatRequest& request) override;

 private:
  std::shared_ptr<FixtureStore> store_;
  std::shared_ptr<ChatBackend> inner_;
};

class FixtureEmbedBackend final : public EmbedBackend {
 public:
  FixtureEmbedBackend(std::shared_ptr<FixtureStore> store, std::string model,
                      std::shared_ptr<EmbedBackend> inner = nullptr)
      : store_(std::move(store)), model_(std::move(model)), inner_(std::move(inner)) {}
  std::vector<Embedding> embed(std::span<const std::string> texts) override;
  std::string model() const override { return model_; }

 private:
  std::shared_ptr<FixtureStore> store_;
  std::string model_;
  std::shared_ptr<EmbedBackend> inner_;
};

}  // namespace tacitree
