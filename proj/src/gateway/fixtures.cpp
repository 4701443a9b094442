#include "tacitree/gateway/fixtures.hpp"

#include <fstream>

#include "tacitree/error.hpp"
#include "tacitree/text.hpp"

namespace tacitree {

std::shared_ptr<FixtureStore> FixtureStore::load(const std::filesystem::path& path) {
  auto store = std::make_shared<FixtureStore>();
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, path.string(), "cannot open fixtures file");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(Errc::io_error, path.string(), e.what());
  }
  store->chat_ = j.value("chat", json::object());
  store->embed_ = j.value("embed", json::object());
  return store;
}

void FixtureStore::save(const std::filesystem::path& path) const {
  std::lock_guard lock(mu_);
  std::ofstream out(path);
  if (!out) throw Error(Errc::io_error, path.string(), "cannot write fixtures file");
  out << json{{"chat", chat_}, {"embed", embed_}}.dump(1) << '\n';
}

std::optional<std::string> FixtureStore::chat(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = chat_.find(key);
  if (it == chat_.end()) return std::nullopt;
  return it->get<std::string>();
}

std::optional<Embedding> FixtureStore::embedding(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = embed_.find(key);
  if (it == embed_.end()) return std::nullopt;
  auto values = it->get<std::vector<double>>();
  return Embedding(Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
}

void FixtureStore::put_chat(const std::string& key, std::string text) {
  std::lock_guard lock(mu_);
  chat_[key] = std::move(text);
}

void FixtureStore::put_embedding(const std::string& key, const Embedding& v) {
  std::lock_guard lock(mu_);
  embed_[key] = std::vector<double>(v.data(), v.data() + v.size());
}

std::size_t FixtureStore::size() const {
  std::lock_guard lock(mu_);
  return chat_.size() + embed_.size();
}

std::string FixtureStore::chat_key(const ChatRequest& req) {
  std::string material = role_name(req.role);
  material += '|';
  material += req.model;
  material += '|';
  material += req.template_id;
  material += '|';
  material += req.prompt;
  return text::hex64(text::fnv1a64(material));
}

std::string FixtureStore::embed_key(std::string_view model, std::string_view t) {
  std::string material = "embed|";
  material += model;
  material += '|';
  material += t;
  return text::hex64(text::fnv1a64(material));
}

std::string FixtureChatBackend::complete(const ChatRequest& req) {
  const auto key = FixtureStore::chat_key(req);
  if (auto hit = store_->chat(key)) return *hit;
  if (!inner_) throw Error(Errc::backend_unavailable, role_name(req.role), "no recorded response for " + key);
  auto text = inner_->complete(req);
  store_->put_chat(key, text);
  return text;
}

std::vector<Embedding> FixtureEmbedBackend::embed(std::span<const std::string> texts) {
  std::vector<Embedding> out(texts.size());
  std::vector<std::string> missing;
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (auto hit = store_->embedding(FixtureStore::embed_key(model_, texts[i]))) {
      out[i] = std::move(*hit);
    } else {
      missing.push_back(texts[i]);
      slots.push_back(i);
    }
  }
  if (missing.empty()) return out;
  if (!inner_) throw Error(Errc::backend_unavailable, "embed", "no recorded embedding for " + missing.front());
  auto fresh = inner_->embed(missing);
  for (std::size_t j = 0; j < fresh.size() && j < slots.size(); ++j) {
    store_->put_embedding(FixtureStore::embed_key(model_, missing[j]), fresh[j]);
    out[slots[j]] = std::move(fresh[j]);
  }
  return out;
}

}  // namespace tacitree
