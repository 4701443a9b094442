#include "tacitree/gateway/http_backend.hpp"

#include <httplib.h>

#include <cstdlib>

#include "tacitree/error.hpp"

namespace tacitree {

namespace {

json post_json(const BackendProfile& profile, const json& body) {
  const auto url = parse_url(profile.endpoint);
  httplib::Client cli(url.origin);
  const auto secs = profile.timeout.count() / 1000;
  const auto usecs = (profile.timeout.count() % 1000) * 1000;
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (!profile.api_key_env.empty()) {
    if (const char* key = std::getenv(profile.api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  auto res = cli.Post(url.path, headers, body.dump(), "application/json");
  if (!res) throw TransientBackendError("request failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500)
    throw TransientBackendError("HTTP " + std::to_string(res->status));
  if (res->status < 200 || res->status >= 300)
    throw Error(Errc::backend_unavailable, role_name(profile.role), "HTTP " + std::to_string(res->status));
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    throw Error(Errc::backend_unavailable, role_name(profile.role), std::string("bad JSON body: ") + e.what());
  }
}

}  // namespace

ParsedUrl parse_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(Errc::invalid_config, url, "endpoint must be an absolute URL");
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

HttpChatBackend::HttpChatBackend(BackendProfile profile) : profile_(std::move(profile)) { profile_.validate(); }

std::string HttpChatBackend::complete(const ChatRequest& req) {
  json body = {{"model", std::string(req.model)},
               {"messages", json::array({{{"role", "user"}, {"content", std::string(req.prompt)}}})},
               {"temperature", req.temperature}};
  json out = post_json(profile_, body);
  try {
    return out.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw Error(Errc::backend_unavailable, role_name(profile_.role), "response lacks choices[0].message.content");
  }
}

HttpEmbedBackend::HttpEmbedBackend(BackendProfile profile) : profile_(std::move(profile)) { profile_.validate(); }

std::vector<Embedding> HttpEmbedBackend::embed(std::span<const std::string> texts) {
  json body = {{"model", profile_.model_name}, {"input", json::array()}};
  for (const auto& t : texts) body["input"].push_back(t);
  json out = post_json(profile_, body);
  std::vector<Embedding> vecs(texts.size());
  try {
    const auto& data = out.at("data");
    if (data.size() != texts.size()) throw Error(Errc::backend_unavailable, "embed", "wrong number of vectors");
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& item = data[i];
      std::size_t slot = item.contains("index") ? item.at("index").get<std::size_t>() : i;
      if (slot >= vecs.size()) throw Error(Errc::backend_unavailable, "embed", "index out of range");
      auto values = item.at("embedding").get<std::vector<double>>();
      vecs[slot] = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
    }
  } catch (const json::exception&) {
    throw Error(Errc::backend_unavailable, "embed", "response lacks data[].embedding");
  }
  return vecs;
}

}  // namespace tacitree
