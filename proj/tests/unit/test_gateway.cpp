#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include "synthetic.hpp"
#include "tacitree/error.hpp"
#include "tacitree/gateway/fixtures.hpp"
#include "tacitree/gateway/gateway.hpp"
#include "tacitree/gateway/http_backend.hpp"
#include "tacitree/gateway/mock_backend.hpp"
#include "tacitree/gateway/prompts.hpp"
#include "tacitree/parallel.hpp"

#include <httplib.h>

using namespace tacitree;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::io_error;
}

// A local HTTP server on an ephemeral port, stopped on destruction.
struct StubServer {
  httplib::Server server;
  int port = 0;
  std::thread thread;

  StubServer() = default;
  void start() {
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~StubServer() {
    server.stop();
    if (thread.joinable()) thread.join();
  }
  std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port) + path; }
};

BackendProfile http_profile(const std::string& endpoint, BackendKind kind, Role role, int retries = 2) {
  BackendProfile p;
  p.kind = kind;
  p.endpoint = endpoint;
  p.model_name = "stub-model";
  p.role = role;
  p.max_retries = retries;
  p.backoff_base = std::chrono::milliseconds{1};
  p.timeout = std::chrono::milliseconds{2000};
  return p;
}

const PromptTemplate kEcho("echo", "Say {word}.");

class SlowBackend final : public ChatBackend {
 public:
  std::string complete(const ChatRequest&) override {
    const int now = ++active_;
    int seen = peak_.load();
    while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds{5});
    --active_;
    return "ok";
  }
  int peak() const { return peak_; }

 private:
  std::atomic<int> active_{0}, peak_{0};
};

class FixedBackend final : public ChatBackend {
 public:
  explicit FixedBackend(std::string body) : body_(std::move(body)) {}
  std::string complete(const ChatRequest&) override {
    ++calls;
    return body_;
  }
  int calls = 0;

 private:
  std::string body_;
};

}  // namespace

TEST_CASE("templates render placeholders and literal braces") {
  PromptTemplate t("t", "A {x} and {{literal}} and {y}.");
  CHECK(t.required_vars() == std::set<std::string>{"x", "y"});
  CHECK(t.render({{"x", "1"}, {"y", "2"}}) == "A 1 and {literal} and 2.");
  CHECK(code_of([&] { t.render({{"x", "1"}}); }) == Errc::template_var_missing);
}

TEST_CASE("every library template renders with its required variables") {
  for (const auto* t : {&prompts::persona(), &prompts::opposed_reasons(), &prompts::supportive_reasons(),
                        &prompts::opposed_question(), &prompts::select_opposed(), &prompts::distractors(),
                        &prompts::transcript(), &prompts::summarize_high(), &prompts::summarize_leaf(),
                        &prompts::extract_facts(), &prompts::relevance_batch(), &prompts::relevance_single(),
                        &prompts::verify_supportive(), &prompts::answer(), &prompts::judge_answer()}) {
    TemplateVars vars;
    for (const auto& v : t->required_vars()) vars[v] = "VALUE_" + v;
    const auto out = t->render(vars);
    for (const auto& v : t->required_vars()) {
      CHECK(out.find("VALUE_" + v) != std::string::npos);
      CHECK(out.find("{" + v + "}") == std::string::npos);
    }
  }
}

TEST_CASE("mock embeddings are unit-norm and deterministic") {
  auto a = mock_embedding("The user adopted a rescue greyhound.");
  auto b = mock_embedding("The user adopted a rescue greyhound.");
  CHECK(a.size() == 64);
  CHECK(a.norm() == doctest::Approx(1.0));
  CHECK((a - b).norm() == 0.0);
  CHECK(cosine(a, mock_embedding("Quarterly tax filing deadline approaches.")) < 0.9);
}

TEST_CASE("mock chat is a pure function of template, vars and seed") {
  MockBackend m1, m2, other(MockOptions{.seed = 5});
  TemplateVars vars{{"persona", "a gardener growing tomatoes"}};
  const auto& t = prompts::persona();
  ChatRequest req{Role::generator_m1, "mock", t.id(), t.render(vars), vars, 0.8};
  CHECK(m1.complete(req) == m2.complete(req));
  CHECK(m1.complete(req).find("This person") != std::string::npos);
  (void)other;
}

TEST_CASE("gateway logs usage and caches embeddings") {
  auto gw = testing::mock_gateway();
  gw->chat(Role::framework_m2, prompts::summarize_leaf(), {{"text", "one\ntwo"}});
  auto log = gw->call_log();
  REQUIRE(log.size() == 1);
  CHECK(log[0].template_id == prompts::summarize_leaf().id());
  CHECK(log[0].prompt_tokens > 0);
  CHECK(gw->usage(Role::framework_m2).calls == 1);
  CHECK(gw->usage(Role::judge).calls == 0);
  auto a = gw->embed_one("hello world");
  auto b = gw->embed_one("hello world");
  CHECK((a - b).norm() == 0.0);
  CHECK(code_of([&] { gw->embed(std::vector<std::string>{}); }) == Errc::empty_input);
  CHECK(Gateway::temperature_for(Role::generator_m1) == 0.8);
  CHECK(Gateway::temperature_for(Role::judge) == 0.0);
}

TEST_CASE("unbound roles are a configuration error") {
  Gateway gw;
  CHECK(code_of([&] { gw.chat(Role::judge, kEcho, {{"word", "x"}}); }) == Errc::invalid_config);
  CHECK(code_of([&] { gw.embed_one("x"); }) == Errc::invalid_config);
}

TEST_CASE("in-flight calls never exceed the gateway cap") {
  Gateway gw(3);
  auto slow = std::make_shared<SlowBackend>();
  BackendProfile p;
  p.role = Role::framework_m2;
  gw.bind_chat(p, slow);
  parallel_for(24, 8, [&](std::size_t) { gw.chat(Role::framework_m2, kEcho, {{"word", "x"}}); });
  CHECK(slow->peak() >= 1);
  CHECK(slow->peak() <= 3);
}

TEST_CASE("http chat retries transient failures at most max_retries + 1 times") {
  StubServer s;
  std::atomic<int> hits{0};
  s.server.Post("/fail", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 503;
  });
  s.server.Post("/flaky", [&](const httplib::Request& req, httplib::Response& res) {
    if (++hits % 2 == 1) {
      res.status = 429;
      return;
    }
    auto body = json::parse(req.body);
    const std::string prompt = body["messages"][0]["content"];
    res.set_content(json{{"choices", {{{"message", {{"content", "echo: " + prompt}}}}}}}.dump(), "application/json");
  });
  s.server.Post("/denied", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 401;
  });
  s.start();

  Gateway gw;
  gw.bind_chat(http_profile(s.url("/fail"), BackendKind::http_chat, Role::judge, 2),
               std::make_shared<HttpChatBackend>(http_profile(s.url("/fail"), BackendKind::http_chat, Role::judge, 2)));
  CHECK(code_of([&] { gw.chat(Role::judge, kEcho, {{"word", "x"}}); }) == Errc::backend_unavailable);
  CHECK(hits == 3);

  hits = 0;
  auto flaky = http_profile(s.url("/flaky"), BackendKind::http_chat, Role::framework_m2, 2);
  gw.bind_chat(flaky, std::make_shared<HttpChatBackend>(flaky));
  auto r = gw.chat(Role::framework_m2, kEcho, {{"word", "hi"}});
  CHECK(r.text == "echo: Say hi.");
  CHECK(r.record.retry_count == 1);
  CHECK(hits == 2);

  hits = 0;
  auto denied = http_profile(s.url("/denied"), BackendKind::http_chat, Role::generator_m1, 3);
  gw.bind_chat(denied, std::make_shared<HttpChatBackend>(denied));
  CHECK(code_of([&] { gw.chat(Role::generator_m1, kEcho, {{"word", "x"}}); }) == Errc::backend_unavailable);
  CHECK(hits == 1);
}

TEST_CASE("http requests carry model, temperature and bearer key") {
  StubServer s;
  json seen;
  std::string auth;
  s.server.Post("/chat", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(R"({"choices":[{"message":{"content":"fine"}}]})", "application/json");
  });
  s.server.Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body);
    json data = json::array();
    const auto n = body["input"].size();
    for (std::size_t i = n; i-- > 0;) data.push_back({{"index", i}, {"embedding", {3.0 * (i + 1), 4.0}}});
    res.set_content(json{{"data", data}}.dump(), "application/json");
  });
  s.start();
  ::setenv("TACITREE_TEST_KEY", "sekrit", 1);
  auto chat = http_profile(s.url("/chat"), BackendKind::http_chat, Role::judge);
  chat.api_key_env = "TACITREE_TEST_KEY";
  auto emb = http_profile(s.url("/embed"), BackendKind::http_embed, Role::embedder_e);
  Gateway gw;
  gw.bind_chat(chat, std::make_shared<HttpChatBackend>(chat));
  gw.bind_embed(emb, std::make_shared<HttpEmbedBackend>(emb));
  CHECK(gw.chat(Role::judge, kEcho, {{"word", "x"}}).text == "fine");
  CHECK(seen["model"] == "stub-model");
  CHECK(seen["temperature"] == 0.0);
  CHECK(auth == "Bearer sekrit");
  auto vecs = gw.embed(std::vector<std::string>{"a", "b"});
  REQUIRE(vecs.size() == 2);
  CHECK(vecs[0][0] == doctest::Approx(0.6));
  CHECK(vecs[1][0] == doctest::Approx(6.0 / std::sqrt(52.0)));
}

TEST_CASE("url parsing") {
  auto u = parse_url("https://api.example.com:8443/v1/chat");
  CHECK(u.origin == "https://api.example.com:8443");
  CHECK(u.path == "/v1/chat");
  CHECK(code_of([] { parse_url("api.example.com/v1"); }) == Errc::invalid_config);
}

TEST_CASE("recorded responses replay verbatim") {
  const std::string body = "  odd spacing\n\n1: keep {braces} and trailing space ";
  auto store = std::make_shared<FixtureStore>();
  auto inner = std::make_shared<FixedBackend>(body);
  Gateway rec;
  BackendProfile p;
  p.role = Role::framework_m2;
  rec.bind_chat(p, std::make_shared<FixtureChatBackend>(store, inner));
  rec.bind_embed(BackendProfile{.role = Role::embedder_e},
                 std::make_shared<FixtureEmbedBackend>(store, "mock", std::make_shared<MockBackend>()));
  CHECK(rec.chat(Role::framework_m2, kEcho, {{"word", "x"}}).text == body);
  auto v = rec.embed_one("fixture text");

  const auto path = std::filesystem::temp_directory_path() / "tacitree_fixture_test.json";
  store->save(path);
  auto loaded = FixtureStore::load(path);
  std::filesystem::remove(path);
  Gateway replay;
  replay.bind_chat(p, std::make_shared<FixtureChatBackend>(loaded));
  replay.bind_embed(BackendProfile{.role = Role::embedder_e}, std::make_shared<FixtureEmbedBackend>(loaded, "mock"));
  CHECK(replay.chat(Role::framework_m2, kEcho, {{"word", "x"}}).text == body);
  CHECK((replay.embed_one("fixture text") - v).norm() == 0.0);
  CHECK(inner->calls == 1);
  CHECK(code_of([&] { replay.chat(Role::framework_m2, kEcho, {{"word", "other"}}); }) == Errc::backend_unavailable);
}
