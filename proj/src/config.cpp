#include "tacitree/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "tacitree/error.hpp"
#include "tacitree/gateway/http_backend.hpp"
#include "tacitree/text.hpp"

namespace tacitree {

namespace {

namespace pt = boost::property_tree;

constexpr Role kRoles[] = {Role::generator_m1, Role::framework_m2, Role::embedder_e, Role::judge};

class Section {
 public:
  Section(std::string name, const pt::ptree& tree) : name_(std::move(name)), tree_(tree) {}

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, v] : tree_) {
      if (!used_.count(key)) throw Error(Errc::invalid_config, name_ + "." + key, "unknown key");
    }
  }

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    auto it = tree_.find(key);
    if (it == tree_.not_found()) return std::nullopt;
    return text::trim(it->second.data());
  }

  void str(const std::string& key, std::string& out) {
    if (auto v = raw(key)) out = *v;
  }

  template <typename T>
  void num(const std::string& key, T& out) {
    auto v = raw(key);
    if (!v) return;
    T parsed{};
    auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), parsed);
    if (ec != std::errc() || p != v->data() + v->size())
      throw Error(Errc::invalid_config, name_ + "." + key, "not a number: " + *v);
    out = parsed;
  }

  void flag(const std::string& key, bool& out) {
    auto v = raw(key);
    if (!v) return;
    auto l = text::to_lower(*v);
    if (l == "true" || l == "1" || l == "yes") {
      out = true;
    } else if (l == "false" || l == "0" || l == "no") {
      out = false;
    } else {
      throw Error(Errc::invalid_config, name_ + "." + key, "not a boolean: " + *v);
    }
  }

  void path(const std::string& key, std::filesystem::path& out) {
    if (auto v = raw(key); v && !v->empty()) out = *v;
  }

  template <typename Fn>
  void parsed(const std::string& key, Fn&& fn) {
    if (auto v = raw(key)) fn(*v);
  }

 private:
  std::string name_;
  const pt::ptree& tree_;
  std::set<std::string> used_;
};

BackendProfile default_profile(Role r) {
  BackendProfile p;
  p.role = r;
  p.kind = BackendKind::mock;
  p.model_name = "mock";
  return p;
}

void read_backend(Section& s, BackendProfile& p) {
  s.parsed("kind", [&](const std::string& v) { p.kind = parse_backend_kind(v); });
  s.str("endpoint", p.endpoint);
  s.str("model", p.model_name);
  s.str("api_key_env", p.api_key_env);
  s.num("max_retries", p.max_retries);
  long long ms = p.timeout.count();
  s.num("timeout_ms", ms);
  p.timeout = std::chrono::milliseconds{ms};
  ms = p.backoff_base.count();
  s.num("backoff_ms", ms);
  p.backoff_base = std::chrono::milliseconds{ms};
}

}  // namespace

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  build.seed = s;
  corpus.seed = s;
  mock.seed = s;
}

void RunConfig::force_backend(std::string_view kind) {
  if (kind == "mock") {
    for (auto& [role, p] : backends) {
      p.kind = BackendKind::mock;
      p.model_name = "mock";
    }
    return;
  }
  if (kind == "http") {
    for (auto& [role, p] : backends) {
      if (p.kind == BackendKind::mock) p.kind = role == Role::embedder_e ? BackendKind::http_embed : BackendKind::http_chat;
    }
    return;
  }
  throw Error(Errc::invalid_config, "backend", std::string(kind));
}

void RunConfig::validate() const {
  for (auto r : kRoles) {
    auto it = backends.find(r);
    if (it == backends.end()) throw Error(Errc::invalid_config, role_name(r), "role not bound");
    it->second.validate();
    if (r == Role::embedder_e && it->second.kind == BackendKind::http_chat)
      throw Error(Errc::invalid_config, role_name(r), "embedder needs an embedding backend");
    if (r != Role::embedder_e && it->second.kind == BackendKind::http_embed)
      throw Error(Errc::invalid_config, role_name(r), "chat role bound to an embedding backend");
  }
  if (mock.embed_dim < 1) throw Error(Errc::invalid_config, "mock.embed_dim", "must be positive");
  build.validate();
  retrieval.validate();
  corpus.validate();
  if (record_fixtures && !fixtures_path) throw Error(Errc::invalid_config, "fixtures", "recording needs a path");
}

RunConfig parse_run_config(std::string_view ini_text) {
  pt::ptree tree;
  std::istringstream in{std::string(ini_text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(Errc::invalid_config, "config", e.message() + " at line " + std::to_string(e.line()));
  }

  RunConfig c;
  for (auto r : kRoles) c.backends[r] = default_profile(r);
  std::optional<std::uint64_t> seed;

  for (const auto& [name, body] : tree) {
    if (!body.data().empty() && body.empty())
      throw Error(Errc::invalid_config, name, "keys must live inside a section");
    Section s(name, body);
    if (name == "run") {
      std::uint64_t v = 0;
      bool have = s.raw("seed").has_value();
      s.num("seed", v);
      if (have) seed = v;
      s.num("max_inflight", c.build.max_inflight);
      std::filesystem::path fx;
      s.path("fixtures", fx);
      if (!fx.empty()) c.fixtures_path = fx;
      s.flag("record_fixtures", c.record_fixtures);
    } else if (name == "paths") {
      s.path("history", c.paths.history);
      s.path("tree", c.paths.tree);
      s.path("tasks", c.paths.tasks);
      s.path("pool", c.paths.pool);
      s.path("report", c.paths.report);
    } else if (name == "build") {
      s.num("k", c.build.k);
      s.num("root_size", c.build.root_size);
      s.num("beta", c.build.beta);
      s.num("reducer_dims", c.build.reducer_dims);
      s.parsed("reducer", [&](const std::string& v) { c.build.reducer = parse_reducer(v); });
      s.parsed("level_sizing", [&](const std::string& v) { c.build.level_sizing = parse_level_sizing(v); });
      s.num("tau_dup", c.build.tau_dup);
      s.flag("store_embeddings", c.build.store_embeddings);
    } else if (name == "retrieval") {
      s.num("max_selected_per_level", c.retrieval.max_selected_per_level);
      s.num("fallback_top_m", c.retrieval.fallback_top_m);
      s.parsed("answer_granularity", [&](const std::string& v) { c.retrieval.answer_granularity = parse_granularity(v); });
      s.num("batch_size", c.retrieval.batch_size);
      s.flag("leaf_fact_filter", c.retrieval.leaf_fact_filter);
    } else if (name == "corpus") {
      s.num("beta", c.corpus.beta);
      s.num("near_threshold_band", c.corpus.near_threshold_band);
      s.num("n_scenarios", c.corpus.n_scenarios);
      s.num("min_usable_scenarios", c.corpus.min_usable_scenarios);
      s.num("n_distractors", c.corpus.n_distractors);
      s.num("distractor_rounds", c.corpus.distractor_rounds);
      s.num("pool_per_source", c.corpus.pool_per_source);
      s.num("min_sessions", c.corpus.min_sessions);
      s.num("target_sessions", c.corpus.target_sessions);
      s.num("max_sessions", c.corpus.max_sessions);
      s.num("min_turns", c.corpus.min_turns);
      s.num("late_mention_turn", c.corpus.late_mention_turn);
      s.num("order_attempts", c.corpus.order_attempts);
      s.num("window_days", c.corpus.window_days);
      s.parsed("window_start", [&](const std::string& v) {
        auto ts = parse_timestamp(v);
        if (!ts) throw Error(Errc::invalid_config, "corpus.window_start", v);
        c.corpus.window_start = *ts;
      });
      s.parsed("kinds", [&](const std::string& v) { c.corpus.kinds = parse_kind_selection(v); });
      s.num("traits_per_persona", c.corpus.traits_per_persona);
      s.str("history_id", c.corpus.history_id);
    } else if (name == "eval") {
      s.num("k_top", c.eval.k_top);
      s.parsed("f1_unit", [&](const std::string& v) { c.eval.unit = parse_f1_unit(v); });
      s.str("run_id", c.eval.run_id);
    } else if (name == "mock") {
      s.num("embed_dim", c.mock.embed_dim);
      s.num("summary_cap_bytes", c.mock.summary_cap_bytes);
    } else if (name.starts_with("backend.")) {
      const Role r = parse_role(std::string_view(name).substr(8));
      read_backend(s, c.backends[r]);
    } else {
      throw Error(Errc::invalid_config, name, "unknown section");
    }
  }
  if (seed) {
    c.apply_seed(*seed);
  } else {
    c.apply_seed(c.seed);
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::invalid_config, path.string(), "cannot read config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

json to_json(const RunConfig& c) {
  json backends = json::object();
  for (const auto& [role, p] : c.backends) {
    backends[role_name(role)] = {{"kind", backend_kind_name(p.kind)},
                                 {"endpoint", p.endpoint},
                                 {"model", p.model_name},
                                 {"max_retries", p.max_retries},
                                 {"timeout_ms", p.timeout.count()},
                                 {"backoff_ms", p.backoff_base.count()}};
  }
  return {{"seed", c.seed},
          {"backends", std::move(backends)},
          {"mock", {{"embed_dim", c.mock.embed_dim}, {"summary_cap_bytes", c.mock.summary_cap_bytes}}},
          {"build", to_json(c.build)},
          {"retrieval",
           {{"max_selected_per_level", c.retrieval.max_selected_per_level},
            {"fallback_top_m", c.retrieval.fallback_top_m},
            {"answer_granularity", granularity_name(c.retrieval.answer_granularity)},
            {"batch_size", c.retrieval.batch_size},
            {"leaf_fact_filter", c.retrieval.leaf_fact_filter}}},
          {"corpus", to_json(c.corpus)},
          {"eval", {{"k_top", c.eval.k_top}, {"f1_unit", f1_unit_name(c.eval.unit)}, {"run_id", c.eval.run_id}}}};
}

void Runtime::flush() const {
  if (recording && fixtures && fixtures_path) fixtures->save(*fixtures_path);
}

Runtime make_runtime(const RunConfig& c) {
  c.validate();
  Runtime rt;
  rt.gateway = std::make_unique<Gateway>(c.build.max_inflight);
  rt.fixtures_path = c.fixtures_path;
  rt.recording = c.record_fixtures;
  if (c.fixtures_path) {
    if (c.record_fixtures) {
      rt.fixtures = std::filesystem::exists(*c.fixtures_path) ? FixtureStore::load(*c.fixtures_path)
                                                              : std::make_shared<FixtureStore>();
    } else {
      rt.fixtures = FixtureStore::load(*c.fixtures_path);
    }
  }
  std::shared_ptr<MockBackend> mock;
  auto get_mock = [&] {
    if (!mock) mock = std::make_shared<MockBackend>(c.mock);
    return mock;
  };

  for (auto r : kRoles) {
    const auto& p = c.backends.at(r);
    if (r == Role::embedder_e) {
      std::shared_ptr<EmbedBackend> inner;
      if (p.kind == BackendKind::mock) {
        inner = get_mock();
      } else {
        inner = std::make_shared<HttpEmbedBackend>(p);
      }
      if (rt.fixtures) {
        const std::string model = inner->model();
        inner = std::make_shared<FixtureEmbedBackend>(rt.fixtures, model, rt.recording ? inner : nullptr);
      }
      rt.gateway->bind_embed(p, std::move(inner));
    } else {
      std::shared_ptr<ChatBackend> inner;
      if (p.kind == BackendKind::mock) {
        inner = get_mock();
      } else {
        inner = std::make_shared<HttpChatBackend>(p);
      }
      if (rt.fixtures) inner = std::make_shared<FixtureChatBackend>(rt.fixtures, rt.recording ? inner : nullptr);
      rt.gateway->bind_chat(p, std::move(inner));
    }
  }
  return rt;
}

}  // namespace tacitree
