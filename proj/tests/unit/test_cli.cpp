#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "synthetic.hpp"
#include "tacitree/cli.hpp"
#include "tacitree/config.hpp"
#include "tacitree/error.hpp"

using namespace tacitree;
using namespace tacitree::testing;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "tacitree");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Workspace {
  fs::path dir;
  explicit Workspace(const std::string& name) : dir(fs::temp_directory_path() / name) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto ps = personas(7, 3);
    std::ofstream(dir / "personas.txt") << [&] {
      std::string s;
      for (const auto& p : ps) s += p + "\n";
      return s;
    }();
    write_pool(make_pool(ps, 1, 150, 3), (dir / "pool").string());
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string at(const std::string& rel) const { return (dir / rel).string(); }
};

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::io_error;
}

}  // namespace

TEST_CASE("ini configuration parses every section") {
  auto c = parse_run_config(R"(
[run]
seed = 42
max_inflight = 2

[build]
k = 5
root_size = 10
reducer = pca
level_sizing = hard_cap

[retrieval]
leaf_fact_filter = true
answer_granularity = facts

[corpus]
kinds = opposed
history_id = demo

[eval]
f1_unit = fact
run_id = nightly

[backend.judge]
kind = http_chat
endpoint = http://localhost:9/v1/chat
model = judge-model
max_retries = 1
)");
  CHECK(c.seed == 42);
  CHECK(c.build.seed == 42);
  CHECK(c.corpus.seed == 42);
  CHECK(c.build.k == 5);
  CHECK(c.build.reducer == ReducerKind::pca);
  CHECK(c.build.level_sizing == LevelSizing::hard_cap);
  CHECK(c.retrieval.leaf_fact_filter);
  CHECK(c.retrieval.answer_granularity == Granularity::facts);
  CHECK(c.corpus.kinds == KindSelection::opposed);
  CHECK(c.eval.unit == F1Unit::fact);
  CHECK(c.backends.at(Role::judge).kind == BackendKind::http_chat);
  CHECK(c.backends.at(Role::judge).max_retries == 1);
  CHECK(c.backends.at(Role::framework_m2).kind == BackendKind::mock);
  c.force_backend("mock");
  CHECK(c.backends.at(Role::judge).kind == BackendKind::mock);
  CHECK(to_json(c)["seed"] == 42);
}

TEST_CASE("unknown keys, sections and bad values are configuration errors") {
  CHECK(code_of([] { parse_run_config("[build]\nkk = 3\n"); }) == Errc::invalid_config);
  CHECK(code_of([] { parse_run_config("[nonsense]\na = 1\n"); }) == Errc::invalid_config);
  CHECK(code_of([] { parse_run_config("[build]\nk = three\n"); }) == Errc::invalid_config);
  CHECK(code_of([] { parse_run_config("[build]\nk = 1\n"); }) == Errc::invalid_config);
  CHECK(code_of([] { parse_run_config("[backend.judge]\nkind = http_chat\n"); }) == Errc::invalid_config);
  CHECK(code_of([] { parse_run_config("[run]\nrecord_fixtures = true\n"); }) == Errc::invalid_config);
}

TEST_CASE("cli reports usage errors and missing inputs with distinct exit codes") {
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({}).code == 1);
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({"build", "--history", "/nonexistent/h.jsonl", "--out", "/tmp/x.json"}).code == 2);
  CHECK(cli({"--config", "/nonexistent/run.ini", "build"}).code == 1);
}

TEST_CASE("gen, build, retrieve, answer, eval and score run end to end") {
  Workspace ws("tacitree_cli_e2e");
  auto g = cli({"--seed", "3", "gen", "--personas", ws.at("personas.txt"), "--pool", ws.at("pool"), "--out",
                ws.at("gen"), "--kind", "opposed"});
  REQUIRE_MESSAGE(g.code == 0, g.err);
  CHECK(fs::exists(ws.at("gen/history.jsonl")));
  CHECK(fs::exists(ws.at("gen/tasks.jsonl")));
  CHECK(fs::exists(ws.at("gen/review_queue.json")));
  CHECK(fs::exists(ws.at("gen/audit.json")));

  auto b = cli({"--seed", "3", "build", "--history", ws.at("gen/history.jsonl"), "--out", ws.at("tree.json")});
  REQUIRE_MESSAGE(b.code == 0, b.err);
  auto stats = json::parse(b.out);
  CHECK(stats.contains("root_level"));

  auto r = cli({"retrieve", "--tree", ws.at("tree.json"), "--granularity", "facts", "What hobby can I try?"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(json::parse(r.out).contains("facts"));
  auto a = cli({"answer", "--tree", ws.at("tree.json"), "What hobby can I try?"});
  CHECK(a.code == 0);

  auto e = cli({"eval", "--history", ws.at("gen/history.jsonl"), "--tasks", ws.at("gen/tasks.jsonl"), "--tree",
                ws.at("tree.json"), "--strategies", "tacitree_summary,flat_topk,full_context", "--out",
                ws.at("report")});
  REQUIRE_MESSAGE(e.code == 0, e.err);
  auto cmp = json::parse(slurp(ws.at("report.json")));
  CHECK(cmp["reports"].size() == 3);
  CHECK(fs::exists(ws.at("report.csv")));

  auto single = cli({"eval", "--history", ws.at("gen/history.jsonl"), "--tasks", ws.at("gen/tasks.jsonl"), "--tree",
                     ws.at("tree.json"), "--strategy", "brute_force", "--out", ws.at("single")});
  REQUIRE(single.code == 0);
  CHECK(json::parse(slurp(ws.at("single.json")))["strategy"] == "brute_force");

  auto s = cli({"score-implicitness", "--tasks", ws.at("gen/tasks.jsonl")});
  REQUIRE(s.code == 0);
  auto scores = json::parse(s.out);
  CHECK(scores["mean"].get<double>() > 0.0);

  auto bad = cli({"eval", "--tasks", ws.at("gen/tasks.jsonl"), "--tree", ws.at("tree.json"), "--strategy", "nope"});
  CHECK(bad.code == 1);
}

TEST_CASE("same seed and fixtures give byte-identical outputs") {
  Workspace ws("tacitree_cli_determinism");
  for (const char* run : {"a", "b"}) {
    auto g = cli({"--seed", "9", "--fixtures", ws.at(std::string("fx_") + run + ".json"), "--record-fixtures", "gen",
                  "--personas", ws.at("personas.txt"), "--pool", ws.at("pool"), "--out", ws.at(run)});
    REQUIRE_MESSAGE(g.code == 0, g.err);
    auto b = cli({"--seed", "9", "build", "--history", ws.at(std::string(run) + "/history.jsonl"), "--out",
                  ws.at(std::string(run) + "/tree.json")});
    REQUIRE(b.code == 0);
  }
  CHECK(slurp(ws.at("a/history.jsonl")) == slurp(ws.at("b/history.jsonl")));
  CHECK(slurp(ws.at("a/tasks.jsonl")) == slurp(ws.at("b/tasks.jsonl")));
  CHECK(slurp(ws.at("a/tree.json")) == slurp(ws.at("b/tree.json")));
  CHECK(slurp(ws.at("fx_a.json")) == slurp(ws.at("fx_b.json")));

  auto replay = cli({"--seed", "9", "--fixtures", ws.at("fx_a.json"), "gen", "--personas", ws.at("personas.txt"),
                     "--pool", ws.at("pool"), "--out", ws.at("c")});
  REQUIRE_MESSAGE(replay.code == 0, replay.err);
  CHECK(slurp(ws.at("c/history.jsonl")) == slurp(ws.at("a/history.jsonl")));
}
