#include "tacitree/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>
#include <sstream>

#include "tacitree/config.hpp"
#include "tacitree/corpus.hpp"
#include "tacitree/error.hpp"
#include "tacitree/eval.hpp"
#include "tacitree/fact_extractor.hpp"
#include "tacitree/gateway/prompts.hpp"
#include "tacitree/retriever.hpp"
#include "tacitree/text.hpp"
#include "tacitree/tree.hpp"

namespace tacitree {

namespace {

namespace fs = std::filesystem;

struct GlobalOptions {
  std::string config;
  std::string backend;
  std::optional<std::uint64_t> seed;
  std::string fixtures;
  bool record_fixtures = false;
};

void write_file(const fs::path& p, std::string_view body) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, p.string(), "cannot write");
  out << body;
  if (!out) throw Error(Errc::io_error, p.string(), "write failed");
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::io_error, p.string(), "cannot read");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_file(const fs::path& p, std::string_view what) {
  if (p.empty()) throw Error(Errc::invalid_config, std::string(what), "path not set");
  if (!fs::exists(p)) throw Error(Errc::io_error, p.string(), fmt::format("{} not found", what));
}

RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig c = g.config.empty() ? parse_run_config("") : load_run_config(g.config);
  if (g.seed) c.apply_seed(*g.seed);
  if (!g.backend.empty()) c.force_backend(g.backend);
  if (!g.fixtures.empty()) c.fixtures_path = fs::path(g.fixtures);
  if (g.record_fixtures) c.record_fixtures = true;
  c.validate();
  return c;
}

json tree_stats(const MemoryTree& t) {
  json per_level = json::array();
  std::size_t tokens = 0;
  for (const auto& level : t.levels) {
    per_level.push_back(level.size());
    for (const auto& n : level) tokens += n.summary_tokens;
  }
  std::size_t fact_tokens = 0;
  for (const auto& [id, f] : t.facts) fact_tokens += f.token_count;
  return {{"tree_id", t.tree_id},
          {"levels", t.levels.size()},
          {"root_level", t.root_level},
          {"nodes_per_level", std::move(per_level)},
          {"facts", t.facts.size()},
          {"summary_tokens", tokens},
          {"fact_tokens", fact_tokens}};
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical long-term memory: build, retrieve, generate and evaluate"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "INI run configuration")->option_text("PATH");
  app.add_option("--backend", g.backend, "Override every role's backend: mock|http")
      ->check(CLI::IsMember({"mock", "http"}));
  app.add_option("--seed", g.seed, "Seed for every seeded component");
  app.add_option("--fixtures", g.fixtures, "Replay (or with --record-fixtures, record) backend responses")
      ->option_text("PATH");
  app.add_flag("--record-fixtures", g.record_fixtures, "Record responses into the --fixtures file");

  std::string history, tree_path, tasks_path, pool, out_path, query, granularity, kind, strategies, review_queue,
      personas, f1_unit;
  bool oracle = false;

  auto* build = app.add_subcommand("build", "Extract facts from a history and build the memory tree");
  build->add_option("--history", history, "History JSONL file or directory");
  build->add_option("--out", out_path, "Tree file to write");

  auto* retrieve_cmd = app.add_subcommand("retrieve", "Retrieve memory for one query (JSON on stdout)");
  auto* answer_cmd = app.add_subcommand("answer", "Retrieve memory and answer one query");
  for (auto* sc : {retrieve_cmd, answer_cmd}) {
    sc->add_option("--tree", tree_path, "Tree file");
    sc->add_option("query", query, "Query text")->required();
    sc->add_option("--granularity", granularity, "summaries|facts")->check(CLI::IsMember({"summaries", "facts"}));
    sc->add_flag("--oracle", oracle, "Judge every fact instead of descending the tree");
  }

  auto* gen = app.add_subcommand("gen", "Generate a synthetic conversation history with QA tasks");
  gen->add_option("--personas", personas, "One raw persona per line")->required();
  gen->add_option("--pool", pool, "Directory of noise-session JSONL files");
  gen->add_option("--out", out_path, "Output directory")->required();
  gen->add_option("--kind", kind, "opposed|supportive|both")->check(CLI::IsMember({"opposed", "supportive", "both"}));
  gen->add_option("--review-queue", review_queue, "Where to write the review queue (default OUT/review_queue.json)");

  auto* eval = app.add_subcommand("eval", "Evaluate retrieval strategies on a tasks file");
  eval->add_option("--history", history, "History JSONL");
  eval->add_option("--tasks", tasks_path, "Tasks JSONL");
  eval->add_option("--tree", tree_path, "Tree file");
  eval->add_option("--strategies,--strategy", strategies, "Comma list of strategies")
      ->default_val("tacitree_summary");
  eval->add_option("--f1-unit", f1_unit, "session|fact")->check(CLI::IsMember({"session", "fact"}));
  eval->add_option("--out", out_path, "Report path prefix (writes PREFIX.json and PREFIX.csv)");

  auto* score = app.add_subcommand("score-implicitness", "Implicitness score of every task");
  score->add_option("--tasks", tasks_path, "Tasks JSONL");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return 1;
  }

  try {
    RunConfig cfg = resolve_config(g);

    if (build->parsed()) {
      const fs::path hist = history.empty() ? cfg.paths.history : fs::path(history);
      const fs::path dest = out_path.empty() ? cfg.paths.tree : fs::path(out_path);
      if (dest.empty()) throw Error(Errc::invalid_config, "tree", "no output path");
      require_file(hist, "history");
      auto h = load_history(hist);
      auto rt = make_runtime(cfg);
      auto extracted = extract_all(*rt.gateway, h, cfg.build.tau_dup);
      auto t = build_tree(*rt.gateway, std::move(extracted.facts), cfg.build);
      save_tree_file(t, dest);
      rt.flush();
      json stats = tree_stats(t);
      stats["dropped_duplicates"] = extracted.dropped_duplicates;
      stats["empty_sessions"] = extracted.empty_sessions;
      out << stats.dump(1) << "\n";
      return 0;
    }

    if (retrieve_cmd->parsed() || answer_cmd->parsed()) {
      const fs::path tp = tree_path.empty() ? cfg.paths.tree : fs::path(tree_path);
      require_file(tp, "tree");
      auto t = load_tree_file(tp);
      auto rcfg = cfg.retrieval;
      if (!granularity.empty()) rcfg.answer_granularity = parse_granularity(granularity);
      auto rt = make_runtime(cfg);
      RetrievalResult r;
      if (oracle) {
        std::vector<Fact> facts;
        for (const auto& [id, f] : t.facts) facts.push_back(f);
        r = brute_force_retrieve(*rt.gateway, facts, query, rcfg);
        if (rcfg.answer_granularity == Granularity::summaries) r.granularity = Granularity::facts;
      } else {
        r = retrieve(*rt.gateway, t, query, rcfg);
      }
      if (retrieve_cmd->parsed()) {
        rt.flush();
        out << to_json(r).dump(1) << "\n";
        return 0;
      }
      TemplateVars vars{{"context", retrieval_context(r)}, {"question", query}};
      auto reply = rt.gateway->chat(Role::framework_m2, prompts::answer(), vars);
      rt.flush();
      out << json{{"answer", reply.text}, {"retrieval", to_json(r)}}.dump(1) << "\n";
      return 0;
    }

    if (gen->parsed()) {
      auto ccfg = cfg.corpus;
      if (!kind.empty()) ccfg.kinds = parse_kind_selection(kind);
      require_file(personas, "personas");
      std::vector<std::string> raw;
      for (const auto& line : text::split_lines(read_text(personas))) {
        if (!text::trim(line).empty()) raw.push_back(text::trim(line));
      }
      if (raw.empty()) throw Error(Errc::empty_input, personas, "no personas");
      const fs::path pool_dir = pool.empty() ? cfg.paths.pool : fs::path(pool);
      if (pool_dir.empty()) throw Error(Errc::pool_too_small, "pool", "no pool directory given");
      require_file(pool_dir, "pool");
      auto sources = load_pool(pool_dir);
      auto rt = make_runtime(cfg);
      auto ex = generate_example(*rt.gateway, raw, sources, ccfg);
      rt.flush();
      const fs::path dir(out_path);
      write_file(dir / "history.jsonl", serialize_history(ex.history));
      write_file(dir / "tasks.jsonl", serialize_tasks(ex.tasks));
      const fs::path rq = review_queue.empty() ? dir / "review_queue.json" : fs::path(review_queue);
      write_file(rq, review_queue_json(ex.review_queue).dump(1) + "\n");
      write_file(dir / "audit.json", review_queue_json(ex.audit).dump(1) + "\n");
      out << json{{"history_id", ex.history.history_id},
                  {"sessions", ex.history.sessions.size()},
                  {"tasks", ex.tasks.size()},
                  {"review_queue", ex.review_queue.size()},
                  {"audit_flags", ex.audit.size()}}
                 .dump(1)
          << "\n";
      return 0;
    }

    if (eval->parsed()) {
      const fs::path hp = history.empty() ? cfg.paths.history : fs::path(history);
      const fs::path tk = tasks_path.empty() ? cfg.paths.tasks : fs::path(tasks_path);
      const fs::path tp = tree_path.empty() ? cfg.paths.tree : fs::path(tree_path);
      const fs::path prefix = out_path.empty() ? cfg.paths.report : fs::path(out_path);
      if (prefix.empty()) throw Error(Errc::invalid_config, "report", "no output path");
      require_file(hp, "history");
      require_file(tk, "tasks");
      require_file(tp, "tree");
      auto list = parse_strategy_list(strategies);
      auto h = load_history(hp);
      auto t = load_tree_file(tp);
      EvalInputs in;
      in.history = &h;
      in.tasks = load_tasks(tk);
      in.tree = &t;
      auto ecfg = cfg.eval;
      ecfg.retrieval = cfg.retrieval;
      if (!f1_unit.empty()) ecfg.unit = parse_f1_unit(f1_unit);
      ecfg.config_snapshot = to_json(cfg);
      auto rt = make_runtime(cfg);
      std::vector<Report> reports;
      for (auto s : list) reports.push_back(run_eval(*rt.gateway, in, s, ecfg));
      rt.flush();
      const json doc = reports.size() == 1 ? to_json(reports.front()) : comparison_json(reports);
      write_file(fs::path(prefix.string() + ".json"), doc.dump(1) + "\n");
      write_file(fs::path(prefix.string() + ".csv"), report_csv(reports));
      json summary = json::array();
      for (const auto& r : reports) summary.push_back({{"strategy", r.strategy}, {"aggregates", to_json(r.aggregates)}});
      out << summary.dump(1) << "\n";
      return 0;
    }

    if (score->parsed()) {
      const fs::path tk = tasks_path.empty() ? cfg.paths.tasks : fs::path(tasks_path);
      require_file(tk, "tasks");
      auto tasks = load_tasks(tk);
      auto rt = make_runtime(cfg);
      json rows = json::array();
      double sum = 0.0;
      for (const auto& t : tasks) {
        const double is = implicitness_score(*rt.gateway, t.question, implicitness_target(t));
        sum += is;
        rows.push_back({{"task_id", t.task_id}, {"kind", task_kind_name(t.kind)}, {"implicitness", is}});
      }
      rt.flush();
      json mean = tasks.empty() ? json(nullptr) : json(sum / static_cast<double>(tasks.size()));
      out << json{{"tasks", std::move(rows)}, {"mean", mean}}.dump(1) << "\n";
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace tacitree
