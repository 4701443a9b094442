#include "tacitree/eval.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>

#include "tacitree/error.hpp"
#include "tacitree/gateway/prompts.hpp"
#include "tacitree/parallel.hpp"
#include "tacitree/text.hpp"

namespace tacitree {

namespace {

std::optional<bool> parse_yes_no(std::string_view reply) {
  auto w = text::words(reply);
  if (w.empty()) return std::nullopt;
  if (w.front() == "yes") return true;
  if (w.front() == "no") return false;
  return std::nullopt;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string one_line(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return out;
}

std::vector<std::string> sorted(std::set<std::string> s) { return {s.begin(), s.end()}; }

}  // namespace

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::tacitree_summary: return "tacitree_summary";
    case Strategy::tacitree_facts: return "tacitree_facts";
    case Strategy::flat_topk: return "flat_topk";
    case Strategy::brute_force: return "brute_force";
    case Strategy::full_context: return "full_context";
  }
  return "?";
}

Strategy parse_strategy(std::string_view s) {
  for (auto st : {Strategy::tacitree_summary, Strategy::tacitree_facts, Strategy::flat_topk, Strategy::brute_force,
                  Strategy::full_context}) {
    if (s == strategy_name(st)) return st;
  }
  throw Error(Errc::invalid_config, "strategy", std::string(s));
}

std::vector<Strategy> parse_strategy_list(std::string_view comma_list) {
  std::vector<Strategy> out;
  std::size_t start = 0;
  while (start <= comma_list.size()) {
    auto end = comma_list.find(',', start);
    if (end == std::string_view::npos) end = comma_list.size();
    auto item = text::trim(comma_list.substr(start, end - start));
    if (!item.empty()) {
      auto st = parse_strategy(item);
      if (std::find(out.begin(), out.end(), st) == out.end()) out.push_back(st);
    }
    start = end + 1;
  }
  if (out.empty()) throw Error(Errc::invalid_config, "strategies", "empty list");
  return out;
}

const char* f1_unit_name(F1Unit u) { return u == F1Unit::session ? "session" : "fact"; }

F1Unit parse_f1_unit(std::string_view s) {
  if (s == "session") return F1Unit::session;
  if (s == "fact") return F1Unit::fact;
  throw Error(Errc::invalid_config, "f1_unit", std::string(s));
}

double retrieval_f1(const std::set<std::string>& retrieved, const std::set<std::string>& gold) {
  if (retrieved.empty() && gold.empty()) return 1.0;
  if (retrieved.empty() || gold.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& r : retrieved) common += gold.count(r);
  return 2.0 * static_cast<double>(common) / static_cast<double>(retrieved.size() + gold.size());
}

double implicitness_score(Gateway& gw, std::string_view question, std::string_view answer) {
  if (text::trim(question).empty() || text::trim(answer).empty())
    throw Error(Errc::empty_input, "implicitness", "question and answer must be non-empty");
  std::vector<std::string> texts{std::string(question), std::string(answer)};
  auto v = gw.embed(texts);
  return std::clamp(1.0 - cosine(v[0], v[1]), 0.0, 2.0);
}

std::string implicitness_target(const QaTask& t) {
  if (!t.evidence_texts.empty()) return text::join(t.evidence_texts, " ");
  return t.gold_answer;
}

JudgeOutcome judge_answer(Gateway& gw, std::string_view question, std::string_view predicted, std::string_view gold) {
  JudgeOutcome out;
  if (predicted == gold) {
    out.correct = true;
    return out;
  }
  TemplateVars vars{{"question", std::string(question)}, {"gold", std::string(gold)}, {"predicted", std::string(predicted)}};
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto reply = gw.chat(Role::judge, prompts::judge_answer(), vars,
                         attempt == 0 ? std::string_view() : prompts::kReaskSuffix);
    ++out.calls;
    if (auto v = parse_yes_no(reply.text)) {
      out.correct = *v;
      return out;
    }
  }
  out.defaulted = true;
  return out;
}

std::vector<Fact> flat_topk_baseline(Gateway& gw, std::span<const Fact> facts, std::string_view query,
                                     std::size_t k_top) {
  if (facts.empty() || k_top == 0) return {};
  std::vector<std::string> missing;
  for (const auto& f : facts) {
    if (!f.embedding) missing.push_back(f.text);
  }
  auto vecs = missing.empty() ? std::vector<Embedding>{} : gw.embed(missing);
  const Embedding q = gw.embed_one(query);
  std::vector<std::pair<double, std::size_t>> scored;
  std::size_t m = 0;
  for (std::size_t i = 0; i < facts.size(); ++i) {
    const Embedding& e = facts[i].embedding ? *facts[i].embedding : vecs[m++];
    scored.emplace_back(cosine(q, e), i);
  }
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return facts[a.second].fact_id < facts[b.second].fact_id;
  });
  std::vector<Fact> out;
  for (std::size_t i = 0; i < std::min(k_top, scored.size()); ++i) out.push_back(facts[scored[i].second]);
  return out;
}

Aggregates compute_aggregates(const std::vector<EvalRecord>& records) {
  Aggregates a;
  a.tasks = records.size();
  double f1 = 0.0, tokens = 0.0, is_sum = 0.0;
  std::size_t correct = 0;
  for (const auto& r : records) {
    if (!r.error.empty()) ++a.errors;
    if (r.retrieval_failed) continue;
    ++a.scored;
    f1 += r.retrieval_f1;
    tokens += static_cast<double>(r.retrieved_tokens);
    if (r.correct) ++correct;
    is_sum += r.implicitness;
    if (a.implicitness.count == 0) {
      a.implicitness.min = a.implicitness.max = r.implicitness;
    } else {
      a.implicitness.min = std::min(a.implicitness.min, r.implicitness);
      a.implicitness.max = std::max(a.implicitness.max, r.implicitness);
    }
    ++a.implicitness.count;
  }
  if (a.scored > 0) {
    const auto n = static_cast<double>(a.scored);
    a.mean_f1 = f1 / n;
    a.accuracy = static_cast<double>(correct) / n;
    a.mean_tokens = tokens / n;
    a.implicitness.mean = is_sum / n;
  }
  if (a.accuracy > 0.0) a.token_to_accuracy = a.mean_tokens / a.accuracy;
  return a;
}

Report run_eval(Gateway& gw, const EvalInputs& in, Strategy strategy, const EvalConfig& cfg) {
  if (!in.history) throw Error(Errc::invalid_config, "history", "run_eval needs a history");
  const bool needs_tree = strategy == Strategy::tacitree_summary || strategy == Strategy::tacitree_facts;
  if (needs_tree && !in.tree) throw Error(Errc::invalid_config, strategy_name(strategy), "needs a tree");
  cfg.retrieval.validate();

  std::vector<Fact> facts = in.facts;
  if (facts.empty() && in.tree) {
    for (const auto& [id, f] : in.tree->facts) facts.push_back(f);
  }
  std::sort(facts.begin(), facts.end(), [](const Fact& a, const Fact& b) { return a.fact_id < b.fact_id; });
  std::map<std::string, std::vector<std::string>> facts_of_session;
  for (const auto& f : facts) facts_of_session[f.source_session_id].push_back(f.fact_id);

  std::size_t full_tokens = 0;
  std::string full_text;
  std::set<std::string> all_sessions, all_facts;
  if (strategy == Strategy::full_context) {
    full_tokens = history_stats(*in.history, gw.tokenizer()).total_tokens;
    std::vector<std::string> lines;
    for (const auto& s : in.history->sessions) {
      all_sessions.insert(s.session_id);
      for (const auto& u : s.turns) lines.push_back(one_line(u.text));
    }
    full_text = text::join(lines, "\n");
    for (const auto& f : facts) all_facts.insert(f.fact_id);
  }

  RetrievalConfig rcfg = cfg.retrieval;
  rcfg.answer_granularity = strategy == Strategy::tacitree_summary ? Granularity::summaries : Granularity::facts;

  std::vector<QaTask> tasks = in.tasks;
  std::sort(tasks.begin(), tasks.end(), [](const QaTask& a, const QaTask& b) { return a.task_id < b.task_id; });

  std::vector<EvalRecord> records(tasks.size());
  parallel_for(tasks.size(), gw.max_inflight(), [&](std::size_t i) {
    const auto& task = tasks[i];
    auto& rec = records[i];
    rec.task_id = task.task_id;
    rec.strategy = strategy_name(strategy);
    std::set<std::string> gold_sessions(task.evidence_session_ids.begin(), task.evidence_session_ids.end());
    std::set<std::string> gold_facts;
    for (const auto& s : gold_sessions) {
      auto it = facts_of_session.find(s);
      if (it != facts_of_session.end()) gold_facts.insert(it->second.begin(), it->second.end());
    }
    rec.gold_session_ids = sorted(gold_sessions);

    std::string context;
    std::set<std::string> got_sessions, got_facts;
    try {
      rec.implicitness = implicitness_score(gw, task.question, implicitness_target(task));
      if (strategy == Strategy::full_context) {
        got_sessions = all_sessions;
        got_facts = all_facts;
        rec.retrieved_tokens = full_tokens;
        context = full_text;
      } else {
        RetrievalResult r;
        if (needs_tree) {
          r = retrieve(gw, *in.tree, task.question, rcfg);
        } else if (strategy == Strategy::brute_force) {
          r = brute_force_retrieve(gw, facts, task.question, rcfg);
        } else {
          r.query = task.question;
          r.granularity = Granularity::facts;
          r.facts = flat_topk_baseline(gw, facts, task.question, cfg.k_top);
          for (const auto& f : r.facts) r.retrieved_tokens += f.token_count;
        }
        for (const auto& f : r.facts) {
          got_sessions.insert(f.source_session_id);
          got_facts.insert(f.fact_id);
        }
        rec.retrieved_tokens = r.retrieved_tokens;
        rec.judge_calls = r.judge_calls;
        context = retrieval_context(r);
      }
    } catch (const Error& e) {
      rec.error = e.what();
      rec.retrieval_failed = true;
      return;
    }
    rec.retrieved_session_ids = sorted(got_sessions);
    rec.retrieval_f1 = cfg.unit == F1Unit::session ? retrieval_f1(got_sessions, gold_sessions)
                                                   : retrieval_f1(got_facts, gold_facts);
    try {
      TemplateVars vars{{"context", context}, {"question", task.question}};
      rec.predicted_answer = gw.chat(Role::framework_m2, prompts::answer(), vars).text;
      auto j = judge_answer(gw, task.question, rec.predicted_answer, task.gold_answer);
      rec.correct = j.correct;
      rec.grading_calls = j.calls;
      rec.judge_defaulted = j.defaulted;
    } catch (const Error& e) {
      rec.error = e.what();
      rec.correct = false;
    }
  });

  Report rep;
  rep.run_id = cfg.run_id;
  rep.strategy = strategy_name(strategy);
  rep.f1_unit = f1_unit_name(cfg.unit);
  rep.config = cfg.config_snapshot;
  rep.records = std::move(records);
  rep.aggregates = compute_aggregates(rep.records);
  return rep;
}

json to_json(const EvalRecord& r) {
  return {{"task_id", r.task_id},
          {"strategy", r.strategy},
          {"retrieved_session_ids", r.retrieved_session_ids},
          {"gold_session_ids", r.gold_session_ids},
          {"retrieval_f1", r.retrieval_f1},
          {"predicted_answer", r.predicted_answer},
          {"correct", r.correct},
          {"retrieved_tokens", r.retrieved_tokens},
          {"judge_calls", r.judge_calls},
          {"grading_calls", r.grading_calls},
          {"implicitness", r.implicitness},
          {"judge_defaulted", r.judge_defaulted},
          {"error", r.error},
          {"retrieval_failed", r.retrieval_failed}};
}

EvalRecord eval_record_from_json(const json& j) {
  try {
    EvalRecord r;
    r.task_id = j.at("task_id").get<std::string>();
    r.strategy = j.at("strategy").get<std::string>();
    r.retrieved_session_ids = j.at("retrieved_session_ids").get<std::vector<std::string>>();
    r.gold_session_ids = j.at("gold_session_ids").get<std::vector<std::string>>();
    r.retrieval_f1 = j.at("retrieval_f1").get<double>();
    r.predicted_answer = j.at("predicted_answer").get<std::string>();
    r.correct = j.at("correct").get<bool>();
    r.retrieved_tokens = j.at("retrieved_tokens").get<std::size_t>();
    r.judge_calls = j.at("judge_calls").get<std::size_t>();
    r.grading_calls = j.value("grading_calls", std::size_t{0});
    r.implicitness = j.at("implicitness").get<double>();
    r.judge_defaulted = j.value("judge_defaulted", false);
    r.error = j.value("error", std::string());
    r.retrieval_failed = j.value("retrieval_failed", false);
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::corrupt_report, "record", e.what());
  }
}

json to_json(const Aggregates& a) {
  return {{"tasks", a.tasks},
          {"scored", a.scored},
          {"errors", a.errors},
          {"mean_f1", a.mean_f1},
          {"accuracy", a.accuracy},
          {"mean_tokens", a.mean_tokens},
          {"token_to_accuracy", a.token_to_accuracy ? json(*a.token_to_accuracy) : json(nullptr)},
          {"implicitness",
           {{"mean", a.implicitness.mean},
            {"min", a.implicitness.min},
            {"max", a.implicitness.max},
            {"count", a.implicitness.count}}}};
}

namespace {

Aggregates aggregates_from_json(const json& j) {
  Aggregates a;
  a.tasks = j.at("tasks").get<std::size_t>();
  a.scored = j.at("scored").get<std::size_t>();
  a.errors = j.at("errors").get<std::size_t>();
  a.mean_f1 = j.at("mean_f1").get<double>();
  a.accuracy = j.at("accuracy").get<double>();
  a.mean_tokens = j.at("mean_tokens").get<double>();
  if (!j.at("token_to_accuracy").is_null()) a.token_to_accuracy = j.at("token_to_accuracy").get<double>();
  const auto& is = j.at("implicitness");
  a.implicitness = {is.at("mean").get<double>(), is.at("min").get<double>(), is.at("max").get<double>(),
                    is.at("count").get<std::size_t>()};
  return a;
}

}  // namespace

json to_json(const Report& r) {
  json records = json::array();
  for (const auto& rec : r.records) records.push_back(to_json(rec));
  return {{"run_id", r.run_id},
          {"strategy", r.strategy},
          {"f1_unit", r.f1_unit},
          {"f1_empty_convention", "both sets empty scores 1.0"},
          {"config", r.config},
          {"records", std::move(records)},
          {"aggregates", to_json(r.aggregates)}};
}

Report report_from_json(const json& j) {
  Report r;
  Aggregates stored;
  try {
    r.run_id = j.at("run_id").get<std::string>();
    r.strategy = j.at("strategy").get<std::string>();
    r.f1_unit = j.value("f1_unit", std::string("session"));
    r.config = j.value("config", json::object());
    for (const auto& rec : j.at("records")) r.records.push_back(eval_record_from_json(rec));
    stored = aggregates_from_json(j.at("aggregates"));
  } catch (const json::exception& e) {
    throw Error(Errc::corrupt_report, "report", e.what());
  }
  r.aggregates = compute_aggregates(r.records);
  if (!(r.aggregates == stored))
    throw Error(Errc::corrupt_report, r.run_id, "stored aggregates do not match the records");
  return r;
}

std::string report_csv(const std::vector<Report>& reports) {
  std::string out =
      "run_id,strategy,task_id,retrieval_f1,correct,retrieved_tokens,judge_calls,grading_calls,implicitness,"
      "retrieved_session_ids,gold_session_ids,error\n";
  for (const auto& rep : reports) {
    for (const auto& r : rep.records) {
      out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", csv_field(rep.run_id), csv_field(rep.strategy),
                         csv_field(r.task_id), r.retrieval_f1, r.correct ? 1 : 0, r.retrieved_tokens, r.judge_calls,
                         r.grading_calls, r.implicitness, csv_field(text::join(r.retrieved_session_ids, ";")),
                         csv_field(text::join(r.gold_session_ids, ";")), csv_field(r.error));
    }
  }
  out += "run_id,strategy,aggregate,mean_f1,accuracy,mean_tokens,token_to_accuracy,implicitness_mean,tasks,scored,errors\n";
  for (const auto& rep : reports) {
    const auto& a = rep.aggregates;
    out += fmt::format("{},{},aggregate,{},{},{},{},{},{},{},{}\n", csv_field(rep.run_id), csv_field(rep.strategy),
                       a.mean_f1, a.accuracy, a.mean_tokens,
                       a.token_to_accuracy ? fmt::format("{}", *a.token_to_accuracy) : std::string("null"),
                       a.implicitness.mean, a.tasks, a.scored, a.errors);
  }
  return out;
}

json comparison_json(const std::vector<Report>& reports) {
  json rows = json::array();
  json full = json::array();
  for (const auto& r : reports) {
    rows.push_back({{"strategy", r.strategy}, {"aggregates", to_json(r.aggregates)}});
    full.push_back(to_json(r));
  }
  return {{"run_id", reports.empty() ? std::string() : reports.front().run_id},
          {"config", reports.empty() ? json::object() : reports.front().config},
          {"comparison", std::move(rows)},
          {"reports", std::move(full)}};
}

std::vector<Report> reports_from_comparison(const json& j) {
  if (!j.is_object() || !j.contains("reports") || !j["reports"].is_array())
    throw Error(Errc::corrupt_report, "comparison", "missing reports");
  std::vector<Report> out;
  for (const auto& r : j["reports"]) out.push_back(report_from_json(r));
  return out;
}

}  // namespace tacitree
