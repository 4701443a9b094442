#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tacitree/corpus.hpp"
#include "tacitree/gateway/gateway.hpp"
#include "tacitree/retriever.hpp"
#include "tacitree/tree.hpp"

namespace tacitree {

enum class Strategy { tacitree_summary, tacitree_facts, flat_topk, brute_force, full_context };
enum class F1Unit { session, fact };

const char* strategy_name(Strategy s);
Strategy parse_strategy(std::string_view s);
std::vector<Strategy> parse_strategy_list(std::string_view comma_list);
const char* f1_unit_name(F1Unit u);
F1Unit parse_f1_unit(std::string_view s);

// 2|A∩B| / (|A|+|B|); both empty -> 1, one empty -> 0.
double retrieval_f1(const std::set<std::string>& retrieved, const std::set<std::string>& gold);

// 1 - cosine(E(question), E(answer)), clamped to [0, 2].
double implicitness_score(Gateway& gw, std::string_view question, std::string_view answer);

// The text a task's question is scored against: its evidence scenarios, or
// the gold answer when there are none.
std::string implicitness_target(const QaTask& t);

struct JudgeOutcome {
  bool correct = false;
  std::size_t calls = 0;
  bool defaulted = false;  // unparseable twice, scored false
};
JudgeOutcome judge_answer(Gateway& gw, std::string_view question, std::string_view predicted, std::string_view gold);

// Top `k_top` facts by cosine to the query (ties by fact id), most similar first.
std::vector<Fact> flat_topk_baseline(Gateway& gw, std::span<const Fact> facts, std::string_view query,
                                     std::size_t k_top = 10);

struct EvalRecord {
  std::string task_id;
  std::string strategy;
  std::vector<std::string> retrieved_session_ids;  // sorted
  std::vector<std::string> gold_session_ids;       // sorted
  double retrieval_f1 = 0.0;
  std::string predicted_answer;
  bool correct = false;
  std::size_t retrieved_tokens = 0;
  std::size_t judge_calls = 0;    // relevance calls spent on retrieval
  std::size_t grading_calls = 0;  // answer-judge calls
  double implicitness = 0.0;
  bool judge_defaulted = false;
  std::string error;
  bool retrieval_failed = false;

  bool operator==(const EvalRecord&) const = default;
};

struct ImplicitnessStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;

  bool operator==(const ImplicitnessStats&) const = default;
};

struct Aggregates {
  std::size_t tasks = 0;
  std::size_t scored = 0;  // accuracy denominator
  std::size_t errors = 0;
  double mean_f1 = 0.0;
  double accuracy = 0.0;
  double mean_tokens = 0.0;
  std::optional<double> token_to_accuracy;
  ImplicitnessStats implicitness;

  bool operator==(const Aggregates&) const = default;
};

struct Report {
  std::string run_id;
  std::string strategy;
  std::string f1_unit = "session";
  json config = json::object();
  std::vector<EvalRecord> records;
  Aggregates aggregates;
};

Aggregates compute_aggregates(const std::vector<EvalRecord>& records);

struct EvalConfig {
  RetrievalConfig retrieval;
  std::size_t k_top = 10;
  F1Unit unit = F1Unit::session;
  std::string run_id = "run";
  json config_snapshot = json::object();
};

struct EvalInputs {
  const ConversationHistory* history = nullptr;
  std::vector<QaTask> tasks;
  const MemoryTree* tree = nullptr;  // required for the tacitree strategies
  std::vector<Fact> facts;           // defaults to the tree's facts
};

Report run_eval(Gateway& gw, const EvalInputs& in, Strategy strategy, const EvalConfig& cfg);

json to_json(const EvalRecord& r);
EvalRecord eval_record_from_json(const json& j);
json to_json(const Aggregates& a);
json to_json(const Report& r);
// Throws corrupt_report when the stored aggregates differ from the ones
// recomputed from the records.
Report report_from_json(const json& j);
std::string report_csv(const std::vector<Report>& reports);

// Several strategies over the same inputs, one comparison document.
json comparison_json(const std::vector<Report>& reports);
std::vector<Report> reports_from_comparison(const json& j);

}  // namespace tacitree
