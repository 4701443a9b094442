#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "tacitree/gateway/gateway.hpp"
#include "tacitree/memory_model.hpp"

namespace tacitree {

enum class TraitCategory { demographics, career, everyday };
enum class ScenarioKind { opposed, supportive, distractor };
enum class ScenarioStatus { raw, filtered, selected, verified, rejected };
enum class TaskKind { opposed, supportive };
enum class KindSelection { opposed, supportive, both };

const char* category_name(TraitCategory c);
const char* scenario_kind_name(ScenarioKind k);
const char* status_name(ScenarioStatus s);
const char* task_kind_name(TaskKind k);
TaskKind parse_task_kind(std::string_view s);
KindSelection parse_kind_selection(std::string_view s);

struct PersonaTrait {
  std::string trait_id;
  std::string text;  // "This person ..."
  TraitCategory category = TraitCategory::everyday;
};

struct ReasoningScenario {
  std::string scenario_id;
  std::string trait_id;
  ScenarioKind kind = ScenarioKind::opposed;
  std::string text;
  double similarity_to_trait = 0.0;
  std::optional<double> similarity_to_question;
  ScenarioStatus status = ScenarioStatus::raw;
};

struct QaTask {
  std::string task_id;
  std::string trait_id;
  TaskKind kind = TaskKind::opposed;
  std::string question;
  std::string gold_answer;
  std::vector<std::string> evidence_session_ids;
  bool yes_no = false;

  // Provenance kept alongside the task so downstream checks can recompute
  // similarities without re-running generation.
  std::string trait_text;
  std::vector<std::string> evidence_texts;
  std::vector<std::string> distractor_texts;
  double evidence_similarity = 0.0;  // sim(strongest evidence scenario, question)
};

// Items an offline reviewer may want to look at; automated mode only records
// them.
struct AuditFlag {
  std::string kind;  // near_threshold, banned_word, selection_fallback, rejected_verification, ...
  std::string subject;
  std::string detail;
  std::optional<double> value;
};

class AuditLog {
 public:
  void add(AuditFlag f);
  std::vector<AuditFlag> flags() const;
  std::vector<AuditFlag> flags(std::string_view kind) const;

 private:
  mutable std::mutex mu_;
  std::vector<AuditFlag> flags_;
};

struct CorpusConfig {
  double beta = 0.4;
  double near_threshold_band = 0.02;
  int n_scenarios = 20;
  int min_usable_scenarios = 5;
  int n_distractors = 5;
  int distractor_rounds = 3;
  int pool_per_source = 5;
  std::size_t min_sessions = 80;
  std::size_t target_sessions = 100;
  std::size_t max_sessions = 120;
  int min_turns = 10;
  int late_mention_turn = 4;  // key words may first appear at 0-based turn >= this
  int order_attempts = 10;
  int window_days = 365;
  Timestamp window_start = std::chrono::sys_days{std::chrono::year{2024} / 1 / 1};
  KindSelection kinds = KindSelection::both;
  std::size_t traits_per_persona = 1;
  std::uint64_t seed = 0;
  std::string history_id = "example";

  void validate() const;
};

json to_json(const CorpusConfig& c);

// ---- persona ----
// Prefixes "This person" when missing and keeps the first sentence.
std::string normalize_trait_text(std::string_view s);
std::vector<PersonaTrait> parse_persona_response(std::string_view response, std::string_view id_prefix);
std::vector<PersonaTrait> standardize_persona(Gateway& gw, std::string_view raw, std::string_view id_prefix);

// ---- scenarios ----
// The trait without its "This person" prefix or final period.
std::string trait_predicate(std::string_view trait_text);
// "Does this person share ...?" / "Is this person ...?"
std::string supportive_question(std::string_view trait_text);
std::vector<std::string> parse_numbered_list(std::string_view response);
// True if `scenario` uses a content word (stem-compared) of the trait predicate.
bool violates_banned_words(std::string_view scenario, std::string_view trait_text);

std::vector<ReasoningScenario> generate_scenarios(Gateway& gw, const PersonaTrait& trait, ScenarioKind kind,
                                                  const CorpusConfig& cfg, AuditLog* audit = nullptr);
// Marks each scenario filtered (sim < beta) or rejected; records similarity.
void filter_by_similarity(Gateway& gw, std::vector<ReasoningScenario>& scenarios, const PersonaTrait& trait,
                          const CorpusConfig& cfg, AuditLog* audit = nullptr);

struct Selection {
  ReasoningScenario scenario;
  bool used_fallback = false;
};
Selection select_opposed_best(Gateway& gw, const PersonaTrait& trait, const std::vector<ReasoningScenario>& filtered,
                              AuditLog* audit = nullptr);
// "yes" -> verified, otherwise rejected.
void verify_supportive(Gateway& gw, const PersonaTrait& trait, std::vector<ReasoningScenario>& filtered,
                       AuditLog* audit = nullptr);

// Accepts a first-person, non-yes/no-looking question under 20 words.
bool valid_opposed_question(std::string_view q);
QaTask make_opposed_qa(Gateway& gw, const PersonaTrait& trait, const ReasoningScenario& selected);
QaTask make_supportive_qa(const PersonaTrait& trait, const std::vector<ReasoningScenario>& verified);

struct DistractorResult {
  std::vector<ReasoningScenario> scenarios;
  bool shortfall = false;
};
DistractorResult generate_distractors(Gateway& gw, const PersonaTrait& trait, const QaTask& task,
                                      const ReasoningScenario& r_star, const CorpusConfig& cfg,
                                      AuditLog* audit = nullptr);

// ---- sessions ----
std::vector<Utterance> parse_transcript(std::string_view text);
// 0-based index of the first turn mentioning a content word of `key`, or -1.
int first_mention(const std::vector<Utterance>& turns, std::string_view key);
Session expand_to_session(Gateway& gw, std::string_view scenario, std::string session_id, Timestamp ts,
                          const CorpusConfig& cfg, AuditLog* audit = nullptr);

// Text used when comparing a whole session to a question (turn texts only).
std::string session_embedding_text(const Session& s);

// Relabels turns user/assistant alternately starting with the user, for
// pools converted from human-human chats.
Session relabel_alternating(Session s);

struct PoolSource {
  std::string name;
  std::vector<Session> sessions;
};
// Every *.jsonl file in the directory (name order) is one source.
std::vector<PoolSource> load_pool(const std::filesystem::path& dir);

// ---- assembly ----
struct TraitPipeline {
  PersonaTrait trait;
  TaskKind kind = TaskKind::opposed;
  std::vector<ReasoningScenario> scenarios;  // every scenario with its final status
  QaTask task;
  std::vector<ReasoningScenario> distractors;
};

TraitPipeline run_trait_pipeline(Gateway& gw, const PersonaTrait& trait, TaskKind kind, const std::string& task_id,
                                 const CorpusConfig& cfg, AuditLog* audit = nullptr);

struct Example {
  ConversationHistory history;
  std::vector<QaTask> tasks;
  std::vector<TraitPipeline> pipelines;
  std::vector<AuditFlag> review_queue;  // near-threshold scenarios
  std::vector<AuditFlag> audit;          // every flag raised during the run
};

Example assemble_example(Gateway& gw, const std::vector<PersonaTrait>& traits, const std::vector<PoolSource>& pool,
                         const CorpusConfig& cfg, AuditLog* audit = nullptr);

// Personas -> traits -> example, the whole generation run.
Example generate_example(Gateway& gw, const std::vector<std::string>& personas, const std::vector<PoolSource>& pool,
                         const CorpusConfig& cfg);

// True if every R* session comes after its p session with at least one
// session in between.
bool ordering_ok(const std::vector<std::string>& order,
                 const std::vector<std::pair<std::string, std::string>>& p_then_r);

json to_json(const QaTask& t);
QaTask qa_task_from_json(const json& j);
std::string serialize_tasks(const std::vector<QaTask>& tasks);
std::vector<QaTask> parse_tasks(std::string_view text);
std::vector<QaTask> load_tasks(const std::filesystem::path& path);
json review_queue_json(const std::vector<AuditFlag>& flags);

}  // namespace tacitree
