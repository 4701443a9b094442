#pragma once

#include <Eigen/Core>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <json.hpp>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tacitree/gateway/tokenizer.hpp"

namespace tacitree {

using Embedding = Eigen::VectorXd;
using Timestamp = std::chrono::sys_seconds;
using json = nlohmann::json;

enum class Speaker { user, assistant };

struct Utterance {
  Speaker role = Speaker::user;
  std::string text;

  bool operator==(const Utterance&) const = default;
};

struct Session {
  std::string session_id;
  Timestamp timestamp{};
  std::vector<Utterance> turns;
  std::set<std::string> tags;

  bool operator==(const Session&) const = default;
};

struct ConversationHistory {
  std::string history_id;
  std::vector<Session> sessions;
  std::vector<std::string> persona_refs;
  // Extra header keys (e.g. the generator's config snapshot), carried verbatim.
  json header_extra = json::object();

  const Session* find_session(std::string_view id) const;

  bool operator==(const ConversationHistory&) const = default;
};

struct Fact {
  std::string fact_id;
  std::string source_session_id;
  Timestamp source_timestamp{};
  std::string text;
  std::optional<Embedding> embedding;
  std::size_t token_count = 0;

  bool operator==(const Fact& o) const;
};

enum class ReducerKind { umap_like, pca };

// How a tree level is partitioned. exact_count produces exactly
// max(1, floor(n/k)) clusters (per-cluster capacity ceil(n/count));
// hard_cap keeps every cluster at <= k members.
enum class LevelSizing { exact_count, hard_cap };

struct BuildConfig {
  int k = 6;
  int root_size = 15;  // L
  double beta = 0.4;
  int reducer_dims = 10;
  std::uint64_t seed = 0;
  int max_inflight = 4;
  ReducerKind reducer = ReducerKind::umap_like;
  LevelSizing level_sizing = LevelSizing::exact_count;
  double tau_dup = 0.95;
  bool store_embeddings = false;

  void validate() const;

  bool operator==(const BuildConfig&) const = default;
};

struct HistoryStats {
  std::size_t session_count = 0;
  std::size_t turn_count = 0;
  std::size_t total_tokens = 0;
};

// ISO-8601 "YYYY-MM-DDTHH:MM:SS".
std::optional<Timestamp> parse_timestamp(std::string_view s);
std::string format_timestamp(Timestamp t);

const char* speaker_name(Speaker s);

// Sorts ascending by timestamp; ties broken by session_id.
void sort_sessions(std::vector<Session>& sessions);

// Checks the Session/ConversationHistory invariants; throws on violation.
void validate_session(const Session& s);
void validate_history(const ConversationHistory& h);

ConversationHistory parse_history(std::istream& in);
ConversationHistory parse_history_text(std::string_view text);
// A file, or a directory whose *.jsonl files are concatenated in name order.
ConversationHistory load_history(const std::filesystem::path& path);
// Sessions only (no header); used for noisy pools.
std::vector<Session> parse_session_lines(std::string_view text, std::size_t first_line_no = 1);

std::string serialize_history(const ConversationHistory& h);

HistoryStats history_stats(const ConversationHistory& h, const Tokenizer& tok = {});

// Full transcript text of a session, one "role: text" line per turn.
std::string session_text(const Session& s);

// Throws invalid_history unless every fact's source_session_id resolves.
void check_fact_provenance(const ConversationHistory& h, std::span<const Fact> facts);

json to_json(const Session& s);
Session session_from_json(const json& j, std::size_t line_no);
json to_json(const Fact& f);
Fact fact_from_json(const json& j);
json to_json(const BuildConfig& c);
BuildConfig build_config_from_json(const json& j);

const char* reducer_name(ReducerKind k);
ReducerKind parse_reducer(std::string_view s);
const char* level_sizing_name(LevelSizing s);
LevelSizing parse_level_sizing(std::string_view s);

}  // namespace tacitree
