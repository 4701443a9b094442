#include "tacitree/memory_model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <istream>
#include <sstream>
#include <unordered_set>

#include "tacitree/error.hpp"
#include "tacitree/text.hpp"

namespace tacitree {

namespace chr = std::chrono;

const Session* ConversationHistory::find_session(std::string_view id) const {
  for (const auto& s : sessions) {
    if (s.session_id == id) return &s;
  }
  return nullptr;
}

bool Fact::operator==(const Fact& o) const {
  if (fact_id != o.fact_id || source_session_id != o.source_session_id || source_timestamp != o.source_timestamp ||
      text != o.text || token_count != o.token_count)
    return false;
  if (embedding.has_value() != o.embedding.has_value()) return false;
  if (!embedding) return true;
  return embedding->size() == o.embedding->size() && *embedding == *o.embedding;
}

void BuildConfig::validate() const {
  if (k < 2) throw Error(Errc::invalid_config, "k", "must be >= 2");
  if (root_size < 1) throw Error(Errc::invalid_config, "L", "must be >= 1");
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error(Errc::invalid_config, "beta", "must lie in [0, 1]");
  if (reducer_dims < 1) throw Error(Errc::invalid_config, "reducer_dims", "must be positive");
  if (max_inflight < 1) throw Error(Errc::invalid_config, "max_inflight", "must be positive");
  if (!(tau_dup >= 0.0 && tau_dup <= 1.0)) throw Error(Errc::invalid_config, "tau_dup", "must lie in [0, 1]");
}

static bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::optional<Timestamp> parse_timestamp(std::string_view s) {
  if (s.size() == 20 && s.back() == 'Z') s.remove_suffix(1);
  if (s.size() != 19 || s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':' || s[16] != ':')
    return std::nullopt;
  auto field = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
    auto part = s.substr(pos, len);
    if (!all_digits(part)) return std::nullopt;
    return std::stoi(std::string(part));
  };
  auto y = field(0, 4), mo = field(5, 2), d = field(8, 2), h = field(11, 2), mi = field(14, 2), se = field(17, 2);
  if (!y || !mo || !d || !h || !mi || !se) return std::nullopt;
  chr::year_month_day ymd{chr::year{*y}, chr::month{static_cast<unsigned>(*mo)}, chr::day{static_cast<unsigned>(*d)}};
  if (!ymd.ok() || *h > 23 || *mi > 59 || *se > 59) return std::nullopt;
  return chr::sys_days{ymd} + chr::hours{*h} + chr::minutes{*mi} + chr::seconds{*se};
}

std::string format_timestamp(Timestamp t) {
  auto day = chr::floor<chr::days>(t);
  chr::year_month_day ymd{day};
  chr::hh_mm_ss hms{t - day};
  return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), hms.hours().count(),
                     hms.minutes().count(), hms.seconds().count());
}

const char* speaker_name(Speaker s) { return s == Speaker::user ? "user" : "assistant"; }

void sort_sessions(std::vector<Session>& sessions) {
  std::stable_sort(sessions.begin(), sessions.end(), [](const Session& a, const Session& b) {
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.session_id < b.session_id;
  });
}

void validate_session(const Session& s) {
  if (s.session_id.empty()) throw Error(Errc::invalid_history, "", "session without id");
  if (s.turns.empty()) throw Error(Errc::empty_session, s.session_id);
  if (s.turns.front().role != Speaker::user)
    throw Error(Errc::invalid_history, s.session_id, "first turn must be spoken by the user");
  for (const auto& u : s.turns) {
    if (text::trim(u.text).empty()) throw Error(Errc::invalid_history, s.session_id, "empty utterance");
  }
}

void validate_history(const ConversationHistory& h) {
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < h.sessions.size(); ++i) {
    const auto& s = h.sessions[i];
    validate_session(s);
    if (!seen.insert(s.session_id).second) throw Error(Errc::duplicate_session_id, s.session_id);
    if (i > 0 && h.sessions[i - 1].timestamp > s.timestamp)
      throw Error(Errc::invalid_history, s.session_id, "sessions out of timestamp order");
  }
}

json to_json(const Session& s) {
  json turns = json::array();
  for (const auto& u : s.turns) turns.push_back({{"role", speaker_name(u.role)}, {"text", u.text}});
  return {{"session_id", s.session_id},
          {"timestamp", format_timestamp(s.timestamp)},
          {"tags", json(std::vector<std::string>(s.tags.begin(), s.tags.end()))},
          {"turns", std::move(turns)}};
}

Session session_from_json(const json& j, std::size_t line_no) {
  const auto where = std::to_string(line_no);
  if (!j.is_object() || !j.contains("session_id") || !j["session_id"].is_string())
    throw Error(Errc::malformed_line, where, "missing session_id");
  Session s;
  s.session_id = j["session_id"].get<std::string>();
  if (s.session_id.empty()) throw Error(Errc::malformed_line, where, "empty session_id");

  if (!j.contains("timestamp") || !j["timestamp"].is_string()) throw Error(Errc::bad_timestamp, s.session_id);
  auto ts = parse_timestamp(j["timestamp"].get<std::string>());
  if (!ts) throw Error(Errc::bad_timestamp, s.session_id, j["timestamp"].get<std::string>());
  s.timestamp = *ts;

  if (j.contains("tags")) {
    if (!j["tags"].is_array()) throw Error(Errc::malformed_line, where, "tags must be an array");
    for (const auto& t : j["tags"]) {
      if (!t.is_string()) throw Error(Errc::malformed_line, where, "tags must be strings");
      s.tags.insert(t.get<std::string>());
    }
  }

  if (!j.contains("turns") || !j["turns"].is_array()) throw Error(Errc::malformed_line, where, "missing turns");
  for (const auto& t : j["turns"]) {
    if (!t.is_object() || !t.contains("role") || !t.contains("text") || !t["role"].is_string() ||
        !t["text"].is_string())
      throw Error(Errc::malformed_line, where, "turn needs string role and text");
    const auto role = t["role"].get<std::string>();
    Utterance u;
    if (role == "user") {
      u.role = Speaker::user;
    } else if (role == "assistant") {
      u.role = Speaker::assistant;
    } else {
      throw Error(Errc::malformed_line, where, "unknown role '" + role + "'");
    }
    u.text = t["text"].get<std::string>();
    if (text::trim(u.text).empty()) throw Error(Errc::malformed_line, where, "empty utterance text");
    s.turns.push_back(std::move(u));
  }
  if (s.turns.empty()) throw Error(Errc::empty_session, s.session_id);
  if (s.turns.front().role != Speaker::user)
    throw Error(Errc::malformed_line, where, "first turn must be spoken by the user");
  return s;
}

namespace {

struct ParsedLines {
  std::optional<json> header;
  std::vector<Session> sessions;
};

ParsedLines parse_lines(std::string_view text, std::size_t first_line_no) {
  ParsedLines out;
  std::size_t line_no = first_line_no;
  for (const auto& raw : text::split_lines(text)) {
    const auto line = text::trim(raw);
    const auto this_line = line_no++;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(Errc::malformed_line, std::to_string(this_line));
    if (j.contains("session_id")) {
      out.sessions.push_back(session_from_json(j, this_line));
    } else if (j.contains("history_id")) {
      if (out.header) throw Error(Errc::malformed_line, std::to_string(this_line), "second header line");
      out.header = std::move(j);
    } else {
      throw Error(Errc::malformed_line, std::to_string(this_line), "neither header nor session");
    }
  }
  return out;
}

ConversationHistory assemble(ParsedLines parsed, std::string default_id) {
  ConversationHistory h;
  h.history_id = std::move(default_id);
  if (parsed.header) {
    auto& hd = *parsed.header;
    if (!hd["history_id"].is_string()) throw Error(Errc::malformed_line, "1", "history_id must be a string");
    h.history_id = hd["history_id"].get<std::string>();
    if (hd.contains("persona_refs")) {
      if (!hd["persona_refs"].is_array()) throw Error(Errc::malformed_line, "1", "persona_refs must be an array");
      for (const auto& p : hd["persona_refs"]) h.persona_refs.push_back(p.get<std::string>());
    }
    for (auto it = hd.begin(); it != hd.end(); ++it) {
      if (it.key() != "history_id" && it.key() != "persona_refs") h.header_extra[it.key()] = it.value();
    }
  }
  std::unordered_set<std::string> seen;
  for (const auto& s : parsed.sessions) {
    if (!seen.insert(s.session_id).second) throw Error(Errc::duplicate_session_id, s.session_id);
  }
  h.sessions = std::move(parsed.sessions);
  sort_sessions(h.sessions);
  return h;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::io_error, p.string(), "cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ConversationHistory parse_history_text(std::string_view text) { return assemble(parse_lines(text, 1), "history"); }

ConversationHistory parse_history(std::istream& in) {
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_history_text(ss.str());
}

std::vector<Session> parse_session_lines(std::string_view text, std::size_t first_line_no) {
  return parse_lines(text, first_line_no).sessions;
}

ConversationHistory load_history(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw Error(Errc::io_error, path.string(), "no such file or directory");
  if (!fs::is_directory(path)) return assemble(parse_lines(read_file(path), 1), path.stem().string());

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(path)) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) {
    auto content = read_file(f);
    all += content;
    if (!content.empty() && content.back() != '\n') all += '\n';
  }
  return assemble(parse_lines(all, 1), path.filename().string());
}

std::string serialize_history(const ConversationHistory& h) {
  json header = h.header_extra.is_object() ? h.header_extra : json::object();
  header["history_id"] = h.history_id;
  header["persona_refs"] = h.persona_refs;
  std::string out = header.dump() + "\n";
  for (const auto& s : h.sessions) out += to_json(s).dump() + "\n";
  return out;
}

HistoryStats history_stats(const ConversationHistory& h, const Tokenizer& tok) {
  HistoryStats st;
  st.session_count = h.sessions.size();
  for (const auto& s : h.sessions) {
    st.turn_count += s.turns.size();
    for (const auto& u : s.turns) st.total_tokens += tok.count(u.text);
  }
  return st;
}

std::string session_text(const Session& s) {
  std::string out;
  for (const auto& u : s.turns) {
    out += speaker_name(u.role);
    out += ": ";
    out += u.text;
    out += '\n';
  }
  return out;
}

void check_fact_provenance(const ConversationHistory& h, std::span<const Fact> facts) {
  std::unordered_set<std::string> ids;
  for (const auto& s : h.sessions) ids.insert(s.session_id);
  for (const auto& f : facts) {
    if (!ids.count(f.source_session_id))
      throw Error(Errc::invalid_history, f.fact_id, "unknown source session " + f.source_session_id);
  }
}

json to_json(const Fact& f) {
  json j = {{"fact_id", f.fact_id},
            {"source_session_id", f.source_session_id},
            {"source_timestamp", format_timestamp(f.source_timestamp)},
            {"text", f.text},
            {"token_count", f.token_count}};
  if (f.embedding) {
    j["embedding"] = std::vector<double>(f.embedding->data(), f.embedding->data() + f.embedding->size());
  }
  return j;
}

Fact fact_from_json(const json& j) {
  Fact f;
  f.fact_id = j.at("fact_id").get<std::string>();
  f.source_session_id = j.at("source_session_id").get<std::string>();
  auto ts = parse_timestamp(j.at("source_timestamp").get<std::string>());
  if (!ts) throw Error(Errc::bad_timestamp, f.fact_id);
  f.source_timestamp = *ts;
  f.text = j.at("text").get<std::string>();
  f.token_count = j.at("token_count").get<std::size_t>();
  if (j.contains("embedding")) {
    auto values = j["embedding"].get<std::vector<double>>();
    f.embedding = Eigen::Map<const Embedding>(values.data(), static_cast<Eigen::Index>(values.size()));
  }
  return f;
}

const char* reducer_name(ReducerKind k) { return k == ReducerKind::pca ? "pca" : "umap_like"; }

ReducerKind parse_reducer(std::string_view s) {
  if (s == "pca") return ReducerKind::pca;
  if (s == "umap_like" || s == "umap") return ReducerKind::umap_like;
  throw Error(Errc::invalid_config, "reducer", std::string(s));
}

const char* level_sizing_name(LevelSizing s) { return s == LevelSizing::hard_cap ? "hard_cap" : "exact_count"; }

LevelSizing parse_level_sizing(std::string_view s) {
  if (s == "hard_cap") return LevelSizing::hard_cap;
  if (s == "exact_count") return LevelSizing::exact_count;
  throw Error(Errc::invalid_config, "level_sizing", std::string(s));
}

json to_json(const BuildConfig& c) {
  return {{"k", c.k},
          {"L", c.root_size},
          {"beta", c.beta},
          {"reducer_dims", c.reducer_dims},
          {"seed", c.seed},
          {"max_inflight", c.max_inflight},
          {"reducer", reducer_name(c.reducer)},
          {"level_sizing", level_sizing_name(c.level_sizing)},
          {"tau_dup", c.tau_dup},
          {"store_embeddings", c.store_embeddings}};
}

BuildConfig build_config_from_json(const json& j) {
  BuildConfig c;
  c.k = j.value("k", c.k);
  c.root_size = j.value("L", c.root_size);
  c.beta = j.value("beta", c.beta);
  c.reducer_dims = j.value("reducer_dims", c.reducer_dims);
  c.seed = j.value("seed", c.seed);
  c.max_inflight = j.value("max_inflight", c.max_inflight);
  c.reducer = parse_reducer(j.value("reducer", std::string(reducer_name(c.reducer))));
  c.level_sizing = parse_level_sizing(j.value("level_sizing", std::string(level_sizing_name(c.level_sizing))));
  c.tau_dup = j.value("tau_dup", c.tau_dup);
  c.store_embeddings = j.value("store_embeddings", c.store_embeddings);
  return c;
}

}  // namespace tacitree
