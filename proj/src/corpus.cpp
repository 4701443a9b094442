#include "tacitree/corpus.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "tacitree/error.hpp"
#include "tacitree/gateway/prompts.hpp"
#include "tacitree/parallel.hpp"
#include "tacitree/rng.hpp"
#include "tacitree/text.hpp"

namespace tacitree {

namespace {

constexpr std::string_view kRegenerateSuffix =
    "\n\nThe previous conversation was too short or mentioned the scenario too early. Write a new one.";

std::string one_line(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return text::trim(out);
}

std::string strip_final_punct(std::string_view s) {
  std::string t = text::trim(s);
  while (!t.empty() && (t.back() == '.' || t.back() == '!' || t.back() == '?')) t.pop_back();
  return text::trim(t);
}

std::string strip_quotes(std::string_view s) {
  std::string t = text::trim(s);
  while (t.size() >= 2 && (t.front() == '"' || t.front() == '\'') && t.back() == t.front())
    t = text::trim(std::string_view(t).substr(1, t.size() - 2));
  return t;
}

std::string first_sentence(std::string_view s) {
  auto parts = text::split_sentences(one_line(s));
  return parts.empty() ? std::string() : parts.front();
}

bool says_yes(std::string_view response) {
  auto w = text::words(response);
  return !w.empty() && w.front() == "yes";
}

std::string lower_first(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(s[0])));
  return s;
}

std::vector<std::string> tokens(std::string_view s) {
  std::istringstream in{std::string(s)};
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string base_form(const std::string& verb) {
  const auto v = text::to_lower(verb);
  if (v == "is" || v == "are" || v == "am") return "be";
  if (v == "has") return "have";
  if (v == "does") return "do";
  if (v == "goes") return "go";
  if (v.size() > 4 && v.ends_with("ies")) return v.substr(0, v.size() - 3) + "y";
  for (std::string_view suf : {"sses", "shes", "ches", "xes", "zes", "oes"}) {
    if (v.size() > suf.size() && v.ends_with(suf)) return v.substr(0, v.size() - 2);
  }
  if (v.size() > 2 && v.ends_with('s') && !v.ends_with("ss")) return v.substr(0, v.size() - 1);
  return v;
}

bool is_modal(std::string_view w) {
  static const std::set<std::string, std::less<>> m = {"can",   "could", "will", "would", "should",
                                                       "shall", "may",   "might", "must"};
  return m.count(w) > 0;
}

struct PredicateParts {
  std::string adverb;
  std::string verb;
  std::string rest;
};

PredicateParts split_predicate(std::string_view trait_text) {
  auto toks = tokens(trait_predicate(trait_text));
  PredicateParts p;
  std::size_t i = 0;
  static const std::set<std::string> kAdverbs = {"often", "always", "never", "sometimes", "also", "still", "seldom", "rarely"};
  if (toks.size() > 1) {
    const auto first = text::to_lower(toks[0]);
    if (first.ends_with("ly") || kAdverbs.contains(first)) p.adverb = toks[i++];
  }
  if (i < toks.size()) p.verb = toks[i++];
  std::vector<std::string> rest(toks.begin() + static_cast<std::ptrdiff_t>(i), toks.end());
  p.rest = text::join(rest, " ");
  return p;
}

std::string join_nonempty(std::initializer_list<std::string_view> parts) {
  std::string out;
  for (auto p : parts) {
    if (p.empty()) continue;
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

std::string base_predicate(std::string_view trait_text) {
  auto p = split_predicate(trait_text);
  if (is_modal(text::to_lower(p.verb))) return join_nonempty({p.adverb, p.rest});
  return join_nonempty({p.adverb, base_form(p.verb), p.rest});
}

std::set<std::string> stem_set(std::string_view s) {
  std::set<std::string> out;
  for (const auto& w : text::content_words(s)) out.insert(text::stem(w));
  return out;
}

void flag(AuditLog* audit, AuditFlag f) {
  if (audit) audit->add(std::move(f));
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::io_error, p.string(), "cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string persona_of(const std::string& trait_id) {
  auto pos = trait_id.rfind("-t");
  return pos == std::string::npos ? trait_id : trait_id.substr(0, pos);
}

bool generation_error(Errc c) {
  switch (c) {
    case Errc::too_few_scenarios:
    case Errc::no_candidates:
    case Errc::question_too_long:
    case Errc::unparseable_output:
    case Errc::unparseable_transcript:
    case Errc::extraction_empty:
      return true;
    default:
      return false;
  }
}

}  // namespace

const char* category_name(TraitCategory c) {
  switch (c) {
    case TraitCategory::demographics: return "demographics";
    case TraitCategory::career: return "career_life_and_goals";
    case TraitCategory::everyday: return "everyday_life_and_hobbies";
  }
  return "?";
}

const char* scenario_kind_name(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::opposed: return "opposed";
    case ScenarioKind::supportive: return "supportive";
    case ScenarioKind::distractor: return "distractor";
  }
  return "?";
}

const char* status_name(ScenarioStatus s) {
  switch (s) {
    case ScenarioStatus::raw: return "raw";
    case ScenarioStatus::filtered: return "filtered";
    case ScenarioStatus::selected: return "selected";
    case ScenarioStatus::verified: return "verified";
    case ScenarioStatus::rejected: return "rejected";
  }
  return "?";
}

const char* task_kind_name(TaskKind k) { return k == TaskKind::opposed ? "opposed" : "supportive"; }

TaskKind parse_task_kind(std::string_view s) {
  if (s == "opposed") return TaskKind::opposed;
  if (s == "supportive") return TaskKind::supportive;
  throw Error(Errc::invalid_config, "kind", std::string(s));
}

KindSelection parse_kind_selection(std::string_view s) {
  if (s == "opposed") return KindSelection::opposed;
  if (s == "supportive") return KindSelection::supportive;
  if (s == "both") return KindSelection::both;
  throw Error(Errc::invalid_config, "kind", std::string(s));
}

void AuditLog::add(AuditFlag f) {
  std::lock_guard lk(mu_);
  flags_.push_back(std::move(f));
}

std::vector<AuditFlag> AuditLog::flags() const {
  std::vector<AuditFlag> out;
  {
    std::lock_guard lk(mu_);
    out = flags_;
  }
  std::stable_sort(out.begin(), out.end(), [](const AuditFlag& a, const AuditFlag& b) {
    return std::tie(a.subject, a.kind, a.detail) < std::tie(b.subject, b.kind, b.detail);
  });
  return out;
}

std::vector<AuditFlag> AuditLog::flags(std::string_view kind) const {
  auto all = flags();
  std::erase_if(all, [&](const AuditFlag& f) { return f.kind != kind; });
  return all;
}

void CorpusConfig::validate() const {
  if (!(beta > 0.0 && beta <= 1.0)) throw Error(Errc::invalid_config, "beta", "must lie in (0, 1]");
  if (near_threshold_band < 0.0) throw Error(Errc::invalid_config, "near_threshold_band", "must be >= 0");
  if (min_usable_scenarios < 1 || n_scenarios < min_usable_scenarios)
    throw Error(Errc::invalid_config, "n_scenarios", "need n_scenarios >= min_usable_scenarios >= 1");
  if (n_distractors < 0) throw Error(Errc::invalid_config, "n_distractors", "must be >= 0");
  if (distractor_rounds < 1) throw Error(Errc::invalid_config, "distractor_rounds", "must be >= 1");
  if (pool_per_source < 0) throw Error(Errc::invalid_config, "pool_per_source", "must be >= 0");
  if (!(min_sessions <= target_sessions && target_sessions <= max_sessions) || min_sessions == 0)
    throw Error(Errc::invalid_config, "sessions", "need 0 < min <= target <= max");
  if (window_days < 1 || static_cast<std::size_t>(window_days) < max_sessions)
    throw Error(Errc::invalid_config, "window_days", "must be >= max_sessions");
  if (min_turns < 1) throw Error(Errc::invalid_config, "min_turns", "must be >= 1");
  if (late_mention_turn < 0) throw Error(Errc::invalid_config, "late_mention_turn", "must be >= 0");
  if (order_attempts < 1) throw Error(Errc::invalid_config, "order_attempts", "must be >= 1");
  if (traits_per_persona < 1) throw Error(Errc::invalid_config, "traits_per_persona", "must be >= 1");
}

json to_json(const CorpusConfig& c) {
  const char* kinds = c.kinds == KindSelection::both ? "both" : c.kinds == KindSelection::opposed ? "opposed" : "supportive";
  return {{"beta", c.beta},
          {"near_threshold_band", c.near_threshold_band},
          {"n_scenarios", c.n_scenarios},
          {"min_usable_scenarios", c.min_usable_scenarios},
          {"n_distractors", c.n_distractors},
          {"distractor_rounds", c.distractor_rounds},
          {"pool_per_source", c.pool_per_source},
          {"min_sessions", c.min_sessions},
          {"target_sessions", c.target_sessions},
          {"max_sessions", c.max_sessions},
          {"min_turns", c.min_turns},
          {"late_mention_turn", c.late_mention_turn},
          {"window_days", c.window_days},
          {"window_start", format_timestamp(c.window_start)},
          {"kinds", kinds},
          {"traits_per_persona", c.traits_per_persona},
          {"seed", c.seed},
          {"history_id", c.history_id}};
}

std::string normalize_trait_text(std::string_view s) {
  std::string t = first_sentence(strip_quotes(s));
  t = strip_quotes(t);
  if (t.empty()) return t;
  if (text::starts_with_ci(t, "this person ")) {
    t = "This person " + text::trim(std::string_view(t).substr(12));
  } else {
    for (std::string_view pre : {"the person ", "he ", "she ", "they ", "i "}) {
      if (text::starts_with_ci(t, pre)) {
        t = text::trim(std::string_view(t).substr(pre.size()));
        break;
      }
    }
    t = "This person " + lower_first(t);
  }
  return strip_final_punct(t) + ".";
}

std::vector<PersonaTrait> parse_persona_response(std::string_view response, std::string_view id_prefix) {
  std::vector<PersonaTrait> out;
  const auto open = response.find('{');
  const auto close = response.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) return out;
  json j = json::parse(response.substr(open, close - open + 1), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return out;

  auto add = [&](const json& v, TraitCategory cat) {
    if (!v.is_string()) return;
    auto t = normalize_trait_text(v.get<std::string>());
    if (t.empty() || trait_predicate(t).empty()) return;
    out.push_back({fmt::format("{}-t{}", id_prefix, out.size()), std::move(t), cat});
  };
  auto add_all = [&](std::string_view key, TraitCategory cat) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (it->is_object() || it->is_array()) {
      for (const auto& v : *it) add(v, cat);
    } else {
      add(*it, cat);
    }
  };
  add_all("demographics", TraitCategory::demographics);
  add_all("career_life_and_goals", TraitCategory::career);
  add_all("everyday_life_and_hobbies", TraitCategory::everyday);
  return out;
}

std::vector<PersonaTrait> standardize_persona(Gateway& gw, std::string_view raw, std::string_view id_prefix) {
  const auto persona = text::trim(raw);
  if (persona.empty()) throw Error(Errc::empty_input, std::string(id_prefix), "empty persona");
  TemplateVars vars{{"persona", persona}};
  auto traits = parse_persona_response(gw.chat(Role::generator_m1, prompts::persona(), vars).text, id_prefix);
  if (traits.empty())
    traits = parse_persona_response(gw.chat(Role::generator_m1, prompts::persona(), vars, prompts::kReaskSuffix).text,
                                    id_prefix);
  if (traits.empty()) throw Error(Errc::unparseable_output, std::string(id_prefix), "persona breakdown");
  return traits;
}

std::string trait_predicate(std::string_view trait_text) {
  std::string t = text::trim(trait_text);
  if (text::starts_with_ci(t, "this person")) t = t.substr(11);
  return strip_final_punct(t);
}

std::string supportive_question(std::string_view trait_text) {
  auto p = split_predicate(trait_text);
  const auto v = text::to_lower(p.verb);
  if (v == "is" || v == "was") {
    std::string aux = v == "is" ? "Is" : "Was";
    return join_nonempty({aux, "this person", p.adverb, p.rest}) + "?";
  }
  if (is_modal(v)) {
    std::string aux = v;
    aux[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(aux[0])));
    return join_nonempty({aux, "this person", p.adverb, p.rest}) + "?";
  }
  return join_nonempty({"Does this person", p.adverb, base_form(p.verb), p.rest}) + "?";
}

std::vector<std::string> parse_numbered_list(std::string_view response) {
  std::vector<std::string> out;
  for (const auto& raw : text::split_lines(response)) {
    std::string line = text::trim(raw);
    while (!line.empty() && (line.front() == '*' || line.front() == '-' || line.front() == '#'))
      line = text::trim(std::string_view(line).substr(1));
    std::size_t i = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i == 0 || i >= line.size() || (line[i] != ':' && line[i] != '.' && line[i] != ')')) continue;
    std::string item = text::trim(std::string_view(line).substr(i + 1));
    while (!item.empty() && item.front() == '*') item = text::trim(std::string_view(item).substr(1));
    while (!item.empty() && item.back() == '*') item = text::trim(std::string_view(item).substr(0, item.size() - 1));
    item = strip_quotes(item);
    if (!item.empty()) out.push_back(std::move(item));
  }
  return out;
}

bool violates_banned_words(std::string_view scenario, std::string_view trait_text) {
  const auto banned = stem_set(trait_predicate(trait_text));
  for (const auto& w : text::content_words(scenario)) {
    if (banned.count(text::stem(w))) return true;
  }
  return false;
}

std::vector<ReasoningScenario> generate_scenarios(Gateway& gw, const PersonaTrait& trait, ScenarioKind kind,
                                                  const CorpusConfig& cfg, AuditLog* audit) {
  if (kind == ScenarioKind::distractor)
    throw Error(Errc::invalid_config, trait.trait_id, "distractors come from generate_distractors");
  const auto& tmpl = kind == ScenarioKind::opposed ? prompts::opposed_reasons() : prompts::supportive_reasons();
  TemplateVars vars{{"per_info", trait.text}, {"traits_info", trait_predicate(trait.text)}};
  auto items = parse_numbered_list(gw.chat(Role::generator_m1, tmpl, vars).text);
  if (items.empty()) items = parse_numbered_list(gw.chat(Role::generator_m1, tmpl, vars, prompts::kReaskSuffix).text);

  std::vector<ReasoningScenario> out;
  const char tag = kind == ScenarioKind::opposed ? 'o' : 's';
  for (const auto& item : items) {
    if (out.size() >= static_cast<std::size_t>(cfg.n_scenarios)) break;
    auto sentence = first_sentence(item);
    if (sentence.empty()) continue;
    if (violates_banned_words(sentence, trait.text)) {
      flag(audit, {"banned_word", trait.trait_id, sentence, std::nullopt});
      continue;
    }
    ReasoningScenario s;
    s.scenario_id = fmt::format("{}-{}{}", trait.trait_id, tag, out.size());
    s.trait_id = trait.trait_id;
    s.kind = kind;
    s.text = std::move(sentence);
    out.push_back(std::move(s));
  }
  if (out.size() < static_cast<std::size_t>(cfg.min_usable_scenarios))
    throw Error(Errc::too_few_scenarios, trait.trait_id, fmt::format("{} usable", out.size()));
  return out;
}

void filter_by_similarity(Gateway& gw, std::vector<ReasoningScenario>& scenarios, const PersonaTrait& trait,
                          const CorpusConfig& cfg, AuditLog* audit) {
  std::vector<std::string> texts{trait.text};
  for (const auto& s : scenarios) texts.push_back(s.text);
  auto vecs = gw.embed(texts);
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    auto& s = scenarios[i];
    if (s.status != ScenarioStatus::raw) continue;
    s.similarity_to_trait = cosine(vecs[0], vecs[i + 1]);
    s.status = s.similarity_to_trait < cfg.beta ? ScenarioStatus::filtered : ScenarioStatus::rejected;
    if (std::abs(s.similarity_to_trait - cfg.beta) <= cfg.near_threshold_band + 1e-12)
      flag(audit, {"near_threshold", s.scenario_id, s.text, s.similarity_to_trait});
  }
}

Selection select_opposed_best(Gateway& gw, const PersonaTrait& trait, const std::vector<ReasoningScenario>& filtered,
                              AuditLog* audit) {
  std::vector<const ReasoningScenario*> cands;
  for (const auto& s : filtered) {
    if (s.status == ScenarioStatus::filtered) cands.push_back(&s);
  }
  if (cands.empty()) throw Error(Errc::no_candidates, trait.trait_id);

  std::string str_reason;
  for (std::size_t i = 0; i < cands.size(); ++i) str_reason += fmt::format("\n{}: {}", i + 1, cands[i]->text);
  TemplateVars vars{{"per_info", strip_final_punct(trait.text)}, {"str_reason", str_reason}};
  auto reply = gw.chat(Role::generator_m1, prompts::select_opposed(), vars).text;

  std::string answer = strip_quotes(one_line(reply));
  if (auto numbered = parse_numbered_list(answer); !numbered.empty()) answer = numbered.front();

  const ReasoningScenario* best = nullptr;
  double best_sim = 0.9;
  for (const auto* c : cands) {
    const double sim = text::normalized_edit_similarity(answer, c->text);
    if (sim >= best_sim && (!best || sim > best_sim)) {
      best = c;
      best_sim = sim;
    }
  }
  Selection sel;
  if (!best) {
    best = *std::min_element(cands.begin(), cands.end(), [](const auto* a, const auto* b) {
      return a->similarity_to_trait < b->similarity_to_trait;
    });
    sel.used_fallback = true;
    flag(audit, {"selection_fallback", trait.trait_id, best->scenario_id, best->similarity_to_trait});
  }
  sel.scenario = *best;
  sel.scenario.status = ScenarioStatus::selected;
  return sel;
}

void verify_supportive(Gateway& gw, const PersonaTrait& trait, std::vector<ReasoningScenario>& filtered,
                       AuditLog* audit) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < filtered.size(); ++i) {
    if (filtered[i].status == ScenarioStatus::filtered) idx.push_back(i);
  }
  std::vector<std::string> replies(idx.size());
  parallel_for(idx.size(), gw.max_inflight(), [&](std::size_t k) {
    TemplateVars vars{{"per_info", trait.text}, {"scenario", filtered[idx[k]].text}};
    replies[k] = gw.chat(Role::generator_m1, prompts::verify_supportive(), vars).text;
  });
  for (std::size_t k = 0; k < idx.size(); ++k) {
    auto& s = filtered[idx[k]];
    if (says_yes(replies[k])) {
      s.status = ScenarioStatus::verified;
    } else {
      s.status = ScenarioStatus::rejected;
      flag(audit, {"rejected_verification", s.scenario_id, one_line(replies[k]), std::nullopt});
    }
  }
}

bool valid_opposed_question(std::string_view q) {
  const auto t = text::trim(q);
  if (t.empty() || text::word_count(t) >= 20 || t.find('?') == std::string::npos) return false;
  auto w = text::words(t);
  if (std::find(w.begin(), w.end(), "i") == w.end()) return false;
  static const std::set<std::string, std::less<>> aux = {"is",    "are",   "am",     "was",   "were",  "do",
                                                         "does",  "did",   "can",    "could", "will",  "would",
                                                         "should", "shall", "may",   "might", "must",  "have",
                                                         "has",   "had"};
  return !aux.count(w.front());
}

QaTask make_opposed_qa(Gateway& gw, const PersonaTrait& trait, const ReasoningScenario& selected) {
  TemplateVars vars{{"per_info", strip_final_punct(trait.text)}, {"reason_info", strip_final_punct(selected.text)}};
  auto clean = [](const std::string& reply) {
    for (const auto& line : text::split_lines(reply)) {
      std::string t = strip_quotes(line);
      if (text::starts_with_ci(t, "question:")) t = strip_quotes(std::string_view(t).substr(9));
      if (!t.empty()) return t;
    }
    return std::string();
  };
  auto q = clean(gw.chat(Role::generator_m1, prompts::opposed_question(), vars).text);
  if (!valid_opposed_question(q)) {
    q = clean(gw.chat(Role::generator_m1, prompts::opposed_question(), vars, prompts::kReaskSuffix).text);
    if (!valid_opposed_question(q)) {
      if (text::word_count(q) >= 20) throw Error(Errc::question_too_long, trait.trait_id, q);
      throw Error(Errc::unparseable_output, trait.trait_id, "opposed question: " + q);
    }
  }
  QaTask t;
  t.trait_id = trait.trait_id;
  t.kind = TaskKind::opposed;
  t.question = q;
  t.gold_answer = fmt::format("Because {}, you probably cannot {} right now, so any suggestion has to work around that.",
                              lower_first(strip_final_punct(selected.text)), base_predicate(trait.text));
  t.yes_no = false;
  t.trait_text = trait.text;
  t.evidence_texts = {selected.text};
  return t;
}

QaTask make_supportive_qa(const PersonaTrait& trait, const std::vector<ReasoningScenario>& verified) {
  QaTask t;
  t.trait_id = trait.trait_id;
  t.kind = TaskKind::supportive;
  t.question = supportive_question(trait.text);
  t.yes_no = true;
  t.trait_text = trait.text;
  for (const auto& s : verified) {
    if (s.status == ScenarioStatus::verified) t.evidence_texts.push_back(s.text);
  }
  t.gold_answer = t.evidence_texts.empty() ? "no" : "yes";
  return t;
}

DistractorResult generate_distractors(Gateway& gw, const PersonaTrait& trait, const QaTask& task,
                                      const ReasoningScenario& r_star, const CorpusConfig& cfg, AuditLog* audit) {
  DistractorResult res;
  const auto n = static_cast<std::size_t>(cfg.n_distractors);
  if (n == 0) return res;
  const Embedding q = gw.embed_one(task.question);
  const Embedding t = gw.embed_one(trait.text);
  const double r_sim = cosine(gw.embed_one(r_star.text), q);
  TemplateVars vars{{"persona", trait.text}, {"question", task.question}, {"traits_info", trait_predicate(trait.text)}};
  std::set<std::string> seen{text::to_lower(r_star.text)};
  for (int round = 0; round < cfg.distractor_rounds && res.scenarios.size() < n; ++round) {
    const std::string suffix =
        round == 0 ? std::string() : fmt::format("\n\nRound {}: give scenarios different from any given before.", round + 1);
    auto items = parse_numbered_list(gw.chat(Role::generator_m1, prompts::distractors(), vars, suffix).text);
    std::vector<std::string> fresh;
    for (const auto& item : items) {
      auto s = first_sentence(item);
      if (!s.empty() && seen.insert(text::to_lower(s)).second) fresh.push_back(std::move(s));
    }
    if (fresh.empty()) continue;
    auto vecs = gw.embed(fresh);
    for (std::size_t i = 0; i < fresh.size() && res.scenarios.size() < n; ++i) {
      const double sim = cosine(vecs[i], q);
      if (!(sim > r_sim)) continue;
      ReasoningScenario d;
      d.scenario_id = fmt::format("{}-d{}", trait.trait_id, res.scenarios.size());
      d.trait_id = trait.trait_id;
      d.kind = ScenarioKind::distractor;
      d.text = fresh[i];
      d.similarity_to_trait = cosine(vecs[i], t);
      d.similarity_to_question = sim;
      res.scenarios.push_back(std::move(d));
    }
  }
  if (res.scenarios.size() < n) {
    res.shortfall = true;
    flag(audit, {"distractor_shortfall", trait.trait_id, fmt::format("{} of {}", res.scenarios.size(), n),
                 static_cast<double>(res.scenarios.size())});
  }
  return res;
}

std::vector<Utterance> parse_transcript(std::string_view transcript) {
  std::vector<Utterance> turns;
  for (const auto& raw : text::split_lines(transcript)) {
    std::string line;
    for (char c : raw) {
      if (c != '*') line += c;
    }
    line = text::trim(line);
    if (line.empty()) continue;
    const auto colon = line.find(':');
    std::optional<Speaker> who;
    if (colon != std::string::npos) {
      std::string label;
      for (char c : line.substr(0, colon)) {
        if (!std::isspace(static_cast<unsigned char>(c))) label += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      }
      if (label == "speaker1" || label == "user") who = Speaker::user;
      if (label == "assistant" || label == "speaker2" || label == "ai" || label == "aiassistant") who = Speaker::assistant;
    }
    if (who) {
      turns.push_back({*who, text::trim(std::string_view(line).substr(colon + 1))});
    } else if (!turns.empty()) {
      turns.back().text = text::trim(turns.back().text + " " + line);
    }
  }
  std::erase_if(turns, [](const Utterance& u) { return u.text.empty(); });
  auto first_user = std::find_if(turns.begin(), turns.end(), [](const Utterance& u) { return u.role == Speaker::user; });
  turns.erase(turns.begin(), first_user);
  return turns;
}

int first_mention(const std::vector<Utterance>& turns, std::string_view key) {
  const auto keys = stem_set(key);
  for (std::size_t i = 0; i < turns.size(); ++i) {
    for (const auto& w : text::content_words(turns[i].text)) {
      if (keys.count(text::stem(w))) return static_cast<int>(i);
    }
  }
  return -1;
}

Session expand_to_session(Gateway& gw, std::string_view scenario, std::string session_id, Timestamp ts,
                          const CorpusConfig& cfg, AuditLog* audit) {
  const auto key = text::trim(scenario);
  if (key.empty()) throw Error(Errc::empty_input, session_id, "empty scenario");
  TemplateVars vars{{"scenario", key}};
  std::vector<Utterance> last;
  bool parsed_before = true;
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::string_view suffix;
    if (attempt > 0) suffix = parsed_before ? kRegenerateSuffix : prompts::kReaskSuffix;
    auto turns = parse_transcript(gw.chat(Role::generator_m1, prompts::transcript(), vars, suffix).text);
    parsed_before = !turns.empty();
    if (turns.empty()) continue;
    const int mention = first_mention(turns, key);
    const bool ok = turns.size() >= static_cast<std::size_t>(cfg.min_turns) && mention >= cfg.late_mention_turn;
    last = std::move(turns);
    if (ok) return {std::move(session_id), ts, std::move(last), {}};
  }
  if (last.empty()) throw Error(Errc::unparseable_transcript, session_id);
  flag(audit, {"validation_warning", session_id, std::string(key), std::nullopt});
  return {std::move(session_id), ts, std::move(last), {"validation_warning"}};
}

std::string session_embedding_text(const Session& s) {
  std::vector<std::string> parts;
  for (const auto& u : s.turns) parts.push_back(u.text);
  return text::join(parts, "\n");
}

Session relabel_alternating(Session s) {
  for (std::size_t i = 0; i < s.turns.size(); ++i) s.turns[i].role = i % 2 == 0 ? Speaker::user : Speaker::assistant;
  return s;
}

std::vector<PoolSource> load_pool(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(Errc::io_error, dir.string(), "pool must be a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<PoolSource> out;
  for (const auto& f : files) out.push_back({f.stem().string(), parse_session_lines(read_file(f), 1)});
  return out;
}

TraitPipeline run_trait_pipeline(Gateway& gw, const PersonaTrait& trait, TaskKind kind, const std::string& task_id,
                                 const CorpusConfig& cfg, AuditLog* audit) {
  TraitPipeline p;
  p.trait = trait;
  p.kind = kind;
  if (kind == TaskKind::opposed) {
    p.scenarios = generate_scenarios(gw, trait, ScenarioKind::opposed, cfg, audit);
    filter_by_similarity(gw, p.scenarios, trait, cfg, audit);
    auto sel = select_opposed_best(gw, trait, p.scenarios, audit);
    for (auto& s : p.scenarios) {
      if (s.scenario_id == sel.scenario.scenario_id) s.status = ScenarioStatus::selected;
    }
    p.task = make_opposed_qa(gw, trait, sel.scenario);
    p.task.task_id = task_id;
    auto d = generate_distractors(gw, trait, p.task, sel.scenario, cfg, audit);
    p.distractors = std::move(d.scenarios);
    for (const auto& s : p.distractors) p.task.distractor_texts.push_back(s.text);
    p.task.evidence_similarity = cosine(gw.embed_one(sel.scenario.text), gw.embed_one(p.task.question));
  } else {
    p.scenarios = generate_scenarios(gw, trait, ScenarioKind::supportive, cfg, audit);
    filter_by_similarity(gw, p.scenarios, trait, cfg, audit);
    verify_supportive(gw, trait, p.scenarios, audit);
    p.task = make_supportive_qa(trait, p.scenarios);
    p.task.task_id = task_id;
    const Embedding q = gw.embed_one(p.task.question);
    if (p.task.evidence_texts.empty()) {
      p.task.evidence_similarity = cosine(gw.embed_one(trait.text), q);
    } else {
      auto vecs = gw.embed(p.task.evidence_texts);
      double best = -1.0;
      for (const auto& v : vecs) best = std::max(best, cosine(v, q));
      p.task.evidence_similarity = best;
    }
  }
  return p;
}

bool ordering_ok(const std::vector<std::string>& order,
                 const std::vector<std::pair<std::string, std::string>>& p_then_r) {
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
  for (const auto& [p, r] : p_then_r) {
    auto ip = pos.find(p), ir = pos.find(r);
    if (ip == pos.end() || ir == pos.end()) return false;
    if (ir->second <= ip->second + 1) return false;
  }
  return true;
}

namespace {

enum class ItemRole { persona, evidence, distractor, pool };

struct Planned {
  std::string key;  // stable identity used by the ordering check
  ItemRole role = ItemRole::persona;
  std::string text;            // generated items: the scenario to expand
  const Session* pool = nullptr;  // pool items
  std::set<std::string> tags;
};

}  // namespace

Example assemble_example(Gateway& gw, const std::vector<PersonaTrait>& traits, const std::vector<PoolSource>& pool,
                         const CorpusConfig& cfg, AuditLog* audit) {
  cfg.validate();
  if (traits.empty()) throw Error(Errc::empty_input, cfg.history_id, "no traits");
  std::size_t pool_total = 0;
  for (const auto& src : pool) pool_total += src.sessions.size();
  if (pool_total == 0) throw Error(Errc::pool_too_small, cfg.history_id, "noise pool is empty");

  AuditLog local;
  AuditLog* log = audit ? audit : &local;

  std::vector<std::optional<TraitPipeline>> runs(traits.size());
  parallel_for(traits.size(), gw.max_inflight(), [&](std::size_t i) {
    TaskKind kind = cfg.kinds == KindSelection::opposed      ? TaskKind::opposed
                    : cfg.kinds == KindSelection::supportive ? TaskKind::supportive
                    : i % 2 == 0                            ? TaskKind::opposed
                                                            : TaskKind::supportive;
    try {
      runs[i] = run_trait_pipeline(gw, traits[i], kind, fmt::format("{}-q{}", cfg.history_id, i), cfg, log);
    } catch (const Error& e) {
      if (!generation_error(e.code())) throw;
      log->add({"trait_failed", traits[i].trait_id, e.what(), std::nullopt});
    }
  });

  std::vector<const Session*> pool_sessions;
  std::vector<std::size_t> pool_source_of;
  for (std::size_t s = 0; s < pool.size(); ++s) {
    for (const auto& sess : pool[s].sessions) {
      pool_sessions.push_back(&sess);
      pool_source_of.push_back(s);
    }
  }
  std::vector<std::string> pool_texts;
  for (const auto* s : pool_sessions) pool_texts.push_back(session_embedding_text(*s));
  const auto pool_vecs = gw.embed(pool_texts);
  std::vector<bool> used(pool_sessions.size(), false);

  struct Included {
    std::size_t run;
    Embedding q;
  };
  std::vector<Planned> items;
  std::vector<Included> included;
  std::vector<std::pair<std::string, std::string>> p_then_r;

  auto pool_item = [&](std::size_t idx, const QaTask& task, std::string extra) {
    Planned it;
    it.key = fmt::format("pool:{}", idx);
    it.role = ItemRole::pool;
    it.pool = pool_sessions[idx];
    it.tags = {"noise", "pool", "task:" + task.task_id, "source:" + pool[pool_source_of[idx]].name};
    if (!extra.empty()) it.tags.insert(std::move(extra));
    return it;
  };

  for (std::size_t r = 0; r < runs.size(); ++r) {
    if (!runs[r]) continue;
    const auto& p = *runs[r];
    const auto& task = p.task;
    const std::string task_tag = "task:" + task.task_id;
    std::vector<Planned> bundle;
    bundle.push_back({task.task_id + ":p", ItemRole::persona, p.trait.text, nullptr, {"persona", task_tag}});
    for (std::size_t e = 0; e < task.evidence_texts.size(); ++e)
      bundle.push_back({fmt::format("{}:e{}", task.task_id, e), ItemRole::evidence, task.evidence_texts[e], nullptr,
                        {"evidence", task_tag}});
    for (std::size_t d = 0; d < p.distractors.size(); ++d)
      bundle.push_back({fmt::format("{}:d{}", task.task_id, d), ItemRole::distractor, p.distractors[d].text, nullptr,
                        {"noise", "distractor", task_tag}});

    const Embedding q = gw.embed_one(task.question);
    const auto predicate = stem_set(trait_predicate(p.trait.text));
    std::vector<std::size_t> picked;
    for (std::size_t s = 0; s < pool.size(); ++s) {
      std::vector<std::size_t> cands;
      for (std::size_t i = 0; i < pool_sessions.size(); ++i) {
        if (pool_source_of[i] != s || used[i]) continue;
        if (!(cosine(pool_vecs[i], q) > task.evidence_similarity)) continue;
        if (task.kind == TaskKind::supportive && !predicate.empty()) {
          const auto words = stem_set(pool_texts[i]);
          if (std::includes(words.begin(), words.end(), predicate.begin(), predicate.end())) continue;
        }
        cands.push_back(i);
      }
      Rng rng(derive_seed(cfg.seed, {100, r, s}));
      rng.shuffle(cands);
      if (cands.size() > static_cast<std::size_t>(cfg.pool_per_source)) cands.resize(static_cast<std::size_t>(cfg.pool_per_source));
      std::sort(cands.begin(), cands.end());
      for (auto i : cands) {
        bundle.push_back(pool_item(i, task, {}));
        picked.push_back(i);
      }
    }

    if (items.size() + bundle.size() > cfg.max_sessions) {
      log->add({"bundle_dropped", task.task_id, fmt::format("{} sessions", bundle.size()), std::nullopt});
      continue;
    }
    for (auto i : picked) used[i] = true;
    for (std::size_t e = 0; e < task.evidence_texts.size(); ++e)
      p_then_r.emplace_back(task.task_id + ":p", fmt::format("{}:e{}", task.task_id, e));
    for (auto& it : bundle) items.push_back(std::move(it));
    included.push_back({r, q});
  }
  if (included.empty()) throw Error(Errc::no_candidates, cfg.history_id, "no trait pipeline completed");

  // Top up with further question-relevant pool sessions when the bundles alone
  // fall short of the lower bound.
  if (items.size() < cfg.min_sessions) {
    std::vector<std::size_t> order(pool_sessions.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, {101}));
    rng.shuffle(order);
    for (auto i : order) {
      if (items.size() >= cfg.target_sessions) break;
      if (used[i]) continue;
      for (const auto& inc : included) {
        const auto& task = runs[inc.run]->task;
        if (cosine(pool_vecs[i], inc.q) > task.evidence_similarity) {
          items.push_back(pool_item(i, task, "padding"));
          used[i] = true;
          break;
        }
      }
    }
  }
  if (items.size() < cfg.min_sessions)
    throw Error(Errc::pool_too_small, cfg.history_id,
                fmt::format("{} sessions after injection, need {}", items.size(), cfg.min_sessions));

  std::vector<std::size_t> order;
  std::vector<std::string> keys;
  bool ordered = false;
  for (int attempt = 0; attempt < cfg.order_attempts && !ordered; ++attempt) {
    Rng rng(derive_seed(cfg.seed, {200, static_cast<std::uint64_t>(attempt)}));
    order.clear();
    std::vector<std::size_t> persona_items;
    for (std::size_t i = 0; i < items.size(); ++i) {
      (items[i].role == ItemRole::persona ? persona_items : order).push_back(i);
    }
    rng.shuffle(order);
    auto first_plain = std::find_if(order.begin(), order.end(),
                                    [&](std::size_t i) { return items[i].role != ItemRole::evidence; });
    if (first_plain != order.end()) std::iter_swap(order.begin(), first_plain);
    for (auto pi : persona_items) {
      const std::string prefix = items[pi].key.substr(0, items[pi].key.size() - 1) + "e";
      std::size_t first_evidence = order.size() + 1;
      for (std::size_t k = 0; k < order.size(); ++k) {
        if (items[order[k]].key.rfind(prefix, 0) == 0) {
          first_evidence = k;
          break;
        }
      }
      const std::size_t slots = first_evidence > order.size() ? order.size() + 1 : first_evidence;
      const auto at = static_cast<std::ptrdiff_t>(slots == 0 ? 0 : rng.index(slots));
      order.insert(order.begin() + at, pi);
    }
    keys.clear();
    for (auto i : order) keys.push_back(items[i].key);
    ordered = ordering_ok(keys, p_then_r);
  }
  if (!ordered) throw Error(Errc::constraint_unsatisfiable, cfg.history_id, "R* placement");

  std::vector<int> days(static_cast<std::size_t>(cfg.window_days));
  std::iota(days.begin(), days.end(), 0);
  Rng trng(derive_seed(cfg.seed, {300}));
  trng.shuffle(days);
  days.resize(items.size());
  std::sort(days.begin(), days.end());
  std::vector<Timestamp> stamps;
  for (int d : days) {
    const auto hour = 9 + static_cast<int>(trng.index(13));
    const auto minute = static_cast<int>(trng.index(60));
    stamps.push_back(cfg.window_start + std::chrono::days{d} + std::chrono::hours{hour} + std::chrono::minutes{minute});
  }

  Example ex;
  ex.history.history_id = cfg.history_id;
  ex.history.sessions.resize(items.size());
  std::unordered_map<std::string, std::string> session_of;
  for (std::size_t k = 0; k < order.size(); ++k) session_of[items[order[k]].key] = fmt::format("{}-s{:03d}", cfg.history_id, k);

  parallel_for(order.size(), gw.max_inflight(), [&](std::size_t k) {
    const auto& it = items[order[k]];
    const auto& id = session_of[it.key];
    Session s;
    if (it.pool) {
      s = *it.pool;
      s.session_id = id;
      s.timestamp = stamps[k];
    } else {
      s = expand_to_session(gw, it.text, id, stamps[k], cfg, log);
    }
    s.tags.insert(it.tags.begin(), it.tags.end());
    ex.history.sessions[k] = std::move(s);
  });

  std::set<std::string> personas;
  for (const auto& inc : included) {
    const auto& p = *runs[inc.run];
    personas.insert(persona_of(p.trait.trait_id));
    QaTask t = p.task;
    for (std::size_t e = 0; e < t.evidence_texts.size(); ++e)
      t.evidence_session_ids.push_back(session_of.at(fmt::format("{}:e{}", t.task_id, e)));
    ex.tasks.push_back(std::move(t));
  }
  for (auto& r : runs) {
    if (r) ex.pipelines.push_back(std::move(*r));
  }
  ex.history.persona_refs.assign(personas.begin(), personas.end());
  ex.history.header_extra = {{"config", to_json(cfg)}};
  validate_history(ex.history);
  ex.review_queue = log->flags("near_threshold");
  ex.audit = log->flags();
  return ex;
}

Example generate_example(Gateway& gw, const std::vector<std::string>& personas, const std::vector<PoolSource>& pool,
                         const CorpusConfig& cfg) {
  cfg.validate();
  std::vector<PersonaTrait> traits;
  for (std::size_t i = 0; i < personas.size(); ++i) {
    auto all = standardize_persona(gw, personas[i], fmt::format("{}-p{}", cfg.history_id, i));
    std::vector<PersonaTrait> chosen;
    for (auto cat : {TraitCategory::everyday, TraitCategory::career, TraitCategory::demographics}) {
      for (const auto& t : all) {
        if (t.category == cat && chosen.size() < cfg.traits_per_persona) chosen.push_back(t);
      }
    }
    traits.insert(traits.end(), chosen.begin(), chosen.end());
  }
  return assemble_example(gw, traits, pool, cfg);
}

json to_json(const QaTask& t) {
  return {{"task_id", t.task_id},
          {"trait_id", t.trait_id},
          {"kind", task_kind_name(t.kind)},
          {"question", t.question},
          {"gold_answer", t.gold_answer},
          {"evidence_session_ids", t.evidence_session_ids},
          {"yes_no", t.yes_no},
          {"trait_text", t.trait_text},
          {"evidence_texts", t.evidence_texts},
          {"distractor_texts", t.distractor_texts},
          {"evidence_similarity", t.evidence_similarity}};
}

QaTask qa_task_from_json(const json& j) {
  auto str = [&](const char* key, bool required) -> std::string {
    if (!j.contains(key)) {
      if (required) throw Error(Errc::malformed_line, key, "missing field");
      return {};
    }
    if (!j[key].is_string()) throw Error(Errc::malformed_line, key, "must be a string");
    return j[key].get<std::string>();
  };
  auto strings = [&](const char* key) {
    std::vector<std::string> out;
    if (!j.contains(key)) return out;
    if (!j[key].is_array()) throw Error(Errc::malformed_line, key, "must be an array");
    for (const auto& v : j[key]) {
      if (!v.is_string()) throw Error(Errc::malformed_line, key, "must hold strings");
      out.push_back(v.get<std::string>());
    }
    return out;
  };
  if (!j.is_object()) throw Error(Errc::malformed_line, "task", "not an object");
  QaTask t;
  t.task_id = str("task_id", true);
  t.trait_id = str("trait_id", false);
  try {
    t.kind = parse_task_kind(str("kind", true));
  } catch (const Error&) {
    throw Error(Errc::malformed_line, t.task_id, "unknown kind");
  }
  t.question = str("question", true);
  t.gold_answer = str("gold_answer", true);
  t.evidence_session_ids = strings("evidence_session_ids");
  t.yes_no = j.value("yes_no", t.kind == TaskKind::supportive);
  t.trait_text = str("trait_text", false);
  t.evidence_texts = strings("evidence_texts");
  t.distractor_texts = strings("distractor_texts");
  if (j.contains("evidence_similarity") && j["evidence_similarity"].is_number())
    t.evidence_similarity = j["evidence_similarity"].get<double>();
  return t;
}

std::string serialize_tasks(const std::vector<QaTask>& tasks) {
  std::string out;
  for (const auto& t : tasks) out += to_json(t).dump() + "\n";
  return out;
}

std::vector<QaTask> parse_tasks(std::string_view body) {
  std::vector<QaTask> out;
  std::size_t line_no = 0;
  for (const auto& line : text::split_lines(body)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::malformed_line, std::to_string(line_no), "invalid JSON");
    out.push_back(qa_task_from_json(j));
  }
  return out;
}

std::vector<QaTask> load_tasks(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(Errc::io_error, path.string(), "no such file or directory");
  return parse_tasks(read_file(path));
}

json review_queue_json(const std::vector<AuditFlag>& flags) {
  json out = json::array();
  for (const auto& f : flags) {
    json j = {{"kind", f.kind}, {"subject", f.subject}, {"detail", f.detail}};
    if (f.value) j["value"] = *f.value;
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace tacitree
