#include "tacitree/fact_extractor.hpp"

#include <fmt/format.h>

#include <cctype>

#include "tacitree/error.hpp"
#include "tacitree/gateway/prompts.hpp"
#include "tacitree/parallel.hpp"
#include "tacitree/text.hpp"

namespace tacitree {

namespace {

std::string strip_marker(std::string s) {
  if (s.starts_with("- ") || s.starts_with("* ") || s.starts_with("• ")) return text::trim(s.substr(s.find(' ') + 1));
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i > 0 && i + 1 < s.size() && (s[i] == '.' || s[i] == ')' || s[i] == ':') && s[i + 1] == ' ')
    return text::trim(s.substr(i + 2));
  return s;
}

std::string one_line(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return out;
}

}  // namespace

std::string render_transcript(const Session& s, bool include_assistant) {
  std::string out;
  for (const auto& u : s.turns) {
    if (u.role == Speaker::assistant && !include_assistant) continue;
    out += fmt::format("{}: {}\n", speaker_name(u.role), one_line(u.text));
  }
  return out;
}

std::vector<std::string> parse_fact_lines(std::string_view response) {
  std::vector<std::string> out;
  for (const auto& line : text::split_lines(response)) {
    auto t = strip_marker(text::trim(line));
    if (t.empty() || t.starts_with("```")) continue;
    if (text::to_lower(t) == "none") continue;
    out.push_back(std::move(t));
  }
  return out;
}

ExtractionResult extract_facts(Gateway& gw, const Session& session, const ExtractionOptions& opts) {
  TemplateVars vars{{"transcript", render_transcript(session, opts.include_assistant)}};
  auto lines = parse_fact_lines(gw.chat(Role::framework_m2, prompts::extract_facts(), vars).text);
  if (lines.empty()) lines = parse_fact_lines(gw.chat(Role::framework_m2, prompts::extract_facts(), vars, prompts::kReaskSuffix).text);
  if (lines.empty()) throw Error(Errc::extraction_empty, session.session_id);

  ExtractionResult res;
  res.session_id = session.session_id;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    Fact f;
    f.fact_id = fmt::format("{}#f{}", session.session_id, i);
    f.source_session_id = session.session_id;
    f.source_timestamp = session.timestamp;
    f.token_count = gw.tokenizer().count(lines[i]);
    f.text = std::move(lines[i]);
    res.facts.push_back(std::move(f));
  }
  return res;
}

std::vector<Fact> dedupe_facts(std::span<const Fact> facts, double tau_dup, std::size_t* dropped) {
  if (!(tau_dup >= 0.0 && tau_dup <= 1.0)) throw Error(Errc::invalid_config, "tau_dup", "must lie in [0, 1]");
  for (const auto& f : facts) {
    if (!f.embedding) throw Error(Errc::missing_embedding, f.fact_id);
  }
  std::vector<Fact> kept;
  std::size_t n_dropped = 0;
  for (const auto& f : facts) {
    bool dup = false;
    for (const auto& k : kept) {
      if (cosine(*f.embedding, *k.embedding) >= tau_dup) {
        dup = true;
        break;
      }
    }
    if (dup) {
      ++n_dropped;
    } else {
      kept.push_back(f);
    }
  }
  if (dropped) *dropped = n_dropped;
  return kept;
}

void embed_facts(Gateway& gw, std::vector<Fact>& facts) {
  if (facts.empty()) return;
  std::vector<std::string> texts;
  texts.reserve(facts.size());
  for (const auto& f : facts) texts.push_back(f.text);
  auto vecs = gw.embed(texts);
  for (std::size_t i = 0; i < facts.size(); ++i) facts[i].embedding = std::move(vecs[i]);
}

ExtractAllResult extract_all(Gateway& gw, const ConversationHistory& h, double tau_dup, const ExtractionOptions& opts) {
  std::vector<std::optional<ExtractionResult>> per(h.sessions.size());
  parallel_for(h.sessions.size(), gw.max_inflight(), [&](std::size_t i) {
    try {
      per[i] = extract_facts(gw, h.sessions[i], opts);
    } catch (const Error& e) {
      if (e.code() != Errc::extraction_empty) throw;
    }
  });
  ExtractAllResult out;
  std::vector<Fact> all;
  for (std::size_t i = 0; i < per.size(); ++i) {
    if (!per[i]) {
      out.empty_sessions.push_back(h.sessions[i].session_id);
      continue;
    }
    for (auto& f : per[i]->facts) all.push_back(std::move(f));
  }
  embed_facts(gw, all);
  out.facts = dedupe_facts(all, tau_dup, &out.dropped_duplicates);
  return out;
}

}  // namespace tacitree
