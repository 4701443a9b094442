#include "tacitree/gateway/mock_backend.hpp"

#include <fmt/format.h>

#include <array>
#include <charconv>

#include "tacitree/gateway/prompts.hpp"
#include "tacitree/rng.hpp"
#include "tacitree/text.hpp"

namespace tacitree {

namespace {

constexpr std::array<std::string_view, 12> kFillerSyllables = {"ba", "de", "fi", "go", "lu", "ma",
                                                               "ne", "pi", "ro", "su", "ta", "ve"};
constexpr std::array<std::string_view, 10> kScenarioSyllables = {"zax", "kyo", "qua", "wix", "jyk",
                                                                 "zem", "xol", "kwa", "yuz", "jox"};

template <std::size_t N>
std::string three_syllables(const std::array<std::string_view, N>& syl, std::uint64_t h) {
  std::string w;
  for (int i = 0; i < 3; ++i) {
    w += syl[h % N];
    h /= N;
  }
  return w;
}

std::string var(const ChatRequest& req, std::string_view name) {
  auto it = req.vars.find(name);
  return it == req.vars.end() ? std::string() : it->second;
}

// Mixes the rendered prompt (so re-asks and regeneration rounds differ) with
// the backend seed.
std::uint64_t prompt_hash(const ChatRequest& req, std::uint64_t seed) {
  return splitmix64(text::fnv1a64(req.prompt) ^ splitmix64(seed));
}

std::string filler_sentence(std::uint64_t h) {
  auto w = [&](int j) { return mock_filler_word(splitmix64(h + static_cast<std::uint64_t>(j))); };
  switch (h % 3) {
    case 0: return fmt::format("We {} the {} {} at {}.", w(0), w(1), w(2), w(3));
    case 1: return fmt::format("My {} {} is {} for {}.", w(0), w(1), w(2), w(3));
    default: return fmt::format("It was {} and {} by the {} {}.", w(0), w(1), w(2), w(3));
  }
}

std::string scenario_sentence(std::uint64_t h) {
  auto w = [&](int j) { return mock_scenario_word(splitmix64(h + static_cast<std::uint64_t>(j))); };
  switch (h % 4) {
    case 0: return fmt::format("My {} {} got {} by the {} {}.", w(0), w(1), w(2), w(3), w(4));
    case 1: return fmt::format("I had to {} the {} {} for {} {}.", w(0), w(1), w(2), w(3), w(4));
    case 2: return fmt::format("Our {} {} is too {} to {} the {}.", w(0), w(1), w(2), w(3), w(4));
    default: return fmt::format("The {} at my {} {} has {} all {}.", w(0), w(1), w(2), w(3), w(4));
  }
}

std::string summarize(const ChatRequest& req, std::size_t cap) {
  std::vector<std::string> parts;
  for (const auto& line : text::split_lines(var(req, "text"))) {
    std::string t = text::trim(line);
    if (t.starts_with("SUM:")) t = text::trim(std::string_view(t).substr(4));
    if (!t.empty()) parts.push_back(std::move(t));
  }
  std::string out = "SUM:" + text::join(parts, " ");
  if (cap > 0 && out.size() > cap) {
    std::size_t n = cap;
    while (n > 0 && (static_cast<unsigned char>(out[n]) & 0xC0) == 0x80) --n;
    out.resize(n);
  }
  return out;
}

// "[i] text" lines; returns (index, text) pairs.
std::vector<std::pair<int, std::string>> numbered_candidates(std::string_view block) {
  std::vector<std::pair<int, std::string>> out;
  for (const auto& line : text::split_lines(block)) {
    if (line.size() < 3 || line[0] != '[') continue;
    auto close = line.find(']');
    if (close == std::string::npos) continue;
    int idx = 0;
    auto [p, ec] = std::from_chars(line.data() + 1, line.data() + close, idx);
    if (ec != std::errc() || p != line.data() + close) continue;
    out.emplace_back(idx, line.substr(close + 1));
  }
  return out;
}

std::string relevance_batch(const ChatRequest& req) {
  const std::string query = var(req, "query");
  std::vector<std::string> hits;
  for (const auto& [idx, cand] : numbered_candidates(var(req, "candidates"))) {
    if (text::shares_content_word(query, cand)) hits.push_back(std::to_string(idx));
  }
  return hits.empty() ? "NONE" : text::join(hits, ", ");
}

std::string extract(const ChatRequest& req) {
  std::vector<std::string> facts;
  for (const auto& line : text::split_lines(var(req, "transcript"))) {
    if (!line.starts_with("user:")) continue;
    for (auto& s : text::split_sentences(std::string_view(line).substr(5))) facts.push_back(std::move(s));
  }
  return facts.empty() ? "NONE" : text::join(facts, "\n");
}

std::string persona(const ChatRequest& req) {
  std::vector<std::string> kept;
  for (auto& w : text::words(var(req, "persona"))) {
    if (!text::is_stopword(w)) kept.push_back(std::move(w));
  }
  if (kept.empty()) kept.push_back("company");
  return fmt::format(
      "```json\n{{\n    \"demographics\": {{}},\n    \"everyday_life_and_hobbies\": [\n"
      "        \"This person enjoys {}.\"\n    ]\n}}\n```",
      text::join(kept, " "));
}

std::string reasons(std::uint64_t h) {
  std::string out;
  for (int i = 1; i <= 20; ++i) {
    out += fmt::format("{}: {}\n", i, scenario_sentence(splitmix64(h + static_cast<std::uint64_t>(i) * 7919)));
  }
  return out;
}

std::string opposed_question(const ChatRequest& req, std::uint64_t h) {
  std::vector<std::string> kws;
  auto trait = text::content_words(var(req, "per_info"));
  // The first content word is the trait's verb ("enjoys", "works").
  for (std::size_t i = trait.size() > 1 ? 1 : 0; i < trait.size(); ++i) {
    if (std::find(kws.begin(), kws.end(), trait[i]) == kws.end() && kws.size() < 4) kws.push_back(trait[i]);
  }
  auto reason_words = text::content_words(var(req, "reason_info"));
  std::string anchor = reason_words.empty() ? "plans" : reason_words[h % reason_words.size()];
  return fmt::format("What {} can I try for my {} now?", text::join(kws, " "), anchor);
}

std::string select_opposed(const ChatRequest& req, std::uint64_t h) {
  std::vector<std::string> cands;
  for (const auto& line : text::split_lines(var(req, "str_reason"))) {
    auto colon = line.find(": ");
    if (colon == std::string::npos || colon == 0) continue;
    std::string_view head(line.data(), colon);
    if (head.find_first_not_of("0123456789") != std::string_view::npos) continue;
    cands.push_back(text::trim(std::string_view(line).substr(colon + 2)));
  }
  if (cands.empty()) return "none of these";
  return cands[h % cands.size()];
}

std::string distractors(const ChatRequest& req, std::uint64_t h) {
  auto trait_words = text::content_word_set(var(req, "persona"));
  std::vector<std::string> kws;
  for (auto& w : text::content_words(var(req, "question"))) {
    if (trait_words.count(w) && std::find(kws.begin(), kws.end(), w) == kws.end()) kws.push_back(std::move(w));
  }
  if (kws.empty()) kws.assign(trait_words.begin(), trait_words.end());
  if (kws.empty()) kws.push_back("things");
  std::string out;
  for (std::size_t i = 0; i < 5; ++i) {
    auto hi = splitmix64(h + i);
    const auto& a = kws[i % kws.size()];
    const auto& b = kws[(i + 1) % kws.size()];
    out += fmt::format("{}. I {} my {} and {} with {}.\n", i + 1, mock_scenario_word(hi), a, b,
                       mock_scenario_word(splitmix64(hi)));
  }
  return out;
}

std::string transcript(const ChatRequest& req, std::uint64_t h) {
  const std::string scenario = text::trim(var(req, "scenario"));
  auto cw = text::content_words(scenario);
  std::string echo;
  if (!cw.empty()) {
    cw.resize((cw.size() + 1) / 2);
    echo = fmt::format("I say it again, {}.", text::join(cw, " "));
  }
  std::string out;
  for (int t = 0; t < 12; ++t) {
    auto ht = splitmix64(h + static_cast<std::uint64_t>(t) * 104729);
    const bool user = t % 2 == 0;
    std::string line;
    if (t == 6) {
      line = scenario;
    } else if (t == 8 && !echo.empty()) {
      line = echo;
    } else {
      line = filler_sentence(ht);
    }
    out += fmt::format("{}: {}\n", user ? "Speaker1" : "Assistant", line);
    if (!user) out += '\n';
  }
  return out;
}

std::string verify(const ChatRequest& req, std::uint64_t seed) {
  auto h = splitmix64(text::fnv1a64(var(req, "per_info") + "|" + var(req, "scenario")) ^ splitmix64(seed));
  switch (h % 5) {
    case 0: return "uncertain";
    case 1: return "no";
    default: return "yes";
  }
}

std::string answer(const ChatRequest& req) {
  const std::string question = var(req, "question");
  std::vector<std::string> used;
  for (const auto& line : text::split_lines(var(req, "context"))) {
    auto t = text::trim(line);
    if (!t.empty() && text::shares_content_word(question, t)) used.push_back(std::move(t));
  }
  if (used.empty()) return "I don't have enough information.";
  return text::join(used, " ");
}

}  // namespace

std::string mock_filler_word(std::uint64_t h) { return three_syllables(kFillerSyllables, h); }
std::string mock_scenario_word(std::uint64_t h) { return three_syllables(kScenarioSyllables, h); }

Embedding mock_embedding(std::string_view s, int dim) {
  Embedding v = Embedding::Zero(dim);
  bool any = false;
  for (const auto& w : text::words(s)) {
    if (text::is_stopword(w)) continue;
    any = true;
    auto h = text::fnv1a64(w);
    v[static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim))] += (h >> 63) ? -1.0 : 1.0;
  }
  if (!any) {
    auto h = text::fnv1a64("<empty>");
    v[static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim))] = 1.0;
  }
  const double n = v.norm();
  if (n > 0.0) v /= n;
  return v;
}

std::vector<Embedding> MockBackend::embed(std::span<const std::string> texts) {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(mock_embedding(t, opts_.embed_dim));
  return out;
}

std::string MockBackend::complete(const ChatRequest& req) {
  namespace p = prompts;
  const auto id = req.template_id;
  const auto h = prompt_hash(req, opts_.seed);
  if (id == p::kSummarizeLeaf || id == p::kSummarizeHigh) return summarize(req, opts_.summary_cap_bytes);
  if (id == p::kRelevanceBatch) return relevance_batch(req);
  if (id == p::kRelevanceSingle)
    return text::shares_content_word(var(req, "query"), var(req, "candidate")) ? "YES" : "NO";
  if (id == p::kExtractFacts) return extract(req);
  if (id == p::kPersona) return persona(req);
  if (id == p::kOpposedReasons || id == p::kSupportiveReasons) return reasons(h);
  if (id == p::kOpposedQuestion) return opposed_question(req, h);
  if (id == p::kSelectOpposed) return select_opposed(req, h);
  if (id == p::kDistractors) return distractors(req, h);
  if (id == p::kTranscript) return transcript(req, h);
  if (id == p::kVerifySupportive) return verify(req, opts_.seed);
  if (id == p::kAnswer) return answer(req);
  if (id == p::kJudgeAnswer)
    return text::shares_content_word(var(req, "predicted"), var(req, "gold")) ? "YES" : "NO";
  return "MOCK:" + text::hex64(h);
}

}  // namespace tacitree
