#include "tacitree/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace tacitree::text {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

bool is_space(unsigned char c) { return std::isspace(c) != 0; }

constexpr std::string_view kStopwords[] = {
    "a",      "about",  "above",   "after",   "again",  "against", "all",    "also",   "am",
    "an",     "and",    "any",     "are",     "as",     "at",      "be",     "been",   "before",
    "being",  "below",  "between", "both",    "but",    "by",      "can",    "could",  "did",
    "do",     "does",   "doing",   "down",    "during", "each",    "even",   "few",    "for",
    "from",   "further", "had",    "has",     "have",   "having",  "he",     "her",    "here",
    "hers",   "him",    "his",     "how",     "i",      "if",      "in",     "into",   "is",
    "it",     "its",    "just",    "me",      "more",   "most",    "much",   "must",   "my",
    "no",     "nor",    "not",     "now",     "of",     "off",     "on",     "once",   "only",
    "or",     "other",  "our",     "ours",    "out",    "over",    "own",    "same",   "she",
    "should", "so",     "some",    "such",    "than",   "that",    "the",    "their",  "them",
    "then",   "there",  "these",   "they",    "this",   "those",   "through", "to",    "too",
    "under",  "until",  "up",      "very",    "was",    "we",      "were",   "what",   "when",
    "where",  "which",  "while",   "who",     "whom",   "why",     "will",   "with",   "would",
    "you",    "your",   "yours",   "yourself", "person"};

}  // namespace

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i])))
      return false;
  }
  return true;
}

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool is_stopword(std::string_view lower_word) {
  return std::find(std::begin(kStopwords), std::end(kStopwords), lower_word) != std::end(kStopwords);
}

std::vector<std::string> content_words(std::string_view s) {
  std::vector<std::string> out;
  for (auto& w : words(s)) {
    if (w.size() >= 4 && !is_stopword(w)) out.push_back(std::move(w));
  }
  return out;
}

std::set<std::string> content_word_set(std::string_view s) {
  auto v = content_words(s);
  return {v.begin(), v.end()};
}

bool shares_content_word(std::string_view a, std::string_view b) {
  auto sa = content_word_set(a);
  if (sa.empty()) return false;
  for (const auto& w : content_words(b)) {
    if (sa.count(w)) return true;
  }
  return false;
}

std::string stem(std::string_view w) {
  std::string s(w);
  if (s.size() > 5 && s.ends_with("ies")) return s.substr(0, s.size() - 3) + "y";
  if (s.size() > 4 && (s.ends_with("sses") || s.ends_with("shes") || s.ends_with("ches") || s.ends_with("xes")))
    return s.substr(0, s.size() - 2);
  if (s.size() > 3 && s.ends_with('s') && !s.ends_with("ss")) return s.substr(0, s.size() - 1);
  return s;
}

std::vector<std::string> split_sentences(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    bool terminal = (c == '.' || c == '!' || c == '?');
    bool boundary = i + 1 == s.size() || is_space(static_cast<unsigned char>(s[i + 1]));
    if ((terminal && boundary) || c == '\n') {
      auto piece = trim(s.substr(start, i + 1 - start));
      if (!piece.empty() && piece != "." && piece != "!" && piece != "?") out.push_back(piece);
      start = i + 1;
    }
  }
  auto tail = trim(s.substr(std::min(start, s.size())));
  if (!tail.empty()) out.push_back(tail);
  return out;
}

std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) nl = s.size();
    auto line = s.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.emplace_back(line);
    start = nl + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

static std::string collapse(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char ch : trim(s)) {
    auto c = static_cast<unsigned char>(ch);
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

double normalized_edit_similarity(std::string_view a_raw, std::string_view b_raw) {
  const std::string a = collapse(a_raw), b = collapse(b_raw);
  const std::size_t n = a.size(), m = b.size();
  if (n == 0 && m == 0) return 1.0;
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return 1.0 - static_cast<double>(prev[m]) / static_cast<double>(std::max(n, m));
}

std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
    v >>= 4;
  }
  return out;
}

std::size_t word_count(std::string_view s) {
  std::size_t n = 0;
  bool in_word = false;
  for (char ch : s) {
    bool sp = is_space(static_cast<unsigned char>(ch));
    if (!sp && !in_word) ++n;
    in_word = !sp;
  }
  return n;
}

}  // namespace tacitree::text
