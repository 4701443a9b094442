#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

// Small lexical helpers shared by the mock backend, the corpus filters and
// the response parsers.
namespace tacitree::text {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);

// Case-folded alphanumeric tokens. Bytes >= 0x80 count as word characters so
// UTF-8 words stay intact.
std::vector<std::string> words(std::string_view s);

bool is_stopword(std::string_view lower_word);

// Words of length >= 4 that are not function words. This is the unit the
// mock relevance judge matches on.
std::vector<std::string> content_words(std::string_view s);
std::set<std::string> content_word_set(std::string_view s);
bool shares_content_word(std::string_view a, std::string_view b);

// Crude plural/third-person stripping for lexical overlap checks.
std::string stem(std::string_view lower_word);

std::vector<std::string> split_sentences(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// 1 - levenshtein / max_len over case-folded, whitespace-collapsed strings.
double normalized_edit_similarity(std::string_view a, std::string_view b);

std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

std::size_t word_count(std::string_view s);

}  // namespace tacitree::text
