#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>

namespace tacitree {

// ceil(byte_length / 4)
std::size_t count_tokens(std::string_view text);

// Token counter used for all accounting. Defaults to the byte approximation;
// a backend-exact counter can be plugged in and then takes precedence.
class Tokenizer {
 public:
  using CountFn = std::function<std::size_t(std::string_view)>;

  Tokenizer() = default;
  Tokenizer(std::string name, CountFn fn) : name_(std::move(name)), fn_(std::move(fn)) {}

  std::size_t count(std::string_view text) const { return fn_ ? fn_(text) : count_tokens(text); }
  const std::string& name() const { return name_; }

 private:
  std::string name_ = "approx_bytes_div_4";
  CountFn fn_;
};

inline std::size_t count_tokens(std::string_view text) { return (text.size() + 3) / 4; }

}  // namespace tacitree
