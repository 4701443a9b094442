#include "tacitree/gateway/prompt.hpp"

#include <cctype>

#include "tacitree/error.hpp"

namespace tacitree {

namespace {

bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Calls on_literal(text) / on_var(name) while walking the body.
template <typename Literal, typename Var>
void scan(std::string_view body, Literal&& on_literal, Var&& on_var) {
  std::size_t i = 0;
  while (i < body.size()) {
    char c = body[i];
    if (c == '{' && i + 1 < body.size() && body[i + 1] == '{') {
      on_literal(std::string_view("{"));
      i += 2;
      continue;
    }
    if (c == '}' && i + 1 < body.size() && body[i + 1] == '}') {
      on_literal(std::string_view("}"));
      i += 2;
      continue;
    }
    if (c == '{') {
      std::size_t j = i + 1;
      while (j < body.size() && is_ident_char(body[j])) ++j;
      if (j > i + 1 && j < body.size() && body[j] == '}') {
        on_var(body.substr(i + 1, j - i - 1));
        i = j + 1;
        continue;
      }
    }
    on_literal(body.substr(i, 1));
    ++i;
  }
}

}  // namespace

PromptTemplate::PromptTemplate(std::string id, std::string body) : id_(std::move(id)), body_(std::move(body)) {
  scan(body_, [](std::string_view) {}, [this](std::string_view name) { required_.emplace(name); });
}

std::string PromptTemplate::render(const TemplateVars& vars) const {
  for (const auto& name : required_) {
    if (vars.find(name) == vars.end()) throw Error(Errc::template_var_missing, name, "template " + id_);
  }
  std::string out;
  out.reserve(body_.size());
  scan(
      body_, [&](std::string_view lit) { out += lit; },
      [&](std::string_view name) { out += vars.find(name)->second; });
  return out;
}

}  // namespace tacitree
