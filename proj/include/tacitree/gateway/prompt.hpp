#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>

namespace tacitree {

using TemplateVars = std::map<std::string, std::string, std::less<>>;

// A prompt body with named `{placeholders}`. Doubled braces `{{` / `}}` are
// literal braces. Required variables are derived from the body.
class PromptTemplate {
 public:
  PromptTemplate(std::string id, std::string body);

  const std::string& id() const { return id_; }
  const std::string& body() const { return body_; }
  const std::set<std::string>& required_vars() const { return required_; }

  // Throws Error(template_var_missing, name) for the first unbound variable.
  std::string render(const TemplateVars& vars) const;

 private:
  std::string id_;
  std::string body_;
  std::set<std::string> required_;
};

}  // namespace tacitree
