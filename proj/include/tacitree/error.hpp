#pragma once

#include <stdexcept>
#include <string>

namespace tacitree {

enum class Errc {
  // input
  malformed_line,
  duplicate_session_id,
  empty_session,
  bad_timestamp,
  invalid_history,
  missing_embedding,
  too_few_points,
  schema_version_mismatch,
  corrupt_node_ref,
  empty_tree,
  corrupt_report,
  empty_input,
  pool_too_small,
  io_error,
  // configuration
  invalid_config,
  template_var_missing,
  // backend / generation
  backend_unavailable,
  extraction_empty,
  unparseable_output,
  too_few_scenarios,
  no_candidates,
  question_too_long,
  unparseable_transcript,
  constraint_unsatisfiable,
};

const char* errc_name(Errc code);

// Process exit code for the CLI: 1 config, 2 input, 3 backend.
int exit_code_for(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string subject, const std::string& detail = {});

  Errc code() const noexcept { return code_; }
  const std::string& subject() const noexcept { return subject_; }

 private:
  Errc code_;
  std::string subject_;
};

}  // namespace tacitree
