#include "tacitree/error.hpp"

namespace tacitree {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::malformed_line: return "MalformedLine";
    case Errc::duplicate_session_id: return "DuplicateSessionId";
    case Errc::empty_session: return "EmptySession";
    case Errc::bad_timestamp: return "BadTimestamp";
    case Errc::invalid_history: return "InvalidHistory";
    case Errc::missing_embedding: return "MissingEmbedding";
    case Errc::too_few_points: return "TooFewPoints";
    case Errc::schema_version_mismatch: return "SchemaVersionMismatch";
    case Errc::corrupt_node_ref: return "CorruptNodeRef";
    case Errc::empty_tree: return "EmptyTree";
    case Errc::corrupt_report: return "CorruptReport";
    case Errc::empty_input: return "EmptyInput";
    case Errc::pool_too_small: return "PoolTooSmall";
    case Errc::io_error: return "IoError";
    case Errc::invalid_config: return "InvalidConfig";
    case Errc::template_var_missing: return "TemplateVarMissing";
    case Errc::backend_unavailable: return "BackendUnavailable";
    case Errc::extraction_empty: return "ExtractionEmpty";
    case Errc::unparseable_output: return "UnparseableOutput";
    case Errc::too_few_scenarios: return "TooFewScenarios";
    case Errc::no_candidates: return "NoCandidates";
    case Errc::question_too_long: return "QuestionTooLong";
    case Errc::unparseable_transcript: return "UnparseableTranscript";
    case Errc::constraint_unsatisfiable: return "ConstraintUnsatisfiable";
  }
  return "Unknown";
}

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::invalid_config:
    case Errc::template_var_missing:
      return 1;
    case Errc::backend_unavailable:
    case Errc::extraction_empty:
    case Errc::unparseable_output:
    case Errc::too_few_scenarios:
    case Errc::no_candidates:
    case Errc::question_too_long:
    case Errc::unparseable_transcript:
    case Errc::constraint_unsatisfiable:
      return 3;
    default:
      return 2;
  }
}

static std::string compose(Errc code, const std::string& subject, const std::string& detail) {
  std::string msg = errc_name(code);
  if (!subject.empty()) msg += "(" + subject + ")";
  if (!detail.empty()) msg += ": " + detail;
  return msg;
}

Error::Error(Errc code, std::string subject, const std::string& detail)
    : std::runtime_error(compose(code, subject, detail)), code_(code), subject_(std::move(subject)) {}

}  // namespace tacitree
