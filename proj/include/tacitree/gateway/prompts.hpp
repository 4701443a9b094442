#pragma once

#include <string_view>

#include "tacitree/gateway/prompt.hpp"

// The prompt library. Generation-side templates (persona, reasons, questions,
// distractors, transcripts, high-level summaries) follow the dataset recipe
// prompts word for word; the framework-side templates are this project's own.
namespace tacitree::prompts {

inline constexpr std::string_view kPersona = "persona_standardize";
inline constexpr std::string_view kOpposedReasons = "opposed_reasons";
inline constexpr std::string_view kSupportiveReasons = "supportive_reasons";
inline constexpr std::string_view kOpposedQuestion = "opposed_question";
inline constexpr std::string_view kSelectOpposed = "select_opposed";
inline constexpr std::string_view kDistractors = "distractor_scenarios";
inline constexpr std::string_view kTranscript = "session_transcript";
inline constexpr std::string_view kSummarizeHigh = "summarize_high";
inline constexpr std::string_view kSummarizeLeaf = "summarize_leaf";
inline constexpr std::string_view kExtractFacts = "extract_facts";
inline constexpr std::string_view kRelevanceBatch = "relevance_batch";
inline constexpr std::string_view kRelevanceSingle = "relevance_single";
inline constexpr std::string_view kVerifySupportive = "verify_supportive";
inline constexpr std::string_view kAnswer = "answer_question";
inline constexpr std::string_view kJudgeAnswer = "judge_answer";

const PromptTemplate& persona();
const PromptTemplate& opposed_reasons();
const PromptTemplate& supportive_reasons();
const PromptTemplate& opposed_question();
const PromptTemplate& select_opposed();
const PromptTemplate& distractors();
const PromptTemplate& transcript();
const PromptTemplate& summarize_high();
const PromptTemplate& summarize_leaf();
const PromptTemplate& extract_facts();
const PromptTemplate& relevance_batch();
const PromptTemplate& relevance_single();
const PromptTemplate& verify_supportive();
const PromptTemplate& answer();
const PromptTemplate& judge_answer();

// Appended to a prompt when the previous response could not be parsed.
inline constexpr std::string_view kReaskSuffix =
    "\n\nYour previous answer could not be parsed. Follow the requested output format exactly.";

}  // namespace tacitree::prompts
