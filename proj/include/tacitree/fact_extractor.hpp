#pragma once

#include <span>
#include <string>
#include <vector>

#include "tacitree/gateway/gateway.hpp"
#include "tacitree/memory_model.hpp"

namespace tacitree {

struct ExtractionOptions {
  // Show assistant turns to the extractor as well.
  bool include_assistant = false;
};

struct ExtractionResult {
  std::string session_id;
  std::vector<Fact> facts;
  std::size_t dropped_duplicates = 0;
};

std::string render_transcript(const Session& s, bool include_assistant);

// One fact per non-empty line; list markers are stripped and "NONE" yields
// nothing.
std::vector<std::string> parse_fact_lines(std::string_view response);

// Fact ids are "{session_id}#f{i}". Facts come back without embeddings.
ExtractionResult extract_facts(Gateway& gw, const Session& session, const ExtractionOptions& opts = {});

// Greedy first-wins scan: a fact is dropped iff its cosine to an already kept
// fact is >= tau_dup.
std::vector<Fact> dedupe_facts(std::span<const Fact> facts, double tau_dup = 0.95, std::size_t* dropped = nullptr);

void embed_facts(Gateway& gw, std::vector<Fact>& facts);

struct ExtractAllResult {
  std::vector<Fact> facts;  // embedded and deduplicated, history order
  std::size_t dropped_duplicates = 0;
  std::vector<std::string> empty_sessions;
};

// Extracts every session (concurrently, up to the gateway cap), embeds the
// facts and deduplicates them. Sessions yielding no facts are reported rather
// than failing the whole run.
ExtractAllResult extract_all(Gateway& gw, const ConversationHistory& h, double tau_dup = 0.95,
                             const ExtractionOptions& opts = {});

}  // namespace tacitree
