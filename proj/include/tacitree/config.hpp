#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "tacitree/corpus.hpp"
#include "tacitree/eval.hpp"
#include "tacitree/gateway/fixtures.hpp"
#include "tacitree/gateway/gateway.hpp"
#include "tacitree/gateway/mock_backend.hpp"
#include "tacitree/memory_model.hpp"
#include "tacitree/retriever.hpp"

namespace tacitree {

struct RunPaths {
  std::filesystem::path history;
  std::filesystem::path tree;
  std::filesystem::path tasks;
  std::filesystem::path pool;
  std::filesystem::path report;
};

struct RunConfig {
  std::map<Role, BackendProfile> backends;  // every role bound (mock by default)
  MockOptions mock;
  BuildConfig build;
  RetrievalConfig retrieval;
  CorpusConfig corpus;
  EvalConfig eval;
  RunPaths paths;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> fixtures_path;
  bool record_fixtures = false;

  // Pushes `seed` into every seeded component.
  void apply_seed(std::uint64_t s);
  void force_backend(std::string_view kind);  // "mock" | "http"
  void validate() const;
};

// INI file; unknown sections or keys are an InvalidConfig error.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(std::string_view ini_text);

json to_json(const RunConfig& c);

// Owns the backends (and the fixture store, if any) behind a gateway.
struct Runtime {
  std::unique_ptr<Gateway> gateway;
  std::shared_ptr<FixtureStore> fixtures;
  std::optional<std::filesystem::path> fixtures_path;
  bool recording = false;

  // Writes recorded fixtures back to disk (no-op when replaying).
  void flush() const;
};

Runtime make_runtime(const RunConfig& c);

}  // namespace tacitree
