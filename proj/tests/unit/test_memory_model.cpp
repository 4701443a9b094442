#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "tacitree/error.hpp"
#include "tacitree/memory_model.hpp"

using namespace tacitree;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::io_error;
}

const char* kHistory =
    R"({"history_id":"h1","persona_refs":["p0"],"config":{"seed":3}}
{"session_id":"b","timestamp":"2024-02-01T10:00:00","turns":[{"role":"user","text":"I moved to Lisbon."},{"role":"assistant","text":"Nice."}]}
{"session_id":"a","timestamp":"2024-01-01T09:30:00","tags":["x"],"turns":[{"role":"user","text":"I adopted a cat."}]}
)";

}  // namespace

TEST_CASE("timestamps round-trip and reject malformed input") {
  auto t = parse_timestamp("2024-03-05T07:08:09");
  REQUIRE(t);
  CHECK(format_timestamp(*t) == "2024-03-05T07:08:09");
  CHECK_FALSE(parse_timestamp("2024-13-01T00:00:00"));
  CHECK_FALSE(parse_timestamp("yesterday"));
  CHECK_FALSE(parse_timestamp("2024-03-05"));
  CHECK(parse_timestamp("2024-03-05T07:08:09Z") == t);
}

TEST_CASE("history parses, sorts sessions and keeps header extras") {
  auto h = parse_history_text(kHistory);
  CHECK(h.history_id == "h1");
  REQUIRE(h.sessions.size() == 2);
  CHECK(h.sessions[0].session_id == "a");
  CHECK(h.sessions[0].tags == std::set<std::string>{"x"});
  CHECK(h.persona_refs == std::vector<std::string>{"p0"});
  CHECK(h.header_extra["config"]["seed"] == 3);
  CHECK(h.find_session("b") != nullptr);
  CHECK(h.find_session("zzz") == nullptr);
  validate_history(h);
}

TEST_CASE("serialize/parse is a structural identity") {
  auto h = parse_history_text(kHistory);
  const auto bytes = serialize_history(h);
  auto again = parse_history_text(bytes);
  CHECK(again == h);
  CHECK(serialize_history(again) == bytes);
}

TEST_CASE("malformed histories raise typed errors") {
  CHECK(code_of([] { parse_history_text("{not json"); }) == Errc::malformed_line);
  CHECK(code_of([] {
          parse_history_text(R"({"session_id":"a","timestamp":"2024-01-01T00:00:00","turns":[]})");
        }) == Errc::empty_session);
  CHECK(code_of([] {
          parse_history_text(R"({"session_id":"a","timestamp":"noon","turns":[{"role":"user","text":"x"}]})");
        }) == Errc::bad_timestamp);
  CHECK(code_of([] {
          parse_history_text(
              R"({"session_id":"a","timestamp":"2024-01-01T00:00:00","turns":[{"role":"user","text":"x"}]}
{"session_id":"a","timestamp":"2024-01-02T00:00:00","turns":[{"role":"user","text":"y"}]})");
        }) == Errc::duplicate_session_id);
  CHECK(code_of([] {
          parse_history_text(
              R"({"session_id":"a","timestamp":"2024-01-01T00:00:00","turns":[{"role":"robot","text":"x"}]})");
        }) == Errc::malformed_line);
  CHECK(code_of([] {
          parse_history_text(
              R"({"session_id":"a","timestamp":"2024-01-01T00:00:00","turns":[{"role":"assistant","text":"x"}]})");
        }) == Errc::malformed_line);
}

TEST_CASE("stats count sessions, turns and tokens") {
  auto h = parse_history_text(kHistory);
  auto st = history_stats(h);
  CHECK(st.session_count == 2);
  CHECK(st.turn_count == 3);
  const std::size_t expected = count_tokens("I moved to Lisbon.") + count_tokens("Nice.") + count_tokens("I adopted a cat.");
  CHECK(st.total_tokens == expected);
}

TEST_CASE("fact provenance must resolve to a session") {
  auto h = parse_history_text(kHistory);
  Fact f;
  f.fact_id = "a#f0";
  f.source_session_id = "a";
  f.text = "The user adopted a cat.";
  std::vector<Fact> ok{f};
  check_fact_provenance(h, ok);
  f.source_session_id = "missing";
  std::vector<Fact> bad{f};
  CHECK(code_of([&] { check_fact_provenance(h, bad); }) == Errc::invalid_history);
}

TEST_CASE("facts and build configs round-trip through json") {
  Fact f;
  f.fact_id = "a#f1";
  f.source_session_id = "a";
  f.source_timestamp = *parse_timestamp("2024-01-01T09:30:00");
  f.text = "The user likes tea.";
  f.token_count = 5;
  f.embedding = Embedding::Ones(4) * 0.5;
  CHECK(fact_from_json(to_json(f)) == f);

  BuildConfig c;
  c.k = 7;
  c.root_size = 11;
  c.reducer = ReducerKind::pca;
  c.level_sizing = LevelSizing::hard_cap;
  c.seed = 99;
  CHECK(build_config_from_json(to_json(c)) == c);
}

TEST_CASE("build config validation") {
  BuildConfig c;
  c.validate();
  c.k = 1;
  CHECK(code_of([&] { c.validate(); }) == Errc::invalid_config);
  c = {};
  c.root_size = 0;
  CHECK(code_of([&] { c.validate(); }) == Errc::invalid_config);
  c = {};
  c.beta = 1.5;
  CHECK(code_of([&] { c.validate(); }) == Errc::invalid_config);
}

TEST_CASE("a directory loads as the concatenation of its jsonl files") {
  const auto dir = std::filesystem::temp_directory_path() / "tacitree_mm_dir";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "1.jsonl")
      << R"({"session_id":"s2","timestamp":"2024-01-02T00:00:00","turns":[{"role":"user","text":"two"}]})" << "\n";
  std::ofstream(dir / "0.jsonl")
      << R"({"session_id":"s1","timestamp":"2024-01-01T00:00:00","turns":[{"role":"user","text":"one"}]})" << "\n";
  auto h = load_history(dir);
  REQUIRE(h.sessions.size() == 2);
  CHECK(h.sessions[0].session_id == "s1");
  std::filesystem::remove_all(dir);
  CHECK(code_of([&] { load_history(dir / "nope.jsonl"); }) == Errc::io_error);
}

TEST_CASE("error categories map to exit codes") {
  CHECK(exit_code_for(Errc::invalid_config) == 1);
  CHECK(exit_code_for(Errc::malformed_line) == 2);
  CHECK(exit_code_for(Errc::corrupt_report) == 2);
  CHECK(exit_code_for(Errc::backend_unavailable) == 3);
  CHECK(std::string(errc_name(Errc::corrupt_report)) == "CorruptReport");
}
