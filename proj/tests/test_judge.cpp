#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "support.hpp"

// After Eigen: <resolv.h> (pulled in by httplib) defines a `_res` macro.
#include <httplib.h>

#include "traitgeo/io.hpp"
#include "traitgeo/judge_client.hpp"

using namespace traitgeo;
using namespace traitgeo::judge;

namespace {

Rubric openness() {
  return {"Openness", "Rate the {trait} of this text from 1 to 5:\n{text}", {"curious", "imagine", "novel ideas"}};
}

std::string completion(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

JudgeConfig fast_config() {
  JudgeConfig c;
  c.endpoint = "http://unused";
  c.initial_backoff_seconds = 0.001;
  return c;
}

}  // namespace

TEST_CASE("mock judge counts whole-word keyword hits") {
  const auto r = openness();
  CHECK(mock_judge("nothing relevant here", "Openness", r) == 1.0);
  CHECK(mock_judge("Curious minds imagine; curious again", "Openness", r) == 4.0);
  CHECK(mock_judge("curious curious curious curious imagine", "Openness", r) == 5.0);
  CHECK(mock_judge("incurious imagineering", "Openness", r) == 1.0);
  CHECK(mock_judge("Novel ideas!", "Openness", r) == 2.0);
  CHECK(mock_judge("curious", "Openness", r) == mock_judge("curious", "Openness", r));
}

TEST_CASE("verdict parsing takes the first standalone number") {
  CHECK(parse_verdict("score: 4") == 4.0);
  CHECK(parse_verdict("4") == 4.0);
  CHECK(parse_verdict("I'd say 3.5 overall.") == 3.5);
  CHECK(parse_verdict("As a GPT-4 rater: 2") == 2.0);
  CHECK_ERROR_KIND(parse_verdict("quite open-minded, honestly"), ErrorKind::UnparseableVerdict);
  CHECK_ERROR_KIND(parse_verdict("score 7"), ErrorKind::UnparseableVerdict);
  CHECK_ERROR_KIND(parse_verdict("0 out of 5"), ErrorKind::UnparseableVerdict);
}

TEST_CASE("request body") {
  const auto body = build_request(fast_config(), openness(), "I love new ideas");
  CHECK(body["model"] == "gpt-4o-mini");
  CHECK(body["temperature"] == 0);
  const std::string user = body["messages"][1]["content"];
  CHECK(user.find("I love new ideas") != std::string::npos);
  CHECK(user.find("Openness") != std::string::npos);
}

TEST_CASE("client retries transient failures then succeeds") {
  std::atomic<int> calls{0};
  Transport t = [&](const std::string&) -> HttpReply {
    const int n = calls++;
    if (n == 0) return {0, {}, "connection refused"};
    if (n == 1) return {429, "slow down", {}};
    if (n == 2) return {503, "busy", {}};
    return {200, completion("score: 4"), {}};
  };
  JudgeClient client(fast_config(), t);
  CHECK(client.score_generation("text", "Openness", openness()) == 4.0);
  CHECK(calls == 4);
}

TEST_CASE("client gives up after max_retries") {
  std::atomic<int> calls{0};
  auto cfg = fast_config();
  cfg.max_retries = 2;
  JudgeClient client(cfg, [&](const std::string&) -> HttpReply {
    ++calls;
    return {500, "oops", {}};
  });
  CHECK_ERROR_KIND(client.score_generation("text", "Openness", openness()), ErrorKind::JudgeUnavailable);
  CHECK(calls == 3);
}

TEST_CASE("client errors that are not transient") {
  std::atomic<int> calls{0};
  JudgeClient prose(fast_config(), [&](const std::string&) -> HttpReply {
    ++calls;
    return {200, completion("very open person"), {}};
  });
  CHECK_ERROR_KIND(prose.score_generation("text", "Openness", openness()), ErrorKind::UnparseableVerdict);
  CHECK(calls == 1);

  JudgeClient denied(fast_config(), [](const std::string&) -> HttpReply { return {401, "no key", {}}; });
  CHECK_ERROR_KIND(denied.score_generation("text", "Openness", openness()), ErrorKind::JudgeUnavailable);
  CHECK_ERROR_KIND(denied.score_generation("", "Openness", openness()), ErrorKind::InvalidParameter);

  auto bad = fast_config();
  bad.max_concurrency = 0;
  CHECK_ERROR_KIND(bad.validate(), ErrorKind::InvalidParameter);
  bad = fast_config();
  bad.max_retries = -1;
  CHECK_ERROR_KIND(bad.validate(), ErrorKind::InvalidParameter);
}

TEST_CASE("concurrency cap bounds in-flight requests") {
  auto cfg = fast_config();
  cfg.max_concurrency = 2;
  std::atomic<int> in_flight{0}, peak{0};
  JudgeClient client(cfg, [&](const std::string&) -> HttpReply {
    const int now = ++in_flight;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --in_flight;
    return {200, completion("3"), {}};
  });
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int i = 0; i < 8; ++i)
    threads.emplace_back([&] {
      if (client.score_generation("text", "Openness", openness()) == 3.0) ++ok;
    });
  for (auto& t : threads) t.join();
  CHECK(ok == 8);
  CHECK(peak <= 2);
  CHECK(peak >= 1);
}

TEST_CASE("verdict log records hash, score and timestamp") {
  const auto dir = testsupport::scratch_dir("judge_log");
  auto cfg = fast_config();
  cfg.verdict_log = dir / "verdicts.jsonl";
  JudgeClient client(cfg, [](const std::string&) -> HttpReply { return {200, completion("5"), {}}; });
  client.score_generation("a", "Openness", openness());
  client.score_generation("b", "Openness", openness());
  const auto lines = nonempty_lines(read_file(dir / "verdicts.jsonl"));
  REQUIRE(lines.size() == 2);
  const auto j = nlohmann::json::parse(lines[0]);
  CHECK(j["score"] == 5.0);
  CHECK(j["request_hash"].get<std::string>().size() == 16);
  CHECK(j.contains("timestamp"));
  CHECK(lines[0] != lines[1]);
}

TEST_CASE("rubric book") {
  const auto book = RubricBook::load(std::filesystem::path(TRAITGEO_SOURCE_DIR) / "data" / "rubrics.json");
  CHECK(book.traits().size() == 5);
  CHECK(book.for_trait("openness").keywords.size() >= 4);
  CHECK_ERROR_KIND(book.for_trait("Humility"), ErrorKind::InvalidParameter);
  CHECK_ERROR_KIND(RubricBook::from_json({{"rubrics", {{{"trait", "X"}, {"template", "no slot"}}}}}),
                   ErrorKind::ParseError);
}

TEST_CASE("HTTP transport against a local server") {
  httplib::Server server;
  std::string seen_auth, seen_body;
  std::mutex m;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    {
      std::lock_guard lock(m);
      seen_auth = req.get_header_value("Authorization");
      seen_body = req.body;
    }
    res.set_content(completion("Score: 2"), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv(kApiKeyEnv, "test-key", 1);
  JudgeConfig cfg;
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  cfg.timeout_seconds = 5;
  cfg = JudgeConfig::with_environment_key(cfg);
  ::unsetenv(kApiKeyEnv);
  JudgeClient client(cfg);
  CHECK(client.score_generation("hello there", "Openness", openness()) == 2.0);
  server.stop();
  worker.join();
  CHECK(seen_auth == "Bearer test-key");
  CHECK(nlohmann::json::parse(seen_body)["model"] == "gpt-4o-mini");

  // Nothing listening: transport failure, then JudgeUnavailable after retries.
  auto down = cfg;
  down.max_retries = 1;
  down.initial_backoff_seconds = 0.001;
  down.timeout_seconds = 1;
  JudgeClient offline(down);
  CHECK_ERROR_KIND(offline.score_generation("hello", "Openness", openness()), ErrorKind::JudgeUnavailable);
}
