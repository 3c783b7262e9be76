#pragma once

// Scoring generated text on the 1-5 trait scale, either through a
// chat-completions style HTTP endpoint or with a deterministic keyword mock.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace traitgeo::judge {

inline constexpr const char* kApiKeyEnv = "TRAITGEO_JUDGE_KEY";

struct JudgeConfig {
  std::string endpoint;  // e.g. https://api.openai.com/v1/chat/completions
  std::string model = "gpt-4o-mini";
  std::string api_key;
  double timeout_seconds = 30.0;
  int max_retries = 3;
  int max_concurrency = 4;
  double initial_backoff_seconds = 0.5;
  std::optional<std::filesystem::path> verdict_log;  // JSON lines

  /// Copy of `base` with api_key taken from TRAITGEO_JUDGE_KEY when set.
  static JudgeConfig with_environment_key(JudgeConfig base);
  /// Throws InvalidParameter on retries < 0 or concurrency < 1.
  void validate() const;
};

struct Rubric {
  std::string trait;
  std::string prompt_template;  // "{text}" is replaced by the generation
  std::vector<std::string> keywords;

  std::string render(std::string_view text) const;
};

/// Per-trait rubrics loaded from a JSON file:
/// { "rubrics": [ { "trait": "...", "template": "...", "keywords": [...] } ] }
class RubricBook {
 public:
  static RubricBook load(const std::filesystem::path& path);
  static RubricBook from_json(const nlohmann::json& doc);

  const Rubric& for_trait(std::string_view trait) const;  // throws InvalidParameter
  std::vector<std::string> traits() const;

 private:
  std::map<std::string, Rubric, std::less<>> by_trait_;
};

/// clip(1 + keyword hits, 1, 5). Hits are case-insensitive whole-word matches,
/// each occurrence counted.
double mock_judge(std::string_view text, std::string_view trait, const Rubric& rubric);

/// First standalone number in the reply; UnparseableVerdict when there is none
/// or it lies outside [1, 5].
double parse_verdict(std::string_view reply);

/// `{model, messages:[{role, content}], temperature:0}`.
nlohmann::json build_request(const JudgeConfig& config, const Rubric& rubric, std::string_view text);

struct HttpReply {
  int status = 0;           // 0 when the transport itself failed
  std::string body;
  std::string error;        // transport error description
};

/// Sends one request body and returns the reply. Must be safe to call from
/// several threads at once.
using Transport = std::function<HttpReply(const std::string& body)>;

/// cpp-httplib POST to config.endpoint with a bearer token.
Transport make_http_transport(const JudgeConfig& config);

class JudgeClient {
 public:
  explicit JudgeClient(JudgeConfig config);  // HTTP transport
  JudgeClient(JudgeConfig config, Transport transport);
  ~JudgeClient();

  JudgeClient(const JudgeClient&) = delete;
  JudgeClient& operator=(const JudgeClient&) = delete;

  /// Thread-safe. Retries transport failures, HTTP 429 and 5xx with
  /// exponential backoff; at most max_concurrency requests are in flight.
  /// Throws JudgeUnavailable or UnparseableVerdict.
  double score_generation(std::string_view text, std::string_view trait, const Rubric& rubric) const;

  const JudgeConfig& config() const noexcept { return config_; }

 private:
  struct Shared;
  JudgeConfig config_;
  Transport transport_;
  std::unique_ptr<Shared> shared_;
};

/// Extract choices[0].message.content from a chat-completions reply body.
std::string reply_content(std::string_view body);

}  // namespace traitgeo::judge
