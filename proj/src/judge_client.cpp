#include "traitgeo/judge_client.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <mutex>
#include <semaphore>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "traitgeo/error.hpp"
#include "traitgeo/io.hpp"

namespace traitgeo::judge {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '\'' || c == '_';
}

std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (word_char(c)) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// config and rubrics

JudgeConfig JudgeConfig::with_environment_key(JudgeConfig base) {
  if (const char* key = std::getenv(kApiKeyEnv); key != nullptr && *key != '\0') base.api_key = key;
  return base;
}

void JudgeConfig::validate() const {
  if (max_retries < 0) throw Error(ErrorKind::InvalidParameter, "max_retries must be >= 0");
  if (max_concurrency < 1) throw Error(ErrorKind::InvalidParameter, "max_concurrency must be >= 1");
  if (!(timeout_seconds > 0.0)) throw Error(ErrorKind::InvalidParameter, "timeout must be > 0");
  if (!(initial_backoff_seconds >= 0.0)) throw Error(ErrorKind::InvalidParameter, "backoff must be >= 0");
}

std::string Rubric::render(std::string_view text) const {
  std::string out;
  std::string_view tpl = prompt_template;
  while (!tpl.empty()) {
    const auto at = tpl.find('{');
    if (at == std::string_view::npos) {
      out += tpl;
      break;
    }
    out += tpl.substr(0, at);
    tpl.remove_prefix(at);
    if (tpl.starts_with("{text}")) {
      out += text;
      tpl.remove_prefix(6);
    } else if (tpl.starts_with("{trait}")) {
      out += trait;
      tpl.remove_prefix(7);
    } else {
      out += '{';
      tpl.remove_prefix(1);
    }
  }
  return out;
}

RubricBook RubricBook::from_json(const nlohmann::json& doc) {
  RubricBook book;
  try {
    for (const auto& r : doc.at("rubrics")) {
      Rubric rubric{r.at("trait").get<std::string>(), r.at("template").get<std::string>(),
                    r.value("keywords", std::vector<std::string>{})};
      if (rubric.prompt_template.find("{text}") == std::string::npos) {
        throw Error(ErrorKind::ParseError, "rubric for '" + rubric.trait + "' has no {text} slot");
      }
      book.by_trait_[lower(rubric.trait)] = std::move(rubric);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("rubrics: ") + e.what());
  }
  return book;
}

RubricBook RubricBook::load(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  return from_json(doc);
}

const Rubric& RubricBook::for_trait(std::string_view trait) const {
  auto it = by_trait_.find(lower(trait));
  if (it == by_trait_.end()) {
    throw Error(ErrorKind::InvalidParameter, "no rubric for trait '" + std::string(trait) + "'");
  }
  return it->second;
}

std::vector<std::string> RubricBook::traits() const {
  std::vector<std::string> out;
  for (const auto& [key, r] : by_trait_) out.push_back(r.trait);
  return out;
}

// ---------------------------------------------------------------------------
// scoring primitives

double mock_judge(std::string_view text, [[maybe_unused]] std::string_view trait,
                  const Rubric& rubric) {
  const auto tokens = words(text);
  std::size_t hits = 0;
  for (const auto& keyword : rubric.keywords) {
    const auto kw = words(keyword);
    if (kw.empty() || kw.size() > tokens.size()) continue;
    for (std::size_t i = 0; i + kw.size() <= tokens.size(); ++i) {
      if (std::equal(kw.begin(), kw.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) ++hits;
    }
  }
  return std::clamp(1.0 + static_cast<double>(hits), 1.0, 5.0);
}

double parse_verdict(std::string_view reply) {
  auto is_alpha_num = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; };
  auto is_digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
  for (std::size_t i = 0; i < reply.size(); ++i) {
    if (!is_digit(reply[i])) continue;
    std::size_t start = i;
    if (start > 0 && (is_alpha_num(reply[start - 1]) || reply[start - 1] == '.')) {
      while (i < reply.size() && (is_digit(reply[i]) || reply[i] == '.')) ++i;
      continue;  // part of a word, version string or decimal tail
    }
    bool negative = false;
    if (start > 0 && reply[start - 1] == '-') {
      if (start >= 2 && is_alpha_num(reply[start - 2])) {
        while (i < reply.size() && (is_digit(reply[i]) || reply[i] == '.')) ++i;
        continue;  // hyphenated word such as "GPT-4"
      }
      negative = true;
    }
    std::size_t end = start;
    while (end < reply.size() && is_digit(reply[end])) ++end;
    if (end + 1 < reply.size() && reply[end] == '.' && is_digit(reply[end + 1])) {
      ++end;
      while (end < reply.size() && is_digit(reply[end])) ++end;
    }
    if (end < reply.size() && is_alpha_num(reply[end])) {
      i = end;
      continue;  // "4th", "5x"
    }
    double value = std::strtod(std::string(reply.substr(start, end - start)).c_str(), nullptr);
    if (negative) value = -value;
    if (value < 1.0 || value > 5.0) {
      throw Error(ErrorKind::UnparseableVerdict,
                  fmt::format("first number in the verdict is {}, outside [1, 5]", value));
    }
    return value;
  }
  throw Error(ErrorKind::UnparseableVerdict, "verdict contains no number");
}

nlohmann::json build_request(const JudgeConfig& config, const Rubric& rubric, std::string_view text) {
  return {{"model", config.model},
          {"messages",
           nlohmann::json::array(
               {{{"role", "system"},
                 {"content", "You are a strict personality rater. Reply with a single number from 1 to 5."}},
                {{"role", "user"}, {"content", rubric.render(text)}}})},
          {"temperature", 0}};
}

std::string reply_content(std::string_view body) {
  try {
    const auto doc = nlohmann::json::parse(body);
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::UnparseableVerdict, std::string("reply is not a chat completion: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// transport

Transport make_http_transport(const JudgeConfig& config) {
  const std::string endpoint = config.endpoint;
  const std::string auth = config.api_key;
  const double timeout = config.timeout_seconds;
  return [endpoint, auth, timeout](const std::string& body) -> HttpReply {
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) return {0, {}, "endpoint must start with http:// or https://"};
    const auto path_start = endpoint.find('/', scheme_end + 3);
    const std::string origin = endpoint.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : endpoint.substr(path_start);

    httplib::Client client(origin);
    if (!client.is_valid()) return {0, {}, "unsupported endpoint '" + origin + "'"};
    const auto secs = static_cast<time_t>(timeout);
    const auto usecs = static_cast<time_t>((timeout - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!auth.empty()) headers.emplace("Authorization", "Bearer " + auth);
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) return {0, {}, httplib::to_string(res.error())};
    return {res->status, res->body, {}};
  };
}

// ---------------------------------------------------------------------------
// client

struct JudgeClient::Shared {
  explicit Shared(int slots) : in_flight(slots) {}
  std::counting_semaphore<> in_flight;
  std::mutex log_mutex;
};

JudgeClient::JudgeClient(JudgeConfig config) : JudgeClient(config, make_http_transport(config)) {}

JudgeClient::JudgeClient(JudgeConfig config, Transport transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  config_.validate();
  shared_ = std::make_unique<Shared>(config_.max_concurrency);
}

JudgeClient::~JudgeClient() = default;

double JudgeClient::score_generation(std::string_view text, std::string_view trait,
                                     const Rubric& rubric) const {
  if (text.empty()) throw Error(ErrorKind::InvalidParameter, "cannot judge empty text");
  const std::string body = build_request(config_, rubric, text).dump();

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      const double delay = config_.initial_backoff_seconds * static_cast<double>(1u << std::min(attempt - 1, 16));
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    HttpReply reply;
    {
      shared_->in_flight.acquire();
      try {
        reply = transport_(body);
      } catch (...) {
        shared_->in_flight.release();
        throw;
      }
      shared_->in_flight.release();
    }
    if (reply.status == 200) {
      const double score = parse_verdict(reply_content(reply.body));
      if (config_.verdict_log) {
        const nlohmann::json line = {{"request_hash", fmt::format("{:016x}", fnv1a(body))},
                                     {"trait", trait},
                                     {"score", score},
                                     {"timestamp", utc_timestamp()}};
        std::lock_guard lock(shared_->log_mutex);
        std::ofstream log(*config_.verdict_log, std::ios::app);
        log << line.dump() << '\n';
      }
      return score;
    }
    last_error = reply.status == 0 ? reply.error : fmt::format("HTTP {}", reply.status);
    const bool transient = reply.status == 0 || reply.status == 429 || reply.status >= 500;
    if (!transient) break;
  }
  throw Error(ErrorKind::JudgeUnavailable,
              fmt::format("judge at '{}' failed: {}", config_.endpoint, last_error));
}

}  // namespace traitgeo::judge
