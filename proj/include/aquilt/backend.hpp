#pragma once

// Text-generation backends behind one completion interface: an OpenAI-style
// chat-completions client and a deterministic mock for tests and dry runs.

#include <nlohmann/json_fwd.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aquilt/taskspec.hpp"

namespace aquilt::backend {

using taskspec::Language;
using taskspec::TaskType;

struct SamplingParams {
  double temperature = 0.7;
  double top_p = 0.95;
  int max_tokens = 1024;

  // Throws ConfigError when a field is out of range.
  void validate() const;
  bool operator==(const SamplingParams&) const = default;
};

struct Price {
  double per_input_token = 0.0;
  double per_output_token = 0.0;
};

enum class BackendKind { HttpChat, Mock };

enum class MockFault {
  None,
  Malformed,           // every attempt returns unparseable text
  MalformedThenValid,  // first attempt malformed, retries valid
  Fenced,              // valid payload inside prose and a ```json fence
  OutOfRange,          // inspection scores outside 1..5
};

MockFault parse_mock_fault(std::string_view name);
std::string_view to_string(MockFault fault);

struct BackendProfile {
  BackendKind kind = BackendKind::Mock;
  std::string endpoint;  // http-chat only, e.g. http://127.0.0.1:8000/v1
  std::string model_name = "mock";
  SamplingParams sampling;
  int max_retries = 3;
  std::chrono::milliseconds timeout{60000};
  std::chrono::milliseconds backoff_base{250};
  std::chrono::milliseconds backoff_ceiling{8000};
  std::optional<Price> price;
  std::string api_key_env;  // name of the variable holding the bearer token
  std::size_t parallelism = 4;

  // Mock only.
  std::filesystem::path fixtures;
  MockFault fault = MockFault::None;
  double fault_rate = 1.0;  // fraction of requests the fault applies to

  void validate() const;
};

// Relative fixture paths resolve against base_dir.
BackendProfile profile_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
// Never includes secrets; the API key lives only in the environment.
nlohmann::json to_json(const BackendProfile& profile);

// Delay before retry number `retry` (1-based): base * 2^(retry-1), capped.
std::chrono::milliseconds backoff_delay(const BackendProfile& profile, int retry);

// Hints carried alongside a prompt. The HTTP backend ignores them; the mock
// uses them to pick fixture bodies.
struct RequestTags {
  std::string kind;  // prompt kind, e.g. "generation"
  std::optional<TaskType> task;
  std::optional<Language> language;
};

struct CompletionRequest {
  std::string prompt;
  std::string request_id;
  RequestTags tags;
};

struct TokenUsage {
  std::uint64_t input_tokens = 0;
  std::uint64_t output_tokens = 0;
};

struct CompletionResult {
  std::string text;
  TokenUsage usage;
};

struct UsageReport {
  std::uint64_t requests = 0;
  std::uint64_t input_tokens = 0;
  std::uint64_t output_tokens = 0;
  std::uint64_t failures = 0;
  double estimated_cost = 0.0;
};

nlohmann::json to_json(const UsageReport& report);

// Whitespace-separated token count used when no server usage is available.
std::uint64_t estimate_tokens(std::string_view text);

class Backend {
 public:
  explicit Backend(BackendProfile profile);
  virtual ~Backend() = default;
  Backend(const Backend&) = delete;
  Backend& operator=(const Backend&) = delete;

  // Thread-safe. Throws PreconditionError for an empty prompt and
  // TransportError / TimeoutError / ProtocolError from the transport.
  CompletionResult complete(const CompletionRequest& request);
  CompletionResult complete(std::string_view prompt, std::string_view request_id);

  UsageReport usage_report() const;
  const BackendProfile& profile() const { return profile_; }

 protected:
  virtual CompletionResult do_complete(const CompletionRequest& request) = 0;
  void record_failure() { failures_.fetch_add(1, std::memory_order_relaxed); }

 private:
  BackendProfile profile_;
  std::atomic<std::uint64_t> requests_{0};
  std::atomic<std::uint64_t> input_tokens_{0};
  std::atomic<std::uint64_t> output_tokens_{0};
  std::atomic<std::uint64_t> failures_{0};
};

// One fixture-script row: {"match": {"task"?, "language"?, "kind"?}, "body": "..."}.
struct FixtureRow {
  std::optional<TaskType> task;
  std::optional<Language> language;
  std::optional<std::string> kind;
  std::string body;
};

std::vector<FixtureRow> load_fixtures(const std::filesystem::path& path);

// Responses are a pure function of (request_id, prompt): fixture bodies when
// a row matches the request tags, otherwise rule-generated JSON in the
// expected output schema. Retries are recognised by a `#<n>` request-id suffix.
class MockBackend final : public Backend {
 public:
  explicit MockBackend(BackendProfile profile, std::vector<FixtureRow> fixtures = {});

 protected:
  CompletionResult do_complete(const CompletionRequest& request) override;

 private:
  std::vector<FixtureRow> fixtures_;
};

class HttpChatBackend final : public Backend {
 public:
  explicit HttpChatBackend(BackendProfile profile);
  ~HttpChatBackend() override;

 protected:
  CompletionResult do_complete(const CompletionRequest& request) override;

 private:
  std::string scheme_host_port_;
  std::string base_path_;
  std::string api_key_;
};

// Loads mock fixtures from the profile when set.
std::unique_ptr<Backend> make_backend(const BackendProfile& profile);

// Attempt number encoded in a request id ("p-000001:distilled#2" -> 2).
int attempt_of(std::string_view request_id);

}  // namespace aquilt::backend
