// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "regioncap/geometry.hpp"
#include "regioncap/image.hpp"

namespace regioncap::judge {

/// Fixed evaluator instructions sent ahead of every request.
std::string_view judge_instructions();

struct JudgeRequest {
  std::string id;
  std::string image_path;
  /// PNG of the image with the region overlaid; sent as the attachment.
  std::vector<std::uint8_t> image_png;
  std::string predicted;
  std::string reference;
  std::string attribute;
};

/// Throws ConfigError when a text field is empty or no image is referenced.
void validate(const JudgeRequest& req);

/// Instructions followed by the attribute, prediction and reference.
std::string build_judge_prompt(const JudgeRequest& req);

/// Original image with the mask blended in red at 50% opacity, as PNG.
std::vector<std::uint8_t> render_judge_image(const Image& img, const geometry::BinaryMask& mask);

enum class Decision { yes, no };
std::string to_string(Decision d);

/// Case-insensitive leading "yes"/"no", ignoring surrounding whitespace and
/// punctuation. Throws UnparseableVerdictError otherwise.
Decision parse_verdict(std::string_view response);

struct ChatRequest {
  std::size_t index = 0;
  std::string prompt;
  const std::vector<std::uint8_t>* image_png = nullptr;
};

/// Chat-completion transport. send() may be called from several threads
/// and throws TransportError on failures worth retrying.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string send(const ChatRequest& request) = 0;
};

struct EndpointConfig {
  std::string url;  // scheme://host[:port]/path
  std::string model;
  std::string api_key_env = "JUDGE_API_KEY";
  int timeout_seconds = 60;
};

/// OpenAI-style JSON chat API over HTTPS; the image travels as a base64
/// data URI. The bearer token comes from the environment variable named in
/// the config.
class HttpsChatClient : public ChatClient {
 public:
  explicit HttpsChatClient(EndpointConfig cfg);
  std::string send(const ChatRequest& request) override;

  /// Request body, exposed for tests.
  static nlohmann::json payload(const std::string& model, const ChatRequest& request);

 private:
  EndpointConfig cfg_;
  std::string scheme_host_;
  std::string path_;
  std::string api_key_;
};

/// In-process client replaying a script. Reply k of request i is
/// script[i][k] (the last entry repeats); the literal "<error>" raises a
/// TransportError. Requests without a script get `fallback`.
class MockChatClient : public ChatClient {
 public:
  static constexpr std::string_view kError = "<error>";

  MockChatClient(std::map<std::size_t, std::vector<std::string>> script, std::string fallback = "Yes",
                 std::chrono::milliseconds latency = std::chrono::milliseconds(0));

  std::string send(const ChatRequest& request) override;

  std::size_t max_in_flight() const { return max_in_flight_.load(); }
  std::size_t calls() const { return calls_.load(); }
  std::vector<std::string> prompts() const;

 private:
  std::map<std::size_t, std::vector<std::string>> script_;
  std::string fallback_;
  std::chrono::milliseconds latency_;
  mutable std::mutex mu_;
  std::map<std::size_t, std::size_t> attempts_;
  std::vector<std::string> prompts_;
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> max_in_flight_{0};
  std::atomic<std::size_t> calls_{0};
};

enum class VerdictStatus { parsed, unparseable, transport_error };

struct Verdict {
  std::string id;
  std::optional<Decision> decision;
  std::string raw;
  VerdictStatus status = VerdictStatus::parsed;
  std::size_t retries = 0;
  std::string error;
};

nlohmann::json verdict_to_json(const Verdict& v);

struct JudgeOptions {
  std::size_t concurrency = 4;
  std::size_t retries = 3;
  std::chrono::milliseconds backoff{0};  // doubled after each failed attempt
};

struct JudgeSummary {
  std::vector<Verdict> verdicts;  // in request order
  std::size_t yes = 0;
  std::size_t no = 0;
  std::size_t unparsed = 0;
  std::size_t failed = 0;
  /// yes / (yes + no); empty when nothing parsed.
  std::optional<double> accuracy;
};

nlohmann::json summary_to_json(const JudgeSummary& s);

/// At most `concurrency` requests are in flight. Transport errors are
/// retried up to `retries` times; the last error is kept on the verdict.
JudgeSummary judge_run(const std::vector<JudgeRequest>& requests, ChatClient& client,
                       const JudgeOptions& options = {});

}  // namespace regioncap::judge
