// Copyright 2026 The regioncap Authors
// SPDX-License-Identifier: Apache-2.0

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "regioncap/judge.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "regioncap/errors.hpp"

namespace regioncap::judge {

using nlohmann::json;

namespace {

constexpr std::string_view kInstructions =
    "Evaluator Instructions:\n"
    "You are an evaluator tasked with assessing the reasonableness of a model-generated caption "
    "for a specific attribute in a masked region of an image.\n"
    "\n"
    "You will be provided with:\n"
    "An image with a masked region (region of interest).\n"
    "A model-predicted caption.\n"
    "A reference description.\n"
    "\n"
    "Important Notes:\n"
    "The model's prediction does not need to exactly match the reference; it is acceptable as "
    "long as it reasonably describes the region and the attribute.\n"
    "The reference description serves as a suggestion or one possible answer, not an exact "
    "target.\n"
    "This is an open-ended generation task.\n"
    "Example: If the attribute relates to a person's age, and the prediction is \"40-50 years "
    "old\" while the reference is \"45-50 years old,\" the prediction is considered reasonable.\n"
    "\n"
    "Your Task:\n"
    "Determine if the caption accurately and reasonably describes the expected attribute of the "
    "region of interest.\n"
    "Provide a binary answer (\"Yes\" or \"No\") based solely on whether the attribute "
    "description is reasonable.\n"
    "Please return \"Yes\" or \"No\" only, without any additional information.\n"
    "Please carefully examine all compositional details within the mask region!!\n";

std::string base64(const std::vector<std::uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

}  // namespace

std::string_view judge_instructions() { return kInstructions; }

void validate(const JudgeRequest& req) {
  if (req.predicted.empty()) throw ConfigError("judge request '" + req.id + "' has an empty prediction");
  if (req.reference.empty()) throw ConfigError("judge request '" + req.id + "' has an empty reference");
  if (req.attribute.empty()) throw ConfigError("judge request '" + req.id + "' has no attribute");
  if (req.image_path.empty() && req.image_png.empty()) {
    throw ConfigError("judge request '" + req.id + "' references no image");
  }
}

std::string build_judge_prompt(const JudgeRequest& req) {
  std::string out(kInstructions);
  out += "\nAttribute: " + req.attribute + "\n";
  out += "Model-predicted caption: " + req.predicted + "\n";
  out += "Reference description: " + req.reference + "\n";
  return out;
}

std::vector<std::uint8_t> render_judge_image(const Image& img, const geometry::BinaryMask& mask) {
  const geometry::BinaryMask m = mask.height() == img.height && mask.width() == img.width
                                     ? mask
                                     : geometry::resize_mask(mask, img.height, img.width);
  return encode_png(overlay_mask(img, m));
}

std::string to_string(Decision d) { return d == Decision::yes ? "Yes" : "No"; }

Decision parse_verdict(std::string_view response) {
  std::size_t i = 0;
  auto skippable = [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return std::isspace(u) || std::ispunct(u);
  };
  while (i < response.size() && skippable(response[i])) ++i;
  std::size_t end = i;
  while (end < response.size() && std::isalpha(static_cast<unsigned char>(response[end]))) ++end;
  std::string word(response.substr(i, end - i));
  for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (word == "yes") return Decision::yes;
  if (word == "no") return Decision::no;
  throw UnparseableVerdictError("no Yes/No verdict in response: '" + std::string(response.substr(0, 80)) + "'");
}

HttpsChatClient::HttpsChatClient(EndpointConfig cfg) : cfg_(std::move(cfg)) {
  const auto scheme = cfg_.url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint url needs a scheme: " + cfg_.url);
  const auto path = cfg_.url.find('/', scheme + 3);
  scheme_host_ = cfg_.url.substr(0, path);
  path_ = path == std::string::npos ? "/" : cfg_.url.substr(path);
  if (cfg_.model.empty()) throw ConfigError("endpoint config needs a model name");
  if (const char* key = std::getenv(cfg_.api_key_env.c_str())) api_key_ = key;
  if (api_key_.empty()) throw ConfigError("environment variable " + cfg_.api_key_env + " is not set");
}

json HttpsChatClient::payload(const std::string& model, const ChatRequest& request) {
  json content = json::array();
  content.push_back({{"type", "text"}, {"text", request.prompt}});
  if (request.image_png && !request.image_png->empty()) {
    content.push_back({{"type", "image_url"},
                       {"image_url", {{"url", "data:image/png;base64," + base64(*request.image_png)}}}});
  }
  return json{{"model", model},
              {"temperature", 0},
              {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
}

std::string HttpsChatClient::send(const ChatRequest& request) {
  httplib::Client cli(scheme_host_);
  cli.set_connection_timeout(cfg_.timeout_seconds, 0);
  cli.set_read_timeout(cfg_.timeout_seconds, 0);
  cli.set_bearer_token_auth(api_key_);
  auto res = cli.Post(path_, payload(cfg_.model, request).dump(), "application/json");
  if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw TransportError("endpoint answered HTTP " + std::to_string(res->status));
  }
  try {
    const json body = json::parse(res->body);
    return body.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw TransportError(std::string("unexpected response body: ") + e.what());
  }
}

MockChatClient::MockChatClient(std::map<std::size_t, std::vector<std::string>> script,
                               std::string fallback, std::chrono::milliseconds latency)
    : script_(std::move(script)), fallback_(std::move(fallback)), latency_(latency) {}

std::string MockChatClient::send(const ChatRequest& request) {
  const std::size_t now = ++in_flight_;
  std::size_t seen = max_in_flight_.load();
  while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
  }
  ++calls_;
  std::size_t attempt = 0;
  {
    std::lock_guard lock(mu_);
    attempt = attempts_[request.index]++;
    prompts_.push_back(request.prompt);
  }
  if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
  std::string reply = fallback_;
  if (auto it = script_.find(request.index); it != script_.end() && !it->second.empty()) {
    reply = it->second[std::min(attempt, it->second.size() - 1)];
  }
  --in_flight_;
  if (reply == kError) throw TransportError("scripted transport failure");
  return reply;
}

std::vector<std::string> MockChatClient::prompts() const {
  std::lock_guard lock(mu_);
  return prompts_;
}

namespace {

std::string to_string(VerdictStatus s) {
  switch (s) {
    case VerdictStatus::parsed: return "parsed";
    case VerdictStatus::unparseable: return "unparseable";
    case VerdictStatus::transport_error: return "transport_error";
  }
  return "parsed";
}

}  // namespace

json verdict_to_json(const Verdict& v) {
  json j{{"id", v.id}, {"raw", v.raw}, {"status", to_string(v.status)}, {"retries", v.retries}};
  j["decision"] = v.decision ? json(to_string(*v.decision)) : json(nullptr);
  if (!v.error.empty()) j["error"] = v.error;
  return j;
}

json summary_to_json(const JudgeSummary& s) {
  json j{{"requests", s.verdicts.size()},
         {"yes", s.yes},
         {"no", s.no},
         {"parsed", s.yes + s.no},
         {"unparsed", s.unparsed},
         {"failed", s.failed}};
  j["accuracy"] = s.accuracy ? json(*s.accuracy) : json(nullptr);
  return j;
}

JudgeSummary judge_run(const std::vector<JudgeRequest>& requests, ChatClient& client,
                       const JudgeOptions& options) {
  for (const auto& r : requests) validate(r);
  JudgeSummary out;
  out.verdicts.resize(requests.size());
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t i = next++; i < requests.size(); i = next++) {
      const JudgeRequest& req = requests[i];
      Verdict& v = out.verdicts[i];
      v.id = req.id;
      const ChatRequest chat{i, build_judge_prompt(req), &req.image_png};
      auto delay = options.backoff;
      for (std::size_t attempt = 0;; ++attempt) {
        try {
          v.raw = client.send(chat);
          v.retries = attempt;
          v.error.clear();
          break;
        } catch (const TransportError& e) {
          v.error = e.what();
          v.retries = attempt;
          if (attempt >= options.retries) {
            v.status = VerdictStatus::transport_error;
            break;
          }
          if (delay.count() > 0) {
            std::this_thread::sleep_for(delay);
            delay *= 2;
          }
        }
      }
      if (v.status == VerdictStatus::transport_error) continue;
      try {
        v.decision = parse_verdict(v.raw);
        v.status = VerdictStatus::parsed;
      } catch (const UnparseableVerdictError& e) {
        v.status = VerdictStatus::unparseable;
        v.error = e.what();
      }
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(options.concurrency, requests.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();

  for (const auto& v : out.verdicts) {
    switch (v.status) {
      case VerdictStatus::parsed: (v.decision == Decision::yes ? out.yes : out.no)++; break;
      case VerdictStatus::unparseable: ++out.unparsed; break;
      case VerdictStatus::transport_error: ++out.failed; break;
    }
  }
  if (out.yes + out.no > 0) out.accuracy = static_cast<double>(out.yes) / static_cast<double>(out.yes + out.no);
  return out;
}

}  // namespace regioncap::judge
