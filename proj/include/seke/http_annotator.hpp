#pragma once
// Hosted chat-completions backend.
//
// POST {base_url}/chat/completions with a bearer token; the image travels as a
// base64 data URI inside the user message. Transport failures (no response,
// 408, 429, 5xx) are retried with exponential backoff; 401/403 are fatal.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif

#include <chrono>
#include <fstream>
#include <iterator>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "seke/annotator.hpp"

namespace seke {

class TokenBucket {
 public:
  // rate in tokens per second; rate <= 0 disables limiting.
  TokenBucket(double rate, double burst)
      : rate_(rate), burst_(std::max(1.0, burst)), tokens_(burst_), last_(Clock::now()) {}

  void acquire() {
    if (rate_ <= 0.0) return;
    std::unique_lock lock(mutex_);
    while (true) {
      refill();
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
      lock.unlock();
      std::this_thread::sleep_for(wait);
      lock.lock();
    }
  }

 private:
  using Clock = std::chrono::steady_clock;
  void refill() {
    auto now = Clock::now();
    tokens_ = std::min(burst_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
    last_ = now;
  }

  double rate_;
  double burst_;
  double tokens_;
  Clock::time_point last_;
  std::mutex mutex_;
};

struct HttpAnnotatorConfig {
  std::string base_url;
  std::string model = "gpt-4o";
  std::string api_key;
  int connect_timeout_s = 10;
  int read_timeout_s = 120;
  int max_retries = 5;  // transport retries after the first attempt
  int backoff_initial_ms = 500;
  int backoff_max_ms = 30000;
  double requests_per_minute = 0.0;  // 0 = unlimited
};

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // path prefix without trailing slash
};

inline SplitUrl split_base_url(std::string_view url) {
  auto scheme = url.find("://");
  if (scheme == std::string_view::npos) throw ConfigError("base_url must include a scheme: '" + std::string(url) + "'");
  auto slash = url.find('/', scheme + 3);
  SplitUrl out;
  out.origin = std::string(url.substr(0, slash));
  out.path = slash == std::string_view::npos ? "" : std::string(url.substr(slash));
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

inline std::string image_mime_type(std::string_view path) {
  auto dot = path.rfind('.');
  std::string ext = dot == std::string_view::npos ? "" : to_lower(path.substr(dot + 1));
  if (ext == "png") return "image/png";
  if (ext == "webp") return "image/webp";
  if (ext == "gif") return "image/gif";
  if (ext == "bmp") return "image/bmp";
  return "image/jpeg";
}

// Remote references pass through; local files become base64 data URIs.
inline std::string image_url_for(std::string_view image_ref) {
  if (image_ref.rfind("http://", 0) == 0 || image_ref.rfind("https://", 0) == 0 || image_ref.rfind("data:", 0) == 0)
    return std::string(image_ref);
  std::ifstream in(std::string(image_ref), std::ios::binary);
  if (!in) throw IoError("cannot read image '" + std::string(image_ref) + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return "data:" + image_mime_type(image_ref) + ";base64," + httplib::detail::base64_encode(bytes);
}

inline nlohmann::json chat_request_body(const PromptText& prompt, const std::string& image_url,
                                        const DecodingParams& params, const std::string& model) {
  using nlohmann::json;
  json user_content = json::array();
  user_content.push_back({{"type", "text"}, {"text", prompt.user}});
  if (prompt.image_attached) user_content.push_back({{"type", "image_url"}, {"image_url", {{"url", image_url}}}});
  json messages = json::array();
  if (!prompt.system.empty()) messages.push_back({{"role", "system"}, {"content", prompt.system}});
  messages.push_back({{"role", "user"}, {"content", std::move(user_content)}});
  return json{{"model", model},
              {"messages", std::move(messages)},
              {"temperature", params.temperature},
              {"max_tokens", params.max_output_tokens}};
}

class HttpAnnotator : public Annotator {
 public:
  HttpAnnotator(HttpAnnotatorConfig config, AuVocabulary vocab)
      : config_(std::move(config)),
        vocab_(std::move(vocab)),
        url_(split_base_url(config_.base_url)),
        limiter_(config_.requests_per_minute / 60.0, 1.0) {
    if (config_.api_key.empty()) throw AuthError("no API key configured (ANNOTATOR_API_KEY)");
  }

  AnnotatorResponse complete(const PromptText& prompt, std::string_view image_ref,
                             const DecodingParams& params) override {
    validate(params);
    const std::string image_url = prompt.image_attached ? image_url_for(image_ref) : std::string();
    const std::string body = chat_request_body(prompt, image_url, params, config_.model).dump();
    const std::string path = url_.path + "/chat/completions";

    std::string last_error;
    for (int attempt = 1; attempt <= config_.max_retries + 1; ++attempt) {
      if (attempt > 1) std::this_thread::sleep_for(backoff(attempt - 1));
      limiter_.acquire();

      httplib::Client client(url_.origin);
      client.set_connection_timeout(config_.connect_timeout_s, 0);
      client.set_read_timeout(config_.read_timeout_s, 0);
      client.set_bearer_token_auth(config_.api_key);

      auto started = std::chrono::steady_clock::now();
      auto res = client.Post(path, body, "application/json");
      auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);

      if (!res) {
        last_error = "transport failure: " + httplib::to_string(res.error());
        continue;
      }
      const int status = res->status;
      if (status == 401 || status == 403) throw AuthError("annotator rejected credentials (HTTP " + std::to_string(status) + ")");
      if (status == 408 || status == 429 || status >= 500) {
        last_error = "HTTP " + std::to_string(status);
        continue;
      }
      if (status != 200) throw TransportError("annotator returned HTTP " + std::to_string(status) + ": " + res->body, status);

      AnnotatorResponse r;
      r.attempt = attempt;
      r.latency_ms = static_cast<long>(elapsed.count());
      auto doc = nlohmann::json::parse(res->body, nullptr, false);
      try {
        r.raw_text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const nlohmann::json::exception&) {
        throw TransportError("malformed completion payload", status);
      }
      attach_parse(r, prompt.response_schema_id, vocab_);
      return r;
    }
    throw TransportError("annotator unreachable after " + std::to_string(config_.max_retries + 1) +
                         " attempts: " + last_error);
  }

  std::string model_id() const override { return config_.model; }

 private:
  std::chrono::milliseconds backoff(int retry) const {
    long ms = config_.backoff_initial_ms;
    for (int i = 1; i < retry && ms < config_.backoff_max_ms; ++i) ms *= 2;
    return std::chrono::milliseconds(std::min<long>(ms, config_.backoff_max_ms));
  }

  HttpAnnotatorConfig config_;
  AuVocabulary vocab_;
  SplitUrl url_;
  TokenBucket limiter_;
};

}  // namespace seke
