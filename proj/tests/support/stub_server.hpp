#pragma once

// Local chat-completions stub: records every request body it receives and
// the usage it reports, and replays scripted statuses.

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <deque>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace aquilt::testing {

class StubServer {
 public:
  struct Scripted {
    int status = 200;
    std::string body;  // empty: a normal completion
    int delay_ms = 0;
  };

  StubServer() {
    server_.Post(R"(/v1/chat/completions)", [this](const httplib::Request& req,
                                                  httplib::Response& res) {
      int delay = 0;
      {
        std::lock_guard lock(mu_);
        if (!script_.empty()) delay = script_.front().delay_ms;
      }
      if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      std::lock_guard lock(mu_);
      ++hits_;
      bodies_.push_back(nlohmann::json::parse(req.body, nullptr, false));
      auth_.push_back(req.get_header_value("Authorization"));
      if (!script_.empty()) {
        auto s = script_.front();
        script_.pop_front();
        if (s.delay_ms > 0) {
          res.status = 200;
          res.set_content("{\"choices\":[{\"message\":{\"content\":\"late\"}}]}",
                          "application/json");
          return;
        }
        if (s.status != 200 || !s.body.empty()) {
          res.status = s.status;
          res.set_content(s.body.empty() ? "{\"error\":\"scripted\"}" : s.body, "application/json");
          return;
        }
      }
      const auto& b = bodies_.back();
      const std::string content =
          b.is_object() && b.contains("messages") ? "echo:" + std::to_string(hits_) : "hi";
      const std::uint64_t in = 5 + hits_ % 7;
      const std::uint64_t out = 1 + hits_ % 3;
      prompt_tokens_ += in;
      completion_tokens_ += out;
      nlohmann::json reply{
          {"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}},
          {"usage", {{"prompt_tokens", in}, {"completion_tokens", out}}}};
      res.set_content(reply.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

  void push(Scripted s) {
    std::lock_guard lock(mu_);
    script_.push_back(std::move(s));
  }

  int hits() const {
    std::lock_guard lock(mu_);
    return hits_;
  }
  std::vector<nlohmann::json> bodies() const {
    std::lock_guard lock(mu_);
    return bodies_;
  }
  std::vector<std::string> auth_headers() const {
    std::lock_guard lock(mu_);
    return auth_;
  }
  std::uint64_t prompt_tokens() const {
    std::lock_guard lock(mu_);
    return prompt_tokens_;
  }
  std::uint64_t completion_tokens() const {
    std::lock_guard lock(mu_);
    return completion_tokens_;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  mutable std::mutex mu_;
  std::deque<Scripted> script_;
  int hits_ = 0;
  std::vector<nlohmann::json> bodies_;
  std::vector<std::string> auth_;
  std::uint64_t prompt_tokens_ = 0;
  std::uint64_t completion_tokens_ = 0;
};

}  // namespace aquilt::testing
