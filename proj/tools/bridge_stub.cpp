// Loopback child for the bridge protocol, used by the test suites. Speaks v1 on
// stdin/stdout; the --mode flag selects normal or faulty behaviour.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "ics/bridge.hpp"
#include "ics/ref_segmenter.hpp"

namespace bridge = ics::bridge;
using bridge::json;

namespace {

bool reply(const json& msg) { return bridge::write_frame(STDOUT_FILENO, msg.dump()); }

json error_reply(const std::string& message) { return {{"type", "error"}, {"message", message}}; }

json prob_reply(const std::vector<float>& prob) {
  return {{"type", "segment_response"}, {"prob", bridge::encode_f32(prob)}};
}

struct Request {
  int w = 0;
  int h = 0;
  std::vector<float> query;
  std::vector<ics::SupportEntry> support;
};

Request decode_request(const json& msg) {
  Request r;
  r.w = msg.at("w").get<int>();
  r.h = msg.at("h").get<int>();
  r.query = bridge::decode_f32(msg.at("query").get<std::string>()).value();
  std::uint64_t seq = 1;
  for (const auto& e : msg.at("support")) {
    ics::SupportEntry entry;
    entry.image = ics::Slice{ics::Grid<float>(r.w, r.h, bridge::decode_f32(e.at("image").get<std::string>()).value()), 0};
    entry.label = ics::Mask(r.w, r.h, ics::base64::decode(e.at("label").get<std::string>()).value());
    entry.seq = seq++;
    r.support.push_back(std::move(entry));
  }
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bridge protocol test child"};
  std::string mode = "echo";
  int version = bridge::kProtocolVersion;
  std::string name = "stub";
  int width = 0;
  int height = 0;
  int max_support = 0;
  float value = 0.5f;
  app.add_option("--mode", mode,
                 "echo | constant | ref | bad-length | out-of-range | error | not-json | crash | hang | "
                 "exit-early | silent");
  app.add_option("--version", version);
  app.add_option("--name", name);
  app.add_option("--width", width);
  app.add_option("--height", height);
  app.add_option("--max-support", max_support);
  app.add_option("--value", value);
  CLI11_PARSE(app, argc, argv);

  if (mode == "exit-early") return 0;

  const auto forever = bridge::Clock::now() + std::chrono::hours(24);
  auto hello = bridge::read_frame(STDIN_FILENO, forever);
  if (hello.status != bridge::ReadStatus::Ok) return 1;
  if (mode == "silent") {
    std::this_thread::sleep_for(std::chrono::seconds(60));
    return 0;
  }
  bridge::BridgeHandshake hs;
  hs.protocol_version = version;
  hs.backend_name = name;
  hs.required_width = width;
  hs.required_height = height;
  hs.max_support = max_support;
  if (!reply(bridge::hello_reply(hs))) return 1;

  for (;;) {
    auto frame = bridge::read_frame(STDIN_FILENO, forever);
    if (frame.status != bridge::ReadStatus::Ok) return 0;  // host closed the channel
    if (mode == "crash") return 7;
    if (mode == "hang") {
      std::this_thread::sleep_for(std::chrono::seconds(60));
      return 0;
    }
    if (mode == "not-json") {
      bridge::write_frame(STDOUT_FILENO, "this is not json");
      continue;
    }
    if (mode == "error") {
      reply(error_reply("stub failure"));
      continue;
    }

    Request req;
    try {
      req = decode_request(json::parse(frame.payload));
    } catch (const std::exception& e) {
      reply(error_reply(std::string("bad request: ") + e.what()));
      continue;
    }
    if (req.support.empty()) {
      reply(error_reply("empty support"));
      continue;
    }

    std::vector<float> prob(req.query.size());
    if (mode == "constant") {
      std::fill(prob.begin(), prob.end(), value);
    } else if (mode == "ref") {
      const ics::Slice query{ics::Grid<float>(req.w, req.h, req.query), 0};
      const auto out = ics::ref_segment(query, req.support, ics::RefSegParams{});
      std::transform(out.values().begin(), out.values().end(), prob.begin(),
                     [](double v) { return static_cast<float>(v); });
    } else {
      std::transform(req.query.begin(), req.query.end(), prob.begin(),
                     [](float v) { return std::clamp(v, 0.0f, 1.0f); });
    }
    if (mode == "bad-length" && !prob.empty()) prob.pop_back();
    if (mode == "out-of-range" && !prob.empty()) prob.front() = 1.5f;
    if (!reply(prob_reply(prob))) return 1;
  }
}
