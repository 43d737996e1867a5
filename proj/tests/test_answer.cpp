#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "httplib.h"
#include "scenerag/answer.hpp"
#include "scenerag/errors.hpp"
#include "test_util.hpp"

using namespace scenerag;

namespace {

/// Result built directly from records, in the given rank order.
RetrievalResult result_of(const Scene& s, const std::vector<std::string>& ranked,
                          const UserPose& pose = {}) {
  RetrievalResult r;
  r.pose = pose;
  double score = 1.0;
  for (const auto& id : ranked) {
    r.ranked.push_back({id, score -= 0.1});
    r.expanded.push_back(s.at(id));
    r.spatial_facts.push_back(relative_position(s.at(id).position, pose));
  }
  return r;
}

TEST(RenderPrompt, EntriesInRankOrder) {
  const Scene s = fixtures::office_fixture();
  auto b = render_prompt("Where is chair_1?", result_of(s, {"chair_1"}), {});
  ASSERT_EQ(b.knowledge_entries.size(), 1u);
  EXPECT_NE(b.knowledge_entries[0].find("front right"), std::string::npos) << b.knowledge_entries[0];

  b = render_prompt("x", result_of(s, {"door_1", "chair_2", "clock_1"}), {});
  ASSERT_EQ(b.knowledge_entries.size(), 3u);
  EXPECT_NE(b.knowledge_entries[0].find("door_1"), std::string::npos);
  EXPECT_NE(b.knowledge_entries[1].find("chair_2"), std::string::npos);
  EXPECT_NE(b.knowledge_entries[2].find("clock_1"), std::string::npos);
  const std::string text = prompt_text(b);
  EXPECT_LT(text.find("door_1"), text.find("chair_2"));
  EXPECT_NE(text.find("Question: x"), std::string::npos);
}

TEST(RenderEntry, CarriesAttributesAndSpatialFacts) {
  const Scene s = fixtures::office_fixture();
  const auto& c = s.at("clock_1");
  const std::string e = render_entry(c, relative_position(c.position, {}));
  for (const char* part : {"clock_1", "clock", "alloy", "silver", "front"}) {
    EXPECT_NE(e.find(part), std::string::npos) << part << " in " << e;
  }
}

TEST(TemplateAnswer, TableExamples) {
  const Scene s = fixtures::office_fixture();
  auto b = render_prompt("What is the material of the clock?", result_of(s, {"door_1", "clock_1"}), {});
  EXPECT_EQ(canonicalize(template_answer(b)), "alloy");

  b = render_prompt("How many printers can be found?",
                    result_of(s, {"printer_1", "chair_1", "printer_2"}), {});
  EXPECT_EQ(template_answer(b), "2");

  b = render_prompt("Where is tray_2 in relation to the player's position?",
                    result_of(s, {"tray_1", "chair_1"}), {});
  EXPECT_EQ(template_answer(b), kNoKnowledge);

  b = render_prompt("Where is tray_2 in relation to the player's position?",
                    result_of(s, {"tray_1", "tray_2"}), {});
  EXPECT_EQ(template_answer(b), "tray_2 is at the back left of the player");
}

TEST(TemplateAnswer, CountWithNothingRetrieved) {
  const Scene s = fixtures::office_fixture();
  const auto b = render_prompt("How many printers are there?", result_of(s, {"chair_1"}), {});
  EXPECT_EQ(template_answer(b), kNoKnowledge);
  EXPECT_EQ(template_answer(render_prompt("Sing a song", result_of(s, {"chair_1"}), {})), kNoKnowledge);
}

TEST(ChatBackend, RequestAndResponseShapes) {
  ChatCompletionAnswerer chat(ChatBackendConfig{});
  const Scene s = fixtures::office_fixture();
  const auto b = render_prompt("Where is chair_1?", result_of(s, {"chair_1"}), {});
  const auto body = chat.request_body(b);
  EXPECT_EQ(body["messages"].size(), 2u);
  EXPECT_NE(body["messages"][1]["content"].get<std::string>().find("chair_1"), std::string::npos);
  EXPECT_EQ(ChatCompletionAnswerer::parse_response(
                R"({"choices":[{"message":{"role":"assistant","content":"Blue."}}]})"),
            "Blue.");
  EXPECT_THROW(ChatCompletionAnswerer::parse_response("{}"), NetworkError);
  EXPECT_THROW(ChatCompletionAnswerer(ChatBackendConfig{"https://x/v1"}), InvalidArgument);
}

TEST(ChatBackend, RetriesServerErrors) {
  httplib::Server srv;
  std::atomic<int> calls{0};
  srv.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    if (calls++ == 0) {
      res.status = 503;
      return;
    }
    res.set_content(R"({"choices":[{"message":{"content":"2"}}]})", "application/json");
  });
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread th([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();

  ChatBackendConfig cfg;
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  cfg.timeout = std::chrono::milliseconds(2000);
  ChatCompletionAnswerer chat(cfg);
  const Scene s = fixtures::office_fixture();
  const auto b = render_prompt("How many printers are there?", result_of(s, {"printer_1"}), {});
  EXPECT_EQ(chat.answer(b, std::nullopt), "2");
  EXPECT_EQ(calls.load(), 2);
  srv.stop();
  th.join();
}

TEST(ChatBackend, UnreachableEndpoint) {
  ChatBackendConfig cfg;
  cfg.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  cfg.max_retries = 0;
  cfg.timeout = std::chrono::milliseconds(500);
  ChatCompletionAnswerer chat(cfg);
  EXPECT_THROW(chat.answer(PromptBundle{}, std::nullopt), NetworkError);
}

}  // namespace
