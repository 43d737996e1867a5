#pragma once
// Prompt assembly from retrieval results and the answer backends.

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "scenerag/knowledge_db.hpp"
#include "scenerag/qa_corpus.hpp"

namespace scenerag {

inline constexpr const char* kNoKnowledge = "no relevant knowledge retrieved";

/// One retrieved object with everything the answer step may read.
struct KnowledgeFact {
  ObjectRecord record;
  RelativePosition spatial;
  double score = 0.0;
};

struct PromptBundle {
  std::string question;
  std::vector<std::string> knowledge_entries;  // rank order
  std::string user_conditions;
  std::vector<KnowledgeFact> facts;            // parallel to knowledge_entries
};

std::string render_entry(const ObjectRecord& r, const RelativePosition& rel);
std::string render_pose(const UserPose& pose);

PromptBundle render_prompt(std::string_view question, const RetrievalResult& result,
                           const UserPose& pose);

/// Full prompt text for a chat model.
std::string prompt_text(const PromptBundle& bundle);

/// Deterministic answer from the bundle. `topic` overrides the topic
/// inferred from the question text.
std::string template_answer(const PromptBundle& bundle, std::optional<Topic> topic = std::nullopt);

class Answerer {
 public:
  virtual ~Answerer() = default;
  virtual std::string answer(const PromptBundle& bundle, std::optional<Topic> topic) = 0;
  virtual std::string name() const = 0;
};

class TemplateAnswerer final : public Answerer {
 public:
  std::string answer(const PromptBundle& bundle, std::optional<Topic> topic) override {
    return template_answer(bundle, topic);
  }
  std::string name() const override { return "template"; }
};

struct ChatBackendConfig {
  std::string endpoint = "http://127.0.0.1:8080/v1/chat/completions";
  std::string model = "llama-3.1-8b-instruct";
  std::string api_key_env = "SCENERAG_API_KEY";
  std::chrono::milliseconds timeout{30000};
  int max_retries = 2;
};

/// Chat-completion client over HTTP. Non-deterministic; demos only.
class ChatCompletionAnswerer final : public Answerer {
 public:
  explicit ChatCompletionAnswerer(ChatBackendConfig config);
  std::string answer(const PromptBundle& bundle, std::optional<Topic> topic) override;
  std::string name() const override { return "chat:" + config_.model; }

  nlohmann::json request_body(const PromptBundle& bundle) const;
  /// Extracts choices[0].message.content; throws NetworkError otherwise.
  static std::string parse_response(const std::string& body);

 private:
  ChatBackendConfig config_;
  std::string scheme_host_;
  std::string path_;
};

}  // namespace scenerag
