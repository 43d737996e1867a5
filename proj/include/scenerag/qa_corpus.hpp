#pragma once
// Template question generation with scripted ground truths, and
// pos/neg/hneg training-sample construction.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "scenerag/scene.hpp"
#include "scenerag/spatial.hpp"
#include "scenerag/two_tower.hpp"

namespace scenerag {

enum class QuestionKind { SingleKnowledge, MultiKnowledge };

enum class Topic { Material, Color, Interactivity, Position, Relative, Distance, Count };

const char* to_string(QuestionKind k);
const char* to_string(Topic t);
QuestionKind question_kind_from_string(std::string_view s);
Topic topic_from_string(std::string_view s);

/// "attribute", "spatial" or "count".
const char* topic_class(Topic t);

struct QuestionTemplate {
  Topic topic;
  QuestionKind kind;
  /// "{ref}" is an instance id or "the <category>"; "{plural}" a category + "s".
  std::string pattern;
};

const std::vector<QuestionTemplate>& question_templates();

struct QuestionRecord {
  std::string text;
  QuestionKind kind = QuestionKind::SingleKnowledge;
  Topic topic = Topic::Material;
  std::vector<std::string> relevant;  // sorted instance ids
  std::string ground_truth;
  std::string subject;  // instance id (single) or category (count)
  std::string scene;
  UserPose user_pose;

  friend bool operator==(const QuestionRecord&, const QuestionRecord&) = default;
};

/// Subject named by a question, recovered from its text.
struct ParsedQuestion {
  Topic topic;
  QuestionKind kind;
  std::string ref;          // instance id, or category when by_category
  bool by_category = false; // "the <category>" or a count question
};

/// Matches `text` against the template inventory.
std::optional<ParsedQuestion> parse_question(std::string_view text);

// Canonical answer forms shared by the ground-truth script and the answerer.
std::string format_number(double v);
std::string format_vec3(const Vec3& v);
std::string capitalize(std::string s);
std::string attribute_answer(Topic topic, const ObjectRecord& r, const RelativePosition& rel);
std::string count_answer(std::size_t n);

/// Lowercased, trimmed, inner whitespace collapsed, trailing '.' removed.
std::string canonicalize(std::string_view answer);

inline constexpr std::size_t kAllSubjects = std::numeric_limits<std::size_t>::max();

struct CorpusConfig {
  /// Questions per template, indexed like question_templates(); kAllSubjects
  /// asks each possible subject once. Subjects cycle through a seeded
  /// permutation when a count exceeds the number of subjects.
  std::vector<std::size_t> per_template;

  static CorpusConfig exhaustive();
  static CorpusConfig uniform(std::size_t n);
};

/// Questions over the visible objects of `scene`, with ground truths for `user`.
std::vector<QuestionRecord> generate_questions(const Scene& scene, const UserPose& user,
                                               std::uint64_t seed,
                                               const CorpusConfig& config = CorpusConfig::exhaustive());

/// Scripted answer: field reads by instance id, the spatial module for
/// spatial topics, visible-instance tallies for counts. Throws NotFound for a
/// dangling subject.
std::string ground_truth(const Scene& scene, const UserPose& user, const QuestionRecord& q);

struct SampleConfig {
  std::size_t negatives = 1;       // per question
  std::size_t hard_negatives = 1;  // per single-knowledge question
};

std::vector<TrainingSample> build_training_samples(const std::vector<QuestionRecord>& questions,
                                                   const Scene& scene, const SampleConfig& config,
                                                   std::uint64_t seed);

struct CorpusSplit {
  std::vector<QuestionRecord> train;
  std::vector<QuestionRecord> test;
};

/// Seeded split with no question text on both sides; `n_train` distinct
/// texts go to train.
CorpusSplit split_by_text(const std::vector<QuestionRecord>& questions, std::size_t n_train,
                          std::uint64_t seed);

nlohmann::json to_json(const QuestionRecord& q);
QuestionRecord question_from_json(const nlohmann::json& j);
void write_corpus_jsonl(const std::vector<QuestionRecord>& questions,
                        const std::filesystem::path& path);
std::vector<QuestionRecord> read_corpus_jsonl(const std::filesystem::path& path);

}  // namespace scenerag
