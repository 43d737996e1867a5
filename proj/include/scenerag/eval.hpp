#pragma once
// Answer accuracy and retrieval recall over a question corpus, k sweeps and
// trained-vs-untrained comparisons.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "scenerag/answer.hpp"
#include "scenerag/knowledge_db.hpp"
#include "scenerag/qa_corpus.hpp"

namespace scenerag {

/// |relevant ∩ retrieved| / |relevant|; 0 when relevant is empty.
double recall_of(const QuestionRecord& question, const std::vector<std::string>& retrieved);

struct EvalRow {
  std::string scene;
  std::string question;
  QuestionKind kind = QuestionKind::SingleKnowledge;
  Topic topic = Topic::Material;
  std::vector<std::string> retrieved;
  double recall = 0.0;
  std::string answer;
  std::string ground_truth;
  bool correct = false;
};

struct Aggregate {
  std::size_t questions = 0;
  double accuracy = 0.0;
  double mean_recall = 0.0;

  friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

struct EvalReport {
  std::size_t k = kDefaultTopK;
  std::string model_id;
  std::uint64_t seed = 0;
  std::vector<EvalRow> rows;

  // Recomputed from rows by finalize().
  Aggregate overall;
  std::map<std::string, Aggregate> by_kind;   // single_knowledge / multi_knowledge
  std::map<std::string, Aggregate> by_topic;
  std::map<std::string, std::map<std::string, Aggregate>> by_scene;  // scene -> kind -> agg

  void finalize();
  /// Appends another report's rows (same k) and refinalizes.
  void merge(const EvalReport& other);

  const Aggregate& kind(QuestionKind k) const;

  nlohmann::json to_json() const;
  std::string summary_table() const;
};

/// Short content hash of a model's checkpoint form.
std::string model_fingerprint(const TwoTowerModel& model);

/// For each question: set its pose, retrieve top-k, answer, compare canonical
/// strings. Throws InvalidArgument (k == 0) or ValidationError when the
/// corpus does not belong to the database's scene.
EvalReport evaluate(KnowledgeDatabase& db, Answerer& answerer,
                    const std::vector<QuestionRecord>& corpus, std::size_t k,
                    std::uint64_t seed = 0);

struct KSweepPoint {
  std::size_t k = 0;
  Aggregate overall;
  Aggregate single;
  Aggregate multi;
};

struct KSweepReport {
  std::vector<KSweepPoint> points;
  bool recall_monotone = true;  // mean recall non-decreasing in k

  nlohmann::json to_json() const;
  std::string summary_table() const;
};

KSweepReport k_sweep(KnowledgeDatabase& db, Answerer& answerer,
                     const std::vector<QuestionRecord>& corpus, const std::vector<std::size_t>& ks);

struct ComparisonReport {
  EvalReport untrained;
  EvalReport trained;
  // trained minus untrained, per scene and kind
  std::map<std::string, std::map<std::string, Aggregate>> delta;

  nlohmann::json to_json() const;
  std::string summary_table() const;
};

/// Both databases must hold the same scene and base embedder configuration.
ComparisonReport compare_models(KnowledgeDatabase& db_untrained, KnowledgeDatabase& db_trained,
                                const std::vector<QuestionRecord>& corpus, std::size_t k);

}  // namespace scenerag
