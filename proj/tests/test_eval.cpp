#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "scenerag/errors.hpp"
#include "scenerag/eval.hpp"
#include "test_util.hpp"

using namespace scenerag;

namespace {

QuestionRecord with_relevant(std::vector<std::string> rel) {
  QuestionRecord q;
  q.relevant = std::move(rel);
  return q;
}

std::shared_ptr<const TwoTowerModel> model(std::uint64_t seed = 0) {
  return std::make_shared<TwoTowerModel>(TwoTowerModel::initialize(ModelDims{64, 16, 8}, seed));
}

struct VillaCase {
  Scene scene = generate_synthetic_scene(6, 12, 30, villa_vocab(), "villa");
  UserPose pose{{0.5, -1, 1.6}, normalized({0, 0, 0.3, 0.95})};
  std::vector<QuestionRecord> corpus = generate_questions(scene, pose, 6, CorpusConfig::uniform(9));
};

TEST(Recall, Examples) {
  EXPECT_EQ(recall_of(with_relevant({"chair_1"}), {"table_1", "chair_1"}), 1.0);
  EXPECT_EQ(recall_of(with_relevant({"chair_1", "chair_2"}), {"chair_1"}), 0.5);
  EXPECT_EQ(recall_of(with_relevant({"chair_1"}), {"door_1"}), 0.0);
  EXPECT_EQ(recall_of(with_relevant({}), {"door_1"}), 0.0);
}

TEST(Recall, MatchesSetIntersectionOracle) {
  std::mt19937_64 rng(51);
  for (int i = 0; i < 500; ++i) {
    std::vector<std::string> rel, got;
    for (int j = 0; j < 20; ++j) {
      if (rng() % 3 == 0) rel.push_back("x_" + std::to_string(j + 1));
      if (rng() % 2 == 0) got.push_back("x_" + std::to_string(j + 1));
    }
    if (rel.empty()) continue;
    std::sort(rel.begin(), rel.end());
    std::sort(got.begin(), got.end());
    std::vector<std::string> both;
    std::set_intersection(rel.begin(), rel.end(), got.begin(), got.end(), std::back_inserter(both));
    std::shuffle(got.begin(), got.end(), rng);
    EXPECT_DOUBLE_EQ(recall_of(with_relevant(rel), got), double(both.size()) / rel.size());
  }
}

TEST(Evaluate, PerfectRetrievalIsExact) {
  VillaCase s;
  KnowledgeDatabase db(s.scene, model());
  TemplateAnswerer a;
  const auto r = evaluate(db, a, s.corpus, db.index_size());
  EXPECT_EQ(r.overall.accuracy, 1.0);
  EXPECT_EQ(r.overall.mean_recall, 1.0);
  EXPECT_EQ(r.by_topic.size(), 7u);
  for (const auto& [topic, agg] : r.by_topic) EXPECT_EQ(agg.accuracy, 1.0) << topic;
}

TEST(Evaluate, AggregatesMatchRows) {
  VillaCase s;
  KnowledgeDatabase db(s.scene, model());
  TemplateAnswerer a;
  const auto r = evaluate(db, a, s.corpus, 3, 9);
  EXPECT_EQ(r.rows.size(), s.corpus.size());
  EXPECT_EQ(r.k, 3u);
  EXPECT_EQ(r.seed, 9u);
  EXPECT_EQ(r.model_id, model_fingerprint(*db.model()));
  double acc = 0, rec = 0;
  for (const auto& row : r.rows) {
    acc += row.correct;
    rec += row.recall;
    EXPECT_LE(row.retrieved.size(), 3u);
    EXPECT_GE(row.recall, 0.0);
    EXPECT_LE(row.recall, 1.0);
  }
  EXPECT_NEAR(r.overall.accuracy, acc / r.rows.size(), 1e-12);
  EXPECT_NEAR(r.overall.mean_recall, rec / r.rows.size(), 1e-12);
  std::size_t n = 0;
  for (const auto& [kind, agg] : r.by_kind) n += agg.questions;
  EXPECT_EQ(n, r.rows.size());
  EXPECT_EQ(r.kind(QuestionKind::MultiKnowledge).questions, 4u * 9);
}

TEST(Evaluate, DeterministicReports) {
  VillaCase s;
  KnowledgeDatabase db(s.scene, model());
  TemplateAnswerer a;
  EXPECT_EQ(evaluate(db, a, s.corpus, 6, 1).to_json().dump(), evaluate(db, a, s.corpus, 6, 1).to_json().dump());
}

TEST(Evaluate, Errors) {
  VillaCase s;
  KnowledgeDatabase db(s.scene, model());
  TemplateAnswerer a;
  EXPECT_THROW(evaluate(db, a, s.corpus, 0), InvalidArgument);
  KnowledgeDatabase other(fixtures::office_fixture(), model());
  EXPECT_THROW(evaluate(other, a, s.corpus, 6), ValidationError);
}

TEST(Evaluate, MergeAndSummary) {
  VillaCase s;
  KnowledgeDatabase db(s.scene, model());
  TemplateAnswerer a;
  const std::vector<QuestionRecord> first(s.corpus.begin(), s.corpus.begin() + 50);
  const std::vector<QuestionRecord> rest(s.corpus.begin() + 50, s.corpus.end());
  auto merged = evaluate(db, a, first, 6);
  merged.merge(evaluate(db, a, rest, 6));
  const auto whole = evaluate(db, a, s.corpus, 6);
  EXPECT_EQ(merged.overall.questions, whole.overall.questions);
  EXPECT_NEAR(merged.overall.mean_recall, whole.overall.mean_recall, 1e-12);
  EXPECT_NE(whole.summary_table().find("villa"), std::string::npos);
}

TEST(KSweep, RecallMonotoneAndBounded) {
  VillaCase s;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    KnowledgeDatabase db(s.scene, model(seed));
    TemplateAnswerer a;
    std::vector<std::size_t> ks{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    const auto sweep = k_sweep(db, a, s.corpus, ks);
    ASSERT_EQ(sweep.points.size(), ks.size());
    EXPECT_TRUE(sweep.recall_monotone);
    for (std::size_t i = 1; i < sweep.points.size(); ++i) {
      EXPECT_GE(sweep.points[i].overall.mean_recall, sweep.points[i - 1].overall.mean_recall);
    }
    // Cardinality bound for multi-knowledge questions.
    const auto r = evaluate(db, a, s.corpus, 2);
    for (const auto& row : r.rows) {
      const auto& q = *std::find_if(s.corpus.begin(), s.corpus.end(),
                                    [&](const auto& x) { return x.text == row.question; });
      EXPECT_LE(row.recall, std::min(1.0, 2.0 / q.relevant.size()) + 1e-12);
    }
  }
}

TEST(KSweep, FullIndexGivesFullSingleRecall) {
  VillaCase s;
  KnowledgeDatabase db(s.scene, model());
  TemplateAnswerer a;
  const auto sweep = k_sweep(db, a, s.corpus, {db.index_size()});
  EXPECT_EQ(sweep.points[0].single.mean_recall, 1.0);
  EXPECT_THROW(k_sweep(db, a, s.corpus, {3, 2}), InvalidArgument);
  EXPECT_THROW(k_sweep(db, a, s.corpus, {0, 2}), InvalidArgument);
}

TEST(Compare, IdenticalCheckpointsGiveZeroDelta) {
  VillaCase s;
  KnowledgeDatabase a(s.scene, model(3)), b(s.scene, model(3));
  const auto c = compare_models(a, b, s.corpus, 6);
  ASSERT_FALSE(c.delta.empty());
  for (const auto& [scene, kinds] : c.delta) {
    for (const auto& [kind, agg] : kinds) {
      EXPECT_EQ(agg.accuracy, 0.0);
      EXPECT_EQ(agg.mean_recall, 0.0);
    }
  }
  EXPECT_EQ(c.untrained.to_json()["rows"], c.trained.to_json()["rows"]);
}

TEST(Compare, ConfigurationMismatch) {
  VillaCase s;
  KnowledgeDatabase a(s.scene, model());
  KnowledgeDatabase b(s.scene, std::make_shared<TwoTowerModel>(
                                   TwoTowerModel::initialize(ModelDims{32, 16, 8}, 0)));
  EXPECT_THROW(compare_models(a, b, s.corpus, 6), ValidationError);
  KnowledgeDatabase c(fixtures::office_fixture(), model());
  EXPECT_THROW(compare_models(a, c, s.corpus, 6), ValidationError);
}

}  // namespace
