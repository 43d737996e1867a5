#include "scenerag/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "scenerag/errors.hpp"

namespace scenerag {

double recall_of(const QuestionRecord& question, const std::vector<std::string>& retrieved) {
  if (question.relevant.empty()) return 0.0;
  const std::set<std::string> got(retrieved.begin(), retrieved.end());
  std::size_t hit = 0;
  for (const auto& r : std::set<std::string>(question.relevant.begin(), question.relevant.end())) {
    hit += got.contains(r) ? 1 : 0;
  }
  return static_cast<double>(hit) /
         static_cast<double>(std::set<std::string>(question.relevant.begin(),
                                                   question.relevant.end()).size());
}

namespace {

struct Acc {
  std::size_t n = 0, correct = 0;
  double recall = 0.0;
  void add(const EvalRow& r) {
    ++n;
    correct += r.correct ? 1 : 0;
    recall += r.recall;
  }
  Aggregate get() const {
    if (n == 0) return {};
    return {n, static_cast<double>(correct) / static_cast<double>(n),
            recall / static_cast<double>(n)};
  }
};

nlohmann::json agg_json(const Aggregate& a) {
  return {{"questions", a.questions}, {"accuracy", a.accuracy}, {"mean_recall", a.mean_recall}};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

Aggregate diff(const Aggregate& a, const Aggregate& b) {
  return {a.questions, a.accuracy - b.accuracy, a.mean_recall - b.mean_recall};
}

}  // namespace

void EvalReport::finalize() {
  Acc all;
  std::map<std::string, Acc> kinds, topics;
  std::map<std::string, std::map<std::string, Acc>> scenes;
  for (const auto& r : rows) {
    all.add(r);
    kinds[to_string(r.kind)].add(r);
    topics[to_string(r.topic)].add(r);
    scenes[r.scene][to_string(r.kind)].add(r);
    scenes[r.scene]["all"].add(r);
  }
  overall = all.get();
  by_kind.clear();
  by_topic.clear();
  by_scene.clear();
  for (const auto& [k, a] : kinds) by_kind[k] = a.get();
  for (const auto& [k, a] : topics) by_topic[k] = a.get();
  for (const auto& [s, m] : scenes) {
    for (const auto& [k, a] : m) by_scene[s][k] = a.get();
  }
}

void EvalReport::merge(const EvalReport& other) {
  if (other.k != k) throw InvalidArgument("cannot merge reports with different k");
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  finalize();
}

const Aggregate& EvalReport::kind(QuestionKind k) const {
  static const Aggregate empty;
  auto it = by_kind.find(to_string(k));
  return it == by_kind.end() ? empty : it->second;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["config"] = {{"k", k}, {"model", model_id}, {"seed", seed}};
  j["overall"] = agg_json(overall);
  for (const auto& [k, a] : by_kind) j["by_kind"][k] = agg_json(a);
  for (const auto& [k, a] : by_topic) j["by_topic"][k] = agg_json(a);
  for (const auto& [s, m] : by_scene) {
    for (const auto& [k, a] : m) j["by_scene"][s][k] = agg_json(a);
  }
  nlohmann::json rows_j = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_j.push_back({{"scene", r.scene},
                      {"question", r.question},
                      {"kind", to_string(r.kind)},
                      {"topic", to_string(r.topic)},
                      {"retrieved", r.retrieved},
                      {"recall", r.recall},
                      {"answer", r.answer},
                      {"ground_truth", r.ground_truth},
                      {"correct", r.correct}});
  }
  j["rows"] = std::move(rows_j);
  return j;
}

std::string EvalReport::summary_table() const {
  std::ostringstream os;
  os << "k=" << k << " model=" << model_id << "\n";
  os << "scene                kind               n      accuracy  recall\n";
  for (const auto& [s, m] : by_scene) {
    for (const auto& [kname, a] : m) {
      char line[160];
      std::snprintf(line, sizeof line, "%-20s %-18s %-6zu %-9s %s\n", s.c_str(), kname.c_str(),
                    a.questions, fmt(a.accuracy).c_str(), fmt(a.mean_recall).c_str());
      os << line;
    }
  }
  char line[160];
  std::snprintf(line, sizeof line, "%-20s %-18s %-6zu %-9s %s\n", "ALL", "all", overall.questions,
                fmt(overall.accuracy).c_str(), fmt(overall.mean_recall).c_str());
  os << line;
  return os.str();
}

std::string model_fingerprint(const TwoTowerModel& model) {
  const std::string text = to_json(model).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

EvalReport evaluate(KnowledgeDatabase& db, Answerer& answerer,
                    const std::vector<QuestionRecord>& corpus, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw InvalidArgument("k must be >= 1");
  for (const auto& q : corpus) {
    if (!q.scene.empty() && q.scene != db.name()) {
      throw ValidationError("question '" + q.text + "' belongs to scene '" + q.scene +
                            "', database holds '" + db.name() + "'");
    }
    for (const auto& id : q.relevant) {
      if (!db.record(id)) throw ValidationError("corpus names unknown instance '" + id + "'");
    }
  }
  EvalReport report;
  report.k = k;
  report.seed = seed;
  report.model_id = model_fingerprint(*db.model());
  report.rows.reserve(corpus.size());
  for (const auto& q : corpus) {
    const RetrievalResult result = db.query(q.user_pose, q.text, k);
    const PromptBundle bundle = render_prompt(q.text, result, result.pose);
    EvalRow row;
    row.scene = db.name();
    row.question = q.text;
    row.kind = q.kind;
    row.topic = q.topic;
    for (const auto& s : result.ranked) row.retrieved.push_back(s.instance);
    row.recall = recall_of(q, row.retrieved);
    row.answer = answerer.answer(bundle, q.topic);
    row.ground_truth = q.ground_truth;
    row.correct = canonicalize(row.answer) == canonicalize(row.ground_truth);
    report.rows.push_back(std::move(row));
  }
  report.finalize();
  return report;
}

KSweepReport k_sweep(KnowledgeDatabase& db, Answerer& answerer,
                     const std::vector<QuestionRecord>& corpus, const std::vector<std::size_t>& ks) {
  KSweepReport out;
  double prev = -1.0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == 0) throw InvalidArgument("k values must be positive");
    if (i > 0 && ks[i] <= ks[i - 1]) throw InvalidArgument("k values must be strictly increasing");
    const EvalReport r = evaluate(db, answerer, corpus, ks[i]);
    KSweepPoint p{ks[i], r.overall, r.kind(QuestionKind::SingleKnowledge),
                  r.kind(QuestionKind::MultiKnowledge)};
    if (p.overall.mean_recall < prev) out.recall_monotone = false;
    prev = p.overall.mean_recall;
    out.points.push_back(p);
  }
  return out;
}

nlohmann::json KSweepReport::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points) {
    pts.push_back({{"k", p.k},
                   {"overall", agg_json(p.overall)},
                   {"single_knowledge", agg_json(p.single)},
                   {"multi_knowledge", agg_json(p.multi)}});
  }
  return {{"points", std::move(pts)}, {"recall_monotone", recall_monotone}};
}

std::string KSweepReport::summary_table() const {
  std::ostringstream os;
  os << "k    accuracy  recall    single_recall  multi_recall\n";
  for (const auto& p : points) {
    char line[128];
    std::snprintf(line, sizeof line, "%-4zu %-9s %-9s %-14s %s\n", p.k,
                  fmt(p.overall.accuracy).c_str(), fmt(p.overall.mean_recall).c_str(),
                  fmt(p.single.mean_recall).c_str(), fmt(p.multi.mean_recall).c_str());
    os << line;
  }
  os << "recall non-decreasing in k: " << (recall_monotone ? "yes" : "no") << "\n";
  return os.str();
}

ComparisonReport compare_models(KnowledgeDatabase& db_untrained, KnowledgeDatabase& db_trained,
                                const std::vector<QuestionRecord>& corpus, std::size_t k) {
  if (db_untrained.name() != db_trained.name()) {
    throw ValidationError("compared databases hold different scenes");
  }
  const auto mu = db_untrained.model();
  const auto mt = db_trained.model();
  if (!(mu->embedder_config() == mt->embedder_config()) || !(mu->dims() == mt->dims())) {
    throw ValidationError("compared models differ in embedder or dimensions");
  }
  if (!(db_untrained.to_scene() == db_trained.to_scene())) {
    throw ValidationError("compared databases hold different records");
  }
  TemplateAnswerer answerer;
  ComparisonReport out;
  out.untrained = evaluate(db_untrained, answerer, corpus, k);
  out.trained = evaluate(db_trained, answerer, corpus, k);
  for (const auto& [scene, kinds] : out.trained.by_scene) {
    for (const auto& [kind, agg] : kinds) {
      out.delta[scene][kind] = diff(agg, out.untrained.by_scene.at(scene).at(kind));
    }
  }
  out.delta["ALL"]["all"] = diff(out.trained.overall, out.untrained.overall);
  return out;
}

nlohmann::json ComparisonReport::to_json() const {
  nlohmann::json d;
  for (const auto& [s, m] : delta) {
    for (const auto& [k, a] : m) d[s][k] = agg_json(a);
  }
  nlohmann::json u = untrained.to_json(), t = trained.to_json();
  u.erase("rows");
  t.erase("rows");
  return {{"untrained", std::move(u)}, {"trained", std::move(t)}, {"delta", std::move(d)}};
}

std::string ComparisonReport::summary_table() const {
  std::ostringstream os;
  os << "scene                kind               acc(untr) acc(tr)   rec(untr) rec(tr)   d_recall\n";
  for (const auto& [s, m] : trained.by_scene) {
    for (const auto& [kname, a] : m) {
      const Aggregate& b = untrained.by_scene.at(s).at(kname);
      char line[200];
      std::snprintf(line, sizeof line, "%-20s %-18s %-9s %-9s %-9s %-9s %s\n", s.c_str(),
                    kname.c_str(), fmt(b.accuracy).c_str(), fmt(a.accuracy).c_str(),
                    fmt(b.mean_recall).c_str(), fmt(a.mean_recall).c_str(),
                    fmt(a.mean_recall - b.mean_recall).c_str());
      os << line;
    }
  }
  return os.str();
}

}  // namespace scenerag
