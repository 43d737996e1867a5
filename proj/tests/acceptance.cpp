// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. Usage: scenerag_acceptance [seed]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <string>

#include "scenerag/eval.hpp"
#include "scenerag/kernels.hpp"
#include "scenerag/service.hpp"

using namespace scenerag;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

Vec3 random_vec3(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-20.0, 20.0);
  return {d(rng), d(rng), d(rng)};
}

Quat random_unit_quat(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double u1 = u(rng), u2 = u(rng), u3 = u(rng);
  const double a = std::sqrt(1 - u1), b = std::sqrt(u1);
  return {a * std::sin(2 * M_PI * u2), a * std::cos(2 * M_PI * u2), b * std::sin(2 * M_PI * u3),
          b * std::cos(2 * M_PI * u3)};
}

/// q^-1 v q via Hamilton products; independent of the rotation-matrix path.
Vec3 conjugation_oracle(const Quat& q, const Vec3& v) {
  struct H {
    double w, x, y, z;
  };
  auto mul = [](const H& a, const H& b) {
    return H{a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
             a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
             a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
             a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
  };
  const double n = q.norm();
  const H h{q.w / n, q.x / n, q.y / n, q.z / n}, hi{h.w, -h.x, -h.y, -h.z};
  const H r = mul(mul(hi, H{0, v[0], v[1], v[2]}), h);
  return {r.x, r.y, r.z};
}

const UserPose kPose{{0.5, -1.0, 1.6}, normalized({0, 0, 0.3, 0.95})};

// ---------------------------------------------------------------------------

Outcome spatial_oracle(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto t0 = Clock::now();
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const Vec3 po = random_vec3(rng);
    const UserPose u{random_vec3(rng), random_unit_quat(rng)};
    const Vec3 got = relative_position(po, u).quantitative;
    const Vec3 want = conjugation_oracle(u.orientation, po - u.position);
    for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(got[c] - want[c]));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 1.0, fmt("max |diff| %.3g over 1000 pairs in %.3f s", worst, secs)};
}

Outcome rotation_validity(std::uint64_t seed) {
  std::mt19937_64 rng(seed + 1);
  double worst_orth = 0, worst_det = 0;
  for (int i = 0; i < 1000; ++i) {
    const Mat3 r = quat_to_rotation_matrix(random_unit_quat(rng));
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        double s = 0;
        for (int c = 0; c < 3; ++c) s += r[c][a] * r[c][b];
        worst_orth = std::max(worst_orth, std::abs(s - (a == b ? 1.0 : 0.0)));
      }
    }
    const double det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) -
                       r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0]) +
                       r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
    worst_det = std::max(worst_det, std::abs(det - 1.0));
  }
  return {worst_orth <= 1e-9 && worst_det <= 1e-9,
          fmt("max |RtR - I| %.3g, max |det - 1| %.3g", worst_orth, worst_det)};
}

Outcome loss_values(std::uint64_t seed) {
  const TrainConfig cfg;
  bool ok = loss_at_similarity(Label::Pos, 1.0, cfg) == 0.0 &&
            loss_at_similarity(Label::Neg, 0.5, cfg) == 0.5 - 0.2 &&
            loss_at_similarity(Label::Hneg, 0.5, cfg) == 2.0 * (0.5 - 0.2) &&
            loss_at_similarity(Label::Neg, 0.1, cfg) == 0.0;
  const bool units = ok;
  std::mt19937_64 rng(seed + 2);
  std::uniform_real_distribution<double> s(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const double x = s(rng);
    ok = ok && loss_at_similarity(Label::Hneg, x, cfg) == cfg.w_hneg * loss_at_similarity(Label::Neg, x, cfg);
  }
  return {ok, fmt("unit cases %s; hneg = w_hneg * neg on 100 random similarities %s",
                  units ? "exact" : "WRONG", ok ? "holds" : "violated")};
}

Outcome gradient_correctness(std::uint64_t) {
  const TrainConfig cfg;
  const auto m = TwoTowerModel::initialize(ModelDims{8, 4, 3}, 0);
  const std::vector<TrainingSample> xs{
      {"where is chair_1", {"chair", "chair_1"}, Label::Pos},
      {"where is chair_1", {"table", "table_1"}, Label::Neg},
      {"where is chair_1", {"chair", "chair_2"}, Label::Hneg},
      {"how many printers are there", {"printer", "printer_1"}, Label::Pos},
      {"how many printers are there", {"door", "door_3"}, Label::Neg},
      {"what is the color of the clock", {"clock", "clock_1"}, Label::Pos},
  };
  double gap = 1.0;
  for (const auto& x : xs)
    if (x.label != Label::Pos) gap = std::min(gap, std::abs(similarity(m, x) - cfg.margin));
  const double err = gradient_check(m, xs, cfg);
  return {err < 1e-5 && gap > 1e-3,
          fmt("max relative error %.3g (closest hinge distance %.3g)", err, gap)};
}

Outcome retrieval_brute_force(std::uint64_t seed) {
  std::mt19937_64 rng(seed + 4);
  int mismatches = 0, queries = 0, tie_dbs = 0;
  for (int d = 0; d < 100; ++d) {
    const std::size_t cats = 1 + rng() % 20;
    const std::size_t inst = cats + rng() % (51 - cats);
    const Scene s = generate_synthetic_scene(rng(), cats, inst, villa_vocab(), "villa");
    auto m = TwoTowerModel::initialize(ModelDims{}, rng());
    if (d % 10 == 0) {
      // Constant information vectors: every score ties.
      std::fill(m.information_tower().w1.begin(), m.information_tower().w1.end(), 0.0);
      std::fill(m.information_tower().b1.begin(), m.information_tower().b1.end(), 0.1);
      ++tie_dbs;
    }
    KnowledgeDatabase db(s, std::make_shared<TwoTowerModel>(m));
    const auto qs = generate_questions(s, {}, rng(), CorpusConfig::uniform(1));
    for (int q = 0; q < 10; ++q) {
      const std::string text = qs[rng() % qs.size()].text;
      const std::size_t k = 1 + rng() % 60;
      const auto qv = forward_question(m, text);
      std::vector<ScoredId> all;
      for (const auto& e : db.index_snapshot()) all.push_back({e.instance, cosine_sim(qv, e.vector)});
      std::sort(all.begin(), all.end(), [](const ScoredId& a, const ScoredId& b) {
        return a.score != b.score ? a.score > b.score : a.instance < b.instance;
      });
      all.resize(std::min(k, all.size()));
      if (db.retrieve(text, k).ranked != all) ++mismatches;
      ++queries;
    }
  }
  return {mismatches == 0, fmt("%d/%d ranked lists differ from exhaustive sort (%d all-tie databases)",
                               mismatches, queries, tie_dbs)};
}

// Criterion 6 report is also reused by the determinism check.
std::string recall_monotonicity_report(std::uint64_t seed, Outcome* out) {
  const Scene s = generate_synthetic_scene(seed + 6, 12, 30, restaurant_vocab(), "restaurant");
  CorpusConfig cfg = CorpusConfig::uniform(9);  // 22 x 9 = 198
  cfg.per_template[0] = cfg.per_template[1] = 10;
  const auto corpus = generate_questions(s, kPose, seed + 6, cfg);
  KnowledgeDatabase db(s, std::make_shared<TwoTowerModel>(TwoTowerModel::initialize(ModelDims{}, seed)));
  TemplateAnswerer a;
  const auto sweep = k_sweep(db, a, corpus, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  bool monotone = true;
  for (std::size_t i = 1; i < sweep.points.size(); ++i)
    monotone = monotone && sweep.points[i].overall.mean_recall >= sweep.points[i - 1].overall.mean_recall;
  if (out) {
    *out = {monotone && sweep.recall_monotone && corpus.size() == 200 && s.instance_count() == 30,
            fmt("%zu questions, recall@1 %.4f -> recall@10 %.4f, %s", corpus.size(),
                sweep.points.front().overall.mean_recall, sweep.points.back().overall.mean_recall,
                monotone ? "non-decreasing" : "NOT monotone")};
  }
  return sweep.to_json().dump();
}

struct TrainingRun {
  std::shared_ptr<const TwoTowerModel> untrained, trained;
  std::string report;  // untrained + trained held-out reports and checkpoint
  Outcome outcome;
  Outcome transfer;
  std::string transfer_report;
};

TrainingRun training_effectiveness(std::uint64_t seed) {
  TrainingRun run;
  const auto t0 = Clock::now();
  const Scene office = generate_synthetic_scene(seed, 18, 34, office_vocab(), "office");
  const auto split = split_by_text(generate_questions(office, kPose, seed), 294, seed);
  const auto samples = build_training_samples(split.train, office, {}, seed);
  run.untrained = std::make_shared<TwoTowerModel>(
      TwoTowerModel::initialize(EmbedderConfig{256, 0}, 128, 64, seed));
  TrainConfig tcfg;
  tcfg.seed = seed;
  const auto trained = train(*run.untrained, samples, tcfg);
  run.trained = std::make_shared<TwoTowerModel>(trained.model);

  // Held out: the rest of the office corpus plus four more scenes of the
  // same size class.
  struct Part {
    Scene scene;
    std::vector<QuestionRecord> questions;
  };
  std::vector<Part> parts{{office, split.test}};
  auto add = [&](const std::vector<std::string>& vocab, std::size_t c, std::size_t n, const char* name,
                 std::uint64_t sd) {
    Scene s = generate_synthetic_scene(sd, c, n, vocab, name);
    auto qs = generate_questions(s, kPose, sd);
    parts.push_back({std::move(s), std::move(qs)});
  };
  add(villa_vocab(), 28, 37, "villa", seed + 1);
  add(restaurant_vocab(), 19, 32, "restaurant", seed + 2);
  add(grocery_vocab(), 18, 34, "grocery", seed + 3);
  add(viking_vocab(), 10, 30, "viking", seed + 4);

  TemplateAnswerer answerer;
  EvalReport ru, rt;
  std::size_t held_out = 0;
  for (const auto& p : parts) {
    KnowledgeDatabase du(p.scene, run.untrained), dt(p.scene, run.trained);
    const auto c = compare_models(du, dt, p.questions, kDefaultTopK);
    if (ru.rows.empty()) {
      ru = c.untrained;
      rt = c.trained;
    } else {
      ru.merge(c.untrained);
      rt.merge(c.trained);
    }
    held_out += p.questions.size();
  }
  const double secs = seconds_since(t0);
  const double u = ru.kind(QuestionKind::SingleKnowledge).mean_recall;
  const double t = rt.kind(QuestionKind::SingleKnowledge).mean_recall;
  const bool big_enough = held_out >= 10 * split.train.size() && split.train.size() >= 294;
  std::set<std::string> train_texts;
  for (const auto& q : split.train) train_texts.insert(q.text);
  run.outcome = {t >= 0.90 && t > u && big_enough && secs < 120.0,
                 fmt("%zu train texts, %zu samples, %zu held-out questions; single recall@6 "
                     "untrained %.4f, trained %.4f; loss %.4f -> %.4f; %.1f s",
                     train_texts.size(), samples.size(), held_out, u, t, trained.loss_history.front(),
                     trained.loss_history.back(), secs)};
  run.report = ru.to_json().dump() + "\n" + rt.to_json().dump() + "\n" + to_json(*run.trained).dump();

  // Criterion 8: a vocabulary-disjoint scene, no retraining.
  const Scene viking = generate_synthetic_scene(seed + 8, 12, 30, viking_vocab(), "viking");
  const auto vq = generate_questions(viking, kPose, seed + 8);
  KnowledgeDatabase vu(viking, run.untrained), vt(viking, run.trained);
  const auto vc = compare_models(vu, vt, vq, kDefaultTopK);
  const double vu_r = vc.untrained.overall.mean_recall, vt_r = vc.trained.overall.mean_recall;
  run.transfer = {vt_r >= vu_r,
                  fmt("%zu viking questions; recall@6 untrained %.4f, trained %.4f (single %.4f vs %.4f)",
                      vq.size(), vu_r, vt_r, vc.untrained.kind(QuestionKind::SingleKnowledge).mean_recall,
                      vc.trained.kind(QuestionKind::SingleKnowledge).mean_recall)};
  run.transfer_report = vc.to_json().dump();
  return run;
}

Outcome perfect_retrieval(std::uint64_t seed) {
  const Scene s = generate_synthetic_scene(seed, 18, 34, office_vocab(), "office");
  const auto corpus = generate_questions(s, kPose, seed);
  KnowledgeDatabase db(s, std::make_shared<TwoTowerModel>(TwoTowerModel::initialize(ModelDims{}, seed)));
  TemplateAnswerer a;
  const auto r = evaluate(db, a, corpus, db.index_size());
  return {r.overall.accuracy == 1.0 && r.by_topic.size() == 7,
          fmt("accuracy %.4f over %zu questions, %zu topics, k=%zu", r.overall.accuracy,
              r.rows.size(), r.by_topic.size(), db.index_size())};
}

ObjectRecord object(std::string cat, std::string inst, Vec3 p, std::string material) {
  ObjectRecord r;
  r.scene_name = "office";
  r.category = std::move(cat);
  r.instance = std::move(inst);
  r.position = p;
  r.material = std::move(material);
  r.color = "gray";
  return r;
}

Outcome update_semantics(std::shared_ptr<const TwoTowerModel> model) {
  const Scene s("office", {object("printer", "printer_1", {2, 3, 0}, "plastic"),
                           object("printer", "printer_2", {-4, 1, 0}, "plastic"),
                           object("clock", "clock_1", {0, 5, 2}, "alloy"),
                           object("tray", "tray_1", {1, -2, 1}, "wood"),
                           object("tray", "tray_2", {-1, -1, 0}, "wood"),
                           object("chair", "chair_1", {1, 1, 0}, "fabric"),
                           object("chair", "chair_2", {3, 4, 0}, "fabric"),
                           object("desk", "desk_1", {2, 2, 0}, "wood"),
                           object("monitor", "monitor_1", {2, 2, 1}, "glass"),
                           object("whiteboard", "whiteboard_1", {0, 8, 1}, "plastic")});
  KnowledgeDatabase db(s, std::move(model));
  TemplateAnswerer a;
  auto ask = [&](const std::string& q) {
    const auto r = db.query({}, q, kDefaultTopK);
    return a.answer(render_prompt(q, r, r.pose), std::nullopt);
  };
  const std::string q = "How many printers can be found?";
  const std::string before = ask(q);
  db.set_visibility("printer_2", false);
  const std::string after = ask(q);
  db.set_visibility("printer_2", true);

  const auto snapshot = db.index_snapshot();
  db.set_visibility("chair_1", false);
  bool chair_absent = true;
  for (const auto& question : generate_questions(s, {}, 1)) {
    for (std::size_t k : {std::size_t{1}, kDefaultTopK, s.instance_count()}) {
      for (const auto& hit : db.retrieve(question.text, k).ranked)
        if (hit.instance == "chair_1") chair_absent = false;
    }
  }
  db.set_visibility("chair_1", true);
  const bool restored = db.index_snapshot() == snapshot;
  return {before == "2" && after == "1" && chair_absent && restored,
          fmt("printers \"%s\" -> \"%s\"; chair_1 %s while hidden; index %s after re-show",
              before.c_str(), after.c_str(), chair_absent ? "absent" : "PRESENT",
              restored ? "bit-identical" : "CHANGED")};
}

Outcome service_round_trip(std::shared_ptr<const TwoTowerModel> model, std::uint64_t seed) {
  const Scene s = generate_synthetic_scene(seed, 18, 34, office_vocab(), "office");
  auto db = std::make_shared<KnowledgeDatabase>(s, std::move(model));
  auto server = serve(db, std::make_shared<TemplateAnswerer>(), "127.0.0.1:0");
  const auto qs = generate_questions(s, kPose, seed, CorpusConfig::uniform(1));
  Client client(server->address());
  std::vector<LatencySample> samples;
  int malformed = 0, order_violations = 0;
  for (int i = 0; i < 20; ++i) {
    const QueryRequest req{"r" + std::to_string(i), qs[static_cast<std::size_t>(i)].text, kPose, std::nullopt};
    const auto r = client.query(req);
    const auto& resp = r.response;
    if (resp.error || resp.request_id != req.request_id || resp.answer.empty() ||
        resp.retrieved.size() != kDefaultTopK || !std::isfinite(r.end_to_end_ms)) {
      ++malformed;
    }
    if (!(resp.timings.server_total_ms <= r.end_to_end_ms)) ++order_violations;
    samples.push_back({req.request_id, r.communication_ms, resp.timings.server_total_ms,
                       r.end_to_end_ms, resp.timings.server_total_ms});
  }
  server->stop();
  const auto rep = LatencyReport::from_samples(samples);
  return {malformed == 0 && order_violations == 0 && rep.mean_end_to_end_ms < 50.0,
          fmt("20 queries, %d malformed, %d timing violations; mean end-to-end %.3f ms "
              "(communication %.3f ms, server %.3f ms)",
              malformed, order_violations, rep.mean_end_to_end_ms, rep.mean_communication_ms,
              rep.mean_generation_ms)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 7;
  const auto t0 = Clock::now();
  int failed = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    std::printf("[%s] %2d %-34s %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  };
  auto guarded = [&](int id, const char* name, const std::function<Outcome()>& f) {
    try {
      report(id, name, f());
    } catch (const std::exception& e) {
      report(id, name, {false, std::string("exception: ") + e.what()});
    }
  };

  guarded(1, "spatial oracle equivalence", [&] { return spatial_oracle(seed); });
  guarded(2, "rotation matrix validity", [&] { return rotation_validity(seed); });
  guarded(3, "loss unit values", [&] { return loss_values(seed); });
  guarded(4, "gradient check", [&] { return gradient_correctness(seed); });
  guarded(5, "retrieval equals brute force", [&] { return retrieval_brute_force(seed); });

  Outcome c6;
  std::string r6;
  guarded(6, "recall monotonicity in k", [&] {
    r6 = recall_monotonicity_report(seed, &c6);
    return c6;
  });

  TrainingRun run;
  bool trained = false;
  guarded(7, "training effectiveness", [&] {
    run = training_effectiveness(seed);
    trained = true;
    return run.outcome;
  });
  guarded(8, "cross-scene generalization", [&] {
    if (!trained) return Outcome{false, "no checkpoint from criterion 7"};
    return run.transfer;
  });
  guarded(9, "perfect-retrieval answer accuracy", [&] { return perfect_retrieval(seed); });
  guarded(10, "update semantics", [&] {
    if (!trained) return Outcome{false, "no checkpoint from criterion 7"};
    return update_semantics(run.trained);
  });
  guarded(11, "service round trip", [&] {
    if (!trained) return Outcome{false, "no checkpoint from criterion 7"};
    return service_round_trip(run.trained, seed);
  });
  guarded(12, "determinism", [&] {
    if (!trained) return Outcome{false, "no run from criterion 7 to compare"};
    const std::string again6 = recall_monotonicity_report(seed, nullptr);
    const TrainingRun again = training_effectiveness(seed);
    const bool same6 = again6 == r6;
    const bool same7 = again.report == run.report;
    const bool same8 = again.transfer_report == run.transfer_report;
    return Outcome{same6 && same7 && same8,
                   fmt("repeat run reports byte-identical: k-sweep %s, training %s, transfer %s "
                       "(%zu + %zu + %zu bytes)",
                       same6 ? "yes" : "NO", same7 ? "yes" : "NO", same8 ? "yes" : "NO", r6.size(),
                       run.report.size(), run.transfer_report.size())};
  });

  std::printf("%d/12 criteria passed in %.1f s (seed %llu, kernels %s)\n", 12 - failed,
              seconds_since(t0), static_cast<unsigned long long>(seed),
              std::string(kernels::backend_name(kernels::active_backend())).c_str());
  return failed == 0 ? 0 : 1;
}
