#include "scenerag/two_tower.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_map>

#include "scenerag/errors.hpp"
#include "scenerag/kernels.hpp"

namespace scenerag {

const char* to_string(Label l) {
  switch (l) {
    case Label::Pos: return "pos";
    case Label::Neg: return "neg";
    case Label::Hneg: return "hneg";
  }
  return "?";
}

Label label_from_string(std::string_view s) {
  if (s == "pos") return Label::Pos;
  if (s == "neg") return Label::Neg;
  if (s == "hneg") return Label::Hneg;
  throw ParseError("unknown label '" + std::string(s) + "'");
}

TrainConfig TrainConfig::finetune_preset() {
  TrainConfig c;
  c.learning_rate = 1e-5;
  c.epochs = 6;
  return c;
}

void TrainConfig::validate() const {
  if (!(margin > 0.0 && margin < 1.0)) throw InvalidArgument("margin must be in (0, 1)");
  if (!(w_hneg >= 1.0)) throw InvalidArgument("w_hneg must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("learning rate must be finite and non-negative");
  }
  if (epochs < 0) throw InvalidArgument("epochs must be non-negative");
}

// ---------------------------------------------------------------------------
// Tower

Tower Tower::zeros(std::size_t in, std::size_t hidden, std::size_t out) {
  Tower t;
  t.in = in;
  t.hidden = hidden;
  t.out = out;
  t.w1.assign(hidden * in, 0.0);
  t.b1.assign(hidden, 0.0);
  t.w2.assign(out * hidden, 0.0);
  t.b2.assign(out, 0.0);
  return t;
}

Tower Tower::glorot(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng) {
  Tower t = zeros(in, hidden, out);
  const double l1 = std::sqrt(6.0 / static_cast<double>(in + hidden));
  const double l2 = std::sqrt(6.0 / static_cast<double>(hidden + out));
  std::uniform_real_distribution<double> u1(-l1, l1);
  for (double& w : t.w1) w = u1(rng);
  std::uniform_real_distribution<double> u2(-l2, l2);
  for (double& w : t.w2) w = u2(rng);
  return t;
}

std::vector<std::span<double>> Tower::blocks() { return {w1, b1, w2, b2}; }

std::vector<std::span<const double>> Tower::blocks() const { return {w1, b1, w2, b2}; }

namespace {

struct TowerCache {
  std::vector<double> hidden;  // tanh activations
  std::vector<double> out;
};

TowerCache forward_cached(const Tower& t, std::span<const double> x) {
  TowerCache c;
  c.hidden.resize(t.hidden);
  kernels::gemv(t.w1, t.hidden, t.in, x, t.b1, c.hidden);
  for (double& h : c.hidden) h = std::tanh(h);
  c.out.resize(t.out);
  kernels::gemv(t.w2, t.out, t.hidden, c.hidden, t.b2, c.out);
  return c;
}

// Accumulates the parameter gradient for output gradient `dy` into `g`.
void backward(const Tower& t, std::span<const double> x, const TowerCache& c,
              std::span<const double> dy, Tower& g) {
  kernels::ger(1.0, dy, c.hidden, g.w2);
  kernels::axpy(1.0, dy, g.b2);
  std::vector<double> dz(t.hidden, 0.0);
  kernels::gemv_t_acc(t.w2, t.out, t.hidden, dy, dz);
  for (std::size_t i = 0; i < t.hidden; ++i) dz[i] *= 1.0 - c.hidden[i] * c.hidden[i];
  kernels::ger(1.0, dz, x, g.w1);
  kernels::axpy(1.0, dz, g.b1);
}

}  // namespace

std::vector<double> Tower::forward(std::span<const double> x) const {
  if (x.size() != in) throw InvalidArgument("tower input has the wrong dimension");
  return forward_cached(*this, x).out;
}

// ---------------------------------------------------------------------------
// Model

TwoTowerModel::TwoTowerModel(EmbedderConfig embedder, Tower question, Tower information)
    : embedder_(embedder), question_(std::move(question)), information_(std::move(information)) {
  auto check = [&](const Tower& t, const char* name) {
    if (t.in != embedder.dimension) {
      throw CheckpointError(std::string(name) + " input dimension does not match the embedder");
    }
    if (t.w1.size() != t.hidden * t.in || t.b1.size() != t.hidden ||
        t.w2.size() != t.out * t.hidden || t.b2.size() != t.out) {
      throw CheckpointError(std::string(name) + " parameter arrays have inconsistent sizes");
    }
  };
  check(question_, "question tower");
  check(information_, "information tower");
  if (question_.hidden != information_.hidden || question_.out != information_.out) {
    throw CheckpointError("towers disagree on hidden/output dimensions");
  }
}

TwoTowerModel TwoTowerModel::initialize(EmbedderConfig embedder, std::size_t hidden,
                                        std::size_t output, std::uint64_t seed) {
  if (hidden == 0 || output == 0) throw InvalidArgument("tower dimensions must be positive");
  std::mt19937_64 rng(seed);
  Tower q = Tower::glorot(embedder.dimension, hidden, output, rng);
  Tower i = q;
  return TwoTowerModel(embedder, std::move(q), std::move(i));
}

TwoTowerModel TwoTowerModel::initialize(const ModelDims& dims, std::uint64_t seed,
                                        std::uint64_t embed_seed) {
  return initialize(EmbedderConfig{dims.embed, embed_seed}, dims.hidden, dims.output, seed);
}

std::vector<double> forward_question(const TwoTowerModel& model, std::string_view question) {
  return model.question_tower().forward(model.embedder().embed(question));
}

std::vector<double> forward_information(const TwoTowerModel& model, const InfoKey& info) {
  return model.information_tower().forward(
      model.embedder().embed(info_text(info.category, info.instance)));
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine_sim: dimension mismatch");
  const double na = kernels::norm(a);
  const double nb = kernels::norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw ZeroVector("cosine similarity of a zero vector");
  const double s = kernels::dot(a, b) / (na * nb);
  return std::clamp(s, -1.0, 1.0);
}

double loss_at_similarity(Label label, double s, const TrainConfig& cfg) {
  switch (label) {
    case Label::Pos: return 1.0 - s;
    case Label::Neg: return std::max(0.0, s - cfg.margin);
    case Label::Hneg: return cfg.w_hneg * std::max(0.0, s - cfg.margin);
  }
  return 0.0;
}

double loss_slope(Label label, double s, const TrainConfig& cfg) {
  switch (label) {
    case Label::Pos: return -1.0;
    case Label::Neg: return s > cfg.margin ? 1.0 : 0.0;
    case Label::Hneg: return s > cfg.margin ? cfg.w_hneg : 0.0;
  }
  return 0.0;
}

double similarity(const TwoTowerModel& model, const TrainingSample& x) {
  return cosine_sim(forward_question(model, x.question), forward_information(model, x.info));
}

double sample_loss(const TwoTowerModel& model, const TrainingSample& x, const TrainConfig& cfg) {
  return loss_at_similarity(x.label, similarity(model, x), cfg);
}

namespace {

// Forward passes for each distinct question and information text, so shared
// texts are encoded (and back-propagated) once per batch.
struct BatchForward {
  std::vector<std::vector<double>> q_base, i_base;
  std::vector<TowerCache> q_cache, i_cache;
  std::vector<std::size_t> q_of, i_of;  // per-sample slot
};

BatchForward forward_batch(const TwoTowerModel& model, std::span<const TrainingSample> xs) {
  BatchForward bf;
  std::unordered_map<std::string, std::size_t> q_slot, i_slot;
  bf.q_of.reserve(xs.size());
  bf.i_of.reserve(xs.size());
  for (const auto& x : xs) {
    auto [qit, q_new] = q_slot.try_emplace(x.question, bf.q_base.size());
    if (q_new) {
      bf.q_base.push_back(model.embedder().embed(x.question));
      bf.q_cache.push_back(forward_cached(model.question_tower(), bf.q_base.back()));
    }
    bf.q_of.push_back(qit->second);
    const std::string text = info_text(x.info.category, x.info.instance);
    auto [iit, i_new] = i_slot.try_emplace(text, bf.i_base.size());
    if (i_new) {
      bf.i_base.push_back(model.embedder().embed(text));
      bf.i_cache.push_back(forward_cached(model.information_tower(), bf.i_base.back()));
    }
    bf.i_of.push_back(iit->second);
  }
  return bf;
}

// ds/da for s = cos(a, b), accumulated as out += scale * ds/da.
void cosine_grad_acc(std::span<const double> a, std::span<const double> b, double na, double nb,
                     double s, double scale, std::span<double> out) {
  kernels::axpy(scale / (na * nb), b, out);
  kernels::axpy(-scale * s / (na * na), a, out);
}

}  // namespace

double batch_loss(const TwoTowerModel& model, std::span<const TrainingSample> xs,
                  const TrainConfig& cfg) {
  if (xs.empty()) throw InvalidArgument("batch_loss of an empty dataset");
  const BatchForward bf = forward_batch(model, xs);
  double total = 0.0;
  for (std::size_t n = 0; n < xs.size(); ++n) {
    const double s = cosine_sim(bf.q_cache[bf.q_of[n]].out, bf.i_cache[bf.i_of[n]].out);
    total += loss_at_similarity(xs[n].label, s, cfg);
  }
  return total / static_cast<double>(xs.size());
}

LossAndGradient batch_loss_and_gradient(const TwoTowerModel& model,
                                        std::span<const TrainingSample> xs,
                                        const TrainConfig& cfg) {
  if (xs.empty()) throw InvalidArgument("batch_loss of an empty dataset");
  const BatchForward bf = forward_batch(model, xs);
  const ModelDims d = model.dims();
  const double inv_n = 1.0 / static_cast<double>(xs.size());

  std::vector<std::vector<double>> dq(bf.q_cache.size(), std::vector<double>(d.output, 0.0));
  std::vector<std::vector<double>> di(bf.i_cache.size(), std::vector<double>(d.output, 0.0));

  double total = 0.0;
  for (std::size_t n = 0; n < xs.size(); ++n) {
    const auto& qo = bf.q_cache[bf.q_of[n]].out;
    const auto& io = bf.i_cache[bf.i_of[n]].out;
    const double nq = kernels::norm(qo);
    const double ni = kernels::norm(io);
    if (!(nq > 0.0) || !(ni > 0.0)) throw ZeroVector("cosine similarity of a zero vector");
    const double s = std::clamp(kernels::dot(qo, io) / (nq * ni), -1.0, 1.0);
    total += loss_at_similarity(xs[n].label, s, cfg);
    const double g = loss_slope(xs[n].label, s, cfg) * inv_n;
    if (g == 0.0) continue;
    cosine_grad_acc(qo, io, nq, ni, s, g, dq[bf.q_of[n]]);
    cosine_grad_acc(io, qo, ni, nq, s, g, di[bf.i_of[n]]);
  }

  LossAndGradient out{total * inv_n,
                      {Tower::zeros(d.embed, d.hidden, d.output),
                       Tower::zeros(d.embed, d.hidden, d.output)}};
  for (std::size_t k = 0; k < dq.size(); ++k) {
    backward(model.question_tower(), bf.q_base[k], bf.q_cache[k], dq[k], out.gradient.question);
  }
  for (std::size_t k = 0; k < di.size(); ++k) {
    backward(model.information_tower(), bf.i_base[k], bf.i_cache[k], di[k],
             out.gradient.information);
  }
  return out;
}

TrainResult train(TwoTowerModel model, std::span<const TrainingSample> xs, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (xs.empty()) throw InvalidArgument("cannot train on an empty dataset");
  TrainResult result{std::move(model), {}};
  result.loss_history.reserve(static_cast<std::size_t>(cfg.epochs) + 1);

  auto check = [](double loss, int epoch) {
    if (!std::isfinite(loss)) {
      throw TrainingDiverged("loss became non-finite at epoch " + std::to_string(epoch));
    }
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    LossAndGradient lg = batch_loss_and_gradient(result.model, xs, cfg);
    check(lg.loss, epoch);
    result.loss_history.push_back(lg.loss);
    if (on_epoch) on_epoch(epoch, lg.loss);
    auto step = [&](Tower& params, const Tower& grad) {
      auto p = params.blocks();
      auto g = grad.blocks();
      for (std::size_t b = 0; b < p.size(); ++b) kernels::axpy(-cfg.learning_rate, g[b], p[b]);
    };
    step(result.model.question_tower(), lg.gradient.question);
    step(result.model.information_tower(), lg.gradient.information);
  }
  const double final_loss = batch_loss(result.model, xs, cfg);
  check(final_loss, cfg.epochs);
  result.loss_history.push_back(final_loss);
  if (on_epoch) on_epoch(cfg.epochs, final_loss);
  return result;
}

double gradient_check(const TwoTowerModel& model, std::span<const TrainingSample> xs,
                      const TrainConfig& cfg, double step) {
  const LossAndGradient analytic = batch_loss_and_gradient(model, xs, cfg);
  TwoTowerModel probe = model;
  double worst = 0.0;
  auto sweep = [&](Tower& params, const Tower& grad) {
    auto p = params.blocks();
    auto g = grad.blocks();
    for (std::size_t b = 0; b < p.size(); ++b) {
      for (std::size_t k = 0; k < p[b].size(); ++k) {
        const double orig = p[b][k];
        p[b][k] = orig + step;
        const double up = batch_loss(probe, xs, cfg);
        p[b][k] = orig - step;
        const double down = batch_loss(probe, xs, cfg);
        p[b][k] = orig;
        const double numeric = (up - down) / (2.0 * step);
        const double a = g[b][k];
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-4});
        worst = std::max(worst, std::abs(a - numeric) / denom);
      }
    }
  };
  sweep(probe.question_tower(), analytic.gradient.question);
  sweep(probe.information_tower(), analytic.gradient.information);
  return worst;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kCheckpointFormat = "scenerag.two_tower";

nlohmann::json tower_json(const Tower& t) {
  return {{"w1", t.w1}, {"b1", t.b1}, {"w2", t.w2}, {"b2", t.b2}};
}

Tower tower_from_json(const nlohmann::json& j, const ModelDims& d, const char* name) {
  Tower t = Tower::zeros(d.embed, d.hidden, d.output);
  auto read = [&](const char* key, std::vector<double>& dst) {
    if (!j.contains(key) || !j[key].is_array()) {
      throw CheckpointError(std::string(name) + "." + key + " missing");
    }
    if (j[key].size() != dst.size()) {
      throw CheckpointError(std::string(name) + "." + key + " has " +
                            std::to_string(j[key].size()) + " values, expected " +
                            std::to_string(dst.size()));
    }
    for (std::size_t i = 0; i < dst.size(); ++i) {
      const auto& v = j[key][i];
      if (!v.is_number()) throw CheckpointError(std::string(name) + "." + key + " not numeric");
      dst[i] = v.get<double>();
      if (!std::isfinite(dst[i])) throw CheckpointError("non-finite parameter in checkpoint");
    }
  };
  read("w1", t.w1);
  read("b1", t.b1);
  read("w2", t.w2);
  read("b2", t.b2);
  return t;
}

}  // namespace

nlohmann::json to_json(const TwoTowerModel& model) {
  const ModelDims d = model.dims();
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"dims", {{"D", d.embed}, {"H", d.hidden}, {"E", d.output}}},
          {"embedder", {{"kind", "hash"},
                        {"dimension", model.embedder_config().dimension},
                        {"seed", model.embedder_config().seed}}},
          {"parameter_order",
           "question_tower then information_tower; each w1 (H x D row-major), b1 (H), "
           "w2 (E x H row-major), b2 (E)"},
          {"question_tower", tower_json(model.question_tower())},
          {"information_tower", tower_json(model.information_tower())}};
}

TwoTowerModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != kCheckpointFormat) throw CheckpointError("not a model checkpoint");
    if (j.value("version", -1) != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version");
    }
    const auto& dj = j.at("dims");
    ModelDims d{dj.at("D").get<std::size_t>(), dj.at("H").get<std::size_t>(),
                dj.at("E").get<std::size_t>()};
    const auto& ej = j.at("embedder");
    if (ej.value("kind", "") != "hash") throw CheckpointError("unsupported embedder kind");
    EmbedderConfig ec{ej.at("dimension").get<std::size_t>(), ej.at("seed").get<std::uint64_t>()};
    if (ec.dimension != d.embed) {
      throw CheckpointError("embedder dimension " + std::to_string(ec.dimension) +
                            " does not match D=" + std::to_string(d.embed));
    }
    if (d.embed == 0 || d.hidden == 0 || d.output == 0) throw CheckpointError("zero dimension");
    return TwoTowerModel(ec, tower_from_json(j.at("question_tower"), d, "question_tower"),
                         tower_from_json(j.at("information_tower"), d, "information_tower"));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_model(const TwoTowerModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write checkpoint '" + path.string() + "'");
  out << to_json(model).dump() << '\n';
}

TwoTowerModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
  return model_from_json(j);
}

// ---------------------------------------------------------------------------
// Sample files

nlohmann::json to_json(const TrainingSample& s) {
  return {{"question", s.question},
          {"category", s.info.category},
          {"instance", s.info.instance},
          {"label", to_string(s.label)}};
}

TrainingSample sample_from_json(const nlohmann::json& j) {
  try {
    return {j.at("question").get<std::string>(),
            {j.at("category").get<std::string>(), j.at("instance").get<std::string>()},
            label_from_string(j.at("label").get<std::string>())};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed training sample: ") + e.what());
  }
}

void write_samples_jsonl(std::span<const TrainingSample> samples,
                         const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write '" + path.string() + "'");
  for (const auto& s : samples) out << to_json(s).dump() << '\n';
}

std::vector<TrainingSample> read_samples_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::vector<TrainingSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(sample_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace scenerag
