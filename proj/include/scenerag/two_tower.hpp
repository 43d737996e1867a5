#pragma once
// Two-tower retriever: a question tower and an information tower, each an
// affine-tanh-affine map from the base embedding into a shared space, trained
// with the positive / margin-hinge negative / weighted hard-negative loss.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "scenerag/embedding.hpp"

namespace scenerag {

/// Index key of an object: category and instance id.
struct InfoKey {
  std::string category;
  std::string instance;

  friend bool operator==(const InfoKey&, const InfoKey&) = default;
  friend auto operator<=>(const InfoKey&, const InfoKey&) = default;
};

enum class Label { Pos, Neg, Hneg };

const char* to_string(Label l);
Label label_from_string(std::string_view s);

struct TrainingSample {
  std::string question;
  InfoKey info;
  Label label = Label::Pos;

  friend bool operator==(const TrainingSample&, const TrainingSample&) = default;
};

struct TrainConfig {
  double margin = 0.2;
  double w_hneg = 2.0;
  double learning_rate = 0.1;
  int epochs = 1000;
  std::uint64_t seed = 0;

  /// Learning rate and epoch count used for transformer fine-tuning.
  static TrainConfig finetune_preset();
  /// Throws InvalidArgument on out-of-range values.
  void validate() const;
};

/// Affine(D->H), tanh, affine(H->E). Weights row-major (out x in).
struct Tower {
  std::size_t in = 0;
  std::size_t hidden = 0;
  std::size_t out = 0;
  std::vector<double> w1, b1, w2, b2;

  static Tower zeros(std::size_t in, std::size_t hidden, std::size_t out);
  /// Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases.
  static Tower glorot(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng);

  std::vector<double> forward(std::span<const double> x) const;
  std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  /// Parameter blocks in checkpoint order: w1, b1, w2, b2.
  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;

  friend bool operator==(const Tower&, const Tower&) = default;
};

struct ModelDims {
  std::size_t embed = 256;   // D
  std::size_t hidden = 128;  // H
  std::size_t output = 64;   // E

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

class TwoTowerModel {
 public:
  /// Seeded Glorot question tower; the information tower starts as an exact
  /// copy and is trained separately from then on.
  static TwoTowerModel initialize(EmbedderConfig embedder, std::size_t hidden, std::size_t output,
                                  std::uint64_t seed);
  static TwoTowerModel initialize(const ModelDims& dims, std::uint64_t seed,
                                  std::uint64_t embed_seed = 0);

  TwoTowerModel(EmbedderConfig embedder, Tower question, Tower information);

  const HashEmbedder& embedder() const { return embedder_; }
  const EmbedderConfig& embedder_config() const { return embedder_.config(); }
  ModelDims dims() const { return {question_.in, question_.hidden, question_.out}; }

  const Tower& question_tower() const { return question_; }
  const Tower& information_tower() const { return information_; }
  Tower& question_tower() { return question_; }
  Tower& information_tower() { return information_; }

  friend bool operator==(const TwoTowerModel& a, const TwoTowerModel& b) {
    return a.embedder_config() == b.embedder_config() && a.question_ == b.question_ &&
           a.information_ == b.information_;
  }

 private:
  HashEmbedder embedder_;
  Tower question_;
  Tower information_;
};

std::vector<double> forward_question(const TwoTowerModel& model, std::string_view question);
std::vector<double> forward_information(const TwoTowerModel& model, const InfoKey& info);

/// Throws ZeroVector when either input has zero norm.
double cosine_sim(std::span<const double> a, std::span<const double> b);

/// Per-sample loss at similarity s: pos 1-s, neg max(0, s-m),
/// hneg w_hneg * max(0, s-m).
double loss_at_similarity(Label label, double s, const TrainConfig& cfg);

/// d(loss)/ds; the hinge derivative at s == m is 0.
double loss_slope(Label label, double s, const TrainConfig& cfg);

double similarity(const TwoTowerModel& model, const TrainingSample& x);
double sample_loss(const TwoTowerModel& model, const TrainingSample& x, const TrainConfig& cfg);
/// Mean sample loss. Throws InvalidArgument on an empty set.
double batch_loss(const TwoTowerModel& model, std::span<const TrainingSample> xs,
                  const TrainConfig& cfg);

/// Gradient of batch_loss, shaped like the two towers.
struct Gradient {
  Tower question;
  Tower information;
};

struct LossAndGradient {
  double loss = 0.0;
  Gradient gradient;
};

LossAndGradient batch_loss_and_gradient(const TwoTowerModel& model,
                                        std::span<const TrainingSample> xs,
                                        const TrainConfig& cfg);

struct TrainResult {
  TwoTowerModel model;
  std::vector<double> loss_history;  // epochs + 1 entries, initial loss first
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Full-batch gradient descent for cfg.epochs steps. Throws TrainingDiverged
/// if the loss becomes non-finite.
TrainResult train(TwoTowerModel model, std::span<const TrainingSample> xs, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Max relative error between the analytic gradient and central differences
/// (step 1e-6) over every parameter. The denominator is floored at 1e-4 so
/// parameters with near-zero gradient compare absolutely.
double gradient_check(const TwoTowerModel& model, std::span<const TrainingSample> xs,
                      const TrainConfig& cfg, double step = 1e-6);

inline constexpr int kCheckpointVersion = 1;

nlohmann::json to_json(const TwoTowerModel& model);
TwoTowerModel model_from_json(const nlohmann::json& j);
void save_model(const TwoTowerModel& model, const std::filesystem::path& path);
TwoTowerModel load_model(const std::filesystem::path& path);

nlohmann::json to_json(const TrainingSample& s);
TrainingSample sample_from_json(const nlohmann::json& j);
void write_samples_jsonl(std::span<const TrainingSample> samples, const std::filesystem::path& path);
std::vector<TrainingSample> read_samples_jsonl(const std::filesystem::path& path);

}  // namespace scenerag
