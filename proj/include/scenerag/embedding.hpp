#pragma once
// Base text embedders. The built-in one is signed feature hashing over word
// tokens and boundary-padded character trigrams.

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace scenerag {

using EmbeddingVector = std::vector<double>;

/// Lowercases ASCII and splits on every non-alphanumeric byte (underscore
/// included). Letter runs and digit runs become separate tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Canonical text of an index key: "<category> <instance>".
std::string info_text(std::string_view category, std::string_view instance);

struct EmbedderConfig {
  std::size_t dimension = 256;
  std::uint64_t seed = 0;

  friend bool operator==(const EmbedderConfig&, const EmbedderConfig&) = default;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dimension() const = 0;
  /// Deterministic for fixed text and configuration.
  virtual EmbeddingVector embed(std::string_view text) const = 0;
};

class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(EmbedderConfig config = {});

  std::size_t dimension() const override { return config_.dimension; }
  EmbeddingVector embed(std::string_view text) const override;
  const EmbedderConfig& config() const { return config_; }

  /// Bucket in [0, dimension) and sign of a single feature string.
  std::pair<std::size_t, double> feature_slot(std::string_view feature) const;

 private:
  EmbedderConfig config_;
  std::uint64_t basis_;
};

}  // namespace scenerag
