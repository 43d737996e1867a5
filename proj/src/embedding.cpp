#include "scenerag/embedding.hpp"

#include <cctype>
#include <cmath>

#include "scenerag/errors.hpp"

namespace scenerag {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  int cur_kind = 0;  // 1 letters, 2 digits
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
    cur_kind = 0;
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    int kind = 0;
    if (std::isalpha(c)) {
      kind = 1;
    } else if (std::isdigit(c)) {
      kind = 2;
    }
    if (kind == 0) {
      flush();
      continue;
    }
    if (kind != cur_kind) flush();
    cur_kind = kind;
    cur.push_back(static_cast<char>(std::tolower(c)));
  }
  flush();
  return tokens;
}

std::string info_text(std::string_view category, std::string_view instance) {
  std::string out;
  out.reserve(category.size() + instance.size() + 1);
  out.append(category).append(" ").append(instance);
  return out;
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

HashEmbedder::HashEmbedder(EmbedderConfig config)
    : config_(config), basis_(kFnvOffset ^ splitmix64(config.seed)) {
  if (config_.dimension == 0) throw InvalidArgument("embedding dimension must be positive");
}

std::pair<std::size_t, double> HashEmbedder::feature_slot(std::string_view feature) const {
  std::uint64_t h = basis_;
  for (char c : feature) {
    h ^= static_cast<unsigned char>(c);
    h *= kFnvPrime;
  }
  h = splitmix64(h);
  const double sign = (h >> 63) != 0 ? -1.0 : 1.0;
  return {static_cast<std::size_t>((h & 0x7fffffffffffffffULL) % config_.dimension), sign};
}

EmbeddingVector HashEmbedder::embed(std::string_view text) const {
  EmbeddingVector v(config_.dimension, 0.0);
  auto add = [&](std::string_view feature) {
    auto [bucket, sign] = feature_slot(feature);
    v[bucket] += sign;
  };
  std::string key;
  for (const auto& tok : tokenize(text)) {
    key.assign("w:").append(tok);
    add(key);
    const std::string padded = "<" + tok + ">";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
      key.assign("g:").append(padded, i, 3);
      add(key);
    }
  }
  double sq = 0.0;
  for (double x : v) sq += x * x;
  if (sq > 0.0) {
    const double inv = 1.0 / std::sqrt(sq);
    for (double& x : v) x *= inv;
  }
  return v;
}

}  // namespace scenerag
