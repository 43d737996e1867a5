#pragma once
// Shared fixtures for the unit tests.

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "scenerag/scene.hpp"

namespace scenerag::fixtures {

inline ObjectRecord make_object(std::string category, std::string instance, Vec3 position,
                                std::string material = "unknown", std::string color = "gray",
                                bool interactive = false) {
  ObjectRecord r;
  r.scene_name = "office";
  r.category = std::move(category);
  r.instance = std::move(instance);
  r.position = position;
  r.material = std::move(material);
  r.color = std::move(color);
  r.interactive = interactive;
  return r;
}

/// Small office with two printers, an alloy clock and tray_2 behind-left of
/// the origin.
inline Scene office_fixture() {
  return Scene("office", {
                             make_object("printer", "printer_1", {2, 3, 0}, "plastic", "white", true),
                             make_object("printer", "printer_2", {-4, 1, 0}, "plastic", "black", true),
                             make_object("clock", "clock_1", {0, 5, 2}, "alloy", "silver"),
                             make_object("tray", "tray_1", {1, -2, 1}, "wood", "brown"),
                             make_object("tray", "tray_2", {-1, -1, 0}, "wood", "brown"),
                             make_object("chair", "chair_1", {1, 1, 0}, "fabric", "blue", true),
                             make_object("chair", "chair_2", {3, 4, 0}, "fabric", "red", true),
                             make_object("door", "door_1", {0, 8, 0}, "wood", "white", true),
                             make_object("table", "table_1", {2, 2, 0}, "wood", "oak"),
                             make_object("monitor", "monitor_1", {2, 2, 1}, "glass", "black", true),
                         });
}

inline Vec3 random_vec3(std::mt19937_64& rng, double lo = -10.0, double hi = 10.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  return {d(rng), d(rng), d(rng)};
}

/// Uniform random unit quaternion (Shoemake).
inline Quat random_unit_quat(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double u1 = u(rng), u2 = u(rng), u3 = u(rng);
  const double a = std::sqrt(1 - u1), b = std::sqrt(u1);
  const double t1 = 2 * M_PI * u2, t2 = 2 * M_PI * u3;
  return {a * std::sin(t1), a * std::cos(t1), b * std::sin(t2), b * std::cos(t2)};
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("scenerag_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace scenerag::fixtures
