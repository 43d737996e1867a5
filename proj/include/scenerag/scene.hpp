#pragma once
// Scene, object and user-pose data model plus the JSON scene file format.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "scenerag/geometry.hpp"

namespace scenerag {

inline constexpr std::string_view kUnknownMaterial = "unknown";

struct ObjectRecord {
  std::string scene_name;
  std::string category;
  std::string instance;
  Vec3 position{0.0, 0.0, 0.0};
  Quat orientation;
  bool interactive = false;
  std::string color;
  std::string material{kUnknownMaterial};
  bool visible = true;

  friend bool operator==(const ObjectRecord&, const ObjectRecord&) = default;
};

struct UserPose {
  Vec3 position{0.0, 0.0, 0.0};
  Quat orientation;

  friend bool operator==(const UserPose&, const UserPose&) = default;
};

class Scene {
 public:
  Scene() = default;
  /// Validates and normalizes `objects`; throws ValidationError.
  Scene(std::string name, std::vector<ObjectRecord> objects);

  const std::string& name() const { return name_; }
  const std::vector<ObjectRecord>& objects() const { return objects_; }

  /// nullptr when the instance id is unknown.
  const ObjectRecord* find(std::string_view instance) const;
  /// Throws NotFound when the instance id is unknown.
  const ObjectRecord& at(std::string_view instance) const;

  /// Distinct categories in first-appearance order.
  std::vector<std::string> categories() const;
  std::size_t category_count() const { return categories().size(); }
  std::size_t instance_count() const { return objects_.size(); }

  friend bool operator==(const Scene&, const Scene&) = default;

 private:
  std::string name_;
  std::vector<ObjectRecord> objects_;
};

/// True when `instance` is `category` followed by '_' and a positive integer
/// serial without leading zeros.
bool instance_matches_category(std::string_view category, std::string_view instance);

/// Serial number of an instance id ("chair_12" -> 12); nullopt if malformed.
std::optional<std::uint64_t> instance_serial(std::string_view instance);

/// Checks a single record's invariants and returns it with a unit quaternion.
ObjectRecord validated(ObjectRecord record);

nlohmann::json to_json(const UserPose& pose);
UserPose user_pose_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ObjectRecord& record);
ObjectRecord object_from_json(const nlohmann::json& j, const std::string& scene_name);

nlohmann::json to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);

Scene load_scene(const std::filesystem::path& path);
void save_scene(const Scene& scene, const std::filesystem::path& path);

/// Category vocabularies for synthetic scenes. The office and viking lists
/// share no tokens, so a model trained on one sees the other as unseen words.
const std::vector<std::string>& office_vocab();
const std::vector<std::string>& viking_vocab();
const std::vector<std::string>& villa_vocab();
const std::vector<std::string>& restaurant_vocab();
const std::vector<std::string>& grocery_vocab();

/// Deterministic random scene: the first `n_categories` entries of a seeded
/// shuffle of `vocab`, one instance each plus the remainder spread randomly.
Scene generate_synthetic_scene(std::uint64_t seed, std::size_t n_categories,
                               std::size_t n_instances,
                               const std::vector<std::string>& vocab,
                               std::string name = "synthetic");

}  // namespace scenerag
