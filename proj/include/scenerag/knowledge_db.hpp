#pragma once
// Knowledge database: full object records keyed by instance, an embedding
// index over the visible objects keyed only by (category, instance), and
// top-k cosine retrieval with record expansion and per-query spatial facts.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "scenerag/scene.hpp"
#include "scenerag/spatial.hpp"
#include "scenerag/two_tower.hpp"

namespace scenerag {

inline constexpr std::size_t kDefaultTopK = 6;

struct ScoredId {
  std::string instance;
  double score = 0.0;

  friend bool operator==(const ScoredId&, const ScoredId&) = default;
};

/// Ranking order: higher score first, ties by ascending instance id.
bool ranks_before(const ScoredId& a, const ScoredId& b);

struct IndexEntry {
  std::string instance;
  std::vector<double> vector;

  friend bool operator==(const IndexEntry&, const IndexEntry&) = default;
};

struct RetrievalResult {
  std::vector<ScoredId> ranked;
  std::vector<ObjectRecord> expanded;
  std::vector<RelativePosition> spatial_facts;
  UserPose pose;
  std::uint64_t revision = 0;
};

/// Readers (retrieve, accessors) share a lock; mutations and query() take
/// it exclusively, so no reader sees a half-applied write.
class KnowledgeDatabase {
 public:
  explicit KnowledgeDatabase(std::shared_ptr<const TwoTowerModel> model, std::string name = {});
  KnowledgeDatabase(const Scene& scene, std::shared_ptr<const TwoTowerModel> model,
                    UserPose pose = {});

  KnowledgeDatabase(const KnowledgeDatabase&) = delete;
  KnowledgeDatabase& operator=(const KnowledgeDatabase&) = delete;

  /// Inserts or replaces a record. The index changes only if the object
  /// appears, disappears, or is new; attribute edits never re-embed.
  std::uint64_t upsert_object(ObjectRecord record);
  /// Throws NotFound for an unknown instance.
  std::uint64_t set_visibility(const std::string& instance, bool visible);
  std::uint64_t set_user_pose(const UserPose& pose);
  /// Swaps the model and re-embeds the whole index.
  std::uint64_t set_model(std::shared_ptr<const TwoTowerModel> model);

  /// Throws EmptyIndex, InvalidArgument (k == 0), ZeroVector.
  RetrievalResult retrieve(std::string_view question, std::size_t k) const;
  /// set_user_pose followed by retrieve, atomically.
  RetrievalResult query(const UserPose& pose, std::string_view question, std::size_t k);

  const std::string& name() const { return name_; }
  std::uint64_t revision() const;
  UserPose user_pose() const;
  std::shared_ptr<const TwoTowerModel> model() const;
  std::optional<ObjectRecord> record(const std::string& instance) const;
  std::size_t index_size() const;
  /// Index entries sorted by instance id.
  std::vector<IndexEntry> index_snapshot() const;

  /// Records (instance order) as a scene.
  Scene to_scene() const;
  /// Scene document plus a "user_pose" block.
  nlohmann::json export_snapshot() const;
  static std::unique_ptr<KnowledgeDatabase> import_snapshot(
      const nlohmann::json& j, std::shared_ptr<const TwoTowerModel> model);

 private:
  void index_add(const ObjectRecord& r);
  void index_remove(const std::string& instance);
  RetrievalResult retrieve_locked(std::string_view question, std::size_t k) const;

  mutable std::shared_mutex mu_;
  std::string name_;
  std::shared_ptr<const TwoTowerModel> model_;
  std::map<std::string, ObjectRecord> records_;
  std::vector<IndexEntry> index_;
  UserPose user_;
  std::uint64_t revision_ = 0;
};

}  // namespace scenerag
