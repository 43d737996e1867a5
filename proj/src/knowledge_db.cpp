#include "scenerag/knowledge_db.hpp"

#include <algorithm>
#include <mutex>

#include "scenerag/errors.hpp"

namespace scenerag {

bool ranks_before(const ScoredId& a, const ScoredId& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.instance < b.instance;
}

KnowledgeDatabase::KnowledgeDatabase(std::shared_ptr<const TwoTowerModel> model, std::string name)
    : name_(std::move(name)), model_(std::move(model)) {
  if (!model_) throw InvalidArgument("knowledge database needs a model");
}

KnowledgeDatabase::KnowledgeDatabase(const Scene& scene, std::shared_ptr<const TwoTowerModel> model,
                                     UserPose pose)
    : KnowledgeDatabase(std::move(model), scene.name()) {
  user_ = pose;
  for (const auto& o : scene.objects()) {
    records_[o.instance] = o;
    if (o.visible) index_add(o);
  }
}

void KnowledgeDatabase::index_add(const ObjectRecord& r) {
  auto it = std::find_if(index_.begin(), index_.end(),
                         [&](const IndexEntry& e) { return e.instance == r.instance; });
  if (it != index_.end()) return;
  index_.push_back({r.instance, forward_information(*model_, {r.category, r.instance})});
}

void KnowledgeDatabase::index_remove(const std::string& instance) {
  std::erase_if(index_, [&](const IndexEntry& e) { return e.instance == instance; });
}

std::uint64_t KnowledgeDatabase::upsert_object(ObjectRecord record) {
  if (!instance_matches_category(record.category, record.instance)) {
    throw ValidationError("instance '" + record.instance + "' does not match category '" +
                          record.category + "'");
  }
  record = validated(std::move(record));
  std::unique_lock lock(mu_);
  record.scene_name = name_;
  auto it = records_.find(record.instance);
  const bool was_visible = it != records_.end() && it->second.visible;
  if (it != records_.end() && it->second.category != record.category) {
    throw ValidationError("category of '" + record.instance + "' cannot change");
  }
  if (record.visible && !was_visible) index_add(record);
  if (!record.visible && was_visible) index_remove(record.instance);
  records_[record.instance] = std::move(record);
  return ++revision_;
}

std::uint64_t KnowledgeDatabase::set_visibility(const std::string& instance, bool visible) {
  std::unique_lock lock(mu_);
  auto it = records_.find(instance);
  if (it == records_.end()) throw NotFound("unknown instance '" + instance + "'");
  it->second.visible = visible;
  if (visible) {
    index_add(it->second);
  } else {
    index_remove(instance);
  }
  return ++revision_;
}

std::uint64_t KnowledgeDatabase::set_user_pose(const UserPose& pose) {
  UserPose p = pose;
  p.orientation = normalized(pose.orientation);
  if (!is_finite(p.position)) throw InvalidArgument("non-finite user position");
  std::unique_lock lock(mu_);
  user_ = p;
  return ++revision_;
}

std::uint64_t KnowledgeDatabase::set_model(std::shared_ptr<const TwoTowerModel> model) {
  if (!model) throw InvalidArgument("knowledge database needs a model");
  std::unique_lock lock(mu_);
  model_ = std::move(model);
  for (auto& e : index_) {
    const auto& r = records_.at(e.instance);
    e.vector = forward_information(*model_, {r.category, r.instance});
  }
  return ++revision_;
}

RetrievalResult KnowledgeDatabase::retrieve(std::string_view question, std::size_t k) const {
  std::shared_lock lock(mu_);
  return retrieve_locked(question, k);
}

RetrievalResult KnowledgeDatabase::query(const UserPose& pose, std::string_view question,
                                         std::size_t k) {
  UserPose p = pose;
  p.orientation = normalized(pose.orientation);
  if (!is_finite(p.position)) throw InvalidArgument("non-finite user position");
  std::unique_lock lock(mu_);
  user_ = p;
  ++revision_;
  return retrieve_locked(question, k);
}

RetrievalResult KnowledgeDatabase::retrieve_locked(std::string_view question,
                                                   std::size_t k) const {
  if (k == 0) throw InvalidArgument("k must be >= 1");
  if (index_.empty()) throw EmptyIndex("the knowledge index is empty");
  const std::vector<double> qv = forward_question(*model_, question);

  std::vector<ScoredId> scored;
  scored.reserve(index_.size());
  for (const auto& e : index_) scored.push_back({e.instance, cosine_sim(qv, e.vector)});
  const std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                    ranks_before);
  scored.resize(n);

  RetrievalResult out;
  out.pose = user_;
  out.revision = revision_;
  out.ranked = std::move(scored);
  for (const auto& s : out.ranked) {
    const ObjectRecord& r = records_.at(s.instance);
    out.expanded.push_back(r);
    out.spatial_facts.push_back(relative_position(r.position, user_));
  }
  return out;
}

std::uint64_t KnowledgeDatabase::revision() const {
  std::shared_lock lock(mu_);
  return revision_;
}

UserPose KnowledgeDatabase::user_pose() const {
  std::shared_lock lock(mu_);
  return user_;
}

std::shared_ptr<const TwoTowerModel> KnowledgeDatabase::model() const {
  std::shared_lock lock(mu_);
  return model_;
}

std::optional<ObjectRecord> KnowledgeDatabase::record(const std::string& instance) const {
  std::shared_lock lock(mu_);
  auto it = records_.find(instance);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

std::size_t KnowledgeDatabase::index_size() const {
  std::shared_lock lock(mu_);
  return index_.size();
}

std::vector<IndexEntry> KnowledgeDatabase::index_snapshot() const {
  std::shared_lock lock(mu_);
  std::vector<IndexEntry> out = index_;
  std::sort(out.begin(), out.end(),
            [](const IndexEntry& a, const IndexEntry& b) { return a.instance < b.instance; });
  return out;
}

Scene KnowledgeDatabase::to_scene() const {
  std::shared_lock lock(mu_);
  std::vector<ObjectRecord> objs;
  objs.reserve(records_.size());
  for (const auto& [id, r] : records_) objs.push_back(r);
  return Scene(name_, std::move(objs));
}

nlohmann::json KnowledgeDatabase::export_snapshot() const {
  nlohmann::json j = to_json(to_scene());
  j["user_pose"] = to_json(user_pose());
  return j;
}

std::unique_ptr<KnowledgeDatabase> KnowledgeDatabase::import_snapshot(
    const nlohmann::json& j, std::shared_ptr<const TwoTowerModel> model) {
  Scene scene = scene_from_json(j);
  UserPose pose;
  if (j.contains("user_pose")) pose = user_pose_from_json(j["user_pose"]);
  return std::make_unique<KnowledgeDatabase>(scene, std::move(model), pose);
}

}  // namespace scenerag
