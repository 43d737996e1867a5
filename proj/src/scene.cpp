#include "scenerag/scene.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <unordered_set>

#include "scenerag/errors.hpp"

namespace scenerag {

Quat normalized(const Quat& q) {
  if (!is_finite(q)) throw DegenerateQuaternion("quaternion has non-finite components");
  const double n = q.norm();
  if (!(n > 1e-12)) throw DegenerateQuaternion("quaternion norm is zero");
  // Already unit up to rounding: keep it so that normalization is idempotent
  // and saved scenes reload bit-identically.
  if (std::abs(n - 1.0) <= 4 * std::numeric_limits<double>::epsilon()) return q;
  return {q.x / n, q.y / n, q.z / n, q.w / n};
}

std::optional<std::uint64_t> instance_serial(std::string_view instance) {
  const auto pos = instance.rfind('_');
  if (pos == std::string_view::npos || pos + 1 >= instance.size()) return std::nullopt;
  const std::string_view digits = instance.substr(pos + 1);
  if (digits.front() == '0') return std::nullopt;
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || value == 0) return std::nullopt;
  return value;
}

bool instance_matches_category(std::string_view category, std::string_view instance) {
  if (category.empty() || instance.size() <= category.size() + 1) return false;
  if (instance.substr(0, category.size()) != category || instance[category.size()] != '_') {
    return false;
  }
  const auto serial = instance_serial(instance);
  return serial.has_value() && instance.rfind('_') == category.size();
}

ObjectRecord validated(ObjectRecord record) {
  if (!instance_matches_category(record.category, record.instance)) {
    throw ValidationError("instance '" + record.instance + "' does not match category '" +
                          record.category + "'");
  }
  if (!is_finite(record.position)) {
    throw ValidationError("non-finite position for '" + record.instance + "'");
  }
  try {
    record.orientation = normalized(record.orientation);
  } catch (const DegenerateQuaternion& e) {
    throw ValidationError("orientation of '" + record.instance + "': " + e.what());
  }
  if (record.material.empty()) record.material = std::string(kUnknownMaterial);
  return record;
}

Scene::Scene(std::string name, std::vector<ObjectRecord> objects) : name_(std::move(name)) {
  std::unordered_set<std::string> seen;
  objects_.reserve(objects.size());
  for (auto& o : objects) {
    if (!seen.insert(o.instance).second) {
      throw ValidationError("duplicate instance id '" + o.instance + "'");
    }
    o.scene_name = name_;
    objects_.push_back(validated(std::move(o)));
  }
}

const ObjectRecord* Scene::find(std::string_view instance) const {
  auto it = std::find_if(objects_.begin(), objects_.end(),
                         [&](const ObjectRecord& o) { return o.instance == instance; });
  return it == objects_.end() ? nullptr : &*it;
}

const ObjectRecord& Scene::at(std::string_view instance) const {
  const ObjectRecord* r = find(instance);
  if (r == nullptr) throw NotFound("unknown instance '" + std::string(instance) + "'");
  return *r;
}

std::vector<std::string> Scene::categories() const {
  std::vector<std::string> out;
  for (const auto& o : objects_) {
    if (std::find(out.begin(), out.end(), o.category) == out.end()) out.push_back(o.category);
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

Vec3 vec3_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) {
    throw ParseError(std::string(what) + " must be an array of 3 numbers");
  }
  Vec3 v{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw ParseError(std::string(what) + " must contain numbers");
    v[i] = j[i].get<double>();
  }
  if (!is_finite(v)) throw ParseError(std::string(what) + " must be finite");
  return v;
}

Quat quat_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 4) {
    throw ParseError(std::string(what) + " must be an array of 4 numbers");
  }
  double c[4];
  for (std::size_t i = 0; i < 4; ++i) {
    if (!j[i].is_number()) throw ParseError(std::string(what) + " must contain numbers");
    c[i] = j[i].get<double>();
  }
  Quat q{c[0], c[1], c[2], c[3]};
  if (!is_finite(q)) throw ParseError(std::string(what) + " must be finite");
  return q;
}

template <typename T>
T required(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

nlohmann::json to_json(const UserPose& pose) {
  const auto& p = pose.position;
  const auto& q = pose.orientation;
  return {{"position", {p[0], p[1], p[2]}}, {"orientation", {q.x, q.y, q.z, q.w}}};
}

UserPose user_pose_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("user pose must be an object");
  if (!j.contains("position") || !j.contains("orientation")) {
    throw ParseError("user pose needs 'position' and 'orientation'");
  }
  UserPose pose;
  pose.position = vec3_from_json(j["position"], "position");
  pose.orientation = quat_from_json(j["orientation"], "orientation");
  try {
    pose.orientation = normalized(pose.orientation);
  } catch (const DegenerateQuaternion& e) {
    throw ValidationError(std::string("user orientation: ") + e.what());
  }
  return pose;
}

nlohmann::json to_json(const ObjectRecord& r) {
  const auto& p = r.position;
  const auto& q = r.orientation;
  return {{"category", r.category},
          {"instance", r.instance},
          {"position", {p[0], p[1], p[2]}},
          {"orientation", {q.x, q.y, q.z, q.w}},
          {"interactive", r.interactive},
          {"color", r.color},
          {"material", r.material},
          {"visible", r.visible}};
}

ObjectRecord object_from_json(const nlohmann::json& j, const std::string& scene_name) {
  if (!j.is_object()) throw ParseError("object entry must be a JSON object");
  ObjectRecord r;
  r.scene_name = scene_name;
  r.category = required<std::string>(j, "category");
  r.instance = required<std::string>(j, "instance");
  if (!j.contains("position")) throw ParseError("missing field 'position'");
  if (!j.contains("orientation")) throw ParseError("missing field 'orientation'");
  r.position = vec3_from_json(j["position"], "position");
  r.orientation = quat_from_json(j["orientation"], "orientation");
  r.interactive = required<bool>(j, "interactive");
  r.color = required<std::string>(j, "color");
  auto mat = j.find("material");
  if (mat == j.end() || mat->is_null()) {
    r.material = std::string(kUnknownMaterial);
  } else if (mat->is_string()) {
    r.material = mat->get<std::string>();
  } else {
    throw ParseError("field 'material' has the wrong type");
  }
  r.visible = required<bool>(j, "visible");
  return r;
}

nlohmann::json to_json(const Scene& scene) {
  nlohmann::json objs = nlohmann::json::array();
  for (const auto& o : scene.objects()) objs.push_back(to_json(o));
  return {{"name", scene.name()}, {"objects", std::move(objs)}};
}

Scene scene_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("scene document must be a JSON object");
  auto name = required<std::string>(j, "name");
  auto it = j.find("objects");
  if (it == j.end() || !it->is_array()) throw ParseError("'objects' must be an array");
  std::vector<ObjectRecord> objects;
  objects.reserve(it->size());
  for (const auto& o : *it) objects.push_back(object_from_json(o, name));
  return Scene(std::move(name), std::move(objects));
}

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scene file '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("malformed scene file '" + path.string() + "': " + e.what());
  }
  return scene_from_json(j);
}

void save_scene(const Scene& scene, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write scene file '" + path.string() + "'");
  out << to_json(scene).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic scenes

const std::vector<std::string>& office_vocab() {
  static const std::vector<std::string> v{
      "desk",      "chair",      "monitor",      "keyboard",     "printer",  "lamp",
      "bookshelf", "cabinet",    "clock",        "plant",        "whiteboard", "sofa",
      "tray",      "laptop",     "mug",          "phone",        "trash bin", "water cooler",
      "coffee table", "filing box", "projector", "stapler"};
  return v;
}

const std::vector<std::string>& viking_vocab() {
  static const std::vector<std::string> v{
      "longhouse", "barrel", "cart",  "longboat", "shield", "axe",
      "torch",     "fence",  "well",  "crate",    "anvil",  "banner"};
  return v;
}

const std::vector<std::string>& villa_vocab() {
  static const std::vector<std::string> v{
      "bed",      "pillow",    "armchair",  "rug",        "painting",  "vase",
      "mirror",   "curtain",   "wardrobe",  "nightstand", "bathtub",   "sink",
      "toilet",   "towel",     "candle",    "fireplace",  "piano",     "bench",
      "stool",    "fan",       "television", "speaker",   "dresser",   "ottoman",
      "chandelier", "radiator", "shelf",    "basket",     "sculpture", "blanket"};
  return v;
}

const std::vector<std::string>& restaurant_vocab() {
  static const std::vector<std::string> v{
      "booth",   "menu board", "napkin holder", "salt shaker", "ketchup bottle",
      "fryer",   "grill",      "counter",       "soda machine", "cash register",
      "high chair", "ceiling light", "menu",    "straw dispenser", "burger",
      "fries",   "cup",        "plate",         "fork",        "spoon"};
  return v;
}

const std::vector<std::string>& grocery_vocab() {
  static const std::vector<std::string> v{
      "shelf unit",   "shopping cart", "apple crate", "freezer", "fridge",
      "scale",        "checkout",      "cereal box",  "milk carton", "bread",
      "banana",       "tomato",        "bottle",      "jar",     "can",
      "sign",         "bag",           "scanner",     "pallet",  "price tag"};
  return v;
}

namespace {

const std::vector<std::string>& colors() {
  static const std::vector<std::string> v{"red",   "blue",  "green", "white", "black",
                                          "brown", "gray",  "yellow", "orange", "silver"};
  return v;
}

const std::vector<std::string>& materials() {
  static const std::vector<std::string> v{"wood",    "metal", "alloy",   "plastic", "glass",
                                          "fabric",  "leather", "stone", "ceramic", "paper"};
  return v;
}

// Uniform random rotation (Shoemake's subgroup algorithm).
Quat random_unit_quaternion(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double u1 = u(rng), u2 = u(rng), u3 = u(rng);
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double t2 = 2.0 * std::numbers::pi * u2, t3 = 2.0 * std::numbers::pi * u3;
  return normalized({a * std::sin(t2), a * std::cos(t2), b * std::sin(t3), b * std::cos(t3)});
}

}  // namespace

Scene generate_synthetic_scene(std::uint64_t seed, std::size_t n_categories,
                               std::size_t n_instances, const std::vector<std::string>& vocab,
                               std::string name) {
  if (n_categories == 0) throw InvalidArgument("n_categories must be positive");
  if (n_categories > vocab.size()) {
    throw InvalidArgument("n_categories exceeds vocabulary size");
  }
  if (n_instances < n_categories) throw InvalidArgument("n_instances must be >= n_categories");

  std::mt19937_64 rng(seed);
  std::vector<std::string> cats(vocab.begin(), vocab.end());
  std::shuffle(cats.begin(), cats.end(), rng);
  cats.resize(n_categories);

  std::vector<std::size_t> per_cat(n_categories, 1);
  std::uniform_int_distribution<std::size_t> pick(0, n_categories - 1);
  for (std::size_t extra = n_instances - n_categories; extra > 0; --extra) ++per_cat[pick(rng)];

  std::uniform_real_distribution<double> horiz(-10.0, 10.0);
  std::uniform_real_distribution<double> height(0.0, 3.0);
  std::uniform_int_distribution<std::size_t> color_pick(0, colors().size() - 1);
  std::uniform_int_distribution<std::size_t> material_pick(0, materials().size());
  std::bernoulli_distribution interactive(0.5);

  std::vector<ObjectRecord> objects;
  objects.reserve(n_instances);
  for (std::size_t c = 0; c < n_categories; ++c) {
    for (std::size_t s = 1; s <= per_cat[c]; ++s) {
      ObjectRecord r;
      r.category = cats[c];
      r.instance = cats[c] + "_" + std::to_string(s);
      r.position = {horiz(rng), horiz(rng), height(rng)};
      r.orientation = random_unit_quaternion(rng);
      r.interactive = interactive(rng);
      r.color = colors()[color_pick(rng)];
      const std::size_t m = material_pick(rng);
      r.material = m == materials().size() ? std::string(kUnknownMaterial) : materials()[m];
      r.visible = true;
      objects.push_back(std::move(r));
    }
  }
  return Scene(std::move(name), std::move(objects));
}

}  // namespace scenerag
