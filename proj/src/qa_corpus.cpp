#include "scenerag/qa_corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <random>
#include <regex>
#include <set>
#include <unordered_set>

#include "scenerag/errors.hpp"

namespace scenerag {

const char* to_string(QuestionKind k) {
  return k == QuestionKind::SingleKnowledge ? "single_knowledge" : "multi_knowledge";
}

const char* to_string(Topic t) {
  switch (t) {
    case Topic::Material: return "material";
    case Topic::Color: return "color";
    case Topic::Interactivity: return "interactivity";
    case Topic::Position: return "position";
    case Topic::Relative: return "relative_position";
    case Topic::Distance: return "distance";
    case Topic::Count: return "count";
  }
  return "?";
}

QuestionKind question_kind_from_string(std::string_view s) {
  if (s == "single_knowledge") return QuestionKind::SingleKnowledge;
  if (s == "multi_knowledge") return QuestionKind::MultiKnowledge;
  throw ParseError("unknown question kind '" + std::string(s) + "'");
}

Topic topic_from_string(std::string_view s) {
  for (Topic t : {Topic::Material, Topic::Color, Topic::Interactivity, Topic::Position,
                  Topic::Relative, Topic::Distance, Topic::Count}) {
    if (s == to_string(t)) return t;
  }
  throw ParseError("unknown topic '" + std::string(s) + "'");
}

const char* topic_class(Topic t) {
  switch (t) {
    case Topic::Relative:
    case Topic::Distance: return "spatial";
    case Topic::Count: return "count";
    default: return "attribute";
  }
}

const std::vector<QuestionTemplate>& question_templates() {
  using K = QuestionKind;
  static const std::vector<QuestionTemplate> t{
      {Topic::Material, K::SingleKnowledge, "What is the material of {ref}?"},
      {Topic::Material, K::SingleKnowledge, "What is {ref} made of?"},
      {Topic::Material, K::SingleKnowledge, "Which material is {ref} made from?"},
      {Topic::Color, K::SingleKnowledge, "What color is {ref}?"},
      {Topic::Color, K::SingleKnowledge, "What is the color of {ref}?"},
      {Topic::Color, K::SingleKnowledge, "Which color does {ref} have?"},
      {Topic::Interactivity, K::SingleKnowledge, "Is {ref} interactive?"},
      {Topic::Interactivity, K::SingleKnowledge, "Can I interact with {ref}?"},
      {Topic::Interactivity, K::SingleKnowledge, "Is {ref} an interactive object?"},
      {Topic::Position, K::SingleKnowledge, "Where is {ref}?"},
      {Topic::Position, K::SingleKnowledge, "What are the coordinates of {ref}?"},
      {Topic::Position, K::SingleKnowledge, "What is the position of {ref}?"},
      {Topic::Relative, K::SingleKnowledge, "Where is {ref} in relation to the player's position?"},
      {Topic::Relative, K::SingleKnowledge, "In which direction is {ref} from me?"},
      {Topic::Relative, K::SingleKnowledge, "Where is {ref} relative to the player?"},
      {Topic::Distance, K::SingleKnowledge, "How far is {ref} from the player?"},
      {Topic::Distance, K::SingleKnowledge, "What is the distance between me and {ref}?"},
      {Topic::Distance, K::SingleKnowledge, "How far away is {ref}?"},
      {Topic::Count, K::MultiKnowledge, "How many {plural} are in the VR scene?"},
      {Topic::Count, K::MultiKnowledge, "How many {plural} can be found?"},
      {Topic::Count, K::MultiKnowledge, "How many {plural} are there?"},
      {Topic::Count, K::MultiKnowledge, "What is the number of {plural} in the scene?"},
  };
  return t;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

struct CompiledTemplate {
  const QuestionTemplate* tmpl;
  std::regex re;
};

std::string escape_regex(std::string_view s) {
  static const std::string special = R"(\^$.|?*+()[]{})";
  std::string out;
  for (char c : s) {
    if (special.find(c) != std::string::npos) out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

std::string pattern_regex(const std::string& pattern) {
  std::string body = pattern;
  if (!body.empty() && body.back() == '?') body.pop_back();
  std::string out;
  std::size_t pos = 0;
  while (pos < body.size()) {
    const auto open = body.find('{', pos);
    if (open == std::string::npos) {
      out += escape_regex(std::string_view(body).substr(pos));
      break;
    }
    out += escape_regex(std::string_view(body).substr(pos, open - pos));
    const auto close = body.find('}', open);
    const std::string slot = body.substr(open + 1, close - open - 1);
    out += slot == "plural" ? "(.+?)s" : "(.+?)";
    pos = close + 1;
  }
  return "\\s*" + out + "\\s*\\??\\s*";
}

const std::vector<CompiledTemplate>& compiled_templates() {
  static const std::vector<CompiledTemplate> compiled = [] {
    std::vector<const QuestionTemplate*> order;
    for (const auto& t : question_templates()) order.push_back(&t);
    // longer patterns first so "Where is X in relation to ..." wins over "Where is X"
    std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
      return a->pattern.size() > b->pattern.size();
    });
    std::vector<CompiledTemplate> out;
    for (const auto* t : order) {
      out.push_back({t, std::regex(pattern_regex(t->pattern), std::regex::icase)});
    }
    return out;
  }();
  return compiled;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

std::optional<ParsedQuestion> parse_question(std::string_view text) {
  const std::string s(text);
  for (const auto& ct : compiled_templates()) {
    std::smatch m;
    if (!std::regex_match(s, m, ct.re)) continue;
    ParsedQuestion p{ct.tmpl->topic, ct.tmpl->kind, trim(m[1].str()), false};
    if (p.kind == QuestionKind::MultiKnowledge) {
      p.by_category = true;
      p.ref = lower(p.ref);
    } else if (lower(p.ref).rfind("the ", 0) == 0) {
      p.by_category = true;
      p.ref = lower(trim(p.ref.substr(4)));
    } else if (!instance_serial(p.ref)) {
      p.by_category = true;
      p.ref = lower(p.ref);
    }
    if (p.ref.empty()) continue;
    return p;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Answer forms

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string out(buf);
  if (out == "-0.00") out = "0.00";
  return out;
}

std::string format_vec3(const Vec3& v) {
  return "(" + format_number(v[0]) + ", " + format_number(v[1]) + ", " + format_number(v[2]) + ")";
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string attribute_answer(Topic topic, const ObjectRecord& r, const RelativePosition& rel) {
  switch (topic) {
    case Topic::Material: return capitalize(r.material);
    case Topic::Color: return capitalize(r.color);
    case Topic::Interactivity: return r.interactive ? "interactive" : "not interactive";
    case Topic::Position: return format_vec3(r.position);
    case Topic::Relative:
      if (rel.qualitative == kAtPlayerPosition) return r.instance + " is " + kAtPlayerPosition;
      return r.instance + " is at the " + rel.qualitative + " of the player";
    case Topic::Distance: return format_number(rel.distance);
    case Topic::Count: break;
  }
  throw InvalidArgument("count is not an attribute topic");
}

std::string count_answer(std::size_t n) { return std::to_string(n); }

std::string canonicalize(std::string_view answer) {
  std::string out;
  bool space = false;
  for (char c : trim(answer)) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = true;
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  while (!out.empty() && out.back() == '.') out.pop_back();
  return out;
}

// ---------------------------------------------------------------------------
// Generation

CorpusConfig CorpusConfig::exhaustive() {
  return {std::vector<std::size_t>(question_templates().size(), kAllSubjects)};
}

CorpusConfig CorpusConfig::uniform(std::size_t n) {
  return {std::vector<std::size_t>(question_templates().size(), n)};
}

namespace {

std::string fill(const std::string& pattern, const std::string& slot, const std::string& value) {
  std::string out = pattern;
  const auto pos = out.find(slot);
  if (pos != std::string::npos) out.replace(pos, slot.size(), value);
  return out;
}

std::vector<std::string> visible_of_category(const Scene& scene, const std::string& category) {
  std::vector<std::string> out;
  for (const auto& o : scene.objects()) {
    if (o.visible && o.category == category) out.push_back(o.instance);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<QuestionRecord> generate_questions(const Scene& scene, const UserPose& user,
                                               std::uint64_t seed, const CorpusConfig& config) {
  const auto& templates = question_templates();
  if (config.per_template.size() != templates.size()) {
    throw InvalidArgument("corpus config needs one count per template");
  }
  std::vector<const ObjectRecord*> objects;
  for (const auto& o : scene.objects()) {
    if (o.visible) objects.push_back(&o);
  }
  if (objects.empty()) throw InvalidArgument("scene has no visible objects");
  std::vector<std::string> categories;
  for (const auto* o : objects) {
    if (std::find(categories.begin(), categories.end(), o->category) == categories.end()) {
      categories.push_back(o->category);
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<QuestionRecord> out;
  for (std::size_t t = 0; t < templates.size(); ++t) {
    const auto& tmpl = templates[t];
    const bool multi = tmpl.kind == QuestionKind::MultiKnowledge;
    const std::size_t n_subjects = multi ? categories.size() : objects.size();
    std::vector<std::size_t> perm(n_subjects);
    for (std::size_t i = 0; i < n_subjects; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    const std::size_t count = config.per_template[t] == kAllSubjects ? n_subjects
                                                                     : config.per_template[t];
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t pick = perm[i % n_subjects];
      QuestionRecord q;
      q.kind = tmpl.kind;
      q.topic = tmpl.topic;
      q.scene = scene.name();
      q.user_pose = user;
      if (multi) {
        const std::string& cat = categories[pick];
        q.subject = cat;
        q.text = fill(tmpl.pattern, "{plural}", cat + "s");
        q.relevant = visible_of_category(scene, cat);
      } else {
        const ObjectRecord& o = *objects[pick];
        q.subject = o.instance;
        const bool sole = visible_of_category(scene, o.category).size() == 1;
        q.text = fill(tmpl.pattern, "{ref}", sole ? "the " + o.category : o.instance);
        q.relevant = {o.instance};
      }
      q.ground_truth = ground_truth(scene, user, q);
      out.push_back(std::move(q));
    }
  }
  return out;
}

std::string ground_truth(const Scene& scene, const UserPose& user, const QuestionRecord& q) {
  if (q.topic == Topic::Count) {
    const auto cats = scene.categories();
    if (std::find(cats.begin(), cats.end(), q.subject) == cats.end()) {
      throw NotFound("unknown category '" + q.subject + "'");
    }
    return count_answer(visible_of_category(scene, q.subject).size());
  }
  const ObjectRecord& r = scene.at(q.subject);
  return attribute_answer(q.topic, r, relative_position(r.position, user));
}

// ---------------------------------------------------------------------------
// Training samples

std::vector<TrainingSample> build_training_samples(const std::vector<QuestionRecord>& questions,
                                                   const Scene& scene, const SampleConfig& config,
                                                   std::uint64_t seed) {
  if (scene.category_count() < 2) {
    throw InvalidArgument("insufficient scene: negatives need at least two categories");
  }
  if (config.hard_negatives > 0) {
    bool any = false;
    for (const auto& c : scene.categories()) {
      std::size_t n = 0;
      for (const auto& o : scene.objects()) n += o.category == c ? 1 : 0;
      any = any || n >= 2;
    }
    if (!any) {
      throw InvalidArgument("insufficient scene: hard negatives need a category with 2+ instances");
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<TrainingSample> out;
  for (const auto& q : questions) {
    std::set<std::string> relevant_cats;
    for (const auto& id : q.relevant) {
      const ObjectRecord& r = scene.at(id);
      relevant_cats.insert(r.category);
      out.push_back({q.text, {r.category, r.instance}, Label::Pos});
    }
    std::vector<const ObjectRecord*> negs, hnegs;
    for (const auto& o : scene.objects()) {
      if (!relevant_cats.contains(o.category)) {
        negs.push_back(&o);
      } else if (std::find(q.relevant.begin(), q.relevant.end(), o.instance) == q.relevant.end()) {
        hnegs.push_back(&o);
      }
    }
    std::shuffle(negs.begin(), negs.end(), rng);
    for (std::size_t i = 0; i < std::min(config.negatives, negs.size()); ++i) {
      out.push_back({q.text, {negs[i]->category, negs[i]->instance}, Label::Neg});
    }
    if (q.kind == QuestionKind::SingleKnowledge) {
      std::shuffle(hnegs.begin(), hnegs.end(), rng);
      for (std::size_t i = 0; i < std::min(config.hard_negatives, hnegs.size()); ++i) {
        out.push_back({q.text, {hnegs[i]->category, hnegs[i]->instance}, Label::Hneg});
      }
    }
  }
  return out;
}

CorpusSplit split_by_text(const std::vector<QuestionRecord>& questions, std::size_t n_train,
                          std::uint64_t seed) {
  std::vector<std::string> texts;
  std::unordered_set<std::string> seen;
  for (const auto& q : questions) {
    if (seen.insert(q.text).second) texts.push_back(q.text);
  }
  if (n_train > texts.size()) {
    throw InvalidArgument("requested " + std::to_string(n_train) + " training questions but only " +
                          std::to_string(texts.size()) + " distinct texts exist");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(texts.begin(), texts.end(), rng);
  const std::unordered_set<std::string> train_texts(texts.begin(),
                                                    texts.begin() + static_cast<std::ptrdiff_t>(n_train));
  CorpusSplit split;
  for (const auto& q : questions) {
    (train_texts.contains(q.text) ? split.train : split.test).push_back(q);
  }
  return split;
}

// ---------------------------------------------------------------------------
// Files

nlohmann::json to_json(const QuestionRecord& q) {
  return {{"question", q.text},       {"kind", to_string(q.kind)},
          {"topic", to_string(q.topic)}, {"relevant", q.relevant},
          {"ground_truth", q.ground_truth}, {"subject", q.subject},
          {"scene", q.scene},          {"user_pose", to_json(q.user_pose)}};
}

QuestionRecord question_from_json(const nlohmann::json& j) {
  try {
    QuestionRecord q;
    q.text = j.at("question").get<std::string>();
    q.kind = question_kind_from_string(j.at("kind").get<std::string>());
    q.topic = topic_from_string(j.at("topic").get<std::string>());
    q.relevant = j.at("relevant").get<std::vector<std::string>>();
    std::sort(q.relevant.begin(), q.relevant.end());
    q.ground_truth = j.at("ground_truth").get<std::string>();
    q.scene = j.value("scene", "");
    if (j.contains("user_pose")) q.user_pose = user_pose_from_json(j["user_pose"]);
    if (j.contains("subject")) {
      q.subject = j["subject"].get<std::string>();
    } else if (auto p = parse_question(q.text)) {
      q.subject = p->by_category || q.relevant.empty() ? p->ref : q.relevant.front();
    }
    return q;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed question record: ") + e.what());
  }
}

void write_corpus_jsonl(const std::vector<QuestionRecord>& questions,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write '" + path.string() + "'");
  for (const auto& q : questions) out << to_json(q).dump() << '\n';
}

std::vector<QuestionRecord> read_corpus_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::vector<QuestionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(question_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace scenerag
