#include "scenerag/answer.hpp"

#include <cstdio>
#include <cstdlib>
#include <set>
#include <thread>

#include "httplib.h"
#include "scenerag/errors.hpp"

namespace scenerag {

namespace {

std::string fmt3(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string quat_text(const Quat& q) {
  return "(" + fmt3(q.x) + ", " + fmt3(q.y) + ", " + fmt3(q.z) + ", " + fmt3(q.w) + ")";
}

}  // namespace

std::string render_entry(const ObjectRecord& r, const RelativePosition& rel) {
  std::string s;
  s += "instance: " + r.instance;
  s += "; category: " + r.category;
  s += "; position: " + format_vec3(r.position);
  s += "; orientation: " + quat_text(r.orientation);
  s += std::string("; interactive: ") + (r.interactive ? "yes" : "no");
  s += "; color: " + r.color;
  s += "; material: " + r.material;
  s += "; distance: " + format_number(rel.distance);
  s += "; relative position: " + format_vec3(rel.quantitative);
  s += "; direction: " + rel.qualitative;
  return s;
}

std::string render_pose(const UserPose& pose) {
  return "player position: " + format_vec3(pose.position) +
         "; player orientation: " + quat_text(pose.orientation);
}

PromptBundle render_prompt(std::string_view question, const RetrievalResult& result,
                           const UserPose& pose) {
  PromptBundle b;
  b.question = std::string(question);
  b.user_conditions = render_pose(pose);
  for (std::size_t i = 0; i < result.ranked.size(); ++i) {
    b.knowledge_entries.push_back(render_entry(result.expanded[i], result.spatial_facts[i]));
    b.facts.push_back({result.expanded[i], result.spatial_facts[i], result.ranked[i].score});
  }
  return b;
}

std::string prompt_text(const PromptBundle& b) {
  std::string s = "You answer questions about a virtual reality scene using only the knowledge "
                  "below. Directions and distances are relative to the player.\n\n";
  s += "User conditions:\n" + b.user_conditions + "\n\nKnowledge:\n";
  for (std::size_t i = 0; i < b.knowledge_entries.size(); ++i) {
    s += std::to_string(i + 1) + ". " + b.knowledge_entries[i] + "\n";
  }
  s += "\nQuestion: " + b.question + "\nAnswer briefly.";
  return s;
}

std::string template_answer(const PromptBundle& bundle, std::optional<Topic> topic) {
  const auto parsed = parse_question(bundle.question);
  if (!parsed) return kNoKnowledge;
  const Topic t = topic.value_or(parsed->topic);

  if (t == Topic::Count) {
    std::set<std::string> seen;
    for (const auto& f : bundle.facts) {
      if (f.record.category == parsed->ref) seen.insert(f.record.instance);
    }
    if (seen.empty()) return kNoKnowledge;
    return count_answer(seen.size());
  }

  // best-ranked entry naming the asked instance, or of the asked category
  for (const auto& f : bundle.facts) {
    const bool hit = parsed->by_category ? f.record.category == parsed->ref
                                         : f.record.instance == parsed->ref;
    if (hit) return attribute_answer(t, f.record, f.spatial);
  }
  return kNoKnowledge;
}

// ---------------------------------------------------------------------------
// Chat-completion backend

ChatCompletionAnswerer::ChatCompletionAnswerer(ChatBackendConfig config)
    : config_(std::move(config)) {
  const std::string& url = config_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw InvalidArgument("endpoint must be an http:// URL");
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http") {
    throw InvalidArgument("only http:// endpoints are supported (got '" + scheme + "')");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

nlohmann::json ChatCompletionAnswerer::request_body(const PromptBundle& bundle) const {
  return {{"model", config_.model},
          {"temperature", 0},
          {"messages",
           {{{"role", "system"},
             {"content", "You are an assistant inside a VR application. Answer concisely."}},
            {{"role", "user"}, {"content", prompt_text(bundle)}}}}};
}

std::string ChatCompletionAnswerer::parse_response(const std::string& body) {
  try {
    const auto j = nlohmann::json::parse(body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw NetworkError(std::string("unexpected chat-completion response: ") + e.what());
  }
}

std::string ChatCompletionAnswerer::answer(const PromptBundle& bundle, std::optional<Topic>) {
  httplib::Client cli(scheme_host_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const std::string body = request_body(bundle).dump();
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(200 * attempt));
    auto res = cli.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw NetworkError("chat backend returned HTTP " + std::to_string(res->status));
    return parse_response(res->body);
  }
  throw NetworkError("chat backend unreachable: " + last_error);
}

}  // namespace scenerag
