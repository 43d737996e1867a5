// scenerag command-line front end.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "scenerag/answer.hpp"
#include "scenerag/errors.hpp"
#include "scenerag/eval.hpp"
#include "scenerag/kernels.hpp"
#include "scenerag/knowledge_db.hpp"
#include "scenerag/qa_corpus.hpp"
#include "scenerag/service.hpp"
#include "scenerag/two_tower.hpp"

using namespace scenerag;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

struct Common {
  std::uint64_t seed = 0;
  std::size_t k = kDefaultTopK;
  std::string model;
  std::string scene;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  cmd->add_option("--k", c.k, "Number of retrieved entries")->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--model", c.model, "Model checkpoint");
  cmd->add_option("--scene", c.scene, "Scene file");
  cmd->add_option("--out", c.out, "Output file (stdout when omitted)");
}

struct ModelOptions {
  std::size_t dim = 256;
  std::size_t hidden = 128;
  std::size_t output = 64;
  std::uint64_t embed_seed = 0;
};

void add_model_options(CLI::App* cmd, ModelOptions& m) {
  cmd->add_option("--dim", m.dim, "Base embedding dimension D")->capture_default_str();
  cmd->add_option("--hidden", m.hidden, "Tower hidden width H")->capture_default_str();
  cmd->add_option("--output", m.output, "Shared output dimension E")->capture_default_str();
  cmd->add_option("--embed-seed", m.embed_seed, "Hash embedder seed")->capture_default_str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  out << text;
}

const std::vector<std::string>& vocab_by_name(const std::string& name) {
  if (name == "office") return office_vocab();
  if (name == "viking") return viking_vocab();
  if (name == "villa") return villa_vocab();
  if (name == "restaurant") return restaurant_vocab();
  if (name == "grocery") return grocery_vocab();
  throw InvalidArgument("unknown vocabulary '" + name + "'");
}

UserPose parse_pose(const std::string& text) {
  if (text.empty()) return {};
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      v.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw InvalidArgument("pose component '" + item + "' is not a number");
    }
  }
  if (v.size() != 7) throw InvalidArgument("pose must be x,y,z,qx,qy,qz,qw");
  return {{v[0], v[1], v[2]}, normalized({v[3], v[4], v[5], v[6]})};
}

std::shared_ptr<const TwoTowerModel> model_or_untrained(const Common& c, const ModelOptions& m) {
  if (!c.model.empty()) return std::make_shared<TwoTowerModel>(load_model(c.model));
  return std::make_shared<TwoTowerModel>(
      TwoTowerModel::initialize(ModelDims{m.dim, m.hidden, m.output}, c.seed, m.embed_seed));
}

Scene require_scene(const Common& c) {
  if (c.scene.empty()) throw InvalidArgument("--scene is required");
  return load_scene(c.scene);
}

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieval-augmented scene question answering"};
  app.require_subcommand(1);
  Common common;
  ModelOptions mopt;

  // gen-scene
  std::size_t n_categories = 18, n_instances = 34;
  std::string vocab = "office", scene_name;
  auto* gen_scene = app.add_subcommand("gen-scene", "Generate a synthetic scene file");
  add_common(gen_scene, common);
  gen_scene->add_option("--categories", n_categories)->capture_default_str();
  gen_scene->add_option("--instances", n_instances)->capture_default_str();
  gen_scene->add_option("--vocab", vocab, "office|viking|villa|restaurant|grocery")
      ->capture_default_str();
  gen_scene->add_option("--name", scene_name, "Scene name (defaults to the vocabulary)");

  // gen-corpus
  std::string pose_text, corpus_path;
  std::size_t per_template = kAllSubjects;
  auto* gen_corpus = app.add_subcommand("gen-corpus", "Generate template questions for a scene");
  add_common(gen_corpus, common);
  gen_corpus->add_option("--pose", pose_text, "User pose x,y,z,qx,qy,qz,qw");
  gen_corpus->add_option("--per-template", per_template,
                         "Questions per template (default: every subject once)");

  // build-samples
  std::size_t negatives = 1, hard_negatives = 1, train_questions = 0;
  std::string test_out;
  auto* build = app.add_subcommand("build-samples", "Build pos/neg/hneg training samples");
  add_common(build, common);
  build->add_option("--corpus", corpus_path, "Question corpus (JSON lines)")->required();
  build->add_option("--negatives", negatives)->capture_default_str();
  build->add_option("--hard-negatives", hard_negatives)->capture_default_str();
  build->add_option("--train-questions", train_questions,
                    "Split off this many question texts for training (0: use all)");
  build->add_option("--test-out", test_out, "Where to write the held-out questions");

  // train
  std::string samples_path, history_path, init_model;
  TrainConfig tcfg;
  bool finetune_preset = false;
  auto* train_cmd = app.add_subcommand("train", "Train the two-tower retriever");
  add_common(train_cmd, common);
  add_model_options(train_cmd, mopt);
  train_cmd->add_option("--samples", samples_path, "Training samples (JSON lines)")->required();
  train_cmd->add_option("--epochs", tcfg.epochs)->capture_default_str();
  train_cmd->add_option("--lr", tcfg.learning_rate)->capture_default_str();
  train_cmd->add_option("--margin", tcfg.margin)->capture_default_str();
  train_cmd->add_option("--w-hneg", tcfg.w_hneg)->capture_default_str();
  train_cmd->add_flag("--finetune-preset", finetune_preset, "lr 1e-5 and 6 epochs");
  train_cmd->add_option("--history", history_path, "Write the loss history as JSON");

  // eval / sweep-k / compare
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate accuracy and recall on a corpus");
  add_common(eval_cmd, common);
  add_model_options(eval_cmd, mopt);
  eval_cmd->add_option("--corpus", corpus_path)->required();

  std::size_t k_max = 10;
  auto* sweep = app.add_subcommand("sweep-k", "Accuracy and recall for k = 1..k-max");
  add_common(sweep, common);
  add_model_options(sweep, mopt);
  sweep->add_option("--corpus", corpus_path)->required();
  sweep->add_option("--k-max", k_max)->capture_default_str()->check(CLI::PositiveNumber);

  std::uint64_t baseline_seed = 0;
  bool has_baseline_seed = false;
  auto* compare = app.add_subcommand("compare", "Trained model vs its untrained initialization");
  add_common(compare, common);
  compare->add_option("--corpus", corpus_path)->required();
  auto* bs = compare->add_option("--baseline-seed", baseline_seed,
                                 "Initialization seed of the untrained towers (default --seed)");

  // serve
  std::string bind = kDefaultBind, answerer_kind = "template";
  ChatBackendConfig chat;
  auto* serve_cmd = app.add_subcommand("serve", "Run the query server");
  add_common(serve_cmd, common);
  add_model_options(serve_cmd, mopt);
  serve_cmd->add_option("--bind", bind)->capture_default_str();
  serve_cmd->add_option("--answerer", answerer_kind, "template|chat")->capture_default_str();
  serve_cmd->add_option("--endpoint", chat.endpoint, "Chat-completion URL")->capture_default_str();
  serve_cmd->add_option("--llm-model", chat.model)->capture_default_str();

  // ask
  std::string question;
  std::size_t repeat = 1;
  auto* ask = app.add_subcommand("ask", "Send a question to a running server");
  add_common(ask, common);
  ask->add_option("--bind", bind, "Server address")->capture_default_str();
  ask->add_option("--question", question)->required();
  ask->add_option("--pose", pose_text, "User pose x,y,z,qx,qy,qz,qw");
  ask->add_option("--repeat", repeat, "Send the question N times and report latency")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }
  has_baseline_seed = bs->count() > 0;

  try {
    if (*gen_scene) {
      Scene s = generate_synthetic_scene(common.seed, n_categories, n_instances,
                                         vocab_by_name(vocab), scene_name.empty() ? vocab : scene_name);
      write_text(common.out, to_json(s).dump(2) + "\n");
      std::cerr << "scene '" << s.name() << "': " << s.category_count() << " categories, "
                << s.instance_count() << " instances\n";
    } else if (*gen_corpus) {
      const Scene s = require_scene(common);
      CorpusConfig cfg = per_template == kAllSubjects ? CorpusConfig::exhaustive()
                                                      : CorpusConfig::uniform(per_template);
      const auto qs = generate_questions(s, parse_pose(pose_text), common.seed, cfg);
      std::string text;
      for (const auto& q : qs) text += to_json(q).dump() + "\n";
      write_text(common.out, text);
      std::cerr << qs.size() << " questions\n";
    } else if (*build) {
      const Scene s = require_scene(common);
      auto qs = read_corpus_jsonl(corpus_path);
      if (train_questions > 0) {
        CorpusSplit split = split_by_text(qs, train_questions, common.seed);
        if (!test_out.empty()) write_corpus_jsonl(split.test, test_out);
        qs = std::move(split.train);
      }
      const auto samples = build_training_samples(qs, s, {negatives, hard_negatives}, common.seed);
      std::string text;
      for (const auto& x : samples) text += to_json(x).dump() + "\n";
      write_text(common.out, text);
      std::cerr << samples.size() << " samples from " << qs.size() << " questions\n";
    } else if (*train_cmd) {
      if (finetune_preset) {
        const TrainConfig p = TrainConfig::finetune_preset();
        tcfg.learning_rate = p.learning_rate;
        tcfg.epochs = p.epochs;
      }
      tcfg.seed = common.seed;
      if (common.out.empty()) throw InvalidArgument("--out (checkpoint path) is required");
      const auto samples = read_samples_jsonl(samples_path);
      TwoTowerModel init = common.model.empty()
                               ? TwoTowerModel::initialize(ModelDims{mopt.dim, mopt.hidden, mopt.output},
                                                           common.seed, mopt.embed_seed)
                               : load_model(common.model);
      const auto t0 = std::chrono::steady_clock::now();
      const int every = std::max(1, tcfg.epochs / 10);
      TrainResult r = train(std::move(init), samples, tcfg, [&](int e, double loss) {
        if (e % every == 0 || e == tcfg.epochs) {
          std::cerr << "epoch " << e << " loss " << loss << "\n";
        }
      });
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      save_model(r.model, common.out);
      if (!history_path.empty()) write_text(history_path, nlohmann::json(r.loss_history).dump() + "\n");
      std::cout << nlohmann::json{{"checkpoint", common.out},
                                  {"model_id", model_fingerprint(r.model)},
                                  {"samples", samples.size()},
                                  {"epochs", tcfg.epochs},
                                  {"initial_loss", r.loss_history.front()},
                                  {"final_loss", r.loss_history.back()},
                                  {"seconds", secs},
                                  {"kernels", kernels::backend_name(kernels::active_backend())}}
                       .dump()
                << "\n";
    } else if (*eval_cmd) {
      const Scene s = require_scene(common);
      KnowledgeDatabase db(s, model_or_untrained(common, mopt));
      TemplateAnswerer answerer;
      const EvalReport r = evaluate(db, answerer, read_corpus_jsonl(corpus_path), common.k, common.seed);
      if (!common.out.empty()) write_text(common.out, r.to_json().dump(2) + "\n");
      std::cout << r.summary_table();
    } else if (*sweep) {
      const Scene s = require_scene(common);
      KnowledgeDatabase db(s, model_or_untrained(common, mopt));
      TemplateAnswerer answerer;
      std::vector<std::size_t> ks;
      for (std::size_t k = 1; k <= k_max; ++k) ks.push_back(k);
      const KSweepReport r = k_sweep(db, answerer, read_corpus_jsonl(corpus_path), ks);
      if (!common.out.empty()) write_text(common.out, r.to_json().dump(2) + "\n");
      std::cout << r.summary_table();
    } else if (*compare) {
      const Scene s = require_scene(common);
      if (common.model.empty()) throw InvalidArgument("--model (trained checkpoint) is required");
      auto trained = std::make_shared<TwoTowerModel>(load_model(common.model));
      const ModelDims d = trained->dims();
      auto untrained = std::make_shared<TwoTowerModel>(TwoTowerModel::initialize(
          trained->embedder_config(), d.hidden, d.output,
          has_baseline_seed ? baseline_seed : common.seed));
      KnowledgeDatabase du(s, untrained), dt(s, trained);
      const ComparisonReport r = compare_models(du, dt, read_corpus_jsonl(corpus_path), common.k);
      if (!common.out.empty()) write_text(common.out, r.to_json().dump(2) + "\n");
      std::cout << r.summary_table();
    } else if (*serve_cmd) {
      const Scene s = require_scene(common);
      auto db = std::make_shared<KnowledgeDatabase>(s, model_or_untrained(common, mopt));
      std::shared_ptr<Answerer> answerer;
      if (answerer_kind == "template") {
        answerer = std::make_shared<TemplateAnswerer>();
      } else if (answerer_kind == "chat") {
        answerer = std::make_shared<ChatCompletionAnswerer>(chat);
      } else {
        throw InvalidArgument("unknown answerer '" + answerer_kind + "'");
      }
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      auto server = serve(db, answerer, bind);
      std::cerr << "serving scene '" << s.name() << "' on " << server->address() << "\n";
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server->stop();
      std::cerr << "stopped\n";
    } else if (*ask) {
      Client client(bind);
      std::vector<LatencySample> samples;
      for (std::size_t i = 0; i < repeat; ++i) {
        QueryRequest req{"q" + std::to_string(i + 1), question, parse_pose(pose_text), common.k};
        const ClientResult r = client.query(req);
        if (r.response.error) throw NetworkError("server error: " + *r.response.error);
        if (repeat == 1) {
          std::cout << encode_response(r.response) << "\n";
          std::cout << nlohmann::json{{"communication_ms", r.communication_ms},
                                      {"end_to_end_ms", r.end_to_end_ms}}
                           .dump()
                    << "\n";
        }
        samples.push_back({req.request_id, r.communication_ms, r.response.timings.server_total_ms,
                           r.end_to_end_ms, r.response.timings.server_total_ms});
      }
      if (repeat > 1) {
        write_text(common.out, LatencyReport::from_samples(std::move(samples)).to_json().dump(2) + "\n");
      }
    }
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal_error", e.what());
    return 1;
  }
  return 0;
}
