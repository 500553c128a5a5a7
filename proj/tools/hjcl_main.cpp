#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "hjcl/data.hpp"
#include "hjcl/metrics.hpp"
#include "hjcl/model.hpp"
#include "hjcl/objective_check.hpp"
#include "hjcl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// Expands `--config FILE` (train only) into explicit arguments. The file is
// flat key=value with '#' comments; keys are long option names without the
// dashes. Command-line flags win: file entries whose option already appears
// in argv are dropped.
std::vector<std::string> expand_config_args(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string config_path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;

  std::ifstream in(config_path);
  if (!in) throw hjcl::DataError("config: cannot open '" + config_path + "'");
  auto given = [&args](const std::string& key) {
    const std::string flag = "--" + key;
    for (const std::string& a : args) {
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    }
    return false;
  };
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw hjcl::ConfigError("config line " + std::to_string(line_no) +
                              ": expected key=value, got '" + line + "'");
    }
    const std::string key = line.substr(0, eq);
    if (key == "config") continue;
    if (!given(key)) args.push_back("--" + key + "=" + line.substr(eq + 1));
  }
  return args;
}

std::ifstream open_input(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw hjcl::DataError(std::string(what) + ": cannot open '" + path + "'");
  return in;
}

std::ofstream open_output(const std::string& path, const char* what) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw hjcl::DataError(std::string(what) + ": cannot write '" + path + "'");
  return out;
}

hjcl::Taxonomy load_taxonomy_file(const std::string& path) {
  auto in = open_input(path, "taxonomy");
  return hjcl::Taxonomy::load(in);
}

struct SynthArgs {
  hjcl::SynthSpec spec;
  std::string out_dir;
};

int run_synth(const SynthArgs& args) {
  args.spec.validate();
  fs::create_directories(args.out_dir);
  const fs::path dir(args.out_dir);
  auto tax = open_output((dir / "taxonomy.tsv").string(), "synth");
  auto train = open_output((dir / "train.jsonl").string(), "synth");
  auto val = open_output((dir / "val.jsonl").string(), "synth");
  auto test = open_output((dir / "test.jsonl").string(), "synth");
  hjcl::generate_synthetic(args.spec, tax, train, val, test);
  const int n_train = static_cast<int>(0.7 * args.spec.total_docs);
  const int n_val = static_cast<int>(0.15 * args.spec.total_docs);
  std::cout << "wrote " << (dir / "taxonomy.tsv").string() << "\n"
            << "wrote " << (dir / "train.jsonl").string() << " (" << n_train << " docs)\n"
            << "wrote " << (dir / "val.jsonl").string() << " (" << n_val << " docs)\n"
            << "wrote " << (dir / "test.jsonl").string() << " ("
            << args.spec.total_docs - n_train - n_val << " docs)\n";
  return 0;
}

struct TrainArgs {
  std::string taxonomy_path, train_path, val_path, out_dir;
  std::string descriptions_path, stoplist_path;
  hjcl::ModelConfig model;
  hjcl::TrainConfig train;
  std::string mode = "hilecon";
  std::string classification = "zlpr";
  std::string penalty = "shifted";
  std::string positive_rule = "exact";
  std::string prefactor = "anchors";
  bool strict_negatives = false;
  bool normalize_gamma = false;
};

void apply_loss_flags(TrainArgs& args) {
  auto& w = args.train.weights;
  if (args.mode == "hilecon") w.mode = hjcl::LabelLossMode::hilecon;
  else if (args.mode == "lecon") w.mode = hjcl::LabelLossMode::lecon;
  else if (args.mode == "supcon") w.mode = hjcl::LabelLossMode::supcon;
  else throw hjcl::DataError("unknown --mode '" + args.mode + "' (hilecon|lecon|supcon)");
  if (args.classification == "zlpr") w.classification = hjcl::ClassificationLoss::zlpr;
  else if (args.classification == "bce") w.classification = hjcl::ClassificationLoss::bce;
  else throw hjcl::DataError("unknown --classification-loss '" + args.classification + "'");
  if (args.penalty == "shifted") w.penalty = hjcl::DepthPenalty::shifted;
  else if (args.penalty == "paper_clamped") w.penalty = hjcl::DepthPenalty::paper_clamped;
  else throw hjcl::DataError("unknown --penalty '" + args.penalty + "'");
  if (args.positive_rule == "exact") w.positive_rule = hjcl::PositiveRule::exact_equality;
  else if (args.positive_rule == "overlap") w.positive_rule = hjcl::PositiveRule::overlap;
  else throw hjcl::DataError("unknown --positive-rule '" + args.positive_rule + "'");
  if (args.prefactor == "anchors") w.prefactor = hjcl::LabelLossPrefactor::anchor_count;
  else if (args.prefactor == "labels") w.prefactor = hjcl::LabelLossPrefactor::label_count;
  else throw hjcl::DataError("unknown --prefactor '" + args.prefactor + "'");
  w.strict_negatives = args.strict_negatives;
  args.train.normalize_gamma = args.normalize_gamma;
}

int run_train(TrainArgs& args) {
  apply_loss_flags(args);
  const hjcl::Taxonomy taxonomy = load_taxonomy_file(args.taxonomy_path);

  std::unordered_set<std::string> stoplist;
  const std::unordered_set<std::string>* stoplist_ptr = nullptr;
  if (!args.stoplist_path.empty()) {
    auto in = open_input(args.stoplist_path, "stoplist");
    stoplist = hjcl::load_stoplist(in);
    stoplist_ptr = &stoplist;
  }

  hjcl::Vocab vocab;
  hjcl::LoadStats stats;
  auto train_in = open_input(args.train_path, "train corpus");
  const auto train_docs =
      hjcl::load_corpus(train_in, taxonomy, vocab, hjcl::VocabMode::build, stoplist_ptr, &stats);
  if (stats.closed_at_load > 0) {
    std::cerr << "warning: " << stats.closed_at_load
              << " training documents required ancestor closure\n";
  }
  auto val_in = open_input(args.val_path, "validation corpus");
  const auto val_docs =
      hjcl::load_corpus(val_in, taxonomy, vocab, hjcl::VocabMode::frozen, stoplist_ptr, nullptr);

  args.model.vocab_size = vocab.size();
  args.model.seed = args.train.seed;
  {
    std::string problems;
    for (const auto& check : {std::function<void()>([&] { args.model.validate(); }),
                              std::function<void()>([&] { args.train.validate(); })}) {
      try {
        check();
      } catch (const hjcl::ConfigError& e) {
        if (!problems.empty()) problems += "; ";
        problems += e.what();
      }
    }
    if (!problems.empty()) throw hjcl::ConfigError(problems);
  }

  hjcl::ModelParams params = hjcl::ModelParams::init(args.model, taxonomy.size());
  std::map<std::string, std::string> descriptions;
  if (!args.descriptions_path.empty()) {
    auto in = open_input(args.descriptions_path, "descriptions");
    descriptions = hjcl::load_descriptions(in);
  }
  params.label_embed =
      hjcl::init_label_embeddings(vocab, params.token_embed, taxonomy, descriptions);

  fs::create_directories(args.out_dir);
  const fs::path dir(args.out_dir);
  auto log = open_output((dir / "train_log.jsonl").string(), "train log");
  hjcl::FitResult result = hjcl::fit(train_docs, val_docs, std::move(params), args.model,
                                     args.train, taxonomy, &log, &std::cerr);

  // The best checkpoint over completed epochs is written even when training
  // aborted part-way.
  auto ck = open_output((dir / "model.ckpt").string(), "checkpoint");
  hjcl::save_checkpoint(ck, args.model, result.best_params, taxonomy.hash(), vocab);
  std::cerr << "best epoch " << result.best_epoch << " (val macro_f1 "
            << result.best_macro_f1 << ")\n";
  if (result.error) std::rethrow_exception(result.error);

  const auto pairs =
      hjcl::predict_corpus(result.best_params, args.model, taxonomy, val_docs);
  std::cout << hjcl::to_table(hjcl::report(pairs, taxonomy));
  return 0;
}

struct EvalArgs {
  std::string checkpoint_path, taxonomy_path, corpus_path;
  std::string report_path, dump_path;
};

int run_eval(const EvalArgs& args) {
  auto ck_in = open_input(args.checkpoint_path, "checkpoint");
  hjcl::Checkpoint ck = hjcl::load_checkpoint(ck_in);
  const hjcl::Taxonomy taxonomy = load_taxonomy_file(args.taxonomy_path);
  if (taxonomy.hash() != ck.taxonomy_hash) {
    throw hjcl::DataError("taxonomy hash mismatch: checkpoint was trained on a different tree");
  }
  auto corpus_in = open_input(args.corpus_path, "corpus");
  const auto docs =
      hjcl::load_corpus(corpus_in, taxonomy, ck.vocab, hjcl::VocabMode::frozen, nullptr, nullptr);
  const auto pairs = hjcl::predict_corpus(ck.params, ck.config, taxonomy, docs);

  if (!args.dump_path.empty()) {
    auto dump = open_output(args.dump_path, "predictions");
    for (std::size_t i = 0; i < docs.size(); ++i) {
      json obj;
      obj["id"] = docs[i].id;
      std::vector<std::string> labels;
      for (int j = 0; j < taxonomy.size(); ++j) {
        if (pairs[i].pred[static_cast<std::size_t>(j)]) labels.push_back(taxonomy.label(j));
      }
      obj["labels"] = labels;
      dump << obj.dump() << '\n';
    }
  }

  const hjcl::MetricsReport rep = hjcl::report(pairs, taxonomy);
  std::cout << hjcl::to_table(rep);
  if (!args.report_path.empty()) {
    auto out = open_output(args.report_path, "report");
    out << hjcl::to_json(rep, taxonomy) << '\n';
  }
  return 0;
}

struct GradcheckArgs {
  std::string component = "all";
  double tol = 1e-4;
  double eps = 1e-5;
  std::uint64_t seed = 7;
};

int run_gradcheck(const GradcheckArgs& args) {
  std::vector<std::string> components;
  if (args.component == "all") {
    components = hjcl::objective_components();
  } else {
    components = {args.component};
  }
  hjcl::GradCheckOptions opt;
  opt.tol = args.tol;
  opt.eps = args.eps;
  opt.seed = args.seed;
  bool all_passed = true;
  for (const std::string& component : components) {
    const auto t0 = std::chrono::steady_clock::now();
    const hjcl::GradCheckReport report = hjcl::check_objective(component, opt);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char buf[192];
    std::snprintf(buf, sizeof(buf), "%-9s max_rel_error %.3e  (worst: %s, %.2fs)  %s\n",
                  component.c_str(), report.max_rel_error, report.worst_param.c_str(), secs,
                  report.passed ? "PASS" : "FAIL");
    std::cout << buf;
    all_passed = all_passed && report.passed;
  }
  return all_passed ? 0 : kExitNumeric;
}

struct MetricsArgs {
  std::string taxonomy_path, gold_path, predictions_path, report_path;
  bool raw_intersection = false;
};

int run_metrics(const MetricsArgs& args) {
  const hjcl::Taxonomy taxonomy = load_taxonomy_file(args.taxonomy_path);
  hjcl::Vocab vocab;
  auto gold_in = open_input(args.gold_path, "gold corpus");
  const auto docs =
      hjcl::load_corpus(gold_in, taxonomy, vocab, hjcl::VocabMode::build, nullptr, nullptr);

  std::unordered_map<std::string, hjcl::LabelVector> predictions;
  auto pred_in = open_input(args.predictions_path, "predictions");
  std::string line;
  int line_no = 0;
  while (std::getline(pred_in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw hjcl::DataError("predictions line " + std::to_string(line_no) + ": " + e.what());
    }
    hjcl::LabelVector bits(static_cast<std::size_t>(taxonomy.size()), 0);
    for (const auto& name : obj.at("labels")) {
      bits[static_cast<std::size_t>(taxonomy.index_of(name.get<std::string>()))] = 1;
    }
    if (!predictions.emplace(obj.at("id").get<std::string>(), std::move(bits)).second) {
      throw hjcl::DataError("predictions: duplicate id on line " + std::to_string(line_no));
    }
  }
  if (predictions.size() != docs.size()) {
    throw hjcl::DataError("id mismatch: " + std::to_string(docs.size()) + " gold documents vs " +
                          std::to_string(predictions.size()) + " predictions");
  }
  std::vector<hjcl::EvalPair> pairs;
  for (const hjcl::Document& doc : docs) {
    const auto it = predictions.find(doc.id);
    if (it == predictions.end()) {
      throw hjcl::DataError("id mismatch: no prediction for document '" + doc.id + "'");
    }
    pairs.push_back({doc.gold, it->second});
  }

  const hjcl::MetricsReport rep = hjcl::report(pairs, taxonomy, !args.raw_intersection);
  std::cout << hjcl::to_table(rep);
  if (!args.report_path.empty()) {
    auto out = open_output(args.report_path, "report");
    out << hjcl::to_json(rep, taxonomy) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HJCL: hierarchy-aware joint contrastive learning for multi-label text"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic hierarchical corpus");
  synth_cmd->add_option("--depth", synth.spec.depth, "Tree depth")->capture_default_str();
  synth_cmd->add_option("--branching", synth.spec.branching, "Children per node")
      ->capture_default_str();
  synth_cmd->add_option("--tokens-per-label", synth.spec.tokens_per_label)->capture_default_str();
  synth_cmd->add_option("--doc-length", synth.spec.doc_length)->capture_default_str();
  synth_cmd->add_option("--min-paths", synth.spec.min_paths)->capture_default_str();
  synth_cmd->add_option("--max-paths", synth.spec.max_paths)->capture_default_str();
  synth_cmd->add_option("--noise", synth.spec.noise_ratio, "Noise token ratio")
      ->capture_default_str();
  synth_cmd->add_option("--noise-vocab", synth.spec.noise_vocab)->capture_default_str();
  synth_cmd->add_option("--docs", synth.spec.total_docs, "Total documents (70/15/15 split)")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.spec.seed)->envname("HJCL_SEED")->capture_default_str();
  synth_cmd->add_option("--out", synth.out_dir, "Output directory")->required();

  TrainArgs train;
  std::string config_path;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", config_path, "Flat key=value config file; flags override");
  train_cmd->add_option("--taxonomy", train.taxonomy_path)->required();
  train_cmd->add_option("--train", train.train_path)->required();
  train_cmd->add_option("--val", train.val_path)->required();
  train_cmd->add_option("--out", train.out_dir, "Output directory")->required();
  train_cmd->add_option("--descriptions", train.descriptions_path);
  train_cmd->add_option("--stoplist", train.stoplist_path);
  train_cmd->add_option("--embed-dim", train.model.embed_dim)->capture_default_str();
  train_cmd->add_option("--heads", train.model.attention_heads)->capture_default_str();
  train_cmd->add_option("--gat-layers", train.model.gat_layers)->capture_default_str();
  train_cmd->add_option("--encoder-layers", train.model.encoder_layers)->capture_default_str();
  train_cmd->add_option("--batch-size", train.train.batch_size)->capture_default_str();
  train_cmd->add_option("--lr", train.train.lr)->capture_default_str();
  train_cmd->add_option("--lambda1", train.train.weights.lambda1)->capture_default_str();
  train_cmd->add_option("--lambda2", train.train.weights.lambda2)->capture_default_str();
  train_cmd->add_option("--tau", train.train.weights.tau)->capture_default_str();
  train_cmd->add_option("--max-epochs", train.train.max_epochs)->capture_default_str();
  train_cmd->add_option("--patience", train.train.patience)->capture_default_str();
  train_cmd->add_option("--weight-decay", train.train.weight_decay)->capture_default_str();
  train_cmd->add_option("--seed", train.train.seed)->envname("HJCL_SEED")->capture_default_str();
  train_cmd->add_option("--mode", train.mode, "hilecon|lecon|supcon")->capture_default_str();
  train_cmd->add_option("--classification-loss", train.classification, "zlpr|bce")
      ->capture_default_str();
  train_cmd->add_option("--penalty", train.penalty, "shifted|paper_clamped")
      ->capture_default_str();
  train_cmd->add_option("--positive-rule", train.positive_rule, "exact|overlap")
      ->capture_default_str();
  train_cmd->add_option("--prefactor", train.prefactor, "anchors|labels")->capture_default_str();
  train_cmd->add_flag("--strict-negatives", train.strict_negatives);
  train_cmd->add_flag("--normalize-gamma", train.normalize_gamma);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus");
  eval_cmd->add_option("--checkpoint", eval.checkpoint_path)->required();
  eval_cmd->add_option("--taxonomy", eval.taxonomy_path)->required();
  eval_cmd->add_option("--corpus", eval.corpus_path)->required();
  eval_cmd->add_option("--out", eval.report_path, "Write the JSON report here");
  eval_cmd->add_option("--dump-predictions", eval.dump_path,
                       "Write per-document predicted label lists (JSONL)");

  GradcheckArgs gradcheck;
  auto* gradcheck_cmd =
      app.add_subcommand("gradcheck", "Finite-difference check of the training objectives");
  gradcheck_cmd->add_option("--component", gradcheck.component,
                            "all|zlpr|supcon|hilecon|instance|total")
      ->capture_default_str();
  gradcheck_cmd->add_option("--tol", gradcheck.tol)->capture_default_str();
  gradcheck_cmd->add_option("--eps", gradcheck.eps)->capture_default_str();
  gradcheck_cmd->add_option("--seed", gradcheck.seed)->envname("HJCL_SEED")
      ->capture_default_str();

  MetricsArgs metrics;
  auto* metrics_cmd =
      app.add_subcommand("metrics", "Score a predictions file against a gold corpus");
  metrics_cmd->add_option("--taxonomy", metrics.taxonomy_path)->required();
  metrics_cmd->add_option("--gold", metrics.gold_path)->required();
  metrics_cmd->add_option("--predictions", metrics.predictions_path)->required();
  metrics_cmd->add_option("--out", metrics.report_path);
  metrics_cmd->add_flag("--raw-intersection", metrics.raw_intersection,
                        "Skip re-closing true positives before path counting");

  try {
    std::vector<std::string> args = expand_config_args(argc, argv);
    // CLI11 consumes the vector form back to front.
    std::reverse(args.begin(), args.end());
    args.pop_back();  // program name
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const hjcl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const hjcl::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }

  try {
    if (synth_cmd->parsed()) return run_synth(synth);
    if (train_cmd->parsed()) return run_train(train);
    if (eval_cmd->parsed()) return run_eval(eval);
    if (gradcheck_cmd->parsed()) return run_gradcheck(gradcheck);
    if (metrics_cmd->parsed()) return run_metrics(metrics);
  } catch (const hjcl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const hjcl::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const hjcl::ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const hjcl::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
