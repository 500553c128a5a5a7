#include "hjcl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <ostream>

#include <json.hpp>

#include "hjcl/rng.hpp"

namespace hjcl {

void TrainConfig::validate() const {
  std::string errors;
  auto fail = [&errors](const std::string& msg) {
    if (!errors.empty()) errors += "; ";
    errors += msg;
  };
  if (batch_size < 2) fail("batch_size must be >= 2");
  if (!(lr > 0.0)) fail("lr must be > 0");
  if (patience < 1) fail("patience must be >= 1");
  if (max_epochs < 1) fail("max_epochs must be >= 1");
  if (weight_decay < 0.0) fail("weight_decay must be >= 0");
  try {
    weights.validate();
  } catch (const ConfigError& e) {
    fail(e.what());
  }
  if (!errors.empty()) throw ConfigError("train config: " + errors);
}

double batch_coverage(const std::vector<Document>& corpus, const std::vector<int>& docs) {
  std::map<int, int> label_count;
  long active = 0;
  for (int di : docs) {
    const LabelVector& gold = corpus[static_cast<std::size_t>(di)].gold;
    for (std::size_t j = 0; j < gold.size(); ++j) {
      if (gold[j]) {
        ++label_count[static_cast<int>(j)];
        ++active;
      }
    }
  }
  if (active == 0) return 0.0;
  long covered = 0;
  for (int di : docs) {
    const LabelVector& gold = corpus[static_cast<std::size_t>(di)].gold;
    for (std::size_t j = 0; j < gold.size(); ++j) {
      if (gold[j] && label_count[static_cast<int>(j)] >= 2) ++covered;
    }
  }
  return static_cast<double>(covered) / static_cast<double>(active);
}

std::vector<Batch> build_batches(const std::vector<Document>& corpus, const Taxonomy& taxonomy,
                                 int batch_size, std::uint64_t seed) {
  if (corpus.empty()) throw DataError("build_batches: empty corpus");
  if (batch_size > static_cast<int>(corpus.size())) {
    throw DataError("build_batches: batch_size " + std::to_string(batch_size) +
                    " exceeds corpus size " + std::to_string(corpus.size()));
  }

  std::vector<long> freq(static_cast<std::size_t>(taxonomy.size()), 0);
  for (const Document& doc : corpus) {
    for (std::size_t j = 0; j < doc.gold.size(); ++j) {
      if (doc.gold[j]) ++freq[j];
    }
  }

  // Rarest gold label of each document, ties to the lower index. Documents
  // with an empty gold set share a pseudo-bucket.
  auto rarest = [&](const Document& doc) {
    int best = -1;
    for (std::size_t j = 0; j < doc.gold.size(); ++j) {
      if (doc.gold[j] && (best == -1 || freq[j] < freq[static_cast<std::size_t>(best)])) {
        best = static_cast<int>(j);
      }
    }
    return best;
  };

  std::vector<int> order(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) order[i] = static_cast<int>(i);
  Rng rng(seed);
  rng.shuffle(order);

  std::map<int, std::vector<int>> bucket_map;
  for (int di : order) bucket_map[rarest(corpus[static_cast<std::size_t>(di)])].push_back(di);
  std::vector<std::vector<int>> buckets;
  for (auto& [label, docs] : bucket_map) buckets.push_back(std::move(docs));
  std::stable_sort(buckets.begin(), buckets.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });

  std::vector<Batch> batches;
  Batch current;
  std::size_t remaining = corpus.size();
  while (remaining > 0) {
    for (auto& bucket : buckets) {
      if (bucket.empty()) continue;
      const int space = batch_size - static_cast<int>(current.docs.size());
      const int take = std::min<int>({2, static_cast<int>(bucket.size()), space});
      for (int t = 0; t < take; ++t) {
        current.docs.push_back(bucket.back());
        bucket.pop_back();
        --remaining;
      }
      if (static_cast<int>(current.docs.size()) == batch_size) {
        batches.push_back(std::move(current));
        current = Batch{};
      }
    }
  }
  if (!current.docs.empty()) batches.push_back(std::move(current));
  for (Batch& b : batches) b.coverage = batch_coverage(corpus, b.docs);
  return batches;
}

void adamw_update(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v, long step,
                  const TrainConfig& config) {
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  m = config.beta1 * m + (1.0 - config.beta1) * grad;
  v = config.beta2 * v + (1.0 - config.beta2) * grad.cwiseProduct(grad);
  const Matrix m_hat = m / bc1;
  const Matrix v_hat = v / bc2;
  param -= config.lr * (m_hat.array() / (v_hat.array().sqrt() + config.adam_eps)).matrix();
  if (config.weight_decay > 0.0) param -= config.lr * config.weight_decay * param;
}

ForwardOutputs forward_batch(Graph& g, const ParamTensors& pt, const ModelConfig& model_config,
                             const Taxonomy& taxonomy, const std::vector<const Document*>& docs) {
  ForwardOutputs out;
  const Tensor yp = propagate_hierarchy(g, pt, model_config, taxonomy);
  for (const Document* doc : docs) {
    const Tensor h = encode_tokens(pt, model_config, doc->token_ids);
    const Tensor label_aware = label_aware_embeddings(pt, h, yp);
    out.batch.z.push_back(fuse_and_project(g, pt, h, label_aware, yp));
    out.batch.gold.push_back(doc->gold);
    out.logits.push_back(classify(pt, label_aware));
  }
  return out;
}

StepResult train_step(ModelParams& params, const std::vector<const Document*>& docs,
                      const ModelConfig& model_config, const TrainConfig& config,
                      const Taxonomy& taxonomy, const MetricContext& ctx, TrainState& state) {
  if (docs.empty()) throw DataError("train_step: empty batch");

  Graph g;
  ParamTensors pt = attach(g, params, true);
  ForwardOutputs fwd = forward_batch(g, pt, model_config, taxonomy, docs);
  LossBreakdown loss =
      total_loss(fwd.batch, fwd.logits, config.weights, ctx, taxonomy, nullptr);
  if (!std::isfinite(loss.total_value)) {
    const auto where = g.first_nonfinite();
    throw NumericError("train_step: non-finite loss" + (where ? " at " + *where : std::string()));
  }
  g.backward(loss.total);

  auto named = params.named();
  if (state.opt.m.empty()) {
    state.opt.m.resize(named.size());
    state.opt.v.resize(named.size());
    for (std::size_t i = 0; i < named.size(); ++i) {
      state.opt.m[i] = Matrix::Zero(named[i].mat->rows(), named[i].mat->cols());
      state.opt.v[i] = Matrix::Zero(named[i].mat->rows(), named[i].mat->cols());
    }
  }
  ++state.opt.step;
  for (std::size_t i = 0; i < named.size(); ++i) {
    adamw_update(*named[i].mat, pt.flat[i].grad(), state.opt.m[i], state.opt.v[i],
                 state.opt.step, config);
  }

  StepResult r;
  r.total = loss.total_value;
  r.classification = loss.classification;
  r.instance = loss.instance;
  r.label = loss.label;
  return r;
}

std::vector<EvalPair> predict_corpus(ModelParams& params, const ModelConfig& model_config,
                                     const Taxonomy& taxonomy, const std::vector<Document>& docs) {
  // Propagate the label table once; per-document graphs reuse its value.
  Matrix yp_value;
  {
    Graph g;
    ParamTensors pt = attach(g, params, false);
    yp_value = propagate_hierarchy(g, pt, model_config, taxonomy).value();
  }
  std::vector<EvalPair> pairs;
  pairs.reserve(docs.size());
  for (const Document& doc : docs) {
    Graph g;
    ParamTensors pt = attach(g, params, false);
    const Tensor yp = g.leaf(yp_value);
    const Tensor h = encode_tokens(pt, model_config, doc.token_ids);
    const Tensor label_aware = label_aware_embeddings(pt, h, yp);
    const Tensor logits = classify(pt, label_aware);
    pairs.push_back({doc.gold, predict(logits.value())});
  }
  return pairs;
}

std::string epoch_log_json(const EpochLog& log) {
  nlohmann::ordered_json j;
  j["epoch"] = log.epoch;
  j["loss_total"] = log.loss_total;
  j["loss_classification"] = log.loss_classification;
  j["loss_instance"] = log.loss_instance;
  j["loss_label"] = log.loss_label;
  j["batch_coverage"] = log.batch_coverage;
  j["val_micro_f1"] = log.val_micro_f1;
  j["val_macro_f1"] = log.val_macro_f1;
  j["val_acc_p"] = log.val_acc_p;
  j["val_acc_d"] = log.val_acc_d;
  return j.dump();
}

FitResult fit(const std::vector<Document>& train, const std::vector<Document>& val,
              ModelParams initial, const ModelConfig& model_config, const TrainConfig& config,
              const Taxonomy& taxonomy, std::ostream* log_stream, std::ostream* progress) {
  config.validate();
  if (train.empty() || val.empty()) throw DataError("fit: empty train or validation corpus");

  const MetricContext ctx = MetricContext::make(taxonomy, config.normalize_gamma);
  ModelParams params = std::move(initial);
  TrainState state;
  FitResult result;
  result.best_params = params;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    state.epoch = epoch;
    const std::vector<Batch> batches =
        build_batches(train, taxonomy, std::min<int>(config.batch_size,
                                                     static_cast<int>(train.size())),
                      Rng::mix(config.seed, static_cast<std::uint64_t>(epoch)));

    EpochLog log;
    log.epoch = epoch;
    double coverage_sum = 0.0;
    try {
      for (const Batch& batch : batches) {
        std::vector<const Document*> docs;
        docs.reserve(batch.docs.size());
        for (int di : batch.docs) docs.push_back(&train[static_cast<std::size_t>(di)]);
        const StepResult step =
            train_step(params, docs, model_config, config, taxonomy, ctx, state);
        log.loss_total += step.total;
        log.loss_classification += step.classification;
        log.loss_instance += step.instance;
        log.loss_label += step.label;
        coverage_sum += batch.coverage;
      }
    } catch (...) {
      if (epoch == 1) throw;  // nothing completed to salvage
      result.error = std::current_exception();
      break;
    }
    const double steps = static_cast<double>(batches.size());
    log.loss_total /= steps;
    log.loss_classification /= steps;
    log.loss_instance /= steps;
    log.loss_label /= steps;
    log.batch_coverage = coverage_sum / steps;

    const std::vector<EvalPair> pairs = predict_corpus(params, model_config, taxonomy, val);
    const F1Result f1 = f1_scores(pairs);
    log.val_micro_f1 = f1.micro;
    log.val_macro_f1 = f1.macro;
    log.val_acc_p = path_accuracy(pairs, taxonomy);
    log.val_acc_d = depth_accuracy(pairs, taxonomy);

    result.log.push_back(log);
    if (log_stream) (*log_stream) << epoch_log_json(log) << '\n';
    if (progress) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      char buf[192];
      std::snprintf(buf, sizeof(buf),
                    "epoch %3d  loss %.4f  val_macro_f1 %.4f  coverage %.2f  (%.1fs)\n", epoch,
                    log.loss_total, log.val_macro_f1, log.batch_coverage, secs);
      (*progress) << buf;
      if (log.batch_coverage == 0.0) {
        (*progress) << "warning: no in-batch positive pairs; contrastive terms vanish\n";
      }
    }

    if (log.val_macro_f1 > state.best_macro_f1) {
      state.best_macro_f1 = log.val_macro_f1;
      state.epochs_since_best = 0;
      result.best_params = params;
      result.best_epoch = epoch;
      result.best_macro_f1 = log.val_macro_f1;
    } else {
      ++state.epochs_since_best;
      if (state.epochs_since_best >= config.patience) break;
    }
  }
  return result;
}

}  // namespace hjcl
