#pragma once

#include <iosfwd>
#include <vector>

#include "hjcl/data.hpp"
#include "hjcl/losses.hpp"
#include "hjcl/metrics.hpp"
#include "hjcl/model.hpp"

namespace hjcl {

struct TrainConfig {
  int batch_size = 80;
  double lr = 3e-5;
  LossWeights weights;  // lambda1 0.1, lambda2 0.5, tau 0.1
  int max_epochs = 50;
  int patience = 10;  // epochs without validation Macro-F1 improvement
  std::uint64_t seed = 42;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  bool normalize_gamma = false;  // divide negative-pair weights by their maximum

  void validate() const;
};

// Optimizer moments aligned with ModelParams::named() order.
struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;
};

struct TrainState {
  int epoch = 0;
  double best_macro_f1 = -1.0;
  int epochs_since_best = 0;
  AdamState opt;
};

struct Batch {
  std::vector<int> docs;
  double coverage = 0.0;  // fraction of in-batch gold labels with a positive
};

// Greedy label-bucket round-robin: documents grouped by their rarest gold
// label, pairs dealt bucket by bucket so same-label samples land in the
// same batch. Every document appears exactly once; the final short batch is
// kept. Deterministic in the seed.
std::vector<Batch> build_batches(const std::vector<Document>& corpus, const Taxonomy& taxonomy,
                                 int batch_size, std::uint64_t seed);

double batch_coverage(const std::vector<Document>& corpus, const std::vector<int>& docs);

struct ForwardOutputs {
  ContrastiveBatch batch;
  std::vector<Tensor> logits;
};

// Full forward pass for a batch: one hierarchy propagation shared by all
// documents, then per-document encoding, label attention, fusion and logits.
ForwardOutputs forward_batch(Graph& g, const ParamTensors& pt, const ModelConfig& model_config,
                             const Taxonomy& taxonomy, const std::vector<const Document*>& docs);

struct StepResult {
  double total = 0.0;
  double classification = 0.0;
  double instance = 0.0;
  double label = 0.0;
};

// One AdamW move for a single parameter with bias-corrected moments; step
// counts from 1.
void adamw_update(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v, long step,
                  const TrainConfig& config);

// One forward/backward pass over the batch followed by an AdamW update:
// p <- p - lr * mhat / (sqrt(vhat) + eps) - lr * weight_decay * p.
// Throws NumericError naming the first offending tensor when the loss is
// non-finite.
StepResult train_step(ModelParams& params, const std::vector<const Document*>& docs,
                      const ModelConfig& model_config, const TrainConfig& config,
                      const Taxonomy& taxonomy, const MetricContext& ctx, TrainState& state);

std::vector<EvalPair> predict_corpus(ModelParams& params, const ModelConfig& model_config,
                                     const Taxonomy& taxonomy, const std::vector<Document>& docs);

struct EpochLog {
  int epoch = 0;
  double loss_total = 0.0;
  double loss_classification = 0.0;
  double loss_instance = 0.0;
  double loss_label = 0.0;
  double batch_coverage = 0.0;
  double val_micro_f1 = 0.0;
  double val_macro_f1 = 0.0;
  double val_acc_p = 0.0;
  double val_acc_d = 0.0;
};

std::string epoch_log_json(const EpochLog& log);

struct FitResult {
  ModelParams best_params;
  int best_epoch = 0;
  double best_macro_f1 = 0.0;
  std::vector<EpochLog> log;
  // Set when training aborted mid-epoch after at least one completed epoch;
  // best_params and log still cover the completed epochs.
  std::exception_ptr error;
};

// Trains until max_epochs or until validation Macro-F1 has not improved for
// `patience` epochs, returning the parameters of the best epoch. Epoch
// records go to log_stream as JSON lines; human-readable progress with
// wall-clock timings goes to progress (the JSONL log stays byte-stable
// across identical runs). Failures before the first completed epoch are
// thrown; later ones are captured in the result so completed work survives.
FitResult fit(const std::vector<Document>& train, const std::vector<Document>& val,
              ModelParams initial, const ModelConfig& model_config, const TrainConfig& config,
              const Taxonomy& taxonomy, std::ostream* log_stream = nullptr,
              std::ostream* progress = nullptr);

}  // namespace hjcl
