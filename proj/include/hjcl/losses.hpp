#pragma once

#include <vector>

#include "hjcl/graph.hpp"
#include "hjcl/hier_metric.hpp"
#include "hjcl/taxonomy.hpp"

namespace hjcl {

// Label-level contrastive variants: the full hierarchy-weighted loss, the
// Hamming-weighted ablation, and the plain unweighted dot-product loss.
enum class LabelLossMode { hilecon, lecon, supcon };

// Depth penalty for the instance loss. The raw form exp(1/(L - l)) is
// undefined at the deepest level; `shifted` uses exp(1/(L - l + 1)) and
// `paper_clamped` uses exp(1/max(L - l, 1)).
enum class DepthPenalty { shifted, paper_clamped };

// Which samples count as instance-loss positives at a level: identical
// level-truncated label sets, or any overlap.
enum class PositiveRule { exact_equality, overlap };

enum class ClassificationLoss { zlpr, bce };

// Normalizer of the label-level loss: the number of anchor embeddings, or
// the label count.
enum class LabelLossPrefactor { anchor_count, label_count };

struct LossWeights {
  double lambda1 = 0.1;  // instance-level weight
  double lambda2 = 0.5;  // label-level weight
  double tau = 0.1;      // softmax temperature, > 0
  LabelLossMode mode = LabelLossMode::hilecon;
  ClassificationLoss classification = ClassificationLoss::zlpr;
  DepthPenalty penalty = DepthPenalty::shifted;
  PositiveRule positive_rule = PositiveRule::exact_equality;
  bool strict_negatives = false;  // instance denominators exclude positives
  LabelLossPrefactor prefactor = LabelLossPrefactor::anchor_count;

  void validate() const;
};

// One training batch for the contrastive objectives: the projected label
// embeddings Z from fuse_and_project and the gold sets, aligned by sample.
// All samples share one taxonomy.
struct ContrastiveBatch {
  std::vector<Tensor> z;          // each n x d
  std::vector<LabelVector> gold;  // each length n, ancestor-closed
};

// Plain supervised contrastive loss over gold-label embeddings across the
// batch: anchors are all active (sample, label) embeddings, positives share
// the label in another sample, similarity is dot product / tau, and anchors
// without positives contribute nothing. Following the supervised-contrastive
// convention, embeddings are projected onto the unit sphere inside the loss,
// making the dot products cosines; a zero-norm active embedding is a
// NumericError. Throws DataError when no gold label is active anywhere in
// the batch.
Tensor supcon(const ContrastiveBatch& batch, double tau);

// Hierarchy-weighted label-level contrastive loss. Positive pairs are
// weighted by sigma and negatives by gamma from the anchor/other gold-set
// distance; similarity is exp(cos/tau). lecon swaps the weighted distance
// for Hamming. supcon mode sets all weights to 1, uses dot-product
// similarity and drops the prefactor, recovering supcon() exactly.
Tensor hilecon(const ContrastiveBatch& batch, double tau, const MetricContext& ctx,
               LabelLossMode mode, LabelLossPrefactor prefactor = LabelLossPrefactor::anchor_count);

struct InstanceLossStats {
  int skipped_samples = 0;      // empty gold set; excluded from every level
  int levels_without_pairs = 0;
};

// Instance-level contrastive loss: per level l, each sample is pooled to
// the mean of its unit-normalized active label embeddings of depth <= l,
// samples with equal truncated label sets are positives, and pair log-odds
// are weighted by a depth penalty that grows with l. Levels without
// positive pairs contribute zero.
Tensor instance_loss(const ContrastiveBatch& batch, double tau, const Taxonomy& taxonomy,
                     DepthPenalty penalty = DepthPenalty::shifted,
                     PositiveRule positive_rule = PositiveRule::exact_equality,
                     bool strict_negatives = false, InstanceLossStats* stats = nullptr);

// log(1 + sum_pos e^{-s}) + log(1 + sum_neg e^{s}); the zero bound makes 0
// the prediction threshold. Stable log-sum-exp evaluation.
Tensor zlpr(const Tensor& logits, const LabelVector& gold);

// Per-label binary cross-entropy on the logits, averaged over labels.
Tensor bce(const Tensor& logits, const LabelVector& gold);

struct LossBreakdown {
  Tensor total;
  double total_value = 0.0;
  double classification = 0.0;  // mean over the batch
  double instance = 0.0;
  double label = 0.0;
};

// Mean classification loss + lambda1 * instance + lambda2 * label-level.
// Terms with a zero lambda are not built at all, so lambda1 = lambda2 = 0
// reproduces the mean classification loss bit for bit.
LossBreakdown total_loss(const ContrastiveBatch& batch, const std::vector<Tensor>& logits,
                         const LossWeights& weights, const MetricContext& ctx,
                         const Taxonomy& taxonomy, InstanceLossStats* stats = nullptr);

}  // namespace hjcl
