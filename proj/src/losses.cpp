#include "hjcl/losses.hpp"

#include <algorithm>
#include <cmath>

namespace hjcl {

void LossWeights::validate() const {
  std::string errors;
  auto fail = [&errors](const std::string& msg) {
    if (!errors.empty()) errors += "; ";
    errors += msg;
  };
  if (!(tau > 0.0)) fail("tau must be > 0");
  if (lambda1 < 0.0) fail("lambda1 must be >= 0");
  if (lambda2 < 0.0) fail("lambda2 must be >= 0");
  if (!errors.empty()) throw ConfigError("loss weights: " + errors);
}

namespace {

struct AnchorIndex {
  int sample = 0;
  int label = 0;
};

// Gold-label embeddings of the whole batch, stacked sample-major and
// projected onto the unit sphere (the supervised-contrastive convention;
// dot products of the stacked rows are cosines).
struct AnchorSet {
  std::vector<AnchorIndex> anchors;
  Tensor stacked;  // |I| x d, unit rows
};

void require_nonzero_rows(const char* op, const Tensor& z, const LabelVector& gold, int sample,
                          const Taxonomy& taxonomy) {
  for (std::size_t j = 0; j < gold.size(); ++j) {
    if (gold[j] && z.value().row(static_cast<Eigen::Index>(j)).norm() == 0.0) {
      throw NumericError(std::string(op) + ": zero-norm embedding for sample " +
                         std::to_string(sample) + ", label '" +
                         taxonomy.label(static_cast<int>(j)) + "'");
    }
  }
}

AnchorSet collect_anchors(const char* op, const ContrastiveBatch& batch,
                          const Taxonomy* taxonomy) {
  if (batch.z.size() != batch.gold.size() || batch.z.empty()) {
    throw DataError("contrastive batch: need aligned, nonempty z/gold lists");
  }
  AnchorSet set;
  std::vector<Tensor> parts;
  for (std::size_t i = 0; i < batch.z.size(); ++i) {
    if (taxonomy) {
      require_nonzero_rows(op, batch.z[i], batch.gold[i], static_cast<int>(i), *taxonomy);
    }
    std::vector<int> active;
    for (std::size_t j = 0; j < batch.gold[i].size(); ++j) {
      if (batch.gold[i][j]) {
        active.push_back(static_cast<int>(j));
        set.anchors.push_back({static_cast<int>(i), static_cast<int>(j)});
      }
    }
    if (!active.empty()) parts.push_back(gather_rows(batch.z[i], active));
  }
  if (set.anchors.empty()) {
    throw DataError("contrastive batch: no gold label is active in any sample");
  }
  set.stacked = row_l2_normalize(concat_rows(parts));
  return set;
}

// log sum_x w[a,x] exp(sim[a,x]) per row, computed against the support
// maximum so large similarities cannot overflow. Off-support entries are
// zeroed before the exp: they would otherwise overflow on their own even
// though their weight is zero. Rows whose support is empty get weight 1 on
// the diagonal; callers must mask such rows out.
Tensor weighted_row_lse(const Tensor& sim, Matrix weights) {
  Graph& g = sim.graph();
  const Eigen::Index a = sim.rows();
  Matrix shift(a, 1);
  for (Eigen::Index i = 0; i < a; ++i) {
    double m = 0.0;
    bool any = false;
    for (Eigen::Index k = 0; k < a; ++k) {
      if (weights(i, k) > 0.0) {
        m = any ? std::max(m, sim.value()(i, k)) : sim.value()(i, k);
        any = true;
      }
    }
    if (!any) weights(i, i) = 1.0;
    shift(i, 0) = any ? m : sim.value()(i, i);
  }
  Matrix support(a, a);
  for (Eigen::Index i = 0; i < a; ++i) {
    for (Eigen::Index k = 0; k < a; ++k) support(i, k) = weights(i, k) > 0.0 ? 1.0 : 0.0;
  }
  Matrix shift_full(a, a);
  for (Eigen::Index i = 0; i < a; ++i) shift_full.row(i).setConstant(shift(i, 0));
  Tensor shifted = hadamard(sim - g.leaf(std::move(shift_full)), g.leaf(std::move(support)));
  Tensor masked = hadamard(g.leaf(std::move(weights)), exp(shifted));
  Tensor row_sums = matmul(masked, g.leaf(Matrix::Ones(a, 1)));
  return log(row_sums) + g.leaf(std::move(shift));
}

// Shared assembly of the label-level losses:
//   L = pref * sum_a [ lse_a - (1/|P_a|) sum_p (log w_pos[a,p] + sim[a,p]) ]
// with anchors lacking positives dropped from both pieces.
Tensor anchor_contrast(const Tensor& sim, const Matrix& denom_weights,
                       const std::vector<std::vector<int>>& positives, const Matrix& log_pos_weight,
                       double prefactor) {
  Graph& g = sim.graph();
  const Eigen::Index a = sim.rows();
  Matrix pos_mask = Matrix::Zero(a, a);
  Matrix include = Matrix::Zero(a, 1);
  double constant = 0.0;
  for (Eigen::Index i = 0; i < a; ++i) {
    const auto& pos = positives[static_cast<std::size_t>(i)];
    if (pos.empty()) continue;
    include(i, 0) = 1.0;
    const double inv = 1.0 / static_cast<double>(pos.size());
    for (int p : pos) {
      pos_mask(i, p) = inv;
      constant += inv * log_pos_weight(i, p);
    }
  }
  Tensor lse = weighted_row_lse(sim, denom_weights);
  Tensor denom_term = matmul(transpose(g.leaf(std::move(include))), lse);
  Tensor num_term = sum_all(hadamard(g.leaf(std::move(pos_mask)), sim));
  return prefactor * (denom_term - num_term - g.scalar(constant));
}

}  // namespace

Tensor supcon(const ContrastiveBatch& batch, double tau) {
  if (!(tau > 0.0)) throw DataError("supcon: tau must be > 0");
  AnchorSet set = collect_anchors("supcon", batch, nullptr);
  const Eigen::Index a = static_cast<Eigen::Index>(set.anchors.size());
  Tensor sim = (1.0 / tau) * matmul(set.stacked, transpose(set.stacked));

  Matrix weights = Matrix::Ones(a, a);
  weights.diagonal().setZero();
  std::vector<std::vector<int>> positives(static_cast<std::size_t>(a));
  for (Eigen::Index i = 0; i < a; ++i) {
    for (Eigen::Index k = 0; k < a; ++k) {
      if (i == k) continue;
      if (set.anchors[static_cast<std::size_t>(i)].label ==
              set.anchors[static_cast<std::size_t>(k)].label &&
          set.anchors[static_cast<std::size_t>(i)].sample !=
              set.anchors[static_cast<std::size_t>(k)].sample) {
        positives[static_cast<std::size_t>(i)].push_back(static_cast<int>(k));
      }
    }
  }
  return anchor_contrast(sim, weights, positives, Matrix::Zero(a, a), 1.0);
}

Tensor hilecon(const ContrastiveBatch& batch, double tau, const MetricContext& ctx,
               LabelLossMode mode, LabelLossPrefactor prefactor) {
  if (!(tau > 0.0)) throw DataError("hilecon: tau must be > 0");
  AnchorSet set = collect_anchors("hilecon", batch, ctx.taxonomy);
  const Eigen::Index a = static_cast<Eigen::Index>(set.anchors.size());
  const int n = ctx.taxonomy->size();

  // Rows are unit vectors, so these dot products are the cosines f expects.
  Tensor sim = (1.0 / tau) * matmul(set.stacked, transpose(set.stacked));

  // Pairwise sample-distance weights. lecon swaps in the Hamming metric with
  // its own maximum as normalizer; supcon mode forces every weight to 1.
  const int b = static_cast<int>(batch.gold.size());
  Matrix sig(b, b), gam(b, b);
  for (int i = 0; i < b; ++i) {
    for (int k = 0; k <= i; ++k) {
      double s = 1.0, gm = 1.0;
      if (mode == LabelLossMode::lecon) {
        const double h = static_cast<double>(hamming(batch.gold[static_cast<std::size_t>(i)],
                                                     batch.gold[static_cast<std::size_t>(k)]));
        s = 1.0 - h / static_cast<double>(n);
        gm = ctx.normalize_gamma ? h / static_cast<double>(n) : h;
      } else if (mode == LabelLossMode::hilecon) {
        const SigmaGamma sg = sigma_gamma(ctx, batch.gold[static_cast<std::size_t>(i)],
                                          batch.gold[static_cast<std::size_t>(k)]);
        s = sg.sigma;
        gm = sg.gamma;
      }
      sig(i, k) = sig(k, i) = s;
      gam(i, k) = gam(k, i) = gm;
    }
  }

  Matrix weights = Matrix::Zero(a, a);
  Matrix log_pos = Matrix::Zero(a, a);
  std::vector<std::vector<int>> positives(static_cast<std::size_t>(a));
  for (Eigen::Index i = 0; i < a; ++i) {
    const AnchorIndex& ai = set.anchors[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < a; ++k) {
      if (i == k) continue;
      const AnchorIndex& ak = set.anchors[static_cast<std::size_t>(k)];
      if (ai.label == ak.label && ai.sample != ak.sample) {
        weights(i, k) = sig(ai.sample, ak.sample);
        log_pos(i, k) = std::log(sig(ai.sample, ak.sample));
        positives[static_cast<std::size_t>(i)].push_back(static_cast<int>(k));
      } else {
        weights(i, k) = gam(ai.sample, ak.sample);
      }
    }
  }
  // supcon mode reproduces the plain loss, which carries no prefactor.
  const double pref = mode == LabelLossMode::supcon ? 1.0
                      : prefactor == LabelLossPrefactor::anchor_count
                          ? 1.0 / static_cast<double>(a)
                          : 1.0 / static_cast<double>(n);
  return anchor_contrast(sim, weights, positives, log_pos, pref);
}

Tensor instance_loss(const ContrastiveBatch& batch, double tau, const Taxonomy& taxonomy,
                     DepthPenalty penalty, PositiveRule positive_rule, bool strict_negatives,
                     InstanceLossStats* stats) {
  if (!(tau > 0.0)) throw DataError("instance_loss: tau must be > 0");
  if (batch.z.size() != batch.gold.size() || batch.z.size() < 2) {
    throw DataError("instance_loss: need an aligned batch of at least two samples");
  }
  Graph& g = batch.z.front().graph();
  const int depth = taxonomy.max_depth();

  std::vector<int> valid;
  for (std::size_t i = 0; i < batch.gold.size(); ++i) {
    const bool any =
        std::any_of(batch.gold[i].begin(), batch.gold[i].end(), [](std::uint8_t b) { return b; });
    if (any) {
      valid.push_back(static_cast<int>(i));
    } else if (stats) {
      ++stats->skipped_samples;
    }
  }
  const Eigen::Index v = static_cast<Eigen::Index>(valid.size());
  if (v < 2) return g.scalar(0.0);

  // Active rows are unit-normalized before pooling, matching the sphere the
  // label-level losses contrast on; the pooled means then have norm <= 1 and
  // the similarities stay within +-1/tau.
  std::vector<Tensor> unit_active;             // per valid sample, |active| x d
  std::vector<std::vector<int>> active_labels; // label ids aligned with rows
  for (int i : valid) {
    require_nonzero_rows("instance_loss", batch.z[static_cast<std::size_t>(i)],
                         batch.gold[static_cast<std::size_t>(i)], i, taxonomy);
    std::vector<int> active;
    for (std::size_t j = 0; j < batch.gold[static_cast<std::size_t>(i)].size(); ++j) {
      if (batch.gold[static_cast<std::size_t>(i)][j]) active.push_back(static_cast<int>(j));
    }
    unit_active.push_back(
        row_l2_normalize(gather_rows(batch.z[static_cast<std::size_t>(i)], active)));
    active_labels.push_back(std::move(active));
  }

  Tensor total;
  for (int level = 1; level <= depth; ++level) {
    std::vector<Tensor> pooled;
    std::vector<LabelVector> truncated;
    pooled.reserve(static_cast<std::size_t>(v));
    for (std::size_t vi = 0; vi < valid.size(); ++vi) {
      std::vector<int> rows;  // positions within the gathered active block
      LabelVector trunc(batch.gold[static_cast<std::size_t>(valid[vi])].size(), 0);
      for (std::size_t p = 0; p < active_labels[vi].size(); ++p) {
        const int j = active_labels[vi][p];
        if (taxonomy.depth(j) <= level) {
          rows.push_back(static_cast<int>(p));
          trunc[static_cast<std::size_t>(j)] = 1;
        }
      }
      pooled.push_back(mean_rows(unit_active[vi], rows));
      truncated.push_back(std::move(trunc));
    }

    std::vector<std::vector<int>> positives(static_cast<std::size_t>(v));
    int pair_count = 0;
    for (Eigen::Index i = 0; i < v; ++i) {
      for (Eigen::Index k = 0; k < v; ++k) {
        if (i == k) continue;
        const bool match =
            positive_rule == PositiveRule::exact_equality
                ? truncated[static_cast<std::size_t>(i)] == truncated[static_cast<std::size_t>(k)]
                : [&] {
                    for (std::size_t j = 0; j < truncated[static_cast<std::size_t>(i)].size(); ++j) {
                      if (truncated[static_cast<std::size_t>(i)][j] &&
                          truncated[static_cast<std::size_t>(k)][j]) {
                        return true;
                      }
                    }
                    return false;
                  }();
        if (match) positives[static_cast<std::size_t>(i)].push_back(static_cast<int>(k));
      }
    }

    Matrix denom = Matrix::Ones(v, v);
    denom.diagonal().setZero();
    if (strict_negatives) {
      for (Eigen::Index i = 0; i < v; ++i) {
        for (int p : positives[static_cast<std::size_t>(i)]) denom(i, p) = 0.0;
        // Anchors left without any negative cannot form the ratio; their
        // pairs are dropped.
        if (denom.row(i).sum() == 0.0) positives[static_cast<std::size_t>(i)].clear();
      }
    }
    for (const auto& pos : positives) pair_count += static_cast<int>(pos.size());
    if (pair_count == 0) {
      if (stats) ++stats->levels_without_pairs;
      continue;
    }

    Tensor x = concat_rows(pooled);
    Tensor sim = (1.0 / tau) * matmul(x, transpose(x));
    Matrix pos_mask = Matrix::Zero(v, v);
    Matrix counts = Matrix::Zero(v, 1);
    for (Eigen::Index i = 0; i < v; ++i) {
      for (int p : positives[static_cast<std::size_t>(i)]) pos_mask(i, p) = 1.0;
      counts(i, 0) = static_cast<double>(positives[static_cast<std::size_t>(i)].size());
    }
    Tensor lse = weighted_row_lse(sim, denom);
    Tensor level_sum = matmul(transpose(g.leaf(std::move(counts))), lse) -
                       sum_all(hadamard(g.leaf(std::move(pos_mask)), sim));
    const double pen = penalty == DepthPenalty::shifted
                           ? std::exp(1.0 / static_cast<double>(depth - level + 1))
                           : std::exp(1.0 / static_cast<double>(std::max(depth - level, 1)));
    Tensor term = (pen / static_cast<double>(pair_count)) * level_sum;
    total = total.valid() ? total + term : term;
  }
  if (!total.valid()) return g.scalar(0.0);
  return (1.0 / static_cast<double>(depth)) * total;
}

Tensor zlpr(const Tensor& logits, const LabelVector& gold) {
  Graph& g = logits.graph();
  const Matrix& s = logits.value();
  if (s.cols() != 1 || s.rows() != static_cast<Eigen::Index>(gold.size())) {
    throw ShapeError("zlpr: logits " + std::to_string(s.rows()) + "x" + std::to_string(s.cols()) +
                     " vs gold length " + std::to_string(gold.size()));
  }
  if (!s.allFinite()) throw NumericError("zlpr: non-finite logit");
  std::vector<int> pos, neg;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    (gold[i] ? pos : neg).push_back(static_cast<int>(i));
  }
  Tensor zero = g.scalar(0.0);
  Tensor pos_term = pos.empty()
                        ? log_sum_exp(zero)
                        : log_sum_exp(concat_rows({zero, -1.0 * gather_rows(logits, pos)}));
  Tensor neg_term = neg.empty()
                        ? log_sum_exp(zero)
                        : log_sum_exp(concat_rows({zero, gather_rows(logits, neg)}));
  return pos_term + neg_term;
}

Tensor bce(const Tensor& logits, const LabelVector& gold) {
  Graph& g = logits.graph();
  const Matrix& s = logits.value();
  if (s.cols() != 1 || s.rows() != static_cast<Eigen::Index>(gold.size())) {
    throw ShapeError("bce: logits " + std::to_string(s.rows()) + "x" + std::to_string(s.cols()) +
                     " vs gold length " + std::to_string(gold.size()));
  }
  if (!s.allFinite()) throw NumericError("bce: non-finite logit");
  if (gold.empty()) return g.scalar(0.0);
  Matrix y(static_cast<Eigen::Index>(gold.size()), 1);
  for (std::size_t i = 0; i < gold.size(); ++i) y(static_cast<Eigen::Index>(i), 0) = gold[i];
  Tensor per_label = softplus(logits) - hadamard(g.leaf(std::move(y)), logits);
  return (1.0 / static_cast<double>(gold.size())) * sum_all(per_label);
}

LossBreakdown total_loss(const ContrastiveBatch& batch, const std::vector<Tensor>& logits,
                         const LossWeights& weights, const MetricContext& ctx,
                         const Taxonomy& taxonomy, InstanceLossStats* stats) {
  weights.validate();
  if (logits.size() != batch.gold.size() || logits.empty()) {
    throw DataError("total_loss: logits/batch size mismatch");
  }
  LossBreakdown out;
  Tensor cls_sum;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    Tensor term = weights.classification == ClassificationLoss::zlpr
                      ? zlpr(logits[i], batch.gold[i])
                      : bce(logits[i], batch.gold[i]);
    cls_sum = cls_sum.valid() ? cls_sum + term : term;
  }
  Tensor total = (1.0 / static_cast<double>(logits.size())) * cls_sum;
  out.classification = total.item();
  // A single-sample batch has no pairs to contrast; both terms are zero.
  if (weights.lambda1 > 0.0 && batch.z.size() >= 2) {
    Tensor inst = instance_loss(batch, weights.tau, taxonomy, weights.penalty,
                                weights.positive_rule, weights.strict_negatives, stats);
    out.instance = inst.item();
    total = total + weights.lambda1 * inst;
  }
  if (weights.lambda2 > 0.0 && batch.z.size() >= 2) {
    Tensor label = hilecon(batch, weights.tau, ctx, weights.mode, weights.prefactor);
    out.label = label.item();
    total = total + weights.lambda2 * label;
  }
  out.total = total;
  out.total_value = total.item();
  return out;
}

}  // namespace hjcl
