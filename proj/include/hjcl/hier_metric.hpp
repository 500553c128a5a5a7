#pragma once

#include <Eigen/Dense>

#include "hjcl/taxonomy.hpp"

namespace hjcl {

// Precomputed per-label coordinate weights for the hierarchy-weighted
// label-set distance: a disagreement at level l costs max_depth - l + 1,
// so shallow disagreements cost more than deep ones. C is the distance
// between the empty set and the full set, i.e. the maximum value.
// Immutable; all operations below are pure.
struct MetricContext {
  const Taxonomy* taxonomy = nullptr;
  Eigen::VectorXd level_weight;
  double C = 0.0;
  bool normalize_gamma = false;  // off: gamma stays on the raw [0, C] scale

  static MetricContext make(const Taxonomy& taxonomy, bool normalize_gamma = false);
};

// Weighted distance between two aligned label vectors; symmetric, in [0, C].
double rho(const MetricContext& ctx, const LabelVector& a, const LabelVector& b);

struct SigmaGamma {
  double sigma = 0.0;  // positive-pair weight, 1 - rho/C, in [0, 1]
  double gamma = 0.0;  // negative-pair weight, rho (or rho/C when normalized)
};

SigmaGamma sigma_gamma(const MetricContext& ctx, const LabelVector& anchor,
                       const LabelVector& other);

// Plain count of differing coordinates (the depth-blind variant).
int hamming(const LabelVector& a, const LabelVector& b);

}  // namespace hjcl
