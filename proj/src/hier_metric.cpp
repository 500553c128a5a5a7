#include "hjcl/hier_metric.hpp"

namespace hjcl {

MetricContext MetricContext::make(const Taxonomy& taxonomy, bool normalize_gamma) {
  MetricContext ctx;
  ctx.taxonomy = &taxonomy;
  ctx.level_weight.resize(taxonomy.size());
  for (int i = 0; i < taxonomy.size(); ++i) {
    ctx.level_weight[i] = static_cast<double>(taxonomy.max_depth() - taxonomy.depth(i) + 1);
  }
  ctx.C = ctx.level_weight.sum();
  ctx.normalize_gamma = normalize_gamma;
  return ctx;
}

namespace {
void check_aligned(const MetricContext& ctx, const LabelVector& a, const LabelVector& b) {
  const std::size_t n = static_cast<std::size_t>(ctx.taxonomy->size());
  if (a.size() != n || b.size() != n) {
    throw DataError("hier_metric: label vector length mismatch with taxonomy (" +
                    std::to_string(a.size()) + ", " + std::to_string(b.size()) + " vs " +
                    std::to_string(n) + ")");
  }
}
}  // namespace

double rho(const MetricContext& ctx, const LabelVector& a, const LabelVector& b) {
  check_aligned(ctx, a, b);
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k] != b[k]) d += ctx.level_weight[static_cast<Eigen::Index>(k)];
  }
  return d;
}

SigmaGamma sigma_gamma(const MetricContext& ctx, const LabelVector& anchor,
                       const LabelVector& other) {
  const double r = rho(ctx, anchor, other);
  SigmaGamma sg;
  sg.sigma = 1.0 - r / ctx.C;
  sg.gamma = ctx.normalize_gamma ? r / ctx.C : r;
  return sg;
}

int hamming(const LabelVector& a, const LabelVector& b) {
  if (a.size() != b.size()) {
    throw DataError("hamming: length mismatch (" + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()) + ")");
  }
  int d = 0;
  for (std::size_t k = 0; k < a.size(); ++k) d += (a[k] != b[k]) ? 1 : 0;
  return d;
}

}  // namespace hjcl
