#include "hjcl/grad_check.hpp"

#include <cmath>
#include <numeric>

#include "hjcl/rng.hpp"

namespace hjcl {

namespace {

double evaluate(const std::vector<NamedParam>& params, const LossBuilder& build) {
  Graph g;
  std::vector<Tensor> leaves;
  leaves.reserve(params.size());
  for (const NamedParam& p : params) leaves.push_back(g.leaf(*p.mat, false));
  const Tensor loss = build(g, leaves);
  const double v = loss.item();
  if (!std::isfinite(v)) {
    throw NumericError("grad_check: non-finite objective value" +
                       (g.first_nonfinite() ? " at " + *g.first_nonfinite() : std::string()));
  }
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::vector<NamedParam>& params, const LossBuilder& build,
                           const GradCheckOptions& opt) {
  // Analytic pass.
  Graph g;
  std::vector<Tensor> leaves;
  leaves.reserve(params.size());
  for (const NamedParam& p : params) leaves.push_back(g.leaf(*p.mat, true));
  const Tensor loss = build(g, leaves);
  if (!std::isfinite(loss.item())) {
    throw NumericError("grad_check: non-finite objective value" +
                       (g.first_nonfinite() ? " at " + *g.first_nonfinite() : std::string()));
  }
  g.backward(loss);
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const Tensor& t : leaves) {
    analytic.push_back(t.grad());
    if (!analytic.back().allFinite()) {
      throw NumericError("grad_check: non-finite gradient");
    }
  }

  GradCheckReport report;
  Rng rng(opt.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Matrix& mat = *params[pi].mat;
    const Eigen::Index size = mat.size();
    GradCheckEntry entry;
    entry.param = params[pi].name;
    if (size == 0) {
      report.per_param.push_back(entry);
      continue;
    }
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(size));
    std::iota(coords.begin(), coords.end(), Eigen::Index{0});
    const int k = static_cast<int>(std::min<Eigen::Index>(opt.coords_per_param, size));
    // Partial Fisher-Yates: first k entries become a distinct random subset.
    for (int i = 0; i < k; ++i) {
      const std::size_t j = static_cast<std::size_t>(i) +
                            static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(size - i)));
      std::swap(coords[static_cast<std::size_t>(i)], coords[j]);
    }
    for (int i = 0; i < k; ++i) {
      const Eigen::Index c = coords[static_cast<std::size_t>(i)];
      const double saved = mat.data()[c];
      mat.data()[c] = saved + opt.eps;
      const double f_plus = evaluate(params, build);
      mat.data()[c] = saved - opt.eps;
      const double f_minus = evaluate(params, build);
      mat.data()[c] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * opt.eps);
      const double a = analytic[pi].data()[c];
      // The floor turns near-zero coordinates into an absolute comparison
      // (1e-7 at the default tolerance); below that scale the central
      // difference is dominated by round-off in f.
      const double rel = std::abs(a - numeric) / std::max(1e-3, std::abs(a) + std::abs(numeric));
      entry.max_rel_error = std::max(entry.max_rel_error, rel);
    }
    entry.coords_checked = k;
    if (entry.max_rel_error > report.max_rel_error) {
      report.max_rel_error = entry.max_rel_error;
      report.worst_param = entry.param;
    }
    report.per_param.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error < opt.tol;
  return report;
}

}  // namespace hjcl
