#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hjcl/graph.hpp"

namespace hjcl {

// A named trainable matrix; the pointer aliases caller-owned storage.
struct NamedParam {
  std::string name;
  Matrix* mat = nullptr;
};

// Builds the scalar objective from leaves aligned with the parameter list.
// Must be deterministic in the leaf values.
using LossBuilder = std::function<Tensor(Graph&, const std::vector<Tensor>&)>;

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  int coords_per_param = 32;  // random distinct coordinates, capped at size
  std::uint64_t seed = 0x5eedULL;
};

struct GradCheckEntry {
  std::string param;
  double max_rel_error = 0.0;
  int coords_checked = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool passed = true;
  std::string worst_param;
  std::vector<GradCheckEntry> per_param;
};

// Compares reverse-mode gradients against central finite differences
// (f(x+eps e) - f(x-eps e)) / (2 eps) on a random coordinate subset of every
// parameter. Relative error uses |a-n| / max(1e-3, |a|+|n|); the floor makes
// near-zero coordinates an absolute comparison below the round-off scale of
// the difference quotient. Throws NumericError if any value or gradient
// comes out non-finite.
GradCheckReport grad_check(const std::vector<NamedParam>& params, const LossBuilder& build,
                           const GradCheckOptions& opt = {});

}  // namespace hjcl
