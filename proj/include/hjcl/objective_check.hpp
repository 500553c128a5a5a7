#pragma once

#include <string>
#include <vector>

#include "hjcl/grad_check.hpp"

namespace hjcl {

// Gradient verification of the training objectives on a fixed seeded
// micro-batch: four documents over a seven-label, depth-3 taxonomy. Each
// component is differentiated with respect to every model parameter and
// compared against central finite differences.

std::vector<std::string> objective_components();  // zlpr, supcon, hilecon, instance, total

GradCheckReport check_objective(const std::string& component, const GradCheckOptions& opt = {});

}  // namespace hjcl
