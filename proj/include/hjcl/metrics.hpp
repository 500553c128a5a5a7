#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "hjcl/taxonomy.hpp"

namespace hjcl {

struct EvalPair {
  LabelVector gold;  // ancestor-closed
  LabelVector pred;  // may be non-closed
};

struct F1Result {
  double micro = 0.0;
  double macro = 0.0;
  std::vector<double> per_label;
};

// Micro = F1 over pooled TP/FP/FN; macro = unweighted mean of per-label F1.
// A label with no gold and no predicted occurrence scores 0 and stays in
// the macro mean.
F1Result f1_scores(std::span<const EvalPair> pairs);

// True iff gold and the re-closed true positives decompose into the same
// number of paths. With close_pred = false the raw intersection is used,
// which is only well-defined when it happens to be closed.
bool path_consistent(const Taxonomy& taxonomy, const LabelVector& gold, const LabelVector& pred,
                     bool close_pred = true);

// Fraction of pairs that are path-consistent.
double path_accuracy(std::span<const EvalPair> pairs, const Taxonomy& taxonomy,
                     bool close_pred = true);

// Fraction of gold root-to-leaf chains fully contained in the true
// positives. 1.0 when no gold path exists at all (vacuous).
double depth_accuracy(std::span<const EvalPair> pairs, const Taxonomy& taxonomy);

struct MetricsReport {
  int pairs = 0;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  double acc_p = 0.0;
  double acc_d = 0.0;
  std::vector<double> per_label_f1;
  std::vector<double> per_level_f1;       // micro-F1 pooled within each level
  std::map<int, int> gold_path_histogram; // path count -> number of documents
};

MetricsReport report(std::span<const EvalPair> pairs, const Taxonomy& taxonomy,
                     bool close_pred = true);

std::string to_json(const MetricsReport& r, const Taxonomy& taxonomy);
std::string to_table(const MetricsReport& r);

}  // namespace hjcl
