#include "hjcl/metrics.hpp"

#include <cstdio>

#include <json.hpp>

namespace hjcl {

namespace {

double f1_from_counts(long tp, long fp, long fn) {
  const long denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace

F1Result f1_scores(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw DataError("f1_scores: need at least one pair");
  const std::size_t n = pairs.front().gold.size();
  std::vector<long> tp(n, 0), fp(n, 0), fn(n, 0);
  for (const EvalPair& pair : pairs) {
    if (pair.gold.size() != n || pair.pred.size() != n) {
      throw DataError("f1_scores: inconsistent label vector lengths");
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (pair.pred[j] && pair.gold[j]) ++tp[j];
      else if (pair.pred[j]) ++fp[j];
      else if (pair.gold[j]) ++fn[j];
    }
  }
  F1Result out;
  out.per_label.resize(n);
  long tps = 0, fps = 0, fns = 0;
  double macro_sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    out.per_label[j] = f1_from_counts(tp[j], fp[j], fn[j]);
    macro_sum += out.per_label[j];
    tps += tp[j];
    fps += fp[j];
    fns += fn[j];
  }
  out.micro = f1_from_counts(tps, fps, fns);
  out.macro = macro_sum / static_cast<double>(n);
  return out;
}

bool path_consistent(const Taxonomy& taxonomy, const LabelVector& gold, const LabelVector& pred,
                     bool close_pred) {
  LabelVector tp(gold.size(), 0);
  for (std::size_t j = 0; j < gold.size(); ++j) tp[j] = gold[j] && pred[j];
  if (close_pred) tp = taxonomy.close_ancestors(std::move(tp));
  return taxonomy.path_count(gold) == taxonomy.induced_leaf_count(tp);
}

double path_accuracy(std::span<const EvalPair> pairs, const Taxonomy& taxonomy, bool close_pred) {
  if (pairs.empty()) throw DataError("path_accuracy: need at least one pair");
  long consistent = 0;
  for (const EvalPair& pair : pairs) {
    if (path_consistent(taxonomy, pair.gold, pair.pred, close_pred)) ++consistent;
  }
  return static_cast<double>(consistent) / static_cast<double>(pairs.size());
}

double depth_accuracy(std::span<const EvalPair> pairs, const Taxonomy& taxonomy) {
  if (pairs.empty()) throw DataError("depth_accuracy: need at least one pair");
  long consistent = 0;
  long total = 0;
  for (const EvalPair& pair : pairs) {
    for (const std::vector<int>& path : taxonomy.decompose_paths(pair.gold)) {
      ++total;
      bool all = true;
      for (int label : path) {
        if (!(pair.gold[static_cast<std::size_t>(label)] &&
              pair.pred[static_cast<std::size_t>(label)])) {
          all = false;
          break;
        }
      }
      if (all) ++consistent;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(consistent) / static_cast<double>(total);
}

MetricsReport report(std::span<const EvalPair> pairs, const Taxonomy& taxonomy,
                     bool close_pred) {
  MetricsReport r;
  r.pairs = static_cast<int>(pairs.size());
  const F1Result f1 = f1_scores(pairs);
  r.micro_f1 = f1.micro;
  r.macro_f1 = f1.macro;
  r.per_label_f1 = f1.per_label;
  r.acc_p = path_accuracy(pairs, taxonomy, close_pred);
  r.acc_d = depth_accuracy(pairs, taxonomy);

  r.per_level_f1.resize(static_cast<std::size_t>(taxonomy.max_depth()), 0.0);
  for (int level = 1; level <= taxonomy.max_depth(); ++level) {
    long tp = 0, fp = 0, fn = 0;
    for (const EvalPair& pair : pairs) {
      for (int j = 0; j < taxonomy.size(); ++j) {
        if (taxonomy.depth(j) != level) continue;
        const bool g = pair.gold[static_cast<std::size_t>(j)];
        const bool p = pair.pred[static_cast<std::size_t>(j)];
        if (g && p) ++tp;
        else if (p) ++fp;
        else if (g) ++fn;
      }
    }
    r.per_level_f1[static_cast<std::size_t>(level - 1)] = f1_from_counts(tp, fp, fn);
  }

  for (const EvalPair& pair : pairs) {
    ++r.gold_path_histogram[taxonomy.path_count(pair.gold)];
  }
  return r;
}

std::string to_json(const MetricsReport& r, const Taxonomy& taxonomy) {
  nlohmann::ordered_json j;
  j["pairs"] = r.pairs;
  j["micro_f1"] = r.micro_f1;
  j["macro_f1"] = r.macro_f1;
  j["acc_p"] = r.acc_p;
  j["acc_d"] = r.acc_d;
  nlohmann::ordered_json per_label = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < r.per_label_f1.size(); ++i) {
    per_label[taxonomy.label(static_cast<int>(i))] = r.per_label_f1[i];
  }
  j["per_label_f1"] = per_label;
  j["per_level_f1"] = r.per_level_f1;
  nlohmann::ordered_json hist = nlohmann::ordered_json::object();
  for (const auto& [paths, count] : r.gold_path_histogram) {
    hist[std::to_string(paths)] = count;
  }
  j["gold_path_histogram"] = hist;
  return j.dump(2);
}

std::string to_table(const MetricsReport& r) {
  char buf[256];
  std::string out;
  auto row = [&](const std::string& name, double v) {
    std::snprintf(buf, sizeof(buf), "%-12s %8.4f\n", name.c_str(), v);
    out += buf;
  };
  out += "metric          value\n";
  out += "---------------------\n";
  row("micro_f1", r.micro_f1);
  row("macro_f1", r.macro_f1);
  row("acc_p", r.acc_p);
  row("acc_d", r.acc_d);
  for (std::size_t i = 0; i < r.per_level_f1.size(); ++i) {
    row("level" + std::to_string(i + 1) + "_f1", r.per_level_f1[i]);
  }
  out += "paths  docs\n";
  for (const auto& [paths, count] : r.gold_path_histogram) {
    std::snprintf(buf, sizeof(buf), "%5d  %d\n", paths, count);
    out += buf;
  }
  return out;
}

}  // namespace hjcl
