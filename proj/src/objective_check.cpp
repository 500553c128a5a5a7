#include "hjcl/objective_check.hpp"

#include <algorithm>

#include "hjcl/rng.hpp"
#include "hjcl/trainer.hpp"

namespace hjcl {

namespace {

Taxonomy fixture_taxonomy() {
  return Taxonomy::from_edges({
      {"news", "ROOT"},
      {"features", "ROOT"},
      {"sports", "news"},
      {"politics", "news"},
      {"travel", "features"},
      {"europe", "politics"},
      {"guides", "travel"},
  });
}

std::vector<Document> fixture_docs(const Taxonomy& taxonomy, const ModelConfig& config,
                                   std::uint64_t seed) {
  // Gold sets overlap across documents so every contrastive term has
  // nonempty positive sets.
  const std::vector<std::vector<std::string>> gold_names = {
      {"news", "sports"},
      {"news", "sports", "features", "travel"},
      {"news", "politics", "europe"},
      {"features", "travel", "guides"},
  };
  Rng rng(seed);
  std::vector<Document> docs;
  for (std::size_t i = 0; i < gold_names.size(); ++i) {
    Document doc;
    doc.id = "g" + std::to_string(i);
    const int len = 5 + static_cast<int>(rng.below(4));
    for (int t = 0; t < len; ++t) {
      doc.token_ids.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(config.vocab_size))));
    }
    LabelVector gold(static_cast<std::size_t>(taxonomy.size()), 0);
    for (const std::string& name : gold_names[i]) {
      gold[static_cast<std::size_t>(taxonomy.index_of(name))] = 1;
    }
    doc.gold = taxonomy.close_ancestors(gold);
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace

std::vector<std::string> objective_components() {
  return {"zlpr", "supcon", "hilecon", "instance", "total"};
}

GradCheckReport check_objective(const std::string& component, const GradCheckOptions& opt) {
  const auto known = objective_components();
  if (std::find(known.begin(), known.end(), component) == known.end()) {
    throw DataError("unknown objective component '" + component + "'");
  }

  const Taxonomy taxonomy = fixture_taxonomy();
  ModelConfig config;
  config.embed_dim = 8;
  config.attention_heads = 2;
  config.gat_layers = 2;
  config.vocab_size = 12;
  config.encoder_layers = 1;
  config.seed = opt.seed;
  ModelParams params = ModelParams::init(config, taxonomy.size());
  const std::vector<Document> storage = fixture_docs(taxonomy, config, opt.seed);
  std::vector<const Document*> docs;
  for (const Document& d : storage) docs.push_back(&d);
  const MetricContext ctx = MetricContext::make(taxonomy);
  LossWeights weights;  // paper defaults

  const LossBuilder builder = [&](Graph& g, const std::vector<Tensor>& leaves) -> Tensor {
    ParamTensors pt = from_flat(params, leaves);
    ForwardOutputs fwd = forward_batch(g, pt, config, taxonomy, docs);
    if (component == "zlpr") {
      Tensor sum;
      for (std::size_t i = 0; i < fwd.logits.size(); ++i) {
        Tensor term = zlpr(fwd.logits[i], fwd.batch.gold[i]);
        sum = sum.valid() ? sum + term : term;
      }
      return (1.0 / static_cast<double>(fwd.logits.size())) * sum;
    }
    if (component == "supcon") return supcon(fwd.batch, weights.tau);
    if (component == "hilecon") {
      return hilecon(fwd.batch, weights.tau, ctx, LabelLossMode::hilecon);
    }
    if (component == "instance") {
      return instance_loss(fwd.batch, weights.tau, taxonomy);
    }
    return total_loss(fwd.batch, fwd.logits, weights, ctx, taxonomy).total;
  };

  return grad_check(params.named(), builder, opt);
}

}  // namespace hjcl
