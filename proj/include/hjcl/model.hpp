#pragma once

#include <iosfwd>
#include <vector>

#include "hjcl/data.hpp"
#include "hjcl/grad_check.hpp"
#include "hjcl/graph.hpp"
#include "hjcl/taxonomy.hpp"

namespace hjcl {

struct ModelConfig {
  int embed_dim = 128;      // d; must be divisible by attention_heads
  int attention_heads = 4;  // h
  int gat_layers = 2;
  int vocab_size = 0;
  int encoder_layers = 0;  // parameter-free self-attention blocks; 0 = lookup only
  std::uint64_t seed = 42;

  int head_dim() const { return embed_dim / attention_heads; }
  void validate() const;
};

// All trainable tensors. Row-per-item convention throughout: embedding
// tables store one vector per row and per-row linear maps multiply on the
// right. wa/ws/ba/bs keep their conventional shapes (d x 2d, n x nd, d x 1,
// n x 1) and are transposed at use sites where needed.
struct ModelParams {
  struct GatLayer {
    Matrix weight;    // d x d
    Matrix attn_src;  // d x 1
    Matrix attn_dst;  // d x 1
  };
  struct Head {
    Matrix wq, wk, wv;  // d x d/h
  };

  Matrix token_embed;  // vocab x d
  Matrix label_embed;  // n x d
  std::vector<GatLayer> gat;
  std::vector<Head> heads;
  Matrix wo;  // d x d
  Matrix wa;  // d x 2d
  Matrix ba;  // d x 1
  Matrix ws;  // n x nd
  Matrix bs;  // n x 1

  // Embeddings ~ U(-0.05, 0.05); projections ~ U(+-1/sqrt(fan_in)); biases 0.
  static ModelParams init(const ModelConfig& config, int label_count);

  // Canonical enumeration; checkpoints, the optimizer state and graph
  // attachment all follow this order.
  std::vector<NamedParam> named();
};

// Graph-bound leaves for one forward/backward pass, in named() order.
struct ParamTensors {
  struct GatLayer {
    Tensor weight, attn_src, attn_dst;
  };
  struct Head {
    Tensor wq, wk, wv;
  };
  Tensor token_embed, label_embed, wo, wa, ba, ws, bs;
  std::vector<GatLayer> gat;
  std::vector<Head> heads;
  std::vector<Tensor> flat;
};

ParamTensors attach(Graph& g, ModelParams& params, bool requires_grad);

// Rebuilds the structured view from leaves already created in named() order
// (e.g. by the gradient checker).
ParamTensors from_flat(const ModelParams& params, std::vector<Tensor> flat);

// Token embedding lookup followed by encoder_layers parameter-free scaled
// dot-product self-attention blocks. Returns H (m x d).
Tensor encode_tokens(const ParamTensors& p, const ModelConfig& config,
                     const std::vector<int>& token_ids);

// Graph attention over parent-child edges (both directions, plus a self
// loop), one head per layer, leaky-relu slope 0.2 on the attention logits.
// Layer output for a node is the attention-weighted sum of its transformed
// neighborhood. Returns the propagated label table Y' (n x d).
Tensor propagate_hierarchy(Graph& g, const ParamTensors& p, const ModelConfig& config,
                           const Taxonomy& taxonomy);

// Multi-head attention with each label embedding as the query and the token
// representations as keys and values. Returns G (n x d).
Tensor label_aware_embeddings(const ParamTensors& p, const Tensor& H, const Tensor& Yp);

// Per label i: a_i = [g_i || y'_i]; attention scores H (wa a_i + ba) over
// tokens; z_i = softmax(scores)^T H. Returns Z (n x d), the projection the
// contrastive losses operate on.
Tensor fuse_and_project(Graph& g, const ParamTensors& p, const Tensor& H, const Tensor& G,
                        const Tensor& Yp);

// Logits S = ws vec(G) + bs, where vec flattens G row-major (label-major).
Tensor classify(const ParamTensors& p, const Tensor& G);

// bits[i] = 1 iff s_i > 0 (strictly; a logit of exactly 0 predicts negative).
LabelVector predict(const Matrix& logits);

// ---- checkpoint ----------------------------------------------------------
// Binary container, little-endian: magic "HJCLCKPT", format version, the
// config, the taxonomy hash, the vocabulary, every parameter with name and
// shape, and a trailing FNV-1a checksum of everything before it.

void save_checkpoint(std::ostream& out, const ModelConfig& config, ModelParams& params,
                     std::uint64_t taxonomy_hash, const Vocab& vocab);

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::uint64_t taxonomy_hash = 0;
  Vocab vocab;
};

Checkpoint load_checkpoint(std::istream& in);

}  // namespace hjcl
