#include "hjcl/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "hjcl/rng.hpp"

namespace hjcl {

void ModelConfig::validate() const {
  std::string errors;
  auto fail = [&errors](const std::string& msg) {
    if (!errors.empty()) errors += "; ";
    errors += msg;
  };
  if (embed_dim < 1) fail("embed_dim must be >= 1");
  if (attention_heads < 1) fail("attention_heads must be >= 1");
  if (embed_dim % std::max(attention_heads, 1) != 0) {
    fail("embed_dim must be divisible by attention_heads");
  }
  if (gat_layers < 1) fail("gat_layers must be >= 1");
  if (vocab_size < 1) fail("vocab_size must be >= 1");
  if (encoder_layers < 0) fail("encoder_layers must be >= 0");
  if (!errors.empty()) throw ConfigError("model config: " + errors);
}

namespace {

Matrix uniform_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
  }
  return m;
}

Matrix projection(Rng& rng, Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in) {
  return uniform_matrix(rng, rows, cols, 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

}  // namespace

// Embedding tables start at unit per-coordinate variance (uniform bound
// sqrt(3)), matching the layer-normalized activations of the full-size
// encoder this one stands in for. At the 3e-5 learning rate a 0.05-scale
// init leaves the logits unable to reach separating margins within a
// realistic epoch budget.
const double kEmbedInitBound = std::sqrt(3.0);

ModelParams ModelParams::init(const ModelConfig& config, int label_count) {
  config.validate();
  if (label_count < 1) throw DataError("model init: need at least one label");
  const Eigen::Index d = config.embed_dim;
  const Eigen::Index n = label_count;
  Rng rng(config.seed);
  ModelParams p;
  p.token_embed = uniform_matrix(rng, config.vocab_size, d, kEmbedInitBound);
  p.label_embed = uniform_matrix(rng, n, d, kEmbedInitBound);
  p.gat.resize(static_cast<std::size_t>(config.gat_layers));
  for (auto& layer : p.gat) {
    // Identity transform at init: the first propagation rounds smooth each
    // label with its neighbours without scrambling the embedding space.
    layer.weight = Matrix::Identity(d, d);
    layer.attn_src = projection(rng, d, 1, d);
    layer.attn_dst = projection(rng, d, 1, d);
  }
  p.heads.resize(static_cast<std::size_t>(config.attention_heads));
  for (auto& head : p.heads) {
    // Query and key projections start tied so random projection preserves
    // label-token dot products: labels attend to their own description
    // tokens from the first step. The matrices train independently.
    head.wq = projection(rng, d, config.head_dim(), d);
    head.wk = head.wq;
    head.wv = projection(rng, d, config.head_dim(), d);
  }
  p.wo = projection(rng, d, d, d);
  p.wa = projection(rng, d, 2 * d, 2 * d);
  p.ba = Matrix::Zero(d, 1);
  p.ws = projection(rng, n, n * d, n * d);
  p.bs = Matrix::Zero(n, 1);
  return p;
}

std::vector<NamedParam> ModelParams::named() {
  std::vector<NamedParam> out;
  out.push_back({"token_embed", &token_embed});
  out.push_back({"label_embed", &label_embed});
  for (std::size_t i = 0; i < gat.size(); ++i) {
    const std::string base = "gat" + std::to_string(i) + ".";
    out.push_back({base + "weight", &gat[i].weight});
    out.push_back({base + "attn_src", &gat[i].attn_src});
    out.push_back({base + "attn_dst", &gat[i].attn_dst});
  }
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const std::string base = "head" + std::to_string(i) + ".";
    out.push_back({base + "wq", &heads[i].wq});
    out.push_back({base + "wk", &heads[i].wk});
    out.push_back({base + "wv", &heads[i].wv});
  }
  out.push_back({"wo", &wo});
  out.push_back({"wa", &wa});
  out.push_back({"ba", &ba});
  out.push_back({"ws", &ws});
  out.push_back({"bs", &bs});
  return out;
}

ParamTensors from_flat(const ModelParams& params, std::vector<Tensor> flat) {
  ParamTensors pt;
  pt.flat = std::move(flat);
  std::size_t at = 0;
  pt.token_embed = pt.flat[at++];
  pt.label_embed = pt.flat[at++];
  pt.gat.resize(params.gat.size());
  for (auto& layer : pt.gat) {
    layer.weight = pt.flat[at++];
    layer.attn_src = pt.flat[at++];
    layer.attn_dst = pt.flat[at++];
  }
  pt.heads.resize(params.heads.size());
  for (auto& head : pt.heads) {
    head.wq = pt.flat[at++];
    head.wk = pt.flat[at++];
    head.wv = pt.flat[at++];
  }
  pt.wo = pt.flat[at++];
  pt.wa = pt.flat[at++];
  pt.ba = pt.flat[at++];
  pt.ws = pt.flat[at++];
  pt.bs = pt.flat[at++];
  return pt;
}

ParamTensors attach(Graph& g, ModelParams& params, bool requires_grad) {
  std::vector<Tensor> flat;
  for (const NamedParam& np : params.named()) {
    flat.push_back(g.leaf(*np.mat, requires_grad));
  }
  return from_flat(params, std::move(flat));
}

Tensor encode_tokens(const ParamTensors& p, const ModelConfig& config,
                     const std::vector<int>& token_ids) {
  if (token_ids.empty()) throw DataError("encode_tokens: empty token list");
  for (int id : token_ids) {
    if (id < 0 || id >= config.vocab_size) {
      throw DataError("encode_tokens: token id " + std::to_string(id) + " out of range (vocab " +
                      std::to_string(config.vocab_size) + ")");
    }
  }
  Tensor h = gather_rows(p.token_embed, token_ids);
  for (int l = 0; l < config.encoder_layers; ++l) {
    h = scaled_dot_attention(h, h, h);
  }
  return h;
}

Tensor propagate_hierarchy(Graph& g, const ParamTensors& p, const ModelConfig& config,
                           const Taxonomy& taxonomy) {
  const int n = taxonomy.size();
  Tensor y = p.label_embed;
  for (int l = 0; l < config.gat_layers; ++l) {
    const ParamTensors::GatLayer& layer = p.gat[static_cast<std::size_t>(l)];
    Tensor wh = matmul(y, layer.weight);
    Tensor score_src = matmul(wh, layer.attn_src);  // n x 1
    Tensor score_dst = matmul(wh, layer.attn_dst);  // n x 1
    std::vector<Tensor> rows;
    rows.reserve(static_cast<std::size_t>(n));
    for (int u = 0; u < n; ++u) {
      std::vector<int> nb;
      nb.push_back(u);
      if (taxonomy.parent(u) != -1) nb.push_back(taxonomy.parent(u));
      for (int c : taxonomy.children(u)) nb.push_back(c);
      std::sort(nb.begin(), nb.end());
      Tensor ones = g.leaf(Matrix::Ones(static_cast<Eigen::Index>(nb.size()), 1));
      Tensor logits = leaky_relu(matmul(ones, gather_rows(score_src, {u})) +
                                     gather_rows(score_dst, nb),
                                 0.2);
      Tensor alpha = row_softmax(transpose(logits));  // 1 x |nb|
      rows.push_back(matmul(alpha, gather_rows(wh, nb)));
    }
    y = concat_rows(rows);
  }
  return y;
}

Tensor label_aware_embeddings(const ParamTensors& p, const Tensor& H, const Tensor& Yp) {
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(p.heads.size());
  for (const ParamTensors::Head& head : p.heads) {
    head_outputs.push_back(scaled_dot_attention(matmul(Yp, head.wq), matmul(H, head.wk),
                                                matmul(H, head.wv)));
  }
  return matmul(concat_cols(head_outputs), p.wo);
}

Tensor fuse_and_project(Graph& g, const ParamTensors& p, const Tensor& H, const Tensor& G,
                        const Tensor& Yp) {
  Tensor a = concat_cols({G, Yp});                       // n x 2d
  Tensor ones = g.leaf(Matrix::Ones(a.rows(), 1));       // n x 1
  Tensor proj = matmul(a, transpose(p.wa)) + matmul(ones, transpose(p.ba));  // n x d
  Tensor alpha = row_softmax(matmul(proj, transpose(H)));                    // n x m
  return matmul(alpha, H);
}

Tensor classify(const ParamTensors& p, const Tensor& G) {
  return matmul(p.ws, transpose(flatten_to_row(G))) + p.bs;
}

LabelVector predict(const Matrix& logits) {
  if (logits.cols() != 1) {
    throw ShapeError("predict: logits must be a column vector, got " +
                     std::to_string(logits.rows()) + "x" + std::to_string(logits.cols()));
  }
  if (!logits.allFinite()) throw NumericError("predict: non-finite logit");
  LabelVector bits(static_cast<std::size_t>(logits.rows()), 0);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    bits[static_cast<std::size_t>(i)] = logits(i, 0) > 0.0 ? 1 : 0;
  }
  return bits;
}

// ---- checkpoint -------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'H', 'J', 'C', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

class HashingWriter {
 public:
  explicit HashingWriter(std::ostream& out) : out_(out) {}

  void bytes(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
  }

  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 4);
  }

  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 8);
  }

  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }

  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  void matrix(const Matrix& m) {
    u32(static_cast<std::uint32_t>(m.rows()));
    u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) f64(m(i, j));
    }
  }

  std::uint64_t hash() const { return hash_; }

 private:
  std::ostream& out_;
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

class HashingReader {
 public:
  explicit HashingReader(std::istream& in) : in_(in) {}

  void bytes(void* data, std::size_t len) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(len));
    if (static_cast<std::size_t>(in_.gcount()) != len) {
      throw DataError("checkpoint: truncated file");
    }
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
  }

  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    unsigned char b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }

  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  std::string str() {
    const std::uint32_t len = u32();
    if (len > (1u << 20)) throw DataError("checkpoint: implausible string length");
    std::string s(len, '\0');
    if (len) bytes(s.data(), len);
    return s;
  }

  Matrix matrix() {
    const std::uint32_t rows = u32();
    const std::uint32_t cols = u32();
    if (static_cast<std::uint64_t>(rows) * cols > (1ull << 28)) {
      throw DataError("checkpoint: implausible tensor size");
    }
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = f64();
    }
    return m;
  }

  std::uint64_t hash() const { return hash_; }

 private:
  std::istream& in_;
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace

void save_checkpoint(std::ostream& out, const ModelConfig& config, ModelParams& params,
                     std::uint64_t taxonomy_hash, const Vocab& vocab) {
  HashingWriter w(out);
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(config.embed_dim));
  w.u32(static_cast<std::uint32_t>(config.attention_heads));
  w.u32(static_cast<std::uint32_t>(config.gat_layers));
  w.u32(static_cast<std::uint32_t>(config.vocab_size));
  w.u32(static_cast<std::uint32_t>(config.encoder_layers));
  w.u64(config.seed);
  w.u64(taxonomy_hash);
  w.u32(static_cast<std::uint32_t>(vocab.size()));
  for (int i = 0; i < vocab.size(); ++i) w.str(vocab.token(i));
  const auto named = params.named();
  w.u32(static_cast<std::uint32_t>(named.size()));
  for (const NamedParam& np : named) {
    w.str(np.name);
    w.matrix(*np.mat);
  }
  const std::uint64_t checksum = w.hash();
  // The checksum itself is written outside the hashed stream.
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(checksum >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

Checkpoint load_checkpoint(std::istream& in) {
  HashingReader r(in);
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("checkpoint: bad magic (not a checkpoint file)");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.config.embed_dim = static_cast<int>(r.u32());
  ck.config.attention_heads = static_cast<int>(r.u32());
  ck.config.gat_layers = static_cast<int>(r.u32());
  ck.config.vocab_size = static_cast<int>(r.u32());
  ck.config.encoder_layers = static_cast<int>(r.u32());
  ck.config.seed = r.u64();
  ck.taxonomy_hash = r.u64();
  const std::uint32_t vocab_count = r.u32();
  for (std::uint32_t i = 0; i < vocab_count; ++i) {
    const std::string token = r.str();
    if (i == 0) {
      if (token != Vocab::kUnkToken) throw DataError("checkpoint: vocab does not start with UNK");
    } else {
      ck.vocab.add(token);
    }
  }
  ck.config.validate();

  const std::uint32_t param_count = r.u32();
  std::vector<std::pair<std::string, Matrix>> tensors;
  tensors.reserve(param_count);
  for (std::uint32_t i = 0; i < param_count; ++i) {
    std::string name = r.str();
    Matrix m = r.matrix();
    tensors.emplace_back(std::move(name), std::move(m));
  }
  const std::uint64_t computed = r.hash();
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (in.gcount() != 8) throw DataError("checkpoint: truncated file");
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  if (stored != computed) throw DataError("checkpoint: checksum mismatch (corrupted file)");

  // Label count from the classifier bias.
  int label_count = 0;
  for (const auto& [name, m] : tensors) {
    if (name == "bs") label_count = static_cast<int>(m.rows());
  }
  if (label_count < 1) throw DataError("checkpoint: missing classifier parameters");
  ck.params = ModelParams::init(ck.config, label_count);
  auto named = ck.params.named();
  if (named.size() != tensors.size()) {
    throw DataError("checkpoint: parameter count mismatch");
  }
  for (const auto& [name, m] : tensors) {
    bool found = false;
    for (NamedParam& np : named) {
      if (np.name == name) {
        if (np.mat->rows() != m.rows() || np.mat->cols() != m.cols()) {
          throw DataError("checkpoint: tensor '" + name + "' has unexpected shape");
        }
        *np.mat = m;
        found = true;
        break;
      }
    }
    if (!found) throw DataError("checkpoint: unknown tensor '" + name + "'");
  }
  return ck;
}

}  // namespace hjcl
