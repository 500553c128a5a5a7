#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hjcl/taxonomy.hpp"

namespace hjcl {

using Matrix = Eigen::MatrixXd;

struct Document {
  std::string id;
  std::vector<int> token_ids;  // nonempty
  LabelVector gold;            // ancestor-closed
};

// Token table with id 0 reserved for unknowns.
class Vocab {
 public:
  static constexpr int kUnk = 0;
  static constexpr const char* kUnkToken = "<unk>";

  Vocab() { add(kUnkToken); }

  int add(const std::string& token) {
    const auto [it, inserted] = token_to_id_.emplace(token, size());
    if (inserted) id_to_token_.push_back(token);
    return it->second;
  }

  int lookup(const std::string& token) const {
    const auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
  }

  int size() const { return static_cast<int>(id_to_token_.size()); }
  const std::string& token(int id) const { return id_to_token_[static_cast<std::size_t>(id)]; }

  bool operator==(const Vocab& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

enum class VocabMode { build, frozen };

// Lowercase whitespace tokenization.
std::vector<std::string> tokenize(const std::string& text);

struct LoadStats {
  int docs = 0;
  int closed_at_load = 0;  // docs whose gold set required ancestor closure
};

// One JSON object per line: {"id": str, "text": str, "labels": [str, ...]}.
// Gold label sets are ancestor-closed at load; closures are counted in
// stats as they indicate non-closed input.
std::vector<Document> load_corpus(std::istream& in, const Taxonomy& taxonomy, Vocab& vocab,
                                  VocabMode mode,
                                  const std::unordered_set<std::string>* stoplist = nullptr,
                                  LoadStats* stats = nullptr);

void save_corpus(std::ostream& out, const std::vector<Document>& docs, const Taxonomy& taxonomy,
                 const Vocab& vocab);

// `label<TAB>description` per line.
std::map<std::string, std::string> load_descriptions(std::istream& in);

// One token per line.
std::unordered_set<std::string> load_stoplist(std::istream& in);

// Initial label embedding table: row i is the mean of the token-embedding
// rows of label i's description (the label name when no description is
// given). Unknown description tokens contribute the UNK row.
Matrix init_label_embeddings(const Vocab& vocab, const Matrix& token_embed,
                             const Taxonomy& taxonomy,
                             const std::map<std::string, std::string>& descriptions);

// Synthetic corpus: a complete tree of the given depth/branching, one
// disjoint token vocabulary per label (the label name itself plus
// tokens_per_label - 1 variants), documents drawn from 1..k leaf paths with
// a shared noise vocabulary mixed in. Same spec => byte-identical output.
struct SynthSpec {
  int depth = 3;
  int branching = 3;
  int tokens_per_label = 1;
  int doc_length = 32;
  int min_paths = 1;
  int max_paths = 3;
  double noise_ratio = 0.1;
  int noise_vocab = 30;
  int total_docs = 2858;  // split 70/15/15 -> 2000/428/430
  std::uint64_t seed = 42;

  void validate() const;
};

void generate_synthetic(const SynthSpec& spec, std::ostream& taxonomy_out, std::ostream& train_out,
                        std::ostream& val_out, std::ostream& test_out);

}  // namespace hjcl
