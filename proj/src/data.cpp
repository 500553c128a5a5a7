#include "hjcl/data.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "hjcl/rng.hpp"

namespace hjcl {

using nlohmann::json;

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<Document> load_corpus(std::istream& in, const Taxonomy& taxonomy, Vocab& vocab,
                                  VocabMode mode, const std::unordered_set<std::string>* stoplist,
                                  LoadStats* stats) {
  std::vector<Document> docs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("corpus line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    if (!obj.is_object() || !obj.contains("id") || !obj.contains("text") ||
        !obj.contains("labels")) {
      throw DataError("corpus line " + std::to_string(line_no) +
                      ": expected object with id/text/labels");
    }
    Document doc;
    doc.id = obj.at("id").get<std::string>();
    std::vector<std::string> tokens = tokenize(obj.at("text").get<std::string>());
    if (stoplist) {
      std::erase_if(tokens, [&](const std::string& t) { return stoplist->count(t) > 0; });
    }
    if (tokens.empty()) {
      throw DataError("corpus line " + std::to_string(line_no) + ": document '" + doc.id +
                      "' has empty text");
    }
    doc.token_ids.reserve(tokens.size());
    for (const std::string& t : tokens) {
      doc.token_ids.push_back(mode == VocabMode::build ? vocab.add(t) : vocab.lookup(t));
    }
    LabelVector raw(static_cast<std::size_t>(taxonomy.size()), 0);
    for (const auto& name : obj.at("labels")) {
      const int id = taxonomy.find(name.get<std::string>());
      if (id == -1) {
        throw DataError("corpus line " + std::to_string(line_no) + ": unknown label '" +
                        name.get<std::string>() + "'");
      }
      raw[static_cast<std::size_t>(id)] = 1;
    }
    doc.gold = taxonomy.close_ancestors(raw);
    if (stats) {
      ++stats->docs;
      if (doc.gold != raw) ++stats->closed_at_load;
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

void save_corpus(std::ostream& out, const std::vector<Document>& docs, const Taxonomy& taxonomy,
                 const Vocab& vocab) {
  for (const Document& doc : docs) {
    json obj;
    obj["id"] = doc.id;
    std::string text;
    for (std::size_t i = 0; i < doc.token_ids.size(); ++i) {
      if (i) text += ' ';
      text += vocab.token(doc.token_ids[i]);
    }
    obj["text"] = text;
    std::vector<std::string> labels;
    for (int i = 0; i < taxonomy.size(); ++i) {
      if (doc.gold[static_cast<std::size_t>(i)]) labels.push_back(taxonomy.label(i));
    }
    obj["labels"] = labels;
    out << obj.dump() << '\n';
  }
}

std::map<std::string, std::string> load_descriptions(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError("descriptions line " + std::to_string(line_no) +
                      ": expected label<TAB>description");
    }
    out[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return out;
}

std::unordered_set<std::string> load_stoplist(std::istream& in) {
  std::unordered_set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.insert(line);
  }
  return out;
}

Matrix init_label_embeddings(const Vocab& vocab, const Matrix& token_embed,
                             const Taxonomy& taxonomy,
                             const std::map<std::string, std::string>& descriptions) {
  Matrix out(taxonomy.size(), token_embed.cols());
  for (int i = 0; i < taxonomy.size(); ++i) {
    const auto it = descriptions.find(taxonomy.label(i));
    const std::string& text = it == descriptions.end() ? taxonomy.label(i) : it->second;
    const std::vector<std::string> tokens = tokenize(text);
    if (tokens.empty()) {
      throw DataError("label '" + taxonomy.label(i) + "' has an empty description");
    }
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(token_embed.cols());
    for (const std::string& t : tokens) mean += token_embed.row(vocab.lookup(t));
    out.row(i) = mean / static_cast<double>(tokens.size());
  }
  return out;
}

void SynthSpec::validate() const {
  std::string errors;
  auto fail = [&errors](const std::string& msg) {
    if (!errors.empty()) errors += "; ";
    errors += msg;
  };
  if (depth < 1) fail("depth must be >= 1");
  if (branching < 1) fail("branching must be >= 1");
  if (tokens_per_label < 1) fail("tokens_per_label must be >= 1");
  if (doc_length < 1) fail("doc_length must be >= 1");
  if (min_paths < 1 || max_paths < min_paths) fail("need 1 <= min_paths <= max_paths");
  if (noise_ratio < 0.0 || noise_ratio >= 1.0) fail("noise_ratio must be in [0, 1)");
  if (noise_vocab < 1) fail("noise_vocab must be >= 1");
  if (total_docs < 1) fail("total_docs must be >= 1");
  if (!errors.empty()) throw ConfigError("synthetic spec: " + errors);
}

void generate_synthetic(const SynthSpec& spec, std::ostream& taxonomy_out, std::ostream& train_out,
                        std::ostream& val_out, std::ostream& test_out) {
  spec.validate();

  // Complete tree, breadth-first. Level-1 labels are a0..a{b-1}; a child k
  // of X is X_k. Token t >= 1 of label X is X_t{t}; token 0 is X itself, so
  // the default description (the label name) points at a token that occurs
  // in that label's documents.
  std::vector<std::pair<std::string, std::string>> edges;
  std::vector<std::string> level_names;
  for (int b = 0; b < spec.branching; ++b) {
    level_names.push_back("a" + std::to_string(b));
    edges.emplace_back(level_names.back(), "ROOT");
  }
  for (int d = 2; d <= spec.depth; ++d) {
    std::vector<std::string> next;
    for (const std::string& parent : level_names) {
      for (int b = 0; b < spec.branching; ++b) {
        next.push_back(parent + "_" + std::to_string(b));
        edges.emplace_back(next.back(), parent);
      }
    }
    level_names = std::move(next);
  }
  const Taxonomy taxonomy = Taxonomy::from_edges(edges);
  taxonomy.save(taxonomy_out);

  std::vector<int> leaves;
  for (int i = 0; i < taxonomy.size(); ++i) {
    if (taxonomy.depth(i) == spec.depth) leaves.push_back(i);
  }

  auto label_token = [&](int label, int t) {
    return t == 0 ? taxonomy.label(label) : taxonomy.label(label) + "_t" + std::to_string(t);
  };

  Rng rng(spec.seed);
  std::vector<std::string> docs_json;
  docs_json.reserve(static_cast<std::size_t>(spec.total_docs));
  for (int di = 0; di < spec.total_docs; ++di) {
    const int want = std::min(rng.uniform_int(spec.min_paths, spec.max_paths),
                              static_cast<int>(leaves.size()));
    std::vector<int> pool = leaves;
    std::vector<int> chosen;
    for (int k = 0; k < want; ++k) {
      const std::size_t j = static_cast<std::size_t>(k) +
                            static_cast<std::size_t>(rng.below(pool.size() - static_cast<std::size_t>(k)));
      std::swap(pool[static_cast<std::size_t>(k)], pool[j]);
      chosen.push_back(pool[static_cast<std::size_t>(k)]);
    }
    LabelVector gold(static_cast<std::size_t>(taxonomy.size()), 0);
    for (int leaf : chosen) gold[static_cast<std::size_t>(leaf)] = 1;
    gold = taxonomy.close_ancestors(gold);
    std::vector<int> active;
    for (int i = 0; i < taxonomy.size(); ++i) {
      if (gold[static_cast<std::size_t>(i)]) active.push_back(i);
    }

    std::string text;
    for (int t = 0; t < spec.doc_length; ++t) {
      if (t) text += ' ';
      if (rng.uniform() < spec.noise_ratio) {
        text += "noise_t" + std::to_string(rng.below(static_cast<std::uint64_t>(spec.noise_vocab)));
      } else {
        const int label = active[rng.below(active.size())];
        text += label_token(label, static_cast<int>(rng.below(
                                       static_cast<std::uint64_t>(spec.tokens_per_label))));
      }
    }

    json obj;
    obj["id"] = [di] {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "d%06d", di);
      return std::string(buf);
    }();
    obj["text"] = text;
    std::vector<std::string> labels;
    for (int i : active) labels.push_back(taxonomy.label(i));
    obj["labels"] = labels;
    docs_json.push_back(obj.dump());
  }

  std::vector<int> order(static_cast<std::size_t>(spec.total_docs));
  for (int i = 0; i < spec.total_docs; ++i) order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(order);
  const int n_train = static_cast<int>(0.7 * spec.total_docs);
  const int n_val = static_cast<int>(0.15 * spec.total_docs);
  for (int i = 0; i < spec.total_docs; ++i) {
    std::ostream& out = i < n_train ? train_out : (i < n_train + n_val ? val_out : test_out);
    out << docs_json[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] << '\n';
  }
}

}  // namespace hjcl
