#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "hjcl/data.hpp"
#include "hjcl/rng.hpp"

using namespace hjcl;

namespace {

Taxonomy fig1() {
  std::ifstream in(std::string(HJCL_FIXTURE_DIR) + "/fig1_taxonomy.tsv");
  REQUIRE(in.good());
  return Taxonomy::load(in);
}

Taxonomy chain2() {
  std::istringstream in("A\tROOT\nB\tA\n");
  return Taxonomy::load(in);
}

struct SynthFiles {
  std::string taxonomy, train, val, test;
};

SynthFiles run_synth(const SynthSpec& spec) {
  std::ostringstream tax, train, val, test;
  generate_synthetic(spec, tax, train, val, test);
  return {tax.str(), train.str(), val.str(), test.str()};
}

int line_count(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("tokenize lowercases and splits on whitespace") {
  const auto tokens = tokenize("  The  Quick\tbrown\nFOX ");
  REQUIRE(tokens.size() == 4);
  CHECK(tokens[0] == "the");
  CHECK(tokens[1] == "quick");
  CHECK(tokens[3] == "fox");
  CHECK(tokenize("").empty());
}

TEST_CASE("load applies ancestor closure with a count") {
  const Taxonomy t = chain2();
  Vocab vocab;
  LoadStats stats;
  std::istringstream in(R"({"id":"1","text":"a b","labels":["B"]})"
                        "\n");
  const auto docs = load_corpus(in, t, vocab, VocabMode::build, nullptr, &stats);
  REQUIRE(docs.size() == 1);
  CHECK(docs[0].gold == LabelVector({1, 1}));
  CHECK(stats.closed_at_load == 1);
  CHECK(docs[0].token_ids.size() == 2);
  CHECK(vocab.size() == 3);  // <unk>, a, b
}

TEST_CASE("frozen vocab maps unseen tokens to UNK") {
  const Taxonomy t = chain2();
  Vocab vocab;
  vocab.add("known");
  std::istringstream in(R"({"id":"1","text":"known mystery","labels":["A"]})"
                        "\n");
  const auto docs = load_corpus(in, t, vocab, VocabMode::frozen);
  CHECK(docs[0].token_ids == std::vector<int>({1, Vocab::kUnk}));
  CHECK(vocab.size() == 2);
}

TEST_CASE("load errors carry line numbers") {
  const Taxonomy t = chain2();
  Vocab vocab;
  std::istringstream bad_json("{\"id\":\"1\",\"text\":\"x\",\"labels\":[\"A\"]}\nnot json\n");
  CHECK_THROWS_WITH_AS(
      [&] {
        auto v = vocab;
        std::istringstream in(bad_json.str());
        load_corpus(in, t, v, VocabMode::build);
      }(),
      doctest::Contains("line 2"), DataError);

  std::istringstream unknown(R"({"id":"1","text":"x","labels":["Z"]})"
                             "\n");
  CHECK_THROWS_WITH_AS(load_corpus(unknown, t, vocab, VocabMode::build),
                       doctest::Contains("unknown label 'Z'"), DataError);

  std::istringstream empty_text(R"({"id":"1","text":"   ","labels":["A"]})"
                                "\n");
  CHECK_THROWS_AS(load_corpus(empty_text, t, vocab, VocabMode::build), DataError);
}

TEST_CASE("stoplist removal happens before the empty-text check") {
  const Taxonomy t = chain2();
  Vocab vocab;
  std::unordered_set<std::string> stop = {"the"};
  std::istringstream in(R"({"id":"1","text":"the signal","labels":["A"]})"
                        "\n");
  const auto docs = load_corpus(in, t, vocab, VocabMode::build, &stop);
  CHECK(docs[0].token_ids.size() == 1);

  std::istringstream all_stop(R"({"id":"1","text":"the the","labels":["A"]})"
                              "\n");
  Vocab v2;
  CHECK_THROWS_AS(load_corpus(all_stop, t, v2, VocabMode::build, &stop), DataError);
}

TEST_CASE("corpus round-trips through save and load") {
  const Taxonomy t = fig1();
  Vocab vocab;
  std::istringstream in(
      R"({"id":"1","text":"alpha beta gamma","labels":["France","Sports"]})"
      "\n"
      R"({"id":"2","text":"beta beta","labels":["Op-Ed"]})"
      "\n");
  const auto docs = load_corpus(in, t, vocab, VocabMode::build);
  std::ostringstream out;
  save_corpus(out, docs, t, vocab);
  std::istringstream back_in(out.str());
  Vocab vocab2 = vocab;
  const auto back = load_corpus(back_in, t, vocab2, VocabMode::frozen);
  REQUIRE(back.size() == docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    CHECK(back[i].id == docs[i].id);
    CHECK(back[i].token_ids == docs[i].token_ids);
    CHECK(back[i].gold == docs[i].gold);
  }
  CHECK(vocab2 == vocab);
}

TEST_CASE("bundled case-study document closes to four paths") {
  const Taxonomy t = fig1();
  Vocab vocab;
  std::ifstream in(std::string(HJCL_FIXTURE_DIR) + "/fig1_case.jsonl");
  REQUIRE(in.good());
  const auto docs = load_corpus(in, t, vocab, VocabMode::build);
  REQUIRE(docs.size() == 1);
  CHECK(t.path_count(docs[0].gold) == 4);
}

TEST_CASE("descriptions file and label-embedding initialization") {
  const Taxonomy t = chain2();
  std::istringstream din("A\tanchor tokens here\n#comment\nB\tsingle\n");
  const auto descriptions = load_descriptions(din);
  CHECK(descriptions.at("A") == "anchor tokens here");

  Vocab vocab;
  const int a1 = vocab.add("anchor");
  const int a2 = vocab.add("tokens");
  const int a3 = vocab.add("here");
  const int b1 = vocab.add("single");
  Rng rng(5);
  Matrix table(vocab.size(), 3);
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) table(i, j) = rng.uniform(-1, 1);
  }
  const Matrix init = init_label_embeddings(vocab, table, t, descriptions);
  const Matrix mean_a = (table.row(a1) + table.row(a2) + table.row(a3)) / 3.0;
  CHECK((init.row(0) - mean_a).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((init.row(1) - table.row(b1)).cwiseAbs().maxCoeff() < 1e-15);

  // Default description is the label name; unseen -> UNK row.
  const Matrix bare = init_label_embeddings(vocab, table, t, {});
  CHECK((bare.row(0) - table.row(Vocab::kUnk)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("synthetic generator is deterministic byte for byte") {
  SynthSpec spec;
  spec.total_docs = 60;
  const SynthFiles a = run_synth(spec);
  const SynthFiles b = run_synth(spec);
  CHECK(a.taxonomy == b.taxonomy);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);

  SynthSpec other = spec;
  other.seed = 43;
  const SynthFiles c = run_synth(other);
  CHECK(a.train != c.train);
}

TEST_CASE("synthetic corpus structure") {
  SynthSpec spec;
  spec.depth = 3;
  spec.branching = 3;
  spec.total_docs = 100;
  const SynthFiles files = run_synth(spec);
  std::istringstream tin(files.taxonomy);
  const Taxonomy t = Taxonomy::load(tin);
  CHECK(t.size() == 3 + 9 + 27);
  CHECK(t.max_depth() == 3);
  CHECK(line_count(files.train) == 70);
  CHECK(line_count(files.val) == 15);
  CHECK(line_count(files.test) == 15);

  Vocab vocab;
  std::istringstream train_in(files.train);
  const auto docs = load_corpus(train_in, t, vocab, VocabMode::build);
  for (const auto& doc : docs) {
    CHECK(t.ancestor_closed(doc.gold));
    CHECK(static_cast<int>(doc.token_ids.size()) == spec.doc_length);
    const int paths = t.path_count(doc.gold);
    CHECK(paths >= spec.min_paths);
    CHECK(paths <= spec.max_paths);
  }
}

TEST_CASE("fixed paths_per_doc pins the gold path count") {
  SynthSpec spec;
  spec.depth = 2;
  spec.branching = 3;
  spec.min_paths = 2;
  spec.max_paths = 2;
  spec.total_docs = 40;
  const SynthFiles files = run_synth(spec);
  std::istringstream tin(files.taxonomy);
  const Taxonomy t = Taxonomy::load(tin);
  Vocab vocab;
  std::istringstream train_in(files.train);
  for (const auto& doc : load_corpus(train_in, t, vocab, VocabMode::build)) {
    CHECK(t.path_count(doc.gold) == 2);
  }
}

TEST_CASE("depth-1 noiseless tokens identify the labels exactly") {
  SynthSpec spec;
  spec.depth = 1;
  spec.branching = 3;
  spec.noise_ratio = 0.0;
  spec.total_docs = 40;
  spec.min_paths = 1;
  spec.max_paths = 2;
  const SynthFiles files = run_synth(spec);
  std::istringstream tin(files.taxonomy);
  const Taxonomy t = Taxonomy::load(tin);
  Vocab vocab;
  std::istringstream train_in(files.train);
  for (const auto& doc : load_corpus(train_in, t, vocab, VocabMode::build)) {
    // Reconstruct labels from token prefixes: tokens are label names or
    // label-name variants `X_tK`.
    LabelVector derived(static_cast<std::size_t>(t.size()), 0);
    for (int id : doc.token_ids) {
      std::string tok = vocab.token(id);
      const auto pos = tok.find("_t");
      if (pos != std::string::npos) tok = tok.substr(0, pos);
      derived[static_cast<std::size_t>(t.index_of(tok))] = 1;
    }
    for (std::size_t j = 0; j < derived.size(); ++j) {
      CHECK(derived[j] <= doc.gold[j]);  // every token names an active label
    }
  }
}

TEST_CASE("path histogram of the default spec matches a regeneration tally") {
  SynthSpec spec;
  spec.total_docs = 300;
  const SynthFiles files = run_synth(spec);
  std::istringstream tin(files.taxonomy);
  const Taxonomy t = Taxonomy::load(tin);
  Vocab vocab;
  std::map<int, int> histogram;
  for (const std::string* part : {&files.train, &files.val, &files.test}) {
    std::istringstream in(*part);
    for (const auto& doc : load_corpus(in, t, vocab, VocabMode::build)) {
      ++histogram[t.path_count(doc.gold)];
    }
  }
  int total = 0;
  for (const auto& [paths, count] : histogram) {
    CHECK(paths >= 1);
    CHECK(paths <= 3);
    total += count;
  }
  CHECK(total == 300);
  // With paths drawn uniformly from {1,2,3}, each bucket lands near 100.
  for (int p = 1; p <= 3; ++p) {
    CHECK(histogram[p] > 60);
    CHECK(histogram[p] < 140);
  }
}

TEST_CASE("invalid spec reports all problems at once") {
  SynthSpec spec;
  spec.depth = 0;
  spec.noise_ratio = 1.5;
  try {
    spec.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("depth") != std::string::npos);
    CHECK(msg.find("noise_ratio") != std::string::npos);
  }
}
