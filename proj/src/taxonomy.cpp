#include "hjcl/taxonomy.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

namespace hjcl {

namespace {
constexpr const char* kRootToken = "ROOT";
}

Taxonomy Taxonomy::load(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> edges;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
      throw DataError("taxonomy line " + std::to_string(line_no) +
                      ": expected child<TAB>parent, got '" + line + "'");
    }
    edges.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return from_edges(edges);
}

Taxonomy Taxonomy::from_edges(
    const std::vector<std::pair<std::string, std::string>>& child_parent) {
  if (child_parent.empty()) throw DataError("taxonomy: empty input");

  Taxonomy t;
  for (const auto& [child, parent] : child_parent) {
    if (child == kRootToken) throw DataError("taxonomy: ROOT cannot be a child");
    if (!t.index_.emplace(child, t.size()).second) {
      throw DataError("taxonomy: duplicate child '" + child + "'");
    }
    t.labels_.push_back(child);
  }
  t.parent_.resize(t.labels_.size());
  for (std::size_t i = 0; i < child_parent.size(); ++i) {
    const std::string& parent = child_parent[i].second;
    if (parent == kRootToken) {
      t.parent_[i] = -1;
    } else {
      const auto it = t.index_.find(parent);
      if (it == t.index_.end()) {
        throw DataError("taxonomy: orphan '" + child_parent[i].first + "': parent '" + parent +
                        "' never defined");
      }
      t.parent_[i] = it->second;
    }
  }

  // Depths by memoized parent walk; a chain longer than n labels is a cycle.
  t.depth_.assign(t.labels_.size(), 0);
  for (int i = 0; i < t.size(); ++i) {
    int steps = 0;
    int at = i;
    std::vector<int> chain;
    while (at != -1 && t.depth_[static_cast<std::size_t>(at)] == 0) {
      chain.push_back(at);
      at = t.parent_[static_cast<std::size_t>(at)];
      if (++steps > t.size()) {
        throw DataError("taxonomy: cycle through '" + t.labels_[static_cast<std::size_t>(i)] +
                        "'");
      }
    }
    int base = (at == -1) ? 0 : t.depth_[static_cast<std::size_t>(at)];
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      t.depth_[static_cast<std::size_t>(*it)] = ++base;
    }
  }
  t.max_depth_ = *std::max_element(t.depth_.begin(), t.depth_.end());

  t.children_.resize(t.labels_.size());
  for (int i = 0; i < t.size(); ++i) {
    if (t.parent_[static_cast<std::size_t>(i)] == -1) {
      t.level1_.push_back(i);
    } else {
      t.children_[static_cast<std::size_t>(t.parent_[static_cast<std::size_t>(i)])].push_back(i);
    }
  }
  return t;
}

void Taxonomy::save(std::ostream& out) const {
  for (int i = 0; i < size(); ++i) {
    const int p = parent_[static_cast<std::size_t>(i)];
    out << labels_[static_cast<std::size_t>(i)] << '\t'
        << (p == -1 ? std::string(kRootToken) : labels_[static_cast<std::size_t>(p)]) << '\n';
  }
}

int Taxonomy::index_of(const std::string& name) const {
  const int id = find(name);
  if (id == -1) throw DataError("taxonomy: unknown label '" + name + "'");
  return id;
}

int Taxonomy::find(const std::string& name) const {
  const auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

std::vector<int> Taxonomy::ancestors(int id) const {
  if (id < 0 || id >= size()) throw DataError("taxonomy: label id out of range");
  std::vector<int> chain;
  for (int at = parent_[static_cast<std::size_t>(id)]; at != -1;
       at = parent_[static_cast<std::size_t>(at)]) {
    chain.push_back(at);
  }
  std::reverse(chain.begin(), chain.end());
  return chain;
}

void Taxonomy::check_vector(const LabelVector& y) const {
  if (static_cast<int>(y.size()) != size()) {
    throw DataError("label vector length " + std::to_string(y.size()) +
                    " does not match taxonomy size " + std::to_string(size()));
  }
}

bool Taxonomy::ancestor_closed(const LabelVector& y) const {
  check_vector(y);
  for (int i = 0; i < size(); ++i) {
    const int p = parent_[static_cast<std::size_t>(i)];
    if (y[static_cast<std::size_t>(i)] && p != -1 && !y[static_cast<std::size_t>(p)]) return false;
  }
  return true;
}

LabelVector Taxonomy::close_ancestors(LabelVector y) const {
  check_vector(y);
  for (int i = 0; i < size(); ++i) {
    if (!y[static_cast<std::size_t>(i)]) continue;
    for (int at = parent_[static_cast<std::size_t>(i)]; at != -1;
         at = parent_[static_cast<std::size_t>(at)]) {
      y[static_cast<std::size_t>(at)] = 1;
    }
  }
  return y;
}

std::vector<std::vector<int>> Taxonomy::decompose_paths(const LabelVector& y) const {
  if (!ancestor_closed(y)) throw DataError("decompose_paths: label set is not ancestor-closed");
  std::vector<std::vector<int>> paths;
  for (int i = 0; i < size(); ++i) {
    if (!y[static_cast<std::size_t>(i)]) continue;
    bool has_active_child = false;
    for (int c : children_[static_cast<std::size_t>(i)]) {
      if (y[static_cast<std::size_t>(c)]) {
        has_active_child = true;
        break;
      }
    }
    if (has_active_child) continue;
    std::vector<int> path = ancestors(i);
    path.push_back(i);
    paths.push_back(std::move(path));
  }
  return paths;
}

int Taxonomy::path_count(const LabelVector& y) const {
  if (!ancestor_closed(y)) throw DataError("path_count: label set is not ancestor-closed");
  return induced_leaf_count(y);
}

int Taxonomy::induced_leaf_count(const LabelVector& y) const {
  check_vector(y);
  int count = 0;
  for (int i = 0; i < size(); ++i) {
    if (!y[static_cast<std::size_t>(i)]) continue;
    bool has_active_child = false;
    for (int c : children_[static_cast<std::size_t>(i)]) {
      if (y[static_cast<std::size_t>(c)]) {
        has_active_child = true;
        break;
      }
    }
    if (!has_active_child) ++count;
  }
  return count;
}

std::uint64_t Taxonomy::hash() const {
  std::ostringstream os;
  save(os);
  const std::string s = os.str();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool Taxonomy::operator==(const Taxonomy& other) const {
  return labels_ == other.labels_ && parent_ == other.parent_ && depth_ == other.depth_;
}

}  // namespace hjcl
