#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace procsim {

/// Hypernym graph ingested from files: directed child -> hypernym edges
/// (insertion order preserved) and, per class name, its candidate concepts.
struct LexicalGraph {
  std::unordered_map<std::string, std::vector<std::string>> hypernyms;
  std::map<std::string, std::vector<std::string>> senses;
  std::set<std::string> nodes;

  void add_edge(const std::string& child, const std::string& hypernym);
  bool contains(const std::string& node) const { return nodes.count(node) != 0; }
};

/// Edges file: one "child<TAB>hypernym" per line.
LexicalGraph read_lexical_graph(const std::filesystem::path& edges_tsv,
                                const std::filesystem::path& senses_json);
/// {"class name": "forced hypernym"}
std::map<std::string, std::string> read_overrides(const std::filesystem::path& path);

/// Rooted class tree. Node 0 is the root; leaves carry class ids.
class Taxonomy {
 public:
  struct Node {
    std::string name;
    std::optional<std::int64_t> class_id;
    std::optional<std::size_t> parent;
    std::vector<std::size_t> children;
  };

  explicit Taxonomy(std::string root_name);

  std::size_t add_child(std::size_t parent, std::string name,
                        std::optional<std::int64_t> class_id = std::nullopt);

  const Node& node(std::size_t index) const { return nodes_.at(index); }
  const Node& root() const { return nodes_.front(); }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t leaf_of(std::int64_t class_id) const;
  bool has_class(std::int64_t class_id) const { return leaves_.count(class_id) != 0; }
  // Class ids of all leaves, ascending.
  std::vector<std::int64_t> classes() const;
  // Class ids of leaves under `index`, ascending.
  std::vector<std::int64_t> leaf_classes_under(std::size_t index) const;

  // Checks the tree invariants (single root, acyclic, leaves reach root).
  void validate() const;

 private:
  std::vector<Node> nodes_;
  std::map<std::int64_t, std::size_t> leaves_;
};

/// Class ids are positions in `class_names`. For each class the senses are
/// tried in order and hypernym edges in insertion order; the first DFS path
/// reaching `required_root` is kept. Overrides replace a class's senses with a
/// single forced hypernym. Throws UnresolvedClassError naming every class
/// without a path.
Taxonomy build_hierarchy(const std::vector<std::string>& class_names, const LexicalGraph& graph,
                         const std::string& required_root,
                         const std::map<std::string, std::string>& overrides = {});

/// Restricts leaves to `keep` and drops internal nodes left without leaves.
Taxonomy prune_to_classes(const Taxonomy& tax, const std::set<std::int64_t>& keep);

/// All leaf classes under the first ancestor of `class_id` with two or more
/// children, excluding `class_id` itself. Empty when no such ancestor exists.
std::vector<std::int64_t> semantic_candidates(const Taxonomy& tax, std::int64_t class_id);

/// Nested JSON {"name": ..., "class_id": optional, "children": [...]}.
std::string taxonomy_to_json(const Taxonomy& tax, int indent = 2);
Taxonomy taxonomy_from_json(const std::string& text);
Taxonomy read_taxonomy(const std::filesystem::path& path);
void write_taxonomy(const Taxonomy& tax, const std::filesystem::path& path);

/// Same shape, names and class ids with children compared in order.
bool structurally_equal(const Taxonomy& a, const Taxonomy& b);
/// As above but insensitive to sibling order.
bool equivalent_unordered(const Taxonomy& a, const Taxonomy& b);

}  // namespace procsim
