#include "procsim/taxonomy.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "procsim/errors.hpp"

namespace procsim {

using nlohmann::json;

namespace {
std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += ", ";
    out += s;
  }
  return out;
}
}  // namespace

UnresolvedClassError::UnresolvedClassError(std::vector<std::string> classes)
    : std::runtime_error("no path to the required root for: " + join(classes)),
      classes_(std::move(classes)) {}

void LexicalGraph::add_edge(const std::string& child, const std::string& hypernym) {
  nodes.insert(child);
  nodes.insert(hypernym);
  hypernyms[child].push_back(hypernym);
}

LexicalGraph read_lexical_graph(const std::filesystem::path& edges_tsv,
                                const std::filesystem::path& senses_json) {
  LexicalGraph graph;
  std::ifstream edges(edges_tsv);
  if (!edges) throw IoError("cannot open '" + edges_tsv.string() + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(edges, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw IoError(edges_tsv.string() + ":" + std::to_string(lineno) + ": expected child<TAB>hypernym");
    }
    graph.add_edge(line.substr(0, tab), line.substr(tab + 1));
  }

  std::ifstream senses(senses_json);
  if (!senses) throw IoError("cannot open '" + senses_json.string() + "'");
  try {
    const json j = json::parse(senses);
    for (const auto& [name, list] : j.items()) {
      auto concepts = list.get<std::vector<std::string>>();
      for (const auto& c : concepts) graph.nodes.insert(c);
      graph.senses[name] = std::move(concepts);
    }
  } catch (const json::exception& e) {
    throw IoError(senses_json.string() + ": " + e.what());
  }
  return graph;
}

std::map<std::string, std::string> read_overrides(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in).get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

Taxonomy::Taxonomy(std::string root_name) { nodes_.push_back({std::move(root_name), {}, {}, {}}); }

std::size_t Taxonomy::add_child(std::size_t parent, std::string name,
                                std::optional<std::int64_t> class_id) {
  if (parent >= nodes_.size()) throw DomainError("Taxonomy::add_child: bad parent");
  if (nodes_[parent].class_id) throw DomainError("Taxonomy::add_child: leaves cannot have children");
  if (class_id && leaves_.count(*class_id)) {
    throw DomainError("Taxonomy::add_child: class id " + std::to_string(*class_id) + " already present");
  }
  const std::size_t index = nodes_.size();
  nodes_.push_back({std::move(name), class_id, parent, {}});
  nodes_[parent].children.push_back(index);
  if (class_id) leaves_[*class_id] = index;
  return index;
}

std::size_t Taxonomy::leaf_of(std::int64_t class_id) const {
  const auto it = leaves_.find(class_id);
  if (it == leaves_.end()) throw DomainError("class id " + std::to_string(class_id) + " is not a leaf");
  return it->second;
}

std::vector<std::int64_t> Taxonomy::classes() const {
  std::vector<std::int64_t> out;
  for (const auto& [id, _] : leaves_) out.push_back(id);
  return out;
}

std::vector<std::int64_t> Taxonomy::leaf_classes_under(std::size_t index) const {
  std::vector<std::int64_t> out;
  std::vector<std::size_t> stack{index};
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    const Node& n = nodes_.at(i);
    if (n.class_id) out.push_back(*n.class_id);
    for (auto c : n.children) stack.push_back(c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void Taxonomy::validate() const {
  if (nodes_.front().parent) throw DomainError("Taxonomy: root has a parent");
  std::vector<int> seen(nodes_.size(), 0);
  std::vector<std::size_t> stack{0};
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    if (seen[i]++) throw DomainError("Taxonomy: node reachable twice");
    for (auto c : nodes_[i].children) {
      if (nodes_.at(c).parent != i) throw DomainError("Taxonomy: inconsistent parent link");
      stack.push_back(c);
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw DomainError("Taxonomy: node unreachable from root");
  }
  for (const auto& [id, leaf] : leaves_) {
    if (!nodes_[leaf].children.empty()) throw DomainError("Taxonomy: class leaf has children");
  }
}

Taxonomy build_hierarchy(const std::vector<std::string>& class_names, const LexicalGraph& graph,
                         const std::string& required_root,
                         const std::map<std::string, std::string>& overrides) {
  if (!graph.contains(required_root)) {
    throw DomainError("required root '" + required_root + "' is not in the graph");
  }

  // Depth-first search for the first hypernym path from `start` to the root.
  auto find_path = [&](const std::string& start) -> std::optional<std::vector<std::string>> {
    std::set<std::string> visited;
    std::vector<std::string> path;
    std::function<bool(const std::string&)> dfs = [&](const std::string& node) {
      if (!visited.insert(node).second) return false;
      path.push_back(node);
      if (node == required_root) return true;
      const auto it = graph.hypernyms.find(node);
      if (it != graph.hypernyms.end()) {
        for (const auto& h : it->second) {
          if (dfs(h)) return true;
        }
      }
      path.pop_back();
      return false;
    };
    if (dfs(start)) return path;
    return std::nullopt;
  };

  Taxonomy tax(required_root);
  std::map<std::string, std::size_t> concept_index{{required_root, 0}};
  std::vector<std::string> unresolved;
  for (std::size_t id = 0; id < class_names.size(); ++id) {
    const std::string& name = class_names[id];
    std::vector<std::string> starts;
    if (const auto o = overrides.find(name); o != overrides.end()) {
      starts.push_back(o->second);
    } else if (const auto s = graph.senses.find(name); s != graph.senses.end()) {
      starts = s->second;
    }
    std::optional<std::vector<std::string>> path;
    for (const auto& start : starts) {
      if ((path = find_path(start))) break;
    }
    if (!path) {
      unresolved.push_back(name);
      continue;
    }
    // Walk root -> sense; a concept already placed keeps its first position.
    std::size_t cursor = 0;
    for (auto it = path->rbegin(); it != path->rend(); ++it) {
      const auto found = concept_index.find(*it);
      if (found != concept_index.end()) {
        cursor = found->second;
      } else {
        cursor = tax.add_child(cursor, *it);
        concept_index.emplace(*it, cursor);
      }
    }
    tax.add_child(cursor, name, static_cast<std::int64_t>(id));
  }
  if (!unresolved.empty()) throw UnresolvedClassError(std::move(unresolved));
  tax.validate();
  return tax;
}

Taxonomy prune_to_classes(const Taxonomy& tax, const std::set<std::int64_t>& keep) {
  if (keep.empty()) throw DomainError("prune_to_classes: empty keep set");
  for (auto id : keep) {
    if (!tax.has_class(id)) throw DomainError("prune_to_classes: class " + std::to_string(id) + " is not a leaf");
  }
  std::vector<bool> retained(tax.node_count(), false);
  for (auto id : keep) {
    std::optional<std::size_t> cur = tax.leaf_of(id);
    while (cur && !retained[*cur]) {
      retained[*cur] = true;
      cur = tax.node(*cur).parent;
    }
  }
  Taxonomy out(tax.root().name);
  std::function<void(std::size_t, std::size_t)> copy = [&](std::size_t src, std::size_t dst) {
    for (auto c : tax.node(src).children) {
      if (!retained[c]) continue;
      const auto& child = tax.node(c);
      copy(c, out.add_child(dst, child.name, child.class_id));
    }
  };
  copy(0, 0);
  return out;
}

std::vector<std::int64_t> semantic_candidates(const Taxonomy& tax, std::int64_t class_id) {
  std::optional<std::size_t> cur = tax.node(tax.leaf_of(class_id)).parent;
  while (cur && tax.node(*cur).children.size() < 2) cur = tax.node(*cur).parent;
  if (!cur) return {};
  auto out = tax.leaf_classes_under(*cur);
  out.erase(std::remove(out.begin(), out.end(), class_id), out.end());
  return out;
}

namespace {

json node_to_json(const Taxonomy& tax, std::size_t index) {
  const auto& n = tax.node(index);
  json j;
  j["name"] = n.name;
  if (n.class_id) j["class_id"] = *n.class_id;
  j["children"] = json::array();
  for (auto c : n.children) j["children"].push_back(node_to_json(tax, c));
  return j;
}

void json_to_nodes(const json& j, Taxonomy& tax, std::size_t parent) {
  for (const auto& child : j.at("children")) {
    std::optional<std::int64_t> id;
    if (child.contains("class_id")) id = child.at("class_id").get<std::int64_t>();
    const auto index = tax.add_child(parent, child.at("name").get<std::string>(), id);
    json_to_nodes(child, tax, index);
  }
}

bool nodes_equal(const Taxonomy& a, std::size_t ia, const Taxonomy& b, std::size_t ib, bool ordered) {
  const auto& na = a.node(ia);
  const auto& nb = b.node(ib);
  if (na.name != nb.name || na.class_id != nb.class_id || na.children.size() != nb.children.size()) {
    return false;
  }
  if (ordered) {
    for (std::size_t k = 0; k < na.children.size(); ++k) {
      if (!nodes_equal(a, na.children[k], b, nb.children[k], true)) return false;
    }
    return true;
  }
  std::vector<bool> used(nb.children.size(), false);
  for (auto ca : na.children) {
    bool matched = false;
    for (std::size_t k = 0; k < nb.children.size() && !matched; ++k) {
      if (!used[k] && nodes_equal(a, ca, b, nb.children[k], false)) used[k] = matched = true;
    }
    if (!matched) return false;
  }
  return true;
}

}  // namespace

std::string taxonomy_to_json(const Taxonomy& tax, int indent) { return node_to_json(tax, 0).dump(indent); }

Taxonomy taxonomy_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.contains("class_id")) throw DomainError("taxonomy root cannot be a class leaf");
    Taxonomy tax(j.at("name").get<std::string>());
    json_to_nodes(j, tax, 0);
    tax.validate();
    return tax;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed taxonomy JSON: ") + e.what());
  }
}

Taxonomy read_taxonomy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return taxonomy_from_json(ss.str());
}

void write_taxonomy(const Taxonomy& tax, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << taxonomy_to_json(tax) << '\n';
}

bool structurally_equal(const Taxonomy& a, const Taxonomy& b) { return nodes_equal(a, 0, b, 0, true); }

bool equivalent_unordered(const Taxonomy& a, const Taxonomy& b) { return nodes_equal(a, 0, b, 0, false); }

}  // namespace procsim
