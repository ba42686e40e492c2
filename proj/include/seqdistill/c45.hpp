// C4.5 over categorical path attributes: entropy and gain ratio, multi-way
// splits with the mean-gain guard, pessimistic (binomial upper confidence
// bound) pruning with subtree replacement and largest-branch grafting, and
// conversion to an ordered IF-THEN rule list.
//
// Tie-breaks are fixed everywhere (lowest attribute id, lowest value, class 0
// on majority ties), so identical tables produce identical trees.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqdistill/error.hpp"
#include "seqdistill/paths.hpp"

namespace seqdistill {

struct TreeNode {
  bool is_leaf = true;
  int leaf_class = 0;                 // leaf payload
  std::size_t attribute = 0;          // internal payload: column id
  std::map<std::size_t, std::unique_ptr<TreeNode>> branches;
  int default_class = 0;              // class for unseen values at this node
  std::size_t support = 0;            // rows that reached the node
  std::size_t errors = 0;             // rows misclassified by the node's class

  std::size_t node_count() const {
    std::size_t n = 1;
    for (const auto& [v, child] : branches) n += child->node_count();
    return n;
  }

  std::size_t leaf_count() const {
    if (is_leaf) return 1;
    std::size_t n = 0;
    for (const auto& [v, child] : branches) n += child->leaf_count();
    return n;
  }

  std::unique_ptr<TreeNode> clone() const {
    auto copy = std::make_unique<TreeNode>();
    copy->is_leaf = is_leaf;
    copy->leaf_class = leaf_class;
    copy->attribute = attribute;
    copy->default_class = default_class;
    copy->support = support;
    copy->errors = errors;
    for (const auto& [v, child] : branches) copy->branches[v] = child->clone();
    return copy;
  }
};

// -Σ p_i log2 p_i, with 0·log 0 = 0.
inline double entropy(const std::vector<std::size_t>& counts) {
  std::size_t total = 0;
  for (std::size_t c : counts) total += c;
  if (total == 0) fail_validation("entropy of an empty count vector");
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return h;
}

struct SplitEval {
  bool usable = false;  // attribute has >= 2 observed values among the rows
  double gain = 0.0;
  double ratio = 0.0;
};

namespace detail {

using RowIndex = std::vector<std::uint32_t>;

inline std::array<std::size_t, 2> class_counts(const PathDataset& pd,
                                               const RowIndex& rows) {
  std::array<std::size_t, 2> n{0, 0};
  for (std::uint32_t r : rows) n[pd.rows[r].label]++;
  return n;
}

// Majority class; ties resolve to class 0.
inline int majority(const std::array<std::size_t, 2>& n) {
  return n[1] > n[0] ? 1 : 0;
}

}  // namespace detail

// Information gain and gain ratio of splitting `rows` on `attribute`.
inline SplitEval gain_ratio(const PathDataset& pd, const detail::RowIndex& rows,
                            std::size_t attribute) {
  std::map<std::size_t, std::array<std::size_t, 2>> per_value;
  for (std::uint32_t r : rows)
    per_value[pd.rows[r].path.indices[attribute]][pd.rows[r].label]++;

  SplitEval eval;
  if (per_value.size() < 2) return eval;  // single-valued: unusable, not an error
  eval.usable = true;

  auto n = detail::class_counts(pd, rows);
  double total = static_cast<double>(rows.size());
  double parent = entropy({n[0], n[1]});
  double children = 0.0;
  double split_info = 0.0;
  for (const auto& [value, counts] : per_value) {
    double nv = static_cast<double>(counts[0] + counts[1]);
    children += nv / total * entropy({counts[0], counts[1]});
    split_info -= nv / total * std::log2(nv / total);
  }
  eval.gain = parent - children;
  eval.ratio = split_info > 0.0 ? eval.gain / split_info : 0.0;
  return eval;
}

namespace detail {

inline std::unique_ptr<TreeNode> build_node(const PathDataset& pd, const RowIndex& rows,
                                            std::size_t min_cases) {
  auto node = std::make_unique<TreeNode>();
  auto n = class_counts(pd, rows);
  int maj = majority(n);
  node->leaf_class = maj;
  node->default_class = maj;
  node->support = rows.size();
  node->errors = n[1 - maj];

  bool pure = n[0] == 0 || n[1] == 0;
  if (pure || rows.size() < 2 * min_cases) return node;

  // Candidate attributes: usable, positive gain, and gain at least the mean
  // gain of the usable attributes (the C4.5 gain-ratio guard). Best gain
  // ratio wins; equal ratios resolve to the lowest column id.
  std::vector<std::pair<std::size_t, SplitEval>> usable;
  double mean_gain = 0.0;
  for (std::size_t a = 0; a < pd.num_layers; ++a) {
    SplitEval e = gain_ratio(pd, rows, a);
    if (e.usable) {
      usable.emplace_back(a, e);
      mean_gain += e.gain;
    }
  }
  if (usable.empty()) return node;
  mean_gain /= static_cast<double>(usable.size());

  constexpr double kEps = 1e-12;
  bool found = false;
  std::size_t best_attr = 0;
  double best_ratio = 0.0;
  for (const auto& [a, e] : usable) {
    if (e.gain <= kEps || e.gain + kEps < mean_gain) continue;
    if (!found || e.ratio > best_ratio + kEps) {
      found = true;
      best_attr = a;
      best_ratio = e.ratio;
    }
  }
  if (!found) return node;

  std::map<std::size_t, RowIndex> partition;
  for (std::uint32_t r : rows) partition[pd.rows[r].path.indices[best_attr]].push_back(r);

  node->is_leaf = false;
  node->attribute = best_attr;
  for (const auto& [value, part] : partition)
    node->branches[value] = build_node(pd, part, min_cases);
  return node;
}

}  // namespace detail

// Recursive partitioning; stops on purity, on fewer than 2·min_cases rows, or
// when no attribute has positive gain.
inline std::unique_ptr<TreeNode> build_tree(const PathDataset& pd,
                                            std::size_t min_cases = 2) {
  if (pd.rows.empty()) fail_validation("cannot build a tree from an empty table");
  detail::RowIndex all(pd.rows.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);
  return detail::build_node(pd, all, min_cases);
}

// Tree traversal; unseen attribute values fall back to the node's default
// class.
inline int classify_tree(const TreeNode& node, const FiredPath& path) {
  const TreeNode* cur = &node;
  while (!cur->is_leaf) {
    auto it = cur->branches.find(path.indices[cur->attribute]);
    if (it == cur->branches.end()) return cur->default_class;
    cur = it->second.get();
  }
  return cur->leaf_class;
}

namespace detail {

// Upper confidence bound on the error rate of a leaf observed to make E
// errors in N cases: the largest p with P(Bin(N,p) <= E) >= CF, found by
// bisection on the binomial CDF. E = 0 reduces to 1 - CF^(1/N).
inline double upper_error_rate(std::size_t n, std::size_t e, double cf) {
  if (n == 0) return 0.0;
  if (e >= n) return 1.0;
  if (e == 0) return 1.0 - std::pow(cf, 1.0 / static_cast<double>(n));

  auto cdf = [&](double p) {
    // P(Bin(n,p) <= e), summed in log space term by term.
    if (p <= 0.0) return 1.0;
    if (p >= 1.0) return 0.0;
    double acc = 0.0;
    for (std::size_t k = 0; k <= e; ++k) {
      double log_term = std::lgamma(double(n) + 1.0) - std::lgamma(double(k) + 1.0) -
                        std::lgamma(double(n - k) + 1.0) +
                        double(k) * std::log(p) + double(n - k) * std::log1p(-p);
      acc += std::exp(log_term);
    }
    return acc;
  };

  double lo = static_cast<double>(e) / static_cast<double>(n);
  double hi = 1.0;
  for (int it = 0; it < 80; ++it) {
    double mid = 0.5 * (lo + hi);
    if (cdf(mid) >= cf)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

inline double predicted_errors(std::size_t n, std::size_t e, double cf) {
  if (n == 0) return 0.0;
  return static_cast<double>(n) * upper_error_rate(n, e, cf);
}

// Prunes the subtree bottom-up against `rows`, refreshing node statistics,
// and returns the subtree's pessimistic error. Replacement choices: collapse
// to a leaf, graft the most-used branch (re-pruned against all rows), or
// keep; whichever bound is lowest, preferring the simpler structure on ties.
inline double prune_node(TreeNode& node, const PathDataset& pd, const RowIndex& rows,
                         double cf) {
  if (rows.empty()) return 0.0;  // empty partitions keep their built stats

  auto n = class_counts(pd, rows);
  int maj = majority(n);
  node.support = rows.size();
  node.default_class = maj;

  if (node.is_leaf) {
    node.errors = n[node.leaf_class == 0 ? 1 : 0];
    return predicted_errors(rows.size(), node.errors, cf);
  }

  std::map<std::size_t, RowIndex> partition;
  RowIndex unseen;
  for (std::uint32_t r : rows) {
    std::size_t v = pd.rows[r].path.indices[node.attribute];
    if (node.branches.count(v))
      partition[v].push_back(r);
    else
      unseen.push_back(r);
  }

  double subtree_err = 0.0;
  std::size_t largest = 0;
  std::size_t largest_value = 0;
  bool have_largest = false;
  for (auto& [value, child] : node.branches) {
    const RowIndex& part = partition[value];
    subtree_err += prune_node(*child, pd, part, cf);
    if (!have_largest || part.size() > largest) {
      largest = part.size();
      largest_value = value;
      have_largest = true;
    }
  }
  if (!unseen.empty()) {
    auto nu = class_counts(pd, unseen);
    subtree_err += predicted_errors(unseen.size(), nu[maj == 0 ? 1 : 0], cf);
  }

  std::size_t leaf_errors = n[maj == 0 ? 1 : 0];
  double leaf_err = predicted_errors(rows.size(), leaf_errors, cf);

  double graft_err = std::numeric_limits<double>::infinity();
  std::unique_ptr<TreeNode> graft;
  if (have_largest && !node.branches.at(largest_value)->is_leaf) {
    graft = node.branches.at(largest_value)->clone();
    graft_err = prune_node(*graft, pd, rows, cf);
  }

  node.errors = leaf_errors;
  if (leaf_err <= subtree_err && leaf_err <= graft_err) {
    node.is_leaf = true;
    node.leaf_class = maj;
    node.branches.clear();
    return leaf_err;
  }
  if (graft_err <= subtree_err) {
    node = std::move(*graft);
    return graft_err;
  }
  return subtree_err;
}

}  // namespace detail

// Pessimistic pruning at the given confidence; never increases the
// pessimistic error bound or the node count.
inline std::unique_ptr<TreeNode> prune_tree(const TreeNode& tree, const PathDataset& pd,
                                            double confidence = 0.25) {
  auto pruned = tree.clone();
  detail::RowIndex all(pd.rows.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);
  detail::prune_node(*pruned, pd, all, confidence);
  return pruned;
}

// ---- IF-THEN rules ------------------------------------------------------

struct RuleCondition {
  std::size_t attribute = 0;  // column id, 0-based; rendered as layer<id+1>
  std::size_t value = 0;

  bool operator==(const RuleCondition&) const = default;
};

struct Rule {
  std::vector<RuleCondition> conditions;  // distinct attributes, ascending
  int rule_class = 0;
  double confidence = 0.0;  // 1 - leaf errors / support
  std::size_t support = 0;

  bool operator==(const Rule&) const = default;
};

// First matching rule wins; unmatched paths take the default class.
struct RuleSet {
  std::vector<Rule> rules;
  int default_class = 0;
  std::size_t target_dimension = 0;

  bool operator==(const RuleSet&) const = default;

  // Deepest 0-based attribute referenced by any condition, or -1 if none.
  int deepest_attribute() const {
    int deepest = -1;
    for (const Rule& r : rules)
      for (const RuleCondition& c : r.conditions)
        deepest = std::max(deepest, static_cast<int>(c.attribute));
    return deepest;
  }
};

namespace detail {

inline void collect_rules(const TreeNode& node, std::vector<RuleCondition>& trail,
                          std::vector<Rule>& out) {
  if (node.is_leaf) {
    Rule r;
    r.conditions = trail;
    std::sort(r.conditions.begin(), r.conditions.end(),
              [](const RuleCondition& a, const RuleCondition& b) {
                return a.attribute < b.attribute;
              });
    r.rule_class = node.leaf_class;
    r.support = node.support;
    r.confidence = node.support == 0
                       ? 0.0
                       : 1.0 - static_cast<double>(node.errors) /
                                   static_cast<double>(node.support);
    out.push_back(std::move(r));
    return;
  }
  for (const auto& [value, child] : node.branches) {
    trail.push_back({node.attribute, value});
    collect_rules(*child, trail, out);
    trail.pop_back();
  }
}

}  // namespace detail

// One rule per root-to-leaf path, ordered by confidence then support
// (descending, stable). A root that is already a leaf yields no rules, only
// the default class.
inline RuleSet tree_to_rules(const TreeNode& tree, std::size_t target_dimension = 0) {
  RuleSet rs;
  rs.default_class = tree.default_class;
  rs.target_dimension = target_dimension;
  if (tree.is_leaf) return rs;
  std::vector<RuleCondition> trail;
  detail::collect_rules(tree, trail, rs.rules);
  std::stable_sort(rs.rules.begin(), rs.rules.end(), [](const Rule& a, const Rule& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.support > b.support;
  });
  return rs;
}

inline int classify(const RuleSet& rs, const FiredPath& path) {
  for (const Rule& r : rs.rules) {
    bool match = true;
    for (const RuleCondition& c : r.conditions) {
      if (path.indices[c.attribute] != c.value) {
        match = false;
        break;
      }
    }
    if (match) return r.rule_class;
  }
  return rs.default_class;
}

// ---- serialization ------------------------------------------------------

inline nlohmann::json ruleset_to_json(const RuleSet& rs) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["target_dimension"] = rs.target_dimension;
  j["default_class"] = rs.default_class;
  nlohmann::json rules = nlohmann::json::array();
  for (const Rule& r : rs.rules) {
    nlohmann::json jr;
    nlohmann::json conds = nlohmann::json::array();
    for (const RuleCondition& c : r.conditions) {
      nlohmann::json jc;
      jc["layer"] = c.attribute + 1;
      jc["value"] = c.value;
      conds.push_back(std::move(jc));
    }
    jr["conditions"] = std::move(conds);
    jr["class"] = r.rule_class;
    jr["confidence"] = r.confidence;
    jr["support"] = r.support;
    rules.push_back(std::move(jr));
  }
  j["rules"] = std::move(rules);
  return j;
}

inline RuleSet ruleset_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format_version", 0) != 1)
    fail_format("ruleset record has unknown format_version");
  RuleSet rs;
  rs.target_dimension = j.at("target_dimension").get<std::size_t>();
  rs.default_class = j.at("default_class").get<int>();
  for (const auto& jr : j.at("rules")) {
    Rule r;
    for (const auto& jc : jr.at("conditions")) {
      std::size_t layer = jc.at("layer").get<std::size_t>();
      if (layer == 0) fail_format("rule condition layer must be >= 1");
      r.conditions.push_back({layer - 1, jc.at("value").get<std::size_t>()});
    }
    r.rule_class = jr.at("class").get<int>();
    r.confidence = jr.at("confidence").get<double>();
    r.support = jr.at("support").get<std::size_t>();
    rs.rules.push_back(std::move(r));
  }
  return rs;
}

inline std::string rule_to_text(const Rule& r) {
  std::ostringstream os;
  os << "IF ";
  for (std::size_t i = 0; i < r.conditions.size(); ++i) {
    if (i) os << " AND ";
    os << "layer" << (r.conditions[i].attribute + 1) << "=" << r.conditions[i].value;
  }
  os << " THEN " << r.rule_class << " [conf " << r.confidence << "]";
  return os.str();
}

inline std::string ruleset_to_text(const RuleSet& rs) {
  std::ostringstream os;
  os << "target dimension " << rs.target_dimension << "\n";
  for (const Rule& r : rs.rules) os << rule_to_text(r) << "\n";
  os << "DEFAULT " << rs.default_class << "\n";
  return os.str();
}

}  // namespace seqdistill
