#pragma once

#include <algorithm>
#include <bitset>
#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "error.hpp"

namespace phylosmc {

inline constexpr std::size_t kMaxTaxa = 256;
using TaxonSet = std::bitset<kMaxTaxa>;

/// Taxon names with their lexicographic ranks.
class TaxonTable {
 public:
  TaxonTable() = default;
  explicit TaxonTable(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.size() > kMaxTaxa) {
      throw Error(ErrorKind::kConfiguration,
                  "at most " + std::to_string(kMaxTaxa) + " taxa are supported");
    }
    std::vector<std::size_t> order(names_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return names_[a] < names_[b]; });
    rank_.resize(names_.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank_[order[r]] = static_cast<int>(r);
    for (std::size_t i = 0; i < names_.size(); ++i) index_.emplace(names_[i], i);
  }

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }
  int rank(std::size_t i) const { return rank_[i]; }

  std::optional<std::size_t> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  TaxonSet all() const {
    TaxonSet s;
    for (std::size_t i = 0; i < names_.size(); ++i) s.set(i);
    return s;
  }

 private:
  std::vector<std::string> names_;
  std::vector<int> rank_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Node;
using NodePtr = std::shared_ptr<const Node>;

/// Immutable rooted binary tree node. Edge lengths to the two children are
/// stored on the parent so a subtree can be shared by forests that attach it
/// with different branch lengths. `left` always holds the child with the
/// smaller key (the lexicographic rank of its smallest taxon name).
struct Node {
  TaxonSet taxa;
  int key = 0;
  int taxon = -1;
  int leaf_count = 1;
  NodePtr left;
  NodePtr right;
  double left_length = 0.0;
  double right_length = 0.0;
  double height = 0.0;
  // Non-clock final merge: the two roots are joined by the single edge
  // `left_length`; `right_length` is a zero-length placeholder.
  bool single_edge = false;

  bool is_leaf() const { return taxon >= 0; }
};

inline NodePtr make_leaf(int taxon, int key) {
  auto n = std::make_shared<Node>();
  n->taxa.set(static_cast<std::size_t>(taxon));
  n->key = key;
  n->taxon = taxon;
  return n;
}

/// Joins two subtrees. `length_a` is the edge to `a`; children are reordered
/// by key and lengths follow them.
inline NodePtr make_join(NodePtr a, NodePtr b, double length_a, double length_b, double height,
                         bool single_edge = false) {
  if (!a || !b) throw Error(ErrorKind::kCannotMerge, "null subtree");
  if ((a->taxa & b->taxa).any()) throw Error(ErrorKind::kCannotMerge, "overlapping subtrees");
  if (!(length_a >= 0.0) || !(length_b >= 0.0)) {
    throw Error(ErrorKind::kDomain, "negative branch length");
  }
  if (b->key < a->key) {
    std::swap(a, b);
    std::swap(length_a, length_b);
  }
  auto n = std::make_shared<Node>();
  n->taxa = a->taxa | b->taxa;
  n->key = a->key;
  n->leaf_count = a->leaf_count + b->leaf_count;
  n->left_length = length_a;
  n->right_length = length_b;
  n->left = std::move(a);
  n->right = std::move(b);
  n->height = height;
  n->single_edge = single_edge;
  return n;
}

/// Structural equality: same topology, taxa, edge lengths and heights.
inline bool same_tree(const Node* a, const Node* b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->taxa != b->taxa || a->taxon != b->taxon || a->height != b->height) return false;
  if (a->is_leaf()) return true;
  return a->left_length == b->left_length && a->right_length == b->right_length &&
         a->single_edge == b->single_edge && same_tree(a->left.get(), b->left.get()) &&
         same_tree(a->right.get(), b->right.get());
}

inline bool same_tree(const NodePtr& a, const NodePtr& b) { return same_tree(a.get(), b.get()); }

template <typename Fn>
void for_each_node(const Node& n, Fn&& fn) {
  fn(n);
  if (!n.is_leaf()) {
    for_each_node(*n.left, fn);
    for_each_node(*n.right, fn);
  }
}

/// Total branch length, counting a single-edge final join once.
inline double total_length(const Node& root) {
  double sum = 0.0;
  for_each_node(root, [&](const Node& n) {
    if (!n.is_leaf()) sum += n.left_length + (n.single_edge ? 0.0 : n.right_length);
  });
  return sum;
}

// ---------------------------------------------------------------------------
// Newick

/// General (possibly multifurcating) tree as read from or written to Newick.
struct NewickNode {
  std::string label;
  double length = 0.0;
  bool has_length = false;
  std::vector<NewickNode> children;

  bool is_leaf() const { return children.empty(); }
};

inline std::string format_length(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

namespace detail {

class NewickParser {
 public:
  explicit NewickParser(std::string_view text) : text_(text) {}

  NewickNode parse() {
    skip_space();
    if (pos_ >= text_.size()) throw ParseError("empty Newick string", pos_);
    NewickNode root = parse_subtree();
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == ';') {
      ++pos_;
    } else {
      throw ParseError("expected ';'", pos_);
    }
    skip_space();
    if (pos_ != text_.size()) throw ParseError("trailing characters after ';'", pos_);
    return root;
  }

 private:
  void skip_space() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (c == '[') {
        const auto close = text_.find(']', pos_);
        if (close == std::string_view::npos) throw ParseError("unterminated comment", pos_);
        pos_ = close + 1;
      } else {
        break;
      }
    }
  }

  NewickNode parse_subtree() {
    NewickNode node;
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == '(') {
      ++pos_;
      while (true) {
        node.children.push_back(parse_subtree());
        skip_space();
        if (pos_ >= text_.size()) throw ParseError("unbalanced parentheses", pos_);
        if (text_[pos_] == ',') {
          ++pos_;
          continue;
        }
        if (text_[pos_] == ')') {
          ++pos_;
          break;
        }
        throw ParseError(std::string("unexpected character '") + text_[pos_] + "'", pos_);
      }
    }
    skip_space();
    node.label = parse_label();
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == ':') {
      ++pos_;
      skip_space();
      node.length = parse_number();
      node.has_length = true;
    }
    if (node.children.empty() && node.label.empty()) {
      throw ParseError("leaf without a label", pos_);
    }
    return node;
  }

  std::string parse_label() {
    std::string label;
    if (pos_ < text_.size() && text_[pos_] == '\'') {
      const std::size_t start = pos_++;
      while (true) {
        if (pos_ >= text_.size()) throw ParseError("unterminated quoted label", start);
        if (text_[pos_] == '\'') {
          if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '\'') {
            label += '\'';
            pos_ += 2;
            continue;
          }
          ++pos_;
          break;
        }
        label += text_[pos_++];
      }
      return label;
    }
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '(' || c == ')' || c == ',' || c == ':' || c == ';' || c == '[' ||
          std::isspace(static_cast<unsigned char>(c))) {
        break;
      }
      label += c;
      ++pos_;
    }
    return label;
  }

  double parse_number() {
    const std::size_t start = pos_;
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '+' ||
          c == 'e' || c == 'E') {
        ++pos_;
      } else {
        break;
      }
    }
    if (start == pos_) throw ParseError("expected branch length", pos_);
    const std::string token(text_.substr(start, pos_ - start));
    try {
      std::size_t used = 0;
      const double v = std::stod(token, &used);
      if (used != token.size()) throw ParseError("malformed branch length", start);
      return v;
    } catch (const std::logic_error&) {
      throw ParseError("malformed branch length", start);
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

inline bool needs_quotes(const std::string& label) {
  return label.find_first_of("()[]':;, \t\n") != std::string::npos;
}

inline void write_label(std::string& out, const std::string& label) {
  if (!needs_quotes(label)) {
    out += label;
    return;
  }
  out += '\'';
  for (char c : label) {
    if (c == '\'') out += '\'';
    out += c;
  }
  out += '\'';
}

inline void write_newick(const NewickNode& n, std::string& out) {
  if (!n.children.empty()) {
    out += '(';
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      if (i) out += ',';
      write_newick(n.children[i], out);
    }
    out += ')';
  }
  write_label(out, n.label);
  if (n.has_length) {
    out += ':';
    out += format_length(n.length);
  }
}

inline std::string smallest_label(const NewickNode& n) {
  if (n.is_leaf()) return n.label;
  std::string best;
  for (const auto& c : n.children) {
    auto s = smallest_label(c);
    if (best.empty() || s < best) best = std::move(s);
  }
  return best;
}

}  // namespace detail

inline NewickNode parse_newick(std::string_view text) { return detail::NewickParser(text).parse(); }

inline std::string write_newick(const NewickNode& root) {
  std::string out;
  detail::write_newick(root, out);
  out += ';';
  return out;
}

/// Orders children everywhere by their smallest leaf label.
inline void canonicalize(NewickNode& n) {
  for (auto& c : n.children) canonicalize(c);
  std::vector<std::pair<std::string, NewickNode>> keyed;
  keyed.reserve(n.children.size());
  for (auto& c : n.children) keyed.emplace_back(detail::smallest_label(c), std::move(c));
  std::sort(keyed.begin(), keyed.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  n.children.clear();
  for (auto& [_, c] : keyed) n.children.push_back(std::move(c));
}

/// Binary tree to Newick form; the root carries no length.
inline NewickNode to_newick_node(const Node& n, const TaxonTable& taxa) {
  NewickNode out;
  if (n.is_leaf()) {
    out.label = taxa.name(static_cast<std::size_t>(n.taxon));
    return out;
  }
  NewickNode l = to_newick_node(*n.left, taxa);
  NewickNode r = to_newick_node(*n.right, taxa);
  l.length = n.left_length;
  l.has_length = true;
  r.length = n.right_length;
  r.has_length = true;
  out.children.push_back(std::move(l));
  out.children.push_back(std::move(r));
  return out;
}

inline std::string to_newick(const Node& n, const TaxonTable& taxa) {
  return write_newick(to_newick_node(n, taxa));
}

namespace detail {

inline NodePtr build_binary(const NewickNode& n, const TaxonTable& taxa, bool resolve) {
  if (n.is_leaf()) {
    auto idx = taxa.find(n.label);
    if (!idx) throw Error(ErrorKind::kMissingTaxon, "unknown taxon '" + n.label + "'");
    return make_leaf(static_cast<int>(*idx), taxa.rank(*idx));
  }
  if (n.children.size() == 1) {
    throw Error(ErrorKind::kParse, "unary node in Newick tree");
  }
  if (n.children.size() > 2 && !resolve) {
    throw Error(ErrorKind::kParse, "multifurcating node in a binary tree");
  }
  struct Part {
    NodePtr node;
    double length;
    std::string key;
  };
  std::vector<Part> parts;
  for (const auto& c : n.children) {
    parts.push_back({build_binary(c, taxa, resolve), c.has_length ? c.length : 0.0,
                     smallest_label(c)});
  }
  std::sort(parts.begin(), parts.end(),
            [](const Part& a, const Part& b) { return a.key < b.key; });
  // Multifurcations become a left-leaning comb of zero-length edges.
  while (parts.size() > 2) {
    Part a = parts[0];
    Part b = parts[1];
    const double h = std::max(a.node->height + a.length, b.node->height + b.length);
    Part joined{make_join(a.node, b.node, a.length, b.length, h), 0.0, a.key};
    parts.erase(parts.begin(), parts.begin() + 2);
    parts.insert(parts.begin(), std::move(joined));
  }
  const double h = std::max(parts[0].node->height + parts[0].length,
                            parts[1].node->height + parts[1].length);
  return make_join(parts[0].node, parts[1].node, parts[0].length, parts[1].length, h);
}

}  // namespace detail

/// Strict binary conversion: every internal node must have two children.
/// Node heights are max(child height + edge length), leaves at 0.
inline NodePtr from_newick(const NewickNode& root, const TaxonTable& taxa) {
  return detail::build_binary(root, taxa, false);
}

inline NodePtr from_newick(std::string_view text, const TaxonTable& taxa) {
  return from_newick(parse_newick(text), taxa);
}

/// Like from_newick but resolves multifurcations with zero-length edges,
/// grouping children in order of their smallest label.
inline NodePtr resolve_to_binary(const NewickNode& root, const TaxonTable& taxa) {
  return detail::build_binary(root, taxa, true);
}

inline std::vector<std::string> leaf_labels(const NewickNode& n) {
  std::vector<std::string> out;
  if (n.is_leaf()) {
    out.push_back(n.label);
    return out;
  }
  for (const auto& c : n.children) {
    auto sub = leaf_labels(c);
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

}  // namespace phylosmc
