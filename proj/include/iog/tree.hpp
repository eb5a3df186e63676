#pragma once

#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "iog/bits.hpp"
#include "iog/grammar.hpp"

namespace iog {

enum class Provenance { Generated, Parsed, Seeded };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

// Derivation-tree node. Nonterminals carry a rule index and, once expanded,
// the chosen alternative; terminals carry their matched bits. `alt == -1`
// marks an unexpanded placeholder (for terminals: not yet matched).
struct Node {
  int rule = -1;
  int alt = -1;
  bool terminal = false;
  std::vector<NodePtr> children;
  BitString value;
  std::optional<std::string> sender;
  std::optional<std::string> receiver;
  bool read_only = false;
  Provenance provenance = Provenance::Generated;

  bool expanded() const { return alt >= 0; }
  bool is_message() const { return sender.has_value(); }
};

using TreePath = std::vector<int>;

class Unexpanded : public std::runtime_error {
public:
  explicit Unexpanded(TreePath p) : std::runtime_error("unexpanded node in yield"), path(std::move(p)) {}
  TreePath path;
};

class HookMismatch : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class NotAPrefix : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

NodePtr make_placeholder(const NtRef& ref);
NodePtr make_terminal(BitString value, Provenance prov = Provenance::Generated);
NodePtr make_pending_terminal();
// Root of a fresh session: `<start>` with no alternative chosen.
NodePtr empty_tree(const IoGrammar& g);

BitString yield_bits(const NodePtr& t);
// Bits of matched terminals only, skipping pending parts.
BitString partial_yield(const NodePtr& t);
bool fully_expanded(const NodePtr& t);

const Node* node_at(const NodePtr& t, const TreePath& p);
NodePtr subtree_at(const NodePtr& t, const TreePath& p);
// Copy of `t` with the node at `p` replaced.
NodePtr replace_at(const NodePtr& t, const TreePath& p, NodePtr sub);

// First unexpanded node in preorder: the next point where the derivation
// continues.
std::optional<TreePath> rightmost_open_path(const NodePtr& t);

// Attaches `sub` at the unexpanded node `h` (or at the first unexpanded child
// of a partially expanded node `h`). Throws HookMismatch.
NodePtr append_at(const NodePtr& t, const TreePath& h, NodePtr sub);

// Marks every fully expanded subtree read-only.
NodePtr set_read_only(const NodePtr& t);
NodePtr with_provenance(const NodePtr& t, Provenance p);

struct MessageSite {
  TreePath path;
  NodePtr node;
};
// Expanded message subtrees in derivation (preorder) order.
std::vector<MessageSite> message_nodes(const NodePtr& t);
bool is_prefix_tree(const NodePtr& prev, const NodePtr& cur);
std::vector<NodePtr> new_msgs(const NodePtr& prev, const NodePtr& cur);

bool structurally_equal(const NodePtr& a, const NodePtr& b);

struct KNode {
  int rule = -1;
  int alt = -1;
  int pos = -1;  // position inside the parent alternative; -1 for a chain head
  auto operator<=>(const KNode&) const = default;
};
using KPath = std::vector<KNode>;

std::set<KPath> k_paths(const NodePtr& t, int k);
std::string render_kpath(const IoGrammar& g, const KPath& p);

// Byte offset of each message site inside the session transcript, in order.
std::size_t byte_offset(const NodePtr& t, const TreePath& p);

std::string dump_text(const IoGrammar& g, const NodePtr& t);
std::string dump_dot(const IoGrammar& g, const NodePtr& t);

}  // namespace iog
