#include "iog/tree.hpp"

#include <functional>
#include <sstream>

namespace iog {

NodePtr make_placeholder(const NtRef& ref) {
  auto n = std::make_shared<Node>();
  n->rule = ref.rule;
  n->sender = ref.sender;
  n->receiver = ref.receiver;
  return n;
}

NodePtr make_terminal(BitString value, Provenance prov) {
  auto n = std::make_shared<Node>();
  n->terminal = true;
  n->alt = 0;
  n->value = std::move(value);
  n->provenance = prov;
  return n;
}

NodePtr make_pending_terminal() {
  auto n = std::make_shared<Node>();
  n->terminal = true;
  return n;
}

NodePtr empty_tree(const IoGrammar& g) {
  auto n = std::make_shared<Node>();
  n->rule = g.start();
  return n;
}

namespace {

void yield_into(const NodePtr& t, BitString& out, TreePath& path, bool strict) {
  if (!t->expanded()) {
    if (strict) throw Unexpanded(path);
    if (t->terminal) out.append(t->value);
    return;
  }
  if (t->terminal) {
    out.append(t->value);
    return;
  }
  for (std::size_t i = 0; i < t->children.size(); ++i) {
    path.push_back(static_cast<int>(i));
    yield_into(t->children[i], out, path, strict);
    path.pop_back();
  }
}

}  // namespace

BitString yield_bits(const NodePtr& t) {
  BitString out;
  TreePath path;
  yield_into(t, out, path, true);
  return out;
}

BitString partial_yield(const NodePtr& t) {
  BitString out;
  TreePath path;
  yield_into(t, out, path, false);
  return out;
}

bool fully_expanded(const NodePtr& t) {
  if (!t->expanded()) return false;
  for (const auto& c : t->children)
    if (!fully_expanded(c)) return false;
  return true;
}

const Node* node_at(const NodePtr& t, const TreePath& p) {
  const Node* n = t.get();
  for (int i : p) {
    if (i < 0 || static_cast<std::size_t>(i) >= n->children.size()) return nullptr;
    n = n->children[static_cast<std::size_t>(i)].get();
  }
  return n;
}

NodePtr subtree_at(const NodePtr& t, const TreePath& p) {
  NodePtr n = t;
  for (int i : p) {
    if (i < 0 || static_cast<std::size_t>(i) >= n->children.size()) return nullptr;
    n = n->children[static_cast<std::size_t>(i)];
  }
  return n;
}

namespace {

NodePtr replace_rec(const NodePtr& t, const TreePath& p, std::size_t depth, NodePtr sub) {
  if (depth == p.size()) return sub;
  auto i = static_cast<std::size_t>(p[depth]);
  if (i >= t->children.size()) throw HookMismatch("path does not resolve");
  auto copy = std::make_shared<Node>(*t);
  copy->children[i] = replace_rec(t->children[i], p, depth + 1, std::move(sub));
  return copy;
}

bool open_rec(const NodePtr& t, TreePath& path) {
  if (!t->expanded()) return true;
  for (std::size_t i = 0; i < t->children.size(); ++i) {
    path.push_back(static_cast<int>(i));
    if (open_rec(t->children[i], path)) return true;
    path.pop_back();
  }
  return false;
}

}  // namespace

NodePtr replace_at(const NodePtr& t, const TreePath& p, NodePtr sub) {
  return replace_rec(t, p, 0, std::move(sub));
}

std::optional<TreePath> rightmost_open_path(const NodePtr& t) {
  TreePath path;
  if (open_rec(t, path)) return path;
  return std::nullopt;
}

NodePtr append_at(const NodePtr& t, const TreePath& h, NodePtr sub) {
  const Node* at = node_at(t, h);
  if (!at) throw HookMismatch("hook path does not resolve");
  if (at->read_only) throw HookMismatch("hook is read-only");
  TreePath target = h;
  if (at->expanded()) {
    std::size_t i = 0;
    while (i < at->children.size() && at->children[i]->expanded()) ++i;
    if (i == at->children.size()) throw HookMismatch("hook has no open child");
    target.push_back(static_cast<int>(i));
    at = at->children[i].get();
    if (at->read_only) throw HookMismatch("hook is read-only");
  }
  if (at->terminal != sub->terminal || at->rule != sub->rule)
    throw HookMismatch("subtree symbol does not match hook");
  auto copy = std::make_shared<Node>(*sub);
  copy->sender = at->sender;
  copy->receiver = at->receiver;
  return replace_at(t, target, std::move(copy));
}

namespace {

NodePtr freeze(const NodePtr& t, bool& complete) {
  if (!t->expanded()) {
    complete = false;
    return t;
  }
  bool all = true;
  std::vector<NodePtr> kids;
  kids.reserve(t->children.size());
  bool changed = false;
  for (const auto& c : t->children) {
    bool sub = true;
    kids.push_back(freeze(c, sub));
    changed |= kids.back() != c;
    all &= sub;
  }
  complete = all;
  if (!changed && t->read_only == all) return t;
  if (!changed && !all) return t;
  auto copy = std::make_shared<Node>(*t);
  copy->children = std::move(kids);
  if (all) copy->read_only = true;
  return copy;
}

}  // namespace

NodePtr set_read_only(const NodePtr& t) {
  bool complete = true;
  return freeze(t, complete);
}

NodePtr with_provenance(const NodePtr& t, Provenance p) {
  auto copy = std::make_shared<Node>(*t);
  copy->provenance = p;
  for (auto& c : copy->children) c = with_provenance(c, p);
  return copy;
}

std::vector<MessageSite> message_nodes(const NodePtr& t) {
  std::vector<MessageSite> out;
  TreePath path;
  std::function<void(const NodePtr&)> walk = [&](const NodePtr& n) {
    if (n->is_message()) {
      if (n->expanded()) out.push_back({path, n});
      return;
    }
    for (std::size_t i = 0; i < n->children.size(); ++i) {
      path.push_back(static_cast<int>(i));
      walk(n->children[i]);
      path.pop_back();
    }
  };
  walk(t);
  return out;
}

bool is_prefix_tree(const NodePtr& prev, const NodePtr& cur) {
  if (prev->terminal != cur->terminal || prev->rule != cur->rule) return false;
  if (!prev->expanded()) return true;
  if (prev->alt != cur->alt || prev->children.size() != cur->children.size()) return false;
  if (prev->terminal) return prev->value == cur->value;
  for (std::size_t i = 0; i < prev->children.size(); ++i)
    if (!is_prefix_tree(prev->children[i], cur->children[i])) return false;
  return true;
}

std::vector<NodePtr> new_msgs(const NodePtr& prev, const NodePtr& cur) {
  if (!is_prefix_tree(prev, cur)) throw NotAPrefix("previous tree is not a prefix of the current tree");
  std::set<TreePath> before;
  for (const auto& m : message_nodes(prev)) before.insert(m.path);
  std::vector<NodePtr> out;
  for (const auto& m : message_nodes(cur))
    if (!before.count(m.path)) out.push_back(m.node);
  return out;
}

bool structurally_equal(const NodePtr& a, const NodePtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->terminal != b->terminal || a->rule != b->rule || a->alt != b->alt || a->sender != b->sender ||
      a->receiver != b->receiver || a->children.size() != b->children.size())
    return false;
  if (a->terminal && !(a->value == b->value)) return false;
  for (std::size_t i = 0; i < a->children.size(); ++i)
    if (!structurally_equal(a->children[i], b->children[i])) return false;
  return true;
}

std::set<KPath> k_paths(const NodePtr& t, int k) {
  std::set<KPath> out;
  KPath chain;
  std::function<void(const NodePtr&)> extend = [&](const NodePtr& n) {
    out.insert(chain);
    if (static_cast<int>(chain.size()) >= k) return;
    for (std::size_t i = 0; i < n->children.size(); ++i) {
      const auto& c = n->children[i];
      if (c->terminal || !c->expanded()) continue;
      chain.push_back({c->rule, c->alt, static_cast<int>(i)});
      extend(c);
      chain.pop_back();
    }
  };
  std::function<void(const NodePtr&)> visit = [&](const NodePtr& n) {
    if (n->terminal || !n->expanded()) return;
    chain.assign(1, KNode{n->rule, n->alt, -1});
    extend(n);
    for (const auto& c : n->children) visit(c);
  };
  if (k >= 1) visit(t);
  return out;
}

std::string render_kpath(const IoGrammar& g, const KPath& p) {
  std::string out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i) out += " -> ";
    out += "<" + g.rule(p[i].rule).lhs + ">#" + std::to_string(p[i].alt);
    if (p[i].pos >= 0) out += "@" + std::to_string(p[i].pos);
  }
  return out;
}

std::size_t byte_offset(const NodePtr& t, const TreePath& p) {
  std::size_t bits = 0;
  const Node* n = t.get();
  for (int i : p) {
    for (int j = 0; j < i; ++j) {
      NodePtr c = n->children[static_cast<std::size_t>(j)];
      bits += partial_yield(c).size();
    }
    n = n->children[static_cast<std::size_t>(i)].get();
  }
  return bits / 8;
}

namespace {

std::string label(const IoGrammar& g, const Node& n) {
  if (n.terminal) return n.expanded() ? "'" + escape_bytes(n.value.bytes()) + "'" : "'...'";
  std::string s = "<";
  if (n.sender) s += *n.sender + ":";
  if (n.receiver) s += *n.receiver + ":";
  s += (n.rule >= 0 ? g.rule(n.rule).lhs : std::string("?")) + ">";
  if (!n.expanded()) s += " (open)";
  if (n.read_only) s += " [ro]";
  return s;
}

}  // namespace

std::string dump_text(const IoGrammar& g, const NodePtr& t) {
  std::ostringstream os;
  std::function<void(const NodePtr&, int)> walk = [&](const NodePtr& n, int depth) {
    os << std::string(static_cast<std::size_t>(depth) * 2, ' ') << label(g, *n) << "\n";
    for (const auto& c : n->children) walk(c, depth + 1);
  };
  walk(t, 0);
  return os.str();
}

std::string dump_dot(const IoGrammar& g, const NodePtr& t) {
  std::ostringstream os;
  os << "digraph tree {\n  node [shape=box, fontname=monospace];\n";
  int next = 0;
  std::function<int(const NodePtr&)> walk = [&](const NodePtr& n) {
    int id = next++;
    std::string l = label(g, *n);
    std::string esc;
    for (char c : l) {
      if (c == '"' || c == '\\') esc.push_back('\\');
      esc.push_back(c);
    }
    os << "  n" << id << " [label=\"" << esc << "\"];\n";
    for (const auto& c : n->children) {
      int cid = walk(c);
      os << "  n" << id << " -> n" << cid << ";\n";
    }
    return id;
  };
  walk(t);
  os << "}\n";
  return os.str();
}

}  // namespace iog
