#pragma once

// Generic Earley recognizer and tree extractor shared by byte-level parsing
// and message-level forecasting. `Level` decides which grammar elements are
// terminals and how they match the input.

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <tuple>
#include <unordered_set>

#include "iog/grammar.hpp"
#include "iog/tree.hpp"

namespace iog::detail {

struct Item {
  int rule = 0;
  int alt = 0;
  int dot = 0;
  std::size_t origin = 0;
  bool operator==(const Item&) const = default;
};

struct ItemHash {
  std::size_t operator()(const Item& i) const noexcept {
    std::size_t h = static_cast<std::size_t>(i.rule);
    h = h * 1000003u ^ static_cast<std::size_t>(i.alt);
    h = h * 1000003u ^ static_cast<std::size_t>(i.dot);
    h = h * 1000003u ^ i.origin;
    return h;
  }
};

struct ChartSet {
  std::vector<Item> items;
  std::unordered_set<Item, ItemHash> seen;
  bool add(const Item& it) {
    if (!seen.insert(it).second) return false;
    items.push_back(it);
    return true;
  }
  bool has(const Item& it) const { return seen.count(it) != 0; }
};

// One link of an incomplete parse: an open item and the chart it lives in.
struct Link {
  Item item;
  std::size_t pos = 0;
};

template <class Level>
class Earley {
public:
  Earley(const IoGrammar& g, const Level& lv, int start) : g_(g), lv_(lv), start_(start), n_(lv.size()) {}

  static constexpr std::size_t kStepBudget = 400000;

  void run() {
    chart_.assign(n_ + 1, ChartSet{});
    std::vector<std::set<int>> empty_done(n_ + 1);
    for (std::size_t a = 0; a < alts(start_).size(); ++a) chart_[0].add({start_, static_cast<int>(a), 0, 0});
    for (std::size_t i = 0; i <= n_; ++i) {
      ChartSet& set = chart_[i];
      for (std::size_t x = 0; x < set.items.size(); ++x) {
        const Item it = set.items[x];
        const Alternative& alt = alts(it.rule)[static_cast<std::size_t>(it.alt)];
        const Item adv{it.rule, it.alt, it.dot + 1, it.origin};
        if (static_cast<std::size_t>(it.dot) == alt.size()) {
          if (it.origin == i) empty_done[i].insert(it.rule);
          ChartSet& from = chart_[it.origin];
          for (std::size_t y = 0; y < from.items.size(); ++y) {
            const Item p = from.items[y];
            const Alternative& pa = alts(p.rule)[static_cast<std::size_t>(p.alt)];
            if (static_cast<std::size_t>(p.dot) >= pa.size()) continue;
            const Element& e = pa[static_cast<std::size_t>(p.dot)];
            if (lv_.terminal(e)) continue;
            if (as_ref(e)->rule == it.rule) set.add({p.rule, p.alt, p.dot + 1, p.origin});
          }
          continue;
        }
        const Element& e = alt[static_cast<std::size_t>(it.dot)];
        if (!lv_.terminal(e)) {
          int b = as_ref(e)->rule;
          for (std::size_t a = 0; a < alts(b).size(); ++a) set.add({b, static_cast<int>(a), 0, i});
          if (lv_.nullable(b) || empty_done[i].count(b)) set.add(adv);
        } else if (auto end = lv_.scan(e, i)) {
          if (*end == i) set.add(adv);
          else if (*end <= n_) chart_[*end].add(adv);
        }
      }
    }
    for (std::size_t j = 0; j <= n_; ++j)
      for (const auto& it : chart_[j].items)
        if (complete(it)) {
          auto& ends = completed_[{it.rule, it.origin}];
          if (ends.empty() || ends.back() != j) ends.push_back(j);
        }
  }

  std::size_t size() const { return n_; }
  const ChartSet& chart(std::size_t i) const { return chart_[i]; }

  bool complete(const Item& it) const {
    return static_cast<std::size_t>(it.dot) == alts(it.rule)[static_cast<std::size_t>(it.alt)].size();
  }
  const Element* next(const Item& it) const {
    const Alternative& alt = alts(it.rule)[static_cast<std::size_t>(it.alt)];
    return static_cast<std::size_t>(it.dot) < alt.size() ? &alt[static_cast<std::size_t>(it.dot)] : nullptr;
  }

  bool accepts(std::size_t j) const {
    for (std::size_t a = 0; a < alts(start_).size(); ++a)
      if (chart_[j].has({start_, static_cast<int>(a), static_cast<int>(alts(start_)[a].size()), 0})) return true;
    return false;
  }

  std::size_t furthest() const {
    for (std::size_t j = n_ + 1; j-- > 0;)
      if (!chart_[j].items.empty()) return j;
    return 0;
  }

  bool exhausted() const { return steps_ > kStepBudget; }

  // Complete derivations of `start` over [0, j]; `emit` returns false to stop.
  void complete_trees(std::size_t j, const std::function<bool(NodePtr)>& emit) {
    NtRef root;
    root.rule = start_;
    root.name = g_.rule(start_).lhs;
    nt_trees(root, 0, j, emit);
  }

  // Node for open item `it` in chart[p]: first `dot` children derived over
  // [origin, p], then `inner` (or a pending terminal), then placeholders.
  NodePtr partial_node(const Item& it, std::size_t p, NodePtr inner, NodePtr pending) {
    std::vector<NodePtr> first;
    bool found = false;
    std::vector<NodePtr> kids;
    seq(it.rule, it.alt, it.dot, 0, it.origin, it.origin, p, kids, [&](std::vector<NodePtr>& ks) {
      first = ks;
      found = true;
      return false;
    });
    if (!found) return nullptr;
    const Alternative& alt = alts(it.rule)[static_cast<std::size_t>(it.alt)];
    std::size_t k = static_cast<std::size_t>(it.dot);
    if (inner) {
      auto copy = std::make_shared<Node>(*inner);
      if (auto* ref = as_ref(alt[k])) {
        copy->sender = ref->sender;
        copy->receiver = ref->receiver;
      }
      first.push_back(std::move(copy));
      ++k;
    } else if (pending) {
      first.push_back(std::move(pending));
      ++k;
    }
    for (; k < alt.size(); ++k) {
      if (auto* ref = as_ref(alt[k])) first.push_back(make_placeholder(*ref));
      else first.push_back(make_pending_terminal());
    }
    auto n = std::make_shared<Node>();
    n->rule = it.rule;
    n->alt = it.alt;
    n->children = std::move(first);
    n->provenance = lv_.provenance();
    return n;
  }

  // Enumerates chains from `leaf` (in chart[pos]) up to a <start> item with
  // origin 0. `emit` receives the chain bottom-up and returns false to stop.
  void chains(const Item& leaf, std::size_t pos, const std::function<bool(const std::vector<Link>&)>& emit) {
    std::vector<Link> chain{{leaf, pos}};
    std::set<std::tuple<int, int, int, std::size_t, std::size_t>> on_chain;
    std::function<bool()> up = [&]() -> bool {
      if (++steps_ > kStepBudget) return false;
      const Link& top = chain.back();
      if (top.item.rule == start_ && top.item.origin == 0)
        if (!emit(chain)) return false;
      std::size_t o = top.item.origin;
      int r = top.item.rule;
      const auto& items = chart_[o].items;
      for (std::size_t y = 0; y < items.size(); ++y) {
        const Item p = items[y];
        const Element* e = next(p);
        if (!e || lv_.terminal(*e) || as_ref(*e)->rule != r) continue;
        auto key = std::make_tuple(p.rule, p.alt, p.dot, p.origin, o);
        if (on_chain.count(key)) continue;
        on_chain.insert(key);
        chain.push_back({p, o});
        bool cont = up();
        chain.pop_back();
        on_chain.erase(key);
        if (!cont) return false;
      }
      return true;
    };
    on_chain.insert(std::make_tuple(leaf.rule, leaf.alt, leaf.dot, leaf.origin, pos));
    up();
  }

  // Builds the tree for a chain; `pending` fills the leaf's next slot.
  // Also returns the path to that slot.
  std::pair<NodePtr, TreePath> build_chain(const std::vector<Link>& chain, NodePtr pending) {
    NodePtr node = partial_node(chain[0].item, chain[0].pos, nullptr, std::move(pending));
    if (!node) return {nullptr, {}};
    for (std::size_t c = 1; c < chain.size(); ++c) {
      node = partial_node(chain[c].item, chain[c].pos, node, nullptr);
      if (!node) return {nullptr, {}};
    }
    TreePath path;
    for (std::size_t c = chain.size(); c-- > 0;) path.push_back(chain[c].item.dot);
    return {node, path};
  }

private:
  const std::vector<Alternative>& alts(int r) const { return g_.rule(r).alternatives; }

  using Emit = std::function<bool(std::vector<NodePtr>&)>;

  bool seq(int rule, int alt, int d, int k, std::size_t pos, std::size_t i, std::size_t j, std::vector<NodePtr>& kids,
           const Emit& emit) {
    if (++steps_ > kStepBudget) return false;
    if (k == d) return pos == j ? emit(kids) : true;
    const Element& e = alts(rule)[static_cast<std::size_t>(alt)][static_cast<std::size_t>(k)];
    const Item nxt{rule, alt, k + 1, i};
    if (lv_.terminal(e)) {
      auto end = lv_.scan(e, pos);
      if (!end || *end > j || !chart_[*end].has(nxt)) return true;
      kids.push_back(lv_.leaf(e, pos, *end));
      bool c = seq(rule, alt, d, k + 1, *end, i, j, kids, emit);
      kids.pop_back();
      return c;
    }
    const NtRef& ref = *as_ref(e);
    auto found = completed_.find({ref.rule, pos});
    if (found == completed_.end()) return true;
    for (std::size_t q : found->second) {
      if (q > j) break;
      if (!chart_[q].has(nxt)) continue;
      bool c = nt_trees(ref, pos, q, [&](NodePtr sub) {
        kids.push_back(std::move(sub));
        bool r = seq(rule, alt, d, k + 1, q, i, j, kids, emit);
        kids.pop_back();
        return r;
      });
      if (!c) return false;
    }
    return true;
  }

  bool nt_trees(const NtRef& ref, std::size_t p, std::size_t q, const std::function<bool(NodePtr)>& emit) {
    auto key = std::make_tuple(ref.rule, p, q);
    if (active_.count(key)) return true;
    active_.insert(key);
    bool cont = true;
    const auto& as = alts(ref.rule);
    for (std::size_t a = 0; a < as.size() && cont; ++a) {
      if (!chart_[q].has({ref.rule, static_cast<int>(a), static_cast<int>(as[a].size()), p})) continue;
      std::vector<NodePtr> kids;
      cont = seq(ref.rule, static_cast<int>(a), static_cast<int>(as[a].size()), 0, p, p, q, kids,
                 [&](std::vector<NodePtr>& ks) {
                   auto n = std::make_shared<Node>();
                   n->rule = ref.rule;
                   n->alt = static_cast<int>(a);
                   n->children = ks;
                   n->sender = ref.sender;
                   n->receiver = ref.receiver;
                   n->provenance = lv_.provenance();
                   return emit(n);
                 });
    }
    active_.erase(key);
    return cont;
  }

  const IoGrammar& g_;
  const Level& lv_;
  int start_;
  std::size_t n_;
  std::vector<ChartSet> chart_;
  std::map<std::pair<int, std::size_t>, std::vector<std::size_t>> completed_;
  std::set<std::tuple<int, std::size_t, std::size_t>> active_;
  std::size_t steps_ = 0;
};

}  // namespace iog::detail
