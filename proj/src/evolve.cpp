#include "iog/evolve.hpp"

#include <algorithm>
#include <functional>

namespace iog {

namespace {

constexpr int kHardCapSlack = 64;

class Expander {
public:
  Expander(const IoGrammar& g, Rng& rng, int budget) : g_(g), rng_(rng), budget_(budget) {}

  NodePtr rule(int r, int depth, bool syntax_only) {
    if (r < 0 || !g_.productive(r)) throw BudgetExceeded("<" + name(r) + "> has no finite expansion");
    if (depth > budget_ + g_.rule_count() + kHardCapSlack) throw BudgetExceeded("expansion of <" + name(r) + "> too deep");
    const Production& p = g_.rule(r);
    if (p.generator && !syntax_only) return generated(r, depth);

    int alt;
    if (depth >= budget_) {
      alt = g_.shortest_alternative(r);
    } else {
      std::vector<int> ok;
      for (std::size_t a = 0; a < p.alternatives.size(); ++a)
        if (alt_productive(p.alternatives[a])) ok.push_back(static_cast<int>(a));
      alt = ok[std::uniform_int_distribution<std::size_t>(0, ok.size() - 1)(rng_)];
    }
    auto n = std::make_shared<Node>();
    n->rule = r;
    n->alt = alt;
    for (const auto& e : p.alternatives[static_cast<std::size_t>(alt)]) n->children.push_back(element(e, depth + 1));
    return n;
  }

private:
  std::string name(int r) const { return r >= 0 ? g_.rule(r).lhs : "?"; }

  bool alt_productive(const Alternative& a) const {
    for (const auto& e : a)
      if (auto* ref = as_ref(e); ref && !g_.productive(ref->rule)) return false;
    return true;
  }

  NodePtr element(const Element& e, int depth) {
    if (auto* lit = std::get_if<Literal>(&e)) return make_terminal(BitString::from_bytes(lit->bytes));
    if (auto* re = std::get_if<RegexTerm>(&e)) return make_terminal(BitString::from_bytes(re->re->generate(rng_)));
    if (auto* bf = std::get_if<BitField>(&e)) {
      BitString b;
      std::uint64_t v = bf->value ? *bf->value : rng_();
      if (bf->width < 64) v &= (std::uint64_t{1} << bf->width) - 1;
      b.append_bits(v, bf->width);
      return make_terminal(std::move(b));
    }
    const NtRef& ref = std::get<NtRef>(e);
    auto sub = std::make_shared<Node>(*rule(ref.rule, depth, false));
    sub->sender = ref.sender;
    sub->receiver = ref.receiver;
    return sub;
  }

  NodePtr generated(int r, int depth) {
    std::vector<Effect> scratch;
    CallContext ctx{&g_, &rng_, &scratch};
    Bytes out = produce(g_, r, ctx, [&](int param) { return rule(param, depth + 1, true); });
    ParseOutcome po;
    try {
      po = parse(g_, r, BitString::from_bytes(out), ParseMode::Complete, Provenance::Generated);
    } catch (const NoParse&) {
      throw FunctionError(g_.rule(r).lhs, "generator output '" + escape_bytes(out) + "' does not parse");
    }
    return po.trees.front();
  }

  const IoGrammar& g_;
  Rng& rng_;
  int budget_;
};

bool has_read_only(const NodePtr& n) {
  if (n->read_only) return true;
  for (const auto& c : n->children)
    if (has_read_only(c)) return true;
  return false;
}

void collect_points(const IoGrammar& g, const NodePtr& n, TreePath& path, std::vector<TreePath>& out) {
  if (n->terminal || !n->expanded()) return;
  if (!has_read_only(n) && fully_expanded(n)) out.push_back(path);
  if (n->rule >= 0 && g.rule(n->rule).generator) return;  // generated values are atomic
  for (std::size_t i = 0; i < n->children.size(); ++i) {
    path.push_back(static_cast<int>(i));
    collect_points(g, n->children[i], path, out);
    path.pop_back();
  }
}

NodePtr relabel(const NodePtr& sub, const Node& like) {
  auto c = std::make_shared<Node>(*sub);
  c->sender = like.sender;
  c->receiver = like.receiver;
  c->read_only = false;
  return c;
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

}  // namespace

NodePtr random_expand(const IoGrammar& g, int rule, Rng& rng, int depth_budget, bool syntax_only) {
  return Expander(g, rng, depth_budget).rule(rule, 0, syntax_only);
}

NodePtr random_expand(const IoGrammar& g, const NtRef& ref, Rng& rng, int depth_budget) {
  auto n = std::make_shared<Node>(*random_expand(g, ref.rule, rng, depth_budget));
  n->sender = ref.sender;
  n->receiver = ref.receiver;
  return n;
}

std::vector<TreePath> mutable_points(const IoGrammar& g, const NodePtr& t) {
  std::vector<TreePath> out;
  TreePath p;
  collect_points(g, t, p, out);
  return out;
}

NodePtr crossover(const IoGrammar& g, const NodePtr& a, const NodePtr& b, Rng& rng) {
  auto pa = mutable_points(g, a);
  auto pb = mutable_points(g, b);
  std::vector<std::pair<TreePath, TreePath>> pairs;
  for (const auto& x : pa) {
    const Node* nx = node_at(a, x);
    for (const auto& y : pb) {
      const Node* ny = node_at(b, y);
      if (nx->rule == ny->rule) pairs.emplace_back(x, y);
    }
  }
  if (pairs.empty()) throw NoCommonPoint("no shared writable nonterminal");
  const auto& [x, y] = pick(pairs, rng);
  return replace_at(a, x, relabel(subtree_at(b, y), *node_at(a, x)));
}

NodePtr mutate(const IoGrammar& g, const NodePtr& t, Rng& rng, int depth_budget) {
  auto points = mutable_points(g, t);
  if (points.empty()) throw NothingMutable("every subtree is read-only");
  const TreePath& p = pick(points, rng);
  const Node* old = node_at(t, p);
  NodePtr before = subtree_at(t, p);
  NodePtr fresh;
  for (int tries = 0; tries < 8; ++tries) {
    fresh = random_expand(g, old->rule, rng, depth_budget);
    if (!structurally_equal(fresh, before) || yield_bits(fresh) != yield_bits(before)) break;
  }
  return replace_at(t, p, relabel(fresh, *old));
}

namespace {

bool hits(const NodePtr& t, const std::set<KPath>& hint, int k) {
  for (const auto& p : k_paths(t, k))
    if (hint.count(p)) return true;
  return false;
}

// Rewrites the writable side of a failed equality with the bytes of the
// frozen side, when those bytes parse under the writable node's rule.
std::optional<NodePtr> repair(const IoGrammar& g, const NodePtr& t, const FailedEquality& f) {
  const Node* l = node_at(t, f.lhs_path);
  const Node* r = node_at(t, f.rhs_path);
  if (!l || !r) return std::nullopt;
  const bool lw = !has_read_only(subtree_at(t, f.lhs_path));
  const bool rw = !has_read_only(subtree_at(t, f.rhs_path));
  const TreePath* dst = nullptr;
  NodePtr src;
  if (lw && !rw) {
    dst = &f.lhs_path;
    src = f.rhs;
  } else if (rw && !lw) {
    dst = &f.rhs_path;
    src = f.lhs;
  } else if (lw && rw) {
    dst = &f.lhs_path;
    src = f.rhs;
  } else {
    return std::nullopt;
  }
  const Node* target = node_at(t, *dst);
  if (target->rule < 0 || !fully_expanded(src)) return std::nullopt;
  try {
    auto po = parse(g, target->rule, yield_bits(src), ParseMode::Complete, Provenance::Generated);
    return replace_at(t, *dst, relabel(po.trees.front(), *target));
  } catch (const NoParse&) {
    return std::nullopt;
  }
}

struct Member {
  NodePtr tree;
  Verdict verdict;
  std::vector<FailedEquality> failed;
};

}  // namespace

Generated generate_message(const IoGrammar& g, const Prediction& pred, const GaParams& params, Rng& rng,
                           const std::set<KPath>* coverage_hint) {
  NodePtr history = set_read_only(pred.tree);
  TreePath site = pred.hook;
  if (const Node* h = node_at(history, site); h && h->expanded()) {
    std::size_t i = 0;
    while (i < h->children.size() && h->children[i]->expanded()) ++i;
    site.push_back(static_cast<int>(i));
  }
  const Node* ph = node_at(history, site);
  NtRef ref{pred.nonterminal, ph->sender, ph->receiver, pred.rule};

  int hint_k = 0;
  if (coverage_hint)
    for (const auto& p : *coverage_hint) hint_k = std::max(hint_k, static_cast<int>(p.size()));
  bool relaxed = !coverage_hint || coverage_hint->empty();
  int misses = 0;
  int candidates = 0;
  std::optional<Member> first_satisfying;
  std::optional<Member> accepted;
  bool accepted_hit = false;

  auto score = [&](NodePtr tree) {
    Member m{std::move(tree), {}, {}};
    m.verdict = evaluate_all(g, m.tree, &m.failed);
    return m;
  };
  // Returns true once a candidate is accepted.
  auto consider = [&](const Member& m) {
    ++candidates;
    if (!m.verdict.satisfied) return false;
    if (relaxed) {
      accepted = m;
      return true;
    }
    if (hits(m.tree, *coverage_hint, hint_k)) {
      accepted = m;
      accepted_hit = true;
      return true;
    }
    if (!first_satisfying) first_satisfying = m;
    if (++misses >= params.hint_attempts) {
      relaxed = true;
      accepted = first_satisfying;
      return true;
    }
    return false;
  };
  auto fresh = [&]() {
    NodePtr msg = random_expand(g, ref, rng, params.depth_budget);
    return score(append_at(history, pred.hook, msg));
  };

  std::vector<Member> pop;
  const int n = std::max(1, params.population);
  for (int i = 0; i < n && !accepted; ++i) {
    pop.push_back(fresh());
    if (consider(pop.back())) break;
  }
  auto better = [](const Member& a, const Member& b) { return a.verdict.fitness > b.verdict.fitness; };
  auto tournament = [&]() -> const Member& {
    const Member* best = &pick(pop, rng);
    for (int i = 1; i < params.tournament; ++i) {
      const Member& c = pick(pop, rng);
      if (better(c, *best)) best = &c;
    }
    return *best;
  };
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  for (int gen = 0; gen < params.generations && !accepted; ++gen) {
    std::stable_sort(pop.begin(), pop.end(), better);
    std::vector<Member> next(pop.begin(), pop.begin() + std::min<std::size_t>(pop.size(), std::max(0, params.elitism)));
    while (static_cast<int>(next.size()) < n && !accepted) {
      NodePtr child = tournament().tree;
      const Member& parent = tournament();
      if (!parent.failed.empty() && coin(rng) < 0.5) {
        if (auto fixed = repair(g, parent.tree, pick(parent.failed, rng))) child = *fixed;
      } else if (coin(rng) < params.crossover_rate) {
        try {
          child = crossover(g, child, parent.tree, rng);
        } catch (const NoCommonPoint&) {
        }
      }
      if (coin(rng) < params.mutation_rate) {
        try {
          child = mutate(g, child, rng, params.depth_budget);
        } catch (const NothingMutable&) {
        }
      }
      next.push_back(score(child));
      if (consider(next.back())) break;
    }
    if (!accepted) {
      // Fresh blood keeps hint search alive once the population converges.
      if (!relaxed && !next.empty()) next.back() = fresh(), consider(next.back());
      pop = std::move(next);
    }
  }
  if (!accepted && first_satisfying) accepted = first_satisfying;
  if (!accepted) {
    const Member& best = *std::max_element(pop.begin(), pop.end(), [&](const Member& a, const Member& b) {
      return a.verdict.fitness < b.verdict.fitness;
    });
    throw NoSatisfyingCandidate(best.tree, best.verdict);
  }

  Generated out;
  out.tree = accepted->tree;
  out.message = subtree_at(out.tree, site);
  out.verdict = accepted->verdict;
  out.hint_hit = accepted_hit;
  out.candidates = candidates;
  std::vector<Effect> effects;
  CallContext ctx{&g, &rng, &effects};
  absorb(g, out.message, ctx);
  out.effects = std::move(effects);
  return out;
}

}  // namespace iog
