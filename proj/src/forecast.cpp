#include "iog/forecast.hpp"

#include <algorithm>
#include <map>

#include "earley_core.hpp"

namespace iog {

namespace detail {

// Message refs are the terminals; each input symbol is one exchanged message.
class MessageLevel {
public:
  MessageLevel(const IoGrammar& g, std::vector<NodePtr> tokens) : g_(g), tokens_(std::move(tokens)) {}

  std::size_t size() const { return tokens_.size(); }
  Provenance provenance() const { return Provenance::Parsed; }
  bool terminal(const Element& e) const {
    auto* ref = as_ref(e);
    return !ref || ref->is_message();
  }
  bool nullable(int r) const { return g_.session_nullable(r); }

  std::optional<std::size_t> scan(const Element& e, std::size_t pos) const {
    auto* ref = as_ref(e);
    if (!ref || pos >= tokens_.size()) return std::nullopt;
    const Node& t = *tokens_[pos];
    if (t.rule != ref->rule || t.sender != ref->sender) return std::nullopt;
    if (ref->receiver && t.receiver && *ref->receiver != *t.receiver) return std::nullopt;
    return pos + 1;
  }

  NodePtr leaf(const Element&, std::size_t from, std::size_t) const { return tokens_[from]; }

private:
  const IoGrammar& g_;
  std::vector<NodePtr> tokens_;
};

}  // namespace detail

namespace {

std::vector<NodePtr> tokens_of(const NodePtr& t) {
  std::vector<NodePtr> out;
  for (auto& m : message_nodes(t)) out.push_back(m.node);
  return out;
}

constexpr std::size_t kChainsPerLeaf = 8;

}  // namespace

std::vector<Prediction> predict(const IoGrammar& g, const NodePtr& t) {
  detail::MessageLevel lv(g, tokens_of(t));
  detail::Earley<detail::MessageLevel> e(g, lv, g.start());
  e.run();
  const std::size_t n = lv.size();
  std::vector<Prediction> out;
  std::vector<detail::Item> leaves;
  for (const auto& it : e.chart(n).items) {
    const Element* nx = e.next(it);
    if (!nx) continue;
    auto* ref = as_ref(*nx);
    if (ref && ref->is_message()) leaves.push_back(it);
  }
  if (leaves.empty()) return out;
  std::size_t per_leaf = std::max<std::size_t>(1, std::min(kChainsPerLeaf, kMaxTrees / leaves.size()));
  for (const auto& leaf : leaves) {
    std::size_t taken = 0;
    const NtRef& ref = *as_ref(*e.next(leaf));
    e.chains(leaf, n, [&](const std::vector<detail::Link>& chain) {
      auto [tree, path] = e.build_chain(chain, nullptr);
      if (!tree) return true;
      Prediction p;
      p.tree = tree;
      p.hook = path;
      p.sender = *ref.sender;
      p.receiver = ref.receiver;
      p.nonterminal = ref.name;
      p.rule = ref.rule;
      p.site = {leaf.rule, leaf.alt, leaf.dot};
      for (std::size_t c = chain.size(); c-- > 0;)
        p.stack.push_back({chain[c].item.rule, chain[c].item.alt, chain[c].item.dot});
      out.push_back(std::move(p));
      return ++taken < per_leaf;
    });
  }
  return out;
}

bool is_end(const IoGrammar& g, const NodePtr& t) {
  detail::MessageLevel lv(g, tokens_of(t));
  detail::Earley<detail::MessageLevel> e(g, lv, g.start());
  e.run();
  return e.accepts(lv.size());
}

NodePtr close_session(const IoGrammar& g, const NodePtr& t) {
  detail::MessageLevel lv(g, tokens_of(t));
  detail::Earley<detail::MessageLevel> e(g, lv, g.start());
  e.run();
  if (!e.accepts(lv.size())) return nullptr;
  NodePtr first, out;
  e.complete_trees(lv.size(), [&](NodePtr tree) {
    if (!first) first = tree;
    if (!is_prefix_tree(t, tree)) return true;
    out = std::move(tree);
    return false;
  });
  return out ? out : first;
}

ParsedMessage parse_message(const IoGrammar& g, const std::vector<Prediction>& predictions, FragmentSource& src,
                            std::chrono::milliseconds first_wait, std::chrono::milliseconds extension_wait) {
  if (predictions.empty()) throw NoViablePrediction("no predictions", 0);
  Bytes buffer;
  std::vector<bool> alive(predictions.size(), true);
  std::size_t fragments = 0;

  auto pull = [&](std::chrono::milliseconds wait) {
    auto f = src.next(wait);
    if (!f) return false;
    buffer += *f;
    ++fragments;
    return true;
  };

  if (!pull(first_wait)) throw ParseTimeout("no message within the response timeout");
  for (;;) {
    BitString bits = BitString::from_bytes(buffer);
    std::map<int, Recognition> by_rule;
    for (std::size_t i = 0; i < predictions.size(); ++i)
      if (alive[i] && !by_rule.count(predictions[i].rule))
        by_rule[predictions[i].rule] = recognize(g, predictions[i].rule, bits);
    std::size_t best_end = 0;
    std::size_t best = predictions.size();
    bool extendable = false;
    bool any = false;
    std::size_t reach = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      if (!alive[i]) continue;
      const Recognition& r = by_rule[predictions[i].rule];
      reach = std::max(reach, r.furthest / 8);
      if (!r.viable && r.complete_ends.empty()) {
        alive[i] = false;
        continue;
      }
      any = true;
      extendable |= r.viable;
      if (!r.complete_ends.empty() && r.complete_ends.back() > best_end) {
        best_end = r.complete_ends.back();
        best = i;
      }
    }
    if (!any) {
      src.unread(buffer);
      throw NoViablePrediction("bytes match none of the predicted messages", reach);
    }
    if (best < predictions.size()) {
      if (!extendable || !pull(extension_wait)) {
        std::size_t used = best_end / 8;
        if (used < buffer.size()) src.unread(buffer.substr(used));
        const Prediction& p = predictions[best];
        auto outcome = parse(g, p.rule, BitString::from_bytes(buffer.substr(0, used)), ParseMode::Complete);
        auto msg = std::make_shared<Node>(*outcome.trees.front());
        msg->sender = p.sender;
        msg->receiver = p.receiver;
        return {p, msg, fragments};
      }
      continue;
    }
    if (!pull(first_wait)) {
      src.unread(buffer);
      throw ParseTimeout("incomplete message after " + std::to_string(buffer.size()) + " bytes");
    }
  }
}

}  // namespace iog
