#include "iog/earley.hpp"

#include <algorithm>

#include "earley_core.hpp"

namespace iog {

namespace detail {

class ByteLevel {
public:
  ByteLevel(const IoGrammar& g, const BitString& in, Provenance prov) : g_(g), in_(in), prov_(prov) {}

  std::size_t size() const { return in_.size(); }
  Provenance provenance() const { return prov_; }
  bool terminal(const Element& e) const { return !std::holds_alternative<NtRef>(e); }
  bool nullable(int r) const { return g_.nullable(r); }

  std::optional<std::size_t> scan(const Element& e, std::size_t pos) const {
    const std::size_t n = in_.size();
    if (auto* lit = std::get_if<Literal>(&e)) {
      std::size_t bits = lit->bytes.size() * 8;
      if (pos + bits > n) return std::nullopt;
      for (std::size_t k = 0; k < lit->bytes.size(); ++k)
        if (in_.byte_at(pos + 8 * k) != static_cast<std::uint8_t>(lit->bytes[k])) return std::nullopt;
      return pos + bits;
    }
    if (auto* re = std::get_if<RegexTerm>(&e)) return re->re->longest_match(in_, pos);
    const auto& b = std::get<BitField>(e);
    auto w = static_cast<std::size_t>(b.width);
    if (pos + w > n) return std::nullopt;
    if (b.value && in_.read(pos, b.width) != *b.value) return std::nullopt;
    return pos + w;
  }

  // The rest of the input is a proper prefix of some match of `e`.
  bool partial(const Element& e, std::size_t pos) const {
    const std::size_t n = in_.size();
    if (pos >= n) return false;
    std::size_t rem = n - pos;
    if (auto* lit = std::get_if<Literal>(&e)) {
      if (rem >= lit->bytes.size() * 8) return false;
      BitString want = BitString::from_bytes(lit->bytes);
      for (std::size_t b = 0; b < rem; ++b)
        if (in_.bit(pos + b) != want.bit(b)) return false;
      return true;
    }
    if (auto* re = std::get_if<RegexTerm>(&e)) return re->re->viable_prefix(in_, pos);
    const auto& b = std::get<BitField>(e);
    if (rem >= static_cast<std::size_t>(b.width)) return false;
    if (!b.value) return true;
    return in_.read(pos, static_cast<int>(rem)) == (*b.value >> (static_cast<std::size_t>(b.width) - rem));
  }

  NodePtr leaf(const Element&, std::size_t from, std::size_t to) const {
    return make_terminal(in_.slice(from, to), prov_);
  }

private:
  const IoGrammar& g_;
  const BitString& in_;
  Provenance prov_;
};

}  // namespace detail

namespace {

std::size_t tree_size(const NodePtr& t) {
  std::size_t n = 1;
  for (const auto& c : t->children) n += tree_size(c);
  return n;
}

}  // namespace

ParseOutcome parse(const IoGrammar& g, int start, const BitString& input, ParseMode mode, Provenance prov) {
  detail::ByteLevel lv(g, input, prov);
  detail::Earley<detail::ByteLevel> e(g, lv, start);
  e.run();
  const std::size_t n = input.size();
  ParseOutcome out;
  out.mode = mode;
  auto collect = [&](NodePtr t) {
    if (out.trees.size() >= kMaxTrees) {
      out.capped = true;
      return false;
    }
    out.trees.push_back(std::move(t));
    return true;
  };

  if (mode == ParseMode::Complete) {
    if (e.accepts(n)) e.complete_trees(n, collect);
    if (out.trees.empty()) throw NoParse(std::min(e.furthest(), n) / 8);
    out.consumed = n;
    return out;
  }

  if (n == 0) {
    NtRef root;
    root.rule = start;
    out.trees.push_back(make_placeholder(root));
    return out;
  }

  std::vector<NodePtr> found;
  bool stop = false;
  auto add_chains = [&](const detail::Item& leaf, std::size_t pos, NodePtr pending) {
    e.chains(leaf, pos, [&](const std::vector<detail::Link>& chain) {
      auto [tree, path] = e.build_chain(chain, pending);
      if (tree) found.push_back(tree);
      if (found.size() >= 4 * kMaxTrees) {
        stop = true;
        return false;
      }
      return true;
    });
  };
  if (e.accepts(n)) e.complete_trees(n, [&](NodePtr t) {
    found.push_back(std::move(t));
    return found.size() < kMaxTrees;
  });
  for (const auto& it : e.chart(n).items) {
    if (stop) break;
    const Element* nx = e.next(it);
    if (nx && lv.terminal(*nx)) add_chains(it, n, nullptr);
  }
  for (std::size_t p = 0; p < n && !stop; ++p) {
    for (const auto& it : e.chart(p).items) {
      if (stop) break;
      const Element* nx = e.next(it);
      if (!nx || !lv.terminal(*nx)) continue;
      auto end = lv.scan(*nx, p);
      if (end && *end == n) continue;
      if (!lv.partial(*nx, p)) continue;
      auto pending = std::make_shared<Node>();
      pending->terminal = true;
      pending->value = input.slice(p, n);
      pending->provenance = prov;
      add_chains(it, p, pending);
    }
  }
  if (found.empty()) throw NoParse(std::min(e.furthest(), n) / 8);
  std::stable_sort(found.begin(), found.end(),
                   [](const NodePtr& a, const NodePtr& b) { return tree_size(a) < tree_size(b); });
  if (found.size() > kMaxTrees) {
    found.resize(kMaxTrees);
    out.capped = true;
  }
  out.trees = std::move(found);
  out.consumed = n;
  return out;
}

ParseOutcome parse(const IoGrammar& g, std::string_view start, std::string_view input, ParseMode mode) {
  int r = g.rule_index(start);
  if (r < 0) throw UndefinedNonterminal(std::string(start), {});
  return parse(g, r, BitString::from_bytes(input), mode);
}

Recognition recognize(const IoGrammar& g, int start, const BitString& input) {
  detail::ByteLevel lv(g, input, Provenance::Parsed);
  detail::Earley<detail::ByteLevel> e(g, lv, start);
  e.run();
  Recognition r;
  const std::size_t n = input.size();
  r.furthest = std::min(e.furthest(), n);
  for (std::size_t j = 8; j <= n; j += 8)
    if (e.accepts(j)) r.complete_ends.push_back(j);
  for (const auto& it : e.chart(n).items) {
    const Element* nx = e.next(it);
    if (nx && lv.terminal(*nx)) {
      r.viable = true;
      break;
    }
  }
  for (std::size_t p = 0; p < n && !r.viable; ++p) {
    for (const auto& it : e.chart(p).items) {
      const Element* nx = e.next(it);
      if (!nx || !lv.terminal(*nx)) continue;
      auto end = lv.scan(*nx, p);
      if (end && *end == n) continue;
      if (lv.partial(*nx, p)) {
        r.viable = true;
        break;
      }
    }
  }
  return r;
}

}  // namespace iog
