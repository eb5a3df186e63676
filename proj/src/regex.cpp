#include "iog/regex.hpp"

#include <functional>

namespace iog {

struct Regex::Node {
  enum Kind { Chars, Concat, Alt, Repeat, Empty } kind = Empty;
  std::bitset<256> chars;
  std::vector<std::shared_ptr<Node>> kids;
  int min = 0;
  int max = -1;  // -1: unbounded
};

namespace {

using NodePtr = std::shared_ptr<Regex::Node>;

class PatternParser {
public:
  explicit PatternParser(std::string_view p) : p_(p) {}

  NodePtr parse() {
    auto n = alternation();
    if (i_ != p_.size()) fail("unexpected ')'");
    return n;
  }

private:
  [[noreturn]] void fail(const std::string& what) {
    throw RegexError("regex '" + std::string(p_) + "' at " + std::to_string(i_) + ": " + what);
  }

  bool eof() const { return i_ >= p_.size(); }

  NodePtr alternation() {
    auto first = concatenation();
    if (eof() || p_[i_] != '|') return first;
    auto alt = std::make_shared<Regex::Node>();
    alt->kind = Regex::Node::Alt;
    alt->kids.push_back(first);
    while (!eof() && p_[i_] == '|') {
      ++i_;
      alt->kids.push_back(concatenation());
    }
    return alt;
  }

  NodePtr concatenation() {
    auto cat = std::make_shared<Regex::Node>();
    cat->kind = Regex::Node::Concat;
    while (!eof() && p_[i_] != '|' && p_[i_] != ')') cat->kids.push_back(repetition());
    if (cat->kids.empty()) {
      cat->kind = Regex::Node::Empty;
    } else if (cat->kids.size() == 1) {
      return cat->kids.front();
    }
    return cat;
  }

  int number() {
    if (eof() || !std::isdigit(static_cast<unsigned char>(p_[i_]))) fail("expected number");
    int v = 0;
    while (!eof() && std::isdigit(static_cast<unsigned char>(p_[i_]))) v = v * 10 + (p_[i_++] - '0');
    return v;
  }

  NodePtr repetition() {
    auto atom_node = atom();
    while (!eof()) {
      char c = p_[i_];
      int lo, hi;
      if (c == '*') { lo = 0; hi = -1; ++i_; }
      else if (c == '+') { lo = 1; hi = -1; ++i_; }
      else if (c == '?') { lo = 0; hi = 1; ++i_; }
      else if (c == '{') {
        ++i_;
        lo = number();
        hi = lo;
        if (!eof() && p_[i_] == ',') {
          ++i_;
          hi = (!eof() && p_[i_] == '}') ? -1 : number();
        }
        if (eof() || p_[i_] != '}') fail("expected '}'");
        ++i_;
        if (hi >= 0 && hi < lo) fail("bad repetition bounds");
      } else {
        break;
      }
      auto rep = std::make_shared<Regex::Node>();
      rep->kind = Regex::Node::Repeat;
      rep->min = lo;
      rep->max = hi;
      rep->kids.push_back(atom_node);
      atom_node = rep;
    }
    return atom_node;
  }

  int escape_char(std::bitset<256>& set) {
    // Consumes the character after '\'; returns a byte, or -1 if `set` was filled.
    if (eof()) fail("dangling escape");
    char c = p_[i_++];
    switch (c) {
      case 'r': return '\r';
      case 'n': return '\n';
      case 't': return '\t';
      case '0': return 0;
      case 'x': {
        if (i_ + 2 > p_.size()) fail("short \\x escape");
        int v = 0;
        for (int k = 0; k < 2; ++k) {
          char h = p_[i_++];
          int d = std::isdigit(static_cast<unsigned char>(h)) ? h - '0'
                  : (h >= 'a' && h <= 'f') ? h - 'a' + 10
                  : (h >= 'A' && h <= 'F') ? h - 'A' + 10 : -1;
          if (d < 0) fail("bad \\x escape");
          v = v * 16 + d;
        }
        return v;
      }
      case 'd':
        for (int b = '0'; b <= '9'; ++b) set.set(b);
        return -1;
      case 'w':
        for (int b = 0; b < 256; ++b)
          if (std::isalnum(b) || b == '_') set.set(b);
        return -1;
      case 's':
        for (char b : std::string_view(" \t\r\n\f\v")) set.set(static_cast<unsigned char>(b));
        return -1;
      default: return static_cast<unsigned char>(c);
    }
  }

  NodePtr chars(const std::bitset<256>& set) {
    auto n = std::make_shared<Regex::Node>();
    n->kind = Regex::Node::Chars;
    n->chars = set;
    return n;
  }

  NodePtr atom() {
    char c = p_[i_];
    if (c == '(') {
      ++i_;
      if (p_.substr(i_, 2) == "?:") i_ += 2;
      auto inner = alternation();
      if (eof() || p_[i_] != ')') fail("expected ')'");
      ++i_;
      return inner;
    }
    if (c == '*' || c == '+' || c == '?' || c == '{') fail("nothing to repeat");
    std::bitset<256> set;
    if (c == '.') {
      ++i_;
      set.set();
      return chars(set);
    }
    if (c == '[') return char_class();
    ++i_;
    if (c == '\\') {
      int v = escape_char(set);
      if (v >= 0) set.set(v);
      return chars(set);
    }
    set.set(static_cast<unsigned char>(c));
    return chars(set);
  }

  NodePtr char_class() {
    ++i_;  // '['
    bool negate = false;
    if (!eof() && p_[i_] == '^') { negate = true; ++i_; }
    std::bitset<256> set;
    bool first = true;
    while (!eof() && (p_[i_] != ']' || first)) {
      first = false;
      int lo;
      if (p_[i_] == '\\') {
        ++i_;
        lo = escape_char(set);
        if (lo < 0) continue;
      } else {
        lo = static_cast<unsigned char>(p_[i_++]);
      }
      if (i_ + 1 < p_.size() && p_[i_] == '-' && p_[i_ + 1] != ']') {
        ++i_;
        int hi;
        if (p_[i_] == '\\') {
          ++i_;
          std::bitset<256> dummy;
          hi = escape_char(dummy);
          if (hi < 0) fail("class shorthand as range bound");
        } else {
          hi = static_cast<unsigned char>(p_[i_++]);
        }
        if (hi < lo) fail("reversed range");
        for (int b = lo; b <= hi; ++b) set.set(b);
      } else {
        set.set(lo);
      }
    }
    if (eof()) fail("unterminated class");
    ++i_;  // ']'
    if (negate) set.flip();
    return chars(set);
  }

  std::string_view p_;
  std::size_t i_ = 0;
};

}  // namespace

Regex Regex::compile(std::string_view pattern) {
  Regex re;
  re.pattern_ = std::string(pattern);
  auto ast = PatternParser(pattern).parse();
  re.ast_ = ast;

  // Thompson construction over fragments with dangling (state, edge) holes.
  auto& states = re.states_;
  states.reserve(256);
  struct Hole { int state; int which; };
  struct F { int start; std::vector<Hole> holes; };
  auto new_state = [&](State s) {
    states.push_back(s);
    return static_cast<int>(states.size() - 1);
  };
  auto patch = [&](const std::vector<Hole>& holes, int target) {
    for (auto h : holes) (h.which == 1 ? states[h.state].out1 : states[h.state].out2) = target;
  };

  std::function<F(const Node&)> build = [&](const Node& n) -> F {
    switch (n.kind) {
      case Node::Empty: {
        int s = new_state({State::Split, -1, -1, -2});
        return {s, {{s, 1}}};
      }
      case Node::Chars: {
        re.sets_.push_back(n.chars);
        int s = new_state({State::Set, static_cast<int>(re.sets_.size() - 1), -1, -1});
        return {s, {{s, 1}}};
      }
      case Node::Concat: {
        F f = build(*n.kids[0]);
        for (std::size_t k = 1; k < n.kids.size(); ++k) {
          F g = build(*n.kids[k]);
          patch(f.holes, g.start);
          f.holes = std::move(g.holes);
        }
        return f;
      }
      case Node::Alt: {
        F f = build(*n.kids[0]);
        for (std::size_t k = 1; k < n.kids.size(); ++k) {
          F g = build(*n.kids[k]);
          int s = new_state({State::Split, -1, f.start, g.start});
          f.start = s;
          f.holes.insert(f.holes.end(), g.holes.begin(), g.holes.end());
        }
        return f;
      }
      case Node::Repeat: {
        // Mandatory copies, then either optional copies or a star loop.
        F result{-1, {}};
        auto append = [&](F g) {
          if (result.start < 0) {
            result = std::move(g);
          } else {
            patch(result.holes, g.start);
            result.holes = std::move(g.holes);
          }
        };
        for (int k = 0; k < n.min; ++k) append(build(*n.kids[0]));
        if (n.max < 0) {
          F body = build(*n.kids[0]);
          int s = new_state({State::Split, -1, body.start, -1});
          patch(body.holes, s);
          append(F{s, {{s, 2}}});
        } else {
          std::vector<Hole> skips;
          for (int k = n.min; k < n.max; ++k) {
            F body = build(*n.kids[0]);
            int s = new_state({State::Split, -1, body.start, -1});
            F opt{s, body.holes};
            opt.holes.push_back({s, 2});
            append(std::move(opt));
          }
          if (result.start < 0) {
            int s = new_state({State::Split, -1, -1, -2});
            result = F{s, {{s, 1}}};
          }
        }
        return result;
      }
    }
    throw RegexError("unreachable");
  };

  F f = build(*ast);
  int match = new_state({State::Match, -1, -1, -1});
  patch(f.holes, match);
  re.start_ = f.start;
  return re;
}

void Regex::add_state(std::vector<int>& list, std::vector<unsigned>& mark, unsigned gen, int s) const {
  if (s < 0 || mark[s] == gen) return;
  mark[s] = gen;
  const State& st = states_[s];
  if (st.kind == State::Split) {
    add_state(list, mark, gen, st.out1);
    add_state(list, mark, gen, st.out2);
    return;
  }
  list.push_back(s);
}

namespace {
struct Sim {
  std::vector<int> cur, next;
  std::vector<unsigned> mark;
  unsigned gen = 0;
};
}  // namespace

std::optional<std::size_t> Regex::longest_match(const BitString& in, std::size_t pos) const {
  Sim sim;
  sim.mark.assign(states_.size(), 0);
  add_state(sim.cur, sim.mark, ++sim.gen, start_);
  std::optional<std::size_t> best;
  std::size_t p = pos;
  while (true) {
    for (int s : sim.cur)
      if (states_[s].kind == State::Match) best = p;
    if (sim.cur.empty() || p + 8 > in.size()) break;
    std::uint8_t b = in.byte_at(p);
    sim.next.clear();
    ++sim.gen;
    for (int s : sim.cur) {
      const State& st = states_[s];
      if (st.kind == State::Set && sets_[st.set].test(b)) add_state(sim.next, sim.mark, sim.gen, st.out1);
    }
    std::swap(sim.cur, sim.next);
    p += 8;
  }
  return best;
}

bool Regex::viable_prefix(const BitString& in, std::size_t pos) const {
  Sim sim;
  sim.mark.assign(states_.size(), 0);
  add_state(sim.cur, sim.mark, ++sim.gen, start_);
  std::size_t p = pos;
  while (p + 8 <= in.size()) {
    std::uint8_t b = in.byte_at(p);
    sim.next.clear();
    ++sim.gen;
    for (int s : sim.cur) {
      const State& st = states_[s];
      if (st.kind == State::Set && sets_[st.set].test(b)) add_state(sim.next, sim.mark, sim.gen, st.out1);
    }
    std::swap(sim.cur, sim.next);
    if (sim.cur.empty()) return false;
    p += 8;
  }
  return p == in.size() && !sim.cur.empty();
}

bool Regex::full_match(std::string_view bytes) const {
  auto in = BitString::from_bytes(bytes);
  auto m = longest_match(in, 0);
  return m && *m == in.size();
}

Bytes Regex::generate(Rng& rng) const {
  Bytes out;
  std::function<void(const Node&)> gen = [&](const Node& n) {
    switch (n.kind) {
      case Node::Empty: return;
      case Node::Chars: {
        std::vector<int> printable, all;
        for (int b = 0; b < 256; ++b) {
          if (!n.chars.test(b)) continue;
          all.push_back(b);
          if (b >= 0x20 && b < 0x7f) printable.push_back(b);
        }
        const auto& pool = printable.empty() ? all : printable;
        if (pool.empty()) throw RegexError("empty character class in '" + pattern_ + "'");
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        out.push_back(static_cast<char>(pool[pick(rng)]));
        return;
      }
      case Node::Concat:
        for (auto& k : n.kids) gen(*k);
        return;
      case Node::Alt: {
        std::uniform_int_distribution<std::size_t> pick(0, n.kids.size() - 1);
        gen(*n.kids[pick(rng)]);
        return;
      }
      case Node::Repeat: {
        int hi = n.max < 0 ? n.min + 8 : n.max;
        std::uniform_int_distribution<int> count(n.min, hi);
        int c = count(rng);
        for (int k = 0; k < c; ++k) gen(*n.kids[0]);
        return;
      }
    }
  };
  gen(*ast_);
  return out;
}

}  // namespace iog
