#include "iog/constrain.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <functional>

namespace iog {

std::optional<std::int64_t> Value::as_int() const {
  if (kind == Int) return i;
  if (b.empty() || b.size() > 18) return std::nullopt;
  std::size_t k = b[0] == '-' ? 1 : 0;
  if (k == b.size()) return std::nullopt;
  std::int64_t v = 0;
  for (; k < b.size(); ++k) {
    if (!std::isdigit(static_cast<unsigned char>(b[k]))) return std::nullopt;
    v = v * 10 + (b[k] - '0');
  }
  return b[0] == '-' ? -v : v;
}

// ---- registry -----------------------------------------------------------

void FunctionRegistry::add(const std::string& name, HostFunction fn, bool pure) {
  fns_[name] = Entry{std::move(fn), pure};
}

const HostFunction* FunctionRegistry::find(const std::string& name) const {
  auto it = fns_.find(name);
  return it == fns_.end() ? nullptr : &it->second.fn;
}

bool FunctionRegistry::pure(const std::string& name) const {
  auto it = fns_.find(name);
  return it != fns_.end() && it->second.pure;
}

std::vector<std::string> FunctionRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : fns_) out.push_back(k);
  return out;
}

namespace {

void arity(const std::string& name, const std::vector<Value>& args, std::size_t n) {
  if (args.size() != n)
    throw FunctionError(name, "expects " + std::to_string(n) + " argument(s), got " + std::to_string(args.size()));
}

std::string rule_name(const IoGrammar& g, const Node& n) {
  return n.rule >= 0 && !n.terminal ? g.rule(n.rule).lhs : std::string();
}

void find_named(const IoGrammar& g, const NodePtr& n, const std::string& name, std::vector<NodePtr>& out) {
  if (!n->terminal && n->expanded() && rule_name(g, *n) == name) out.push_back(n);
  for (const auto& c : n->children) find_named(g, c, name, out);
}

Bytes first_yield(const IoGrammar& g, const NodePtr& n, const std::string& name) {
  std::vector<NodePtr> found;
  find_named(g, n, name, found);
  if (found.empty() || !fully_expanded(found.front())) return {};
  return yield_bits(found.front()).bytes();
}

// Single-hop CNAME: some CNAME record owned by the question name points to
// the owner of an A record in the same response.
Value verify_transitive(const std::vector<Value>& args, CallContext& ctx) {
  arity("verify_transitive", args, 2);
  if (!ctx.grammar || !args[0].node || !args[1].node)
    throw FunctionError("verify_transitive", "arguments must be tree nodes");
  const IoGrammar& g = *ctx.grammar;
  Bytes qname = first_yield(g, args[0].node, "q_name");
  std::vector<NodePtr> answers;
  find_named(g, args[1].node, "answer_an", answers);
  const Bytes cname_type("\x00\x05", 2);
  const Bytes a_type("\x00\x01", 2);
  for (const auto& c : answers) {
    if (!fully_expanded(c)) continue;
    if (first_yield(g, c, "q_name_optional") != qname || first_yield(g, c, "an_type") != cname_type) continue;
    Bytes target = first_yield(g, c, "rdata");
    if (target.size() < 2) continue;
    target = target.substr(2);  // skip rdlength
    for (const auto& a : answers) {
      if (a == c || !fully_expanded(a)) continue;
      if (first_yield(g, a, "q_name_optional") == target && first_yield(g, a, "an_type") == a_type)
        return Value::of_int(1);
    }
  }
  return Value::of_int(0);
}

}  // namespace

std::shared_ptr<const FunctionRegistry> FunctionRegistry::builtins() {
  static const std::shared_ptr<const FunctionRegistry> reg = [] {
    auto r = std::make_shared<FunctionRegistry>();
    r->add("len", [](const std::vector<Value>& a, CallContext&) {
      arity("len", a, 1);
      return Value::of_int(static_cast<std::int64_t>(a[0].bytes().size()));
    });
    r->add("int", [](const std::vector<Value>& a, CallContext&) {
      arity("int", a, 1);
      auto v = a[0].as_int();
      if (!v) throw FunctionError("int", "not a decimal number: '" + escape_bytes(a[0].bytes()) + "'");
      return Value::of_int(*v);
    });
    r->add("uint", [](const std::vector<Value>& a, CallContext&) {
      arity("uint", a, 1);
      if (a[0].kind == Value::Int) return a[0];
      if (a[0].b.size() > 8) throw FunctionError("uint", "more than 8 bytes");
      std::uint64_t v = 0;
      for (char c : a[0].b) v = (v << 8) | static_cast<std::uint8_t>(c);
      return Value::of_int(static_cast<std::int64_t>(v));
    });
    r->add("lower", [](const std::vector<Value>& a, CallContext&) {
      arity("lower", a, 1);
      Bytes b = a[0].bytes();
      for (auto& c : b) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      return Value::of_bytes(b);
    });
    r->add("sha256", [](const std::vector<Value>& a, CallContext&) {
      arity("sha256", a, 1);
      Bytes in = a[0].bytes();
      unsigned char md[EVP_MAX_MD_SIZE];
      unsigned int len = 0;
      if (!EVP_Digest(in.data(), in.size(), md, &len, EVP_sha256(), nullptr))
        throw FunctionError("sha256", "digest failed");
      return Value::of_bytes(Bytes(reinterpret_cast<char*>(md), len));
    });
    r->add("crc32", [](const std::vector<Value>& a, CallContext&) {
      arity("crc32", a, 1);
      Bytes in = a[0].bytes();
      uLong c = ::crc32(0L, reinterpret_cast<const Bytef*>(in.data()), static_cast<uInt>(in.size()));
      return Value::of_int(static_cast<std::int64_t>(c));
    });
    r->add("concat", [](const std::vector<Value>& a, CallContext&) {
      Bytes out;
      for (const auto& v : a) out += v.bytes();
      return Value::of_bytes(out);
    });
    r->add("count", [](const std::vector<Value>& a, CallContext&) {
      return Value::of_int(static_cast<std::int64_t>(a.size()));
    });
    r->add(
        "randint",
        [](const std::vector<Value>& a, CallContext& ctx) {
          arity("randint", a, 2);
          auto lo = a[0].as_int(), hi = a[1].as_int();
          if (!lo || !hi || *lo > *hi) throw FunctionError("randint", "bad bounds");
          if (!ctx.rng) throw FunctionError("randint", "no random source");
          std::uniform_int_distribution<std::int64_t> d(*lo, *hi);
          return Value::of_int(d(*ctx.rng));
        },
        false);
    r->add(
        "data_port",
        [](const std::vector<Value>& a, CallContext& ctx) {
          arity("data_port", a, 1);
          auto p = a[0].as_int();
          if (!p || *p < 1 || *p > 65535) throw FunctionError("data_port", "not a port number");
          if (ctx.effects) ctx.effects->push_back({Effect::SetPort, static_cast<int>(*p)});
          return Value::of_bytes(std::to_string(*p));
        },
        false);
    r->add("verify_transitive", verify_transitive);
    return r;
  }();
  return reg;
}

// ---- evaluation ---------------------------------------------------------

namespace {

struct Binding {
  NodePtr node;
  TreePath path;
};

struct Operand {
  NodePtr node;  // set for selector results that are nodes
  TreePath path;
  Value value;
  bool vacuous = false;
  std::string label;
};

struct Tally {
  double sat = 0;
  double total = 0;
  bool ok = true;
  std::vector<Violation> why;
  std::vector<FailedEquality> eqs;

  double ratio() const { return total == 0 ? 1.0 : sat / total; }
  void absorb(Tally&& o) {
    sat += o.sat;
    total += o.total;
    ok = ok && o.ok;
    if (why.size() < 16)
      for (auto& v : o.why) why.push_back(std::move(v));
    for (auto& e : o.eqs) eqs.push_back(std::move(e));
  }
};

class Evaluator {
public:
  Evaluator(const IoGrammar& g, const NodePtr& root, int id) : g_(g), root_(root), id_(id) {
    ctx_.grammar = &g;
  }

  Tally eval(const Expr& e, bool positive) {
    switch (e.kind) {
      case Expr::Not:
        return eval(e.children[0], !positive);
      case Expr::And:
      case Expr::Or:
        return (e.kind == Expr::And) == positive ? all_of(e.children, positive) : any_of(e.children, positive);
      case Expr::Forall:
      case Expr::Exists:
        return quantifier(e, positive, (e.kind == Expr::Forall) == positive);
      default:
        return atom(e, positive);
    }
  }

private:
  Tally all_of(const std::vector<Expr>& parts, bool positive) {
    Tally t;
    for (const auto& p : parts) t.absorb(eval(p, positive));
    return t;
  }

  static Tally pick(std::vector<Tally>& options) {
    if (options.empty()) {
      Tally t;
      t.total = 1;
      t.ok = false;
      return t;
    }
    for (auto& o : options)
      if (o.ok) {
        o.eqs.clear();
        return std::move(o);
      }
    std::size_t best = 0;
    for (std::size_t i = 1; i < options.size(); ++i)
      if (options[i].ratio() > options[best].ratio()) best = i;
    Tally t = std::move(options[best]);
    for (std::size_t i = 0; i < options.size(); ++i)
      if (i != best)
        for (auto& e : options[i].eqs) t.eqs.push_back(std::move(e));
    return t;
  }

  Tally any_of(const std::vector<Expr>& parts, bool positive) {
    std::vector<Tally> options;
    for (const auto& p : parts) options.push_back(eval(p, positive));
    return pick(options);
  }

  Tally quantifier(const Expr& e, bool positive, bool universal) {
    std::vector<Operand> domain = select(e.children[0], true);
    std::vector<Tally> parts;
    for (const auto& d : domain) {
      if (!d.node) continue;
      auto saved = env_.find(e.name) != env_.end() ? std::optional<Binding>(env_[e.name]) : std::nullopt;
      env_[e.name] = Binding{d.node, d.path};
      parts.push_back(eval(e.children[1], positive));
      if (saved) env_[e.name] = *saved;
      else env_.erase(e.name);
    }
    if (universal) {
      Tally t;
      for (auto& p : parts) t.absorb(std::move(p));
      return t;
    }
    return pick(parts);
  }

  // ---- selectors ----

  bool is_nonterminal_base(const std::string& name) const {
    return !env_.count(name) && g_.rule_index(strip(name)) >= 0;
  }

  static std::string strip(const std::string& name) {
    auto colon = name.rfind(':');
    return colon == std::string::npos ? name : name.substr(colon + 1);
  }

  bool matches(const Node& n, const std::string& name) const {
    if (n.terminal || !n.expanded() || n.rule < 0) return false;
    auto colon = name.rfind(':');
    if (colon == std::string::npos) return g_.rule(n.rule).lhs == name;
    if (g_.rule(n.rule).lhs != name.substr(colon + 1)) return false;
    return n.sender && *n.sender == name.substr(0, name.find(':'));
  }

  void find_all(const NodePtr& n, TreePath& path, const std::string& name, bool self,
                std::vector<Operand>& out) const {
    if (self && matches(*n, name)) out.push_back(Operand{n, path, {}, false, "<" + name + ">"});
    for (std::size_t i = 0; i < n->children.size(); ++i) {
      path.push_back(static_cast<int>(i));
      find_all(n->children[i], path, name, true, out);
      path.pop_back();
    }
  }

  std::vector<Operand> select(const Expr& e, bool keep_incomplete) {
    std::vector<Operand> cur;
    if (auto it = env_.find(e.name); it != env_.end()) {
      cur.push_back(Operand{it->second.node, it->second.path, {}, false, "<" + e.name + ">"});
    } else {
      if (g_.rule_index(strip(e.name)) < 0) throw SelectorError("unknown nonterminal <" + e.name + ">");
      TreePath p;
      find_all(root_, p, e.name, true, cur);
    }
    return apply_steps(std::move(cur), e.steps, keep_incomplete);
  }

  std::vector<Operand> apply_steps(std::vector<Operand> cur, const std::vector<SelectorStep>& steps,
                                   bool keep_incomplete) {
    for (const auto& s : steps) {
      std::vector<Operand> next;
      for (auto& o : cur) {
        if (!o.node) {
          next.push_back(o);
          continue;
        }
        switch (s.kind) {
          case SelectorStep::Descendant: {
            if (g_.rule_index(strip(s.name)) < 0) throw SelectorError("unknown nonterminal <" + s.name + ">");
            TreePath p = o.path;
            std::vector<Operand> found;
            find_all(o.node, p, s.name, false, found);
            for (auto& f : found) {
              f.label = o.label + "." + f.label;
              next.push_back(std::move(f));
            }
            break;
          }
          case SelectorStep::Index: {
            auto i = static_cast<std::size_t>(s.index);
            if (s.index < 0 || i >= o.node->children.size()) {
              if (!o.node->expanded()) next.push_back(Operand{nullptr, o.path, {}, true, o.label});
              break;
            }
            TreePath p = o.path;
            p.push_back(s.index);
            next.push_back(Operand{o.node->children[i], p, {}, false, o.label + "[" + std::to_string(s.index) + "]"});
            break;
          }
          case SelectorStep::Slice: {
            Operand v{nullptr, o.path, {}, false, o.label + "[" + std::to_string(s.from) + ":" +
                                                     (s.to >= 0 ? std::to_string(s.to) : "") + "]"};
            if (!fully_expanded(o.node)) {
              v.vacuous = true;
            } else {
              Bytes b = yield_bits(o.node).bytes();
              auto from = std::min<std::size_t>(static_cast<std::size_t>(s.from), b.size());
              auto to = s.to < 0 ? b.size() : std::min<std::size_t>(static_cast<std::size_t>(s.to), b.size());
              v.value = Value::of_bytes(from < to ? b.substr(from, to - from) : Bytes());
              v.value.node = o.node;
            }
            next.push_back(std::move(v));
            break;
          }
        }
      }
      cur = std::move(next);
    }
    for (auto& o : cur) {
      if (!o.node || o.vacuous) continue;
      if (fully_expanded(o.node)) {
        o.value = Value::of_bytes(yield_bits(o.node).bytes());
        o.value.node = o.node;
      } else if (!keep_incomplete) {
        o.vacuous = true;
      }
    }
    return cur;
  }

  // ---- operands ----

  std::vector<Operand> operands(const Expr& e) {
    switch (e.kind) {
      case Expr::Number: {
        Operand o;
        o.value = Value::of_int(e.number);
        o.label = render(e);
        return {o};
      }
      case Expr::String: {
        Operand o;
        o.value = Value::of_bytes(e.text);
        o.label = render(e);
        return {o};
      }
      case Expr::Selector: {
        auto out = select(e, false);
        return out;
      }
      case Expr::Call:
        return call(e);
      default: {
        // Nested boolean used as a value.
        Tally t = eval(e, true);
        Operand o;
        o.value = Value::of_int(t.ok ? 1 : 0);
        o.label = render(e);
        return {o};
      }
    }
  }

  std::vector<Operand> call(const Expr& e) {
    if (e.name == "count") {
      std::int64_t n = 0;
      for (const auto& a : e.children) {
        if (a.kind != Expr::Selector) throw FunctionError("count", "argument must be a selector");
        for (const auto& o : select(a, true))
          if (o.node) ++n;
      }
      Operand o;
      o.value = Value::of_int(n);
      o.label = render(e);
      return {o};
    }
    const HostFunction* fn = g_.functions() ? g_.functions()->find(e.name) : nullptr;
    if (!fn) throw FunctionError(e.name, "unknown function");
    std::vector<std::vector<Operand>> args;
    for (const auto& a : e.children) args.push_back(operands(a));
    std::vector<Operand> out;
    std::vector<Value> vals(args.size());
    std::function<void(std::size_t, bool, std::vector<Operand>&)> rec = [&](std::size_t k, bool vac,
                                                                          std::vector<Operand>& picked) {
      if (k == args.size()) {
        Operand o;
        o.label = render(e);
        if (vac) {
          o.vacuous = true;
        } else {
          o.value = (*fn)(vals, ctx_);
        }
        out.push_back(std::move(o));
        return;
      }
      for (auto& a : args[k]) {
        vals[k] = a.value;
        if (a.node) vals[k].node = a.node;
        picked.push_back(a);
        rec(k + 1, vac || a.vacuous, picked);
        picked.pop_back();
      }
    };
    std::vector<Operand> picked;
    rec(0, false, picked);
    return out;
  }

  static bool compare(const Value& a, const Value& b, const std::string& op) {
    int c;
    auto ai = a.as_int(), bi = b.as_int();
    if ((a.kind == Value::Int || b.kind == Value::Int) && ai && bi) {
      c = *ai < *bi ? -1 : (*ai > *bi ? 1 : 0);
    } else if (a.kind == Value::Int || b.kind == Value::Int) {
      if (op == "==") return false;
      if (op == "!=") return true;
      c = a.bytes().compare(b.bytes());
    } else {
      c = a.b.compare(b.b);
    }
    if (op == "==") return c == 0;
    if (op == "!=") return c != 0;
    if (op == "<") return c < 0;
    if (op == "<=") return c <= 0;
    if (op == ">") return c > 0;
    return c >= 0;
  }

  WitnessBinding witness(const Operand& o) const {
    WitnessBinding w;
    w.name = o.label;
    w.bytes = o.vacuous ? Bytes() : o.value.bytes();
    if (o.node) w.offset = byte_offset(root_, o.path);
    return w;
  }

  void record(Tally& t, bool truth, bool positive, const Expr& e, std::vector<Operand> shown) {
    bool v = positive ? truth : !truth;
    t.total += 1;
    if (v) {
      t.sat += 1;
      return;
    }
    t.ok = false;
    if (t.why.size() >= 16) return;
    Violation viol;
    viol.constraint = id_;
    viol.text = positive ? render(e) : "not (" + render(e) + ")";
    for (const auto& o : shown) viol.witness.push_back(witness(o));
    t.why.push_back(std::move(viol));
  }

  Tally atom(const Expr& e, bool positive) {
    Tally t;
    if (e.kind == Expr::Compare) {
      auto l = operands(e.children[0]);
      auto r = operands(e.children[1]);
      for (const auto& a : l)
        for (const auto& b : r) {
          if (a.vacuous || b.vacuous) continue;
          bool truth = compare(a.value, b.value, e.op);
          record(t, truth, positive, e, {a, b});
          if (positive && !truth && e.op == "==" && a.node && b.node)
            t.eqs.push_back(FailedEquality{a.node, a.path, b.node, b.path});
        }
      return t;
    }
    if (e.kind == Expr::Contains) {
      const Expr& what = e.children[0];
      if (what.kind == Expr::Selector && is_nonterminal_base(what.name)) {
        for (const auto& c : select(e.children[1], true)) {
          if (!c.node) continue;
          std::vector<Operand> found;
          TreePath p = c.path;
          find_all(c.node, p, what.name, true, found);
          found = apply_steps(std::move(found), what.steps, true);
          found.erase(std::remove_if(found.begin(), found.end(), [](const Operand& o) { return !o.node; }),
                      found.end());
          std::vector<Operand> shown = found.empty() ? std::vector<Operand>{c} : std::vector<Operand>{found[0]};
          record(t, !found.empty(), positive, e, shown);
        }
        return t;
      }
      auto l = operands(what);
      auto r = operands(e.children[1]);
      for (const auto& a : l)
        for (const auto& b : r) {
          if (a.vacuous || b.vacuous) continue;
          bool truth = b.value.bytes().find(a.value.bytes()) != Bytes::npos;
          record(t, truth, positive, e, {a, b});
        }
      return t;
    }
    for (const auto& o : operands(e)) {
      if (o.vacuous) continue;
      record(t, o.value.truthy(), positive, e, {o});
    }
    return t;
  }

  const IoGrammar& g_;
  NodePtr root_;
  int id_;
  std::map<std::string, Binding> env_;
  CallContext ctx_;
};

}  // namespace

Verdict evaluate(const IoGrammar& g, const Expr& c, const NodePtr& t, int id, std::vector<FailedEquality>* failed) {
  Evaluator ev(g, t, id);
  Tally tally = ev.eval(c, true);
  Verdict v;
  v.satisfied = tally.ok;
  v.fitness = tally.ratio();
  v.violations = std::move(tally.why);
  if (failed)
    for (auto& e : tally.eqs) failed->push_back(std::move(e));
  return v;
}

Verdict evaluate_all(const IoGrammar& g, const NodePtr& t, std::vector<FailedEquality>* failed) {
  Verdict out;
  if (g.constraints().empty()) return out;
  double sum = 0;
  for (const auto& c : g.constraints()) {
    Verdict v = evaluate(g, c.expr, t, c.id, failed);
    out.satisfied = out.satisfied && v.satisfied;
    sum += v.fitness;
    for (auto& x : v.violations) out.violations.push_back(std::move(x));
  }
  out.fitness = out.satisfied ? 1.0 : std::min(sum / static_cast<double>(g.constraints().size()), 1.0 - 1e-9);
  return out;
}

// ---- generators ---------------------------------------------------------

Value call_generator(const IoGrammar& g, const Expr& call, const std::map<std::string, Value>& bound,
                     CallContext& ctx) {
  std::function<Value(const Expr&)> ev = [&](const Expr& e) -> Value {
    switch (e.kind) {
      case Expr::Number: return Value::of_int(e.number);
      case Expr::String: return Value::of_bytes(e.text);
      case Expr::Selector: {
        auto it = bound.find(e.name);
        if (it == bound.end()) throw FunctionError("generator", "unbound parameter <" + e.name + ">");
        if (!e.steps.empty()) throw FunctionError("generator", "selector steps are not supported in generators");
        return it->second;
      }
      case Expr::Call: {
        std::vector<Value> args;
        for (const auto& a : e.children) args.push_back(ev(a));
        const HostFunction* fn = g.functions() ? g.functions()->find(e.name) : nullptr;
        if (!fn) throw FunctionError(e.name, "unknown function");
        return (*fn)(args, ctx);
      }
      default:
        throw FunctionError("generator", "unsupported expression " + render(e));
    }
  };
  return ev(call);
}

Bytes produce(const IoGrammar& g, int rule, CallContext& ctx, const std::function<NodePtr(int rule)>& expand) {
  const auto& gen = g.rule(rule).generator;
  if (!gen) throw FunctionError(g.rule(rule).lhs, "rule has no generator");
  std::vector<std::string> params;
  collect_nonterminals(*gen, params);
  std::map<std::string, Value> bound;
  for (const auto& p : params) {
    if (bound.count(p)) continue;
    int r = g.rule_index(p);
    if (r < 0) throw FunctionError(g.rule(rule).lhs, "unknown parameter <" + p + ">");
    NodePtr n = expand(r);
    Value v = Value::of_bytes(yield_bits(n).bytes());
    v.node = n;
    bound[p] = v;
  }
  return call_generator(g, *gen, bound, ctx).bytes();
}

Absorbed absorb(const IoGrammar& g, const NodePtr& parsed, CallContext& ctx) {
  Absorbed out;
  std::vector<Effect> effects;
  CallContext local = ctx;
  local.effects = &effects;
  std::function<void(const NodePtr&)> walk = [&](const NodePtr& n) {
    if (!n->terminal && n->expanded() && n->rule >= 0) {
      const std::string& name = g.rule(n->rule).lhs;
      for (const auto& p : g.productions()) {
        if (!p.generator) continue;
        std::vector<std::string> params;
        collect_nonterminals(*p.generator, params);
        if (params.empty() || std::any_of(params.begin(), params.end(), [&](const auto& x) { return x != name; }))
          continue;
        std::map<std::string, Value> bound;
        Value v = Value::of_bytes(yield_bits(n).bytes());
        v.node = n;
        bound[name] = v;
        try {
          out.parameters[p.lhs] = call_generator(g, *p.generator, bound, local);
        } catch (const FunctionError& e) {
          throw AbsorbError("cannot reconstruct <" + p.lhs + "> from <" + name + ">: " + e.what());
        }
      }
    }
    for (const auto& c : n->children) walk(c);
  };
  if (fully_expanded(parsed)) walk(parsed);
  out.effects = effects;
  if (ctx.effects)
    for (const auto& e : effects) ctx.effects->push_back(e);
  return out;
}

}  // namespace iog
