#include "iog/grammar.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>

#include "iog/constrain.hpp"

namespace iog {

std::string format_diagnostic(const Diagnostic& d, std::string_view file) {
  std::ostringstream os;
  os << file << ":" << d.loc.line << ":" << d.loc.col << ": "
     << (d.severity == Diagnostic::Error ? "error" : "warning") << ": " << d.message;
  return os.str();
}

int IoGrammar::rule_index(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? -1 : it->second;
}

const PartyDecl* IoGrammar::party(std::string_view name) const {
  for (const auto& p : parties_)
    if (p.name == name) return &p;
  return nullptr;
}

std::vector<std::string> IoGrammar::receivers(const NtRef& ref) const {
  if (ref.receiver) return {*ref.receiver};
  std::vector<std::string> out;
  if (!ref.sender) return out;
  const PartyDecl* s = party(*ref.sender);
  for (const auto& p : parties_)
    if (p.name != *ref.sender && (!s || p.channel == s->channel)) out.push_back(p.name);
  return out;
}

IoGrammar IoGrammar::with_constraints(const std::vector<Expr>& extra) const {
  IoGrammar g = *this;
  for (const auto& e : extra) {
    Constraint c;
    c.id = static_cast<int>(g.constraints_.size());
    c.expr = e;
    c.loc = {e.line, e.col};
    g.constraints_.push_back(std::move(c));
  }
  return g;
}

IoGrammar IoGrammar::with_parties(std::vector<PartyDecl> parties) const {
  IoGrammar g = *this;
  g.parties_ = std::move(parties);
  return g;
}

IoGrammar IoGrammar::with_functions(std::shared_ptr<const FunctionRegistry> fns) const {
  IoGrammar g = *this;
  g.functions_ = std::move(fns);
  return g;
}

void IoGrammar::finalize() {
  const std::size_t n = rules_.size();
  index_.clear();
  for (std::size_t i = 0; i < n; ++i) index_[rules_[i].lhs] = static_cast<int>(i);
  for (auto& r : rules_)
    for (auto& alt : r.alternatives)
      for (auto& e : alt)
        if (auto* ref = std::get_if<NtRef>(&e)) ref->rule = rule_index(ref->name);
  start_ = rule_index("start");
  if (!functions_) functions_ = FunctionRegistry::builtins();

  auto nullable_fixpoint = [&](std::vector<bool>& table, bool messages_empty) {
    table.assign(n, false);
    for (bool changed = true; changed;) {
      changed = false;
      for (std::size_t i = 0; i < n; ++i) {
        if (table[i]) continue;
        for (const auto& alt : rules_[i].alternatives) {
          bool all = std::all_of(alt.begin(), alt.end(), [&](const Element& e) {
            if (auto* ref = as_ref(e)) {
              if (ref->is_message() && !messages_empty) return false;
              return ref->rule >= 0 && table[static_cast<std::size_t>(ref->rule)];
            }
            if (auto* lit = std::get_if<Literal>(&e)) return lit->bytes.empty();
            return false;
          });
          if (all) {
            table[i] = true;
            changed = true;
            break;
          }
        }
      }
    }
  };
  nullable_fixpoint(nullable_, true);
  nullable_fixpoint(session_nullable_, false);

  min_height_.assign(n, -1);
  shortest_alt_.assign(n, -1);
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& alts = rules_[i].alternatives;
      for (std::size_t a = 0; a < alts.size(); ++a) {
        int h = 0;
        bool ok = true;
        for (const auto& e : alts[a]) {
          if (auto* ref = as_ref(e)) {
            if (ref->rule < 0 || min_height_[static_cast<std::size_t>(ref->rule)] < 0) {
              ok = false;
              break;
            }
            h = std::max(h, min_height_[static_cast<std::size_t>(ref->rule)]);
          }
        }
        if (!ok) continue;
        if (min_height_[i] < 0 || h + 1 < min_height_[i]) {
          min_height_[i] = h + 1;
          shortest_alt_[i] = static_cast<int>(a);
          changed = true;
        }
      }
    }
  }

  reachable_.assign(n, false);
  in_message_.assign(n, false);
  if (start_ >= 0) {
    std::deque<int> work{start_};
    reachable_[static_cast<std::size_t>(start_)] = true;
    while (!work.empty()) {
      int r = work.front();
      work.pop_front();
      for (const auto& alt : rules_[static_cast<std::size_t>(r)].alternatives)
        for (const auto& e : alt)
          if (auto* ref = as_ref(e); ref && ref->rule >= 0 && !reachable_[static_cast<std::size_t>(ref->rule)]) {
            reachable_[static_cast<std::size_t>(ref->rule)] = true;
            work.push_back(ref->rule);
          }
    }
  }
  std::deque<int> work;
  for (const auto& r : rules_)
    for (const auto& alt : r.alternatives)
      for (const auto& e : alt)
        if (auto* ref = as_ref(e); ref && ref->is_message() && ref->rule >= 0 &&
                                   !in_message_[static_cast<std::size_t>(ref->rule)]) {
          in_message_[static_cast<std::size_t>(ref->rule)] = true;
          work.push_back(ref->rule);
        }
  while (!work.empty()) {
    int r = work.front();
    work.pop_front();
    for (const auto& alt : rules_[static_cast<std::size_t>(r)].alternatives)
      for (const auto& e : alt)
        if (auto* ref = as_ref(e); ref && ref->rule >= 0 && !in_message_[static_cast<std::size_t>(ref->rule)]) {
          in_message_[static_cast<std::size_t>(ref->rule)] = true;
          work.push_back(ref->rule);
        }
  }
}

// ---- rendering ----------------------------------------------------------

namespace {

std::string render_endpoint(const Endpoint& ep) {
  auto port = [&] { return ep.dynamic ? std::string("dynamic") : std::to_string(ep.port); };
  switch (ep.kind) {
    case Endpoint::None: return "none";
    case Endpoint::Loopback: return ep.dynamic ? "loopback(dynamic)" : "loopback";
    case Endpoint::TcpConnect: return "tcp_connect(" + ep.host + ":" + port() + ")";
    case Endpoint::TcpListen: return "tcp_listen(" + port() + ")";
  }
  return "none";
}

std::string render_element(const Element& e) {
  struct V {
    std::string operator()(const Literal& l) const { return "'" + escape_bytes(l.bytes) + "'"; }
    std::string operator()(const RegexTerm& r) const {
      std::string p;
      for (char c : r.re->pattern()) {
        if (c == '\'') p += "\\'";
        else p.push_back(c);
      }
      return "r'" + p + "'";
    }
    std::string operator()(const BitField& b) const {
      std::string s = "bits(" + std::to_string(b.width) + ")";
      if (b.value) s += "=" + std::to_string(*b.value);
      return s;
    }
    std::string operator()(const NtRef& r) const {
      std::string s = "<";
      if (r.sender) s += *r.sender + ":";
      if (r.receiver) s += *r.receiver + ":";
      return s + r.name + ">";
    }
  };
  return std::visit(V{}, e);
}

}  // namespace

std::string render(const IoGrammar& g) {
  std::ostringstream os;
  for (const auto& p : g.parties()) {
    os << "party " << p.name << " { controlled: " << (p.fuzzer_controlled ? "true" : "false")
       << ", channel: " << p.channel << ", side: " << p.side << ", endpoint: " << render_endpoint(p.endpoint)
       << " }\n";
  }
  for (const auto& r : g.productions()) {
    os << "<" << r.lhs << "> ::=";
    for (std::size_t a = 0; a < r.alternatives.size(); ++a) {
      if (a) os << "\n    |";
      if (r.alternatives[a].empty()) os << " ''";
      for (const auto& e : r.alternatives[a]) os << " " << render_element(e);
    }
    if (r.generator) os << " := " << render(*r.generator);
    os << "\n";
  }
  for (const auto& c : g.constraints()) os << "where " << render(c.expr) << ";\n";
  return os.str();
}

namespace {

bool element_equal(const Element& a, const Element& b) {
  if (a.index() != b.index()) return false;
  return render_element(a) == render_element(b);
}

}  // namespace

bool structurally_equal(const IoGrammar& a, const IoGrammar& b) {
  if (a.rule_count() != b.rule_count() || a.start() != b.start()) return false;
  for (int i = 0; i < a.rule_count(); ++i) {
    const auto& ra = a.rule(i);
    const auto& rb = b.rule(i);
    if (ra.lhs != rb.lhs || ra.alternatives.size() != rb.alternatives.size()) return false;
    for (std::size_t k = 0; k < ra.alternatives.size(); ++k) {
      const auto& x = ra.alternatives[k];
      const auto& y = rb.alternatives[k];
      if (x.size() != y.size()) return false;
      for (std::size_t j = 0; j < x.size(); ++j)
        if (!element_equal(x[j], y[j])) return false;
    }
    if (ra.generator.has_value() != rb.generator.has_value()) return false;
    if (ra.generator && render(*ra.generator) != render(*rb.generator)) return false;
  }
  if (a.parties().size() != b.parties().size()) return false;
  for (std::size_t i = 0; i < a.parties().size(); ++i) {
    const auto& p = a.parties()[i];
    const auto& q = b.parties()[i];
    if (p.name != q.name || p.fuzzer_controlled != q.fuzzer_controlled || p.channel != q.channel ||
        p.side != q.side || render_endpoint(p.endpoint) != render_endpoint(q.endpoint))
      return false;
  }
  if (a.constraints().size() != b.constraints().size()) return false;
  for (std::size_t i = 0; i < a.constraints().size(); ++i)
    if (render(a.constraints()[i].expr) != render(b.constraints()[i].expr)) return false;
  return true;
}

// ---- validation ---------------------------------------------------------

namespace {

// Possible bit lengths modulo 8 of each rule's yields, as an 8-bit mask.
std::vector<unsigned> bit_residues(const IoGrammar& g) {
  const int n = g.rule_count();
  std::vector<unsigned> res(static_cast<std::size_t>(n), 0);
  auto add = [](unsigned mask, int k) {
    unsigned out = 0;
    for (int r = 0; r < 8; ++r)
      if (mask & (1u << r)) out |= 1u << ((r + k) % 8);
    return out;
  };
  auto sum = [](unsigned x, unsigned y) {
    unsigned out = 0;
    for (int r = 0; r < 8; ++r)
      for (int s = 0; s < 8; ++s)
        if ((x & (1u << r)) && (y & (1u << s))) out |= 1u << ((r + s) % 8);
    return out;
  };
  for (bool changed = true; changed;) {
    changed = false;
    for (int i = 0; i < n; ++i) {
      unsigned acc = res[static_cast<std::size_t>(i)];
      for (const auto& alt : g.rule(i).alternatives) {
        unsigned m = 1;  // {0}
        for (const auto& e : alt) {
          if (auto* ref = as_ref(e)) {
            m = ref->rule >= 0 ? sum(m, res[static_cast<std::size_t>(ref->rule)]) : 0;
          } else if (auto* b = std::get_if<BitField>(&e)) {
            m = add(m, b->width % 8);
          }
        }
        acc |= m;
      }
      if (acc != res[static_cast<std::size_t>(i)]) {
        res[static_cast<std::size_t>(i)] = acc;
        changed = true;
      }
    }
  }
  return res;
}

}  // namespace

std::vector<Diagnostic> validate(const IoGrammar& g) {
  std::vector<Diagnostic> out;
  auto diag = [&](Diagnostic::Severity sev, Diagnostic::Kind kind, const Production& r, std::string msg) {
    out.push_back({sev, kind, r.lhs, std::move(msg), r.loc});
  };
  if (g.start() < 0) {
    out.push_back({Diagnostic::Error, Diagnostic::Unproductive, "start", "missing <start> rule", {1, 1}});
    return out;
  }
  auto residues = bit_residues(g);
  // Plain grammars (no messages) may carry terminals anywhere.
  const bool interactive = !message_refs(g).empty();
  std::set<std::string> gen_params;
  for (const auto& r : g.productions())
    if (r.generator) {
      std::vector<std::string> names;
      collect_nonterminals(*r.generator, names);
      gen_params.insert(names.begin(), names.end());
    }
  for (int i = 0; i < g.rule_count(); ++i) {
    const auto& r = g.rule(i);
    if (!g.reachable(i)) {
      if (gen_params.count(r.lhs)) continue;
      diag(Diagnostic::Warning, Diagnostic::Unreachable, r, "rule <" + r.lhs + "> is unreachable from <start>");
      continue;
    }
    if (!g.productive(i))
      diag(Diagnostic::Error, Diagnostic::Unproductive, r, "rule <" + r.lhs + "> derives no finite string");
    for (const auto& alt : r.alternatives) {
      for (const auto& e : alt) {
        if (auto* ref = as_ref(e)) {
          if (ref->is_message()) {
            if (g.in_message(i))
              diag(Diagnostic::Error, Diagnostic::Annotation, r,
                   "message <" + ref->name + "> nested inside the body of another message");
            if (!g.party(*ref->sender))
              diag(Diagnostic::Error, Diagnostic::Annotation, r, "unknown sender '" + *ref->sender + "'");
            if (ref->receiver && !g.party(*ref->receiver))
              diag(Diagnostic::Error, Diagnostic::Annotation, r, "unknown receiver '" + *ref->receiver + "'");
            if (ref->rule >= 0 && residues[static_cast<std::size_t>(ref->rule)] != 1u)
              diag(Diagnostic::Error, Diagnostic::MisalignedBits, r,
                   "message <" + ref->name + "> may yield a bit length that is not a multiple of 8");
          }
        } else if (interactive && !g.in_message(i)) {
          auto* lit = std::get_if<Literal>(&e);
          if (!lit || !lit->bytes.empty())
            diag(Diagnostic::Error, Diagnostic::Terminal, r,
                 "terminal in rule <" + r.lhs + "> is not part of any message");
        }
      }
    }
  }
  for (const auto& c : g.constraints()) {
    std::vector<std::string> names;
    collect_nonterminals(c.expr, names);
    std::set<std::string> bound;
    std::vector<const Expr*> stack{&c.expr};
    while (!stack.empty()) {
      const Expr* e = stack.back();
      stack.pop_back();
      if (e->kind == Expr::Forall || e->kind == Expr::Exists) bound.insert(e->name);
      for (const auto& k : e->children) stack.push_back(&k);
    }
    for (auto n : names) {
      if (auto colon = n.rfind(':'); colon != std::string::npos) n = n.substr(colon + 1);
      if (g.rule_index(n) < 0 && !bound.count(n))
        out.push_back({Diagnostic::Error, Diagnostic::Constraint, n,
                       "constraint references undefined nonterminal <" + n + ">", c.loc});
    }
  }
  return out;
}

std::vector<NtRef> message_refs(const IoGrammar& g) {
  std::vector<NtRef> out;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (const auto& r : g.productions())
    for (const auto& alt : r.alternatives)
      for (const auto& e : alt)
        if (auto* ref = as_ref(e); ref && ref->is_message()) {
          auto key = std::make_tuple(*ref->sender, ref->receiver.value_or(""), ref->name);
          if (seen.insert(key).second) out.push_back(*ref);
        }
  return out;
}

std::vector<Occurrence> message_occurrences(const IoGrammar& g) {
  std::vector<Occurrence> out;
  for (int i = 0; i < g.rule_count(); ++i) {
    const auto& alts = g.rule(i).alternatives;
    for (std::size_t a = 0; a < alts.size(); ++a)
      for (std::size_t p = 0; p < alts[a].size(); ++p)
        if (auto* ref = as_ref(alts[a][p]); ref && ref->is_message())
          out.push_back({i, static_cast<int>(a), static_cast<int>(p)});
  }
  return out;
}

StateArea state_subgrammar(const IoGrammar& g) {
  StateArea area;
  if (g.start() < 0) return area;
  std::deque<int> work{g.start()};
  area.rules.insert(g.start());
  while (!work.empty()) {
    int r = work.front();
    work.pop_front();
    const auto& alts = g.rule(r).alternatives;
    for (std::size_t a = 0; a < alts.size(); ++a)
      for (std::size_t p = 0; p < alts[a].size(); ++p) {
        auto* ref = as_ref(alts[a][p]);
        if (!ref || ref->rule < 0) continue;
        if (ref->is_message()) {
          area.frontier.insert({r, static_cast<int>(a), static_cast<int>(p)});
        } else if (area.rules.insert(ref->rule).second) {
          work.push_back(ref->rule);
        }
      }
  }
  return area;
}

IoGrammar load_spec_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_spec(ss.str());
}

}  // namespace iog
