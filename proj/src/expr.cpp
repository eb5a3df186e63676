#include "iog/expr.hpp"

#include "iog/bits.hpp"

namespace iog {

namespace {

std::string render_selector(const Expr& e) {
  std::string out = "<" + e.name + ">";
  for (const auto& s : e.steps) {
    switch (s.kind) {
      case SelectorStep::Descendant: out += ".<" + s.name + ">"; break;
      case SelectorStep::Index: out += "[" + std::to_string(s.index) + "]"; break;
      case SelectorStep::Slice:
        out += "[" + std::to_string(s.from) + ":" + (s.to >= 0 ? std::to_string(s.to) : "") + "]";
        break;
    }
  }
  return out;
}

}  // namespace

std::string render(const Expr& e) {
  switch (e.kind) {
    case Expr::Forall:
    case Expr::Exists:
      return std::string(e.kind == Expr::Forall ? "forall" : "exists") + " <" + e.name + "> in " +
             render(e.children[0]) + ": (" + render(e.children[1]) + ")";
    case Expr::Or:
    case Expr::And: {
      std::string out = "(";
      for (std::size_t i = 0; i < e.children.size(); ++i) {
        if (i) out += e.kind == Expr::Or ? " or " : " and ";
        out += render(e.children[i]);
      }
      return out + ")";
    }
    case Expr::Not:
      return "not (" + render(e.children[0]) + ")";
    case Expr::Compare:
      return render(e.children[0]) + " " + e.op + " " + render(e.children[1]);
    case Expr::Contains:
      return render(e.children[0]) + " in " + render(e.children[1]);
    case Expr::Number:
      return std::to_string(e.number);
    case Expr::String:
      return "'" + escape_bytes(e.text) + "'";
    case Expr::Call: {
      std::string out = e.name + "(";
      for (std::size_t i = 0; i < e.children.size(); ++i) {
        if (i) out += ", ";
        out += render(e.children[i]);
      }
      return out + ")";
    }
    case Expr::Selector:
      return render_selector(e);
  }
  return {};
}

void collect_nonterminals(const Expr& e, std::vector<std::string>& out) {
  if (e.kind == Expr::Selector) {
    out.push_back(e.name);
    for (const auto& s : e.steps)
      if (s.kind == SelectorStep::Descendant) out.push_back(s.name);
  }
  for (const auto& c : e.children) collect_nonterminals(c, out);
}

}  // namespace iog
