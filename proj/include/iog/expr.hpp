#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace iog {

// One step of a tree selector such as `<a>.<b>[1][0:2]`.
struct SelectorStep {
  enum Kind { Descendant, Index, Slice } kind = Descendant;
  std::string name;  // Descendant: nonterminal name
  int index = 0;     // Index
  int from = 0;      // Slice, byte offsets; to < 0 means "to end"
  int to = -1;
};

// Expression AST shared by `where` constraints and `:=` generator calls.
struct Expr {
  enum Kind {
    Forall,    // var, children[0] = domain selector, children[1] = body
    Exists,
    Or,        // children
    And,       // children
    Not,       // children[0]
    Compare,   // op, children[0..1]
    Contains,  // children[0] in children[1]
    Number,
    String,
    Call,      // name(children...)
    Selector,  // base name (nonterminal or bound variable) + steps
  } kind = Number;

  std::string name;  // Call: function; Selector: base; quantifiers: variable
  std::string op;    // Compare: == != < <= > >=
  std::int64_t number = 0;
  std::string text;  // String literal bytes
  std::vector<SelectorStep> steps;
  std::vector<Expr> children;
  int line = 0;
  int col = 0;
};

// Canonical source text; parsing it back yields an equal AST.
std::string render(const Expr& e);

// Nonterminal names referenced as selector bases or descendant steps.
void collect_nonterminals(const Expr& e, std::vector<std::string>& out);

}  // namespace iog
