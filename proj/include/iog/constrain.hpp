#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "iog/expr.hpp"
#include "iog/grammar.hpp"
#include "iog/regex.hpp"
#include "iog/tree.hpp"

namespace iog {

class SelectorError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class FunctionError : public std::runtime_error {
public:
  FunctionError(const std::string& name, const std::string& why)
      : std::runtime_error(name + ": " + why), name(name) {}
  std::string name;
};

class AbsorbError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Runtime value of an expression: an integer or a byte string, optionally
// remembering the tree node it was read from.
struct Value {
  enum Kind { Int, Bytes_ } kind = Bytes_;
  std::int64_t i = 0;
  Bytes b;
  NodePtr node;

  static Value of_int(std::int64_t v) {
    Value x;
    x.kind = Int;
    x.i = v;
    return x;
  }
  static Value of_bytes(Bytes v) {
    Value x;
    x.b = std::move(v);
    return x;
  }
  Bytes bytes() const { return kind == Int ? std::to_string(i) : b; }
  std::optional<std::int64_t> as_int() const;
  bool truthy() const { return kind == Int ? i != 0 : !b.empty(); }
};

// Side effect requested by a generator, applied by the engine between loop
// iterations.
struct Effect {
  enum Kind { SetPort } kind = SetPort;
  int port = 0;
};

struct CallContext {
  const IoGrammar* grammar = nullptr;
  Rng* rng = nullptr;
  std::vector<Effect>* effects = nullptr;
};

using HostFunction = std::function<Value(const std::vector<Value>&, CallContext&)>;

class FunctionRegistry {
public:
  // sha256, crc32, len, int, uint, lower, concat, randint, count,
  // data_port, verify_transitive.
  static std::shared_ptr<const FunctionRegistry> builtins();

  void add(const std::string& name, HostFunction fn, bool pure = true);
  const HostFunction* find(const std::string& name) const;
  bool pure(const std::string& name) const;
  std::vector<std::string> names() const;

private:
  struct Entry {
    HostFunction fn;
    bool pure = true;
  };
  std::map<std::string, Entry> fns_;
};

struct WitnessBinding {
  std::string name;  // variable or selector text
  Bytes bytes;
  std::size_t offset = 0;  // byte offset in the session transcript
};

struct Violation {
  int constraint = -1;
  std::string text;  // the failing atom
  std::vector<WitnessBinding> witness;
};

struct Verdict {
  bool satisfied = true;
  double fitness = 1.0;
  std::vector<Violation> violations;
};

// Atom instance that failed, exposed for the evolutionary repair step.
struct FailedEquality {
  NodePtr lhs;
  TreePath lhs_path;
  NodePtr rhs;
  TreePath rhs_path;
};

Verdict evaluate(const IoGrammar& g, const Expr& c, const NodePtr& t, int id = 0,
                 std::vector<FailedEquality>* failed = nullptr);
Verdict evaluate_all(const IoGrammar& g, const NodePtr& t, std::vector<FailedEquality>* failed = nullptr);

// Evaluates a generator call. Nonterminal arguments are supplied in
// `bound` (rule name -> value).
Value call_generator(const IoGrammar& g, const Expr& call, const std::map<std::string, Value>& bound,
                     CallContext& ctx);

// Bytes produced by the generator attached to `rule`. Nonterminal
// parameters are expanded by `expand` (syntax only).
Bytes produce(const IoGrammar& g, int rule, CallContext& ctx,
              const std::function<NodePtr(int rule)>& expand);

struct Absorbed {
  std::map<std::string, Value> parameters;  // reconstructed, by rule name
  std::vector<Effect> effects;
};

// Runs every generator that takes a nonterminal of `parsed` as parameter,
// reconstructing that generator's rule and collecting its effects.
Absorbed absorb(const IoGrammar& g, const NodePtr& parsed, CallContext& ctx);

}  // namespace iog
