#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "iog/bits.hpp"
#include "iog/expr.hpp"
#include "iog/regex.hpp"

namespace iog {

class FunctionRegistry;

struct SourceLoc {
  int line = 0;
  int col = 0;
};

// ---- errors raised while loading a spec --------------------------------

class SpecError : public std::runtime_error {
public:
  SpecError(const std::string& what, SourceLoc loc = {}) : std::runtime_error(what), loc_(loc) {}
  SourceLoc loc() const { return loc_; }

private:
  SourceLoc loc_;
};

class SyntaxError : public SpecError {
public:
  using SpecError::SpecError;
};

class UndefinedNonterminal : public SpecError {
public:
  UndefinedNonterminal(const std::string& name, SourceLoc loc)
      : SpecError("undefined nonterminal <" + name + ">", loc), name(name) {}
  std::string name;
};

class DuplicateRule : public SpecError {
public:
  DuplicateRule(const std::string& name, SourceLoc loc)
      : SpecError("duplicate rule <" + name + ">", loc), name(name) {}
  std::string name;
};

class UnknownParty : public SpecError {
public:
  UnknownParty(const std::string& name, SourceLoc loc = {})
      : SpecError("unknown party '" + name + "'", loc), name(name) {}
  std::string name;
};

class MalformedAnnotation : public SpecError {
public:
  using SpecError::SpecError;
};

// ---- symbols ------------------------------------------------------------

struct Literal {
  Bytes bytes;
};

struct RegexTerm {
  std::shared_ptr<const Regex> re;
};

struct BitField {
  int width = 1;
  std::optional<std::uint64_t> value;
};

// Nonterminal occurrence, possibly annotated as a message
// (`<sender:receiver:name>` or `<sender:name>`).
struct NtRef {
  std::string name;
  std::optional<std::string> sender;
  std::optional<std::string> receiver;
  int rule = -1;

  bool is_message() const { return sender.has_value(); }
};

using Element = std::variant<Literal, RegexTerm, BitField, NtRef>;
using Alternative = std::vector<Element>;

inline bool is_nonterminal(const Element& e) { return std::holds_alternative<NtRef>(e); }
inline const NtRef* as_ref(const Element& e) { return std::get_if<NtRef>(&e); }

struct Production {
  std::string lhs;
  std::vector<Alternative> alternatives;
  std::optional<Expr> generator;  // `:= fn(args)`
  SourceLoc loc;
};

// Grammar-graph occurrence: position `pos` of alternative `alt` of rule `rule`.
struct Occurrence {
  int rule = -1;
  int alt = -1;
  int pos = -1;
  auto operator<=>(const Occurrence&) const = default;
};

struct Endpoint {
  enum Kind { None, Loopback, TcpConnect, TcpListen } kind = None;
  std::string host = "127.0.0.1";
  int port = 0;
  bool dynamic = false;  // port assigned at runtime by a generator effect
};

struct PartyDecl {
  std::string name;
  bool fuzzer_controlled = false;
  std::string channel;
  std::string side;  // parties on one side share runtime reconfiguration
  Endpoint endpoint;
  SourceLoc loc;
};

struct Constraint {
  int id = 0;
  Expr expr;
  SourceLoc loc;
};

struct Diagnostic {
  enum Severity { Error, Warning } severity = Error;
  enum Kind { Unreachable, Unproductive, MisalignedBits, Annotation, Terminal, Constraint } kind = Unproductive;
  std::string rule;
  std::string message;
  SourceLoc loc;
};

std::string format_diagnostic(const Diagnostic& d, std::string_view file);

// Constrained I/O grammar. Immutable once built by parse_spec.
class IoGrammar {
public:
  const std::vector<Production>& productions() const { return rules_; }
  const Production& rule(int i) const { return rules_[static_cast<std::size_t>(i)]; }
  int rule_count() const { return static_cast<int>(rules_.size()); }
  int rule_index(std::string_view name) const;
  int start() const { return start_; }

  const std::vector<PartyDecl>& parties() const { return parties_; }
  const PartyDecl* party(std::string_view name) const;
  const std::vector<Constraint>& constraints() const { return constraints_; }
  const std::shared_ptr<const FunctionRegistry>& functions() const { return functions_; }

  // Derived tables, computed once at build time.
  bool nullable(int r) const { return nullable_[static_cast<std::size_t>(r)]; }
  bool productive(int r) const { return min_height_[static_cast<std::size_t>(r)] >= 0; }
  // Height of the shallowest finite derivation; -1 if none.
  int min_height(int r) const { return min_height_[static_cast<std::size_t>(r)]; }
  // Alternative achieving min_height; -1 if unproductive.
  int shortest_alternative(int r) const { return shortest_alt_[static_cast<std::size_t>(r)]; }
  bool reachable(int r) const { return reachable_[static_cast<std::size_t>(r)]; }
  // True if the rule occurs under some message reference (message subgrammar).
  bool in_message(int r) const { return in_message_[static_cast<std::size_t>(r)]; }
  // Derives the empty message sequence (message refs count as non-empty).
  bool session_nullable(int r) const { return session_nullable_[static_cast<std::size_t>(r)]; }

  // Copy with extra constraints appended (used for ad-hoc oracles).
  IoGrammar with_constraints(const std::vector<Expr>& extra) const;
  IoGrammar with_parties(std::vector<PartyDecl> parties) const;
  IoGrammar with_functions(std::shared_ptr<const FunctionRegistry> fns) const;

  // Resolved receivers of a message reference: the annotation if present,
  // else every other party on the sender's channel.
  std::vector<std::string> receivers(const NtRef& ref) const;

  struct Builder;

private:
  friend struct Builder;
  void finalize();

  std::vector<Production> rules_;
  std::unordered_map<std::string, int> index_;
  int start_ = -1;
  std::vector<PartyDecl> parties_;
  std::vector<Constraint> constraints_;
  std::shared_ptr<const FunctionRegistry> functions_;

  std::vector<bool> nullable_;
  std::vector<int> min_height_;
  std::vector<int> shortest_alt_;
  std::vector<bool> reachable_;
  std::vector<bool> in_message_;
  std::vector<bool> session_nullable_;
};

// Parses `.iog` text. Throws SpecError subclasses.
IoGrammar parse_spec(std::string_view text);
IoGrammar load_spec_file(const std::string& path);
// One `where` expression (without the keyword). Throws SyntaxError.
Expr parse_constraint(std::string_view text);

// Canonical text; parse_spec(render(g)) is structurally identical to g.
std::string render(const IoGrammar& g);
bool structurally_equal(const IoGrammar& a, const IoGrammar& b);

std::vector<Diagnostic> validate(const IoGrammar& g);

// Message references in rule order (first occurrence of each distinct
// sender/receiver/name triple).
std::vector<NtRef> message_refs(const IoGrammar& g);
// Every message-reference occurrence site.
std::vector<Occurrence> message_occurrences(const IoGrammar& g);

// State area: rules reachable from start without entering a message body,
// plus the message-reference occurrences bounding it.
struct StateArea {
  std::set<int> rules;
  std::set<Occurrence> frontier;
};
StateArea state_subgrammar(const IoGrammar& g);

}  // namespace iog
