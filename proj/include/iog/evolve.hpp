#pragma once

#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "iog/constrain.hpp"
#include "iog/forecast.hpp"
#include "iog/tree.hpp"

namespace iog {

class BudgetExceeded : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class NoCommonPoint : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class NothingMutable : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct GaParams {
  int population = 50;
  int tournament = 4;
  double crossover_rate = 0.7;
  double mutation_rate = 0.3;
  int elitism = 1;
  int generations = 40;
  int depth_budget = 24;
  int hint_attempts = 20;
};

// Fully expanded subtree for `rule`. Alternatives are uniform up to
// `depth_budget`, then the shortest completion is taken. Rules with a
// generator are produced by it unless `syntax_only`.
NodePtr random_expand(const IoGrammar& g, int rule, Rng& rng, int depth_budget = 24, bool syntax_only = false);
NodePtr random_expand(const IoGrammar& g, const NtRef& ref, Rng& rng, int depth_budget = 24);

// Points eligible for the operators: expanded, writable nodes whose subtree
// holds no read-only node and that are not strictly inside a generated value.
std::vector<TreePath> mutable_points(const IoGrammar& g, const NodePtr& t);

// Replaces one eligible subtree of `a` by a same-rule subtree of `b`.
NodePtr crossover(const IoGrammar& g, const NodePtr& a, const NodePtr& b, Rng& rng);
// Re-expands one eligible subtree of `t`.
NodePtr mutate(const IoGrammar& g, const NodePtr& t, Rng& rng, int depth_budget = 24);

class NoSatisfyingCandidate : public std::runtime_error {
public:
  NoSatisfyingCandidate(NodePtr best, Verdict v)
      : std::runtime_error("no candidate satisfies the constraints"), tree(std::move(best)), verdict(std::move(v)) {}
  NodePtr tree;
  Verdict verdict;
};

struct Generated {
  NodePtr tree;     // session tree with the message attached at the hook
  NodePtr message;  // the attached message subtree
  Verdict verdict;
  std::vector<Effect> effects;
  bool hint_hit = false;
  int candidates = 0;
};

// Builds the next message for `pred`. With a coverage hint, candidates
// covering a hinted k-path are preferred for `hint_attempts` satisfying
// candidates; after that any satisfying candidate is accepted.
Generated generate_message(const IoGrammar& g, const Prediction& pred, const GaParams& params, Rng& rng,
                           const std::set<KPath>* coverage_hint = nullptr);

}  // namespace iog
