#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "iog/forecast.hpp"
#include "iog/regex.hpp"
#include "iog/tree.hpp"

namespace iog {

// Every grammar-graph chain of length <= k over rules reachable from start.
std::set<KPath> all_k_paths(const IoGrammar& g, int k);
std::set<KPath> covered_k_paths(const std::vector<NodePtr>& trees, int k);

// Longest prefix of `p` whose nodes are state rules.
KPath truncate_to_state_area(const IoGrammar& g, const KPath& p);

std::string message_key(const NtRef& m);

// Coverage bookkeeping for one grammar and k, shared across sessions.
class CoverageModel {
public:
  CoverageModel(const IoGrammar& g, int k);

  const IoGrammar& grammar() const { return *g_; }
  int k() const { return k_; }
  const std::set<KPath>& all() const { return all_; }
  const std::set<KPath>& covered() const { return covered_; }
  std::set<KPath> uncovered() const;
  bool fully_covered() const { return covered_.size() == all_.size(); }

  // Adds the k-paths of `t`; returns the number of new ones.
  std::size_t add_tree(const NodePtr& t);
  double fraction() const;
  // Fraction of the k-paths inside messages sent by `party`.
  double party_fraction(const std::string& party) const;

  // Uncovered paths truncated to the state area; empty or already covered
  // truncations are dropped.
  std::vector<KPath> uncovered_state_paths() const;

  const std::vector<NtRef>& message_types() const { return messages_; }
  // Covered fraction of the k-paths inside the message's subgrammar.
  double message_coverage(const NtRef& m) const;

private:
  const IoGrammar* g_;
  int k_;
  std::set<KPath> all_;
  std::set<KPath> covered_;
  std::set<int> state_rules_;
  std::vector<NtRef> messages_;
  std::map<int, std::set<KPath>> inside_;  // message rule -> k-paths of its subgrammar
};

struct TargetStats {
  std::map<KPath, int> path_freq;
  std::map<std::string, int> message_freq;
  std::map<std::string, double> coverage_by_message;
};

// Energies; frequencies start at 1.
double path_energy(const TargetStats& s, const KPath& p);
double message_energy(const TargetStats& s, const std::string& key, double coverage);

// A state path, or a message type (then `path` is its length-1 head).
// For message types, `contexts` lists state chains ending in an occurrence
// of the message that still have uncovered k-paths; the navigator aims for
// one of them when present.
struct Target {
  KPath path;
  std::optional<NtRef> message;
  std::vector<KPath> contexts;
};

Target select_target(const CoverageModel& cov, TargetStats& stats, Rng& rng);

struct GuideStep {
  enum Kind { Message, Restart } kind = Message;
  Occurrence site;
  int rule = -1;
  std::string sender;
  auto operator<=>(const GuideStep&) const = default;
};

struct GuidePath {
  std::vector<GuideStep> steps;
  int cost = 0;
  bool contains_restart() const;
};

class TargetUnrealizable : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Cheapest message sequence from the current session (`predictions` of its
// tree) realizing `target`: the target's deepest node must be complete. Paths
// that leave no prediction consistent with `confirmed` are not used; if the
// target cannot be realized in this session, the path ends the session,
// restarts and continues from a fresh tree. Message cost 1, restart cost 5.
GuidePath a_star_to_k_path(const IoGrammar& g, const std::vector<Prediction>& predictions, const Target& target,
                           const std::set<KPath>& confirmed = {}, std::size_t max_states = 200000);
GuidePath a_star_to_k_path(const IoGrammar& g, const NodePtr& t, const Target& target,
                           const std::set<KPath>& confirmed = {});

// Minimum number of messages from sending `p` to an accepting end (p counted).
int messages_to_end(const IoGrammar& g, const Prediction& p);

bool target_present(const NodePtr& t, const Target& target);

struct GuidanceState {
  std::set<KPath> confirmed;  // K_C
  GuidePath path;
  std::optional<Target> target;
  bool guide_to_end = false;
  std::size_t seen_messages = 0;

  void begin_session();
};

// One guidance decision. Returns indices into `predictions` of the messages
// the fuzzer should choose from.
std::vector<std::size_t> guidance_step(GuidanceState& st, const CoverageModel& cov, TargetStats& stats,
                                       const NodePtr& tree, const std::vector<Prediction>& predictions,
                                       const std::function<bool(const std::string&)>& controlled, Rng& rng);

}  // namespace iog
