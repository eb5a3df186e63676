#include "iog/guide.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <queue>
#include <unordered_map>

namespace iog {

namespace {

bool alt_productive(const IoGrammar& g, const Alternative& a) {
  for (const auto& e : a)
    if (auto* ref = as_ref(e); ref && !g.productive(ref->rule)) return false;
  return true;
}

std::set<int> rules_below(const IoGrammar& g, int root) {
  std::set<int> seen{root};
  std::deque<int> q{root};
  while (!q.empty()) {
    int r = q.front();
    q.pop_front();
    for (const auto& alt : g.rule(r).alternatives)
      for (const auto& e : alt)
        if (auto* ref = as_ref(e); ref && seen.insert(ref->rule).second) q.push_back(ref->rule);
  }
  return seen;
}

}  // namespace

std::set<KPath> all_k_paths(const IoGrammar& g, int k) {
  std::set<KPath> out;
  if (k < 1) return out;
  KPath chain;
  std::function<void()> extend = [&]() {
    out.insert(chain);
    if (static_cast<int>(chain.size()) >= k) return;
    const KNode last = chain.back();
    const Alternative& alt = g.rule(last.rule).alternatives[static_cast<std::size_t>(last.alt)];
    for (std::size_t pos = 0; pos < alt.size(); ++pos) {
      auto* ref = as_ref(alt[pos]);
      if (!ref) continue;
      const auto& alts = g.rule(ref->rule).alternatives;
      for (std::size_t a = 0; a < alts.size(); ++a) {
        if (!alt_productive(g, alts[a])) continue;
        chain.push_back({ref->rule, static_cast<int>(a), static_cast<int>(pos)});
        extend();
        chain.pop_back();
      }
    }
  };
  for (int r = 0; r < g.rule_count(); ++r) {
    if (!g.reachable(r)) continue;
    const auto& alts = g.rule(r).alternatives;
    for (std::size_t a = 0; a < alts.size(); ++a) {
      if (!alt_productive(g, alts[a])) continue;
      chain.assign(1, KNode{r, static_cast<int>(a), -1});
      extend();
    }
  }
  return out;
}

std::set<KPath> covered_k_paths(const std::vector<NodePtr>& trees, int k) {
  std::set<KPath> out;
  for (const auto& t : trees) {
    auto s = k_paths(t, k);
    out.insert(s.begin(), s.end());
  }
  return out;
}

namespace {

KPath truncate(const std::set<int>& state_rules, const KPath& p) {
  KPath out;
  for (const auto& n : p) {
    if (!state_rules.count(n.rule)) break;
    out.push_back(n);
  }
  return out;
}

}  // namespace

KPath truncate_to_state_area(const IoGrammar& g, const KPath& p) { return truncate(state_subgrammar(g).rules, p); }

std::string message_key(const NtRef& m) {
  return *m.sender + ":" + (m.receiver ? *m.receiver + ":" : std::string()) + m.name;
}

// ---- coverage model -----------------------------------------------------

CoverageModel::CoverageModel(const IoGrammar& g, int k)
    : g_(&g), k_(k), all_(all_k_paths(g, k)), state_rules_(state_subgrammar(g).rules) {
  messages_ = message_refs(g);
  for (const auto& m : messages_) {
    if (inside_.count(m.rule)) continue;
    auto rules = rules_below(g, m.rule);
    auto& set = inside_[m.rule];
    for (const auto& p : all_)
      if (std::all_of(p.begin(), p.end(), [&](const KNode& n) { return rules.count(n.rule) > 0; })) set.insert(p);
  }
}

std::set<KPath> CoverageModel::uncovered() const {
  std::set<KPath> out;
  std::set_difference(all_.begin(), all_.end(), covered_.begin(), covered_.end(), std::inserter(out, out.end()));
  return out;
}

std::size_t CoverageModel::add_tree(const NodePtr& t) {
  std::size_t added = 0;
  if (!t) return 0;
  for (const auto& p : k_paths(t, k_))
    if (all_.count(p) && covered_.insert(p).second) ++added;
  return added;
}

double CoverageModel::fraction() const {
  return all_.empty() ? 1.0 : static_cast<double>(covered_.size()) / static_cast<double>(all_.size());
}

double CoverageModel::party_fraction(const std::string& party) const {
  std::set<KPath> mine;
  for (const auto& m : messages_)
    if (m.sender && *m.sender == party) {
      const auto& s = inside_.at(m.rule);
      mine.insert(s.begin(), s.end());
    }
  if (mine.empty()) return 1.0;
  std::size_t hit = 0;
  for (const auto& p : mine) hit += covered_.count(p);
  return static_cast<double>(hit) / static_cast<double>(mine.size());
}

std::vector<KPath> CoverageModel::uncovered_state_paths() const {
  std::set<KPath> out;
  for (const auto& p : all_) {
    if (covered_.count(p)) continue;
    KPath t = truncate(state_rules_, p);
    if (t.empty() || covered_.count(t)) continue;
    out.insert(std::move(t));
  }
  return {out.begin(), out.end()};
}

double CoverageModel::message_coverage(const NtRef& m) const {
  auto it = inside_.find(m.rule);
  if (it == inside_.end() || it->second.empty()) return 1.0;
  std::size_t hit = 0;
  for (const auto& p : it->second) hit += covered_.count(p);
  return static_cast<double>(hit) / static_cast<double>(it->second.size());
}

// ---- power schedules ----------------------------------------------------

double path_energy(const TargetStats& s, const KPath& p) {
  auto it = s.path_freq.find(p);
  int f = it == s.path_freq.end() ? 1 : std::max(1, it->second);
  return static_cast<double>(p.size()) / f;
}

double message_energy(const TargetStats& s, const std::string& key, double coverage) {
  auto it = s.message_freq.find(key);
  int f = it == s.message_freq.end() ? 1 : std::max(1, it->second);
  return coverage / f;
}

namespace {

std::size_t roulette(const std::vector<double>& energy, Rng& rng) {
  double total = std::accumulate(energy.begin(), energy.end(), 0.0);
  if (!(total > 0)) return std::uniform_int_distribution<std::size_t>(0, energy.size() - 1)(rng);
  double x = std::uniform_real_distribution<double>(0.0, total)(rng);
  for (std::size_t i = 0; i < energy.size(); ++i) {
    if (x < energy[i]) return i;
    x -= energy[i];
  }
  return energy.size() - 1;
}

void bump(int& slot_or_default) { slot_or_default = std::max(1, slot_or_default) + 1; }

}  // namespace

Target select_target(const CoverageModel& cov, TargetStats& stats, Rng& rng) {
  auto paths = cov.uncovered_state_paths();
  if (!paths.empty()) {
    std::vector<double> e;
    e.reserve(paths.size());
    for (const auto& p : paths) e.push_back(path_energy(stats, p));
    const KPath& chosen = paths[roulette(e, rng)];
    bump(stats.path_freq[chosen]);
    return Target{chosen, std::nullopt, {}};
  }
  const auto& g = cov.grammar();
  auto state = state_subgrammar(g).rules;
  // State chains ending in a message occurrence that still lead to uncovered paths.
  std::map<int, std::set<KPath>> contexts;
  for (const auto& p : cov.uncovered())
    for (std::size_t i = 1; i < p.size(); ++i) {
      if (!state.count(p[i - 1].rule)) break;
      if (state.count(p[i].rule)) continue;
      KPath c(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(i) + 1);
      c.back().alt = -1;
      contexts[p[i].rule].insert(std::move(c));
      break;
    }
  // Message types with nothing left to cover are skipped while others remain.
  std::vector<NtRef> msgs;
  for (const auto& m : cov.message_types())
    if (cov.message_coverage(m) < 1.0 || contexts.count(m.rule)) msgs.push_back(m);
  if (msgs.empty()) msgs = cov.message_types();
  if (msgs.empty()) return Target{};
  std::vector<double> e;
  for (const auto& m : msgs) {
    double c = cov.message_coverage(m);
    stats.coverage_by_message[message_key(m)] = c;
    e.push_back(message_energy(stats, message_key(m), c));
  }
  const NtRef& m = msgs[roulette(e, rng)];
  bump(stats.message_freq[message_key(m)]);
  const auto& ctx = contexts[m.rule];
  return Target{KPath{KNode{m.rule, -1, -1}}, m, {ctx.begin(), ctx.end()}};
}

// ---- navigation ---------------------------------------------------------

bool GuidePath::contains_restart() const {
  return std::any_of(steps.begin(), steps.end(), [](const GuideStep& s) { return s.kind == GuideStep::Restart; });
}

namespace {

constexpr int kMessageCost = 1;
constexpr int kRestartCost = 5;

struct Frame {
  int rule, alt, dot, ppos;
};

struct SearchState {
  std::vector<Frame> stack;
  int realized = -1;  // stack index of the target's deepest node
  bool restarted = false;
};

std::string key_of(const SearchState& s) {
  std::string k;
  k.reserve(s.stack.size() * 16 + 8);
  auto put = [&](int v) { k.append(reinterpret_cast<const char*>(&v), sizeof v); };
  put(s.realized);
  put(s.restarted);
  for (const auto& f : s.stack) {
    put(f.rule);
    put(f.alt);
    put(f.dot);
    put(f.ppos);
  }
  return k;
}

bool matches_at(const std::vector<Frame>& st, std::size_t top, const KPath& p) {
  if (p.empty() || top + 1 < p.size()) return false;
  std::size_t base = top + 1 - p.size();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Frame& f = st[base + i];
    if (f.rule != p[i].rule || f.alt != p[i].alt) return false;
    if (i > 0 && f.ppos != p[i].pos) return false;
  }
  return true;
}

int find_realized(const std::vector<Frame>& st, const KPath& p) {
  for (std::size_t top = 0; top < st.size(); ++top)
    if (matches_at(st, top, p)) return static_cast<int>(top);
  return -1;
}

std::vector<int> min_messages(const IoGrammar& g) {
  const int inf = 1 << 20;
  std::vector<int> m(static_cast<std::size_t>(g.rule_count()), inf);
  for (bool changed = true; changed;) {
    changed = false;
    for (int r = 0; r < g.rule_count(); ++r) {
      for (const auto& alt : g.rule(r).alternatives) {
        int sum = 0;
        for (const auto& e : alt) {
          auto* ref = as_ref(e);
          if (!ref) continue;
          sum += ref->is_message() ? 1 : m[static_cast<std::size_t>(ref->rule)];
          if (sum >= inf) break;
        }
        if (sum < m[static_cast<std::size_t>(r)]) {
          m[static_cast<std::size_t>(r)] = sum;
          changed = true;
        }
      }
    }
  }
  return m;
}

enum class Goal { StatePath, MessageType, End };

class Navigator {
public:
  Navigator(const IoGrammar& g, Goal goal, const Target* target) : g_(g), goal_(goal), target_(target), minmsg_(min_messages(g)) {}

  std::optional<GuidePath> run(const std::vector<const Prediction*>& starts, bool allow_restart, std::size_t max_states) {
    allow_restart_ = allow_restart;
    for (const auto* p : starts) {
      SearchState s = from_prediction(*p);
      push(std::move(s), -1, std::nullopt, 0, false);
    }
    std::size_t expanded = 0;
    while (!open_.empty()) {
      auto [f, gcost, id] = open_.top();
      open_.pop();
      if (gcost > nodes_[static_cast<std::size_t>(id)].g) continue;
      if (nodes_[static_cast<std::size_t>(id)].goal) return reconstruct(id);
      if (++expanded > max_states) break;
      successors(id);
    }
    return std::nullopt;
  }

private:
  struct NodeRec {
    SearchState s;
    int parent;
    std::optional<GuideStep> step;
    int g;
    bool goal;
  };
  using QItem = std::tuple<int, int, int>;

  SearchState from_prediction(const Prediction& p) {
    SearchState s;
    for (std::size_t i = 0; i < p.stack.size(); ++i)
      s.stack.push_back(Frame{p.stack[i].rule, p.stack[i].alt, p.stack[i].pos, i ? p.stack[i - 1].pos : -1});
    if (goal_ == Goal::StatePath) s.realized = find_realized(s.stack, target_->path);
    if (depth_cap_ < static_cast<int>(s.stack.size()) + extra_depth()) depth_cap_ = static_cast<int>(s.stack.size()) + extra_depth();
    return s;
  }

  int extra_depth() const { return (target_ ? static_cast<int>(target_->path.size()) : 0) + 6; }

  int heuristic(const SearchState& s) const {
    if (goal_ == Goal::End) return remaining(s, 0);
    if (s.realized < 0) return 0;
    return remaining(s, static_cast<std::size_t>(s.realized));
  }

  // Lower bound of messages needed to finish frames from `from` upward.
  int remaining(const SearchState& s, std::size_t from) const {
    int h = 0;
    for (std::size_t i = from; i < s.stack.size(); ++i) {
      const Frame& f = s.stack[i];
      const Alternative& alt = g_.rule(f.rule).alternatives[static_cast<std::size_t>(f.alt)];
      std::size_t j = static_cast<std::size_t>(f.dot) + (i + 1 < s.stack.size() ? 1 : 0);
      for (; j < alt.size(); ++j)
        if (auto* ref = as_ref(alt[j])) h += ref->is_message() ? 1 : minmsg_[static_cast<std::size_t>(ref->rule)];
    }
    return h;
  }

  void push(SearchState s, int parent, std::optional<GuideStep> step, int gcost, bool goal) {
    std::string k = key_of(s) + (goal ? "G" : "");
    auto it = best_.find(k);
    if (it != best_.end() && nodes_[static_cast<std::size_t>(it->second)].g <= gcost) return;
    int h = goal ? 0 : heuristic(s);
    int id = static_cast<int>(nodes_.size());
    nodes_.push_back(NodeRec{std::move(s), parent, std::move(step), gcost, goal});
    best_[k] = id;
    open_.push({gcost + h, gcost, id});
  }

  void successors(int id) {
    const NodeRec cur = nodes_[static_cast<std::size_t>(id)];
    const SearchState& s = cur.s;
    if (s.stack.empty()) {
      if (goal_ == Goal::End) return;
      if (!allow_restart_ || s.restarted) return;
      if (fresh_.empty()) {
        fresh_preds_ = predict(g_, empty_tree(g_));
        for (const auto& p : fresh_preds_) fresh_.push_back(&p);
      }
      GuideStep r;
      r.kind = GuideStep::Restart;
      for (const auto* p : fresh_) {
        SearchState n = from_prediction(*p);
        n.restarted = true;
        push(std::move(n), id, r, cur.g + kRestartCost, false);
      }
      return;
    }
    const Frame top = s.stack.back();
    const Alternative& alt = g_.rule(top.rule).alternatives[static_cast<std::size_t>(top.alt)];
    if (top.dot >= static_cast<int>(alt.size())) {
      SearchState n = s;
      int popped = static_cast<int>(n.stack.size()) - 1;
      n.stack.pop_back();
      if (!n.stack.empty()) n.stack.back().dot++;
      bool goal = (goal_ != Goal::End && s.realized == popped) || (goal_ == Goal::End && n.stack.empty());
      if (s.realized == popped) n.realized = -1;
      push(std::move(n), id, std::nullopt, cur.g, goal);
      return;
    }
    const Element& el = alt[static_cast<std::size_t>(top.dot)];
    auto* ref = as_ref(el);
    if (!ref) {
      SearchState n = s;
      n.stack.back().dot++;
      push(std::move(n), id, std::nullopt, cur.g, false);
      return;
    }
    if (ref->is_message()) {
      SearchState n = s;
      n.stack.back().dot++;
      GuideStep st{GuideStep::Message, Occurrence{top.rule, top.alt, top.dot}, ref->rule, *ref->sender};
      bool hit = goal_ == Goal::MessageType && n.realized < 0 && target_->message &&
                 ref->rule == target_->message->rule && ref->sender == target_->message->sender &&
                 (!target_->message->receiver || !ref->receiver || target_->message->receiver == ref->receiver) &&
                 in_context(s.stack, top.dot);
      // In a context, the enclosing frame must also complete.
      bool goal = hit && target_->contexts.empty();
      if (hit && !goal) n.realized = static_cast<int>(n.stack.size()) - 1;
      push(std::move(n), id, st, cur.g + kMessageCost, goal);
      return;
    }
    if (static_cast<int>(s.stack.size()) >= depth_cap_) return;
    const auto& alts = g_.rule(ref->rule).alternatives;
    for (std::size_t a = 0; a < alts.size(); ++a) {
      if (!alt_productive(g_, alts[a])) continue;
      SearchState n = s;
      n.stack.push_back(Frame{ref->rule, static_cast<int>(a), 0, top.dot});
      if (goal_ == Goal::StatePath && n.realized < 0 && matches_at(n.stack, n.stack.size() - 1, target_->path))
        n.realized = static_cast<int>(n.stack.size()) - 1;
      push(std::move(n), id, std::nullopt, cur.g, false);
    }
  }

  bool in_context(const std::vector<Frame>& st, int dot) const {
    if (target_->contexts.empty()) return true;
    for (const auto& c : target_->contexts) {
      KPath frames(c.begin(), c.end() - 1);
      if (c.back().pos == dot && matches_at(st, st.size() - 1, frames)) return true;
    }
    return false;
  }

  GuidePath reconstruct(int id) const {
    GuidePath out;
    out.cost = nodes_[static_cast<std::size_t>(id)].g;
    for (int i = id; i >= 0; i = nodes_[static_cast<std::size_t>(i)].parent)
      if (nodes_[static_cast<std::size_t>(i)].step) out.steps.push_back(*nodes_[static_cast<std::size_t>(i)].step);
    std::reverse(out.steps.begin(), out.steps.end());
    return out;
  }

  const IoGrammar& g_;
  Goal goal_;
  const Target* target_;
  std::vector<int> minmsg_;
  bool allow_restart_ = true;
  int depth_cap_ = 0;
  std::vector<NodeRec> nodes_;
  std::unordered_map<std::string, int> best_;
  std::priority_queue<QItem, std::vector<QItem>, std::greater<QItem>> open_;
  std::vector<Prediction> fresh_preds_;
  std::vector<const Prediction*> fresh_;
};

bool consistent(const Prediction& p, const std::set<KPath>& confirmed) {
  int k = 0;
  for (const auto& c : confirmed)
    if (!c.empty() && c.front().alt >= 0) k = std::max(k, static_cast<int>(c.size()));
  if (k == 0) return true;
  auto have = k_paths(p.tree, k);
  for (const auto& c : confirmed)
    if (!c.empty() && c.front().alt >= 0 && !have.count(c)) return false;
  return true;
}

}  // namespace

GuidePath a_star_to_k_path(const IoGrammar& g, const std::vector<Prediction>& predictions, const Target& target,
                           const std::set<KPath>& confirmed, std::size_t max_states) {
  Goal goal = target.message ? Goal::MessageType : Goal::StatePath;
  if (target.path.empty() && !target.message) throw TargetUnrealizable("empty target");
  std::vector<const Prediction*> starts;
  for (const auto& p : predictions)
    if (consistent(p, confirmed)) starts.push_back(&p);
  Navigator nav(g, goal, &target);
  if (predictions.empty()) {
    // Session is over or fresh: search from a new tree.
    auto fresh = predict(g, empty_tree(g));
    std::vector<const Prediction*> fs;
    for (const auto& p : fresh) fs.push_back(&p);
    auto r = nav.run(fs, false, max_states);
    if (!r) throw TargetUnrealizable("target cannot be reached from a fresh session");
    GuidePath out;
    out.steps.push_back(GuideStep{GuideStep::Restart, {}, -1, {}});
    out.steps.insert(out.steps.end(), r->steps.begin(), r->steps.end());
    out.cost = r->cost + kRestartCost;
    return out;
  }
  auto r = nav.run(starts, true, max_states);
  if (!r) throw TargetUnrealizable("target cannot be reached");
  return *r;
}

GuidePath a_star_to_k_path(const IoGrammar& g, const NodePtr& t, const Target& target,
                           const std::set<KPath>& confirmed) {
  return a_star_to_k_path(g, predict(g, t), target, confirmed);
}

int messages_to_end(const IoGrammar& g, const Prediction& p) {
  Navigator nav(g, Goal::End, nullptr);
  auto r = nav.run({&p}, false, 50000);
  return r ? r->cost : 1 << 20;
}

bool target_present(const NodePtr& t, const Target& target) {
  if (target.message) {
    for (const auto& m : message_nodes(t))
      if (m.node->rule == target.message->rule && m.node->sender == target.message->sender) return true;
    return false;
  }
  return k_paths(t, static_cast<int>(target.path.size())).count(target.path) > 0;
}

// ---- guidance -----------------------------------------------------------

void GuidanceState::begin_session() {
  confirmed.clear();
  seen_messages = 0;
  auto it = std::find_if(path.steps.begin(), path.steps.end(),
                         [](const GuideStep& s) { return s.kind == GuideStep::Restart; });
  if (it == path.steps.end())
    path.steps.clear();
  else
    path.steps.erase(path.steps.begin(), it + 1);
}

std::vector<std::size_t> guidance_step(GuidanceState& st, const CoverageModel& cov, TargetStats& stats,
                                       const NodePtr& tree, const std::vector<Prediction>& predictions,
                                       const std::function<bool(const std::string&)>& controlled, Rng& rng) {
  const IoGrammar& g = cov.grammar();
  std::vector<std::size_t> mine;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (controlled(predictions[i].sender)) mine.push_back(i);
  if (mine.empty()) return {};

  auto toward_end = [&]() {
    std::vector<std::size_t> best;
    int lo = 1 << 30;
    for (auto i : mine) {
      int c = messages_to_end(g, predictions[i]);
      if (c < lo) {
        lo = c;
        best.clear();
      }
      if (c == lo) best.push_back(i);
    }
    return best;
  };

  auto msgs = message_nodes(tree);
  if (cov.uncovered().empty()) {
    if (st.target) st.confirmed.insert(st.target->path);
    st.guide_to_end = true;
    st.seen_messages = msgs.size();
    return toward_end();
  }

  // Walk the guidance path with the messages exchanged since the last call.
  for (std::size_t i = st.seen_messages; i < msgs.size(); ++i) {
    if (st.path.steps.empty()) break;
    const GuideStep& s = st.path.steps.front();
    const Node& m = *msgs[i].node;
    if (s.kind == GuideStep::Message && s.rule == m.rule && m.sender && s.sender == *m.sender) {
      st.path.steps.erase(st.path.steps.begin());
    } else {
      st.path.steps.clear();
    }
  }
  st.seen_messages = msgs.size();

  if (st.path.steps.empty()) {
    if (st.target && target_present(tree, *st.target)) st.confirmed.insert(st.target->path);
    st.target = select_target(cov, stats, rng);
    try {
      st.path = a_star_to_k_path(g, predictions, *st.target, st.confirmed);
    } catch (const TargetUnrealizable&) {
      st.path = {};
    }
  }
  st.guide_to_end = st.path.contains_restart();

  std::vector<std::size_t> selected;
  if (!st.path.steps.empty()) {
    const GuideStep& next = st.path.steps.front();
    if (next.kind == GuideStep::Restart) return toward_end();
    for (auto i : mine)
      if (predictions[i].site == next.site && predictions[i].rule == next.rule && predictions[i].sender == next.sender)
        selected.push_back(i);
    if (selected.empty())
      for (auto i : mine)
        if (predictions[i].rule == next.rule && predictions[i].sender == next.sender) selected.push_back(i);
  }
  if (selected.empty()) selected = mine;
  return selected;
}

}  // namespace iog
