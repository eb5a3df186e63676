#include <gtest/gtest.h>

#include "iog/guide.hpp"
#include "oracles.hpp"

using namespace iog;

namespace {

const IoGrammar& smtp() {
  static IoGrammar g = oracle::bundled("smtp.iog");
  return g;
}

KNode at(const IoGrammar& g, const char* rule, int alt, int pos = -1) { return KNode{g.rule_index(rule), alt, pos}; }

std::vector<NodePtr> trees_of(const std::vector<SessionResult>& rs) {
  std::vector<NodePtr> out;
  for (const auto& r : rs) out.push_back(r.tree);
  return out;
}

std::size_t index_of_site(const std::vector<Prediction>& ps, Occurrence site) {
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (ps[i].site == site) return i;
  return ps.size();
}

auto everyone = [](const std::string&) { return true; };

}  // namespace

TEST(Guide, AllKPathsMatchBruteForce) {
  for (const char* f : {"smtp.iog", "echo.iog", "ftp-lite.iog", "dns-lite.iog"}) {
    IoGrammar g = oracle::bundled(f);
    for (int k = 1; k <= 5; ++k) EXPECT_EQ(all_k_paths(g, k), oracle::brute_all_k_paths(g, k)) << f << " k=" << k;
  }
}

TEST(Guide, AllKPathsSmall) {
  IoGrammar g = parse_spec("<start> ::= <a> <a>\n<a> ::= 'x' | 'y'\n");
  int s = g.start(), a = g.rule_index("a");
  std::set<KPath> want{{KNode{s, 0, -1}},
                       {KNode{a, 0, -1}},
                       {KNode{a, 1, -1}},
                       {KNode{s, 0, -1}, KNode{a, 0, 0}},
                       {KNode{s, 0, -1}, KNode{a, 1, 0}},
                       {KNode{s, 0, -1}, KNode{a, 0, 1}},
                       {KNode{s, 0, -1}, KNode{a, 1, 1}}};
  EXPECT_EQ(all_k_paths(g, 2), want);
  EXPECT_EQ(all_k_paths(g, 5), want);
}

TEST(Guide, CoveredIsUnionAndSubset) {
  for (const char* f : {"smtp.iog", "ftp-lite.iog", "dns-lite.iog"}) {
    IoGrammar g = oracle::bundled(f);
    auto trees = trees_of(oracle::selfplay(g, 3, 12));
    for (int k : {1, 3, 5}) {
      std::set<KPath> u;
      for (const auto& t : trees) {
        auto p = k_paths(t, k);
        u.insert(p.begin(), p.end());
      }
      auto c = covered_k_paths(trees, k);
      EXPECT_EQ(c, u);
      auto all = all_k_paths(g, k);
      EXPECT_TRUE(std::includes(all.begin(), all.end(), c.begin(), c.end())) << f;
    }
  }
}

TEST(Guide, CoverageModelBookkeeping) {
  CoverageModel cov(smtp(), 3);
  EXPECT_EQ(cov.fraction(), 0.0);
  EXPECT_EQ(cov.uncovered().size(), cov.all().size());
  double last = 0;
  for (const auto& r : oracle::selfplay(smtp(), 2, 20)) {
    auto before = cov.covered().size();
    auto added = cov.add_tree(r.tree);
    EXPECT_EQ(cov.covered().size(), before + added);
    EXPECT_GE(cov.fraction(), last);
    last = cov.fraction();
    EXPECT_EQ(cov.add_tree(r.tree), 0u);
  }
  EXPECT_GT(last, 0.0);
  EXPECT_DOUBLE_EQ(cov.fraction(), static_cast<double>(cov.covered().size()) / cov.all().size());
  for (const char* p : {"client", "server"}) {
    EXPECT_GE(cov.party_fraction(p), 0.0);
    EXPECT_LE(cov.party_fraction(p), 1.0);
  }
}

TEST(Guide, TruncateToStateArea) {
  const auto& g = smtp();
  KPath p{at(g, "connect", 0), at(g, "helo", 0, 1), at(g, "HELO", 0, 0), at(g, "hostname", 0, 1)};
  EXPECT_EQ(truncate_to_state_area(g, p), (KPath{at(g, "connect", 0), at(g, "helo", 0, 1)}));
  EXPECT_TRUE(truncate_to_state_area(g, KPath{at(g, "HELO", 0)}).empty());
  for (const auto& q : CoverageModel(g, 4).uncovered_state_paths()) {
    EXPECT_FALSE(q.empty());
    for (const auto& n : q) EXPECT_TRUE(state_subgrammar(g).rules.count(n.rule));
  }
}

TEST(Guide, Energies) {
  TargetStats s;
  KPath p3(3, KNode{0, 0, -1});
  EXPECT_DOUBLE_EQ(path_energy(s, p3), 3.0);
  s.path_freq[p3] = 4;
  EXPECT_DOUBLE_EQ(path_energy(s, p3), 0.75);
  EXPECT_DOUBLE_EQ(message_energy(s, "m", 0.5), 0.5);
  s.message_freq["m"] = 2;
  EXPECT_DOUBLE_EQ(message_energy(s, "m", 0.5), 0.25);
}

TEST(Guide, SelectionFollowsEnergy) {
  CoverageModel cov(smtp(), 3);
  for (const auto& r : oracle::selfplay(smtp(), 1, 3)) cov.add_tree(r.tree);
  auto cands = cov.uncovered_state_paths();
  ASSERT_GT(cands.size(), 2u);
  TargetStats base;
  base.path_freq[cands[0]] = 3;
  base.path_freq[cands[1]] = 2;
  double total = 0;
  for (const auto& c : cands) total += path_energy(base, c);
  std::map<KPath, int> hits;
  Rng rng(77);
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    TargetStats s = base;
    Target t = select_target(cov, s, rng);
    ASSERT_FALSE(t.message);
    ++hits[t.path];
    EXPECT_EQ(s.path_freq[t.path], std::max(1, base.path_freq.count(t.path) ? base.path_freq.at(t.path) : 1) + 1);
  }
  for (const auto& c : cands) {
    double want = path_energy(base, c) / total;
    double got = static_cast<double>(hits[c]) / n;
    EXPECT_NEAR(got, want, 4 * std::sqrt(want * (1 - want) / n) + 1e-3);
  }
}

TEST(Guide, MessageTargetsAfterStatePaths) {
  CoverageModel cov(smtp(), 3);
  bool reached = false;
  for (const auto& r : oracle::selfplay(smtp(), 1, 200, false)) {
    cov.add_tree(r.tree);
    if (!cov.uncovered_state_paths().empty()) continue;
    if (cov.fully_covered()) break;
    reached = true;
    TargetStats s;
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
      Target t = select_target(cov, s, rng);
      ASSERT_TRUE(t.message);
      EXPECT_EQ(t.path, (KPath{KNode{t.message->rule, -1, -1}}));
    }
    break;
  }
  EXPECT_TRUE(reached);
}

TEST(Guide, AStarSmtpErrorBranch) {
  const auto& g = smtp();
  Target t{KPath{at(g, "helo", 1)}, std::nullopt, {}};
  GuidePath p = a_star_to_k_path(g, empty_tree(g), t);
  EXPECT_EQ(p.cost, 3);
  ASSERT_EQ(p.steps.size(), 3u);
  EXPECT_EQ(p.steps[0].rule, g.rule_index("id"));
  EXPECT_EQ(p.steps[1].rule, g.rule_index("HELO"));
  EXPECT_EQ(p.steps[1].site, (Occurrence{g.rule_index("helo"), 1, 0}));
  EXPECT_EQ(p.steps[2].rule, g.rule_index("error"));
  EXPECT_FALSE(p.contains_restart());
}

TEST(Guide, AStarDataError) {
  const auto& g = smtp();
  Target t{KPath{at(g, "to", 0), at(g, "data", 1, 2)}, std::nullopt, {}};
  EXPECT_EQ(a_star_to_k_path(g, empty_tree(g), t).cost, 11);
}

TEST(Guide, AStarRestart) {
  const auto& g = smtp();
  NodePtr t = oracle::session_from(g, {{"id", "220 mail.example.com ESMTP Postfix\r\n"},
                                       {"HELO", "HELO mail.example.com\r\n"},
                                       {"error", "550 x\r\n.\r\n\r\n"}});
  Target target{KPath{at(g, "helo", 0)}, std::nullopt, {}};
  GuidePath p = a_star_to_k_path(g, t, target);
  EXPECT_TRUE(p.contains_restart());
  // restart, then id HELO hello MAIL_FROM error
  EXPECT_EQ(p.cost, 5 + 5);
}

TEST(Guide, AStarMatchesBreadthFirst) {
  for (const char* f : {"smtp.iog", "ftp-lite.iog", "echo.iog"}) {
    IoGrammar g = oracle::bundled(f);
    auto area = state_subgrammar(g).rules;
    int checked = 0;
    for (const auto& p : all_k_paths(g, 2)) {
      bool state = true;
      for (const auto& n : p) state &= area.count(n.rule) > 0;
      if (!state) continue;
      Target t{p, std::nullopt, {}};
      int bfs = oracle::bfs_messages_to(g, p, 14);
      try {
        GuidePath gp = a_star_to_k_path(g, empty_tree(g), t);
        EXPECT_EQ(gp.cost, bfs) << f;
        EXPECT_EQ(static_cast<int>(gp.steps.size()), gp.cost);
      } catch (const TargetUnrealizable&) {
        EXPECT_EQ(bfs, -1) << f;
      }
      ++checked;
    }
    EXPECT_GT(checked, 0);
  }
}

TEST(Guide, MessagesToEnd) {
  const auto& g = smtp();
  NodePtr t = oracle::session_from(g, {{"id", "220 mail.example.com ESMTP Postfix\r\n"}});
  auto ps = predict(g, t);
  auto err = index_of_site(ps, Occurrence{g.rule_index("helo"), 1, 0});
  auto ok = index_of_site(ps, Occurrence{g.rule_index("helo"), 0, 0});
  ASSERT_LT(err, ps.size());
  ASSERT_LT(ok, ps.size());
  EXPECT_EQ(messages_to_end(g, ps[err]), 2);
  EXPECT_EQ(messages_to_end(g, ps[ok]), 4);
}

TEST(Guide, StepFollowsPath) {
  const auto& g = smtp();
  CoverageModel cov(g, 2);
  TargetStats stats;
  Rng rng(1);
  GuidanceState st;
  st.begin_session();
  st.target = Target{KPath{at(g, "helo", 1)}, std::nullopt, {}};
  st.path = a_star_to_k_path(g, empty_tree(g), *st.target);
  auto ps0 = predict(g, empty_tree(g));
  auto sel0 = guidance_step(st, cov, stats, empty_tree(g), ps0, everyone, rng);
  ASSERT_EQ(sel0.size(), 1u);
  EXPECT_EQ(ps0[sel0[0]].nonterminal, "id");

  NodePtr t = oracle::session_from(g, {{"id", "220 mail.example.com ESMTP Postfix\r\n"}});
  auto ps1 = predict(g, t);
  auto sel1 = guidance_step(st, cov, stats, t, ps1, everyone, rng);
  ASSERT_EQ(sel1.size(), 1u);
  EXPECT_EQ(ps1[sel1[0]].site, (Occurrence{g.rule_index("helo"), 1, 0}));
  EXPECT_EQ(st.path.steps.size(), 2u);
}

TEST(Guide, StepUncontrolled) {
  const auto& g = smtp();
  CoverageModel cov(g, 2);
  TargetStats stats;
  Rng rng(1);
  GuidanceState st;
  auto ps = predict(g, empty_tree(g));
  EXPECT_TRUE(guidance_step(st, cov, stats, empty_tree(g), ps, [](const std::string& p) { return p == "client"; }, rng)
                  .empty());
}

TEST(Guide, StepTowardEndWhenCovered) {
  const auto& g = smtp();
  CoverageModel cov(g, 1);
  for (const auto& r : oracle::selfplay(g, 1, 300)) cov.add_tree(r.tree);
  ASSERT_TRUE(cov.fully_covered());
  TargetStats stats;
  Rng rng(1);
  GuidanceState st;
  NodePtr t = oracle::session_from(g, {{"id", "220 mail.example.com ESMTP Postfix\r\n"}});
  auto ps = predict(g, t);
  auto sel = guidance_step(st, cov, stats, t, ps, everyone, rng);
  ASSERT_EQ(sel.size(), 1u);
  EXPECT_EQ(ps[sel[0]].site, (Occurrence{g.rule_index("helo"), 1, 0}));
  EXPECT_TRUE(st.guide_to_end);
}

TEST(Guide, StepSelectsControlledSubset) {
  const auto& g = oracle::bundled("ftp-lite.iog");
  CoverageModel cov(g, 3);
  TargetStats stats;
  Rng rng(4);
  auto client = [](const std::string& p) { return p == "CC" || p == "CD"; };
  for (const auto& r : oracle::selfplay(g, 9, 4)) {
    GuidanceState st;
    st.begin_session();
    auto prefixes = oracle::session_prefixes(g, r.transcript, r.tree);
    for (const auto& t : prefixes) {
      auto ps = predict(g, t);
      auto sel = guidance_step(st, cov, stats, t, ps, client, rng);
      bool any = std::any_of(ps.begin(), ps.end(), [&](const Prediction& p) { return client(p.sender); });
      EXPECT_EQ(sel.empty(), !any);
      for (auto i : sel) {
        ASSERT_LT(i, ps.size());
        EXPECT_TRUE(client(ps[i].sender));
      }
    }
    cov.add_tree(r.tree);
  }
}
