// Acceptance run: one PASS/FAIL line per criterion.
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include "iog/cli.hpp"
#include "iog/earley.hpp"
#include "iog/guide.hpp"
#include "oracles.hpp"

using namespace iog;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int n, bool ok, const std::string& what, const std::string& detail) {
  std::cout << "criterion " << n << " " << (ok ? "PASS" : "FAIL") << ": " << what << " (" << detail << ")"
            << std::endl;
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

std::string fmt(double x, int prec = 3) {
  std::ostringstream o;
  o.precision(prec);
  o << x;
  return o.str();
}

const char* kAll[] = {"smtp.iog", "ftp-lite.iog", "dns-lite.iog", "echo.iog"};

// ---- 1 ----------------------------------------------------------------

void guided_vs_random() {
  const int kBudget = 20000;
  const auto kWall = std::chrono::minutes(5);
  bool ok = true;
  std::string detail;
  double slowest = 0;
  for (const char* f : {"smtp.iog", "ftp-lite.iog"}) {
    IoGrammar g = oracle::bundled(f);
    std::vector<double> guided, random;
    int guided_full = 0, random_full = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed)
      for (bool gd : {true, false}) {
        EngineConfig cfg;
        cfg.k = 5;
        cfg.guided = gd;
        cfg.seed = seed;
        Engine e(g, cfg);
        auto t0 = Clock::now();
        CampaignReport r = e.run_campaign(kBudget, std::chrono::duration_cast<std::chrono::milliseconds>(kWall), true);
        slowest = std::max(slowest, seconds_since(t0));
        bool full = r.sessions_to_full > 0 && e.coverage().fully_covered();
        double n = full ? r.sessions_to_full : kBudget + 1;
        (gd ? guided : random).push_back(n);
        if (full) ++(gd ? guided_full : random_full);
      }
    double mg = median(guided), mr = median(random);
    bool this_ok = guided_full == 10 && mg <= 0.5 * mr;
    ok &= this_ok;
    detail += std::string(detail.empty() ? "" : "; ") + f + ": guided " + std::to_string(guided_full) +
              "/10 full, median " + fmt(mg, 5) + " sessions; random " + std::to_string(random_full) +
              "/10 full, median " + fmt(mr, 5) + "; ratio " + fmt(mg / mr);
  }
  ok &= slowest <= 300;
  detail += "; slowest campaign " + fmt(slowest) + "s";
  report(1, ok, "guided k=5 coverage reaches 100% in at most half the random sessions", detail);
}

// ---- 2 ----------------------------------------------------------------

void k_path_oracle() {
  bool ok = true;
  std::size_t sets = 0, trees = 0;
  for (const char* f : {"echo.iog", "smtp.iog", "dns-lite.iog"}) {
    IoGrammar g = oracle::bundled(f);
    auto sessions = oracle::selfplay(g, 5, 30);
    for (int k = 1; k <= 5; ++k) {
      ok &= all_k_paths(g, k) == oracle::brute_all_k_paths(g, k);
      ++sets;
      for (const auto& r : sessions) {
        ok &= k_paths(r.tree, k) == oracle::brute_tree_k_paths(r.tree, k);
        ++trees;
      }
    }
  }
  report(2, ok, "k-path sets equal brute-force enumeration for k=1..5",
         std::to_string(sets) + " grammar sets, " + std::to_string(trees) + " tree sets");
}

// ---- 3 ----------------------------------------------------------------

void forecast_completeness() {
  IoGrammar g = oracle::bundled("smtp.iog");
  std::size_t boundaries = 0, hits = 0;
  for (const auto& r : oracle::selfplay(g, 1, 1000)) {
    auto realized = message_nodes(r.tree);
    auto prefixes = oracle::session_prefixes(g, r.transcript, r.tree);
    for (std::size_t i = 0; i < realized.size(); ++i) {
      ++boundaries;
      if (i >= prefixes.size()) continue;
      const std::string name = g.rule(realized[i].node->rule).lhs;
      const std::string sender = *realized[i].node->sender;
      for (const auto& p : predict(g, prefixes[i]))
        if (p.sender == sender && p.nonterminal == name) {
          ++hits;
          break;
        }
    }
  }
  report(3, boundaries > 0 && hits == boundaries, "forecast contains the realized next message",
         std::to_string(hits) + "/" + std::to_string(boundaries) + " boundaries over 1000 smtp sessions");
}

// ---- 4 ----------------------------------------------------------------

void prefix_soundness() {
  bool ok = true;
  std::string detail;
  for (const char* f : kAll) {
    IoGrammar g = oracle::bundled(f);
    std::size_t checked = 0, good = 0;
    for (const auto& r : oracle::selfplay(g, 4, 1000, false)) {
      Bytes prefix;
      for (std::size_t i = 0; i <= r.transcript.size(); ++i) {
        ++checked;
        try {
          auto po = parse(g, g.start(), BitString::from_bytes(prefix), ParseMode::Prefix);
          bool incomplete = i == r.transcript.size();
          for (const auto& t : po.trees) incomplete |= !fully_expanded(t);
          if (!po.trees.empty() && incomplete) ++good;
        } catch (const NoParse&) {
        }
        if (i < r.transcript.size()) prefix += r.transcript[i].data;
      }
    }
    ok &= good == checked;
    detail += std::string(detail.empty() ? "" : ", ") + f + " " + std::to_string(good) + "/" + std::to_string(checked);
  }
  report(4, ok, "every message-boundary prefix of 1000 interactions per grammar has a prefix parse", detail);
}

// ---- 5 ----------------------------------------------------------------

struct Queue {
  std::deque<Bytes> q;
  FragmentSource src() {
    FragmentSource s;
    s.next = [this](std::chrono::milliseconds) -> std::optional<Bytes> {
      if (q.empty()) return std::nullopt;
      Bytes b = q.front();
      q.pop_front();
      return b;
    };
    s.unread = [this](Bytes b) { q.push_front(std::move(b)); };
    return s;
  }
};

void fragmentation_invariance() {
  using namespace std::chrono_literals;
  bool ok = true;
  std::string detail;
  for (const char* f : kAll) {
    IoGrammar g = oracle::bundled(f);
    Rng split(99);
    std::size_t done = 0, equal = 0;
    for (std::uint64_t seed = 1; done < 500; ++seed) {
      for (const auto& r : oracle::selfplay(g, seed, 20)) {
        auto prefixes = oracle::session_prefixes(g, r.transcript, r.tree);
        for (std::size_t i = 0; i < r.transcript.size() && i < prefixes.size() && done < 500; ++i) {
          std::vector<Prediction> mine;
          for (const auto& p : predict(g, prefixes[i]))
            if (p.sender == r.transcript[i].from) mine.push_back(p);
          const Bytes& data = r.transcript[i].data;
          ++done;
          try {
            Queue whole;
            whole.q = {data};
            auto ws = whole.src();
            auto ref = parse_message(g, mine, ws, 5ms, 0ms);
            Queue parts;
            for (std::size_t at = 0; at < data.size();) {
              std::size_t n = std::uniform_int_distribution<std::size_t>(1, 16)(split);
              parts.q.push_back(data.substr(at, n));
              at += n;
            }
            auto ps = parts.src();
            auto got = parse_message(g, mine, ps, 5ms, 0ms);
            if (structurally_equal(got.message, ref.message) && got.chosen.rule == ref.chosen.rule && parts.q.empty())
              ++equal;
          } catch (const std::exception&) {
          }
        }
      }
    }
    ok &= equal == done;
    detail += std::string(detail.empty() ? "" : ", ") + f + " " + std::to_string(equal) + "/" + std::to_string(done);
  }
  report(5, ok, "fragmented parses equal unsplit parses for 500 messages per grammar", detail);
}

// ---- 6 ----------------------------------------------------------------

int check(const std::string& spec, const std::vector<std::string>& where, const std::string& file, std::string& out) {
  std::ostringstream o, e;
  int code = cli::cmd_check(spec, where, {file}, o, e);
  out = o.str() + e.str();
  return code;
}

void oracle_checks() {
  const std::string spec = std::string(IOG_SPEC_DIR) + "/smtp.iog";
  const std::string where = "<server:error> not in <start>";
  IoGrammar g = load_spec_file(spec);
  fs::path dir = fs::temp_directory_path() / ("iog-acceptance-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  int clean = 0, clean_ok = 0;
  bool hostname_ok = false, error_ok = false, have_error = false;
  std::string out, why;
  for (const auto& r : oracle::selfplay(g, 2, 60)) {
    std::string file = (dir / ("s" + std::to_string(clean) + ".jsonl")).string();
    write_transcript(file, r.transcript);
    ++clean;
    bool has_error = false;
    std::size_t off = 0, err_off = 0;
    Bytes err_bytes;
    for (const auto& m : message_nodes(r.tree)) {
      Bytes b = yield_bits(m.node).bytes();
      if (!has_error && g.rule(m.node->rule).lhs == "error") {
        has_error = true;
        err_off = off;
        err_bytes = b;
      }
      off += b.size();
    }
    if (check(spec, {}, file, out) == cli::Ok && (has_error || check(spec, {where}, file, out) == cli::Ok)) ++clean_ok;
    if (has_error && !have_error) {
      have_error = true;
      int code = check(spec, {where}, file, out);
      std::string want = "\"" + escape_bytes(err_bytes) + "\" at byte " + std::to_string(err_off);
      error_ok = code == cli::Failed && out.find(want) != std::string::npos;
      if (!error_ok) why += " error witness missing: " + want;
    }
    if (!hostname_ok && r.transcript.size() > 2 && r.transcript[2].data.rfind("250 Hello ", 0) == 0) {
      auto tr = r.transcript;
      std::string host = tr[1].data.substr(5, tr[1].data.size() - 7);
      std::string other = host == "mail.example.com" ? "smtp.example.org" : "mail.example.com";
      tr[2].data = "250 Hello " + other + ", glad to meet you\r\n";
      std::string bad = (dir / "mutated.jsonl").string();
      write_transcript(bad, tr);
      int code = check(spec, {}, bad, out);
      std::size_t a = tr[0].data.size() + 5, b = tr[0].data.size() + tr[1].data.size() + 10;
      hostname_ok = code == cli::Failed && out.find("\"" + host + "\" at byte " + std::to_string(a)) != std::string::npos &&
                    out.find("\"" + other + "\" at byte " + std::to_string(b)) != std::string::npos;
      if (!hostname_ok) why += " hostname witness missing";
    }
  }
  fs::remove_all(dir);
  bool ok = hostname_ok && have_error && error_ok && clean_ok == clean;
  report(6, ok, "check flags hostname mismatch and <server:error> with witnesses; clean transcripts pass",
         "hostname " + std::string(hostname_ok ? "flagged" : "missed") + ", error " +
             (error_ok ? "flagged" : "missed") + ", clean " + std::to_string(clean_ok) + "/" + std::to_string(clean) +
             why);
}

// ---- 7 ----------------------------------------------------------------

void ftp_dynamic_port() {
  IoGrammar g = oracle::bundled("ftp-lite.iog");
  int data = 0, good = 0, sessions = 0;
  std::set<int> ports;
  for (const auto& r : oracle::selfplay(g, 1, 100)) {
    ++sessions;
    std::optional<int> announced;
    for (const auto& e : r.transcript) {
      if (e.from == "SC") {
        auto p = e.data.find("(|||");
        if (e.data.rfind("229 ", 0) == 0 && p != Bytes::npos) announced = std::stoi(e.data.substr(p + 4));
      }
      if (e.channel && *e.channel == "data") {
        ++data;
        if (announced && e.port && *e.port == *announced && *e.port >= 50000 && *e.port <= 50100) {
          ++good;
          ports.insert(*e.port);
        }
      }
    }
  }
  report(7, data > 0 && good == data && sessions == 100, "data-channel traffic uses the announced port in [50000, 50100]",
         std::to_string(good) + "/" + std::to_string(data) + " data messages over " + std::to_string(sessions) +
             " sessions, " + std::to_string(ports.size()) + " distinct ports");
}

// ---- 8 ----------------------------------------------------------------

void energies() {
  bool ok = true;
  std::string detail;
  TargetStats pinned;
  pinned.message_freq["m"] = 2;
  ok &= message_energy(pinned, "m", 0.5) == 0.25;
  KPath three(3, KNode{0, 0, -1});
  pinned.path_freq[three] = 2;
  ok &= path_energy(pinned, three) == 1.5;
  ok &= path_energy(TargetStats{}, three) == 3.0;

  IoGrammar g = parse_spec(
      "party client { controlled: true }\nparty server { controlled: true }\n"
      "<start> ::= <p> | <q>\n<p> ::= <client:a> | <client:b>\n<q> ::= <client:a>\n"
      "<a> ::= 'x' | 'y' | 'z'\n<b> ::= 'u' | 'v'\n");
  CoverageModel cov(g, 2);
  auto close = [&](std::vector<std::pair<std::string, std::string>> msgs) {
    return close_session(g, oracle::session_from(g, msgs));
  };
  const int n = 100000;
  double worst = 0;
  auto mc = [&](const TargetStats& base, const std::function<std::string(const Target&)>& key,
                const std::map<std::string, double>& energy) {
    double total = 0;
    for (const auto& [k, e] : energy) total += e;
    std::map<std::string, int> hits;
    Rng rng(2024);
    for (int i = 0; i < n; ++i) {
      TargetStats s = base;
      ++hits[key(select_target(cov, s, rng))];
    }
    bool good = hits.size() == energy.size();
    for (const auto& [k, e] : energy) {
      double want = e / total, got = static_cast<double>(hits[k]) / n;
      double rel = std::abs(got - want) / want;
      worst = std::max(worst, rel);
      good &= rel <= 0.02;
    }
    return good;
  };

  // State paths: cover everything but <p>'s second alternative.
  cov.add_tree(close({{"a", "x"}}));
  NodePtr via_q = nullptr;
  for (const auto& pr : predict(g, empty_tree(g)))
    if (pr.site.rule == g.rule_index("q")) {
      auto m = parse(g, "a", "x", ParseMode::Complete).trees.front();
      via_q = close_session(g, set_read_only(append_at(pr.tree, pr.hook, m)));
    }
  if (via_q) cov.add_tree(via_q);
  auto cands = cov.uncovered_state_paths();
  TargetStats base;
  std::map<std::string, double> pe;
  auto path_key = [](const KPath& p) {
    std::string s;
    for (const auto& k : p) s += std::to_string(k.rule) + "." + std::to_string(k.alt) + "." + std::to_string(k.pos) + "/";
    return s;
  };
  for (const auto& c : cands)
    if (c.size() == 2) base.path_freq[c] = 3;
  for (const auto& c : cands) pe[path_key(c)] = path_energy(base, c);
  bool paths_ok = cands.size() >= 2 && mc(base, [&](const Target& t) { return path_key(t.path); }, pe);
  ok &= paths_ok;
  detail += std::to_string(cands.size()) + " state paths";

  // Message types: state area fully covered, messages partly.
  for (const auto& pr : predict(g, empty_tree(g)))
    if (pr.nonterminal == "b") {
      auto m = parse(g, "b", "u", ParseMode::Complete).trees.front();
      cov.add_tree(close_session(g, set_read_only(append_at(pr.tree, pr.hook, m))));
    }
  bool msgs_ok = cov.uncovered_state_paths().empty() && !cov.fully_covered();
  if (msgs_ok) {
    TargetStats mb;
    std::map<std::string, double> me;
    for (const auto& m : cov.message_types()) {
      double c = cov.message_coverage(m);
      if (c >= 1.0) continue;
      mb.message_freq[message_key(m)] = 1 + static_cast<int>(me.size());
      me[message_key(m)] = message_energy(mb, message_key(m), c);
    }
    msgs_ok = me.size() >= 2 && mc(mb, [](const Target& t) { return t.message ? message_key(*t.message) : "?"; }, me);
    detail += ", " + std::to_string(me.size()) + " message types";
  }
  ok &= msgs_ok;
  detail += ", worst relative deviation " + fmt(worst * 100, 3) + "% over 10^5 draws";
  report(8, ok, "energies match hand values and roulette frequencies track energy ratios within 2%", detail);
}

// ---- 9 ----------------------------------------------------------------

void read_only_and_determinism() {
  std::size_t applications = 0, violations = 0;
  for (const char* f : kAll) {
    IoGrammar g = oracle::bundled(f);
    Rng rng(31);
    for (const auto& r : oracle::selfplay(g, 8, 40)) {
      if (applications >= 10000) break;
      auto prefixes = oracle::session_prefixes(g, r.transcript, r.tree);
      for (std::size_t i = 1; i + 1 < prefixes.size() && applications < 10000; ++i) {
        auto preds = predict(g, prefixes[i]);
        if (preds.empty()) continue;
        const Prediction& p = preds[std::uniform_int_distribution<std::size_t>(0, preds.size() - 1)(rng)];
        NodePtr t, other;
        try {
          t = append_at(p.tree, p.hook, random_expand(g, p.rule, rng));
          other = append_at(p.tree, p.hook, random_expand(g, p.rule, rng));
        } catch (const std::exception&) {
          continue;
        }
        std::vector<std::pair<TreePath, NodePtr>> frozen;
        TreePath path;
        std::function<void(const NodePtr&)> walk = [&](const NodePtr& n) {
          if (n->read_only) {
            frozen.push_back({path, n});
            return;
          }
          for (std::size_t c = 0; c < n->children.size(); ++c) {
            path.push_back(static_cast<int>(c));
            walk(n->children[c]);
            path.pop_back();
          }
        };
        walk(t);
        for (int j = 0; j < 25 && applications < 10000; ++j) {
          NodePtr n;
          try {
            n = j % 2 ? mutate(g, t, rng) : crossover(g, t, other, rng);
          } catch (const NothingMutable&) {
            continue;
          } catch (const NoCommonPoint&) {
            continue;
          }
          ++applications;
          for (const auto& [fp, node] : frozen) {
            const Node* now = node_at(n, fp);
            if (now != node.get() && !(now && yield_bits(subtree_at(n, fp)) == yield_bits(node))) ++violations;
          }
          t = n;
        }
      }
    }
  }
  bool same = true;
  std::size_t compared = 0;
  for (const char* f : kAll) {
    IoGrammar g = oracle::bundled(f);
    auto a = oracle::selfplay(g, 17, 50);
    auto b = oracle::selfplay(g, 17, 50);
    same &= a.size() == b.size();
    for (std::size_t i = 0; i < a.size() && i < b.size(); ++i, ++compared)
      same &= to_jsonl(a[i].transcript) == to_jsonl(b[i].transcript);
  }
  report(9, applications >= 10000 && violations == 0 && same, "operators never alter frozen bytes; equal seeds replay",
         std::to_string(applications) + " operator applications, " + std::to_string(violations) +
             " frozen-node changes, " + std::to_string(compared) + " transcripts compared" +
             (same ? " identical" : " differing"));
}

}  // namespace

int main() {
  int n = 0;
  for (auto fn : {guided_vs_random, k_path_oracle, forecast_completeness, prefix_soundness, fragmentation_invariance,
                  oracle_checks, ftp_dynamic_port, energies, read_only_and_determinism}) {
    ++n;
    try {
      fn();
    } catch (const std::exception& e) {
      report(n, false, "aborted", e.what());
    }
  }
  return failures == 0 ? 0 : 1;
}
