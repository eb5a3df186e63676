#include "iog/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace iog::cli {

namespace {

std::string printable(const Bytes& b) {
  std::string s;
  for (unsigned char c : b) {
    if (c == '\r') s += "\\r";
    else if (c == '\n') s += "\\n";
    else if (c == '\\') s += "\\\\";
    else if (c >= 0x20 && c < 0x7f) s += static_cast<char>(c);
    else {
      char buf[8];
      std::snprintf(buf, sizeof buf, "\\x%02x", c);
      s += buf;
    }
  }
  return s;
}

void print_violation(std::ostream& os, const IoGrammar& g, const Violation& v) {
  os << "violation: constraint " << v.constraint;
  if (v.constraint >= 0 && v.constraint < static_cast<int>(g.constraints().size()))
    os << " (" << render(g.constraints()[static_cast<std::size_t>(v.constraint)].expr) << ")";
  os << "\n  failing: " << v.text << "\n";
  for (const auto& w : v.witness)
    os << "  " << w.name << " = \"" << printable(w.bytes) << "\" at byte " << w.offset << "\n";
}

json violation_json(const IoGrammar& g, const Violation& v) {
  json j;
  j["constraint"] = v.constraint;
  if (v.constraint >= 0 && v.constraint < static_cast<int>(g.constraints().size()))
    j["expr"] = render(g.constraints()[static_cast<std::size_t>(v.constraint)].expr);
  j["failing"] = v.text;
  j["witness"] = json::array();
  for (const auto& w : v.witness)
    j["witness"].push_back({{"name", w.name}, {"data_hex", to_hex(w.bytes)}, {"offset", w.offset}});
  return j;
}

std::pair<std::string, std::string> split_party(const std::string& s) {
  auto eq = s.find('=');
  if (eq == std::string::npos) return {"", s};
  return {s.substr(0, eq), s.substr(eq + 1)};
}

Endpoint parse_host_port(const std::string& s, Endpoint base) {
  auto colon = s.rfind(':');
  std::string host = colon == std::string::npos ? base.host : s.substr(0, colon);
  std::string port = colon == std::string::npos ? s : s.substr(colon + 1);
  try {
    std::size_t used = 0;
    int p = std::stoi(port, &used);
    if (used != port.size() || p < 0 || p > 65535) throw std::invalid_argument(port);
    base.port = p;
  } catch (const std::exception&) {
    throw ConfigError("bad endpoint '" + s + "'");
  }
  if (!host.empty()) base.host = host;
  base.dynamic = false;
  return base;
}

std::string join_reason_counts(const std::map<std::string, int>& m) {
  std::string s;
  for (const auto& [k, v] : m) s += (s.empty() ? "" : ", ") + k + "=" + std::to_string(v);
  return s;
}

std::string fixed(double v, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

struct CsvSeries {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvSeries read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open " + path);
  CsvSeries s;
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::stringstream ss(l);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  s.header = split(line);
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != s.header.size()) throw std::runtime_error(path + ":" + std::to_string(n) + ": wrong column count");
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        row.push_back(std::stod(c));
      } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(n) + ": not a number: " + c);
      }
    }
    s.rows.push_back(std::move(row));
  }
  return s;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

}  // namespace

std::string resolve_spec(const std::string& path) {
  if (fs::exists(path)) return path;
  for (const std::string& name : {path, path + ".iog"}) {
    fs::path p = fs::path(IOG_SPEC_DIR) / name;
    if (fs::exists(p)) return p.string();
  }
  return path;
}

IoGrammar load_grammar(const std::string& spec, const std::vector<std::string>& where) {
  IoGrammar g = load_spec_file(resolve_spec(spec));
  if (where.empty()) return g;
  std::vector<Expr> extra;
  for (const auto& w : where) extra.push_back(parse_constraint(w));
  return g.with_constraints(extra);
}

int cmd_lint(const std::string& spec, std::ostream& out, std::ostream& err) {
  std::string path = resolve_spec(spec);
  IoGrammar g;
  try {
    g = load_spec_file(path);
  } catch (const std::ios_base::failure& e) {
    err << "error: " << e.what() << "\n";
    return Usage;
  } catch (const SpecError& e) {
    err << path << ":" << e.loc().line << ":" << e.loc().col << ": error: " << e.what() << "\n";
    return Failed;
  }
  int errors = 0;
  for (const auto& d : validate(g)) {
    err << format_diagnostic(d, path) << "\n";
    if (d.severity == Diagnostic::Error) ++errors;
  }
  out << path << ": " << g.rule_count() << " rules, " << g.parties().size() << " parties, "
      << g.constraints().size() << " constraints, " << errors << " errors\n";
  return errors ? Failed : Ok;
}

int cmd_run(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  IoGrammar g;
  try {
    g = load_grammar(rc.spec, rc.where);
  } catch (const std::ios_base::failure& e) {
    err << "error: " << e.what() << "\n";
    return Usage;
  } catch (const SpecError& e) {
    err << rc.spec << ":" << e.loc().line << ":" << e.loc().col << ": error: " << e.what() << "\n";
    return Usage;
  }
  for (const auto& d : validate(g))
    if (d.severity == Diagnostic::Error) {
      err << format_diagnostic(d, rc.spec) << "\n";
      return Usage;
    }
  if (rc.k < 1) {
    err << "error: --k must be at least 1\n";
    return Usage;
  }

  EngineConfig ec;
  ec.mode = rc.mode;
  ec.controlled = {rc.control.begin(), rc.control.end()};
  ec.k = rc.k;
  ec.guided = rc.guided;
  ec.seed = rc.seed;
  ec.session_timeout = std::chrono::milliseconds(static_cast<long long>(rc.session_timeout * 1000));
  ec.response_timeout = std::chrono::milliseconds(static_cast<long long>(rc.response_timeout * 1000));
  ec.max_fragment = rc.max_fragment;
  ec.ga = rc.ga;
  if (rc.verbose) ec.log = [&err](const std::string& s) { err << s << "\n"; };

  std::unique_ptr<Engine> engine;
  try {
    for (const auto& c : rc.connect) {
      auto [party, addr] = split_party(c);
      if (!party.empty()) {
        const PartyDecl* p = g.party(party);
        if (!p) throw ConfigError("unknown party '" + party + "'");
        ec.endpoint_overrides[party] = parse_host_port(addr, p->endpoint);
        continue;
      }
      // Without a party name: every controlled party that connects out.
      bool any = false;
      for (const auto& p : g.parties()) {
        bool ctl = rc.mode == Mode::Selfplay || (rc.control.empty() ? p.fuzzer_controlled
                                                                   : ec.controlled.count(p.name) > 0);
        if (ctl && p.endpoint.kind == Endpoint::TcpConnect && !p.endpoint.dynamic) {
          ec.endpoint_overrides[p.name] = parse_host_port(addr, p.endpoint);
          any = true;
        }
      }
      if (!any) throw ConfigError("--connect " + c + ": no controlled party connects out; use party=host:port");
    }
    engine = std::make_unique<Engine>(g, ec);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return Usage;
  } catch (const SpecError& e) {
    err << "error: " << e.what() << "\n";
    return Usage;
  }

  std::error_code ec_fs;
  fs::create_directories(rc.out, ec_fs);
  if (ec_fs) {
    err << "error: cannot create " << rc.out << ": " << ec_fs.message() << "\n";
    return Usage;
  }
  std::ofstream csv(fs::path(rc.out) / "coverage.csv");
  if (!csv) {
    err << "error: cannot write " << (fs::path(rc.out) / "coverage.csv").string() << "\n";
    return Usage;
  }
  csv << "time,percent_total";
  for (const auto& p : g.parties()) csv << ",percent_" << p.name;
  csv << "\n";

  std::map<std::string, int> reasons;
  json violations = json::array();
  int index = 0;
  bool io_failed = false;
  auto on_session = [&](const SessionResult& r, const CoverageSnapshot& snap) {
    ++index;
    char name[32];
    std::snprintf(name, sizeof name, "session_%04d.jsonl", index);
    try {
      write_transcript((fs::path(rc.out) / name).string(), r.transcript);
    } catch (const std::exception& e) {
      if (!io_failed) err << "error: " << e.what() << "\n";
      io_failed = true;
    }
    csv << fixed(snap.seconds, 3) << "," << fixed(snap.total * 100, 4);
    for (const auto& p : g.parties()) csv << "," << fixed(snap.per_party.at(p.name) * 100, 4);
    csv << "\n";
    ++reasons[to_string(r.end_reason)];
    for (const auto& v : r.verdict.violations) {
      json j = violation_json(g, v);
      j["session"] = index;
      violations.push_back(j);
    }
    if (r.end_reason == EndReason::ParseFailure || r.end_reason == EndReason::TransportFailure) {
      json j;
      j["session"] = index;
      j["end_reason"] = to_string(r.end_reason);
      j["detail"] = r.detail;
      if (r.failed_message >= 0) {
        j["message"] = r.failed_message;
        j["offset"] = r.failure_offset;
      }
      violations.push_back(j);
    }
    if (rc.verbose)
      err << "session " << index << ": " << to_string(r.end_reason) << ", " << r.transcript.size()
          << " messages, coverage " << fixed(snap.total * 100, 2) << "%\n";
  };

  std::optional<std::chrono::milliseconds> duration;
  if (rc.duration) duration = std::chrono::milliseconds(static_cast<long long>(*rc.duration * 1000));
  CampaignReport rep = engine->run_campaign(rc.sessions, duration, rc.stop_at_full, on_session);
  csv.flush();

  json summary;
  summary["spec"] = rc.spec;
  summary["mode"] = rc.mode == Mode::Selfplay ? "selfplay" : "fuzz";
  summary["guided"] = rc.guided;
  summary["k"] = rc.k;
  summary["seed"] = rc.seed;
  summary["sessions"] = rep.sessions.size();
  summary["end_reasons"] = json::object();
  for (const auto& [k, v] : reasons) summary["end_reasons"][k] = v;
  summary["final_coverage"] = rep.final_coverage;
  summary["final_coverage_per_party"] = json::object();
  for (const auto& p : g.parties()) summary["final_coverage_per_party"][p.name] = engine->coverage().party_fraction(p.name);
  summary["k_paths_total"] = engine->coverage().all().size();
  summary["k_paths_covered"] = engine->coverage().covered().size();
  if (rep.sessions_to_full > 0) summary["sessions_to_full"] = rep.sessions_to_full;
  else summary["sessions_to_full"] = nullptr;
  summary["violations"] = violations;
  std::ofstream sj(fs::path(rc.out) / "summary.json");
  sj << summary.dump(2) << "\n";
  if (!sj || !csv || io_failed) {
    err << "error: cannot write artifacts under " << rc.out << "\n";
    return Usage;
  }

  out << rep.sessions.size() << " sessions (" << join_reason_counts(reasons) << "), coverage "
      << fixed(rep.final_coverage * 100, 2) << "% of " << engine->coverage().all().size() << " k-paths";
  if (!violations.empty()) out << ", " << violations.size() << " failures";
  out << "\n";
  return violations.empty() ? Ok : Failed;
}

int cmd_check(const std::string& spec, const std::vector<std::string>& where, const std::vector<std::string>& transcripts,
              std::ostream& out, std::ostream& err) {
  IoGrammar g;
  try {
    g = load_grammar(spec, where);
  } catch (const std::ios_base::failure& e) {
    err << "error: " << e.what() << "\n";
    return Usage;
  } catch (const SpecError& e) {
    err << spec << ":" << e.loc().line << ":" << e.loc().col << ": error: " << e.what() << "\n";
    return Usage;
  }
  for (const auto& d : validate(g))
    if (d.severity == Diagnostic::Error) {
      err << format_diagnostic(d, spec) << "\n";
      return Usage;
    }
  int worst = Ok;
  for (const auto& path : transcripts) {
    std::vector<TranscriptEntry> entries;
    try {
      entries = read_transcript(path);
    } catch (const std::ios_base::failure& e) {
      err << "error: " << e.what() << "\n";
      return Usage;
    } catch (const FormatError& e) {
      err << path << ": " << e.what() << "\n";
      return Usage;
    }
    try {
      CheckResult r = check_transcript(g, entries);
      if (r.verdict.satisfied) {
        out << path << ": ok (" << entries.size() << " messages" << (r.complete ? "" : ", incomplete") << ")\n";
        continue;
      }
      out << path << ": " << r.verdict.violations.size() << " violation(s)\n";
      for (const auto& v : r.verdict.violations) print_violation(out, g, v);
      worst = Failed;
    } catch (const ParseFailure& e) {
      out << path << ": parse failure: " << e.what() << "\n";
      worst = Failed;
    }
  }
  return worst;
}

int cmd_coverage(const std::vector<std::string>& inputs, const std::string& out_file, std::ostream& out,
                 std::ostream& err) {
  std::vector<std::string> files;
  for (const auto& in : inputs) {
    fs::path p(in);
    if (fs::is_regular_file(p)) {
      files.push_back(p.string());
    } else if (fs::is_directory(p)) {
      if (fs::exists(p / "coverage.csv")) {
        files.push_back((p / "coverage.csv").string());
        continue;
      }
      std::vector<std::string> sub;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_directory() && fs::exists(e.path() / "coverage.csv")) sub.push_back((e.path() / "coverage.csv").string());
      std::sort(sub.begin(), sub.end());
      if (sub.empty()) {
        err << "error: no coverage.csv under " << in << "\n";
        return Usage;
      }
      files.insert(files.end(), sub.begin(), sub.end());
    } else {
      err << "error: cannot open " << in << "\n";
      return Usage;
    }
  }
  if (files.empty()) {
    err << "error: no inputs\n";
    return Usage;
  }
  std::vector<CsvSeries> runs;
  try {
    for (const auto& f : files) runs.push_back(read_csv(f));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return Usage;
  }
  for (const auto& r : runs)
    if (r.header != runs.front().header || r.header.size() < 2 || r.header[0] != "time") {
      err << "error: coverage files have different or unexpected columns\n";
      return Failed;
    }
  std::size_t len = 0;
  for (const auto& r : runs) len = std::max(len, r.rows.size());
  const auto& header = runs.front().header;

  std::ostringstream os;
  for (std::size_t c = 0; c < header.size(); ++c) os << (c ? "," : "") << header[c];
  os << "\n";
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      // Finished runs hold their last value.
      std::vector<double> vals;
      for (const auto& r : runs)
        if (!r.rows.empty()) vals.push_back(r.rows[std::min(i, r.rows.size() - 1)][c]);
      os << (c ? "," : "") << fixed(median(vals), c == 0 ? 3 : 4);
    }
    os << "\n";
  }
  if (out_file.empty() || out_file == "-") {
    out << os.str();
  } else {
    std::ofstream f(out_file);
    f << os.str();
    if (!f) {
      err << "error: cannot write " << out_file << "\n";
      return Usage;
    }
    out << "merged " << runs.size() << " runs into " << out_file << "\n";
  }
  return Ok;
}

int main(int argc, char** argv) {
  CLI::App app{"iogfuzz: protocol test generator and oracle driven by I/O grammars"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Config file (same keys as flags; flags take precedence)");

  RunConfig rc;
  app.add_option("--spec", rc.spec, "I/O grammar file or bundled spec name");
  app.add_option("--k", rc.k, "k-path length")->check(CLI::PositiveNumber);
  app.add_flag("--guided,!--random", rc.guided, "Coverage guidance (--guided=false for random)");
  app.add_option("--sessions", rc.sessions, "Number of sessions")->check(CLI::NonNegativeNumber);
  app.add_option("--duration", rc.duration, "Campaign time limit in seconds");
  app.add_flag("--stop-at-full", rc.stop_at_full, "Stop once every k-path is covered");
  app.add_option("--seed", rc.seed, "Random seed");
  app.add_option("--control", rc.control, "Party the fuzzer mocks (repeatable)")->allow_extra_args(false);
  app.add_option("--connect", rc.connect, "[party=]host:port endpoint override (repeatable)")->allow_extra_args(false);
  app.add_option("--where", rc.where, "Extra constraint (repeatable)")->allow_extra_args(false);
  app.add_option("--session-timeout", rc.session_timeout, "Session timeout in seconds");
  app.add_option("--response-timeout", rc.response_timeout, "Wait for an external message in seconds");
  app.add_option("--max-fragment", rc.max_fragment, "Selfplay loopback fragment size limit (0: whole messages)");
  app.add_option("--population", rc.ga.population, "GA population size");
  app.add_option("--generations", rc.ga.generations, "GA generations");
  app.add_option("--tournament", rc.ga.tournament, "GA tournament size");
  app.add_option("--crossover-rate", rc.ga.crossover_rate, "GA crossover rate");
  app.add_option("--mutation-rate", rc.ga.mutation_rate, "GA mutation rate");
  app.add_option("--elitism", rc.ga.elitism, "GA elite count");
  app.add_option("--depth-budget", rc.ga.depth_budget, "Random expansion depth budget");
  app.add_option("--out", rc.out, "Output directory")->envname("IOG_OUT");
  app.add_flag("-v,--verbose", rc.verbose, "Log one line per message");

  std::string lint_spec;
  auto* lint = app.add_subcommand("lint", "Check a spec");
  lint->add_option("spec", lint_spec, "Spec file");
  lint->fallthrough();

  auto* selfplay = app.add_subcommand("selfplay", "Play every party against itself");
  selfplay->fallthrough();
  auto* fuzz = app.add_subcommand("fuzz", "Mock some parties against external ones");
  fuzz->fallthrough();

  std::vector<std::string> check_files;
  auto* check = app.add_subcommand("check", "Check transcripts against the spec");
  check->add_option("transcripts", check_files, "JSONL transcripts")->required();
  check->fallthrough();

  std::vector<std::string> cov_inputs;
  std::string cov_out;
  auto* coverage = app.add_subcommand("coverage", "Merge coverage.csv files into a median series");
  coverage->add_option("inputs", cov_inputs, "Run directories or CSV files")->required();
  coverage->add_option("-o,--output", cov_out, "Output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? Ok : Usage;
  }

  try {
    if (*lint) {
      std::string spec = lint_spec.empty() ? rc.spec : lint_spec;
      if (spec.empty()) {
        std::cerr << "error: no spec given\n";
        return Usage;
      }
      return cmd_lint(spec, std::cout, std::cerr);
    }
    if (*coverage) return cmd_coverage(cov_inputs, cov_out, std::cout, std::cerr);
    if (rc.spec.empty()) {
      std::cerr << "error: --spec is required\n";
      return Usage;
    }
    if (*check) return cmd_check(rc.spec, rc.where, check_files, std::cout, std::cerr);
    rc.mode = *fuzz ? Mode::Fuzz : Mode::Selfplay;
    return cmd_run(rc, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return Usage;
  }
}

}  // namespace iog::cli
