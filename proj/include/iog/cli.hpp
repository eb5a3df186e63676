#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "iog/engine.hpp"

namespace iog::cli {

enum Exit { Ok = 0, Failed = 1, Usage = 2 };

struct RunConfig {
  std::string spec;
  Mode mode = Mode::Selfplay;
  std::vector<std::string> control;
  std::vector<std::string> connect;  // [party=]host:port
  std::vector<std::string> where;
  int k = 5;
  bool guided = true;
  int sessions = 100;
  std::optional<double> duration;  // seconds
  bool stop_at_full = false;
  std::uint64_t seed = 1;
  double session_timeout = 30;
  double response_timeout = 5;
  int max_fragment = 16;
  GaParams ga;
  std::string out = "iog-out";
  bool verbose = false;
};

// A path as given, else the bundled spec of that name.
std::string resolve_spec(const std::string& path);
// Loads the spec and appends `where` constraints. Throws like parse_spec.
IoGrammar load_grammar(const std::string& spec, const std::vector<std::string>& where);

int cmd_lint(const std::string& spec, std::ostream& out, std::ostream& err);
int cmd_run(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_check(const std::string& spec, const std::vector<std::string>& where, const std::vector<std::string>& transcripts,
              std::ostream& out, std::ostream& err);
// Merges coverage.csv files (or directories holding them) into a median series.
int cmd_coverage(const std::vector<std::string>& inputs, const std::string& out_file, std::ostream& out,
                 std::ostream& err);

int main(int argc, char** argv);

}  // namespace iog::cli
