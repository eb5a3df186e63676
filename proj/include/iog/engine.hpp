#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "iog/constrain.hpp"
#include "iog/evolve.hpp"
#include "iog/forecast.hpp"
#include "iog/guide.hpp"
#include "iog/transcript.hpp"
#include "iog/transport.hpp"

namespace iog {

enum class Mode { Fuzz, Selfplay };
enum class EndReason { Accepting, Timeout, ConstraintViolation, ParseFailure, TransportFailure };

std::string to_string(EndReason r);

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class Busy : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct EngineConfig {
  Mode mode = Mode::Selfplay;
  // Fuzz mode: parties the engine mocks. Empty means the spec's flags.
  std::set<std::string> controlled;
  int k = 5;
  bool guided = true;
  std::uint64_t seed = 1;
  std::chrono::milliseconds session_timeout{30000};
  std::chrono::milliseconds response_timeout{5000};
  std::chrono::milliseconds extension_wait{50};
  GaParams ga;
  int max_messages = 200;
  int max_fragment = 16;  // loopback fragment sizes 1..max_fragment; 0 sends whole messages
  std::map<std::string, Endpoint> endpoint_overrides;
  std::function<void(const std::string&)> log;
};

struct MessageStat {
  std::string sender;
  std::string nonterminal;
  std::size_t bytes = 0;
  double seconds = 0;
  bool generated = false;
};

struct SessionResult {
  NodePtr tree;
  Verdict verdict;
  std::vector<TranscriptEntry> transcript;
  std::vector<MessageStat> stats;
  EndReason end_reason = EndReason::Accepting;
  std::string detail;
  int failed_message = -1;
  std::size_t failure_offset = 0;
};

struct CoverageSnapshot {
  int session = 0;
  double seconds = 0;
  double total = 0;
  std::map<std::string, double> per_party;
};

struct CampaignReport {
  bool guided = true;
  Mode mode = Mode::Selfplay;
  std::uint64_t seed = 0;
  std::vector<SessionResult> sessions;
  std::vector<CoverageSnapshot> coverage;
  int sessions_to_full = -1;  // 1-based; -1 if never reached
  double final_coverage = 0;
};

class Engine {
public:
  Engine(const IoGrammar& g, EngineConfig cfg);
  ~Engine();

  SessionResult run_session();
  // Runs up to `sessions` sessions (or until `duration` elapses); stops early
  // at full coverage when `stop_at_full`.
  CampaignReport run_campaign(int sessions, std::optional<std::chrono::milliseconds> duration = std::nullopt,
                              bool stop_at_full = false,
                              const std::function<void(const SessionResult&, const CoverageSnapshot&)>& on_session = {});

  // Next connection of `party` uses host:port. Throws UnknownParty, Busy.
  void reconfigure_endpoint(const std::string& party, const std::string& host, int port);
  const Endpoint& endpoint(const std::string& party) const;

  CoverageModel& coverage() { return coverage_; }
  TargetStats& stats() { return stats_; }
  GuidanceState& guidance() { return guidance_; }
  const IoGrammar& grammar() const { return g_; }
  bool controlled(const std::string& party) const { return controlled_.count(party) > 0; }

private:
  struct Channel;
  Channel& channel_of(const std::string& party);
  void open_static_channels();
  void close_channels();
  void ensure_connected(Channel& ch, const std::string& party);
  void transmit(const std::string& from, const std::string& to, const Bytes& data, TranscriptEntry& entry);
  void apply_effects(const std::vector<Effect>& effects, const std::string& party);
  std::string receiver_of(const Prediction& p) const;

  IoGrammar g_;
  EngineConfig cfg_;
  std::set<std::string> controlled_;
  std::map<std::string, Endpoint> endpoints_;
  std::map<std::string, std::unique_ptr<Channel>> channels_;
  Rng rng_;
  Rng fragment_rng_;
  CoverageModel coverage_;
  TargetStats stats_;
  GuidanceState guidance_;
};

class ParseFailure : public std::runtime_error {
public:
  ParseFailure(const std::string& what, std::size_t message, std::size_t offset)
      : std::runtime_error(what), message(message), offset(offset) {}
  std::size_t message;
  std::size_t offset;
};

struct CheckResult {
  Verdict verdict;
  NodePtr tree;
  bool complete = false;  // the transcript is a whole interaction
};

// Replays a transcript through the forecaster and parser. Throws ParseFailure.
CheckResult check_transcript(const IoGrammar& g, const std::vector<TranscriptEntry>& transcript);

}  // namespace iog
