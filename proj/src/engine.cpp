#include "iog/engine.hpp"

#include <algorithm>
#include <sstream>
#include <thread>

namespace iog {

using Clock = std::chrono::steady_clock;

std::string to_string(EndReason r) {
  switch (r) {
    case EndReason::Accepting: return "accepting";
    case EndReason::Timeout: return "timeout";
    case EndReason::ConstraintViolation: return "constraint_violation";
    case EndReason::ParseFailure: return "parse_failure";
    case EndReason::TransportFailure: return "transport_failure";
  }
  return "?";
}

struct Engine::Channel {
  std::string name;
  Inbox inbox;
  std::unique_ptr<Connection> conn;
  std::unique_ptr<TcpListener> listener;
  int port = 0;
};

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

Engine::Engine(const IoGrammar& g, EngineConfig cfg)
    : g_(g),
      cfg_(std::move(cfg)),
      rng_(cfg_.seed),
      fragment_rng_(cfg_.seed ^ 0x9e3779b97f4a7c15ULL),
      coverage_(g_, std::max(1, cfg_.k)) {
  if (cfg_.k < 1) throw ConfigError("k must be at least 1");
  for (const auto& p : g_.parties()) {
    endpoints_[p.name] = p.endpoint;
    if (!channels_.count(p.channel)) {
      auto ch = std::make_unique<Channel>();
      ch->name = p.channel;
      channels_[p.channel] = std::move(ch);
    }
  }
  for (const auto& [name, ep] : cfg_.endpoint_overrides) {
    if (!g_.party(name)) throw ConfigError("unknown party '" + name + "'");
    endpoints_[name] = ep;
  }
  if (cfg_.mode == Mode::Selfplay) {
    for (const auto& p : g_.parties()) controlled_.insert(p.name);
  } else {
    if (cfg_.controlled.empty()) {
      for (const auto& p : g_.parties())
        if (p.fuzzer_controlled) controlled_.insert(p.name);
    } else {
      for (const auto& n : cfg_.controlled) {
        if (!g_.party(n)) throw ConfigError("unknown party '" + n + "'");
        controlled_.insert(n);
      }
    }
    if (controlled_.size() == g_.parties().size()) throw ConfigError("fuzz mode needs at least one external party");
  }
}

Engine::~Engine() { close_channels(); }

const Endpoint& Engine::endpoint(const std::string& party) const {
  auto it = endpoints_.find(party);
  if (it == endpoints_.end()) throw UnknownParty(party);
  return it->second;
}

Engine::Channel& Engine::channel_of(const std::string& party) {
  const PartyDecl* d = g_.party(party);
  if (!d) throw UnknownParty(party);
  return *channels_.at(d->channel);
}

void Engine::reconfigure_endpoint(const std::string& party, const std::string& host, int port) {
  auto it = endpoints_.find(party);
  if (it == endpoints_.end()) throw UnknownParty(party);
  Endpoint& ep = it->second;
  if (ep.host == host && ep.port == port) return;
  Channel& ch = channel_of(party);
  if (!ch.inbox.empty()) throw Busy("channel '" + ch.name + "' has unread data");
  ep.host = host;
  ep.port = port;
  if (cfg_.mode == Mode::Fuzz) {
    if (ch.conn) ch.conn->close();
    ch.conn.reset();
    ch.inbox.clear();
    if (ep.kind == Endpoint::TcpListen && controlled(party)) ch.listener = std::make_unique<TcpListener>(port);
  }
  if (cfg_.log) cfg_.log("endpoint " + party + " -> " + host + ":" + std::to_string(port));
}

void Engine::apply_effects(const std::vector<Effect>& effects, const std::string& party) {
  const PartyDecl* d = g_.party(party);
  if (!d) return;
  for (const auto& e : effects) {
    if (e.kind != Effect::SetPort) continue;
    for (const auto& p : g_.parties())
      if (p.side == d->side && endpoints_[p.name].dynamic)
        reconfigure_endpoint(p.name, endpoints_[p.name].host, e.port);
  }
}

std::string Engine::receiver_of(const Prediction& p) const {
  if (p.receiver) return *p.receiver;
  auto rs = g_.receivers(NtRef{p.nonterminal, p.sender, std::nullopt, p.rule});
  std::string out;
  for (const auto& r : rs) out += (out.empty() ? "" : ",") + r;
  return out;
}

void Engine::ensure_connected(Channel& ch, const std::string& party) {
  if (ch.conn) return;
  std::string mine = party;
  if (!controlled(mine)) {
    for (const auto& p : g_.parties())
      if (p.channel == ch.name && controlled(p.name)) mine = p.name;
  }
  if (!controlled(mine)) throw TransportError("no controlled party on channel '" + ch.name + "'");
  const Endpoint& ep = endpoints_.at(mine);
  if (ep.dynamic && ep.port == 0) throw TransportError("no port announced for '" + mine + "'");
  switch (ep.kind) {
    case Endpoint::TcpConnect:
      ch.conn = TcpConnection::connect(ep.host, ep.port, ch.inbox, cfg_.response_timeout);
      break;
    case Endpoint::TcpListen:
      if (!ch.listener || ch.listener->port() != ep.port) ch.listener = std::make_unique<TcpListener>(ep.port);
      ch.conn = ch.listener->accept(ch.inbox, cfg_.session_timeout);
      break;
    default:
      throw TransportError("party '" + mine + "' has no network endpoint");
  }
  ch.port = ep.port;
}

void Engine::open_static_channels() {
  for (auto& [name, ch] : channels_) {
    std::string mine;
    bool external = false;
    for (const auto& p : g_.parties()) {
      if (p.channel != name) continue;
      if (controlled(p.name))
        mine = p.name;
      else
        external = true;
    }
    if (mine.empty() || !external || endpoints_.at(mine).dynamic) continue;
    ensure_connected(*ch, mine);
  }
}

void Engine::close_channels() {
  for (auto& [name, ch] : channels_) {
    if (ch->conn) ch->conn->close();
    ch->conn.reset();
    ch->inbox.clear();
  }
}

void Engine::transmit(const std::string& from, const std::string&, const Bytes& data, TranscriptEntry& entry) {
  Channel& ch = channel_of(from);
  entry.channel = ch.name;
  if (cfg_.mode == Mode::Selfplay) {
    const Endpoint* listen = nullptr;
    const Endpoint* connect = nullptr;
    for (const auto& p : g_.parties()) {
      if (p.channel != ch.name) continue;
      const Endpoint& ep = endpoints_.at(p.name);
      if (ep.kind == Endpoint::TcpListen) listen = &ep;
      if (ep.kind == Endpoint::TcpConnect) connect = &ep;
    }
    if (listen && connect && (listen->dynamic || connect->dynamic)) {
      if (listen->port == 0) throw TransportError("no port announced on channel '" + ch.name + "'");
      if (connect->port != listen->port)
        throw TransportError("channel '" + ch.name + "' connects to port " + std::to_string(connect->port) +
                             " but listens on " + std::to_string(listen->port));
    }
    if (listen && listen->port > 0) entry.port = listen->port;
    LoopbackConnection(ch.inbox, cfg_.max_fragment > 0 ? &fragment_rng_ : nullptr, cfg_.max_fragment).send(data);
    return;
  }
  ensure_connected(ch, from);
  ch.conn->send(data);
  entry.port = ch.port;
}

SessionResult Engine::run_session() {
  SessionResult res;
  const auto t0 = Clock::now();
  NodePtr T = empty_tree(g_);
  if (cfg_.guided) guidance_.begin_session();
  for (auto& [n, ch] : channels_) ch->inbox.clear();
  const bool selfplay = cfg_.mode == Mode::Selfplay;
  auto stamp = [&] { return selfplay ? static_cast<double>(res.transcript.size()) : seconds_since(t0); };
  auto log = [&](const std::string& s) {
    if (cfg_.log) cfg_.log(s);
  };
  auto end = [&](EndReason r, std::string detail) {
    res.end_reason = r;
    res.detail = std::move(detail);
  };
  auto pending = [&] {
    if (selfplay) return false;
    for (auto& [n, ch] : channels_)
      if (!ch->inbox.empty()) return true;
    return false;
  };
  bool ended = false;

  try {
    if (!selfplay) open_static_channels();
  } catch (const TransportError& e) {
    end(EndReason::TransportFailure, e.what());
    ended = true;
  }

  while (!ended) {
    if (Clock::now() - t0 > cfg_.session_timeout) {
      end(EndReason::Timeout, "session timeout");
      break;
    }
    if (static_cast<int>(res.transcript.size()) >= cfg_.max_messages) {
      end(EndReason::Timeout, "message limit reached");
      break;
    }
    auto F = predict(g_, T);
    std::vector<std::size_t> selected;
    if (!F.empty()) {
      if (cfg_.guided) {
        selected = guidance_step(guidance_, coverage_, stats_, T, F,
                                 [this](const std::string& p) { return controlled(p); }, rng_);
      } else {
        for (std::size_t i = 0; i < F.size(); ++i)
          if (controlled(F[i].sender)) selected.push_back(i);
      }
    }
    if (F.empty() || (cfg_.guided && guidance_.guide_to_end && is_end(g_, T))) {
      if (is_end(g_, T))
        end(EndReason::Accepting, "");
      else
        end(EndReason::ParseFailure, "no continuation");
      break;
    }
    std::vector<Prediction> Ff, Fe;
    for (const auto& p : F) (controlled(p.sender) ? Ff : Fe).push_back(p);

    if (Ff.empty() || pending()) {
      // Receive from an external party.
      if (Fe.empty()) {
        end(EndReason::ParseFailure, "unexpected data from a controlled party's peer");
        break;
      }
      const auto r0 = Clock::now();
      Channel* ch = nullptr;
      try {
        std::set<std::string> names;
        for (const auto& p : Fe) names.insert(channel_of(p.sender).name);
        for (const auto& n : names)
          for (const auto& p : Fe)
            if (channel_of(p.sender).name == n) {
              ensure_connected(channel_of(p.sender), p.sender);
              break;
            }
        const auto deadline = Clock::now() + cfg_.response_timeout;
        while (!ch && Clock::now() < deadline) {
          for (const auto& n : names)
            if (!channels_.at(n)->inbox.empty()) {
              ch = channels_.at(n).get();
              break;
            }
          if (!ch) std::this_thread::sleep_for(std::chrono::milliseconds(2));
        }
      } catch (const TransportError& e) {
        end(EndReason::TransportFailure, e.what());
        break;
      }
      if (!ch) {
        end(EndReason::Timeout, "no response within " + std::to_string(cfg_.response_timeout.count()) + " ms");
        break;
      }
      std::vector<Prediction> preds;
      for (const auto& p : Fe)
        if (&channel_of(p.sender) == ch) preds.push_back(p);
      FragmentSource src{[ch](std::chrono::milliseconds w) { return ch->inbox.pop(w); },
                         [ch](Bytes b) { ch->inbox.unread(std::move(b)); }};
      ParsedMessage pm;
      try {
        pm = parse_message(g_, preds, src, cfg_.response_timeout, cfg_.extension_wait);
      } catch (const ParseTimeout& e) {
        end(EndReason::Timeout, e.what());
        break;
      } catch (const NoViablePrediction& e) {
        res.failed_message = static_cast<int>(res.transcript.size());
        res.failure_offset = e.offset;
        end(EndReason::ParseFailure, e.what());
        break;
      }
      T = append_at(pm.chosen.tree, pm.chosen.hook, pm.message);
      Bytes data = yield_bits(pm.message).bytes();
      TranscriptEntry te{stamp(), TranscriptEntry::Received, pm.chosen.sender, receiver_of(pm.chosen), data,
                         ch->name, ch->port ? std::optional<int>(ch->port) : std::nullopt};
      res.transcript.push_back(te);
      res.stats.push_back({pm.chosen.sender, pm.chosen.nonterminal, data.size(), seconds_since(r0), false});
      log(pm.chosen.sender + " " + pm.chosen.nonterminal + " " + std::to_string(data.size()) + "B received");
      try {
        std::vector<Effect> effects;
        CallContext ctx{&g_, &rng_, &effects};
        absorb(g_, pm.message, ctx);
        for (const auto& r : g_.receivers(NtRef{pm.chosen.nonterminal, pm.chosen.sender, pm.chosen.receiver, pm.chosen.rule}))
          if (controlled(r)) apply_effects(effects, r);
      } catch (const std::exception& e) {
        end(EndReason::TransportFailure, e.what());
        break;
      }
    } else {
      std::vector<std::size_t> mine;
      for (auto i : selected)
        if (controlled(F[i].sender)) mine.push_back(i);
      if (mine.empty())
        for (std::size_t i = 0; i < F.size(); ++i)
          if (controlled(F[i].sender)) mine.push_back(i);
      const Prediction& pred = F[mine[std::uniform_int_distribution<std::size_t>(0, mine.size() - 1)(rng_)]];
      const auto g0 = Clock::now();
      std::optional<std::set<KPath>> hint;
      if (cfg_.guided && !coverage_.fully_covered()) hint = coverage_.uncovered();
      Generated gen;
      bool violated = false;
      try {
        gen = generate_message(g_, pred, cfg_.ga, rng_, hint ? &*hint : nullptr);
      } catch (const NoSatisfyingCandidate& e) {
        gen.tree = e.tree;
        gen.verdict = e.verdict;
        gen.message = nullptr;
        violated = true;
      } catch (const BudgetExceeded& e) {
        end(EndReason::ParseFailure, e.what());
        break;
      } catch (const FunctionError& e) {
        end(EndReason::ConstraintViolation, e.what());
        break;
      }
      if (!gen.message) {
        for (const auto& m : message_nodes(gen.tree))
          if (!m.node->read_only) gen.message = m.node;
      }
      if (pending()) continue;  // an incoming fragment wins the race
      const std::string to = receiver_of(pred);
      Bytes data = yield_bits(gen.message).bytes();
      TranscriptEntry te{stamp(), TranscriptEntry::Sent, pred.sender, to, data, std::nullopt, std::nullopt};
      try {
        apply_effects(gen.effects, pred.sender);
        transmit(pred.sender, to, data, te);
      } catch (const std::exception& e) {
        end(EndReason::TransportFailure, e.what());
        break;
      }
      res.transcript.push_back(te);
      res.stats.push_back({pred.sender, pred.nonterminal, data.size(), seconds_since(g0), true});
      log(pred.sender + " " + pred.nonterminal + " " + std::to_string(data.size()) + "B sent");
      T = gen.tree;
      if (violated) {
        T = set_read_only(T);
        res.verdict = evaluate_all(g_, T);
        end(EndReason::ConstraintViolation, "no candidate satisfied the constraints");
        break;
      }
      if (selfplay) {
        // The peer side parses what was sent, as a remote party would.
        Channel& ch = channel_of(pred.sender);
        std::vector<Prediction> same;
        for (const auto& p : F)
          if (p.sender == pred.sender) same.push_back(p);
        FragmentSource src{[&ch](std::chrono::milliseconds w) { return ch.inbox.pop(w); },
                           [&ch](Bytes b) { ch.inbox.unread(std::move(b)); }};
        try {
          auto pm = parse_message(g_, same, src, std::chrono::milliseconds(0), std::chrono::milliseconds(0));
          if (yield_bits(pm.message).bytes() != data || !ch.inbox.empty())
            throw NoViablePrediction("loopback parse disagrees with the sent message", 0);
          std::vector<Effect> effects;
          CallContext ctx{&g_, &rng_, &effects};
          absorb(g_, pm.message, ctx);
          for (const auto& r : g_.receivers(NtRef{pred.nonterminal, pred.sender, pred.receiver, pred.rule}))
            apply_effects(effects, r);
        } catch (const NoViablePrediction& e) {
          res.failed_message = static_cast<int>(res.transcript.size()) - 1;
          res.failure_offset = e.offset;
          end(EndReason::ParseFailure, e.what());
          break;
        } catch (const ParseTimeout& e) {
          end(EndReason::ParseFailure, e.what());
          break;
        } catch (const std::exception& e) {
          end(EndReason::TransportFailure, e.what());
          break;
        }
      }
    }
    T = set_read_only(T);
    Verdict v = evaluate_all(g_, T);
    if (!v.satisfied) {
      res.verdict = v;
      end(EndReason::ConstraintViolation, v.violations.empty() ? "" : v.violations.front().text);
      break;
    }
  }

  if (NodePtr closed = is_end(g_, T) ? close_session(g_, T) : nullptr) T = closed;
  res.tree = T;
  res.verdict = evaluate_all(g_, T);
  if (res.end_reason == EndReason::Accepting && !res.verdict.satisfied) {
    res.end_reason = EndReason::ConstraintViolation;
    res.detail = res.verdict.violations.empty() ? "" : res.verdict.violations.front().text;
  }
  if (!selfplay) close_channels();
  return res;
}

CampaignReport Engine::run_campaign(int sessions, std::optional<std::chrono::milliseconds> duration, bool stop_at_full,
                                    const std::function<void(const SessionResult&, const CoverageSnapshot&)>& on_session) {
  CampaignReport rep;
  rep.guided = cfg_.guided;
  rep.mode = cfg_.mode;
  rep.seed = cfg_.seed;
  const auto t0 = Clock::now();
  for (int i = 0; i < sessions; ++i) {
    if (duration && Clock::now() - t0 > *duration) break;
    SessionResult r = run_session();
    coverage_.add_tree(r.tree);
    CoverageSnapshot snap;
    snap.session = i + 1;
    snap.seconds = seconds_since(t0);
    snap.total = coverage_.fraction();
    for (const auto& p : g_.parties()) snap.per_party[p.name] = coverage_.party_fraction(p.name);
    if (snap.total >= 1.0 && rep.sessions_to_full < 0) rep.sessions_to_full = i + 1;
    rep.coverage.push_back(snap);
    if (on_session) on_session(r, snap);
    rep.sessions.push_back(std::move(r));
    if (stop_at_full && coverage_.fully_covered()) break;
  }
  rep.final_coverage = coverage_.fraction();
  return rep;
}

CheckResult check_transcript(const IoGrammar& g, const std::vector<TranscriptEntry>& transcript) {
  NodePtr T = empty_tree(g);
  for (std::size_t i = 0; i < transcript.size(); ++i) {
    const auto& e = transcript[i];
    auto F = predict(g, T);
    std::vector<const Prediction*> cands;
    for (const auto& p : F) {
      if (p.sender != e.from) continue;
      if (p.receiver && !e.to.empty() && *p.receiver != e.to) continue;
      cands.push_back(&p);
    }
    if (cands.empty())
      throw ParseFailure("message " + std::to_string(i) + ": no message from '" + e.from + "' expected here", i, 0);
    BitString bits = BitString::from_bytes(e.data);
    std::set<int> tried;
    std::size_t furthest = 0;
    bool ok = false;
    for (const auto* c : cands) {
      if (!tried.insert(c->rule).second) continue;
      try {
        auto po = parse(g, c->rule, bits, ParseMode::Complete);
        T = append_at(c->tree, c->hook, po.trees.front());
        ok = true;
        break;
      } catch (const NoParse& np) {
        furthest = std::max(furthest, np.position);
      }
    }
    if (!ok) {
      std::string names;
      for (int r : tried) names += (names.empty() ? "<" : ", <") + g.rule(r).lhs + ">";
      throw ParseFailure("message " + std::to_string(i) + " from '" + e.from + "' does not parse as " + names +
                             " (byte " + std::to_string(furthest) + ")",
                         i, furthest);
    }
    T = set_read_only(T);
  }
  CheckResult out;
  out.complete = is_end(g, T);
  if (out.complete)
    if (NodePtr closed = close_session(g, T)) T = closed;
  out.tree = T;
  out.verdict = evaluate_all(g, T);
  return out;
}

}  // namespace iog
