#include <gtest/gtest.h>

#include <deque>

#include "iog/earley.hpp"
#include "iog/evolve.hpp"
#include "iog/forecast.hpp"
#include "oracles.hpp"

using namespace iog;
using namespace std::chrono_literals;

namespace {

const IoGrammar& smtp() {
  static IoGrammar g = oracle::bundled("smtp.iog");
  return g;
}

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

std::set<std::pair<std::string, std::string>> sender_names(const std::vector<Prediction>& ps) {
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& p : ps) out.insert({p.sender, p.nonterminal});
  return out;
}

NodePtr replay(const IoGrammar& g, const std::vector<std::pair<std::string, std::string>>& msgs) {
  return oracle::session_from(g, msgs);
}

const std::vector<std::pair<std::string, std::string>> kHappy = {
    {"id", "220 mail.example.com ESMTP Postfix\r\n"},
    {"HELO", "HELO mail.example.com\r\n"},
    {"hello", "250 Hello mail.example.com, glad to meet you\r\n"},
    {"MAIL_FROM", "MAIL FROM:<alice@mail.example.com>\r\n"},
    {"ok", "250 Ok\r\n"},
    {"RCPT_TO", "RCPT TO:<bob@smtp.example.org>\r\n"},
    {"ok", "250 Ok\r\n"},
    {"DATA", "DATA\r\n"},
    {"end_data", "354 End data with <CR><LF>.<CR><LF>\r\n"},
    {"message", "Hi\r\n.\r\n"},
    {"ok", "250 Ok\r\n"},
    {"QUIT", "QUIT\r\n"},
    {"bye", "221 Bye\r\n"},
};

}  // namespace

TEST(Parse, GreetingComplete) {
  auto po = parse(smtp(), "id", "220 mail.example.com ESMTP Postfix\r\n", ParseMode::Complete);
  EXPECT_EQ(po.trees.size(), 1u);
  EXPECT_TRUE(fully_expanded(po.trees.front()));
}

TEST(Parse, EmptyPrefixIsRootOnly) {
  for (const char* r : {"id", "start", "HELO"}) {
    auto po = parse(smtp(), r, "", ParseMode::Prefix);
    ASSERT_EQ(po.trees.size(), 1u);
    EXPECT_FALSE(po.trees.front()->expanded());
  }
}

TEST(Parse, NoParsePosition) {
  try {
    parse(smtp(), "id", "999 nonsense", ParseMode::Complete);
    FAIL();
  } catch (const NoParse& e) {
    EXPECT_EQ(e.position, 0u);
  }
  try {
    parse(smtp(), "HELO", "HELO mail!x\r\n", ParseMode::Complete);
    FAIL();
  } catch (const NoParse& e) {
    EXPECT_EQ(e.position, 9u);
  }
}

TEST(Parse, PrefixMode) {
  auto po = parse(smtp(), "id", "220 mail.exa", ParseMode::Prefix);
  EXPECT_FALSE(po.trees.empty());
  for (const auto& t : po.trees) EXPECT_EQ(partial_yield(t).bytes(), "220 mail.exa");
  EXPECT_THROW(parse(smtp(), "id", "220 mail.exa", ParseMode::Complete), NoParse);
}

TEST(Parse, Ambiguity) {
  IoGrammar g = parse_spec("<start> ::= <a> <a>\n<a> ::= 'x' | 'xx' | ''\n");
  auto po = parse(g, "start", "xx", ParseMode::Complete);
  EXPECT_EQ(po.trees.size(), 3u);  // x|x, xx|, |xx
  for (const auto& t : po.trees) EXPECT_EQ(yield_bits(t).bytes(), "xx");
}

TEST(Parse, AmbiguityCap) {
  IoGrammar g = parse_spec("<start> ::= <a>*\n<a> ::= 'x' | 'x'\n");
  auto po = parse(g, "start", "xxxxxxxx", ParseMode::Complete);
  EXPECT_LE(po.trees.size(), kMaxTrees);
  EXPECT_TRUE(po.capped);
}

TEST(Parse, BitFields) {
  IoGrammar g = oracle::bundled("dns-lite.iog");
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    NodePtr m = random_expand(g, g.rule_index("dns_req"), rng);
    BitString y = yield_bits(m);
    ASSERT_TRUE(y.aligned());
    auto po = parse(g, g.rule_index("dns_req"), y, ParseMode::Complete);
    EXPECT_EQ(yield_bits(po.trees.front()), y);
  }
}

TEST(Parse, Recognize) {
  auto r = recognize(smtp(), smtp().rule_index("ok"), BitString::from_bytes("250 Ok\r\n250"));
  EXPECT_EQ(r.complete_ends, std::vector<std::size_t>{64});
  EXPECT_FALSE(r.viable);
  auto r2 = recognize(smtp(), smtp().rule_index("ok"), BitString::from_bytes("250"));
  EXPECT_TRUE(r2.viable);
  EXPECT_TRUE(r2.complete_ends.empty());
}

TEST(Forecast, EmptyTree) {
  auto ps = predict(smtp(), empty_tree(smtp()));
  EXPECT_EQ(sender_names(ps), (std::set<std::pair<std::string, std::string>>{{"server", "id"}}));
}

TEST(Forecast, AfterHelo) {
  NodePtr t = replay(smtp(), {kHappy[0], kHappy[1]});
  EXPECT_EQ(sender_names(predict(smtp(), t)),
            (std::set<std::pair<std::string, std::string>>{{"server", "hello"}, {"server", "error"}}));
}

TEST(Forecast, AfterData) {
  NodePtr t = replay(smtp(), {kHappy.begin(), kHappy.begin() + 8});
  EXPECT_EQ(sender_names(predict(smtp(), t)), (std::set<std::pair<std::string, std::string>>{{"server", "end_data"}}));
}

TEST(Forecast, IsEnd) {
  EXPECT_FALSE(is_end(smtp(), empty_tree(smtp())));
  NodePtr t = replay(smtp(), kHappy);
  EXPECT_TRUE(is_end(smtp(), t));
  EXPECT_TRUE(predict(smtp(), t).empty());
  NodePtr closed = close_session(smtp(), t);
  ASSERT_TRUE(closed);
  EXPECT_TRUE(fully_expanded(closed));
  EXPECT_EQ(message_nodes(closed).size(), kHappy.size());
  IoGrammar opt = parse_spec("party client {}\n<start> ::= <client:m>?\n<m> ::= 'x'\n");
  EXPECT_TRUE(is_end(opt, empty_tree(opt)));
  EXPECT_EQ(predict(opt, empty_tree(opt)).size(), 1u);
}

TEST(Forecast, PredictionShape) {
  NodePtr t = replay(smtp(), {kHappy[0], kHappy[1]});
  for (const auto& p : predict(smtp(), t)) {
    const Node* hook = node_at(p.tree, p.hook);
    ASSERT_TRUE(hook);
    EXPECT_FALSE(hook->expanded());
    EXPECT_EQ(hook->rule, p.rule);
    EXPECT_EQ(hook->sender, p.sender);
    ASSERT_FALSE(p.stack.empty());
    EXPECT_EQ(p.stack.back(), p.site);
    EXPECT_EQ(smtp().receivers(NtRef{p.nonterminal, p.sender, p.receiver, p.rule}).front(), "client");
  }
}

TEST(ParseMessage, Fragments) {
  NodePtr t = replay(smtp(), {kHappy.begin(), kHappy.begin() + 4});
  auto preds = predict(smtp(), t);
  ASSERT_EQ(sender_names(preds),
            (std::set<std::pair<std::string, std::string>>{{"server", "ok"}, {"server", "error"}}));
  Queue q;
  q.q = {"250 Ok", "\r\n"};
  auto src = q.src();
  auto pm = parse_message(smtp(), preds, src, 10ms, 0ms);
  EXPECT_EQ(pm.chosen.nonterminal, "ok");
  EXPECT_EQ(yield_bits(pm.message).bytes(), "250 Ok\r\n");
  EXPECT_EQ(pm.fragments, 2u);
}

TEST(ParseMessage, WholeMessage) {
  NodePtr t = replay(smtp(), {kHappy.begin(), kHappy.begin() + 4});
  Queue q;
  q.q = {"250 Ok\r\n"};
  auto src = q.src();
  auto pm = parse_message(smtp(), predict(smtp(), t), src, 10ms, 0ms);
  EXPECT_EQ(pm.chosen.nonterminal, "ok");
}

TEST(ParseMessage, ExcessReturned) {
  NodePtr t = replay(smtp(), {kHappy.begin(), kHappy.begin() + 4});
  Queue q;
  q.q = {"250 Ok\r\nRCPT"};
  auto src = q.src();
  auto pm = parse_message(smtp(), predict(smtp(), t), src, 10ms, 0ms);
  EXPECT_EQ(yield_bits(pm.message).bytes(), "250 Ok\r\n");
  ASSERT_EQ(q.q.size(), 1u);
  EXPECT_EQ(q.q.front(), "RCPT");
}

TEST(ParseMessage, Errors) {
  NodePtr t = replay(smtp(), {kHappy.begin(), kHappy.begin() + 4});
  auto preds = predict(smtp(), t);
  {
    Queue q;
    auto src = q.src();
    EXPECT_THROW(parse_message(smtp(), preds, src, 5ms, 0ms), ParseTimeout);
  }
  {
    Queue q;
    q.q = {"250 O"};
    auto src = q.src();
    EXPECT_THROW(parse_message(smtp(), preds, src, 5ms, 0ms), ParseTimeout);
  }
  {
    Queue q;
    q.q = {"5", "0x"};
    auto src = q.src();
    try {
      parse_message(smtp(), preds, src, 5ms, 0ms);
      FAIL();
    } catch (const NoViablePrediction& e) {
      EXPECT_EQ(e.offset, 2u);
    }
  }
}

TEST(ParseMessage, SplitAtEveryByte) {
  for (const char* f : {"smtp.iog", "ftp-lite.iog", "dns-lite.iog"}) {
    IoGrammar g = oracle::bundled(f);
    for (const auto& r : oracle::selfplay(g, 21, 6)) {
      auto prefixes = oracle::session_prefixes(g, r.transcript, r.tree);
      for (std::size_t i = 0; i < r.transcript.size(); ++i) {
        auto preds = predict(g, prefixes[i]);
        std::vector<Prediction> mine;
        for (const auto& p : preds)
          if (p.sender == r.transcript[i].from) mine.push_back(p);
        const Bytes& data = r.transcript[i].data;
        Queue whole;
        whole.q = {data};
        auto wsrc = whole.src();
        auto ref = parse_message(g, mine, wsrc, 5ms, 0ms);
        for (std::size_t cut = 1; cut < data.size(); ++cut) {
          Queue q;
          q.q = {data.substr(0, cut), data.substr(cut)};
          auto src = q.src();
          auto got = parse_message(g, mine, src, 5ms, 0ms);
          EXPECT_TRUE(structurally_equal(got.message, ref.message)) << f << " message " << i << " cut " << cut;
        }
      }
    }
  }
}

TEST(Parse, CompleteModeYieldsInput) {
  for (const char* f : {"smtp.iog", "ftp-lite.iog", "dns-lite.iog"}) {
    IoGrammar g = oracle::bundled(f);
    Rng rng(9);
    for (const auto& m : message_refs(g))
      for (int i = 0; i < 10; ++i) {
        BitString y = yield_bits(random_expand(g, m, rng));
        for (const auto& t : parse(g, m.rule, y, ParseMode::Complete).trees) EXPECT_EQ(yield_bits(t), y);
      }
  }
}

TEST(Forecast, CloseSessionKeepsChosenAlternatives) {
  IoGrammar g = parse_spec("party client {}\n<start> ::= <p> | <q>\n<p> ::= <client:a>\n<q> ::= <client:a>\n<a> ::= 'x'\n");
  for (const auto& pr : predict(g, empty_tree(g))) {
    NodePtr m = parse(g, "a", "x", ParseMode::Complete).trees.front();
    NodePtr t = set_read_only(append_at(pr.tree, pr.hook, m));
    NodePtr c = close_session(g, t);
    ASSERT_TRUE(c);
    EXPECT_TRUE(is_prefix_tree(t, c));
    EXPECT_EQ(c->alt, pr.site.rule == g.rule_index("p") ? 0 : 1);
  }
}
