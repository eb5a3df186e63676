#include <gtest/gtest.h>

#include "iog/constrain.hpp"
#include "iog/earley.hpp"
#include "iog/evolve.hpp"
#include "oracles.hpp"

using namespace iog;

namespace {

const IoGrammar& smtp() {
  static IoGrammar g = oracle::bundled("smtp.iog");
  return g;
}

const IoGrammar& ftp() {
  static IoGrammar g = oracle::bundled("ftp-lite.iog");
  return g;
}

NodePtr smtp_hello(const std::string& client_host, const std::string& server_host) {
  return oracle::session_from(smtp(), {{"id", "220 mail.example.com ESMTP Postfix\r\n"},
                                       {"HELO", "HELO " + client_host + "\r\n"},
                                       {"hello", "250 Hello " + server_host + ", glad to meet you\r\n"}});
}

NodePtr echo_tree(const std::string& text) {
  static IoGrammar g = oracle::bundled("echo.iog");
  return parse(g, "start", text, ParseMode::Complete).trees.front();
}

Value call(const std::string& text, Rng* rng = nullptr, std::vector<Effect>* effects = nullptr) {
  CallContext ctx{&smtp(), rng, effects};
  return call_generator(smtp(), parse_constraint(text), {}, ctx);
}

std::string hex(const Bytes& b) {
  static const char* d = "0123456789abcdef";
  std::string out;
  for (unsigned char c : b) {
    out += d[c >> 4];
    out += d[c & 15];
  }
  return out;
}

}  // namespace

TEST(Constrain, HostnameAgreement) {
  const Expr& c = smtp().constraints().front().expr;
  EXPECT_TRUE(evaluate(smtp(), c, smtp_hello("mail.example.com", "mail.example.com")).satisfied);
  Verdict v = evaluate(smtp(), c, smtp_hello("mail.example.com", "mail.example.org"));
  EXPECT_FALSE(v.satisfied);
  EXPECT_LT(v.fitness, 1.0);
  ASSERT_EQ(v.violations.size(), 1u);
  std::set<std::pair<std::string, std::size_t>> seen;
  for (const auto& w : v.violations[0].witness) seen.insert({w.bytes, w.offset});
  EXPECT_TRUE(seen.count({"mail.example.com", 41})) << v.violations[0].text;
  EXPECT_TRUE(seen.count({"mail.example.org", 69})) << v.violations[0].text;
}

TEST(Constrain, IncompleteOperandIsVacuous) {
  NodePtr t = oracle::session_from(smtp(), {{"id", "220 mail.example.com ESMTP Postfix\r\n"},
                                            {"HELO", "HELO mail.example.com\r\n"}});
  EXPECT_TRUE(evaluate_all(smtp(), t).satisfied);
}

TEST(Constrain, EchoEquality) {
  EXPECT_TRUE(evaluate_all(oracle::bundled("echo.iog"), echo_tree("ping\nping\n")).satisfied);
  Verdict v = evaluate_all(oracle::bundled("echo.iog"), echo_tree("ping\nhello\n"));
  EXPECT_FALSE(v.satisfied);
  EXPECT_DOUBLE_EQ(v.fitness, 0.0);
}

TEST(Constrain, NotIn) {
  Expr c = parse_constraint("<server:error> not in <start>");
  EXPECT_TRUE(evaluate(smtp(), c, smtp_hello("smtp.example.com", "smtp.example.com")).satisfied);
  NodePtr err = oracle::session_from(smtp(), {{"id", "220 mail.example.com ESMTP Postfix\r\n"},
                                              {"HELO", "HELO mail.example.com\r\n"},
                                              {"error", "550 x\r\n.\r\n\r\n"}});
  Verdict v = evaluate(smtp(), c, err);
  EXPECT_FALSE(v.satisfied);
  ASSERT_FALSE(v.violations.empty());
  ASSERT_FALSE(v.violations[0].witness.empty());
  EXPECT_EQ(v.violations[0].witness[0].bytes, "550 x\r\n.\r\n\r\n");
  EXPECT_EQ(v.violations[0].witness[0].offset, 59u);
}

TEST(Constrain, VacuousForall) {
  Expr c = parse_constraint("forall <x> in <start>.<error>: len(<x>) == 99");
  EXPECT_TRUE(evaluate(smtp(), c, smtp_hello("smtp.example.com", "smtp.example.com")).satisfied);
  Expr e = parse_constraint("exists <x> in <start>.<error>: len(<x>) == 99");
  EXPECT_FALSE(evaluate(smtp(), e, smtp_hello("smtp.example.com", "smtp.example.com")).satisfied);
}

TEST(Constrain, QuantifierDuality) {
  const char* bodies[] = {"len(<x>) > 16", "<x>.<label> == 'mail'", "<x> == 'smtp.example.com'"};
  std::vector<NodePtr> trees{smtp_hello("smtp.example.com", "smtp.example.com"), smtp_hello("mail.example.com", "smtp.example.org"),
                             smtp_hello("mail.example.org", "mail.example.org")};
  for (const char* b : bodies)
    for (const auto& t : trees) {
      std::string body(b);
      bool fa = evaluate(smtp(), parse_constraint("forall <x> in <start>.<hostname>: " + body), t).satisfied;
      bool ne = evaluate(smtp(), parse_constraint("not exists <x> in <start>.<hostname>: not " + body), t).satisfied;
      EXPECT_EQ(fa, ne) << body;
    }
}

TEST(Constrain, DeMorgan) {
  NodePtr t = smtp_hello("mail.example.com", "mail.example.org");
  const char* a = "<HELO>.<hostname> == <hello>.<hostname>";
  const char* b = "len(<HELO>) == 23";
  for (int i = 0; i < 2; ++i) {
    std::string x = i ? a : b, y = i ? b : a;
    bool lhs = evaluate(smtp(), parse_constraint("not (" + x + " and " + y + ")"), t).satisfied;
    bool rhs = evaluate(smtp(), parse_constraint("not (" + x + ") or not (" + y + ")"), t).satisfied;
    EXPECT_EQ(lhs, rhs);
  }
}

TEST(Constrain, DnsConstraintsHoldOnSelfplay) {
  IoGrammar g = oracle::bundled("dns-lite.iog");
  for (const auto& r : oracle::selfplay(g, 5, 10)) {
    Verdict v = evaluate_all(g, r.tree);
    EXPECT_TRUE(v.satisfied);
    EXPECT_DOUBLE_EQ(v.fitness, 1.0);
  }
}

TEST(Constrain, Builtins) {
  EXPECT_EQ(hex(call("sha256('abc')").bytes()), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(call("crc32('123456789')").i, 0xCBF43926);
  EXPECT_EQ(call("len('hello')").i, 5);
  EXPECT_EQ(call("int('0042')").i, 42);
  EXPECT_EQ(call("uint('\\x01\\x00')").i, 256);
  EXPECT_EQ(call("lower('AbC')").b, "abc");
  EXPECT_EQ(call("concat('a', 'b', 3)").b, "ab3");
  EXPECT_THROW(call("int('x1')"), FunctionError);
  EXPECT_THROW(call("len('a', 'b')"), FunctionError);
  EXPECT_THROW(call("randint(1, 2)"), FunctionError);
  Rng rng(1);
  EXPECT_THROW(call("randint(5, 2)", &rng), FunctionError);
  EXPECT_THROW(call("data_port(70000)"), FunctionError);
}

TEST(Constrain, Purity) {
  auto reg = FunctionRegistry::builtins();
  for (const char* f : {"sha256", "crc32", "len", "int", "uint", "lower", "concat", "count", "verify_transitive"})
    EXPECT_TRUE(reg->pure(f)) << f;
  EXPECT_FALSE(reg->pure("randint"));
  EXPECT_FALSE(reg->pure("data_port"));
  NodePtr t = smtp_hello("mail.example.com", "mail.example.org");
  Verdict a = evaluate_all(smtp(), t);
  Verdict b = evaluate_all(smtp(), t);
  EXPECT_EQ(a.satisfied, b.satisfied);
  EXPECT_EQ(a.fitness, b.fitness);
}

TEST(Constrain, RandintBounds) {
  Rng rng(3);
  std::set<std::int64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    auto v = call("randint(50000, 50100)", &rng).i;
    ASSERT_GE(v, 50000);
    ASSERT_LE(v, 50100);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 101u);
}

TEST(Constrain, DataPortEffect) {
  std::vector<Effect> fx;
  EXPECT_EQ(call("data_port(50042)", nullptr, &fx).bytes(), "50042");
  ASSERT_EQ(fx.size(), 1u);
  EXPECT_EQ(fx[0].kind, Effect::SetPort);
  EXPECT_EQ(fx[0].port, 50042);
}

TEST(Constrain, ProducePassivePort) {
  const auto& g = ftp();
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    std::vector<Effect> fx;
    CallContext ctx{&g, &rng, &fx};
    Bytes b = produce(g, g.rule_index("passive_port"), ctx, [&](int r) { return random_expand(g, r, rng); });
    int v = std::stoi(b);
    EXPECT_GE(v, 50000);
    EXPECT_LE(v, 50100);
  }
  CallContext ctx{&g, &rng, nullptr};
  EXPECT_THROW(produce(g, g.rule_index("number"), ctx, [&](int r) { return random_expand(g, r, rng); }),
               FunctionError);
}

TEST(Constrain, AbsorbEpsvResponse) {
  const auto& g = ftp();
  NodePtr m = parse(g, "resp_epassive", "229 Entering Extended Passive Mode (|||50042|)\r\n", ParseMode::Complete)
                  .trees.front();
  Rng rng(1);
  CallContext ctx{&g, &rng, nullptr};
  Absorbed a = absorb(g, m, ctx);
  ASSERT_EQ(a.effects.size(), 1u);
  EXPECT_EQ(a.effects[0].port, 50042);
  EXPECT_FALSE(a.parameters.empty());
}

TEST(Constrain, AbsorbProduceRoundTrip) {
  const auto& g = ftp();
  Rng rng(12);
  int open_port = g.rule_index("open_port");
  for (int i = 0; i < 1000; ++i) {
    std::vector<Effect> fx;
    CallContext ctx{&g, &rng, &fx};
    Bytes b = produce(g, open_port, ctx, [&](int r) { return random_expand(g, r, rng); });
    ASSERT_EQ(fx.size(), 1u);
    NodePtr m = parse(g, "resp_epassive", "229 Entering Extended Passive Mode (|||" + b + "|)\r\n",
                      ParseMode::Complete)
                    .trees.front();
    CallContext actx{&g, &rng, nullptr};
    Absorbed a = absorb(g, m, actx);
    ASSERT_EQ(a.effects.size(), 1u);
    EXPECT_EQ(a.effects[0].port, fx[0].port);
    EXPECT_GE(fx[0].port, 50000);
    EXPECT_LE(fx[0].port, 50100);
  }
}

TEST(Constrain, BadSelector) {
  EXPECT_ANY_THROW(evaluate(smtp(), parse_constraint("<nosuch> == 'x'"), smtp_hello("smtp.example.com", "smtp.example.com")));
}
