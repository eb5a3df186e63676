#include <cctype>
#include <functional>
#include <set>

#include "iog/grammar.hpp"

namespace iog {

namespace {

struct Token {
  enum Kind { End, Ident, Number, String, Bytes_, Regex_, Nonterminal, Punct, Raw } kind = End;
  std::string text;
  std::uint64_t number = 0;
  SourceLoc loc;
};

class Lexer {
public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token t;
      t.loc = {line_, col_};
      if (i_ >= src_.size()) {
        out.push_back(t);
        return out;
      }
      char c = src_[i_];
      bool raw_arg = out.size() >= 1 && out.back().kind == Token::Ident &&
                     (out.back().text == "tcp_connect" || out.back().text == "tcp_listen" ||
                      out.back().text == "loopback");
      if (c == '(' && raw_arg) {
        out.push_back(punct("("));
        std::size_t close = src_.find(')', i_);
        if (close == std::string_view::npos) fail("unterminated endpoint");
        Token r;
        r.kind = Token::Raw;
        r.loc = {line_, col_};
        while (i_ < close) r.text.push_back(advance());
        out.push_back(r);
        out.push_back(punct(")"));
        continue;
      }
      if ((c == 'b' || c == 'r') && i_ + 1 < src_.size() && (src_[i_ + 1] == '\'' || src_[i_ + 1] == '"')) {
        advance();
        t.kind = c == 'b' ? Token::Bytes_ : Token::Regex_;
        t.text = quoted(c == 'r');
        out.push_back(t);
        continue;
      }
      if (c == '\'' || c == '"') {
        t.kind = Token::String;
        t.text = quoted(false);
        out.push_back(t);
        continue;
      }
      if (c == '<' && nonterminal_ahead()) {
        advance();
        t.kind = Token::Nonterminal;
        while (src_[i_] != '>') t.text.push_back(advance());
        advance();
        out.push_back(t);
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c))) {
        t.kind = Token::Number;
        t.number = number();
        out.push_back(t);
        continue;
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        t.kind = Token::Ident;
        while (i_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[i_])) || src_[i_] == '_'))
          t.text.push_back(advance());
        out.push_back(t);
        continue;
      }
      static const char* multi[] = {"::=", ":=", "==", "!=", "<=", ">="};
      bool matched = false;
      for (const char* m : multi) {
        if (src_.substr(i_).starts_with(m)) {
          out.push_back(punct(m));
          matched = true;
          break;
        }
      }
      if (matched) continue;
      if (std::string_view("|()?*+{}[],:;=<>.-").find(c) != std::string_view::npos) {
        out.push_back(punct(std::string(1, c)));
        continue;
      }
      fail(std::string("unexpected character '") + c + "'");
    }
  }

private:
  [[noreturn]] void fail(const std::string& msg) { throw SyntaxError(msg, {line_, col_}); }

  char advance() {
    char c = src_[i_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  Token punct(const std::string& p) {
    Token t;
    t.kind = Token::Punct;
    t.loc = {line_, col_};
    t.text = p;
    for (std::size_t k = 0; k < p.size(); ++k) advance();
    return t;
  }

  void skip_space() {
    while (i_ < src_.size()) {
      char c = src_[i_];
      if (c == '#') {
        while (i_ < src_.size() && src_[i_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  bool nonterminal_ahead() const {
    std::size_t j = i_ + 1;
    if (j >= src_.size() || !(std::isalpha(static_cast<unsigned char>(src_[j])) || src_[j] == '_' || src_[j] == ':'))
      return false;
    for (; j < src_.size(); ++j) {
      char c = src_[j];
      if (c == '>') return true;
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == ':')) return false;
    }
    return false;
  }

  std::uint64_t number() {
    std::string digits;
    int base = 10;
    if (src_[i_] == '0' && i_ + 1 < src_.size() && (src_[i_ + 1] == 'x' || src_[i_ + 1] == 'b')) {
      base = src_[i_ + 1] == 'x' ? 16 : 2;
      advance();
      advance();
    }
    while (i_ < src_.size() && std::isxdigit(static_cast<unsigned char>(src_[i_]))) digits.push_back(advance());
    if (digits.empty()) fail("malformed number");
    try {
      return std::stoull(digits, nullptr, base);
    } catch (const std::exception&) {
      fail("malformed number '" + digits + "'");
    }
  }

  std::string quoted(bool raw) {
    char q = advance();
    std::string out;
    for (;;) {
      if (i_ >= src_.size()) fail("unterminated string");
      char c = advance();
      if (c == q) return out;
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      if (i_ >= src_.size()) fail("unterminated string");
      char e = advance();
      if (raw) {
        if (e != q) out.push_back('\\');
        out.push_back(e);
        continue;
      }
      switch (e) {
        case 'r': out.push_back('\r'); break;
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case '0': out.push_back('\0'); break;
        case 'x': {
          std::string h;
          for (int k = 0; k < 2 && i_ < src_.size(); ++k) h.push_back(advance());
          if (h.size() != 2 || !std::isxdigit(static_cast<unsigned char>(h[0])) ||
              !std::isxdigit(static_cast<unsigned char>(h[1])))
            fail("bad \\x escape");
          out.push_back(static_cast<char>(std::stoi(h, nullptr, 16)));
          break;
        }
        default: out.push_back(e);
      }
    }
  }

  std::string_view src_;
  std::size_t i_ = 0;
  int line_ = 1;
  int col_ = 1;
};

// Parsed `<...>` contents.
NtRef split_ref(const Token& t) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : t.text) {
    if (c == ':') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  for (const auto& p : parts)
    if (p.empty()) throw MalformedAnnotation("malformed annotation <" + t.text + ">", t.loc);
  NtRef r;
  if (parts.size() > 3) throw MalformedAnnotation("malformed annotation <" + t.text + ">", t.loc);
  r.name = parts.back();
  if (parts.size() >= 2) r.sender = parts[0];
  if (parts.size() == 3) r.receiver = parts[1];
  return r;
}

}  // namespace

struct IoGrammar::Builder {
  IoGrammar g;
  std::vector<Token> toks;
  std::size_t p = 0;
  std::map<std::string, int> rep_counter;
  std::vector<std::pair<NtRef, SourceLoc>> refs;

  const Token& cur() const { return toks[p]; }
  const Token& peek(std::size_t k = 1) const { return toks[std::min(p + k, toks.size() - 1)]; }
  bool is_punct(const char* s) const { return cur().kind == Token::Punct && cur().text == s; }
  bool is_ident(const char* s) const { return cur().kind == Token::Ident && cur().text == s; }
  [[noreturn]] void fail(const std::string& msg) const { throw SyntaxError(msg, cur().loc); }
  void expect(const char* s) {
    if (!is_punct(s)) fail(std::string("expected '") + s + "'");
    ++p;
  }
  std::string ident() {
    if (cur().kind != Token::Ident) fail("expected identifier");
    return toks[p++].text;
  }

  void run() {
    while (cur().kind != Token::End) {
      if (is_ident("party")) {
        party();
      } else if (is_ident("where")) {
        ++p;
        Constraint c;
        c.loc = cur().loc;
        c.id = static_cast<int>(g.constraints_.size());
        c.expr = expr();
        expect(";");
        g.constraints_.push_back(std::move(c));
      } else if (cur().kind == Token::Nonterminal) {
        rule();
      } else if (is_punct(";")) {
        ++p;
      } else {
        fail("expected rule, party or where");
      }
    }
  }

  // ---- parties ----

  Endpoint endpoint() {
    Endpoint ep;
    std::string kind = ident();
    std::string arg;
    if (is_punct("(")) {
      ++p;
      if (cur().kind == Token::Raw) arg = toks[p++].text;
      expect(")");
    }
    auto trim = [](std::string s) {
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
      return s;
    };
    arg = trim(arg);
    auto set_port = [&](const std::string& s) {
      if (s == "dynamic") {
        ep.dynamic = true;
        return;
      }
      try {
        std::size_t used = 0;
        ep.port = std::stoi(s, &used);
        if (used != s.size() || ep.port < 0 || ep.port > 65535) throw std::invalid_argument(s);
      } catch (const std::exception&) {
        fail("bad port '" + s + "'");
      }
    };
    if (kind == "loopback") {
      ep.kind = Endpoint::Loopback;
      if (!arg.empty()) set_port(arg);
    } else if (kind == "tcp_connect") {
      ep.kind = Endpoint::TcpConnect;
      auto colon = arg.rfind(':');
      if (colon == std::string::npos) fail("tcp_connect needs host:port");
      ep.host = trim(arg.substr(0, colon));
      set_port(trim(arg.substr(colon + 1)));
    } else if (kind == "tcp_listen") {
      ep.kind = Endpoint::TcpListen;
      set_port(arg);
    } else if (kind == "none") {
      ep.kind = Endpoint::None;
    } else {
      fail("unknown endpoint kind '" + kind + "'");
    }
    return ep;
  }

  void party() {
    ++p;
    PartyDecl d;
    d.loc = cur().loc;
    d.name = ident();
    for (const auto& q : g.parties_)
      if (q.name == d.name) throw SpecError("duplicate party '" + d.name + "'", d.loc);
    d.fuzzer_controlled = true;
    d.channel = "main";
    d.side = d.name;
    d.endpoint.kind = Endpoint::Loopback;
    expect("{");
    while (!is_punct("}")) {
      std::string key = ident();
      expect(":");
      if (key == "controlled") {
        std::string v = ident();
        if (v != "true" && v != "false") fail("expected true or false");
        d.fuzzer_controlled = v == "true";
      } else if (key == "channel") {
        d.channel = ident();
      } else if (key == "side") {
        d.side = ident();
      } else if (key == "endpoint") {
        d.endpoint = endpoint();
      } else {
        fail("unknown party key '" + key + "'");
      }
      if (is_punct(",") || is_punct(";")) ++p;
    }
    expect("}");
    g.parties_.push_back(std::move(d));
  }

  // ---- rules ----

  using Alts = std::vector<Alternative>;

  static Alts product(const Alts& a, const Alts& b) {
    Alts out;
    for (const auto& x : a)
      for (const auto& y : b) {
        Alternative z = x;
        z.insert(z.end(), y.begin(), y.end());
        out.push_back(std::move(z));
      }
    return out;
  }

  bool rule_start() const {
    return cur().kind == Token::Nonterminal && peek().kind == Token::Punct && peek().text == "::=";
  }

  bool sequence_end() const {
    return cur().kind == Token::End || rule_start() || is_ident("party") || is_ident("where") ||
           is_punct("|") || is_punct(")") || is_punct(";") || is_punct(":=");
  }

  Alts alternatives(const std::string& lhs) {
    Alts out = sequence(lhs);
    while (is_punct("|")) {
      ++p;
      Alts more = sequence(lhs);
      out.insert(out.end(), more.begin(), more.end());
    }
    return out;
  }

  Alts sequence(const std::string& lhs) {
    Alts acc{Alternative{}};
    while (!sequence_end()) acc = product(acc, item(lhs));
    return acc;
  }

  Alts item(const std::string& lhs) {
    Alts a = atom(lhs);
    while (is_punct("?") || is_punct("*") || is_punct("+")) {
      std::string op = toks[p++].text;
      if (op == "?") {
        a.push_back(Alternative{});
        continue;
      }
      std::string name = lhs + "-rep" + std::to_string(++rep_counter[lhs]);
      NtRef self;
      self.name = name;
      Production rep;
      rep.lhs = name;
      rep.loc = toks[p - 1].loc;
      for (const auto& x : a) {
        Alternative more = x;
        more.push_back(self);
        rep.alternatives.push_back(std::move(more));
      }
      if (op == "*") {
        rep.alternatives.push_back(Alternative{});
      } else {
        for (const auto& x : a) rep.alternatives.push_back(x);
      }
      add_rule(std::move(rep));
      a = Alts{Alternative{self}};
    }
    return a;
  }

  Alts atom(const std::string& lhs) {
    const Token& t = cur();
    switch (t.kind) {
      case Token::Nonterminal: {
        ++p;
        NtRef r = split_ref(t);
        refs.emplace_back(r, t.loc);
        return Alts{Alternative{r}};
      }
      case Token::String:
      case Token::Bytes_: {
        ++p;
        if (t.text.empty()) return Alts{Alternative{}};
        return Alts{Alternative{Literal{t.text}}};
      }
      case Token::Regex_: {
        ++p;
        try {
          return Alts{Alternative{RegexTerm{std::make_shared<const Regex>(Regex::compile(t.text))}}};
        } catch (const RegexError& e) {
          throw SyntaxError(std::string("bad regex: ") + e.what(), t.loc);
        }
      }
      case Token::Ident: {
        if (t.text != "bits") fail("unexpected identifier '" + t.text + "'");
        ++p;
        expect("(");
        if (cur().kind != Token::Number) fail("expected bit width");
        BitField b;
        b.width = static_cast<int>(toks[p++].number);
        if (b.width < 1 || b.width > 64) fail("bit width must be 1..64");
        expect(")");
        if (is_punct("=")) {
          ++p;
          if (cur().kind != Token::Number) fail("expected bit value");
          b.value = toks[p++].number;
          if (b.width < 64 && *b.value >= (std::uint64_t{1} << b.width)) fail("bit value does not fit width");
        }
        return Alts{Alternative{b}};
      }
      case Token::Punct:
        if (t.text == "(") {
          ++p;
          Alts inner = alternatives(lhs);
          expect(")");
          return inner;
        }
        break;
      default:
        break;
    }
    fail("unexpected token '" + t.text + "'");
  }

  void add_rule(Production r) {
    if (g.index_.count(r.lhs)) throw DuplicateRule(r.lhs, r.loc);
    g.index_[r.lhs] = static_cast<int>(g.rules_.size());
    g.rules_.push_back(std::move(r));
  }

  void rule() {
    Token head = toks[p++];
    NtRef lhs = split_ref(head);
    if (lhs.sender) throw MalformedAnnotation("annotation on rule head <" + head.text + ">", head.loc);
    if (g.index_.count(lhs.name)) throw DuplicateRule(lhs.name, head.loc);
    expect("::=");
    // Reserve the slot so synthetic rules follow their owner.
    int slot = static_cast<int>(g.rules_.size());
    g.index_[lhs.name] = slot;
    g.rules_.push_back(Production{lhs.name, {}, std::nullopt, head.loc});
    Alts alts = alternatives(lhs.name);
    g.rules_[static_cast<std::size_t>(slot)].alternatives = std::move(alts);
    if (is_punct(":=")) {
      ++p;
      Expr call = expr();
      if (call.kind != Expr::Call) throw SyntaxError("generator must be a function call", head.loc);
      g.rules_[static_cast<std::size_t>(slot)].generator = std::move(call);
    }
    if (is_punct(";")) ++p;
  }

  // ---- expressions ----

  Expr node(Expr::Kind k, const Token& at) {
    Expr e;
    e.kind = k;
    e.line = at.loc.line;
    e.col = at.loc.col;
    return e;
  }

  Expr expr() {
    Token at = cur();
    Expr lhs = conjunction();
    if (!is_ident("or")) return lhs;
    Expr e = node(Expr::Or, at);
    e.children.push_back(std::move(lhs));
    while (is_ident("or")) {
      ++p;
      e.children.push_back(conjunction());
    }
    return e;
  }

  Expr conjunction() {
    Token at = cur();
    Expr lhs = negation();
    if (!is_ident("and")) return lhs;
    Expr e = node(Expr::And, at);
    e.children.push_back(std::move(lhs));
    while (is_ident("and")) {
      ++p;
      e.children.push_back(negation());
    }
    return e;
  }

  Expr negation() {
    Token at = cur();
    if (is_ident("not")) {
      ++p;
      Expr e = node(Expr::Not, at);
      e.children.push_back(negation());
      return e;
    }
    if (is_ident("forall") || is_ident("exists")) {
      Expr e = node(is_ident("forall") ? Expr::Forall : Expr::Exists, at);
      ++p;
      if (cur().kind != Token::Nonterminal) fail("expected <variable>");
      e.name = toks[p++].text;
      if (!is_ident("in")) fail("expected 'in'");
      ++p;
      e.children.push_back(selector());
      expect(":");
      e.children.push_back(expr());
      return e;
    }
    return comparison();
  }

  Expr comparison() {
    Token at = cur();
    Expr lhs = primary();
    static const std::set<std::string> ops{"==", "=", "!=", "<", "<=", ">", ">="};
    if (cur().kind == Token::Punct && ops.count(cur().text)) {
      Expr e = node(Expr::Compare, at);
      e.op = toks[p++].text;
      if (e.op == "=") e.op = "==";
      e.children.push_back(std::move(lhs));
      e.children.push_back(primary());
      return e;
    }
    bool negated = false;
    if (is_ident("not") && peek().kind == Token::Ident && peek().text == "in") {
      negated = true;
      ++p;
    }
    if (is_ident("in")) {
      ++p;
      Expr e = node(Expr::Contains, at);
      e.children.push_back(std::move(lhs));
      e.children.push_back(primary());
      if (!negated) return e;
      Expr n = node(Expr::Not, at);
      n.children.push_back(std::move(e));
      return n;
    }
    if (negated) fail("expected 'in'");
    return lhs;
  }

  Expr selector() {
    if (cur().kind != Token::Nonterminal) fail("expected selector");
    Expr e = node(Expr::Selector, cur());
    e.name = toks[p++].text;
    for (;;) {
      if (is_punct(".") && peek().kind == Token::Nonterminal) {
        ++p;
        SelectorStep s;
        s.kind = SelectorStep::Descendant;
        s.name = toks[p++].text;
        e.steps.push_back(s);
      } else if (is_punct("[")) {
        ++p;
        SelectorStep s;
        bool has_from = false;
        if (cur().kind == Token::Number) {
          s.from = s.index = static_cast<int>(toks[p++].number);
          has_from = true;
        }
        if (is_punct(":")) {
          ++p;
          s.kind = SelectorStep::Slice;
          if (!has_from) s.from = 0;
          if (cur().kind == Token::Number) s.to = static_cast<int>(toks[p++].number);
        } else {
          if (!has_from) fail("expected index");
          s.kind = SelectorStep::Index;
        }
        expect("]");
        e.steps.push_back(s);
      } else {
        return e;
      }
    }
  }

  Expr primary() {
    const Token& t = cur();
    switch (t.kind) {
      case Token::Number: {
        Expr e = node(Expr::Number, t);
        e.number = static_cast<std::int64_t>(t.number);
        ++p;
        return e;
      }
      case Token::String:
      case Token::Bytes_: {
        Expr e = node(Expr::String, t);
        e.text = t.text;
        ++p;
        return e;
      }
      case Token::Nonterminal:
        return selector();
      case Token::Ident: {
        if (peek().kind == Token::Punct && peek().text == "(") {
          Expr e = node(Expr::Call, t);
          e.name = t.text;
          p += 2;
          while (!is_punct(")")) {
            e.children.push_back(expr());
            if (!is_punct(")")) expect(",");
          }
          ++p;
          return e;
        }
        if (t.text == "forall" || t.text == "exists" || t.text == "not") return negation();
        break;
      }
      case Token::Punct:
        if (t.text == "(") {
          ++p;
          Expr e = expr();
          expect(")");
          return e;
        }
        if (t.text == "-" && peek().kind == Token::Number) {
          Expr e = node(Expr::Number, t);
          ++p;
          e.number = -static_cast<std::int64_t>(toks[p++].number);
          return e;
        }
        break;
      default:
        break;
    }
    fail("unexpected token in expression");
  }

  void resolve() {
    for (const auto& [r, loc] : refs) {
      if (!g.index_.count(r.name)) throw UndefinedNonterminal(r.name, loc);
      if (r.sender && !g.party(*r.sender)) throw UnknownParty(*r.sender, loc);
      if (r.receiver && !g.party(*r.receiver)) throw UnknownParty(*r.receiver, loc);
    }
    if (!g.index_.count("start")) throw UndefinedNonterminal("start", {1, 1});
    g.finalize();
  }
};

IoGrammar parse_spec(std::string_view text) {
  IoGrammar::Builder b;
  b.toks = Lexer(text).run();
  b.run();
  b.resolve();
  return std::move(b.g);
}

Expr parse_constraint(std::string_view text) {
  IoGrammar::Builder b;
  b.toks = Lexer(text).run();
  Expr e = b.expr();
  if (b.is_punct(";")) ++b.p;
  if (b.cur().kind != Token::End) b.fail("trailing input after constraint");
  return e;
}

}  // namespace iog
