#pragma once

#include <bitset>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "iog/bits.hpp"

namespace iog {

using Rng = std::mt19937_64;

class RegexError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Byte regular expressions compiled to a Thompson NFA. Supported syntax:
// literals, escapes (\r \n \t \xNN \d \w \s and escaped metacharacters), `.`,
// classes `[...]` / `[^...]` with ranges, groups, `|`, `*`, `+`, `?`,
// `{m}`, `{m,}`, `{m,n}`. Matching is simulation-based; no backtracking.
class Regex {
public:
  static Regex compile(std::string_view pattern);

  const std::string& pattern() const { return pattern_; }

  // Longest match starting at bit offset `pos`; returns the end offset.
  std::optional<std::size_t> longest_match(const BitString& in, std::size_t pos) const;
  // True when the input from `pos` to its end is a prefix of some match.
  bool viable_prefix(const BitString& in, std::size_t pos) const;
  bool full_match(std::string_view bytes) const;

  Bytes generate(Rng& rng) const;

  struct Node;

private:
  struct State {
    enum Kind { Set, Split, Match } kind;
    int set = -1;
    int out1 = -1;
    int out2 = -1;
  };

  void add_state(std::vector<int>& list, std::vector<unsigned>& mark, unsigned gen, int s) const;

  std::string pattern_;
  std::shared_ptr<const Node> ast_;
  std::vector<std::bitset<256>> sets_;
  std::vector<State> states_;
  int start_ = -1;
};

}  // namespace iog
