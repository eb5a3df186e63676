#pragma once

#include <stdexcept>
#include <vector>

#include "iog/grammar.hpp"
#include "iog/tree.hpp"

namespace iog {

enum class ParseMode { Complete, Prefix };

class NoParse : public std::runtime_error {
public:
  explicit NoParse(std::size_t byte_pos)
      : std::runtime_error("no parse at byte " + std::to_string(byte_pos)), position(byte_pos) {}
  std::size_t position;
};

inline constexpr std::size_t kMaxTrees = 64;

struct ParseOutcome {
  std::vector<NodePtr> trees;
  ParseMode mode = ParseMode::Complete;
  std::size_t consumed = 0;  // bits
  bool capped = false;       // more trees existed than kMaxTrees
};

// Parses `input` from rule `start`. Complete mode returns every derivation
// (up to kMaxTrees); prefix mode returns incomplete trees whose yields are
// prefixes of derivable strings. Throws NoParse.
ParseOutcome parse(const IoGrammar& g, int start, const BitString& input, ParseMode mode,
                   Provenance prov = Provenance::Parsed);
ParseOutcome parse(const IoGrammar& g, std::string_view start, std::string_view input, ParseMode mode);

// What a byte buffer means for rule `start`: the bit offsets at which a
// complete derivation of `start` ends, and whether the whole buffer is still
// a viable prefix.
struct Recognition {
  std::vector<std::size_t> complete_ends;
  bool viable = false;
  std::size_t furthest = 0;  // bits
};
Recognition recognize(const IoGrammar& g, int start, const BitString& input);

}  // namespace iog
