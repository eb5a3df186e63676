#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "iog/earley.hpp"

namespace iog {

// Upcoming message: the incomplete session tree, the hook path of the
// message placeholder, the parties and the message nonterminal.
struct Prediction {
  NodePtr tree;
  TreePath hook;
  std::string sender;
  std::optional<std::string> receiver;
  std::string nonterminal;
  int rule = -1;
  Occurrence site;                 // where the message ref occurs
  std::vector<Occurrence> stack;   // open items from <start> down to `site`
};

// Every continuation of the session tree `t` that next expands a message.
std::vector<Prediction> predict(const IoGrammar& g, const NodePtr& t);
// True if the messages exchanged so far form a complete interaction.
bool is_end(const IoGrammar& g, const NodePtr& t);
// A fully expanded session tree over the exchanged messages (nullable
// remainder closed with empty derivations); nullptr unless is_end.
NodePtr close_session(const IoGrammar& g, const NodePtr& t);

class ParseTimeout : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class NoViablePrediction : public std::runtime_error {
public:
  NoViablePrediction(const std::string& what, std::size_t offset) : std::runtime_error(what), offset(offset) {}
  std::size_t offset;
};

// Source of incoming fragments. `next` blocks up to `wait` and returns
// nullopt on timeout; `unread` pushes bytes back to the front.
struct FragmentSource {
  std::function<std::optional<Bytes>(std::chrono::milliseconds wait)> next;
  std::function<void(Bytes)> unread;
};

struct ParsedMessage {
  Prediction chosen;
  NodePtr message;  // the message subtree, rooted at the predicted rule
  std::size_t fragments = 0;
};

// Reassembles fragments into one message: returns the longest complete parse
// among the surviving predictions once no extension arrives within
// `extension_wait`. Excess bytes are returned to the source.
ParsedMessage parse_message(const IoGrammar& g, const std::vector<Prediction>& predictions, FragmentSource& src,
                            std::chrono::milliseconds first_wait, std::chrono::milliseconds extension_wait);

}  // namespace iog
