#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "iog/bits.hpp"

namespace iog {

struct TranscriptEntry {
  enum Dir { Sent, Received };
  double t = 0;
  Dir dir = Sent;
  std::string from;
  std::string to;
  Bytes data;
  std::optional<std::string> channel;
  std::optional<int> port;
};

class FormatError : public std::runtime_error {
public:
  FormatError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line(line) {}
  std::size_t line;
};

// JSON Lines: {"t", "dir", "from", "to", "data_hex"[, "channel", "port"]}.
std::string to_jsonl(const std::vector<TranscriptEntry>& entries);
std::vector<TranscriptEntry> parse_jsonl(std::string_view text);

void write_transcript(const std::string& path, const std::vector<TranscriptEntry>& entries);
// Throws std::ios_base::failure if unreadable, FormatError if malformed.
std::vector<TranscriptEntry> read_transcript(const std::string& path);

}  // namespace iog
