#include "iog/transcript.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace iog {

using json = nlohmann::ordered_json;

std::string to_jsonl(const std::vector<TranscriptEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    json j;
    j["t"] = e.t;
    j["dir"] = e.dir == TranscriptEntry::Sent ? "sent" : "received";
    j["from"] = e.from;
    j["to"] = e.to;
    j["data_hex"] = to_hex(e.data);
    if (e.channel) j["channel"] = *e.channel;
    if (e.port) j["port"] = *e.port;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<TranscriptEntry> parse_jsonl(std::string_view text) {
  std::vector<TranscriptEntry> out;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(e.what(), lineno);
    }
    if (!j.is_object()) throw FormatError("expected an object", lineno);
    TranscriptEntry e;
    try {
      e.t = j.at("t").get<double>();
      std::string dir = j.at("dir").get<std::string>();
      if (dir == "sent")
        e.dir = TranscriptEntry::Sent;
      else if (dir == "received")
        e.dir = TranscriptEntry::Received;
      else
        throw FormatError("bad dir '" + dir + "'", lineno);
      e.from = j.at("from").get<std::string>();
      e.to = j.at("to").get<std::string>();
      e.data = from_hex(j.at("data_hex").get<std::string>());
      if (j.contains("channel")) e.channel = j["channel"].get<std::string>();
      if (j.contains("port")) e.port = j["port"].get<int>();
    } catch (const json::exception& ex) {
      throw FormatError(ex.what(), lineno);
    } catch (const std::invalid_argument& ex) {
      throw FormatError(ex.what(), lineno);
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_transcript(const std::string& path, const std::vector<TranscriptEntry>& entries) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::ios_base::failure("cannot write " + path);
  f << to_jsonl(entries);
}

std::vector<TranscriptEntry> read_transcript(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::ios_base::failure("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_jsonl(ss.str());
}

}  // namespace iog
