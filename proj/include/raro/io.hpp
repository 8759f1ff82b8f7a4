#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"

namespace raro {

using Json = nlohmann::json;

// Write to a sibling temp file and rename over the target, so readers never
// observe a partially written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string to_jsonl(const std::vector<Json>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<Json> parse_jsonl(const std::string& text) {
  std::vector<Json> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::exception& e) {
      throw FormatError("jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline Json tokens_to_json(const TokenSeq& seq) {
  Json arr = Json::array();
  for (Token t : seq) arr.push_back(Vocab::standard().symbol(t));
  return arr;
}

inline TokenSeq tokens_from_json(const Json& arr) {
  TokenSeq out;
  for (const auto& s : arr) out.push_back(Vocab::standard().lookup(s.get<std::string>()));
  return out;
}

}  // namespace raro
