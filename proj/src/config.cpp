#include "palettediff/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "palettediff/error.hpp"

namespace palettediff {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(std::string_view v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return std::string(v.substr(1, v.size() - 2));
  return std::string(v);
}

// Drops a trailing comment that is not inside quotes.
std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::vector<std::string> split_list(const std::string& raw) {
  std::string_view v = trim(raw);
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') throw Error(Errc::invalid_argument, "unterminated list: " + raw);
    v = v.substr(1, v.size() - 2);
  }
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    out.push_back(unquote(trim(v.substr(start, comma == std::string_view::npos ? v.npos : comma - start))));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end) {
    throw Error(Errc::invalid_argument, "config key " + key + ": not a number: " + std::string(text));
  }
  return value;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  KeyValueConfig cfg;
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string_view line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']' && line.find('=') == std::string_view::npos) {
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos || trim(line.substr(0, eq)).empty()) {
      throw Error(Errc::invalid_argument, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key(trim(line.substr(0, eq)));
    if (!section.empty()) key = section + "." + key;
    cfg.values_[key] = unquote(trim(line.substr(eq + 1)));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::file_not_found, "config not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void KeyValueConfig::set_assignment(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || trim(assignment.substr(0, eq)).empty()) {
    throw Error(Errc::invalid_argument, "expected key=value, got " + std::string(assignment));
  }
  values_[std::string(trim(assignment.substr(0, eq)))] = unquote(trim(assignment.substr(eq + 1)));
}

std::string KeyValueConfig::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  return has(key) ? parse_number<int>(key, values_.at(key)) : fallback;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  return has(key) ? parse_number<std::uint64_t>(key, values_.at(key)) : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? parse_number<double>(key, values_.at(key)) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = values_.at(key);
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw Error(Errc::invalid_argument, "config key " + key + ": expected true or false, got " + v);
}

std::vector<int> KeyValueConfig::get_ints(const std::string& key, const std::vector<int>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<int> out;
  for (const auto& s : split_list(values_.at(key))) out.push_back(parse_number<int>(key, s));
  return out;
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  for (const auto& s : split_list(values_.at(key))) out.push_back(parse_number<double>(key, s));
  return out;
}

std::vector<std::string> KeyValueConfig::get_strings(const std::string& key,
                                                     const std::vector<std::string>& fallback) const {
  return has(key) ? split_list(values_.at(key)) : fallback;
}

void KeyValueConfig::require_known(const std::vector<std::string>& known) const {
  for (const auto& [key, _] : values_) {
    bool ok = false;
    for (const auto& k : known) {
      if (k == key || (k.size() > 2 && k.ends_with(".*") && key.starts_with(k.substr(0, k.size() - 1)))) {
        ok = true;
        break;
      }
    }
    if (!ok) throw Error(Errc::invalid_argument, "unknown config key: " + key);
  }
}

}  // namespace palettediff
