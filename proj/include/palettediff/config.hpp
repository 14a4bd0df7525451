#pragma once

// `key = value` text config for training and evaluation runs.
//
//   # comment
//   steps = 1500
//   palette_sizes = [4, 8, 16, 32]
//   corpus_dir = "data/crops"
//
// Section headers `[name]` prefix the keys below them as `name.key`.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace palettediff {

class KeyValueConfig {
 public:
  /// Throws invalid_argument naming the offending line.
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  /// Accepts "key=value"; used for command-line overrides.
  void set_assignment(std::string_view assignment);
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key, const std::vector<std::string>& fallback) const;

  /// Throws invalid_argument for keys outside `known`. Keys ending in ".*"
  /// in `known` admit any suffix.
  void require_known(const std::vector<std::string>& known) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace palettediff
