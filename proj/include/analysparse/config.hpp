#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace analysparse {

/// Flat key=value configuration with dotted section prefixes (data.p=32).
/// Blank lines and lines starting with '#' are ignored.
class KeyValues {
 public:
  KeyValues() = default;

  static KeyValues parse(const std::string& text);
  static KeyValues load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  /// Throws ConfigError naming the key when it is absent.
  const std::string& require(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;

  double require_double(const std::string& key) const;
  std::uint64_t require_u64(const std::string& key) const;

  const std::map<std::string, std::string>& entries() const { return values_; }
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

double parse_double(const std::string& key, const std::string& text);
std::uint64_t parse_u64(const std::string& key, const std::string& text);

}  // namespace analysparse
