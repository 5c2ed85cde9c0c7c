#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace mti {

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);

/// Flat key=value configuration with dotted section names, e.g.
///
///   # model shape
///   model.conv_channels = 16,32,64,128
///   optim.lr = 1e-4
///
/// Blank lines and lines starting with '#' are ignored. Later assignments
/// win, so command-line overrides are applied after the file is read.
class Config {
 public:
  static Config parse(std::string_view text, std::string_view origin = "config");
  static Config from_file(const std::filesystem::path& path);

  void set(const std::string& key, std::string value);
  /// Applies a single "dotted.key=value" override.
  void apply_override(std::string_view assignment);

  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key,
                                const std::vector<int>& fallback) const;

  /// Entries whose key starts with `prefix` + '.', with the prefix removed.
  Config section(std::string_view prefix) const;

  /// Sorted "key=value" lines; parse(to_text()) reproduces the entries.
  std::string to_text() const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace mti
