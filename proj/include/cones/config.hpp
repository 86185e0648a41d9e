#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

namespace cones {

/// Ordered key=value store backing config files, run manifests, and
/// checkpoint descriptors. Lines starting with '#' are comments. Typed reads
/// mark keys as consumed so callers can reject unknown keys.
class KeyValues {
 public:
  static KeyValues parse_file(const std::string& path);
  static KeyValues parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const;

  void set(const std::string& key, const std::string& value);
  void set_long(const std::string& key, long long v);
  void set_double(const std::string& key, double v);
  void set_bool(const std::string& key, bool v);

  std::string get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& def) const;
  long long get_long(const std::string& key) const;
  long long get_long_or(const std::string& key, long long def) const;
  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double def) const;
  bool get_bool(const std::string& key) const;
  bool get_bool_or(const std::string& key, bool def) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  /// Fails if any key was never read through a getter; `what` names the
  /// config being validated in the error message.
  void fail_on_unconsumed(const std::string& what) const;

  std::string serialize() const;
  void save_file(const std::string& path) const;

 private:
  const std::string* find(const std::string& key) const;

  std::vector<std::pair<std::string, std::string>> entries_;
  mutable std::set<std::string> consumed_;
};

/// Parses a comma-separated list of integers ("1,1,2,1").
std::vector<int> parse_int_list(const std::string& text);
std::string format_int_list(const std::vector<int>& v);

}  // namespace cones
