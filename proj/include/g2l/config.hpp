#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace g2l {

// Flat `key = value` config with dotted-prefix sections. Typed getters record
// the effective value (explicit or default) so the merged configuration can
// be echoed verbatim; unknown keys are rejected once a command has consumed
// everything it understands.
class FlatConfig {
 public:
  static FlatConfig from_file(const std::string& path);  // throws ConfigError / ParseError
  static FlatConfig from_text(const std::string& text, const std::string& origin = "<text>");

  // "key=value" command-line override; wins over file contents.
  void apply_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& def);
  std::int64_t get_int(const std::string& key, std::int64_t def);
  double get_double(const std::string& key, double def);
  bool get_bool(const std::string& key, bool def);
  std::uint64_t get_u64(const std::string& key, std::uint64_t def);

  std::string require_string(const std::string& key);

  // Throws ConfigError listing keys that no getter ever consumed.
  void ensure_all_consumed() const;

  // Sorted `key = value` lines of every consumed (effective) entry.
  std::string effective_echo() const;

 private:
  std::string raw(const std::string& key, const std::string& def, bool* found = nullptr);

  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> effective_;
  std::set<std::string> consumed_;
};

}  // namespace g2l
