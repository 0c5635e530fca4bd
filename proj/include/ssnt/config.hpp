#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace ssnt {

// Flat key=value settings. Every key is declared with a type and a default;
// unknown keys and ill-typed values are rejected with ConfigError.
class RunConfig {
 public:
  using Value = std::variant<std::int64_t, double, bool, std::string>;

  struct KeyInfo {
    std::string name;
    Value default_value;
    std::string help;
  };

  RunConfig();

  // Parses "key = value" lines. '#' at the start of a line or after
  // whitespace starts a comment; blank lines are ignored. Errors name the
  // file and line.
  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text, const std::string& origin = "<text>");

  // Type-checks `text` against the key's declared type. Dashes in the key are
  // read as underscores, so flag spellings are accepted too.
  void set(const std::string& key, const std::string& text);
  bool is_set(const std::string& key) const;

  std::int64_t get_int(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;  // ConfigError when negative
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;
  // Comma-separated doubles.
  std::vector<double> get_doubles(const std::string& key) const;

  // Every key with its current value, in declaration order.
  std::string to_text() const;
  nlohmann::json to_json() const;

  static const std::vector<KeyInfo>& schema();
  static std::string normalize_key(const std::string& key);

 private:
  const Value& lookup(const std::string& key) const;

  std::map<std::string, Value> values_;
  std::map<std::string, bool> explicit_;
};

}  // namespace ssnt
