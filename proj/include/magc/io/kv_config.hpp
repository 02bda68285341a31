#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace magc {

// Flat "key = value" text configuration. Blank lines and lines starting
// with '#' are ignored; later assignments override earlier ones.
class KvConfig {
 public:
  static KvConfig parse(std::string_view text, const std::string& origin = "config");
  static KvConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  std::string to_string() const;

 private:
  std::string origin_ = "config";
  std::map<std::string, std::string> values_;
};

}  // namespace magc
