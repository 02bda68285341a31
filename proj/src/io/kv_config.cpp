#include "magc/io/kv_config.hpp"

#include <charconv>
#include <sstream>

#include "magc/error.hpp"
#include "magc/io/bytes.hpp"

namespace magc {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

KvConfig KvConfig::parse(std::string_view text, const std::string& origin) {
  KvConfig cfg;
  cfg.origin_ = origin;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    const std::string line = trim(text.substr(start, end - start));
    ++line_no;
    start = end + 1;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::kUsage, origin + ":" + std::to_string(line_no) + ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) fail(ErrorCode::kUsage, origin + ":" + std::to_string(line_no) + ": empty key");
    cfg.values_[key] = trim(std::string_view(line).substr(eq + 1));
  }
  return cfg;
}

KvConfig KvConfig::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), path.string());
}

std::string KvConfig::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used == it->second.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::kUsage, origin_ + ": " + key + " must be a number, got '" + it->second + "'");
}

long long KvConfig::get_int(const std::string& key, long long fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  long long v = 0;
  const std::string& s = it->second;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    fail(ErrorCode::kUsage, origin_ + ": " + key + " must be an integer, got '" + s + "'");
  }
  return v;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& s = it->second;
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  fail(ErrorCode::kUsage, origin_ + ": " + key + " must be a boolean, got '" + s + "'");
}

std::string KvConfig::to_string() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << '=' << v << '\n';
  return out.str();
}

}  // namespace magc
