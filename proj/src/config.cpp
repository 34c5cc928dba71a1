#include "g2l/config.hpp"

#include <fstream>
#include <sstream>

#include "g2l/errors.hpp"

namespace g2l {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

FlatConfig FlatConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str(), path);
}

FlatConfig FlatConfig::from_text(const std::string& text, const std::string& origin) {
  FlatConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config " + origin + ":" + std::to_string(line_no) +
                       ": expected 'key = value', got '" + stripped + "'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw ParseError("config " + origin + ":" + std::to_string(line_no) + ": empty key");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

void FlatConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like key=value, got '" + assignment + "'");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void FlatConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

std::string FlatConfig::raw(const std::string& key, const std::string& def, bool* found) {
  consumed_.insert(key);
  const auto it = values_.find(key);
  const std::string value = it == values_.end() ? def : it->second;
  if (found) *found = it != values_.end();
  effective_[key] = value;
  return value;
}

std::string FlatConfig::get_string(const std::string& key, const std::string& def) {
  return raw(key, def);
}

std::int64_t FlatConfig::get_int(const std::string& key, std::int64_t def) {
  const std::string v = raw(key, std::to_string(def));
  try {
    std::size_t used = 0;
    const std::int64_t out = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

double FlatConfig::get_double(const std::string& key, double def) {
  std::ostringstream d;
  d << def;
  const std::string v = raw(key, d.str());
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

bool FlatConfig::get_bool(const std::string& key, bool def) {
  const std::string v = raw(key, def ? "true" : "false");
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

std::uint64_t FlatConfig::get_u64(const std::string& key, std::uint64_t def) {
  const std::string v = raw(key, std::to_string(def));
  try {
    std::size_t used = 0;
    const std::uint64_t out = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
}

std::string FlatConfig::require_string(const std::string& key) {
  consumed_.insert(key);
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("config: required key '" + key + "' is missing");
  effective_[key] = it->second;
  return it->second;
}

void FlatConfig::ensure_all_consumed() const {
  std::string unknown;
  for (const auto& [key, value] : values_) {
    if (!consumed_.count(key)) unknown += (unknown.empty() ? "" : ", ") + key;
  }
  if (!unknown.empty()) throw ConfigError("config: unknown keys: " + unknown);
}

std::string FlatConfig::effective_echo() const {
  std::string out;
  for (const auto& [key, value] : effective_) {
    out += key + " = " + value + "\n";
  }
  return out;
}

}  // namespace g2l
