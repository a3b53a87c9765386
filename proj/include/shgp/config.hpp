#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "shgp/errors.hpp"

namespace shgp {

// Flat key-value configuration with [sections]. Lines are `key = value`;
// '#' starts a comment. Insertion order is preserved so parse -> emit ->
// parse is the identity.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<string>") {
    Config cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw ConfigError(origin + ":" + std::to_string(line_no) +
                            ": malformed section header");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
      cfg.set(section, key, value);
    }
    return cfg;
  }

  static Config parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  bool has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
  }

  std::string str(const std::string& section, const std::string& key) const {
    const std::string* v = find(section, key);
    if (!v)
      throw ConfigError("missing config key [" + section + "] " + key);
    return *v;
  }

  std::string str_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const {
    const std::string* v = find(section, key);
    return v ? *v : fallback;
  }

  double num(const std::string& section, const std::string& key) const {
    return to_num(section, key, str(section, key));
  }

  double num_or(const std::string& section, const std::string& key,
                double fallback) const {
    const std::string* v = find(section, key);
    return v ? to_num(section, key, *v) : fallback;
  }

  long integer_or(const std::string& section, const std::string& key,
                  long fallback) const {
    const std::string* v = find(section, key);
    if (!v) return fallback;
    const double d = to_num(section, key, *v);
    const long l = static_cast<long>(d);
    if (static_cast<double>(l) != d)
      throw ConfigError("config key [" + section + "] " + key +
                        " must be an integer, got '" + *v + "'");
    return l;
  }

  bool flag_or(const std::string& section, const std::string& key,
               bool fallback) const {
    const std::string* v = find(section, key);
    if (!v) return fallback;
    if (*v == "true" || *v == "on" || *v == "1") return true;
    if (*v == "false" || *v == "off" || *v == "0") return false;
    throw ConfigError("config key [" + section + "] " + key +
                      " must be true/false, got '" + *v + "'");
  }

  std::vector<double> list_or(const std::string& section,
                              const std::string& key,
                              std::vector<double> fallback = {}) const {
    const std::string* v = find(section, key);
    if (!v) return fallback;
    std::vector<double> out;
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ','))
      out.push_back(to_num(section, key, trim(item)));
    return out;
  }

  void set(const std::string& section, const std::string& key,
           const std::string& value) {
    for (auto& [sec, entries] : sections_)
      if (sec == section) {
        for (auto& [k, v] : entries)
          if (k == key) {
            v = value;
            return;
          }
        entries.emplace_back(key, value);
        return;
      }
    sections_.push_back({section, {{key, value}}});
  }

  std::string emit() const {
    std::ostringstream out;
    for (const auto& [sec, entries] : sections_) {
      if (!sec.empty()) out << "[" << sec << "]\n";
      for (const auto& [k, v] : entries) out << k << " = " << v << "\n";
    }
    return out.str();
  }

  friend bool operator==(const Config& a, const Config& b) {
    return a.sections_ == b.sections_;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  double to_num(const std::string& section, const std::string& key,
                const std::string& v) const {
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0')
      throw ConfigError("config key [" + section + "] " + key +
                        " is not a number: '" + v + "'");
    return d;
  }

  const std::string* find(const std::string& section,
                          const std::string& key) const {
    for (const auto& [sec, entries] : sections_)
      if (sec == section)
        for (const auto& [k, v] : entries)
          if (k == key) return &v;
    return nullptr;
  }

  // Stored as (name, entries) pairs to keep emission order stable.
  std::vector<std::pair<std::string,
                        std::vector<std::pair<std::string, std::string>>>>
      sections_;
};

}  // namespace shgp
