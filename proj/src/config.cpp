#include "ssu/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <vector>

namespace ssu {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) {
        throw UsageError("config line " + std::to_string(lineno) +
                         ": empty section name");
      }
      cfg.sections_[section];
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(lineno) +
                       ": expected 'key = value', got '" + t + "'");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw UsageError("config line " + std::to_string(lineno) + ": empty key");
    }
    cfg.sections_[section][key] = value;
  }
  return cfg;
}

bool KeyValueConfig::has(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) > 0;
}

std::string KeyValueConfig::get(const std::string& section,
                                const std::string& key) const {
  auto s = sections_.find(section);
  if (s == sections_.end() || !s->second.count(key)) {
    throw UsageError("config is missing [" + section + "] " + key);
  }
  return s->second.at(key);
}

void KeyValueConfig::set(const std::string& section, const std::string& key,
                         const std::string& value) {
  sections_[section][key] = value;
}

double KeyValueConfig::get_double(const std::string& section,
                                  const std::string& key) const {
  const std::string v = get(section, key);
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw UsageError("config [" + section + "] " + key + ": '" + v +
                     "' is not a number");
  }
}

int KeyValueConfig::get_int(const std::string& section,
                            const std::string& key) const {
  const std::string v = get(section, key);
  try {
    size_t pos = 0;
    int i = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw UsageError("config [" + section + "] " + key + ": '" + v +
                     "' is not an integer");
  }
}

bool KeyValueConfig::get_bool(const std::string& section,
                              const std::string& key) const {
  const std::string v = get(section, key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw UsageError("config [" + section + "] " + key + ": '" + v +
                   "' is not a boolean");
}

std::string KeyValueConfig::serialize() const {
  std::vector<std::string> order{"arch", "train", "infer"};
  for (const auto& [name, kv] : sections_) {
    if (std::find(order.begin(), order.end(), name) == order.end()) {
      order.push_back(name);
    }
  }
  std::ostringstream out;
  bool first = true;
  for (const std::string& name : order) {
    auto s = sections_.find(name);
    if (s == sections_.end()) continue;
    if (!first) out << "\n";
    first = false;
    out << "[" << name << "]\n";
    for (const auto& [key, value] : s->second) {
      out << key << " = " << value << "\n";
    }
  }
  return out.str();
}

}  // namespace ssu
