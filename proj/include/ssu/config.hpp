#ifndef SSU_CONFIG_HPP_
#define SSU_CONFIG_HPP_

#include <map>
#include <string>

#include "ssu/errors.hpp"

namespace ssu {

// Flat "key = value" text with [section] headers and '#' comments.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_string(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key,
           const std::string& value);

  double get_double(const std::string& section, const std::string& key) const;
  int get_int(const std::string& section, const std::string& key) const;
  bool get_bool(const std::string& section, const std::string& key) const;

  // Sections in fixed order (arch, train, infer, then others), keys sorted.
  std::string serialize() const;

  const std::map<std::string, std::map<std::string, std::string>>& sections() const {
    return sections_;
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace ssu

#endif  // SSU_CONFIG_HPP_
