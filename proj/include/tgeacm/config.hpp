#pragma once

// Flat key = value run configuration. Effective values resolve as
// flag > file > preset > built-in default; the preset itself is taken from
// the flags, then the file, then "desk".

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tgeacm/corpus.hpp"
#include "tgeacm/evaluation.hpp"
#include "tgeacm/model.hpp"
#include "tgeacm/training.hpp"

namespace tgeacm {

class RunConfig {
 public:
  // Throws ConfigError for unknown keys or values of the wrong kind.
  void load_file(const std::string& path);
  void load_string(const std::string& ini_text);
  void set(const std::string& key, const std::string& value);

  std::string get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  // Empty string for unset paths.
  std::string path(const std::string& key) const { return get(key); }

  std::vector<std::pair<std::string, std::string>> effective() const;
  std::string to_ini() const;

  TrainConfig train_config() const;
  ModelConfig model_config() const;
  SyntheticSpec synthetic_spec() const;
  EipMode eip_mode() const;
  AccuracyMode accuracy_mode() const;

  static std::vector<std::string> keys();

 private:
  std::map<std::string, std::string> file_;
  std::map<std::string, std::string> flags_;
};

}  // namespace tgeacm
