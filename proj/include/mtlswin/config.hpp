#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtlswin/data.hpp"
#include "mtlswin/model.hpp"
#include "mtlswin/train.hpp"

namespace mtlswin {

// Error categories surfaced as CLI exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat key=value configuration ('#' comments, blank lines ignored). Dumped
/// form is sorted, so echoed configs diff cleanly across runs.
class KvConfig {
 public:
  static KvConfig from_file(const std::string& path);

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  void set_assignment(const std::string& assignment);  // "key=value"
  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& def) const;
  std::string str_required(const std::string& key) const;
  int64_t integer(const std::string& key, int64_t def) const;
  double real(const std::string& key, double def) const;
  bool boolean(const std::string& key, bool def) const;
  std::vector<int64_t> int_list(const std::string& key, const std::vector<int64_t>& def) const;
  std::vector<double> real_list(const std::string& key, const std::vector<double>& def) const;

  std::string dump() const;

 private:
  std::map<std::string, std::string> kv_;
};

/// model.* keys -> validated ModelConfig (variant presets, then overrides,
/// then task-weight resolution).
ModelConfig model_config_from(const KvConfig& kv);

/// train.* keys -> TrainConfig; batch/lr defaults follow the per-model
/// training recipe (joint: 128/0.004; seg-only and 3-task tiny: 32/0.01;
/// otherwise 64/0.01).
TrainConfig train_config_from(const KvConfig& kv, const ModelConfig& model, uint64_t seed);

/// gen.* keys -> GenConfig.
GenConfig gen_config_from(const KvConfig& kv, uint64_t seed);

/// Worker-parallelism cap: MTLSWIN_THREADS when set, else 2.
int worker_threads();

}  // namespace mtlswin
