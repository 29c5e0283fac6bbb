#include "mtlswin/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mtlswin {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

KvConfig KvConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("config: cannot open " + path);
  KvConfig kv;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: " + path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    kv.kv_[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return kv;
}

void KvConfig::set_assignment(const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  kv_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

std::string KvConfig::str(const std::string& key, const std::string& def) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? def : it->second;
}

std::string KvConfig::str_required(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw ConfigError("config: missing required key '" + key + "'");
  return it->second;
}

int64_t KvConfig::integer(const std::string& key, int64_t def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  try {
    size_t pos = 0;
    int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("config: key '" + key + "' wants an integer, got '" + it->second + "'");
  }
}

double KvConfig::real(const std::string& key, double def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  try {
    size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("config: key '" + key + "' wants a real, got '" + it->second + "'");
  }
}

bool KvConfig::boolean(const std::string& key, bool def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: key '" + key + "' wants a boolean, got '" + v + "'");
}

std::vector<int64_t> KvConfig::int_list(const std::string& key, const std::vector<int64_t>& def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  std::vector<int64_t> out;
  std::stringstream ss(it->second);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      out.push_back(std::stoll(trim(part)));
    } catch (...) {
      throw ConfigError("config: key '" + key + "' wants comma-separated integers");
    }
  }
  if (out.empty()) throw ConfigError("config: key '" + key + "' is empty");
  return out;
}

std::vector<double> KvConfig::real_list(const std::string& key, const std::vector<double>& def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  std::vector<double> out;
  std::stringstream ss(it->second);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      out.push_back(std::stod(trim(part)));
    } catch (...) {
      throw ConfigError("config: key '" + key + "' wants comma-separated reals");
    }
  }
  if (out.empty()) throw ConfigError("config: key '" + key + "' is empty");
  return out;
}

std::string KvConfig::dump() const {
  std::ostringstream os;
  for (const auto& [k, v] : kv_) os << k << " = " << v << "\n";
  return os.str();
}

ModelConfig model_config_from(const KvConfig& kv) {
  ModelConfig cfg;
  cfg.arch = kv.str("model.arch", "mtl");
  cfg.variant = kv.str("model.variant", "default");
  try {
    cfg.apply_variant();
    cfg.tasks = TaskSet::parse(kv.str("model.tasks", "cls"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.depths = kv.int_list("model.depths", cfg.depths);
  cfg.channels = kv.integer("model.channels", cfg.channels);
  cfg.window = kv.integer("model.window", cfg.window);
  cfg.img_size = kv.integer("model.img_size", cfg.img_size);
  cfg.in_channels = kv.integer("model.in_channels", cfg.in_channels);

  const bool has_cls = kv.has("model.lambda_cls"), has_seg = kv.has("model.lambda_seg"),
             has_rec = kv.has("model.lambda_rec");
  if (has_cls || has_seg || has_rec) {
    auto want = [&kv](bool active, bool given, const char* name) {
      if (active && !given) {
        throw ConfigError(std::string("config: explicit weights must cover every active task; missing ") +
                          name);
      }
      if (!active && given) {
        throw ConfigError(std::string("config: weight supplied for inactive task ") + name);
      }
    };
    want(cfg.tasks.cls, has_cls, "model.lambda_cls");
    want(cfg.tasks.seg, has_seg, "model.lambda_seg");
    want(cfg.tasks.rec, has_rec, "model.lambda_rec");
    cfg.weights.cls = kv.real("model.lambda_cls", 0.0);
    cfg.weights.seg = kv.real("model.lambda_seg", 0.0);
    cfg.weights.rec = kv.real("model.lambda_rec", 0.0);
  } else {
    cfg.weights = ModelConfig::default_weights(cfg.tasks);
  }
  cfg.weights.ce = kv.real("model.lambda_ce", cfg.weights.ce);
  cfg.weights.dice = kv.real("model.lambda_dice", cfg.weights.dice);

  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

TrainConfig train_config_from(const KvConfig& kv, const ModelConfig& model, uint64_t seed) {
  TrainConfig tc;
  const bool seg_only = !model.tasks.cls;
  const bool tiny3 = model.variant == "tiny" && model.tasks.count() == 3;
  if (model.arch == "joint") {
    tc.batch = 128;
    tc.lr_base = 0.004;
  } else if (seg_only || tiny3) {
    tc.batch = 32;
    tc.lr_base = 0.01;
  } else {
    tc.batch = 64;
    tc.lr_base = 0.01;
  }
  tc.epochs = seg_only ? 10 : 30;  // desk-scale defaults

  tc.lr_base = kv.real("train.lr", tc.lr_base);
  tc.batch = kv.integer("train.batch", tc.batch);
  tc.epochs = kv.integer("train.epochs", tc.epochs);
  tc.momentum = kv.real("train.momentum", 0.9);
  tc.weight_decay = kv.real("train.weight_decay", 1e-4);
  tc.augment = kv.boolean("train.augment", true);
  tc.seed = seed;
  if (tc.batch < 1 || tc.epochs < 1 || tc.lr_base <= 0) {
    throw ConfigError("config: train.batch/epochs/lr must be positive");
  }
  return tc;
}

GenConfig gen_config_from(const KvConfig& kv, uint64_t seed) {
  GenConfig g;
  g.img_size = kv.integer("gen.img_size", g.img_size);
  g.n_train = kv.integer("gen.n_train", g.n_train);
  g.n_val = kv.integer("gen.n_val", g.n_val);
  g.n_test_in = kv.integer("gen.n_test_in", g.n_test_in);
  g.n_test_shift = kv.integer("gen.n_test_shift", g.n_test_shift);
  g.rho_train = kv.real("gen.rho_train", g.rho_train);
  g.rho_shift = kv.real("gen.rho_shift", g.rho_shift);
  g.pos_fraction = kv.real("gen.pos_fraction", g.pos_fraction);
  g.neg_blob_fraction = kv.real("gen.neg_blob_fraction", g.neg_blob_fraction);
  g.slices_per_patient = kv.integer("gen.slices_per_patient", g.slices_per_patient);
  auto bright = kv.real_list("gen.hospital_brightness", {});
  if (!bright.empty()) {
    if (bright.size() != 11) throw ConfigError("config: gen.hospital_brightness wants 11 values");
    for (size_t i = 0; i < 11; ++i) g.hospital_brightness[i] = bright[i];
  }
  g.ring_thick_strong = kv.real("gen.ring_thick_strong", g.ring_thick_strong);
  g.ring_thick_weak = kv.real("gen.ring_thick_weak", g.ring_thick_weak);
  g.grain_strong = kv.real("gen.grain_strong", g.grain_strong);
  g.grain_weak = kv.real("gen.grain_weak", g.grain_weak);
  g.blob_intensity = kv.real("gen.blob_intensity", g.blob_intensity);
  g.core_intensity = kv.real("gen.core_intensity", g.core_intensity);
  g.blob_axis_lo = kv.real("gen.blob_axis_lo", g.blob_axis_lo);
  g.blob_axis_hi = kv.real("gen.blob_axis_hi", g.blob_axis_hi);
  g.seed = seed;
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return g;
}

int worker_threads() {
  const char* env = std::getenv("MTLSWIN_THREADS");
  if (env != nullptr) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return 2;
}

}  // namespace mtlswin
