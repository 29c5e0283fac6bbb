// Command-line surface: dataset generation, training, evaluation, Grad-CAM
// explanation, and the gradient-check report, all from flat key=value configs.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mtlswin/checkpoint.hpp"
#include "mtlswin/config.hpp"
#include "mtlswin/data.hpp"
#include "mtlswin/gradcam.hpp"
#include "mtlswin/gradcheck.hpp"
#include "mtlswin/metrics.hpp"
#include "mtlswin/model.hpp"
#include "mtlswin/png.hpp"
#include "mtlswin/train.hpp"

namespace fs = std::filesystem;
using namespace mtlswin;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  int64_t seed = -1;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "flat key=value config file");
  cmd->add_option("--seed", args.seed, "seed override");
  cmd->add_option("--out", args.out_dir, "output directory")->required();
  cmd->add_option("--set", args.sets, "override: key=value (repeatable)");
}

KvConfig resolve(const CommonArgs& args, const std::string& command) {
  KvConfig kv;
  if (!args.config_path.empty()) kv = KvConfig::from_file(args.config_path);
  for (const auto& s : args.sets) kv.set_assignment(s);
  if (args.seed >= 0) kv.set("seed", std::to_string(args.seed));
  if (!kv.has("seed")) kv.set("seed", "1234");
  kv.set("command", command);
  kv.set("out", args.out_dir);
  return kv;
}

void write_run_meta(const KvConfig& kv, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream f(out_dir + "/run.meta", std::ios::trunc);
  if (!f) throw IoError("cannot write " + out_dir + "/run.meta");
  f << kv.dump();
}

uint64_t seed_of(const KvConfig& kv) { return static_cast<uint64_t>(kv.integer("seed", 1234)); }

SyntheticDataset load_data(const KvConfig& kv) {
  const std::string dir = kv.str_required("data.dir");
  if (!fs::exists(dir + "/index.csv")) throw IoError("dataset not found at " + dir);
  try {
    return load_dataset(dir);
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }
}

int cmd_gen_data(const CommonArgs& args) {
  KvConfig kv = resolve(args, "gen-data");
  write_run_meta(kv, args.out_dir);
  GenConfig gc = gen_config_from(kv, seed_of(kv));
  SyntheticDataset ds = generate_dataset(gc);
  save_dataset(ds, args.out_dir);
  std::printf("wrote %zu samples (train %zu, val %zu, test_in %zu, test_shift %zu) to %s\n",
              ds.samples.size(), ds.splits.train.size(), ds.splits.val.size(), ds.splits.test_in.size(),
              ds.splits.test_shift.size(), args.out_dir.c_str());
  return 0;
}

int cmd_train(const CommonArgs& args) {
  KvConfig kv = resolve(args, "train");
  write_run_meta(kv, args.out_dir);
  const uint64_t seed = seed_of(kv);
  ModelConfig mc = model_config_from(kv);
  TrainConfig tc = train_config_from(kv, mc, seed);
  tc.out_dir = args.out_dir;
  SyntheticDataset ds = load_data(kv);
  if (ds.img_size != mc.img_size) {
    throw ConfigError("model.img_size " + std::to_string(mc.img_size) + " != dataset size " +
                      std::to_string(ds.img_size));
  }

  TrainResult result;
  if (mc.arch == "joint") {
    const std::string frozen = kv.str_required("model.frozen_ckpt");
    if (!fs::exists(frozen)) throw IoError("frozen checkpoint not found: " + frozen);
    JointSwinTransformer<float> model(mc, seed);
    auto params = collect_params<float>(model);
    try {
      load_checkpoint<float>(frozen, params, "frozen_encoder.", "encoder.");
    } catch (const std::runtime_error& e) {
      throw ConfigError(e.what());
    }
    model.set_frozen(true);
    result = train_joint(model, tc, ds);
  } else {
    MtlSwinUnet<float> model(mc, seed);
    result = train_mtl(model, tc, ds);
  }
  for (const auto& row : result.log) {
    std::printf("epoch %lld  total %.4f  val_acc %.4f  val_auc %.4f\n",
                static_cast<long long>(row.epoch), row.losses.total, row.val_acc, row.val_auc);
  }
  std::printf("best epoch %lld (metric %.4f); checkpoints in %s\n",
              static_cast<long long>(result.best_epoch), result.best_metric, args.out_dir.c_str());
  return 0;
}

template <typename Model>
EvalResult eval_with(Model& model, const KvConfig& kv, const SyntheticDataset& ds,
                     const std::vector<int64_t>& idx) {
  const int64_t batch = kv.integer("eval.batch", 64);
  return evaluate_model<float>(model, ds, idx, batch, worker_threads());
}

const std::vector<int64_t>& pick_split(const SyntheticDataset& ds, const std::string& name) {
  if (name == "train") return ds.splits.train;
  if (name == "val") return ds.splits.val;
  if (name == "test_in") return ds.splits.test_in;
  if (name == "test_shift") return ds.splits.test_shift;
  throw ConfigError("unknown split '" + name + "'");
}

int cmd_eval(const CommonArgs& args) {
  KvConfig kv = resolve(args, "eval");
  write_run_meta(kv, args.out_dir);
  const uint64_t seed = seed_of(kv);
  ModelConfig mc = model_config_from(kv);
  SyntheticDataset ds = load_data(kv);
  const std::string ckpt = kv.str_required("eval.checkpoint");
  if (!fs::exists(ckpt)) throw IoError("checkpoint not found: " + ckpt);
  const auto& idx = pick_split(ds, kv.str("eval.split", "test_in"));

  EvalResult r;
  try {
    if (mc.arch == "joint") {
      JointSwinTransformer<float> model(mc, seed);
      load_checkpoint<float>(ckpt, collect_params<float>(model));
      r = eval_with(model, kv, ds, idx);
    } else {
      MtlSwinUnet<float> model(mc, seed);
      load_checkpoint<float>(ckpt, collect_params<float>(model));
      r = eval_with(model, kv, ds, idx);
    }
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  std::ofstream f(args.out_dir + "/metrics.csv", std::ios::trunc);
  f << metrics_csv(r.report);
  std::printf("%s", metrics_table(r.report).c_str());
  return 0;
}

int cmd_gradcam(const CommonArgs& args) {
  KvConfig kv = resolve(args, "gradcam");
  write_run_meta(kv, args.out_dir);
  const uint64_t seed = seed_of(kv);
  ModelConfig mc = model_config_from(kv);
  SyntheticDataset ds = load_data(kv);
  const std::string ckpt = kv.str_required("gradcam.checkpoint");
  if (!fs::exists(ckpt)) throw IoError("checkpoint not found: " + ckpt);
  const auto& idx = pick_split(ds, kv.str("gradcam.split", "test_in"));
  const int64_t which = kv.integer("gradcam.sample", 0);
  if (which < 0 || which >= static_cast<int64_t>(idx.size())) {
    throw ConfigError("gradcam.sample out of range");
  }
  const int target = static_cast<int>(kv.integer("gradcam.target_class", 1));
  const int stage = static_cast<int>(kv.integer("gradcam.stage", -1));

  MtlSwinUnet<float> model(mc, seed);
  try {
    load_checkpoint<float>(ckpt, collect_params<float>(model));
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }

  const Sample& s = ds.samples[static_cast<size_t>(idx[static_cast<size_t>(which)])];
  Tensor<float> image({1, s.height, s.width, 1});
  for (int64_t i = 0; i < s.height * s.width; ++i) image[i] = s.image[static_cast<size_t>(i)];
  Tensor<float> heat = grad_cam(model, image, target, stage);

  std::vector<uint8_t> bytes(static_cast<size_t>(heat.size()));
  for (int64_t i = 0; i < heat.size(); ++i) {
    bytes[static_cast<size_t>(i)] = static_cast<uint8_t>(std::lround(255.0 * heat[i]));
  }
  write_pgm(args.out_dir + "/heatmap.pgm", s.width, s.height, bytes);
  std::vector<float> heatf(static_cast<size_t>(heat.size()));
  for (int64_t i = 0; i < heat.size(); ++i) heatf[static_cast<size_t>(i)] = static_cast<float>(heat[i]);
  write_png_rgb(args.out_dir + "/overlay.png", s.width, s.height, heat_overlay_rgb(s.image, heatf));
  std::printf("wrote %s/heatmap.pgm and overlay.png (sample %s, label %d)\n", args.out_dir.c_str(),
              s.name.c_str(), s.label);
  return 0;
}

int cmd_gradcheck(const CommonArgs& args) {
  KvConfig kv = resolve(args, "gradcheck");
  write_run_meta(kv, args.out_dir);
  auto rows = primitive_gradcheck_suite(seed_of(kv));
  bool ok = true;
  std::ofstream f(args.out_dir + "/gradcheck.csv", std::ios::trunc);
  f << "primitive,max_rel_err,pass\n";
  for (const auto& r : rows) {
    const bool pass = r.max_err < 1e-5;
    ok &= pass;
    std::printf("%-30s %.3e  %s\n", r.name.c_str(), r.max_err, pass ? "ok" : "FAIL");
    f << r.name << "," << r.max_err << "," << (pass ? 1 : 0) << "\n";
  }
  if (!ok) throw NumericError("gradient check failed");
  std::printf("all primitives below 1e-5\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-task Swin-Unet workbench"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, cam_args, gc_args;
  add_common(app.add_subcommand("gen-data", "generate the synthetic dataset"), gen_args);
  add_common(app.add_subcommand("train", "train a model"), train_args);
  add_common(app.add_subcommand("eval", "evaluate a checkpoint"), eval_args);
  add_common(app.add_subcommand("gradcam", "write prediction-basis heatmaps"), cam_args);
  add_common(app.add_subcommand("gradcheck", "finite-difference primitive report"), gc_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("gen-data")) return cmd_gen_data(gen_args);
    if (app.got_subcommand("train")) return cmd_train(train_args);
    if (app.got_subcommand("eval")) return cmd_eval(eval_args);
    if (app.got_subcommand("gradcam")) return cmd_gradcam(cam_args);
    if (app.got_subcommand("gradcheck")) return cmd_gradcheck(gc_args);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: [config] %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: [io] %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: [numeric] %s\n", e.what());
    return 4;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: [config] %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
