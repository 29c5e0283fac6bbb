#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mtlswin/checkpoint.hpp"
#include "mtlswin/data.hpp"
#include "mtlswin/losses.hpp"
#include "mtlswin/metrics.hpp"
#include "mtlswin/model.hpp"

namespace mtlswin {

// ---------------------------------------------------------------------------
// Learning-rate schedule: lr_base * (1 - iter/iter_max)^0.9, per iteration.
// ---------------------------------------------------------------------------

struct LrSchedule {
  double lr_base = 0.01;
  int64_t iter_max = 1;
  double exponent = 0.9;
};

inline double lr_at(int64_t iter, const LrSchedule& s) {
  if (s.iter_max <= 0) throw std::invalid_argument("lr_at: iter_max must be positive");
  if (iter < 0 || iter > s.iter_max) {
    throw std::invalid_argument("lr_at: iteration " + std::to_string(iter) + " outside [0, " +
                                std::to_string(s.iter_max) + "]");
  }
  return s.lr_base * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(s.iter_max), s.exponent);
}

struct TrainConfig {
  double lr_base = 0.01;
  int64_t batch = 64;
  int64_t epochs = 30;
  double momentum = 0.9;
  double weight_decay = 1e-4;  // classical coupled L2 inside the gradient
  bool augment = true;
  uint64_t seed = 1234;
  std::string out_dir;  // when non-empty: log.csv, best.ckpt, last.ckpt
};

// ---------------------------------------------------------------------------
// SGD with momentum and coupled weight decay. Frozen parameters are skipped
// entirely, so their values stay bit-identical.
// ---------------------------------------------------------------------------

template <typename S>
class Sgd {
 public:
  Sgd(std::vector<std::pair<std::string, Parameter<S>*>> params, double momentum, double weight_decay)
      : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
    for (auto& [name, p] : params_) velocity_.emplace_back(p->value.shape(), S(0));
  }

  void zero_grad() {
    for (auto& [name, p] : params_) {
      if (p->trainable) p->zero_grad();
    }
  }

  void step(double lr) {
    const S m = static_cast<S>(momentum_), wd = static_cast<S>(weight_decay_), eta = static_cast<S>(lr);
    for (size_t i = 0; i < params_.size(); ++i) {
      Parameter<S>* p = params_[i].second;
      if (!p->trainable) continue;
      if (!p->grad.arr().allFinite()) {
        throw std::runtime_error("sgd: non-finite gradient in " + params_[i].first);
      }
      auto v = velocity_[i].arr();
      v = m * v + (p->grad.arr() + wd * p->value.arr());
      p->value.arr() -= eta * v;
    }
  }

 private:
  std::vector<std::pair<std::string, Parameter<S>*>> params_;
  std::vector<Tensor<S>> velocity_;
  double momentum_, weight_decay_;
};

// ---------------------------------------------------------------------------
// Batch assembly
// ---------------------------------------------------------------------------

/// Builds graph-ready tensors for the samples at indices[start, start+count).
/// With augment set, each sample gets an independent geometric transform
/// (identical on image and mask); the reconstruction target is the augmented
/// image itself.
template <typename S>
LossBatch<S> make_batch(const SyntheticDataset& ds, const std::vector<int64_t>& indices, size_t start,
                        size_t count, bool augment = false, Rng* rng = nullptr) {
  const Sample& first = ds.samples.at(static_cast<size_t>(indices.at(start)));
  const int64_t h = first.height, w = first.width, pixels = h * w;
  const int64_t b = static_cast<int64_t>(count);

  LossBatch<S> batch;
  batch.images = Tensor<S>({b, h, w, 1});
  batch.cls_onehot = Tensor<S>({b, 2});
  batch.seg_onehot = Tensor<S>({b * pixels, 2});
  batch.seg_fg = Tensor<S>({b, pixels});
  batch.mask_flags = Tensor<S>({b});
  batch.labels.resize(static_cast<size_t>(b));

  for (int64_t i = 0; i < b; ++i) {
    const Sample& s = ds.samples.at(static_cast<size_t>(indices.at(start + static_cast<size_t>(i))));
    if (s.height != h || s.width != w) throw std::invalid_argument("make_batch: mixed image sizes");
    std::vector<float> img = s.image;
    std::vector<uint8_t> mask = s.mask;
    if (augment) {
      if (rng == nullptr) throw std::invalid_argument("make_batch: augmentation needs an rng");
      augment_sample(img, s.has_mask ? &mask : nullptr, h, w, *rng);
    }
    for (int64_t px = 0; px < pixels; ++px) {
      batch.images[i * pixels + px] = static_cast<S>(img[static_cast<size_t>(px)]);
    }
    batch.labels[static_cast<size_t>(i)] = s.label;
    batch.cls_onehot[i * 2 + (s.label == 1 ? 1 : 0)] = S(1);
    if (s.has_mask) {
      batch.mask_flags[i] = S(1);
      batch.n_masked++;
      for (int64_t px = 0; px < pixels; ++px) {
        const bool fg = mask[static_cast<size_t>(px)] != 0;
        batch.seg_onehot[(i * pixels + px) * 2 + (fg ? 1 : 0)] = S(1);
        if (fg) batch.seg_fg[i * pixels + px] = S(1);
      }
    }
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
  std::vector<double> scores;  // positive-class probability per sample
  std::vector<int> labels;
  MetricsReport report;
};

namespace train_detail {

template <typename S>
double positive_prob(S l0, S l1) {
  const double a = static_cast<double>(l0), b = static_cast<double>(l1);
  const double m = std::max(a, b);
  const double e0 = std::exp(a - m), e1 = std::exp(b - m);
  return e1 / (e0 + e1);
}

}  // namespace train_detail

/// Forward evaluation over a split. Classification scores always; mean IoU
/// over masked samples when the model carries a segmentation decoder.
/// Batches are distributed over `threads` workers (parameters are read-only
/// during evaluation); results are ordered, so the output is deterministic.
template <typename S, typename Model>
EvalResult evaluate_model(Model& model, const SyntheticDataset& ds, const std::vector<int64_t>& indices,
                          int64_t batch_size, int threads = 1) {
  constexpr bool kIsMtl = requires { model.seg_decoder; };
  EvalResult out;
  out.scores.resize(indices.size());
  out.labels.resize(indices.size());
  std::vector<double> ious(indices.size(), -1.0);

  const size_t n_batches = (indices.size() + static_cast<size_t>(batch_size) - 1) / static_cast<size_t>(batch_size);
  auto run_range = [&](size_t first_batch, size_t stride) {
    NoGradGuard ng;
    for (size_t bi = first_batch; bi < n_batches; bi += stride) {
      const size_t start = bi * static_cast<size_t>(batch_size);
      const size_t count = std::min(static_cast<size_t>(batch_size), indices.size() - start);
      LossBatch<S> batch = make_batch<S>(ds, indices, start, count);
      Tensor<S> logits;
      Tensor<S> seg_logits;
      if constexpr (kIsMtl) {
        MtlOutputs<S> o = model(batch.images);
        if (o.cls_logits.defined()) logits = o.cls_logits.value();
        if (o.seg_logits.defined()) seg_logits = o.seg_logits.value();
      } else {
        logits = model(batch.images).value();
      }
      const int64_t pixels = batch.images.dim(1) * batch.images.dim(2);
      for (size_t i = 0; i < count; ++i) {
        const Sample& s = ds.samples[static_cast<size_t>(indices[start + i])];
        out.labels[start + i] = s.label;
        if (logits.size() > 0) {
          out.scores[start + i] = train_detail::positive_prob<S>(logits[static_cast<int64_t>(i) * 2],
                                                                 logits[static_cast<int64_t>(i) * 2 + 1]);
        }
        if (seg_logits.size() > 0 && s.has_mask) {
          std::vector<uint8_t> pred(static_cast<size_t>(pixels));
          for (int64_t px = 0; px < pixels; ++px) {
            const int64_t row = (static_cast<int64_t>(i) * pixels + px) * 2;
            pred[static_cast<size_t>(px)] =
                train_detail::positive_prob<S>(seg_logits[row], seg_logits[row + 1]) >= 0.5 ? 1 : 0;
          }
          ious[start + i] = binary_iou(pred, s.mask);
        }
      }
    }
  };

  if (threads <= 1 || n_batches <= 1) {
    run_range(0, 1);
  } else {
    const size_t t = std::min<size_t>(static_cast<size_t>(threads), n_batches);
    std::vector<std::thread> pool;
    for (size_t k = 0; k < t; ++k) pool.emplace_back(run_range, k, t);
    for (auto& th : pool) th.join();
  }

  bool has_head = true;
  if constexpr (kIsMtl) has_head = model.cls_head.has_value();
  if (has_head && !out.scores.empty()) out.report = classification_metrics(out.scores, out.labels);
  double iou_sum = 0.0;
  int64_t iou_n = 0;
  for (double v : ious) {
    if (v >= 0.0) {
      iou_sum += v;
      iou_n++;
    }
  }
  if (iou_n > 0) out.report.iou_seg = iou_sum / static_cast<double>(iou_n);
  return out;
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

struct EpochLog {
  int64_t epoch = 0;
  TaskLossValues losses;
  double val_acc = 0.0;
  double val_auc = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double best_metric = -1.0;
  int64_t best_epoch = -1;
  std::string best_path, last_path, log_path;
};

namespace train_detail {

inline void write_log_csv(const std::string& path, const std::vector<EpochLog>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("train: cannot write " + path);
  f << "epoch,L_cls,L_seg,L_rec,L_total,val_acc,val_auc,lr\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(r.epoch), r.losses.cls, r.losses.seg, r.losses.rec,
                  r.losses.total, r.val_acc, r.val_auc, r.lr);
    f << buf;
  }
}

/// Shared epoch/batch/optimizer loop; step_loss builds the loss graph for one
/// batch, eval_metric returns (acc, auc-or-iou selection metric) on val.
template <typename S, typename Model>
TrainResult run_loop(Model& model, const TrainConfig& tc, const SyntheticDataset& ds,
                     const std::function<LossGraph<S>(const LossBatch<S>&)>& step_loss,
                     bool select_by_iou) {
  if (tc.batch < 1 || tc.epochs < 1) throw std::invalid_argument("train: batch and epochs must be >= 1");
  if (ds.splits.train.empty()) throw std::invalid_argument("train: empty training split");

  TrainResult result;
  auto params = collect_params<S>(model);
  Sgd<S> opt(params, tc.momentum, tc.weight_decay);
  Rng rng(tc.seed);

  std::vector<int64_t> order = ds.splits.train;
  const int64_t batches_per_epoch =
      (static_cast<int64_t>(order.size()) + tc.batch - 1) / tc.batch;
  LrSchedule sched{tc.lr_base, tc.epochs * batches_per_epoch, 0.9};

  if (!tc.out_dir.empty()) std::filesystem::create_directories(tc.out_dir);

  int64_t iter = 0;
  for (int64_t epoch = 0; epoch < tc.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    TaskLossValues sums;
    double lr = 0.0;
    for (int64_t b = 0; b < batches_per_epoch; ++b) {
      const size_t start = static_cast<size_t>(b * tc.batch);
      const size_t count = std::min<size_t>(static_cast<size_t>(tc.batch), order.size() - start);
      LossBatch<S> batch = make_batch<S>(ds, order, start, count, tc.augment, &rng);
      LossGraph<S> lg = step_loss(batch);
      if (!std::isfinite(lg.values.total)) {
        throw std::runtime_error("train: diverged (non-finite loss) at iteration " + std::to_string(iter));
      }
      opt.zero_grad();
      backward(lg.total);
      lr = lr_at(iter, sched);
      opt.step(lr);
      ++iter;
      sums.cls += lg.values.cls;
      sums.seg += lg.values.seg;
      sums.rec += lg.values.rec;
      sums.total += lg.values.total;
    }

    EvalResult val = evaluate_model<S>(model, ds, ds.splits.val, tc.batch);
    EpochLog row;
    row.epoch = epoch;
    row.losses.cls = sums.cls / static_cast<double>(batches_per_epoch);
    row.losses.seg = sums.seg / static_cast<double>(batches_per_epoch);
    row.losses.rec = sums.rec / static_cast<double>(batches_per_epoch);
    row.losses.total = sums.total / static_cast<double>(batches_per_epoch);
    row.val_acc = val.report.acc;
    row.val_auc = val.report.auc.value_or(0.0);
    row.lr = lr;
    result.log.push_back(row);

    const double metric = select_by_iou ? val.report.iou_seg.value_or(0.0) : row.val_auc;
    if (metric > result.best_metric) {
      result.best_metric = metric;
      result.best_epoch = epoch;
      if (!tc.out_dir.empty()) {
        result.best_path = tc.out_dir + "/best.ckpt";
        save_checkpoint<S>(result.best_path, params);
      }
    }
  }

  if (!tc.out_dir.empty()) {
    result.last_path = tc.out_dir + "/last.ckpt";
    save_checkpoint<S>(result.last_path, params);
    if (result.best_path.empty()) {
      result.best_path = tc.out_dir + "/best.ckpt";
      save_checkpoint<S>(result.best_path, params);
    }
    result.log_path = tc.out_dir + "/log.csv";
    write_log_csv(result.log_path, result.log);
  }
  return result;
}

}  // namespace train_detail

/// Multi-task training: minimizes the weighted task loss; best checkpoint by
/// validation AUC (validation IoU for the pure-segmentation phase).
template <typename S>
TrainResult train_mtl(MtlSwinUnet<S>& model, const TrainConfig& tc, const SyntheticDataset& ds) {
  auto step = [&model](const LossBatch<S>& batch) {
    MtlOutputs<S> out = model(batch.images);
    return total_loss(out, batch, model.cfg);
  };
  const bool seg_only = !model.cfg.tasks.cls;
  return train_detail::run_loop<S>(model, tc, ds, step, seg_only);
}

/// Phase-2 joint training: cross entropy on the classification head; the
/// frozen encoder receives no updates.
template <typename S>
TrainResult train_joint(JointSwinTransformer<S>& model, const TrainConfig& tc, const SyntheticDataset& ds) {
  auto step = [&model](const LossBatch<S>& batch) {
    Var<S> logits = model(batch.images);
    Var<S> ce = cross_entropy(softmax_rows(logits), batch.cls_onehot);
    LossGraph<S> lg;
    lg.values.cls = static_cast<double>(ce.item());
    lg.total = scale(ce, static_cast<S>(model.cfg.weights.cls));
    lg.values.total = static_cast<double>(lg.total.item());
    return lg;
  };
  return train_detail::run_loop<S>(model, tc, ds, step, /*select_by_iou=*/false);
}

}  // namespace mtlswin
