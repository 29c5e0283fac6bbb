#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mtlswin/model.hpp"
#include "mtlswin/ops.hpp"

namespace mtlswin {

/// Probability floor inside logs; guards one-hot-saturated softmax rows.
template <typename S>
constexpr S kProbFloor = S(1e-12);

/// Smoothing added to the Dice numerator and denominator; makes the
/// empty-mask/empty-prediction case well-defined (loss 0).
template <typename S>
constexpr S kDiceEps = S(1e-5);

/// -sum_i p_i log q_i per row, averaged over rows. p is one-hot (or soft)
/// ground truth, q are probabilities from a softmax.
template <typename S>
Var<S> cross_entropy(const Var<S>& probs, const Tensor<S>& target_onehot) {
  if (probs.size() != shape_numel(target_onehot.shape())) {
    throw std::invalid_argument("cross_entropy: target shape mismatch");
  }
  Var<S> per_row = row_sum(mul(constant(target_onehot.reshaped(probs.shape())),
                               log_clamped(probs, kProbFloor<S>)));
  return scale(mean_all(per_row), S(-1));
}

/// 1 - (2 sum pq + eps) / (sum p + sum q + eps) over one flattened image;
/// p is the binary ground-truth mask, q the predicted foreground probability.
template <typename S>
Var<S> dice_loss(const Var<S>& fg_probs, const Tensor<S>& mask) {
  if (fg_probs.size() != shape_numel(mask.shape())) {
    throw std::invalid_argument("dice_loss: mask shape mismatch");
  }
  Var<S> q = reshape(fg_probs, {fg_probs.size()});
  Var<S> p = constant(mask.reshaped({fg_probs.size()}));
  Var<S> num = add_scalar(scale(dot(p, q), S(2)), kDiceEps<S>);
  Var<S> den = add_scalar(add(sum_all(q), sum_all(p)), kDiceEps<S>);
  return add_scalar(scale(divide(num, den), S(-1)), S(1));
}

/// (1/n) sum (p_i - q_i)^2.
template <typename S>
Var<S> mse_loss(const Var<S>& output, const Tensor<S>& target) {
  if (output.size() != shape_numel(target.shape())) {
    throw std::invalid_argument("mse_loss: target shape mismatch");
  }
  Var<S> d = sub(output, constant(target.reshaped(output.shape())));
  return mean_all(mul(d, d));
}

/// Everything the loss heads need from one batch, in graph-ready layout.
template <typename S>
struct LossBatch {
  Tensor<S> images;      // (B, H, W, ch); also the reconstruction target
  Tensor<S> cls_onehot;  // (B, num_classes)
  Tensor<S> seg_onehot;  // (B*H*W, seg_classes); zero rows where unmasked
  Tensor<S> seg_fg;      // (B, H*W) foreground indicator
  Tensor<S> mask_flags;  // (B,) 1 where a mask exists
  int64_t n_masked = 0;
  std::vector<int> labels;
};

/// Per-sample (lambda_ce * pixel-mean CE + lambda_dice * Dice), averaged over
/// the samples that carry masks; a detached zero when none do.
template <typename S>
Var<S> segmentation_loss(const Var<S>& seg_logits, const LossBatch<S>& batch, const TaskWeights& w) {
  const int64_t b = batch.mask_flags.size();
  if (batch.n_masked == 0) return constant(Tensor<S>::scalar(S(0)));

  const int64_t k = seg_logits.value().last_dim();
  const int64_t pixels = seg_logits.size() / (b * k);
  Var<S> probs = softmax_rows(seg_logits);  // (B*HW, K)

  // Pixel-mean cross entropy per sample.
  Var<S> ce_pix = scale(row_sum(mul(constant(batch.seg_onehot.reshaped(probs.shape())),
                                    log_clamped(probs, kProbFloor<S>))),
                        S(-1));                                   // (B*HW,)
  Var<S> ce = row_mean(reshape(ce_pix, {b, pixels}));             // (B,)

  // Dice on the foreground channel, per sample.
  Var<S> fg = reshape(select_col(probs, 1), {b, pixels});
  Var<S> p_const = constant(batch.seg_fg);
  Var<S> num = add_scalar(scale(row_sum(mul(fg, p_const)), S(2)), kDiceEps<S>);
  Var<S> den = add_scalar(add(row_sum(fg), row_sum(p_const)), kDiceEps<S>);
  Var<S> dice = add_scalar(scale(divide(num, den), S(-1)), S(1));  // (B,)

  Var<S> per_sample = add(scale(ce, static_cast<S>(w.ce)), scale(dice, static_cast<S>(w.dice)));
  Var<S> masked_sum = dot(per_sample, constant(batch.mask_flags));
  return scale(masked_sum, S(1) / static_cast<S>(batch.n_masked));
}

struct TaskLossValues {
  double cls = 0.0, seg = 0.0, rec = 0.0, total = 0.0;
};

template <typename S>
struct LossGraph {
  Var<S> total;
  TaskLossValues values;
};

/// Weighted sum of the active task losses; weights are taken as configured
/// and never renormalized.
template <typename S>
LossGraph<S> total_loss(const MtlOutputs<S>& out, const LossBatch<S>& batch, const ModelConfig& cfg) {
  LossGraph<S> lg;
  Var<S> acc;
  auto accumulate = [&acc](const Var<S>& term) { acc = acc.defined() ? add(acc, term) : term; };

  if (cfg.tasks.cls) {
    if (!out.cls_logits.defined()) throw std::invalid_argument("total_loss: cls configured but absent");
    Var<S> cls = cross_entropy(softmax_rows(out.cls_logits), batch.cls_onehot);
    lg.values.cls = static_cast<double>(cls.item());
    accumulate(scale(cls, static_cast<S>(cfg.weights.cls)));
  } else if (out.cls_logits.defined() && cfg.weights.cls != 0) {
    throw std::invalid_argument("total_loss: weight supplied for inactive task cls");
  }
  if (cfg.tasks.seg) {
    if (!out.seg_logits.defined()) throw std::invalid_argument("total_loss: seg configured but absent");
    Var<S> seg = segmentation_loss(out.seg_logits, batch, cfg.weights);
    lg.values.seg = static_cast<double>(seg.item());
    accumulate(scale(seg, static_cast<S>(cfg.weights.seg)));
  }
  if (cfg.tasks.rec) {
    if (!out.rec_output.defined()) throw std::invalid_argument("total_loss: rec configured but absent");
    Var<S> rec = mse_loss(out.rec_output, batch.images);
    lg.values.rec = static_cast<double>(rec.item());
    accumulate(scale(rec, static_cast<S>(cfg.weights.rec)));
  }
  lg.total = acc;
  lg.values.total = static_cast<double>(acc.item());
  return lg;
}

/// Plain-number weighted sum for pre-computed parts (the Eq.-level contract).
inline double weighted_total(const TaskLossValues& parts, const TaskWeights& w, const TaskSet& tasks) {
  double t = 0.0;
  if (tasks.cls) t += w.cls * parts.cls;
  if (tasks.seg) t += w.seg * parts.seg;
  if (tasks.rec) t += w.rec * parts.rec;
  return t;
}

}  // namespace mtlswin
