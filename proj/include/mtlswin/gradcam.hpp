#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mtlswin/model.hpp"
#include "mtlswin/ops.hpp"

namespace mtlswin {

/// Gradient-weighted class activation map. Channel weights are the spatial
/// mean of d(logit_target)/d(feature); the map is ReLU(sum_c w_c * feature_c)
/// on the selected stage grid, min-max normalized and bilinearly upsampled to
/// the input resolution. A map that is all zero before normalization stays
/// all zero. stage = -1 selects the final encoder stage.
template <typename S>
Tensor<S> grad_cam(MtlSwinUnet<S>& model, const Tensor<S>& image, int target_class, int stage = -1) {
  if (!model.cls_head) throw std::invalid_argument("grad_cam: model has no classification head");
  if (target_class < 0 || target_class >= static_cast<int>(model.cfg.num_classes)) {
    throw std::invalid_argument("grad_cam: target class out of range");
  }
  const int n_stages = model.cfg.stage_count();
  if (stage < -1 || stage >= n_stages) throw std::invalid_argument("grad_cam: stage out of range");
  if (image.rank() != 4 || image.dim(0) != 1) {
    throw std::invalid_argument("grad_cam: expected a single (1,H,W,ch) image");
  }

  MtlOutputs<S> out = model(image);
  if (!out.cls_logits.value().all_finite()) {
    throw std::runtime_error("grad_cam: model produced non-finite logits");
  }
  const int eff_stage = (stage == -1) ? n_stages - 1 : stage;
  Var<S> feat = (eff_stage == n_stages - 1) ? out.enc.final_tokens
                                            : out.enc.stage_feats[static_cast<size_t>(eff_stage)];

  Tensor<S> pick({1, model.cfg.num_classes}, S(0));
  pick[target_class] = S(1);
  backward(dot(out.cls_logits, constant(pick)));

  const int64_t grid = model.encoder.stage_grid(eff_stage);
  const int64_t c = feat.value().last_dim();
  const int64_t npos = grid * grid;
  const Tensor<S>& fv = feat.value();
  const Tensor<S>& fg = feat.grad();

  std::vector<double> w(static_cast<size_t>(c), 0.0);
  for (int64_t p = 0; p < npos; ++p) {
    for (int64_t ch = 0; ch < c; ++ch) {
      w[static_cast<size_t>(ch)] += static_cast<double>(fg[p * c + ch]);
    }
  }
  for (double& v : w) v /= static_cast<double>(npos);

  std::vector<double> cam(static_cast<size_t>(npos), 0.0);
  double max_v = 0.0, min_v = 0.0;
  for (int64_t p = 0; p < npos; ++p) {
    double acc = 0.0;
    for (int64_t ch = 0; ch < c; ++ch) {
      acc += w[static_cast<size_t>(ch)] * static_cast<double>(fv[p * c + ch]);
    }
    cam[static_cast<size_t>(p)] = std::max(0.0, acc);
    max_v = std::max(max_v, cam[static_cast<size_t>(p)]);
    min_v = (p == 0) ? cam[0] : std::min(min_v, cam[static_cast<size_t>(p)]);
  }

  if (max_v <= 0.0) {
    std::fill(cam.begin(), cam.end(), 0.0);
  } else if (max_v == min_v) {
    std::fill(cam.begin(), cam.end(), 1.0);
  } else {
    for (double& v : cam) v = (v - min_v) / (max_v - min_v);
  }

  // Bilinear upsample (align corners) onto the input resolution.
  const int64_t h = image.dim(1), wpx = image.dim(2);
  Tensor<S> heat({h, wpx});
  for (int64_t y = 0; y < h; ++y) {
    const double sy = (h > 1 && grid > 1) ? static_cast<double>(y) * static_cast<double>(grid - 1) /
                                                static_cast<double>(h - 1)
                                          : 0.0;
    const int64_t y0 = std::min<int64_t>(static_cast<int64_t>(sy), grid - 1);
    const int64_t y1 = std::min<int64_t>(y0 + 1, grid - 1);
    const double fy = sy - static_cast<double>(y0);
    for (int64_t x = 0; x < wpx; ++x) {
      const double sx = (wpx > 1 && grid > 1) ? static_cast<double>(x) * static_cast<double>(grid - 1) /
                                                    static_cast<double>(wpx - 1)
                                              : 0.0;
      const int64_t x0 = std::min<int64_t>(static_cast<int64_t>(sx), grid - 1);
      const int64_t x1 = std::min<int64_t>(x0 + 1, grid - 1);
      const double fx = sx - static_cast<double>(x0);
      const double v = (1 - fy) * ((1 - fx) * cam[static_cast<size_t>(y0 * grid + x0)] +
                                   fx * cam[static_cast<size_t>(y0 * grid + x1)]) +
                       fy * ((1 - fx) * cam[static_cast<size_t>(y1 * grid + x0)] +
                             fx * cam[static_cast<size_t>(y1 * grid + x1)]);
      heat[y * wpx + x] = static_cast<S>(v);
    }
  }
  return heat;
}

}  // namespace mtlswin
