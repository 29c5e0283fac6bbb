#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mtlswin/graph.hpp"
#include "mtlswin/ops.hpp"
#include "mtlswin/rng.hpp"

namespace mtlswin {

template <typename S>
using ParamVisitor = std::function<void(const std::string&, Parameter<S>&)>;

namespace init {

template <typename S>
Tensor<S> trunc_normal(const Shape& shape, Rng& rng, double stddev = 0.02) {
  Tensor<S> t(shape);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<S>(rng.trunc_normal(stddev));
  return t;
}

template <typename S>
Tensor<S> zeros(const Shape& shape) {
  return Tensor<S>(shape, S(0));
}

template <typename S>
Tensor<S> ones(const Shape& shape) {
  return Tensor<S>(shape, S(1));
}

}  // namespace init

template <typename S>
struct Linear {
  Parameter<S> weight;  // (in, out); applied as x * W
  Parameter<S> bias;    // (out)
  bool has_bias = true;

  Linear() = default;
  Linear(int64_t in, int64_t out, Rng& rng, bool with_bias = true)
      : weight(init::trunc_normal<S>({in, out}, rng)), has_bias(with_bias) {
    if (with_bias) bias = Parameter<S>(init::zeros<S>({out}));
  }

  Var<S> operator()(const Var<S>& x) {
    Var<S> y = matmul(x, leaf(weight));
    return has_bias ? add_bias(y, leaf(bias)) : y;
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& f) {
    f(prefix + ".weight", weight);
    if (has_bias) f(prefix + ".bias", bias);
  }
};

template <typename S>
struct LayerNormLayer {
  Parameter<S> gamma;
  Parameter<S> beta;
  S eps = S(1e-5);

  LayerNormLayer() = default;
  explicit LayerNormLayer(int64_t dim)
      : gamma(init::ones<S>({dim})), beta(init::zeros<S>({dim})) {}

  Var<S> operator()(const Var<S>& x) { return layer_norm(x, leaf(gamma), leaf(beta), eps); }

  void visit(const std::string& prefix, const ParamVisitor<S>& f) {
    f(prefix + ".gamma", gamma);
    f(prefix + ".beta", beta);
  }
};

// ---------------------------------------------------------------------------
// Token-grid index maps. Row index of token (i, j) on an (h, w) grid is i*w+j.
// ---------------------------------------------------------------------------

namespace grid {

/// out(i, j) = in((i+dy) mod h, (j+dx) mod w); dy=dx=+s rolls content up-left.
inline IndexMap roll_map(int64_t h, int64_t w, int64_t dy, int64_t dx) {
  std::vector<int64_t> m(static_cast<size_t>(h * w));
  for (int64_t i = 0; i < h; ++i) {
    const int64_t si = ((i + dy) % h + h) % h;
    for (int64_t j = 0; j < w; ++j) {
      const int64_t sj = ((j + dx) % w + w) % w;
      m[static_cast<size_t>(i * w + j)] = si * w + sj;
    }
  }
  return make_index_map(std::move(m));
}

/// Groups tokens window-by-window: output rows ordered (window, in-window).
inline IndexMap window_partition_map(int64_t h, int64_t w, int64_t win) {
  std::vector<int64_t> m;
  m.reserve(static_cast<size_t>(h * w));
  for (int64_t wi = 0; wi < h / win; ++wi)
    for (int64_t wj = 0; wj < w / win; ++wj)
      for (int64_t ii = 0; ii < win; ++ii)
        for (int64_t jj = 0; jj < win; ++jj) m.push_back((wi * win + ii) * w + (wj * win + jj));
  return make_index_map(std::move(m));
}

inline IndexMap invert_map(const IndexMap& fwd) {
  std::vector<int64_t> inv(fwd->size());
  for (size_t i = 0; i < fwd->size(); ++i) inv[static_cast<size_t>((*fwd)[i])] = static_cast<int64_t>(i);
  return make_index_map(std::move(inv));
}

/// Rows of each 2x2 neighborhood made consecutive, order
/// (2i,2j), (2i+1,2j), (2i,2j+1), (2i+1,2j+1).
inline IndexMap merge_rows_map(int64_t h, int64_t w) {
  std::vector<int64_t> m;
  m.reserve(static_cast<size_t>(h * w));
  for (int64_t i = 0; i < h / 2; ++i) {
    for (int64_t j = 0; j < w / 2; ++j) {
      m.push_back((2 * i) * w + 2 * j);
      m.push_back((2 * i + 1) * w + 2 * j);
      m.push_back((2 * i) * w + 2 * j + 1);
      m.push_back((2 * i + 1) * w + 2 * j + 1);
    }
  }
  return make_index_map(std::move(m));
}

/// Rearrange (h*w, 2C) -> (2h*2w, C/2); channel chunk k of token (i, j) lands
/// at spatial offset matching the inverse of merge_rows_map ordering.
inline IndexMap expand_elems_map(int64_t h, int64_t w, int64_t c_half) {
  const int64_t c_in = 4 * c_half;
  std::vector<int64_t> m(static_cast<size_t>(h * w * c_in));
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      for (int64_t k = 0; k < 4; ++k) {
        const int64_t di = k % 2, dj = k / 2;
        const int64_t out_row = (2 * i + di) * (2 * w) + (2 * j + dj);
        for (int64_t c = 0; c < c_half; ++c) {
          m[static_cast<size_t>(out_row * c_half + c)] = (i * w + j) * c_in + k * c_half + c;
        }
      }
    }
  }
  return make_index_map(std::move(m));
}

/// Flatten non-overlapping p x p patches of an (H, W, ch) image into rows.
inline IndexMap patch_flatten_map(int64_t img_h, int64_t img_w, int64_t ch, int64_t p) {
  std::vector<int64_t> m;
  m.reserve(static_cast<size_t>(img_h * img_w * ch));
  for (int64_t pi = 0; pi < img_h / p; ++pi)
    for (int64_t pj = 0; pj < img_w / p; ++pj)
      for (int64_t di = 0; di < p; ++di)
        for (int64_t dj = 0; dj < p; ++dj)
          for (int64_t c = 0; c < ch; ++c)
            m.push_back(((pi * p + di) * img_w + (pj * p + dj)) * ch + c);
  return make_index_map(std::move(m));
}

}  // namespace grid

// ---------------------------------------------------------------------------
// Window multi-head self-attention
// ---------------------------------------------------------------------------

template <typename S>
struct WindowAttention {
  int64_t dim = 0, heads = 0, head_dim = 0, win = 0, tokens = 0;
  Linear<S> qkv;
  Linear<S> proj;
  Parameter<S> rel_bias;  // flat (heads * (2*win-1)^2)
  IndexMap q_map, k_map, v_map, merge_map, rel_map;

  WindowAttention() = default;
  WindowAttention(int64_t dim_, int64_t heads_, int64_t win_, Rng& rng)
      : dim(dim_),
        heads(heads_),
        head_dim(dim_ / heads_),
        win(win_),
        tokens(win_ * win_),
        qkv(dim_, 3 * dim_, rng),
        proj(dim_, dim_, rng),
        rel_bias(init::trunc_normal<S>({heads_ * (2 * win_ - 1) * (2 * win_ - 1)}, rng)) {
    if (dim_ % heads_ != 0) {
      throw std::invalid_argument("WindowAttention: channels " + std::to_string(dim_) +
                                  " not divisible by heads " + std::to_string(heads_));
    }
    build_maps();
  }

  void build_maps() {
    const int64_t t = tokens, c = dim, dh = head_dim;
    std::vector<int64_t> qm(static_cast<size_t>(heads * t * dh)), km(qm.size()), vm(qm.size());
    for (int64_t hh = 0; hh < heads; ++hh)
      for (int64_t tt = 0; tt < t; ++tt)
        for (int64_t d = 0; d < dh; ++d) {
          const int64_t o = (hh * t + tt) * dh + d;
          qm[static_cast<size_t>(o)] = tt * 3 * c + 0 * c + hh * dh + d;
          km[static_cast<size_t>(o)] = tt * 3 * c + 1 * c + hh * dh + d;
          vm[static_cast<size_t>(o)] = tt * 3 * c + 2 * c + hh * dh + d;
        }
    q_map = make_index_map(std::move(qm));
    k_map = make_index_map(std::move(km));
    v_map = make_index_map(std::move(vm));

    std::vector<int64_t> mm(static_cast<size_t>(t * c));
    for (int64_t tt = 0; tt < t; ++tt)
      for (int64_t hh = 0; hh < heads; ++hh)
        for (int64_t d = 0; d < dh; ++d)
          mm[static_cast<size_t>(tt * c + hh * dh + d)] = (hh * t + tt) * dh + d;
    merge_map = make_index_map(std::move(mm));

    const int64_t span = 2 * win - 1;
    std::vector<int64_t> rm(static_cast<size_t>(heads * t * t));
    for (int64_t hh = 0; hh < heads; ++hh)
      for (int64_t a = 0; a < t; ++a)
        for (int64_t b = 0; b < t; ++b) {
          const int64_t ry = a / win - b / win + win - 1;
          const int64_t rx = a % win - b % win + win - 1;
          rm[static_cast<size_t>((hh * t + a) * t + b)] = hh * span * span + ry * span + rx;
        }
    rel_map = make_index_map(std::move(rm));
  }

  /// x: (B, N, C) with rows already grouped window-by-window (N = nW * T).
  /// mask, when present, is a flat (nW * heads * T * T) additive tensor.
  Var<S> operator()(const Var<S>& x, const Tensor<S>* mask) {
    const int64_t c = dim, t = tokens, dh = head_dim;
    const int64_t groups = x.size() / (t * c);  // B * nW
    Var<S> qkv_out = qkv(x);                    // (B, N, 3C)
    Var<S> q = gather_elems(qkv_out, q_map, t * 3 * c, {groups * heads, t, dh});
    Var<S> k = gather_elems(qkv_out, k_map, t * 3 * c, {groups * heads, t, dh});
    Var<S> v = gather_elems(qkv_out, v_map, t * 3 * c, {groups * heads, t, dh});
    Var<S> scores = scale(bmm(q, k, /*transpose_b=*/true), S(1.0 / std::sqrt(static_cast<double>(dh))));
    Var<S> rel = gather_elems(Var<S>(leaf(rel_bias)), rel_map, rel_bias.size(), {heads * t * t});
    scores = add_tiled(scores, rel);
    if (mask != nullptr) scores = add_const_tiled(scores, *mask);
    Var<S> attn = softmax_rows(scores);
    Var<S> ctx = bmm(attn, v);  // (groups*heads, T, dh)
    Var<S> merged = gather_elems(ctx, merge_map, heads * t * dh, {groups, t, c});
    return proj(merged);
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& f) {
    qkv.visit(prefix + ".qkv", f);
    proj.visit(prefix + ".proj", f);
    f(prefix + ".rel_bias", rel_bias);
  }
};

// ---------------------------------------------------------------------------
// Swin transformer block: pre-norm (S)W-MSA + pre-norm MLP, both residual.
// ---------------------------------------------------------------------------

template <typename S>
struct SwinBlock {
  int64_t dim = 0, grid_h = 0, grid_w = 0, win = 0, shift = 0;
  LayerNormLayer<S> norm1, norm2;
  WindowAttention<S> attn;
  Linear<S> fc1, fc2;
  IndexMap roll_fwd, roll_inv, part_map, part_inv;
  Tensor<S> attn_mask;  // empty unless shifted

  SwinBlock() = default;
  SwinBlock(int64_t dim_, int64_t heads, int64_t grid_h_, int64_t grid_w_, int64_t window_cfg,
            bool shifted, Rng& rng, int64_t mlp_ratio = 4)
      : dim(dim_), grid_h(grid_h_), grid_w(grid_w_) {
    win = std::min(window_cfg, std::min(grid_h_, grid_w_));
    if (grid_h_ % win != 0 || grid_w_ % win != 0) {
      throw std::invalid_argument("SwinBlock: grid " + std::to_string(grid_h_) + "x" +
                                  std::to_string(grid_w_) + " not divisible by window " + std::to_string(win));
    }
    shift = (shifted && win < std::min(grid_h_, grid_w_)) ? win / 2 : 0;
    norm1 = LayerNormLayer<S>(dim_);
    norm2 = LayerNormLayer<S>(dim_);
    attn = WindowAttention<S>(dim_, heads, win, rng);
    fc1 = Linear<S>(dim_, mlp_ratio * dim_, rng);
    fc2 = Linear<S>(mlp_ratio * dim_, dim_, rng);
    part_map = grid::window_partition_map(grid_h_, grid_w_, win);
    part_inv = grid::invert_map(part_map);
    if (shift > 0) {
      roll_fwd = grid::roll_map(grid_h_, grid_w_, shift, shift);
      roll_inv = grid::roll_map(grid_h_, grid_w_, -shift, -shift);
      attn_mask = build_mask();
    }
  }

  /// Cross-window pairs on the rolled grid get a large negative logit so
  /// their attention weight underflows to exactly zero after softmax.
  Tensor<S> build_mask() const {
    const int64_t t = win * win;
    const int64_t nw = (grid_h / win) * (grid_w / win);
    auto band = [this](int64_t coord, int64_t extent) {
      if (coord < extent - win) return 0;
      if (coord < extent - shift) return 1;
      return 2;
    };
    std::vector<int> region(static_cast<size_t>(grid_h * grid_w));
    for (int64_t i = 0; i < grid_h; ++i)
      for (int64_t j = 0; j < grid_w; ++j)
        region[static_cast<size_t>(i * grid_w + j)] = band(i, grid_h) * 3 + band(j, grid_w);

    const auto& part = *part_map;
    Tensor<S> mask(Shape{nw * attn.heads * t * t}, S(0));
    for (int64_t w = 0; w < nw; ++w) {
      for (int64_t a = 0; a < t; ++a) {
        const int ra = region[static_cast<size_t>(part[static_cast<size_t>(w * t + a)])];
        for (int64_t b = 0; b < t; ++b) {
          const int rb = region[static_cast<size_t>(part[static_cast<size_t>(w * t + b)])];
          if (ra != rb) {
            for (int64_t hh = 0; hh < attn.heads; ++hh) {
              mask[((w * attn.heads + hh) * t + a) * t + b] = S(-1e4);
            }
          }
        }
      }
    }
    return mask;
  }

  Var<S> operator()(const Var<S>& x) {
    const int64_t n = grid_h * grid_w;
    const Shape like = x.shape();
    Var<S> h = norm1(x);
    if (shift > 0) h = gather_rows(h, roll_fwd, n, dim, like);
    h = gather_rows(h, part_map, n, dim, like);
    h = attn(h, shift > 0 ? &attn_mask : nullptr);
    h = gather_rows(h, part_inv, n, dim, like);
    if (shift > 0) h = gather_rows(h, roll_inv, n, dim, like);
    Var<S> y = add(x, h);
    Var<S> m = fc2(gelu(fc1(norm2(y))));
    return add(y, m);
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& f) {
    norm1.visit(prefix + ".norm1", f);
    attn.visit(prefix + ".attn", f);
    norm2.visit(prefix + ".norm2", f);
    fc1.visit(prefix + ".mlp.fc1", f);
    fc2.visit(prefix + ".mlp.fc2", f);
  }
};

// ---------------------------------------------------------------------------
// Patch-level resolution changes
// ---------------------------------------------------------------------------

/// (H, W, ch) image -> (H/4 * W/4, C) tokens: linear projection of each 4x4
/// patch followed by layer normalization.
template <typename S>
struct PatchEmbed {
  static constexpr int64_t kPatch = 4;
  int64_t img_h = 0, img_w = 0, in_ch = 0, dim = 0;
  Linear<S> proj;
  LayerNormLayer<S> norm;
  IndexMap flatten_map;

  PatchEmbed() = default;
  PatchEmbed(int64_t img_h_, int64_t img_w_, int64_t in_ch_, int64_t dim_, Rng& rng)
      : img_h(img_h_), img_w(img_w_), in_ch(in_ch_), dim(dim_) {
    if (img_h_ % kPatch != 0 || img_w_ % kPatch != 0) {
      throw std::invalid_argument("PatchEmbed: image extents must be divisible by 4");
    }
    proj = Linear<S>(kPatch * kPatch * in_ch_, dim_, rng);
    norm = LayerNormLayer<S>(dim_);
    flatten_map = grid::patch_flatten_map(img_h_, img_w_, in_ch_, kPatch);
  }

  /// images: (B, H, W, ch).
  Var<S> operator()(const Var<S>& images) {
    const int64_t np = (img_h / kPatch) * (img_w / kPatch);
    const int64_t b = images.size() / (img_h * img_w * in_ch);
    Var<S> patches = gather_elems(images, flatten_map, img_h * img_w * in_ch,
                                  {b, np, kPatch * kPatch * in_ch});
    return norm(proj(patches));
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& f) {
    proj.visit(prefix + ".proj", f);
    norm.visit(prefix + ".norm", f);
  }
};

/// (h, w, C) -> (h/2, w/2, 2C): concat each 2x2 neighborhood, layer norm,
/// then a bias-free 4C -> 2C projection.
template <typename S>
struct PatchMerge {
  int64_t grid_h = 0, grid_w = 0, dim = 0;
  LayerNormLayer<S> norm;
  Linear<S> reduction;
  IndexMap merge_map;

  PatchMerge() = default;
  PatchMerge(int64_t grid_h_, int64_t grid_w_, int64_t dim_, Rng& rng)
      : grid_h(grid_h_), grid_w(grid_w_), dim(dim_) {
    if (grid_h_ % 2 != 0 || grid_w_ % 2 != 0) {
      throw std::invalid_argument("PatchMerge: odd grid " + std::to_string(grid_h_) + "x" +
                                  std::to_string(grid_w_));
    }
    norm = LayerNormLayer<S>(4 * dim_);
    reduction = Linear<S>(4 * dim_, 2 * dim_, rng, /*with_bias=*/false);
    merge_map = grid::merge_rows_map(grid_h_, grid_w_);
  }

  Var<S> operator()(const Var<S>& x) {
    const int64_t n = grid_h * grid_w;
    const int64_t b = x.size() / (n * dim);
    Var<S> g = gather_rows(x, merge_map, n, dim, {b, n / 4, 4 * dim});
    return reduction(norm(g));
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& f) {
    norm.visit(prefix + ".norm", f);
    reduction.visit(prefix + ".reduction", f);
  }
};

/// (h, w, C) -> (2h, 2w, C/2): bias-free C -> 2C expansion, then the channel
/// blocks are rearranged onto a 2x2 spatial neighborhood (exact shape inverse
/// of PatchMerge), then layer norm.
template <typename S>
struct PatchExpand {
  int64_t grid_h = 0, grid_w = 0, dim = 0;
  Linear<S> expand;
  LayerNormLayer<S> norm;
  IndexMap expand_map;

  PatchExpand() = default;
  PatchExpand(int64_t grid_h_, int64_t grid_w_, int64_t dim_, Rng& rng)
      : grid_h(grid_h_), grid_w(grid_w_), dim(dim_) {
    if (dim_ % 2 != 0) {
      throw std::invalid_argument("PatchExpand: odd channel count " + std::to_string(dim_));
    }
    expand = Linear<S>(dim_, 2 * dim_, rng, /*with_bias=*/false);
    norm = LayerNormLayer<S>(dim_ / 2);
    expand_map = grid::expand_elems_map(grid_h_, grid_w_, dim_ / 2);
  }

  Var<S> operator()(const Var<S>& x) {
    const int64_t n = grid_h * grid_w;
    const int64_t b = x.size() / (n * dim);
    Var<S> e = expand(x);  // (B, N, 2C)
    Var<S> r = gather_elems(e, expand_map, n * 2 * dim, {b, 4 * n, dim / 2});
    return norm(r);
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& f) {
    expand.visit(prefix + ".expand", f);
    norm.visit(prefix + ".norm", f);
  }
};

/// (H/4, W/4, C) -> (H, W, C_out): two chained 2x expand-rearrange steps and
/// a per-pixel linear head.
template <typename S>
struct FinalExpand {
  int64_t grid_h = 0, grid_w = 0, dim = 0, out_ch = 0;
  PatchExpand<S> up1, up2;
  Linear<S> head;

  FinalExpand() = default;
  FinalExpand(int64_t grid_h_, int64_t grid_w_, int64_t dim_, int64_t out_ch_, Rng& rng)
      : grid_h(grid_h_), grid_w(grid_w_), dim(dim_), out_ch(out_ch_) {
    if (dim_ % 4 != 0) {
      throw std::invalid_argument("FinalExpand: channels must be divisible by 4");
    }
    up1 = PatchExpand<S>(grid_h_, grid_w_, dim_, rng);
    up2 = PatchExpand<S>(2 * grid_h_, 2 * grid_w_, dim_ / 2, rng);
    head = Linear<S>(dim_ / 4, out_ch_, rng);
  }

  /// Returns (B, H*W, out_ch) pixel logits/values.
  Var<S> operator()(const Var<S>& x) { return head(up2(up1(x))); }

  void visit(const std::string& prefix, const ParamVisitor<S>& f) {
    up1.visit(prefix + ".up1", f);
    up2.visit(prefix + ".up2", f);
    head.visit(prefix + ".head", f);
  }
};

}  // namespace mtlswin
