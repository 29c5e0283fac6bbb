#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtlswin/swin.hpp"

namespace mtlswin {

struct TaskSet {
  bool cls = false, seg = false, rec = false;

  int count() const { return (cls ? 1 : 0) + (seg ? 1 : 0) + (rec ? 1 : 0); }
  bool operator==(const TaskSet&) const = default;

  static TaskSet parse(const std::string& text) {
    TaskSet t;
    size_t pos = 0;
    while (pos < text.size()) {
      size_t next = text.find('+', pos);
      if (next == std::string::npos) next = text.size();
      const std::string part = text.substr(pos, next - pos);
      if (part == "cls") t.cls = true;
      else if (part == "seg") t.seg = true;
      else if (part == "rec") t.rec = true;
      else throw std::invalid_argument("unknown task '" + part + "' (want cls, seg, rec)");
      pos = next + 1;
    }
    if (t.count() == 0) throw std::invalid_argument("empty task set");
    return t;
  }

  std::string str() const {
    std::string s;
    auto app = [&s](const char* n) { s += (s.empty() ? "" : "+"); s += n; };
    if (cls) app("cls");
    if (seg) app("seg");
    if (rec) app("rec");
    return s;
  }
};

struct TaskWeights {
  double cls = 0.0, seg = 0.0, rec = 0.0;
  double ce = 0.4, dice = 0.6;
};

inline int64_t heads_for(int64_t channels) { return std::max<int64_t>(1, channels / 32); }

struct ModelConfig {
  std::string arch = "mtl";  // mtl | joint
  std::string variant = "default";
  std::vector<int64_t> depths = {2, 2, 2, 2};
  int64_t channels = 96;
  int64_t window = 7;
  int64_t img_size = 224;
  int64_t in_channels = 1;
  int64_t num_classes = 2;
  int64_t seg_classes = 2;
  TaskSet tasks{.cls = true};
  TaskWeights weights;

  void apply_variant() {
    if (variant == "tiny") {
      depths = {2, 2, 6, 2};
      channels = 96;
    } else if (variant == "base") {
      depths = {2, 2, 18, 2};
      channels = 128;
    } else if (variant != "default") {
      throw std::invalid_argument("unknown variant '" + variant + "'");
    }
  }

  /// Loss weights from the training recipe, by active task combination.
  static TaskWeights default_weights(const TaskSet& t) {
    TaskWeights w;
    if (t.cls && t.seg && t.rec) {
      w.cls = 0.3; w.seg = 0.4; w.rec = 0.4;
    } else if (t.cls && t.seg) {
      w.cls = 0.4; w.seg = 0.6;
    } else if (t.cls && t.rec) {
      w.cls = 0.4; w.rec = 0.6;
    } else if (t.cls) {
      w.cls = 1.0;
    } else if (t.seg) {
      w.seg = 1.0;
    }
    return w;
  }

  int stage_count() const { return static_cast<int>(depths.size()); }
  int64_t base_grid() const { return img_size / 4; }
  int64_t final_dim() const { return channels << (stage_count() - 1); }
  int64_t final_grid() const { return base_grid() >> (stage_count() - 1); }

  void validate() const {
    if (arch != "mtl" && arch != "joint") throw std::invalid_argument("arch must be mtl or joint");
    if (depths.size() < 2) throw std::invalid_argument("need at least 2 stages");
    for (int64_t d : depths) {
      if (d < 1) throw std::invalid_argument("stage depth must be >= 1");
    }
    if (channels % 4 != 0) throw std::invalid_argument("channel width must be divisible by 4");
    if (tasks.count() == 0) throw std::invalid_argument("no tasks configured");
    // Classification is the main task; a pure-seg model is permitted only as
    // the Swin-Unet phase of joint training.
    if (!tasks.cls && !(tasks == TaskSet{.seg = true})) {
      throw std::invalid_argument("cls must be among the tasks (only tasks=seg is exempt)");
    }
    if (arch == "joint" && !(tasks == TaskSet{.cls = true})) {
      throw std::invalid_argument("joint arch trains classification only");
    }
    const int64_t div = 4 << (stage_count() - 1);
    if (img_size % div != 0 || final_grid() < 1) {
      throw std::invalid_argument("img_size " + std::to_string(img_size) + " not divisible by " +
                                  std::to_string(div));
    }
    if (window < 1) throw std::invalid_argument("window must be >= 1");
    auto need = [](bool active, double w, const char* name) {
      if (active && !(w > 0)) throw std::invalid_argument(std::string("missing/invalid weight for ") + name);
      if (!active && w != 0) throw std::invalid_argument(std::string("weight supplied for inactive task ") + name);
    };
    need(tasks.cls, weights.cls, "cls");
    need(tasks.seg, weights.seg, "seg");
    need(tasks.rec, weights.rec, "rec");
    if (!(weights.ce > 0) || !(weights.dice > 0)) {
      throw std::invalid_argument("ce/dice weights must be positive");
    }
    if (num_classes != 2 || seg_classes != 2) {
      throw std::invalid_argument("binary classification/segmentation only");
    }
  }
};

// ---------------------------------------------------------------------------
// Hierarchical encoder: patch embed, stages of Swin blocks with patch merges
// between, final layer norm.
// ---------------------------------------------------------------------------

template <typename S>
struct SwinEncoder {
  int64_t img_size = 0, in_ch = 0, c0 = 0, window = 0;
  std::vector<int64_t> depths;
  PatchEmbed<S> embed;
  std::vector<std::vector<SwinBlock<S>>> stages;
  std::vector<PatchMerge<S>> merges;
  LayerNormLayer<S> norm;

  SwinEncoder() = default;
  SwinEncoder(int64_t img, int64_t in_ch_, int64_t c0_, std::vector<int64_t> depths_, int64_t window_,
              Rng& rng)
      : img_size(img), in_ch(in_ch_), c0(c0_), window(window_), depths(std::move(depths_)) {
    embed = PatchEmbed<S>(img, img, in_ch_, c0_, rng);
    const int n = static_cast<int>(depths.size());
    int64_t grid = img / 4;
    int64_t dim = c0_;
    for (int i = 0; i < n; ++i) {
      std::vector<SwinBlock<S>> blocks;
      for (int64_t b = 0; b < depths[static_cast<size_t>(i)]; ++b) {
        blocks.emplace_back(dim, heads_for(dim), grid, grid, window_, b % 2 == 1, rng);
      }
      stages.push_back(std::move(blocks));
      if (i < n - 1) {
        merges.emplace_back(grid, grid, dim, rng);
        grid /= 2;
        dim *= 2;
      }
    }
    norm = LayerNormLayer<S>(dim);
  }

  int64_t stage_dim(int i) const { return c0 << i; }
  int64_t stage_grid(int i) const { return (img_size / 4) >> i; }
  int64_t final_dim() const { return stage_dim(static_cast<int>(depths.size()) - 1); }
  int64_t final_grid() const { return stage_grid(static_cast<int>(depths.size()) - 1); }

  struct Output {
    std::vector<Var<S>> stage_feats;  // per-stage block outputs (pre-merge)
    Var<S> final_tokens;              // last stage after the final layer norm
  };

  Output operator()(const Var<S>& images) {
    Output out;
    Var<S> x = embed(images);
    const int n = static_cast<int>(depths.size());
    for (int i = 0; i < n; ++i) {
      for (auto& blk : stages[static_cast<size_t>(i)]) x = blk(x);
      out.stage_feats.push_back(x);
      if (i < n - 1) x = merges[static_cast<size_t>(i)](x);
    }
    out.final_tokens = norm(x);
    return out;
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& f) {
    embed.visit(prefix + ".embed", f);
    for (size_t i = 0; i < stages.size(); ++i) {
      for (size_t b = 0; b < stages[i].size(); ++b) {
        stages[i][b].visit(prefix + ".stages." + std::to_string(i) + ".blocks." + std::to_string(b), f);
      }
      if (i < merges.size()) merges[i].visit(prefix + ".merges." + std::to_string(i), f);
    }
    norm.visit(prefix + ".norm", f);
  }
};

// ---------------------------------------------------------------------------
// Symmetric decoder: patch expands, skip fusion (concat + 2C->C projection),
// Swin blocks, then the 4x final expansion and per-pixel head.
// ---------------------------------------------------------------------------

template <typename S>
struct SwinDecoder {
  struct DStage {
    PatchExpand<S> up;
    Linear<S> fuse;
    std::vector<SwinBlock<S>> blocks;
  };
  std::vector<DStage> dstages;  // ordered bottleneck -> full resolution
  FinalExpand<S> final_up;
  int64_t out_ch = 0;

  SwinDecoder() = default;
  SwinDecoder(int64_t img, int64_t c0, const std::vector<int64_t>& depths, int64_t window,
              int64_t out_ch_, Rng& rng)
      : out_ch(out_ch_) {
    const int n = static_cast<int>(depths.size());
    for (int i = n - 2; i >= 0; --i) {
      const int64_t dim = c0 << i;          // stage width at this level
      const int64_t grid = (img / 4) >> i;  // grid after the expand
      DStage ds;
      ds.up = PatchExpand<S>(grid / 2, grid / 2, dim * 2, rng);
      ds.fuse = Linear<S>(2 * dim, dim, rng);
      for (int64_t b = 0; b < depths[static_cast<size_t>(i)]; ++b) {
        ds.blocks.emplace_back(dim, heads_for(dim), grid, grid, window, b % 2 == 1, rng);
      }
      dstages.push_back(std::move(ds));
    }
    final_up = FinalExpand<S>(img / 4, img / 4, c0, out_ch_, rng);
  }

  /// skips[i] is encoder stage i output (pre-merge); returns (B, H*W, out_ch).
  Var<S> operator()(const Var<S>& bottleneck, const std::vector<Var<S>>& skips) {
    Var<S> x = bottleneck;
    const int n = static_cast<int>(dstages.size());
    for (int k = 0; k < n; ++k) {
      const int level = n - 1 - k;  // encoder stage index at equal resolution
      DStage& ds = dstages[static_cast<size_t>(k)];
      x = ds.up(x);
      x = ds.fuse(concat_cols(x, skips[static_cast<size_t>(level)]));
      for (auto& blk : ds.blocks) x = blk(x);
    }
    return final_up(x);
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& f) {
    for (size_t k = 0; k < dstages.size(); ++k) {
      const std::string p = prefix + ".stages." + std::to_string(k);
      dstages[k].up.visit(p + ".up", f);
      dstages[k].fuse.visit(p + ".fuse", f);
      for (size_t b = 0; b < dstages[k].blocks.size(); ++b) {
        dstages[k].blocks[b].visit(p + ".blocks." + std::to_string(b), f);
      }
    }
    final_up.visit(prefix + ".final", f);
  }
};

template <typename S>
struct MtlOutputs {
  Var<S> cls_logits;  // (B, 2); undefined when cls is not configured
  Var<S> seg_logits;  // (B, H*W, 2); undefined when seg is not configured
  Var<S> rec_output;  // (B, H*W, ch); undefined when rec is not configured
  typename SwinEncoder<S>::Output enc;
};

/// Shared-encoder multi-task model: one hierarchical encoder, one symmetric
/// decoder per pixel task (independent parameters), GAP + linear for
/// classification.
template <typename S>
struct MtlSwinUnet {
  ModelConfig cfg;
  SwinEncoder<S> encoder;
  std::optional<SwinDecoder<S>> seg_decoder;
  std::optional<SwinDecoder<S>> rec_decoder;
  std::optional<Linear<S>> cls_head;

  MtlSwinUnet(const ModelConfig& config, uint64_t seed) : cfg(config) {
    cfg.validate();
    if (cfg.arch != "mtl") throw std::invalid_argument("MtlSwinUnet: arch must be mtl");
    Rng rng(seed);
    encoder = SwinEncoder<S>(cfg.img_size, cfg.in_channels, cfg.channels, cfg.depths, cfg.window, rng);
    if (cfg.tasks.seg) {
      seg_decoder.emplace(cfg.img_size, cfg.channels, cfg.depths, cfg.window, cfg.seg_classes, rng);
    }
    if (cfg.tasks.rec) {
      rec_decoder.emplace(cfg.img_size, cfg.channels, cfg.depths, cfg.window, cfg.in_channels, rng);
    }
    if (cfg.tasks.cls) cls_head.emplace(encoder.final_dim(), cfg.num_classes, rng);
  }

  /// images: (B, H, W, ch).
  MtlOutputs<S> operator()(const Tensor<S>& images) {
    check_images(images);
    MtlOutputs<S> out;
    Var<S> in = constant(images);
    out.enc = encoder(in);
    if (cls_head) out.cls_logits = (*cls_head)(mean_tokens(out.enc.final_tokens));
    if (seg_decoder) out.seg_logits = (*seg_decoder)(out.enc.final_tokens, out.enc.stage_feats);
    if (rec_decoder) out.rec_output = (*rec_decoder)(out.enc.final_tokens, out.enc.stage_feats);
    return out;
  }

  void check_images(const Tensor<S>& images) const {
    if (images.rank() != 4 || images.dim(1) != cfg.img_size || images.dim(2) != cfg.img_size ||
        images.dim(3) != cfg.in_channels) {
      throw std::invalid_argument("expected images (B," + std::to_string(cfg.img_size) + "," +
                                  std::to_string(cfg.img_size) + "," + std::to_string(cfg.in_channels) +
                                  "), got " + shape_str(images.shape()));
    }
  }

  void visit_params(const ParamVisitor<S>& f) {
    encoder.visit("encoder", f);
    if (seg_decoder) seg_decoder->visit("seg_decoder", f);
    if (rec_decoder) rec_decoder->visit("rec_decoder", f);
    if (cls_head) cls_head->visit("cls_head", f);
  }
};

/// Two-encoder classifier: a frozen encoder carrying segmentation-trained
/// representations next to a trainable one; final tokens are concatenated
/// along channels and fed to a widened GAP + linear head.
template <typename S>
struct JointSwinTransformer {
  ModelConfig cfg;
  SwinEncoder<S> frozen_encoder;
  SwinEncoder<S> encoder;
  Linear<S> head;

  JointSwinTransformer(const ModelConfig& config, uint64_t seed) : cfg(config) {
    cfg.validate();
    if (cfg.arch != "joint") throw std::invalid_argument("JointSwinTransformer: arch must be joint");
    Rng rng(seed);
    frozen_encoder = SwinEncoder<S>(cfg.img_size, cfg.in_channels, cfg.channels, cfg.depths, cfg.window, rng);
    encoder = SwinEncoder<S>(cfg.img_size, cfg.in_channels, cfg.channels, cfg.depths, cfg.window, rng);
    head = Linear<S>(2 * encoder.final_dim(), cfg.num_classes, rng);
    set_frozen(true);
  }

  void set_frozen(bool frozen) {
    frozen_encoder.visit("frozen_encoder", [frozen](const std::string&, Parameter<S>& p) {
      p.trainable = !frozen;
    });
  }

  Var<S> operator()(const Tensor<S>& images) {
    Var<S> in = constant(images);
    Var<S> f = frozen_encoder(in).final_tokens;   // (B, N, C)
    Var<S> t = encoder(in).final_tokens;          // (B, N, C)
    Var<S> both = concat_cols(f, t);              // (B, N, 2C)
    return head(mean_tokens(both));
  }

  void visit_params(const ParamVisitor<S>& f) {
    frozen_encoder.visit("frozen_encoder", f);
    encoder.visit("encoder", f);
    head.visit("head", f);
  }
};

template <typename S, typename Model>
std::vector<std::pair<std::string, Parameter<S>*>> collect_params(Model& model) {
  std::vector<std::pair<std::string, Parameter<S>*>> out;
  model.visit_params([&out](const std::string& name, Parameter<S>& p) { out.emplace_back(name, &p); });
  return out;
}

template <typename S, typename Model>
int64_t parameter_count(Model& model) {
  int64_t n = 0;
  model.visit_params([&n](const std::string&, Parameter<S>& p) { n += p.size(); });
  return n;
}

}  // namespace mtlswin
