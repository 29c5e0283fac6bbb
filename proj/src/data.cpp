#include "mtlswin/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mtlswin {

namespace fs = std::filesystem;

void GenConfig::validate() const {
  if (img_size < 32 || img_size % 4 != 0) {
    throw std::invalid_argument("gen: img_size must be >= 32 and divisible by 4");
  }
  if (rho_train < 0.0 || rho_train > 1.0 || rho_shift < 0.0 || rho_shift > 1.0) {
    throw std::invalid_argument("gen: rho must lie in [0, 1]");
  }
  if (pos_fraction <= 0.0 || pos_fraction >= 1.0) {
    throw std::invalid_argument("gen: pos_fraction must lie in (0, 1)");
  }
  if (neg_blob_fraction < 0.0 || neg_blob_fraction > 1.0) {
    throw std::invalid_argument("gen: neg_blob_fraction must lie in [0, 1]");
  }
  if (n_train < 8 || n_val < 2 || n_test_in < 2 || n_test_shift < 2) {
    throw std::invalid_argument("gen: split counts too small");
  }
  if (slices_per_patient < 1) throw std::invalid_argument("gen: slices_per_patient must be >= 1");
  const auto pos = [this](int64_t n) { return static_cast<int64_t>(std::llround(pos_fraction * static_cast<double>(n))); };
  for (int64_t n : {n_val, n_test_in, n_test_shift}) {
    if (pos(n) < 1 || pos(n) >= n) {
      throw std::invalid_argument("gen: counts too small to satisfy matched positive ratios");
    }
  }
  if (blob_axis_lo <= 0 || blob_axis_hi < blob_axis_lo || blob_axis_hi > 0.3) {
    throw std::invalid_argument("gen: blob axis range invalid");
  }
}

namespace {

struct PatientPlan {
  int hospital = 0;
  int64_t id = 0;
  int label = 0;
  int cue = 0;
  bool has_blob = false;
  double cx = 0, cy = 0, ax = 0, ay = 0, angle = 0;
  int64_t slices = 0;
};

Sample render_slice(const GenConfig& cfg, const PatientPlan& pat, Rng& rng) {
  const int64_t n = cfg.img_size;
  Sample s;
  s.width = n;
  s.height = n;
  s.label = pat.label;
  s.hospital_id = pat.hospital;
  s.patient_id = pat.id;
  s.cue = pat.cue;
  s.has_blob = pat.has_blob;
  s.image.assign(static_cast<size_t>(n * n), 0.0f);

  // Per-slice draws, fixed order: jitter, intensity jitter, grain field.
  const double jx = rng.uniform(-cfg.center_jitter, cfg.center_jitter);
  const double jy = rng.uniform(-cfg.center_jitter, cfg.center_jitter);
  const double ij = rng.uniform(-cfg.intensity_jitter, cfg.intensity_jitter);

  const double base = cfg.background + cfg.hospital_brightness[static_cast<size_t>(pat.hospital - 1)];
  const double grain = pat.cue ? cfg.grain_strong : cfg.grain_weak;
  const double mid = (static_cast<double>(n) - 1.0) / 2.0;
  const double ring_r = cfg.ring_radius_frac * static_cast<double>(n);
  const double ring_t = (pat.cue ? cfg.ring_thick_strong : cfg.ring_thick_weak) / 2.0;

  for (int64_t y = 0; y < n; ++y) {
    for (int64_t x = 0; x < n; ++x) {
      double v = base + rng.uniform(-grain, grain);
      const double d = std::hypot(static_cast<double>(x) - mid, static_cast<double>(y) - mid);
      if (std::abs(d - ring_r) <= ring_t) v = cfg.ring_intensity;
      s.image[static_cast<size_t>(y * n + x)] = static_cast<float>(v);
    }
  }

  if (pat.has_blob) {
    const double cx = pat.cx + jx, cy = pat.cy + jy;
    s.blob_cx = cx;
    s.blob_cy = cy;
    const double ca = std::cos(pat.angle), sa = std::sin(pat.angle);
    // Bounding semi-axes in the image frame, for bbox-style consumers.
    s.blob_ax = std::hypot(pat.ax * ca, pat.ay * sa);
    s.blob_ay = std::hypot(pat.ax * sa, pat.ay * ca);
    s.mask.assign(static_cast<size_t>(n * n), 0);
    const double rim = cfg.blob_intensity + ij;
    const double core = cfg.core_intensity + ij;
    for (int64_t y = 0; y < n; ++y) {
      for (int64_t x = 0; x < n; ++x) {
        const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
        const double u = (dx * ca + dy * sa) / pat.ax;
        const double w = (-dx * sa + dy * ca) / pat.ay;
        const double r2 = u * u + w * w;
        if (r2 <= 1.0) {
          s.mask[static_cast<size_t>(y * n + x)] = 1;
          const bool in_core = pat.label == 1 && r2 <= cfg.core_scale * cfg.core_scale;
          s.image[static_cast<size_t>(y * n + x)] = static_cast<float>(in_core ? core : rim);
        }
      }
    }
    s.has_mask = pat.hospital <= 4;
    if (!s.has_mask) s.mask.clear();
  }

  // Clamp and snap onto the 8-bit grid so disk round-trips are lossless.
  for (float& v : s.image) {
    const double c = std::min(1.0, std::max(0.0, static_cast<double>(v)));
    v = static_cast<float>(std::lround(c * 255.0) / 255.0);
  }
  return s;
}

/// Plans one hospital-group pool: exact positive count, whole-label patients
/// (a patient's slices never mix labels), pose and cue drawn per patient.
std::vector<PatientPlan> plan_pool(const GenConfig& cfg, int hospital, int64_t count, int64_t n_pos,
                                   double rho, int64_t& next_patient, Rng& rng) {
  std::vector<PatientPlan> plans;
  const double agree = (1.0 + rho) / 2.0;
  for (int label : {1, 0}) {
    int64_t remaining = label == 1 ? n_pos : count - n_pos;
    while (remaining > 0) {
      PatientPlan p;
      p.hospital = hospital;
      p.id = next_patient++;
      p.label = label;
      p.slices = std::min<int64_t>(cfg.slices_per_patient, remaining);
      p.cue = rng.bernoulli(agree) ? label : 1 - label;
      p.has_blob = label == 1 || rng.bernoulli(cfg.neg_blob_fraction);
      const double sz = static_cast<double>(cfg.img_size);
      p.ax = rng.uniform(cfg.blob_axis_lo, cfg.blob_axis_hi) * sz;
      p.ay = rng.uniform(cfg.blob_axis_lo, cfg.blob_axis_hi) * sz;
      p.angle = rng.uniform(0.0, M_PI);
      const double ring_r = cfg.ring_radius_frac * sz;
      const double max_axis = std::max(p.ax, p.ay);
      const double reach = std::max(1.0, ring_r - max_axis - cfg.ring_thick_strong - cfg.center_jitter - 1.0);
      // Uniform in a disc: rejection-free via sqrt radius.
      const double rr = reach * std::sqrt(rng.uniform());
      const double th = rng.uniform(0.0, 2.0 * M_PI);
      const double mid = (sz - 1.0) / 2.0;
      p.cx = mid + rr * std::cos(th);
      p.cy = mid + rr * std::sin(th);
      plans.push_back(p);
      remaining -= p.slices;
    }
  }
  return plans;
}

int64_t round_pos(double frac, int64_t n) {
  return static_cast<int64_t>(std::llround(frac * static_cast<double>(n)));
}

}  // namespace

SyntheticDataset generate_dataset(const GenConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SyntheticDataset ds;
  ds.img_size = cfg.img_size;
  int64_t next_patient = 1;

  // Hospital 1 is a shared pool: test_in and val are carved out of it and the
  // remainder joins train, so train and test_in may share patients (slices of
  // one patient landing on both sides; that is the no-shift condition).
  const int64_t h1_train = cfg.n_train / 4;
  const int64_t h1_total = cfg.n_val + cfg.n_test_in + h1_train;
  const int64_t h1_pos = round_pos(cfg.pos_fraction, h1_total);

  const int64_t pos_test_in = round_pos(cfg.pos_fraction, cfg.n_test_in);
  const int64_t pos_val = round_pos(cfg.pos_fraction, cfg.n_val);
  if (h1_pos < pos_test_in + pos_val || (h1_total - h1_pos) < (cfg.n_test_in - pos_test_in) + (cfg.n_val - pos_val)) {
    throw std::invalid_argument("gen: counts too small to satisfy matched positive ratios");
  }

  auto emit_pool = [&](int hospital, int64_t count, int64_t n_pos, double rho) {
    std::vector<int64_t> idx;
    auto plans = plan_pool(cfg, hospital, count, n_pos, rho, next_patient, rng);
    for (const auto& p : plans) {
      for (int64_t s = 0; s < p.slices; ++s) {
        idx.push_back(static_cast<int64_t>(ds.samples.size()));
        ds.samples.push_back(render_slice(cfg, p, rng));
      }
    }
    rng.shuffle(idx.begin(), idx.end());
    return idx;
  };

  // Hospital 1 pool, then carve test_in and val at exact positive ratios.
  std::vector<int64_t> h1 = emit_pool(1, h1_total, h1_pos, cfg.rho_train);
  auto carve = [&](std::vector<int64_t>& pool, int64_t n_total, int64_t n_pos) {
    std::vector<int64_t> out;
    int64_t want_pos = n_pos, want_neg = n_total - n_pos;
    std::vector<int64_t> rest;
    for (int64_t i : pool) {
      int64_t& want = ds.samples[static_cast<size_t>(i)].label == 1 ? want_pos : want_neg;
      if (want > 0) {
        out.push_back(i);
        --want;
      } else {
        rest.push_back(i);
      }
    }
    if (want_pos > 0 || want_neg > 0) {
      throw std::invalid_argument("gen: counts too small to satisfy matched positive ratios");
    }
    pool = std::move(rest);
    return out;
  };
  ds.splits.test_in = carve(h1, cfg.n_test_in, pos_test_in);
  ds.splits.val = carve(h1, cfg.n_val, pos_val);
  ds.splits.train = h1;  // remaining hospital-1 slices

  // Hospitals 2-4: the rest of train, split as evenly as possible.
  const int64_t rest_train = cfg.n_train - h1_train;
  for (int h = 2; h <= 4; ++h) {
    const int64_t count = rest_train / 3 + (h - 2 < rest_train % 3 ? 1 : 0);
    const int64_t n_pos = round_pos(cfg.pos_fraction, count);
    auto idx = emit_pool(h, count, n_pos, cfg.rho_train);
    ds.splits.train.insert(ds.splits.train.end(), idx.begin(), idx.end());
  }
  rng.shuffle(ds.splits.train.begin(), ds.splits.train.end());

  // Hospitals 5-11: test_shift with the positive ratio matched to test_in.
  const int64_t pos_shift = round_pos(static_cast<double>(pos_test_in) / static_cast<double>(cfg.n_test_in),
                                      cfg.n_test_shift);
  int64_t remaining = cfg.n_test_shift, remaining_pos = pos_shift;
  for (int h = 5; h <= 11; ++h) {
    const int hs = h - 5;
    int64_t count = cfg.n_test_shift / 7 + (hs < cfg.n_test_shift % 7 ? 1 : 0);
    int64_t n_pos = std::min(remaining_pos, round_pos(cfg.pos_fraction, count));
    if (h == 11) n_pos = remaining_pos;
    if (n_pos > count) throw std::invalid_argument("gen: counts too small to satisfy matched positive ratios");
    auto idx = emit_pool(h, count, n_pos, cfg.rho_shift);
    ds.splits.test_shift.insert(ds.splits.test_shift.end(), idx.begin(), idx.end());
    remaining -= count;
    remaining_pos -= n_pos;
  }
  rng.shuffle(ds.splits.test_shift.begin(), ds.splits.test_shift.end());

  char buf[32];
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "s%05zu", i);
    ds.samples[i].name = buf;
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void rot90_impl(std::vector<T>& img, int64_t n, int k) {
  k = ((k % 4) + 4) % 4;
  if (k == 0) return;
  std::vector<T> out(img.size());
  for (int64_t y = 0; y < n; ++y) {
    for (int64_t x = 0; x < n; ++x) {
      int64_t sy = 0, sx = 0;
      switch (k) {  // out(y,x) = in(sy,sx), counterclockwise quarter turns
        case 1: sy = x; sx = n - 1 - y; break;
        case 2: sy = n - 1 - y; sx = n - 1 - x; break;
        default: sy = n - 1 - x; sx = y; break;
      }
      out[static_cast<size_t>(y * n + x)] = img[static_cast<size_t>(sy * n + sx)];
    }
  }
  img = std::move(out);
}

template <typename T>
void flip_h_impl(std::vector<T>& img, int64_t h, int64_t w) {
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w / 2; ++x) {
      std::swap(img[static_cast<size_t>(y * w + x)], img[static_cast<size_t>(y * w + (w - 1 - x))]);
    }
  }
}

template <typename T>
void flip_v_impl(std::vector<T>& img, int64_t h, int64_t w) {
  for (int64_t y = 0; y < h / 2; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      std::swap(img[static_cast<size_t>(y * w + x)], img[static_cast<size_t>((h - 1 - y) * w + x)]);
    }
  }
}

int64_t reflect_index(int64_t i, int64_t n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

}  // namespace

void rot90(std::vector<float>& img, int64_t n, int k) { rot90_impl(img, n, k); }
void rot90(std::vector<uint8_t>& img, int64_t n, int k) { rot90_impl(img, n, k); }
void flip_horizontal(std::vector<float>& img, int64_t h, int64_t w) { flip_h_impl(img, h, w); }
void flip_horizontal(std::vector<uint8_t>& img, int64_t h, int64_t w) { flip_h_impl(img, h, w); }
void flip_vertical(std::vector<float>& img, int64_t h, int64_t w) { flip_v_impl(img, h, w); }
void flip_vertical(std::vector<uint8_t>& img, int64_t h, int64_t w) { flip_v_impl(img, h, w); }

void rotate_bilinear(std::vector<float>& img, int64_t h, int64_t w, double degrees) {
  const double th = degrees * M_PI / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  std::vector<float> out(img.size());
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      // Inverse map: rotate the output coordinate by -theta.
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double sx = cx + c * dx + s * dy;
      const double sy = cy - s * dx + c * dy;
      const int64_t x0 = static_cast<int64_t>(std::floor(sx));
      const int64_t y0 = static_cast<int64_t>(std::floor(sy));
      const double fx = sx - static_cast<double>(x0);
      const double fy = sy - static_cast<double>(y0);
      auto px = [&](int64_t yy, int64_t xx) {
        return static_cast<double>(
            img[static_cast<size_t>(reflect_index(yy, h) * w + reflect_index(xx, w))]);
      };
      const double v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                       fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
      out[static_cast<size_t>(y * w + x)] = static_cast<float>(v);
    }
  }
  img = std::move(out);
}

void rotate_nearest(std::vector<uint8_t>& img, int64_t h, int64_t w, double degrees) {
  const double th = degrees * M_PI / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  std::vector<uint8_t> out(img.size());
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const int64_t sx = reflect_index(static_cast<int64_t>(std::lround(cx + c * dx + s * dy)), w);
      const int64_t sy = reflect_index(static_cast<int64_t>(std::lround(cy - s * dx + c * dy)), h);
      out[static_cast<size_t>(y * w + x)] = img[static_cast<size_t>(sy * w + sx)];
    }
  }
  img = std::move(out);
}

void augment_sample(std::vector<float>& image, std::vector<uint8_t>* mask, int64_t h, int64_t w,
                    Rng& rng) {
  if (rng.bernoulli(0.5)) {
    if (h != w) throw std::invalid_argument("augment: rot90 needs square images");
    const int k = static_cast<int>(rng.randint(4));
    const bool vertical = rng.randint(2) == 0;
    rot90(image, w, k);
    if (mask) rot90(*mask, w, k);
    if (vertical) {
      flip_vertical(image, h, w);
      if (mask) flip_vertical(*mask, h, w);
    } else {
      flip_horizontal(image, h, w);
      if (mask) flip_horizontal(*mask, h, w);
    }
  }
  if (rng.bernoulli(0.5)) {
    const double deg = rng.uniform(-20.0, 20.0);
    rotate_bilinear(image, h, w, deg);
    if (mask) rotate_nearest(*mask, h, w, deg);
  }
}

// ---------------------------------------------------------------------------
// Disk formats
// ---------------------------------------------------------------------------

void write_pgm(const std::string& path, int64_t w, int64_t h, const std::vector<uint8_t>& bytes) {
  if (static_cast<int64_t>(bytes.size()) != w * h) throw std::invalid_argument("pgm: byte count mismatch");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("pgm: cannot write " + path);
  f << "P5\n" << w << " " << h << "\n255\n";
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("pgm: short write to " + path);
}

std::vector<uint8_t> read_pgm(const std::string& path, int64_t& w, int64_t& h) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("pgm: cannot open " + path);
  std::string magic;
  int64_t maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 255 || w <= 0 || h <= 0) {
    throw std::runtime_error("pgm: unsupported format in " + path);
  }
  f.get();  // single whitespace after maxval
  std::vector<uint8_t> bytes(static_cast<size_t>(w * h));
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (f.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw std::runtime_error("pgm: truncated data in " + path);
  }
  return bytes;
}

namespace {

std::vector<uint8_t> quantize(const std::vector<float>& img) {
  std::vector<uint8_t> out(img.size());
  for (size_t i = 0; i < img.size(); ++i) {
    const double c = std::min(1.0, std::max(0.0, static_cast<double>(img[i])));
    out[i] = static_cast<uint8_t>(std::lround(c * 255.0));
  }
  return out;
}

const char* split_name(int which) {
  switch (which) {
    case 0: return "train";
    case 1: return "val";
    case 2: return "test_in";
    default: return "test_shift";
  }
}

}  // namespace

void save_dataset(const SyntheticDataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream index(dir + "/index.csv", std::ios::trunc);
  if (!index) throw std::runtime_error("dataset: cannot write " + dir + "/index.csv");
  index << "file,mask_file,label,hospital_id,patient_id\n";
  for (const auto& s : ds.samples) {
    const std::string img_file = s.name + ".pgm";
    std::string mask_file = "none";
    write_pgm(dir + "/" + img_file, s.width, s.height, quantize(s.image));
    if (s.has_mask) {
      mask_file = s.name + "_mask.pgm";
      std::vector<uint8_t> m(s.mask.size());
      for (size_t i = 0; i < m.size(); ++i) m[i] = s.mask[i] ? 255 : 0;
      write_pgm(dir + "/" + mask_file, s.width, s.height, m);
    }
    index << img_file << "," << mask_file << "," << s.label << "," << s.hospital_id << ","
          << s.patient_id << "\n";
  }
  std::ofstream splits(dir + "/splits.csv", std::ios::trunc);
  splits << "file,split\n";
  const std::vector<int64_t>* lists[4] = {&ds.splits.train, &ds.splits.val, &ds.splits.test_in,
                                          &ds.splits.test_shift};
  for (int which = 0; which < 4; ++which) {
    for (int64_t i : *lists[which]) {
      splits << ds.samples[static_cast<size_t>(i)].name << ".pgm," << split_name(which) << "\n";
    }
  }
}

SyntheticDataset load_dataset(const std::string& dir) {
  std::ifstream index(dir + "/index.csv");
  if (!index) throw std::runtime_error("dataset: cannot open " + dir + "/index.csv");
  SyntheticDataset ds;
  std::string line;
  std::getline(index, line);  // header
  std::map<std::string, int64_t> by_file;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string img_file, mask_file, label_s, hosp_s, pat_s;
    if (!std::getline(ss, img_file, ',') || !std::getline(ss, mask_file, ',') ||
        !std::getline(ss, label_s, ',') || !std::getline(ss, hosp_s, ',') || !std::getline(ss, pat_s)) {
      throw std::runtime_error("dataset: malformed index row: " + line);
    }
    Sample s;
    s.label = std::stoi(label_s);
    s.hospital_id = std::stoi(hosp_s);
    s.patient_id = std::stoll(pat_s);
    if (s.label != 0 && s.label != 1) throw std::runtime_error("dataset: label out of range: " + line);
    if (s.hospital_id < 1 || s.hospital_id > 11) {
      throw std::runtime_error("dataset: hospital_id out of range: " + line);
    }
    int64_t w = 0, h = 0;
    std::vector<uint8_t> bytes = read_pgm(dir + "/" + img_file, w, h);
    s.width = w;
    s.height = h;
    s.image.resize(bytes.size());
    for (size_t i = 0; i < bytes.size(); ++i) s.image[i] = static_cast<float>(bytes[i]) / 255.0f;
    if (mask_file != "none") {
      int64_t mw = 0, mh = 0;
      std::vector<uint8_t> mb = read_pgm(dir + "/" + mask_file, mw, mh);
      if (mw != w || mh != h) throw std::runtime_error("dataset: image/mask size mismatch for " + img_file);
      s.has_mask = true;
      s.mask.resize(mb.size());
      for (size_t i = 0; i < mb.size(); ++i) s.mask[i] = mb[i] ? 1 : 0;
    }
    s.name = img_file.substr(0, img_file.size() - 4);
    by_file[img_file] = static_cast<int64_t>(ds.samples.size());
    ds.samples.push_back(std::move(s));
  }
  if (!ds.samples.empty()) ds.img_size = ds.samples[0].width;

  std::ifstream splits(dir + "/splits.csv");
  if (!splits) throw std::runtime_error("dataset: cannot open " + dir + "/splits.csv");
  std::getline(splits, line);  // header
  while (std::getline(splits, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string file, which;
    if (!std::getline(ss, file, ',') || !std::getline(ss, which)) {
      throw std::runtime_error("dataset: malformed split row: " + line);
    }
    auto it = by_file.find(file);
    if (it == by_file.end()) throw std::runtime_error("dataset: split references unknown file " + file);
    if (which == "train") ds.splits.train.push_back(it->second);
    else if (which == "val") ds.splits.val.push_back(it->second);
    else if (which == "test_in") ds.splits.test_in.push_back(it->second);
    else if (which == "test_shift") ds.splits.test_shift.push_back(it->second);
    else throw std::runtime_error("dataset: unknown split '" + which + "'");
  }
  return ds;
}

}  // namespace mtlswin
