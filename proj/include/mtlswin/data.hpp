#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtlswin/rng.hpp"

namespace mtlswin {

/// Synthetic head-CT-like generator config. Every image carries a bright
/// boundary ring ("skull") over a grainy background; positives contain an
/// elliptical blob with a darker interior core, negatives either no blob or a
/// uniform-intensity blob. One texture cue (ring thickness plus grain
/// amplitude) correlates with the label at rho_train in hospitals 1-4 and at
/// rho_shift in hospitals 5-11.
struct GenConfig {
  int64_t img_size = 64;
  int64_t n_train = 2000;
  int64_t n_val = 200;
  int64_t n_test_in = 179;
  int64_t n_test_shift = 179;
  double rho_train = 0.9;
  double rho_shift = 0.0;
  double pos_fraction = 0.5;
  double neg_blob_fraction = 0.5;
  int64_t slices_per_patient = 4;
  std::array<double, 11> hospital_brightness{};  // additive, defaults 0

  // Rendering knobs.
  double background = 0.08;
  double ring_radius_frac = 0.44;
  double ring_thick_strong = 3.0;
  double ring_thick_weak = 1.0;
  double ring_intensity = 0.95;
  double grain_strong = 0.10;
  double grain_weak = 0.03;
  double blob_intensity = 0.55;
  double core_intensity = 0.30;
  double core_scale = 0.6;       // core axes relative to blob axes
  double blob_axis_lo = 0.12;    // fraction of img_size
  double blob_axis_hi = 0.20;
  double center_jitter = 1.5;    // px, per slice
  double intensity_jitter = 0.03;

  uint64_t seed = 1234;

  void validate() const;
};

/// One slice. Images are quantized to the 8-bit grid (k/255) at generation so
/// that disk round-trips are bit-exact. Fields below the serialization line
/// are generator-side metadata and are not written to disk.
struct Sample {
  int64_t width = 0, height = 0;
  std::vector<float> image;   // H*W grayscale in [0,1]
  int label = 0;              // 1 = darker-core blob present
  bool has_mask = false;
  std::vector<uint8_t> mask;  // H*W, 1 inside the blob
  int hospital_id = 0;        // 1..11
  int64_t patient_id = 0;
  std::string name;           // file stem

  // --- not serialized ---
  int cue = -1;               // spurious texture bit
  bool has_blob = false;
  double blob_cx = 0.0, blob_cy = 0.0;
  double blob_ax = 0.0, blob_ay = 0.0;  // ellipse semi-axes (bounding, unrotated-frame)
};

struct SplitSpec {
  std::vector<int64_t> train, val, test_in, test_shift;
};

struct SyntheticDataset {
  std::vector<Sample> samples;
  SplitSpec splits;
  int64_t img_size = 0;
};

SyntheticDataset generate_dataset(const GenConfig& cfg);

/// Accuracy of the Bayes rule that reads only the texture cue, on a split
/// generated at confounder correlation rho with balanced classes.
inline double cue_only_accuracy(double rho) { return (1.0 + rho) / 2.0; }

/// Training augmentation. Op 1 (p=0.5): rot90 by k in {0..3}, then one flip
/// (vertical or horizontal). Op 2 (p=0.5): rotation by a uniform angle in
/// [-20, 20] degrees, bilinear for the image and nearest-neighbor for the
/// mask, reflect padding for both. Mask and image get identical transforms.
void augment_sample(std::vector<float>& image, std::vector<uint8_t>* mask, int64_t h, int64_t w,
                    Rng& rng);

// Geometric helpers (exposed for tests).
void rot90(std::vector<float>& img, int64_t n, int k);
void rot90(std::vector<uint8_t>& img, int64_t n, int k);
void flip_horizontal(std::vector<float>& img, int64_t h, int64_t w);
void flip_horizontal(std::vector<uint8_t>& img, int64_t h, int64_t w);
void flip_vertical(std::vector<float>& img, int64_t h, int64_t w);
void flip_vertical(std::vector<uint8_t>& img, int64_t h, int64_t w);
void rotate_bilinear(std::vector<float>& img, int64_t h, int64_t w, double degrees);
void rotate_nearest(std::vector<uint8_t>& img, int64_t h, int64_t w, double degrees);

// On-disk layout: index.csv (file, mask_file|none, label, hospital_id,
// patient_id), splits.csv (file, split), 8-bit binary PGM images and masks.
void save_dataset(const SyntheticDataset& ds, const std::string& dir);
SyntheticDataset load_dataset(const std::string& dir);

void write_pgm(const std::string& path, int64_t w, int64_t h, const std::vector<uint8_t>& bytes);
std::vector<uint8_t> read_pgm(const std::string& path, int64_t& w, int64_t& h);

}  // namespace mtlswin
