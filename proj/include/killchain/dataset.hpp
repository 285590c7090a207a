#pragma once

#include <optional>
#include <string>
#include <vector>

#include "killchain/types.hpp"

namespace killchain {

// GTSRB on-disk layout: per-class subdirectories of PPM images plus a
// semicolon-delimited annotation CSV per class with header
//   Filename;Width;Height;Roi.X1;Roi.Y1;Roi.X2;Roi.Y2;ClassId
// Images are ROI-cropped, resized to (h, w) and scaled to [0,1]. If
// class_subset is given, labels are remapped densely in subset order.
LabeledDataset load_gtsrb(const std::string& root_path,
                          const std::optional<std::vector<int>>& class_subset, int image_h,
                          int image_w);

// Synthetic single-object localization scenario: one high-contrast upright
// rectangle on a textured background, label is its normalized box.
// Pixel values are quantized to the 8-bit grid so PNG persistence is exact.
LabeledDataset make_synthetic_pd_dataset(int n, int image_h, int image_w, std::uint64_t seed);

// Rectangle size limits used by make_synthetic_pd_dataset, as fractions of
// the image dimensions.
inline constexpr float kPdMinWFrac = 0.12f;
inline constexpr float kPdMaxWFrac = 0.30f;
inline constexpr float kPdMinHFrac = 0.25f;
inline constexpr float kPdMaxHFrac = 0.55f;

// Procedurally rendered sign-like classes written in the GTSRB layout above,
// so the ingestion path can be exercised without the real dataset. Renders
// num_classes distinct shape/color combinations with pose, brightness and
// noise jitter. Returns the number of images written.
int make_synthetic_gtsrb_root(const std::string& root, int num_classes, int images_per_class,
                              std::uint64_t seed);

inline constexpr int kMaxSyntheticSignClasses = 10;

// 2-feature, 3-class toy problem stored as 1x1x2 images; labels are the
// nearest of three fixed anchor points. Exists for fast end-to-end runs and
// brute-force grid oracles.
LabeledDataset make_toy2d_dataset(int n, std::uint64_t seed);

// Dense res x res grid over the unit square as 1x1x2 images, row-major.
std::vector<Image> toy2d_grid(int res);

// Directory-of-PNGs persistence with a JSON index:
//   {"examples":[{"file":...,"label":...}],"num_classes":N}
void save_dataset(const std::string& dir, const LabeledDataset& ds);
LabeledDataset load_dataset(const std::string& dir);

}  // namespace killchain
