#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "killchain/common.hpp"

namespace killchain {

// H x W x C float tensor with values in [0,1]; the unit of every query,
// prediction and perturbation. Row-major (h, w, c) layout.
struct Image {
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h_, int w_, int c_, float fill = 0.0f)
      : h(h_), w(w_), c(c_), pixels(static_cast<std::size_t>(h_) * w_ * c_, fill) {}

  float& at(int y, int x, int ch) {
    return pixels[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  float at(int y, int x, int ch) const {
    return pixels[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  std::size_t size() const { return pixels.size(); }

  // Checks the [0,1] range and that shape metadata matches the buffer.
  void validate() const;
};

struct PredictionVector {
  std::vector<float> probs;

  // Entries nonnegative, summing to 1 within 1e-5.
  void validate() const;
};

struct HardLabel {
  int class_id = 0;
};

// Corners normalized to [0,1], x_min < x_max and y_min < y_max.
struct BoundingBox {
  float x_min = 0.0f;
  float y_min = 0.0f;
  float x_max = 0.0f;
  float y_max = 0.0f;

  float area() const { return (x_max - x_min) * (y_max - y_min); }
  void validate() const;
};

enum class LabelKind { kClass, kBox };

using Label = std::variant<HardLabel, BoundingBox>;

struct LabeledDataset {
  std::vector<Image> images;
  std::vector<Label> labels;
  LabelKind label_kind = LabelKind::kClass;
  int num_classes = 0;  // classification only
  std::string split;    // "train" or "test"

  std::size_t size() const { return images.size(); }
  const HardLabel& class_label(std::size_t i) const { return std::get<HardLabel>(labels[i]); }
  const BoundingBox& box_label(std::size_t i) const { return std::get<BoundingBox>(labels[i]); }

  // Homogeneous label kind, one shared image shape, labels in range.
  void validate() const;
};

}  // namespace killchain
