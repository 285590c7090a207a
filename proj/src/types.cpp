#include "killchain/types.hpp"

#include <cmath>
#include <cstdio>

namespace killchain {

namespace {

std::string shape_str(int h, int w, int c) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%dx%dx%d", h, w, c);
  return buf;
}

}  // namespace

void Image::validate() const {
  if (h <= 0 || w <= 0 || (c != 1 && c != 2 && c != 3)) {
    throw ValidationError("Image: bad shape " + shape_str(h, w, c));
  }
  if (pixels.size() != static_cast<std::size_t>(h) * w * c) {
    throw ValidationError("Image: buffer size does not match shape " + shape_str(h, w, c));
  }
  for (float v : pixels) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw ValidationError("Image: pixel value " + std::to_string(v) + " outside [0,1]");
    }
  }
}

void PredictionVector::validate() const {
  if (probs.empty()) throw ValidationError("PredictionVector: empty");
  double sum = 0.0;
  for (float p : probs) {
    if (!(p >= 0.0f)) throw ValidationError("PredictionVector: negative entry");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-5) {
    throw ValidationError("PredictionVector: entries sum to " + std::to_string(sum));
  }
}

void BoundingBox::validate() const {
  const bool ok = 0.0f <= x_min && x_min < x_max && x_max <= 1.0f && 0.0f <= y_min &&
                  y_min < y_max && y_max <= 1.0f;
  if (!ok) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "BoundingBox: invalid corners (%g,%g,%g,%g)", x_min, y_min,
                  x_max, y_max);
    throw ValidationError(buf);
  }
}

void LabeledDataset::validate() const {
  if (images.size() != labels.size()) {
    throw ValidationError("LabeledDataset: image/label count mismatch");
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    images[i].validate();
    if (images[i].h != images[0].h || images[i].w != images[0].w || images[i].c != images[0].c) {
      throw ValidationError("LabeledDataset: images must share one shape");
    }
    if (label_kind == LabelKind::kClass) {
      const auto* lbl = std::get_if<HardLabel>(&labels[i]);
      if (!lbl) throw ValidationError("LabeledDataset: mixed label kinds");
      if (lbl->class_id < 0 || lbl->class_id >= num_classes) {
        throw ValidationError("LabeledDataset: class_id out of range at index " +
                              std::to_string(i));
      }
    } else {
      const auto* box = std::get_if<BoundingBox>(&labels[i]);
      if (!box) throw ValidationError("LabeledDataset: mixed label kinds");
      box->validate();
    }
  }
}

}  // namespace killchain
