#include "killchain/metrics.hpp"

#include <algorithm>

namespace killchain {

float iou(const BoundingBox& a, const BoundingBox& b) {
  const float ix = std::max(0.0f, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const float iy = std::max(0.0f, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const float inter = ix * iy;
  const float uni = a.area() + b.area() - inter;
  return inter / uni;  // preconditions make the union strictly positive
}

float topk_accuracy(const std::vector<PredictionVector>& preds,
                    const std::vector<HardLabel>& labels, int k) {
  if (preds.size() != labels.size()) {
    throw Error("topk_accuracy: got " + std::to_string(preds.size()) + " predictions vs " +
                std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw Error("topk_accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i].probs;
    const int truth = labels[i].class_id;
    // truth is in the top k iff fewer than k classes strictly beat it,
    // counting equal-probability classes with a lower index as ranked above.
    int above = 0;
    for (int j = 0; j < static_cast<int>(p.size()); ++j) {
      if (j == truth) continue;
      if (p[j] > p[truth] || (p[j] == p[truth] && j < truth)) ++above;
    }
    if (above < k) ++correct;
  }
  return static_cast<float>(correct) / static_cast<float>(preds.size());
}

float agreement_rate(const std::vector<HardLabel>& a, const std::vector<HardLabel>& b) {
  if (a.size() != b.size()) {
    throw Error("agreement_rate: length mismatch " + std::to_string(a.size()) + " vs " +
                std::to_string(b.size()));
  }
  if (a.empty()) throw Error("agreement_rate: empty input");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].class_id == b[i].class_id) ++same;
  }
  return static_cast<float>(same) / static_cast<float>(a.size());
}

float mean_iou(const std::vector<BoundingBox>& a, const std::vector<BoundingBox>& b) {
  if (a.size() != b.size()) {
    throw Error("mean_iou: length mismatch " + std::to_string(a.size()) + " vs " +
                std::to_string(b.size()));
  }
  if (a.empty()) throw Error("mean_iou: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += iou(a[i], b[i]);
  return static_cast<float>(sum / static_cast<double>(a.size()));
}

int argmax_label(const PredictionVector& p) {
  int best = 0;
  for (int j = 1; j < static_cast<int>(p.probs.size()); ++j) {
    if (p.probs[j] > p.probs[best]) best = j;
  }
  return best;
}

}  // namespace killchain
