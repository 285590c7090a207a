#pragma once

#include <vector>

#include "killchain/types.hpp"

namespace killchain {

// Intersection over union of two valid boxes; 0 when disjoint.
float iou(const BoundingBox& a, const BoundingBox& b);

// Fraction of examples whose true class is among the k highest-probability
// classes. Ties rank the lower class index first.
float topk_accuracy(const std::vector<PredictionVector>& preds,
                    const std::vector<HardLabel>& labels, int k);

// Fraction of indices where the two labelings match.
float agreement_rate(const std::vector<HardLabel>& a, const std::vector<HardLabel>& b);

float mean_iou(const std::vector<BoundingBox>& a, const std::vector<BoundingBox>& b);

// Argmax with the same tie rule as topk_accuracy.
int argmax_label(const PredictionVector& p);

}  // namespace killchain
