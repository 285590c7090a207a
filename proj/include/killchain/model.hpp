#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "killchain/types.hpp"

namespace killchain {

enum class ModelKind { kClassifier, kLocalizer };
enum class LossKind { kCrossEntropy, kBoxMse };

struct ConvBlockSpec {
  int filters = 16;
  int kernel = 3;
  int stride = 1;
  int pool = 2;  // 0 = none, 2 = 2x2 average pooling
};

// Small CNN family: conv blocks (conv + tanh + optional pooling), hidden
// dense layers, and a task head. Classifiers end in softmax; localizers end
// in a squashed (cx, cy, w, h) head converted to corners, which yields a
// valid box for every input.
struct ArchitectureSpec {
  ModelKind kind = ModelKind::kClassifier;
  int in_h = 32;
  int in_w = 32;
  int in_c = 3;
  std::vector<ConvBlockSpec> conv;
  std::vector<int> dense;
  int output_dim = 10;
  std::string activation = "tanh";
  float loss_scale = 1.0f;  // multiplies the training loss; FGSM is invariant to it

  void validate() const;
  std::size_t param_count() const;
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  float learning_rate = 0.05f;
  float momentum = 0.0f;
  std::uint64_t seed = 1;
  LossKind loss = LossKind::kCrossEntropy;

  void validate() const;
};

struct EpochStats {
  float loss = 0.0f;
  float metric = 0.0f;  // train accuracy or mean IOU
};

struct TrainedModel {
  ArchitectureSpec spec;
  std::vector<float> parameters;
  std::vector<EpochStats> history;

  // Named parameter blocks ("conv0.w", "dense0.b", "out.w", ...).
  struct ParamBlock {
    std::string name;
    std::size_t offset = 0;
    std::size_t count = 0;
  };
  std::vector<ParamBlock> layout() const;
  float* block(const std::string& name);
};

// Supervised training on dataset labels (one-hot for classifiers, corner
// boxes for localizers). Deterministic given cfg.seed.
TrainedModel train(const ArchitectureSpec& spec, const LabeledDataset& data,
                   const TrainConfig& cfg);

// Training against explicit per-example target rows: soft label distributions
// (length output_dim) or corner boxes (length 4). This is the path substitute
// training uses.
TrainedModel train_on_targets(const ArchitectureSpec& spec, const std::vector<Image>& images,
                              const std::vector<std::vector<float>>& targets,
                              const TrainConfig& cfg);

std::vector<PredictionVector> predict_probs(const TrainedModel& m,
                                            const std::vector<Image>& batch);
std::vector<BoundingBox> predict_boxes(const TrainedModel& m, const std::vector<Image>& batch);

using Predictions = std::variant<std::vector<PredictionVector>, std::vector<BoundingBox>>;
Predictions predict(const TrainedModel& m, const std::vector<Image>& batch);

// Gradient of the model's training loss with respect to the input pixels.
std::vector<float> input_gradient(const TrainedModel& m, const Image& x, const Label& target);
std::vector<std::vector<float>> input_gradients(const TrainedModel& m,
                                                const std::vector<Image>& xs,
                                                const std::vector<Label>& targets);

// Loss J(theta, x, target); forward-only, used by finite-difference checks.
float loss_value(const TrainedModel& m, const Image& x, const Label& target);

// File format: one JSON header line {"format_version":1,"param_count":N,
// "spec":{...}} followed by the raw little-endian float32 parameters.
void save_model(const TrainedModel& m, const std::string& path);
TrainedModel load_model(const std::string& path);

// Stable fingerprint over spec + parameters.
std::string model_hash(const TrainedModel& m);

}  // namespace killchain
