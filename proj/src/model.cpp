#include "killchain/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "killchain/json_io.hpp"
#include "killchain/kernels.hpp"
#include "killchain/metrics.hpp"
#include "killchain/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "model file payload is little-endian float32");

namespace killchain {

using kernels::Backend;
using kernels::Conv2dDims;

namespace {

constexpr int kPredictChunk = 64;
constexpr float kSigmoidClamp = 15.0f;  // keeps squashed box extents strictly positive

enum class OpKind { kConv, kTanh, kPool, kDense };

struct Op {
  OpKind kind;
  Conv2dDims conv;                   // kConv
  int pool_h = 0, pool_w = 0, pool_c = 0;  // kPool input dims
  int in_dim = 0, out_dim = 0;       // kDense
  std::size_t w_off = 0, b_off = 0;
  std::size_t in_count = 0;          // per-example input element count
  std::size_t out_count = 0;         // per-example output element count
  std::string block_name;
};

struct Plan {
  std::vector<Op> ops;
  std::size_t input_count = 0;
  std::size_t param_count = 0;
  int output_dim = 0;
};

Plan build_plan(const ArchitectureSpec& spec) {
  Plan plan;
  plan.input_count = static_cast<std::size_t>(spec.in_h) * spec.in_w * spec.in_c;
  plan.output_dim = spec.output_dim;
  int h = spec.in_h;
  int w = spec.in_w;
  int c = spec.in_c;
  std::size_t off = 0;
  for (std::size_t i = 0; i < spec.conv.size(); ++i) {
    const auto& blk = spec.conv[i];
    Op conv;
    conv.kind = OpKind::kConv;
    conv.conv = Conv2dDims{0, h, w, c, blk.filters, blk.kernel, blk.stride,
                           (blk.kernel - 1) / 2};
    conv.in_count = static_cast<std::size_t>(h) * w * c;
    h = conv.conv.out_h();
    w = conv.conv.out_w();
    c = blk.filters;
    conv.out_count = static_cast<std::size_t>(h) * w * c;
    conv.w_off = off;
    off += conv.conv.weight_count();
    conv.b_off = off;
    off += blk.filters;
    conv.block_name = "conv" + std::to_string(i);
    plan.ops.push_back(conv);

    Op act;
    act.kind = OpKind::kTanh;
    act.in_count = act.out_count = conv.out_count;
    plan.ops.push_back(act);

    if (blk.pool == 2) {
      Op pool;
      pool.kind = OpKind::kPool;
      pool.pool_h = h;
      pool.pool_w = w;
      pool.pool_c = c;
      pool.in_count = static_cast<std::size_t>(h) * w * c;
      h /= 2;
      w /= 2;
      pool.out_count = static_cast<std::size_t>(h) * w * c;
      plan.ops.push_back(pool);
    }
  }
  int flat = h * w * c;
  auto add_dense = [&](int out_dim, const std::string& name, bool with_act) {
    Op dense;
    dense.kind = OpKind::kDense;
    dense.in_dim = flat;
    dense.out_dim = out_dim;
    dense.in_count = flat;
    dense.out_count = out_dim;
    dense.w_off = off;
    off += static_cast<std::size_t>(flat) * out_dim;
    dense.b_off = off;
    off += out_dim;
    dense.block_name = name;
    plan.ops.push_back(dense);
    flat = out_dim;
    if (with_act) {
      Op act;
      act.kind = OpKind::kTanh;
      act.in_count = act.out_count = static_cast<std::size_t>(out_dim);
      plan.ops.push_back(act);
    }
  };
  for (std::size_t i = 0; i < spec.dense.size(); ++i) {
    add_dense(spec.dense[i], "dense" + std::to_string(i), true);
  }
  add_dense(spec.output_dim, "out", false);
  plan.param_count = off;
  return plan;
}

struct Workspace {
  // acts[0] is the input batch; acts[i+1] is the output of op i.
  std::vector<std::vector<float>> acts;
  std::vector<std::vector<float>> grads;
  int batch_cap = 0;

  void prepare(const Plan& plan, int batch, bool for_backward) {
    if (batch <= batch_cap && acts.size() == plan.ops.size() + 1 &&
        (!for_backward || grads.size() == plan.ops.size() + 1)) {
      return;
    }
    batch_cap = std::max(batch_cap, batch);
    acts.assign(plan.ops.size() + 1, {});
    acts[0].resize(plan.input_count * batch_cap);
    for (std::size_t i = 0; i < plan.ops.size(); ++i) {
      acts[i + 1].resize(plan.ops[i].out_count * batch_cap);
    }
    if (for_backward) {
      grads.assign(plan.ops.size() + 1, {});
      grads[0].resize(plan.input_count * batch_cap);
      for (std::size_t i = 0; i < plan.ops.size(); ++i) {
        grads[i + 1].resize(plan.ops[i].out_count * batch_cap);
      }
    }
  }
};

// Runs all ops; logits end up in ws.acts.back().
void forward(const Plan& plan, const float* params, Workspace& ws, int batch, Backend be) {
  for (std::size_t i = 0; i < plan.ops.size(); ++i) {
    const Op& op = plan.ops[i];
    const float* in = ws.acts[i].data();
    float* out = ws.acts[i + 1].data();
    switch (op.kind) {
      case OpKind::kConv: {
        Conv2dDims d = op.conv;
        d.batch = batch;
        kernels::conv2d_forward(in, params + op.w_off, params + op.b_off, out, d, be);
        break;
      }
      case OpKind::kTanh:
        kernels::tanh_forward(in, out, op.out_count * batch, be);
        break;
      case OpKind::kPool:
        kernels::avgpool2_forward(in, out, batch, op.pool_h, op.pool_w, op.pool_c, be);
        break;
      case OpKind::kDense:
        kernels::dense_forward(in, params + op.w_off, params + op.b_off, out, batch, op.in_dim,
                               op.out_dim, be);
        break;
    }
  }
}

// dlogits sits in ws.grads.back(). Writes parameter gradients into
// grad_params when given, and the input gradient into ws.grads[0] when
// want_input_grad is set.
void backward(const Plan& plan, const float* params, Workspace& ws, int batch,
              float* grad_params, bool want_input_grad, Backend be) {
  for (std::size_t i = plan.ops.size(); i-- > 0;) {
    const Op& op = plan.ops[i];
    const float* gout = ws.grads[i + 1].data();
    float* gin = ws.grads[i].data();
    const bool need_gin = i > 0 || want_input_grad;
    switch (op.kind) {
      case OpKind::kConv: {
        Conv2dDims d = op.conv;
        d.batch = batch;
        if (grad_params) {
          kernels::conv2d_backward_params(gout, ws.acts[i].data(), grad_params + op.w_off,
                                          grad_params + op.b_off, d, be);
        }
        if (need_gin) kernels::conv2d_backward_input(gout, params + op.w_off, gin, d, be);
        break;
      }
      case OpKind::kTanh:
        if (need_gin) {
          kernels::tanh_backward(ws.acts[i + 1].data(), gout, gin, op.out_count * batch, be);
        }
        break;
      case OpKind::kPool:
        if (need_gin) {
          kernels::avgpool2_backward(gout, gin, batch, op.pool_h, op.pool_w, op.pool_c, be);
        }
        break;
      case OpKind::kDense:
        if (grad_params) {
          kernels::dense_backward_params(gout, ws.acts[i].data(), grad_params + op.w_off,
                                         grad_params + op.b_off, batch, op.in_dim, op.out_dim,
                                         be);
        }
        if (need_gin) {
          kernels::dense_backward_input(gout, params + op.w_off, gin, batch, op.in_dim,
                                        op.out_dim, be);
        }
        break;
    }
  }
}

void softmax_rows(const float* logits, float* probs, int batch, int dim) {
  for (int b = 0; b < batch; ++b) {
    const float* in = logits + static_cast<std::size_t>(b) * dim;
    float* out = probs + static_cast<std::size_t>(b) * dim;
    float mx = in[0];
    for (int k = 1; k < dim; ++k) mx = std::max(mx, in[k]);
    float sum = 0.0f;
    for (int k = 0; k < dim; ++k) {
      out[k] = std::exp(in[k] - mx);
      sum += out[k];
    }
    const float inv = 1.0f / sum;
    for (int k = 0; k < dim; ++k) out[k] *= inv;
  }
}

float sigmoid(float z) { return 1.0f / (1.0f + std::exp(-z)); }

// (cx, cy, w, h) in (0,1) -> corners; x_min = cx*(1-w) lands the box inside
// the unit square with positive extent for any logits.
void box_from_squashed(const float s[4], float corners[4]) {
  const float cx = s[0], cy = s[1], bw = s[2], bh = s[3];
  corners[0] = cx * (1.0f - bw);
  corners[1] = cy * (1.0f - bh);
  corners[2] = corners[0] + bw;
  corners[3] = corners[1] + bh;
}

void box_head_forward(const float* logits, float* squashed, float* corners, int batch) {
  for (int b = 0; b < batch; ++b) {
    float s[4];
    for (int k = 0; k < 4; ++k) {
      const float z = std::clamp(logits[b * 4 + k], -kSigmoidClamp, kSigmoidClamp);
      s[k] = sigmoid(z);
      squashed[b * 4 + k] = s[k];
    }
    box_from_squashed(s, corners + b * 4);
  }
}

// Chain rule through the corner conversion and the sigmoid.
void box_head_backward(const float* logits, const float* squashed, const float* dcorners,
                       float* dlogits, int batch) {
  for (int b = 0; b < batch; ++b) {
    const float cx = squashed[b * 4 + 0], cy = squashed[b * 4 + 1];
    const float bw = squashed[b * 4 + 2], bh = squashed[b * 4 + 3];
    const float gx0 = dcorners[b * 4 + 0], gy0 = dcorners[b * 4 + 1];
    const float gx1 = dcorners[b * 4 + 2], gy1 = dcorners[b * 4 + 3];
    float ds[4];
    ds[0] = (1.0f - bw) * (gx0 + gx1);
    ds[1] = (1.0f - bh) * (gy0 + gy1);
    ds[2] = -cx * gx0 + (1.0f - cx) * gx1;
    ds[3] = -cy * gy0 + (1.0f - cy) * gy1;
    for (int k = 0; k < 4; ++k) {
      const float z = logits[b * 4 + k];
      const float s = squashed[b * 4 + k];
      const float saturated = std::fabs(z) >= kSigmoidClamp ? 0.0f : 1.0f;
      dlogits[b * 4 + k] = ds[k] * s * (1.0f - s) * saturated;
    }
  }
}

// Per-row loss and dlogits. row_weight is loss_scale/batch during training
// (mean reduction) and loss_scale for per-example input gradients.
float head_loss_and_grad(const ArchitectureSpec& spec, const float* logits,
                         const float* targets, int batch, float row_weight, float* dlogits,
                         std::vector<float>* probs_out, std::vector<float>* corners_out) {
  const int dim = spec.output_dim;
  double loss = 0.0;
  if (spec.kind == ModelKind::kClassifier) {
    std::vector<float> probs(static_cast<std::size_t>(batch) * dim);
    softmax_rows(logits, probs.data(), batch, dim);
    for (int b = 0; b < batch; ++b) {
      for (int k = 0; k < dim; ++k) {
        const std::size_t i = static_cast<std::size_t>(b) * dim + k;
        const float t = targets[i];
        if (t > 0.0f) loss += -static_cast<double>(t) * std::log(std::max(probs[i], 1e-12f));
        if (dlogits) dlogits[i] = row_weight * (probs[i] - t);
      }
    }
    if (probs_out) *probs_out = std::move(probs);
    return static_cast<float>(loss * spec.loss_scale / batch);
  }
  // Localizer: squared error on corners, averaged over the 4 components.
  std::vector<float> squashed(static_cast<std::size_t>(batch) * 4);
  std::vector<float> corners(static_cast<std::size_t>(batch) * 4);
  box_head_forward(logits, squashed.data(), corners.data(), batch);
  std::vector<float> dcorners(static_cast<std::size_t>(batch) * 4);
  for (int b = 0; b < batch; ++b) {
    for (int k = 0; k < 4; ++k) {
      const std::size_t i = static_cast<std::size_t>(b) * 4 + k;
      const float diff = corners[i] - targets[i];
      loss += 0.25 * static_cast<double>(diff) * diff;
      dcorners[i] = row_weight * 0.5f * diff;
    }
  }
  if (dlogits) box_head_backward(logits, squashed.data(), dcorners.data(), dlogits, batch);
  if (corners_out) *corners_out = std::move(corners);
  return static_cast<float>(loss * spec.loss_scale / batch);
}

void check_input_shape(const ArchitectureSpec& spec, const Image& img) {
  if (img.h != spec.in_h || img.w != spec.in_w || img.c != spec.in_c) {
    throw Error("input shape " + std::to_string(img.h) + "x" + std::to_string(img.w) + "x" +
                std::to_string(img.c) + " does not match model input " +
                std::to_string(spec.in_h) + "x" + std::to_string(spec.in_w) + "x" +
                std::to_string(spec.in_c));
  }
}

std::vector<float> label_to_target(const ArchitectureSpec& spec, const Label& label) {
  std::vector<float> t;
  if (spec.kind == ModelKind::kClassifier) {
    const auto* hard = std::get_if<HardLabel>(&label);
    if (!hard) throw Error("classifier expects a class label");
    if (hard->class_id < 0 || hard->class_id >= spec.output_dim) {
      throw Error("class label " + std::to_string(hard->class_id) + " out of range");
    }
    t.assign(spec.output_dim, 0.0f);
    t[hard->class_id] = 1.0f;
  } else {
    const auto* box = std::get_if<BoundingBox>(&label);
    if (!box) throw Error("localizer expects a box label");
    t = {box->x_min, box->y_min, box->x_max, box->y_max};
  }
  return t;
}

void init_params(const ArchitectureSpec& spec, const Plan& plan, std::vector<float>& params,
                 Rng& rng) {
  params.assign(plan.param_count, 0.0f);
  for (const Op& op : plan.ops) {
    if (op.kind == OpKind::kConv) {
      const int fan_in = op.conv.kernel * op.conv.kernel * op.conv.in_c;
      const int fan_out = op.conv.kernel * op.conv.kernel * op.conv.out_c;
      const float a = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
      for (std::size_t i = 0; i < op.conv.weight_count(); ++i) {
        params[op.w_off + i] = rng.uniform(-a, a);
      }
    } else if (op.kind == OpKind::kDense) {
      const float a = std::sqrt(6.0f / static_cast<float>(op.in_dim + op.out_dim));
      for (std::size_t i = 0; i < static_cast<std::size_t>(op.in_dim) * op.out_dim; ++i) {
        params[op.w_off + i] = rng.uniform(-a, a);
      }
    }
  }
}

TrainedModel train_core(const ArchitectureSpec& spec, const std::vector<Image>& images,
                        const std::vector<std::vector<float>>& targets, const TrainConfig& cfg) {
  spec.validate();
  cfg.validate();
  if (images.empty()) throw Error("train: empty dataset");
  if (images.size() != targets.size()) throw Error("train: image/target count mismatch");
  const std::size_t target_dim = spec.kind == ModelKind::kClassifier
                                     ? static_cast<std::size_t>(spec.output_dim)
                                     : 4;
  for (const auto& img : images) check_input_shape(spec, img);
  for (const auto& t : targets) {
    if (t.size() != target_dim) {
      throw Error("train: target row length " + std::to_string(t.size()) + ", expected " +
                  std::to_string(target_dim));
    }
  }
  if ((cfg.loss == LossKind::kCrossEntropy) != (spec.kind == ModelKind::kClassifier)) {
    throw Error("train: loss kind does not match model kind");
  }

  const Backend be = kernels::default_backend();
  const Plan plan = build_plan(spec);
  Rng rng(cfg.seed);

  TrainedModel model;
  model.spec = spec;
  init_params(spec, plan, model.parameters, rng);

  std::vector<float> velocity;
  if (cfg.momentum > 0.0f) velocity.assign(plan.param_count, 0.0f);
  std::vector<float> grad(plan.param_count);

  const int n = static_cast<int>(images.size());
  const int bs = std::min(cfg.batch_size, n);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  Workspace ws;
  ws.prepare(plan, bs, true);
  std::vector<float> batch_targets(static_cast<std::size_t>(bs) * target_dim);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    double epoch_metric = 0.0;
    std::size_t seen = 0;
    for (int start = 0; start < n; start += bs) {
      const int batch = std::min(bs, n - start);
      for (int i = 0; i < batch; ++i) {
        const Image& img = images[order[start + i]];
        std::copy(img.pixels.begin(), img.pixels.end(),
                  ws.acts[0].begin() + static_cast<std::size_t>(i) * plan.input_count);
        const auto& t = targets[order[start + i]];
        std::copy(t.begin(), t.end(), batch_targets.begin() + static_cast<std::size_t>(i) * target_dim);
      }
      forward(plan, model.parameters.data(), ws, batch, be);

      std::vector<float> probs;
      std::vector<float> corners;
      const float row_weight = spec.loss_scale / static_cast<float>(batch);
      const float loss = head_loss_and_grad(spec, ws.acts.back().data(), batch_targets.data(),
                                            batch, row_weight, ws.grads.back().data(),
                                            spec.kind == ModelKind::kClassifier ? &probs : nullptr,
                                            spec.kind == ModelKind::kLocalizer ? &corners : nullptr);
      epoch_loss += static_cast<double>(loss) * batch;

      // Training metric from the same forward pass.
      for (int i = 0; i < batch; ++i) {
        if (spec.kind == ModelKind::kClassifier) {
          int pred = 0, truth = 0;
          for (int k = 1; k < spec.output_dim; ++k) {
            const std::size_t row = static_cast<std::size_t>(i) * spec.output_dim;
            if (probs[row + k] > probs[row + pred]) pred = k;
            if (batch_targets[row + k] > batch_targets[row + truth]) truth = k;
          }
          epoch_metric += pred == truth ? 1.0 : 0.0;
        } else {
          const float* p = corners.data() + static_cast<std::size_t>(i) * 4;
          const float* t = batch_targets.data() + static_cast<std::size_t>(i) * 4;
          epoch_metric += iou(BoundingBox{p[0], p[1], p[2], p[3]},
                              BoundingBox{t[0], t[1], t[2], t[3]});
        }
      }
      seen += batch;

      backward(plan, model.parameters.data(), ws, batch, grad.data(), false, be);
      if (cfg.momentum > 0.0f) {
        for (std::size_t i = 0; i < plan.param_count; ++i) {
          velocity[i] = cfg.momentum * velocity[i] + grad[i];
          model.parameters[i] -= cfg.learning_rate * velocity[i];
        }
      } else {
        for (std::size_t i = 0; i < plan.param_count; ++i) {
          model.parameters[i] -= cfg.learning_rate * grad[i];
        }
      }
    }
    model.history.push_back(EpochStats{static_cast<float>(epoch_loss / seen),
                                       static_cast<float>(epoch_metric / seen)});
  }
  return model;
}

}  // namespace

void ArchitectureSpec::validate() const {
  if (in_h <= 0 || in_w <= 0 || (in_c != 1 && in_c != 2 && in_c != 3)) {
    throw ConfigError("arch: bad input shape");
  }
  if (activation != "tanh") {
    throw ConfigError("arch: unsupported activation '" + activation + "'");
  }
  if (!(loss_scale > 0.0f)) throw ConfigError("arch: loss_scale must be positive");
  if (output_dim < 1) throw ConfigError("arch: output_dim must be >= 1");
  if (kind == ModelKind::kLocalizer && output_dim != 4) {
    throw ConfigError("arch: localizer output_dim must be 4");
  }
  int h = in_h;
  int w = in_w;
  for (const auto& blk : conv) {
    if (blk.filters < 1) throw ConfigError("arch: conv filters must be >= 1");
    if (blk.kernel < 1 || blk.kernel % 2 == 0) {
      throw ConfigError("arch: conv kernel must be odd and >= 1");
    }
    if (blk.stride < 1) throw ConfigError("arch: conv stride must be >= 1");
    if (blk.pool != 0 && blk.pool != 2) throw ConfigError("arch: pool must be 0 or 2");
    const int pad = (blk.kernel - 1) / 2;
    h = (h + 2 * pad - blk.kernel) / blk.stride + 1;
    w = (w + 2 * pad - blk.kernel) / blk.stride + 1;
    if (h < 1 || w < 1) throw ConfigError("arch: feature map shrinks to nothing");
    if (blk.pool == 2) {
      if (h % 2 != 0 || w % 2 != 0) {
        throw ConfigError("arch: pooling needs an even feature map, got " + std::to_string(h) +
                          "x" + std::to_string(w));
      }
      h /= 2;
      w /= 2;
    }
  }
  for (int d : dense) {
    if (d < 1) throw ConfigError("arch: dense width must be >= 1");
  }
}

std::size_t ArchitectureSpec::param_count() const { return build_plan(*this).param_count; }

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (!(learning_rate > 0.0f)) throw ConfigError("train config: learning_rate must be > 0");
  if (momentum < 0.0f || momentum >= 1.0f) {
    throw ConfigError("train config: momentum must be in [0,1)");
  }
}

std::vector<TrainedModel::ParamBlock> TrainedModel::layout() const {
  const Plan plan = build_plan(spec);
  std::vector<ParamBlock> blocks;
  for (const Op& op : plan.ops) {
    if (op.kind == OpKind::kConv) {
      blocks.push_back({op.block_name + ".w", op.w_off, op.conv.weight_count()});
      blocks.push_back({op.block_name + ".b", op.b_off, static_cast<std::size_t>(op.conv.out_c)});
    } else if (op.kind == OpKind::kDense) {
      blocks.push_back(
          {op.block_name + ".w", op.w_off, static_cast<std::size_t>(op.in_dim) * op.out_dim});
      blocks.push_back({op.block_name + ".b", op.b_off, static_cast<std::size_t>(op.out_dim)});
    }
  }
  return blocks;
}

float* TrainedModel::block(const std::string& name) {
  for (const auto& blk : layout()) {
    if (blk.name == name) return parameters.data() + blk.offset;
  }
  throw Error("no parameter block named '" + name + "'");
}

TrainedModel train(const ArchitectureSpec& spec, const LabeledDataset& data,
                   const TrainConfig& cfg) {
  if (data.size() == 0) throw Error("train: empty dataset");
  const bool want_class = spec.kind == ModelKind::kClassifier;
  if (want_class != (data.label_kind == LabelKind::kClass)) {
    throw Error("train: dataset label kind does not match model kind");
  }
  if (want_class && data.num_classes != spec.output_dim) {
    throw Error("train: dataset has " + std::to_string(data.num_classes) +
                " classes but model outputs " + std::to_string(spec.output_dim));
  }
  std::vector<std::vector<float>> targets;
  targets.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    targets.push_back(label_to_target(spec, data.labels[i]));
  }
  return train_core(spec, data.images, targets, cfg);
}

TrainedModel train_on_targets(const ArchitectureSpec& spec, const std::vector<Image>& images,
                              const std::vector<std::vector<float>>& targets,
                              const TrainConfig& cfg) {
  return train_core(spec, images, targets, cfg);
}

namespace {

// Shared batched forward for both prediction flavors.
template <class Emit>
void predict_batched(const TrainedModel& m, const std::vector<Image>& batch, Emit&& emit) {
  m.spec.validate();
  if (m.parameters.size() != m.spec.param_count()) {
    throw ValidationError("model parameter count does not match spec layout");
  }
  for (const auto& img : batch) check_input_shape(m.spec, img);
  const Plan plan = build_plan(m.spec);
  const Backend be = kernels::default_backend();
  Workspace ws;
  const int chunk = std::min<int>(kPredictChunk, std::max<std::size_t>(batch.size(), 1));
  ws.prepare(plan, chunk, false);
  for (std::size_t start = 0; start < batch.size(); start += chunk) {
    const int nb = static_cast<int>(std::min<std::size_t>(chunk, batch.size() - start));
    for (int i = 0; i < nb; ++i) {
      const auto& px = batch[start + i].pixels;
      std::copy(px.begin(), px.end(),
                ws.acts[0].begin() + static_cast<std::size_t>(i) * plan.input_count);
    }
    forward(plan, m.parameters.data(), ws, nb, be);
    emit(ws.acts.back().data(), nb);
  }
}

}  // namespace

std::vector<PredictionVector> predict_probs(const TrainedModel& m,
                                            const std::vector<Image>& batch) {
  if (m.spec.kind != ModelKind::kClassifier) throw Error("predict_probs: not a classifier");
  std::vector<PredictionVector> out;
  out.reserve(batch.size());
  const int dim = m.spec.output_dim;
  predict_batched(m, batch, [&](const float* logits, int nb) {
    std::vector<float> probs(static_cast<std::size_t>(nb) * dim);
    softmax_rows(logits, probs.data(), nb, dim);
    for (int i = 0; i < nb; ++i) {
      PredictionVector pv;
      pv.probs.assign(probs.begin() + static_cast<std::size_t>(i) * dim,
                      probs.begin() + static_cast<std::size_t>(i + 1) * dim);
      out.push_back(std::move(pv));
    }
  });
  return out;
}

std::vector<BoundingBox> predict_boxes(const TrainedModel& m, const std::vector<Image>& batch) {
  if (m.spec.kind != ModelKind::kLocalizer) throw Error("predict_boxes: not a localizer");
  std::vector<BoundingBox> out;
  out.reserve(batch.size());
  predict_batched(m, batch, [&](const float* logits, int nb) {
    std::vector<float> squashed(static_cast<std::size_t>(nb) * 4);
    std::vector<float> corners(static_cast<std::size_t>(nb) * 4);
    box_head_forward(logits, squashed.data(), corners.data(), nb);
    for (int i = 0; i < nb; ++i) {
      const float* p = corners.data() + static_cast<std::size_t>(i) * 4;
      out.push_back(BoundingBox{p[0], p[1], p[2], p[3]});
    }
  });
  return out;
}

Predictions predict(const TrainedModel& m, const std::vector<Image>& batch) {
  if (m.spec.kind == ModelKind::kClassifier) return predict_probs(m, batch);
  return predict_boxes(m, batch);
}

std::vector<std::vector<float>> input_gradients(const TrainedModel& m,
                                                const std::vector<Image>& xs,
                                                const std::vector<Label>& targets) {
  if (xs.size() != targets.size()) throw Error("input_gradients: length mismatch");
  m.spec.validate();
  for (const auto& img : xs) check_input_shape(m.spec, img);
  const Plan plan = build_plan(m.spec);
  const Backend be = kernels::default_backend();
  const std::size_t target_dim =
      m.spec.kind == ModelKind::kClassifier ? static_cast<std::size_t>(m.spec.output_dim) : 4;
  Workspace ws;
  const int chunk = std::min<int>(kPredictChunk, std::max<std::size_t>(xs.size(), 1));
  ws.prepare(plan, chunk, true);
  std::vector<float> batch_targets(static_cast<std::size_t>(chunk) * target_dim);

  std::vector<std::vector<float>> grads;
  grads.reserve(xs.size());
  for (std::size_t start = 0; start < xs.size(); start += chunk) {
    const int nb = static_cast<int>(std::min<std::size_t>(chunk, xs.size() - start));
    for (int i = 0; i < nb; ++i) {
      const auto& px = xs[start + i].pixels;
      std::copy(px.begin(), px.end(),
                ws.acts[0].begin() + static_cast<std::size_t>(i) * plan.input_count);
      const auto t = label_to_target(m.spec, targets[start + i]);
      std::copy(t.begin(), t.end(),
                batch_targets.begin() + static_cast<std::size_t>(i) * target_dim);
    }
    forward(plan, m.parameters.data(), ws, nb, be);
    // Per-example gradients: no batch-mean factor.
    head_loss_and_grad(m.spec, ws.acts.back().data(), batch_targets.data(), nb,
                       m.spec.loss_scale, ws.grads.back().data(), nullptr, nullptr);
    backward(plan, m.parameters.data(), ws, nb, nullptr, true, be);
    for (int i = 0; i < nb; ++i) {
      grads.emplace_back(ws.grads[0].begin() + static_cast<std::size_t>(i) * plan.input_count,
                         ws.grads[0].begin() + static_cast<std::size_t>(i + 1) * plan.input_count);
    }
  }
  return grads;
}

std::vector<float> input_gradient(const TrainedModel& m, const Image& x, const Label& target) {
  return input_gradients(m, {x}, {target}).front();
}

float loss_value(const TrainedModel& m, const Image& x, const Label& target) {
  m.spec.validate();
  check_input_shape(m.spec, x);
  const Plan plan = build_plan(m.spec);
  Workspace ws;
  ws.prepare(plan, 1, false);
  std::copy(x.pixels.begin(), x.pixels.end(), ws.acts[0].begin());
  forward(plan, m.parameters.data(), ws, 1, kernels::default_backend());
  const auto t = label_to_target(m.spec, target);
  return head_loss_and_grad(m.spec, ws.acts.back().data(), t.data(), 1, 0.0f, nullptr, nullptr,
                            nullptr);
}

void save_model(const TrainedModel& m, const std::string& path) {
  nlohmann::json header;
  header["format_version"] = 1;
  header["param_count"] = m.parameters.size();
  header["spec"] = arch_to_json(m.spec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model file: " + path);
  out << header.dump() << "\n";
  out.write(reinterpret_cast<const char*>(m.parameters.data()),
            static_cast<std::streamsize>(m.parameters.size() * sizeof(float)));
  if (!out) throw Error("short write to model file: " + path);
}

TrainedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactMissing("model file not found: " + path);
  std::string header_line;
  if (!std::getline(in, header_line)) {
    throw ValidationError("model file has no header: " + path);
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("model file header is not valid JSON: " + path);
  }
  if (!header.contains("format_version")) {
    throw ValidationError("model header missing field 'format_version': " + path);
  }
  if (header["format_version"].get<int>() != 1) {
    throw ValidationError("unsupported format_version " +
                          header["format_version"].dump() + " in " + path);
  }
  if (!header.contains("spec")) {
    throw ValidationError("model header missing field 'spec': " + path);
  }
  if (!header.contains("param_count")) {
    throw ValidationError("model header missing field 'param_count': " + path);
  }
  TrainedModel m;
  m.spec = arch_from_json(header["spec"]);
  const std::size_t declared = header["param_count"].get<std::size_t>();
  if (declared != m.spec.param_count()) {
    throw ValidationError("model header field 'param_count' (" + std::to_string(declared) +
                          ") does not match spec layout (" +
                          std::to_string(m.spec.param_count()) + ")");
  }
  m.parameters.resize(declared);
  in.read(reinterpret_cast<char*>(m.parameters.data()),
          static_cast<std::streamsize>(declared * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != declared * sizeof(float)) {
    throw ValidationError("model payload truncated: " + path);
  }
  return m;
}

std::string model_hash(const TrainedModel& m) {
  std::string bytes = arch_to_json(m.spec).dump();
  bytes.append(reinterpret_cast<const char*>(m.parameters.data()),
               m.parameters.size() * sizeof(float));
  return hex64(fnv1a(bytes));
}

}  // namespace killchain
