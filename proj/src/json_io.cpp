#include "killchain/json_io.hpp"

#include "killchain/common.hpp"

using json = nlohmann::json;

namespace killchain {

json arch_to_json(const ArchitectureSpec& spec) {
  json j;
  j["kind"] = spec.kind == ModelKind::kClassifier ? "classifier" : "localizer";
  j["input"] = {spec.in_h, spec.in_w, spec.in_c};
  j["conv"] = json::array();
  for (const auto& blk : spec.conv) {
    j["conv"].push_back({{"filters", blk.filters},
                         {"kernel", blk.kernel},
                         {"stride", blk.stride},
                         {"pool", blk.pool}});
  }
  j["dense"] = spec.dense;
  j["output_dim"] = spec.output_dim;
  j["activation"] = spec.activation;
  j["loss_scale"] = spec.loss_scale;
  return j;
}

ArchitectureSpec arch_from_json(const json& j) {
  ArchitectureSpec spec;
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "classifier") {
      spec.kind = ModelKind::kClassifier;
    } else if (kind == "localizer") {
      spec.kind = ModelKind::kLocalizer;
    } else {
      throw ConfigError("arch: unknown kind '" + kind + "'");
    }
    const auto& input = j.at("input");
    spec.in_h = input.at(0).get<int>();
    spec.in_w = input.at(1).get<int>();
    spec.in_c = input.at(2).get<int>();
    spec.conv.clear();
    for (const auto& blk : j.value("conv", json::array())) {
      ConvBlockSpec c;
      c.filters = blk.at("filters").get<int>();
      c.kernel = blk.value("kernel", 3);
      c.stride = blk.value("stride", 1);
      c.pool = blk.value("pool", 2);
      spec.conv.push_back(c);
    }
    spec.dense = j.value("dense", std::vector<int>{});
    spec.output_dim = j.at("output_dim").get<int>();
    spec.activation = j.value("activation", "tanh");
    spec.loss_scale = j.value("loss_scale", 1.0f);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("arch: ") + e.what());
  }
  spec.validate();
  return spec;
}

json train_cfg_to_json(const TrainConfig& cfg) {
  json j;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["learning_rate"] = cfg.learning_rate;
  j["momentum"] = cfg.momentum;
  j["seed"] = cfg.seed;
  j["loss"] = cfg.loss == LossKind::kCrossEntropy ? "cross_entropy" : "box_mse";
  return j;
}

TrainConfig train_cfg_from_json(const json& j) {
  TrainConfig cfg;
  try {
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.momentum = j.value("momentum", cfg.momentum);
    cfg.seed = j.value("seed", cfg.seed);
    const std::string loss = j.value("loss", "cross_entropy");
    if (loss == "cross_entropy") {
      cfg.loss = LossKind::kCrossEntropy;
    } else if (loss == "box_mse") {
      cfg.loss = LossKind::kBoxMse;
    } else {
      throw ConfigError("train config: unknown loss '" + loss + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace killchain
