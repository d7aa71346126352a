#pragma once

#include <memory>
#include <string>

#include "json.hpp"

#include "evcorridor/model.hpp"

namespace evc {

class AdamW;

struct CheckpointMeta {
    int epoch = -1;
    double val_loss = 0.0;
};

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Line 1 "EVCCKPT 1", line 2 a JSON header (config, epoch, validation loss, tensor manifest
// with byte offsets), then raw little-endian float32 blobs in manifest order. Adam moments
// follow the weights when an optimizer is passed.
void save_checkpoint(const std::string& path, const Model<float>& model, const CheckpointMeta& meta,
                     const AdamW* opt = nullptr);

std::unique_ptr<Model<float>> load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr,
                                              AdamW* opt = nullptr);

}  // namespace evc
