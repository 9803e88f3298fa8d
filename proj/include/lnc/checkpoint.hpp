#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lnc/model.hpp"

namespace lnc {

struct TrainingMeta {
    int epochs = 0;
    double final_train_loss = 0;
    double final_val_loss = 0;
    uint64_t seed = 0;
};

/// Named tensor collection with shapes plus training metadata. Persisted as
/// a JSON manifest next to one little-endian float32 blob referenced by it.
struct ModelCheckpoint {
    struct Entry {
        std::string name;
        std::vector<int64_t> shape;
        std::vector<float> values;
    };

    std::string arch_id;
    int in_c = 0, in_h = 0, in_w = 0;
    std::vector<Entry> tensors;
    TrainingMeta meta;

    const Entry* find(const std::string& name) const;
};

/// Snapshot a model's parameters. Conv tensors are recorded with shape
/// [c_out, c_in, k, k], dense with [out, in], biases with [n].
ModelCheckpoint checkpoint_from_model(const nn::Model& m, const TrainingMeta& meta);

/// Copy checkpoint tensors into an already-built model, matched by name.
/// Throws naming the tensor on a missing entry or a shape mismatch; also
/// rejects checkpoints carrying tensors the model does not have.
void transfer_weights(const ModelCheckpoint& ckpt, nn::Model& m);

/// Rebuild the architecture recorded in the checkpoint and load its weights.
nn::Model model_from_checkpoint(const ModelCheckpoint& ckpt);

/// Write manifest (at `path`) plus blob (same name with a ".bin" suffix).
void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);

/// Read manifest + blob; verifies the recorded blob digest before decoding.
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lnc
