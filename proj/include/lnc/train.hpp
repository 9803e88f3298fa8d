#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lnc/annotations.hpp"
#include "lnc/checkpoint.hpp"
#include "lnc/model.hpp"

namespace lnc {

struct SplitConfig {
    double train = 0.8, val = 0.05, test = 0.15;  // must sum to 1 (±1e-9)
    uint64_t seed = 0;

    void validate() const;
};

struct TrainConfig {
    int batch_size = 16;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int epochs = 1;
    uint64_t seed = 0;
    int oversample_factor = 3;  // classifier only
    int workers = 1;

    void validate() const;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0;
    double val_loss = 0;
    std::optional<double> val_accuracy;  // classifier runs only
};

struct TrainHistory {
    std::vector<EpochStats> epochs;

    /// CSV `epoch,train_loss,val_loss,val_accuracy` (empty field when n/a).
    void save_csv(const std::filesystem::path& path) const;
};

inline constexpr double kBceEps = 1e-7;

/// Mean binary cross entropy over all elements; predictions are clamped to
/// [kBceEps, 1-kBceEps] before the logs. Throws on length mismatch.
double bce_loss(std::span<const float> pred, std::span<const float> target);
double bce_loss(std::span<const double> pred, std::span<const double> target);

/// d(bce_loss)/d(pred) into grad; zero where the clamp is active.
void bce_loss_grad(std::span<const float> pred, std::span<const float> target,
                   std::span<float> grad);
void bce_loss_grad(std::span<const double> pred, std::span<const double> target,
                   std::span<double> grad);

struct SplitIndices {
    std::vector<size_t> train, val, test;
};

/// Seed-deterministic shuffled partition of [0, n). Val and test sizes are
/// round(fraction*n); train takes the remainder. Disjoint and exhaustive.
SplitIndices split_dataset(size_t n, const SplitConfig& cfg);

/// Index multiset over a labeled sample list: benign indices appear `factor`
/// times, malignant once, reshuffled under the run seed.
std::vector<size_t> oversample_benign(const std::vector<CaseLabel>& labels, int factor,
                                      uint64_t seed);

/// Adam with bias correction; state is allocated on first step.
class AdamOptimizer {
  public:
    AdamOptimizer(double lr, double beta1, double beta2, double epsilon)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

    void step(nn::Model& m, const nn::GradSet<float>& grads);

  private:
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<std::vector<float>> mw_, vw_, mb_, vb_;
};

/// Fused 2-channel classifier input: channel 0 the CT slice, channel 1 the
/// predicted nodule probability map.
struct FusedSample {
    std::vector<float> data;  // 2*h*w
    int width = 0, height = 0;
    CaseLabel label = CaseLabel::benign;
    std::string series_uid;
    int slice_index = 0;
};

struct SegTrainData {
    std::vector<SliceSample> train, val;  // masks required
};

struct ClsTrainData {
    std::vector<FusedSample> train, val;
};

/// Train the U-Net on slice/mask pairs, minimizing mean pixel BCE with Adam.
/// Checkpoint is the best-validation-loss epoch (last epoch when no val
/// data). Throws on an empty training set or NaN loss.
std::pair<ModelCheckpoint, TrainHistory> train_segmentation(const SegTrainData& data,
                                                            nn::Model& model,
                                                            const TrainConfig& cfg);

/// Train a classifier on fused inputs with the 2-class cross entropy.
/// `seg_ckpt` is the frozen screening checkpoint used to build the fused
/// inputs; it is recorded, never updated. Benign oversampling (factor from
/// cfg) is applied to the training multiset here.
std::pair<ModelCheckpoint, TrainHistory> train_classifier(const ClsTrainData& data,
                                                          const ModelCheckpoint& seg_ckpt,
                                                          nn::Model& model,
                                                          const TrainConfig& cfg);

}  // namespace lnc
