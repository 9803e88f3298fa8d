#pragma once

#include <string>
#include <vector>

#include "lnc/annotations.hpp"
#include "lnc/checkpoint.hpp"
#include "lnc/train.hpp"
#include "lnc/volume.hpp"

namespace lnc {

inline constexpr double kDefaultScreenThreshold = 0.35;

/// Discriminator rule: a slice is suspicious iff its maximum predicted pixel
/// probability is strictly greater than the threshold.
inline bool is_suspicious(double max_prob, double threshold) { return max_prob > threshold; }

/// Screening outcome for one slice: full probability map, its maximum, and
/// the discriminator flag (strictly greater than the threshold).
struct ScreenResult {
    std::string series_uid;
    int slice_index = 0;
    std::vector<float> prob_map;  // h*w in [0, 1]
    int width = 0, height = 0;
    float max_prob = 0;
    bool suspicious = false;
};

enum class CaseAggregation { mean_probability, majority_vote };

struct CascadeOptions {
    double threshold = kDefaultScreenThreshold;
    bool binarize_prob_map = false;  // threshold channel 1 at 0.5 before fusion
    CaseAggregation aggregation = CaseAggregation::mean_probability;
    int workers = 1;
};

/// Case-level verdict: per-slice malignant probabilities over suspicious
/// slices, their aggregate score, and the 0.5-cut label. `no_findings` marks
/// volumes where no slice passed the discriminator.
struct CaseVerdict {
    std::string series_uid;
    std::vector<std::pair<int, float>> slice_probs;  // (slice index, p_malignant)
    double case_score = 0;
    CaseLabel predicted_label = CaseLabel::benign;
    bool no_findings = false;
    int n_suspicious = 0;
};

/// Run the screening net over normalized slices. One result per slice, input
/// order preserved. Throws if the checkpoint is not the segmentation arch or
/// the slice dims disagree with it.
std::vector<ScreenResult> screen_slices(const ModelCheckpoint& seg_ckpt,
                                        const std::vector<SliceSample>& slices,
                                        double threshold = kDefaultScreenThreshold,
                                        int workers = 1);

/// Stack (CT slice, probability map) into the 2-channel classifier input.
/// No rescaling. Throws on dimension mismatch.
FusedSample fuse_inputs(const SliceSample& ct_slice, const std::vector<float>& prob_map,
                        int map_w, int map_h, bool binarize = false);

/// Full cascade over one volume: normalize, screen every slice, fuse the
/// suspicious ones, classify, aggregate. With no suspicious slice the case
/// scores 0 and is labeled benign with no_findings set.
CaseVerdict run_cascade(const ModelCheckpoint& seg_ckpt, const ModelCheckpoint& cls_ckpt,
                        const CtVolume& volume, const std::string& series_uid,
                        const CascadeOptions& opts = {},
                        double window_lo = kDefaultWindowLo,
                        double window_hi = kDefaultWindowHi);

void save_verdicts_csv(const std::vector<CaseVerdict>& verdicts,
                       const std::filesystem::path& path);

void save_screen_csv(const std::vector<ScreenResult>& results,
                     const std::filesystem::path& path);

}  // namespace lnc
