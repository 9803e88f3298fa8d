#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lnc/annotations.hpp"
#include "lnc/cascade.hpp"
#include "lnc/evaluation.hpp"
#include "lnc/train.hpp"
#include "lnc/volume.hpp"

namespace lnc {

/// A dataset directory: one volume per case plus the annotation table and an
/// optional labels table. Cases are sorted by uid so splits are stable.
struct DatasetIndex {
    struct Entry {
        std::string uid;
        std::filesystem::path volume;
        std::optional<CaseLabel> label;
        std::vector<NoduleAnnotation> findings;
    };
    std::filesystem::path dir;
    std::vector<Entry> cases;
};

/// Scan `dir` for case volumes (*.mhd, ignoring *_truth/_mask companions) and
/// join them with annotations.csv and labels.csv (when present).
DatasetIndex load_dataset(const std::filesystem::path& dir);

struct PreprocOptions {
    double window_lo = kDefaultWindowLo;
    double window_hi = kDefaultWindowHi;
    int pad = 5;
    RasterizeOptions raster;
};

/// Slice/mask samples for the given cases: rasterize the reference masks from
/// the annotations, apply the +/-pad slice policy, extract.
std::vector<SliceSample> seg_slices_for_cases(const DatasetIndex& data,
                                              const std::vector<size_t>& case_indices,
                                              const PreprocOptions& pre);

struct SegRun {
    ModelCheckpoint ckpt;
    TrainHistory history;
    SplitIndices split;
};

/// Split at case level, assemble slices, train the U-Net.
SegRun run_seg_training(const DatasetIndex& data, const SplitConfig& split_cfg,
                        const TrainConfig& tcfg, const PreprocOptions& pre);

struct ClsAssemblyOptions {
    double threshold = kDefaultScreenThreshold;
    bool binarize = false;
    double window_lo = kDefaultWindowLo;
    double window_hi = kDefaultWindowHi;
    int workers = 1;
};

/// Screen every slice of the given labeled cases and fuse the suspicious
/// ones into classifier samples. Cases without labels are rejected.
std::vector<FusedSample> assemble_fused_samples(const DatasetIndex& data,
                                                const ModelCheckpoint& seg_ckpt,
                                                const std::vector<size_t>& case_indices,
                                                const ClsAssemblyOptions& opts);

struct ClsRun {
    ModelCheckpoint ckpt;
    TrainHistory history;
    SplitIndices split;
};

/// Split at case level (classifier fractions), assemble fused data via the
/// frozen screening checkpoint, train the requested classifier arch.
ClsRun run_cls_training(const DatasetIndex& data, const ModelCheckpoint& seg_ckpt,
                        const std::string& arch_id, const SplitConfig& split_cfg,
                        const TrainConfig& tcfg, const ClsAssemblyOptions& opts);

struct CaseEval {
    std::vector<CaseVerdict> verdicts;  // ordered by case uid
    std::vector<CaseLabel> truths;
    EvalReport report;
};

/// Cascade every listed case and score the predicted labels against the
/// labels table. `split_id` stamps the report for comparison guards.
CaseEval evaluate_cases(const DatasetIndex& data, const ModelCheckpoint& seg_ckpt,
                        const ModelCheckpoint& cls_ckpt, const std::vector<size_t>& case_indices,
                        const CascadeOptions& opts, double window_lo, double window_hi,
                        const std::string& network_name, const std::string& split_id);

struct PixelEval {
    PixelRoc roc;
    int64_t n_slices = 0;
};

/// Pixel-level segmentation ROC over the +/-pad slices of the given cases,
/// scored against the rasterized reference masks.
PixelEval evaluate_pixels(const DatasetIndex& data, const ModelCheckpoint& seg_ckpt,
                          const std::vector<size_t>& case_indices, const PreprocOptions& pre,
                          int workers);

/// Provenance stamp for a split: digest of the case uids, fractions and seed.
std::string make_split_id(const DatasetIndex& data, const SplitConfig& cfg);

}  // namespace lnc
