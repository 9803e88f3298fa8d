#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lnc/annotations.hpp"

namespace lnc {

struct ConfusionMatrix {
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    int64_t total() const { return tp + fp + fn + tn; }
};

/// Precision/recall/F1/accuracy with explicit undefined sentinels: a 0/0
/// ratio is reported as nullopt, never silently as zero.
struct ClassMetrics {
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
    double accuracy = 0;
};

struct RocPoint {
    double threshold = 0;  // predict positive when score >= threshold
    double fpr = 0;
    double tpr = 0;
};

struct EvalReport {
    std::string network;
    std::string split_id;  // provenance guard for cross-network comparison
    ConfusionMatrix cm;
    ClassMetrics metrics;
    std::vector<RocPoint> roc;
    std::optional<double> auc;
};

/// Standard confusion counts; `positive` marks which label is the positive
/// class (malignant by default at call sites). Throws on length mismatch.
ConfusionMatrix confusion(std::span<const CaseLabel> preds, std::span<const CaseLabel> truths,
                          CaseLabel positive = CaseLabel::malignant);

ClassMetrics prf_accuracy(const ConfusionMatrix& cm);

/// Macro average of the per-class metric views (positive = malignant and
/// positive = benign). Undefined components propagate as nullopt.
ClassMetrics prf_accuracy_macro(std::span<const CaseLabel> preds,
                                std::span<const CaseLabel> truths);

/// Threshold sweep over the distinct scores, descending, ties grouped,
/// with (0,0) and (1,1) endpoints. Requires both classes present.
std::vector<RocPoint> roc_points(std::span<const double> scores, std::span<const uint8_t> truths);

/// Trapezoidal area under roc_points; equals the pairwise rank statistic
/// P(score+ > score-) + 0.5 P(tie).
double auc(std::span<const double> scores, std::span<const uint8_t> truths);

struct PixelRoc {
    std::vector<RocPoint> roc;
    double auc = 0;
    int64_t n_positive = 0;
    int64_t n_negative = 0;
};

/// ROC/AUC over the flattened pixel population of paired probability maps and
/// masks. Throws if no positive (or no negative) pixel exists in the set.
PixelRoc pixel_roc(const std::vector<std::vector<float>>& prob_maps,
                   const std::vector<std::vector<uint8_t>>& masks);

/// One row per network, Table-style. Refuses to compare reports evaluated on
/// different splits (split_id mismatch).
struct ComparisonReport {
    std::vector<EvalReport> rows;

    std::string to_text_table() const;
    void save_csv(const std::filesystem::path& path) const;
};

ComparisonReport compare_networks(const std::vector<EvalReport>& reports);

void save_roc_csv(const std::vector<RocPoint>& roc, const std::filesystem::path& path);

}  // namespace lnc
