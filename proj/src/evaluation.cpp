#include "lnc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "lnc/csv.hpp"

namespace lnc {

ConfusionMatrix confusion(std::span<const CaseLabel> preds, std::span<const CaseLabel> truths,
                          CaseLabel positive) {
    if (preds.size() != truths.size())
        throw std::invalid_argument("confusion: length mismatch (" +
                                    std::to_string(preds.size()) + " vs " +
                                    std::to_string(truths.size()) + ")");
    ConfusionMatrix cm;
    for (size_t i = 0; i < preds.size(); ++i) {
        const bool p = preds[i] == positive;
        const bool t = truths[i] == positive;
        if (p && t) ++cm.tp;
        else if (p && !t) ++cm.fp;
        else if (!p && t) ++cm.fn;
        else ++cm.tn;
    }
    return cm;
}

ClassMetrics prf_accuracy(const ConfusionMatrix& cm) {
    ClassMetrics m;
    if (cm.tp + cm.fp > 0)
        m.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
    if (cm.tp + cm.fn > 0)
        m.recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
    if (m.precision && m.recall && (*m.precision + *m.recall) > 0)
        m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
    const int64_t total = cm.total();
    m.accuracy = total > 0 ? static_cast<double>(cm.tp + cm.tn) / static_cast<double>(total)
                           : 0.0;
    return m;
}

ClassMetrics prf_accuracy_macro(std::span<const CaseLabel> preds,
                                std::span<const CaseLabel> truths) {
    ClassMetrics a = prf_accuracy(confusion(preds, truths, CaseLabel::malignant));
    ClassMetrics b = prf_accuracy(confusion(preds, truths, CaseLabel::benign));
    ClassMetrics m;
    auto avg = [](std::optional<double> x, std::optional<double> y) -> std::optional<double> {
        if (x && y) return (*x + *y) / 2.0;
        return std::nullopt;
    };
    m.precision = avg(a.precision, b.precision);
    m.recall = avg(a.recall, b.recall);
    m.f1 = avg(a.f1, b.f1);
    m.accuracy = a.accuracy;
    return m;
}

namespace {

void require_both_classes(std::span<const uint8_t> truths, const char* what) {
    int64_t pos = 0;
    for (uint8_t t : truths) pos += t ? 1 : 0;
    if (pos == 0 || pos == static_cast<int64_t>(truths.size()))
        throw std::invalid_argument(std::string(what) +
                                    ": needs at least one positive and one negative");
}

}  // namespace

std::vector<RocPoint> roc_points(std::span<const double> scores,
                                 std::span<const uint8_t> truths) {
    if (scores.size() != truths.size())
        throw std::invalid_argument("roc_points: length mismatch");
    require_both_classes(truths, "roc_points");

    const size_t n = scores.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    int64_t total_pos = 0;
    for (uint8_t t : truths) total_pos += t ? 1 : 0;
    const int64_t total_neg = static_cast<int64_t>(n) - total_pos;

    std::vector<RocPoint> out;
    out.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    int64_t tp = 0, fp = 0;
    size_t i = 0;
    while (i < n) {
        const double s = scores[order[i]];
        // Consume the whole tie group at this threshold.
        while (i < n && scores[order[i]] == s) {
            if (truths[order[i]]) ++tp;
            else ++fp;
            ++i;
        }
        out.push_back({s, static_cast<double>(fp) / static_cast<double>(total_neg),
                       static_cast<double>(tp) / static_cast<double>(total_pos)});
    }
    return out;  // last point is (1,1) by construction
}

double auc(std::span<const double> scores, std::span<const uint8_t> truths) {
    std::vector<RocPoint> pts = roc_points(scores, truths);
    double area = 0;
    for (size_t i = 1; i < pts.size(); ++i)
        area += (pts[i].fpr - pts[i - 1].fpr) * (pts[i].tpr + pts[i - 1].tpr) / 2.0;
    return area;
}

PixelRoc pixel_roc(const std::vector<std::vector<float>>& prob_maps,
                   const std::vector<std::vector<uint8_t>>& masks) {
    if (prob_maps.size() != masks.size())
        throw std::invalid_argument("pixel_roc: map/mask count mismatch");
    size_t total = 0;
    for (size_t i = 0; i < prob_maps.size(); ++i) {
        if (prob_maps[i].size() != masks[i].size())
            throw std::invalid_argument("pixel_roc: map/mask dims differ at index " +
                                        std::to_string(i));
        total += prob_maps[i].size();
    }
    std::vector<double> scores;
    std::vector<uint8_t> truths;
    scores.reserve(total);
    truths.reserve(total);
    for (size_t i = 0; i < prob_maps.size(); ++i) {
        for (size_t j = 0; j < prob_maps[i].size(); ++j) {
            scores.push_back(static_cast<double>(prob_maps[i][j]));
            truths.push_back(masks[i][j] ? 1 : 0);
        }
    }
    PixelRoc out;
    for (uint8_t t : truths) (t ? out.n_positive : out.n_negative)++;
    if (out.n_positive == 0)
        throw std::invalid_argument("pixel_roc: no positive pixel in the evaluation set");
    if (out.n_negative == 0)
        throw std::invalid_argument("pixel_roc: no negative pixel in the evaluation set");
    out.roc = roc_points(scores, truths);
    out.auc = auc(scores, truths);
    return out;
}

namespace {

std::string fmt_metric(const std::optional<double>& v) {
    if (!v) return "undefined";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", *v);
    return buf;
}

}  // namespace

std::string ComparisonReport::to_text_table() const {
    std::ostringstream os;
    os << "Network                Precision  Recall     F1         Accuracy   AUC\n";
    for (const auto& r : rows) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-22s %-10s %-10s %-10s %-10s %-10s\n",
                      r.network.c_str(), fmt_metric(r.metrics.precision).c_str(),
                      fmt_metric(r.metrics.recall).c_str(), fmt_metric(r.metrics.f1).c_str(),
                      fmt_metric(r.metrics.accuracy).c_str(), fmt_metric(r.auc).c_str());
        os << line;
    }
    return os.str();
}

void ComparisonReport::save_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("report: cannot write " + path.string());
    out << "network,precision,recall,f1,accuracy,auc,tp,fp,fn,tn\n";
    auto cell = [](const std::optional<double>& v) {
        return v ? format_double(*v) : std::string("undefined");
    };
    for (const auto& r : rows) {
        out << r.network << ',' << cell(r.metrics.precision) << ',' << cell(r.metrics.recall)
            << ',' << cell(r.metrics.f1) << ',' << format_double(r.metrics.accuracy) << ','
            << cell(r.auc) << ',' << r.cm.tp << ',' << r.cm.fp << ',' << r.cm.fn << ','
            << r.cm.tn << '\n';
    }
}

ComparisonReport compare_networks(const std::vector<EvalReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("compare_networks: no reports");
    for (const auto& r : reports) {
        if (r.split_id != reports.front().split_id)
            throw std::invalid_argument(
                "compare_networks: refusing to compare across splits ('" + r.split_id +
                "' vs '" + reports.front().split_id + "')");
    }
    ComparisonReport out;
    out.rows = reports;
    return out;
}

void save_roc_csv(const std::vector<RocPoint>& roc, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("roc: cannot write " + path.string());
    out << "threshold,fpr,tpr\n";
    for (const auto& p : roc) {
        if (std::isinf(p.threshold)) out << "inf";
        else out << format_double(p.threshold);
        out << ',' << format_double(p.fpr) << ',' << format_double(p.tpr) << '\n';
    }
}

}  // namespace lnc
