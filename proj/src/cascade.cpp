#include "lnc/cascade.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "lnc/csv.hpp"

namespace lnc {

std::vector<ScreenResult> screen_slices(const ModelCheckpoint& seg_ckpt,
                                        const std::vector<SliceSample>& slices,
                                        double threshold, int workers) {
    if (seg_ckpt.arch_id != nn::kArchSegUnet)
        throw std::invalid_argument("screen_slices: checkpoint arch '" + seg_ckpt.arch_id +
                                    "' is not the segmentation net");
    std::vector<ScreenResult> out(slices.size());
    if (slices.empty()) return out;

    for (const auto& s : slices)
        if (s.width != seg_ckpt.in_w || s.height != seg_ckpt.in_h)
            throw std::invalid_argument("screen_slices: slice dims " + std::to_string(s.width) +
                                        "x" + std::to_string(s.height) +
                                        " do not match checkpoint input " +
                                        std::to_string(seg_ckpt.in_w) + "x" +
                                        std::to_string(seg_ckpt.in_h));

    nn::Model model = model_from_checkpoint(seg_ckpt);
    const auto refs = nn::param_refs(model);
    const int n = static_cast<int>(slices.size());

    auto run_one = [&](int i, nn::SampleCache<float>& cache) {
        nn::forward_sample<float>(model, refs, slices[i].image.data(),
                                  nn::RunMode::inference, nullptr, cache);
        ScreenResult& r = out[i];
        r.series_uid = slices[i].series_uid;
        r.slice_index = slices[i].slice_index;
        r.width = slices[i].width;
        r.height = slices[i].height;
        r.prob_map = cache.out.back();
        r.max_prob = *std::max_element(r.prob_map.begin(), r.prob_map.end());
        r.suspicious = is_suspicious(r.max_prob, threshold);
    };

    if (workers > 1) {
#pragma omp parallel num_threads(workers)
        {
            nn::SampleCache<float> cache;
#pragma omp for schedule(static)
            for (int i = 0; i < n; ++i) run_one(i, cache);
        }
    } else {
        nn::SampleCache<float> cache;
        for (int i = 0; i < n; ++i) run_one(i, cache);
    }
    return out;
}

FusedSample fuse_inputs(const SliceSample& ct_slice, const std::vector<float>& prob_map,
                        int map_w, int map_h, bool binarize) {
    if (ct_slice.width != map_w || ct_slice.height != map_h ||
        ct_slice.image.size() != prob_map.size())
        throw std::invalid_argument("fuse_inputs: slice and probability map dims differ");
    FusedSample f;
    f.width = ct_slice.width;
    f.height = ct_slice.height;
    f.series_uid = ct_slice.series_uid;
    f.slice_index = ct_slice.slice_index;
    if (ct_slice.case_label) f.label = *ct_slice.case_label;
    f.data.resize(2 * prob_map.size());
    std::copy(ct_slice.image.begin(), ct_slice.image.end(), f.data.begin());
    if (binarize) {
        for (size_t i = 0; i < prob_map.size(); ++i)
            f.data[prob_map.size() + i] = prob_map[i] >= 0.5f ? 1.f : 0.f;
    } else {
        std::copy(prob_map.begin(), prob_map.end(), f.data.begin() + prob_map.size());
    }
    return f;
}

CaseVerdict run_cascade(const ModelCheckpoint& seg_ckpt, const ModelCheckpoint& cls_ckpt,
                        const CtVolume& volume, const std::string& series_uid,
                        const CascadeOptions& opts, double window_lo, double window_hi) {
    if (volume.voxels.empty()) throw std::invalid_argument("run_cascade: empty volume");
    if (cls_ckpt.in_c != 2)
        throw std::invalid_argument("run_cascade: classifier checkpoint must take 2 channels");
    if (cls_ckpt.in_w != seg_ckpt.in_w || cls_ckpt.in_h != seg_ckpt.in_h)
        throw std::invalid_argument("run_cascade: checkpoint input dims disagree");

    NormalizedVolume norm = normalize_hu(volume, window_lo, window_hi);
    std::vector<SliceSample> slices = extract_all_slices(norm, std::nullopt, series_uid);

    std::vector<ScreenResult> screened =
        screen_slices(seg_ckpt, slices, opts.threshold, opts.workers);

    CaseVerdict verdict;
    verdict.series_uid = series_uid;

    std::vector<FusedSample> fused;
    std::vector<int> fused_slice_idx;
    for (size_t i = 0; i < screened.size(); ++i) {
        if (!screened[i].suspicious) continue;
        fused.push_back(fuse_inputs(slices[i], screened[i].prob_map, screened[i].width,
                                    screened[i].height, opts.binarize_prob_map));
        fused_slice_idx.push_back(screened[i].slice_index);
    }
    verdict.n_suspicious = static_cast<int>(fused.size());

    if (fused.empty()) {
        verdict.no_findings = true;
        verdict.case_score = 0.0;
        verdict.predicted_label = CaseLabel::benign;
        return verdict;
    }

    nn::Model cls = model_from_checkpoint(cls_ckpt);
    nn::Batch batch;
    batch.b = static_cast<int>(fused.size());
    batch.c = 2;
    batch.h = cls.in_h;
    batch.w = cls.in_w;
    batch.data.resize(static_cast<size_t>(batch.b) * batch.sample_size());
    for (int i = 0; i < batch.b; ++i)
        std::copy(fused[i].data.begin(), fused[i].data.end(), batch.sample(i));
    nn::Batch probs = nn::forward(cls, batch, nn::RunMode::inference, 0, 0, opts.workers);

    double sum = 0;
    int votes = 0;
    for (int i = 0; i < batch.b; ++i) {
        float p_malig = probs.sample(i)[1];
        verdict.slice_probs.emplace_back(fused_slice_idx[i], p_malig);
        sum += p_malig;
        if (p_malig >= 0.5f) ++votes;
    }
    if (opts.aggregation == CaseAggregation::mean_probability)
        verdict.case_score = sum / static_cast<double>(batch.b);
    else
        verdict.case_score = static_cast<double>(votes) / static_cast<double>(batch.b);
    verdict.predicted_label =
        verdict.case_score >= 0.5 ? CaseLabel::malignant : CaseLabel::benign;
    return verdict;
}

void save_verdicts_csv(const std::vector<CaseVerdict>& verdicts,
                       const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("verdicts: cannot write " + path.string());
    out << "seriesuid,case_score,label,n_suspicious_slices,no_findings\n";
    for (const auto& v : verdicts) {
        out << v.series_uid << ',' << format_double(v.case_score) << ','
            << to_string(v.predicted_label) << ',' << v.n_suspicious << ','
            << (v.no_findings ? 1 : 0) << '\n';
    }
}

void save_screen_csv(const std::vector<ScreenResult>& results,
                     const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("screen: cannot write " + path.string());
    out << "seriesuid,slice_index,max_prob,suspicious\n";
    for (const auto& r : results) {
        out << r.series_uid << ',' << r.slice_index << ','
            << format_double(static_cast<double>(r.max_prob)) << ',' << (r.suspicious ? 1 : 0)
            << '\n';
    }
}

}  // namespace lnc
