#include "lnc/pipeline.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <stdexcept>

#include "lnc/csv.hpp"
#include "lnc/digest.hpp"

namespace lnc {

DatasetIndex load_dataset(const std::filesystem::path& dir) {
    DatasetIndex index;
    index.dir = dir;
    if (!std::filesystem::is_directory(dir))
        throw std::runtime_error("dataset: not a directory: " + dir.string());

    std::map<std::string, DatasetIndex::Entry> by_uid;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".mhd") continue;
        std::string stem = e.path().stem().string();
        if (stem.ends_with("_truth") || stem.ends_with("_mask")) continue;
        DatasetIndex::Entry entry;
        entry.uid = stem;
        entry.volume = e.path();
        by_uid.emplace(stem, std::move(entry));
    }
    if (by_uid.empty()) throw std::runtime_error("dataset: no volumes found in " + dir.string());

    const auto ann_path = dir / "annotations.csv";
    if (std::filesystem::exists(ann_path)) {
        for (auto& a : parse_annotations(ann_path)) {
            auto it = by_uid.find(a.series_uid);
            if (it != by_uid.end()) it->second.findings.push_back(std::move(a));
        }
    }
    const auto labels_path = dir / "labels.csv";
    if (std::filesystem::exists(labels_path)) {
        CsvTable t = read_csv(labels_path);
        size_t c_uid = t.col("seriesuid");
        size_t c_label = t.col("label");
        for (const auto& row : t.rows) {
            auto it = by_uid.find(row[c_uid]);
            if (it != by_uid.end()) it->second.label = case_label_from_string(row[c_label]);
        }
    }

    for (auto& [uid, entry] : by_uid) index.cases.push_back(std::move(entry));
    return index;
}

std::vector<SliceSample> seg_slices_for_cases(const DatasetIndex& data,
                                              const std::vector<size_t>& case_indices,
                                              const PreprocOptions& pre) {
    std::vector<SliceSample> out;
    for (size_t ci : case_indices) {
        const auto& entry = data.cases.at(ci);
        CtVolume vol = load_volume(entry.volume);
        NormalizedVolume norm = normalize_hu(vol, pre.window_lo, pre.window_hi);
        MaskVolume mask = rasterize_mask(vol, entry.findings, pre.raster);
        std::vector<int> indices = select_slices(mask, pre.pad);
        auto samples = extract_slice_samples(norm, mask, indices, entry.label, entry.uid);
        out.insert(out.end(), std::make_move_iterator(samples.begin()),
                   std::make_move_iterator(samples.end()));
    }
    return out;
}

SegRun run_seg_training(const DatasetIndex& data, const SplitConfig& split_cfg,
                        const TrainConfig& tcfg, const PreprocOptions& pre) {
    SegRun run;
    run.split = split_dataset(data.cases.size(), split_cfg);

    SegTrainData td;
    td.train = seg_slices_for_cases(data, run.split.train, pre);
    td.val = seg_slices_for_cases(data, run.split.val, pre);
    if (td.train.empty())
        throw std::runtime_error("train-seg: no training slices (empty masks everywhere?)");

    nn::Model model = nn::build_segmentation_net(td.train.front().height,
                                                 td.train.front().width);
    nn::init_params(model, tcfg.seed);
    auto [ckpt, history] = train_segmentation(td, model, tcfg);
    run.ckpt = std::move(ckpt);
    run.history = std::move(history);
    return run;
}

std::vector<FusedSample> assemble_fused_samples(const DatasetIndex& data,
                                                const ModelCheckpoint& seg_ckpt,
                                                const std::vector<size_t>& case_indices,
                                                const ClsAssemblyOptions& opts) {
    std::vector<FusedSample> out;
    for (size_t ci : case_indices) {
        const auto& entry = data.cases.at(ci);
        if (!entry.label)
            throw std::runtime_error("classifier data: case '" + entry.uid + "' has no label");
        CtVolume vol = load_volume(entry.volume);
        NormalizedVolume norm = normalize_hu(vol, opts.window_lo, opts.window_hi);
        std::vector<SliceSample> slices = extract_all_slices(norm, entry.label, entry.uid);
        std::vector<ScreenResult> screened =
            screen_slices(seg_ckpt, slices, opts.threshold, opts.workers);
        for (size_t i = 0; i < screened.size(); ++i) {
            if (!screened[i].suspicious) continue;  // non-suspicious never reach the classifier
            out.push_back(fuse_inputs(slices[i], screened[i].prob_map, screened[i].width,
                                      screened[i].height, opts.binarize));
        }
    }
    return out;
}

ClsRun run_cls_training(const DatasetIndex& data, const ModelCheckpoint& seg_ckpt,
                        const std::string& arch_id, const SplitConfig& split_cfg,
                        const TrainConfig& tcfg, const ClsAssemblyOptions& opts) {
    ClsRun run;
    run.split = split_dataset(data.cases.size(), split_cfg);

    ClsTrainData td;
    td.train = assemble_fused_samples(data, seg_ckpt, run.split.train, opts);
    td.val = assemble_fused_samples(data, seg_ckpt, run.split.val, opts);
    if (td.train.empty())
        throw std::runtime_error("train-cls: no suspicious slices in the training split");

    nn::Model model = nn::build_arch(arch_id, seg_ckpt.in_h, seg_ckpt.in_w);
    if (model.in_c != 2)
        throw std::runtime_error("train-cls: arch '" + arch_id + "' does not take fused input");
    nn::init_params(model, tcfg.seed);
    auto [ckpt, history] = train_classifier(td, seg_ckpt, model, tcfg);
    run.ckpt = std::move(ckpt);
    run.history = std::move(history);
    return run;
}

CaseEval evaluate_cases(const DatasetIndex& data, const ModelCheckpoint& seg_ckpt,
                        const ModelCheckpoint& cls_ckpt, const std::vector<size_t>& case_indices,
                        const CascadeOptions& opts, double window_lo, double window_hi,
                        const std::string& network_name, const std::string& split_id) {
    CaseEval eval;
    for (size_t ci : case_indices) {
        const auto& entry = data.cases.at(ci);
        if (!entry.label)
            throw std::runtime_error("eval: case '" + entry.uid + "' has no label");
        CtVolume vol = load_volume(entry.volume);
        eval.verdicts.push_back(
            run_cascade(seg_ckpt, cls_ckpt, vol, entry.uid, opts, window_lo, window_hi));
        eval.truths.push_back(*entry.label);
    }

    std::vector<CaseLabel> preds;
    std::vector<double> scores;
    preds.reserve(eval.verdicts.size());
    for (const auto& v : eval.verdicts) {
        preds.push_back(v.predicted_label);
        scores.push_back(v.case_score);
    }

    eval.report.network = network_name;
    eval.report.split_id = split_id;
    eval.report.cm = confusion(preds, eval.truths, CaseLabel::malignant);
    eval.report.metrics = prf_accuracy(eval.report.cm);

    std::vector<uint8_t> truth_bits;
    truth_bits.reserve(eval.truths.size());
    int64_t pos = 0;
    for (CaseLabel t : eval.truths) {
        truth_bits.push_back(t == CaseLabel::malignant ? 1 : 0);
        pos += truth_bits.back();
    }
    if (pos > 0 && pos < static_cast<int64_t>(truth_bits.size())) {
        eval.report.roc = roc_points(scores, truth_bits);
        eval.report.auc = auc(scores, truth_bits);
    }
    return eval;
}

PixelEval evaluate_pixels(const DatasetIndex& data, const ModelCheckpoint& seg_ckpt,
                          const std::vector<size_t>& case_indices, const PreprocOptions& pre,
                          int workers) {
    std::vector<std::vector<float>> prob_maps;
    std::vector<std::vector<uint8_t>> masks;
    for (size_t ci : case_indices) {
        const auto& entry = data.cases.at(ci);
        CtVolume vol = load_volume(entry.volume);
        NormalizedVolume norm = normalize_hu(vol, pre.window_lo, pre.window_hi);
        MaskVolume mask = rasterize_mask(vol, entry.findings, pre.raster);
        std::vector<int> indices = select_slices(mask, pre.pad);
        auto slices = extract_slice_samples(norm, mask, indices, entry.label, entry.uid);
        auto screened = screen_slices(seg_ckpt, slices, kDefaultScreenThreshold, workers);
        for (size_t i = 0; i < slices.size(); ++i) {
            prob_maps.push_back(std::move(screened[i].prob_map));
            masks.push_back(std::move(*slices[i].mask));
        }
    }
    PixelEval out;
    out.n_slices = static_cast<int64_t>(prob_maps.size());
    out.roc = pixel_roc(prob_maps, masks);
    return out;
}

std::string make_split_id(const DatasetIndex& data, const SplitConfig& cfg) {
    std::ostringstream os;
    os << cfg.train << '|' << cfg.val << '|' << cfg.test << '|' << cfg.seed;
    for (const auto& c : data.cases) os << '|' << c.uid;
    return sha256_hex(os.str()).substr(0, 16);
}

}  // namespace lnc
