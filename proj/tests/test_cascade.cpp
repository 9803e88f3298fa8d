#include <doctest.h>

#include <cmath>
#include <numeric>

#include "lnc/cascade.hpp"
#include "lnc/csv.hpp"
#include "lnc/phantom.hpp"
#include "support.hpp"

using namespace lnc;

namespace {

// Screening checkpoint whose probability map is constant: zero weights
// everywhere, head bias = logit(p).
ModelCheckpoint constant_seg_ckpt(int hw, double p) {
    nn::Model m = nn::build_segmentation_net(hw, hw);
    size_t head = m.layers.size() - 2;
    m.biases[head][0] = static_cast<float>(std::log(p / (1.0 - p)));
    return checkpoint_from_model(m, {});
}

// Classifier that always outputs the given softmax pair (via fc2 biases).
ModelCheckpoint constant_cls_ckpt(int hw, float benign_logit, float malignant_logit) {
    nn::Model m = nn::build_classifier_net(hw, hw);
    size_t fc2 = m.layers.size() - 2;
    m.biases[fc2][0] = benign_logit;
    m.biases[fc2][1] = malignant_logit;
    return checkpoint_from_model(m, {});
}

std::vector<SliceSample> flat_slices(int n, int hw, float value) {
    std::vector<SliceSample> out;
    for (int i = 0; i < n; ++i) {
        SliceSample s;
        s.width = hw;
        s.height = hw;
        s.series_uid = "case";
        s.slice_index = i;
        s.image.assign(static_cast<size_t>(hw) * hw, value);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

TEST_CASE("discriminator rule boundaries") {
    CHECK(is_suspicious(0.36, 0.35));
    CHECK_FALSE(is_suspicious(0.35, 0.35));  // strict >
    CHECK_FALSE(is_suspicious(0.0, 0.35));
    CHECK(is_suspicious(0.351, 0.35));
}

TEST_CASE("screen_slices") {
    const int hw = 16;

    SUBCASE("suspicious above the threshold, not at or below it") {
        auto slices = flat_slices(3, hw, 0.5f);
        // sigmoid(0) = 0.5 exactly in float: probe the boundary exactly.
        ModelCheckpoint half = constant_seg_ckpt(hw, 0.5);
        auto at_half = screen_slices(half, slices, 0.5);
        for (const auto& r : at_half) {
            CHECK(r.max_prob == 0.5f);
            CHECK_FALSE(r.suspicious);
        }
        auto below = screen_slices(half, slices, 0.49);
        for (const auto& r : below) CHECK(r.suspicious);

        ModelCheckpoint low = constant_seg_ckpt(hw, 0.2);
        for (const auto& r : screen_slices(low, slices, 0.35)) CHECK_FALSE(r.suspicious);
        ModelCheckpoint high = constant_seg_ckpt(hw, 0.36);
        for (const auto& r : screen_slices(high, slices, 0.35)) CHECK(r.suspicious);
    }
    SUBCASE("all-zero probability map is never suspicious") {
        ModelCheckpoint tiny = constant_seg_ckpt(hw, 1e-9);
        for (const auto& r : screen_slices(tiny, flat_slices(2, hw, 0.3f), 0.35)) {
            CHECK(r.max_prob < 1e-6f);
            CHECK_FALSE(r.suspicious);
        }
    }
    SUBCASE("max_prob equals the maximum of the probability map") {
        nn::Model m = nn::build_segmentation_net(hw, hw);
        nn::init_params(m, 3);
        ModelCheckpoint ckpt = checkpoint_from_model(m, {});
        auto slices = flat_slices(1, hw, 0.4f);
        std::mt19937_64 rng(4);
        for (auto& v : slices[0].image) v = static_cast<float>(uniform01(rng));
        auto res = screen_slices(ckpt, slices, 0.35);
        CHECK(res[0].max_prob ==
              *std::max_element(res[0].prob_map.begin(), res[0].prob_map.end()));
    }
    SUBCASE("monotone shrinkage of the suspicious set as the threshold rises") {
        nn::Model m = nn::build_segmentation_net(hw, hw);
        nn::init_params(m, 5);
        ModelCheckpoint ckpt = checkpoint_from_model(m, {});
        auto slices = flat_slices(12, hw, 0.f);
        std::mt19937_64 rng(6);
        for (auto& s : slices)
            for (auto& v : s.image) v = static_cast<float>(uniform01(rng));
        std::vector<double> thresholds;
        for (int i = 0; i < 20; ++i) thresholds.push_back(uniform01(rng));
        std::sort(thresholds.begin(), thresholds.end());
        std::vector<bool> prev(slices.size(), true);
        for (double t : thresholds) {
            auto res = screen_slices(ckpt, slices, t);
            for (size_t i = 0; i < res.size(); ++i) {
                if (res[i].suspicious) CHECK(prev[i]);  // set can only shrink
            }
            for (size_t i = 0; i < res.size(); ++i) prev[i] = res[i].suspicious;
        }
    }
    SUBCASE("non-seg checkpoints are rejected") {
        nn::Model cls = nn::build_classifier_net(hw, hw);
        ModelCheckpoint ckpt = checkpoint_from_model(cls, {});
        CHECK_THROWS_AS(screen_slices(ckpt, flat_slices(1, hw, 0.f), 0.35),
                        std::invalid_argument);
    }
    SUBCASE("slice dims must match the checkpoint") {
        ModelCheckpoint ckpt = constant_seg_ckpt(hw, 0.4);
        CHECK_THROWS_AS(screen_slices(ckpt, flat_slices(1, 32, 0.f), 0.35),
                        std::invalid_argument);
    }
}

TEST_CASE("fuse_inputs") {
    const int hw = 8;
    SliceSample ct = flat_slices(1, hw, 0.f)[0];
    std::mt19937_64 rng(7);
    for (auto& v : ct.image) v = static_cast<float>(uniform01(rng));
    std::vector<float> prob(static_cast<size_t>(hw) * hw);
    for (auto& v : prob) v = static_cast<float>(uniform01(rng));

    SUBCASE("zero probability map keeps channel 0 as the CT, channel 1 zero") {
        std::vector<float> zeros(prob.size(), 0.f);
        FusedSample f = fuse_inputs(ct, zeros, hw, hw);
        for (size_t i = 0; i < ct.image.size(); ++i) {
            CHECK(f.data[i] == ct.image[i]);
            CHECK(f.data[ct.image.size() + i] == 0.f);
        }
    }
    SUBCASE("fuse then unstack recovers both inputs bit-exactly") {
        FusedSample f = fuse_inputs(ct, prob, hw, hw);
        for (size_t i = 0; i < ct.image.size(); ++i) {
            CHECK(f.data[i] == ct.image[i]);
            CHECK(f.data[ct.image.size() + i] == prob[i]);
        }
    }
    SUBCASE("mean of the fused tensor is the mean of the channel means") {
        FusedSample f = fuse_inputs(ct, prob, hw, hw);
        double m_ct = std::accumulate(ct.image.begin(), ct.image.end(), 0.0) / ct.image.size();
        double m_p = std::accumulate(prob.begin(), prob.end(), 0.0) / prob.size();
        double m_f = std::accumulate(f.data.begin(), f.data.end(), 0.0) / f.data.size();
        CHECK(m_f == doctest::Approx((m_ct + m_p) / 2).epsilon(1e-6));
    }
    SUBCASE("binarize thresholds channel 1 at 0.5") {
        FusedSample f = fuse_inputs(ct, prob, hw, hw, true);
        for (size_t i = 0; i < prob.size(); ++i)
            CHECK(f.data[prob.size() + i] == (prob[i] >= 0.5f ? 1.f : 0.f));
    }
    SUBCASE("dimension mismatch is rejected") {
        std::vector<float> small(16, 0.f);
        CHECK_THROWS_AS(fuse_inputs(ct, small, 4, 4, false), std::invalid_argument);
    }
}

TEST_CASE("run_cascade") {
    const int hw = 32;
    PhantomSpec spec;
    spec.dims = {hw, hw, 12};
    spec.spacing = {1, 1, 3};
    spec.benign_diameter_mm[0] = 3;
    spec.benign_diameter_mm[1] = 5;
    spec.malignant_diameter_mm[0] = 6;
    spec.malignant_diameter_mm[1] = 10;
    spec.cases_per_class = 1;
    spec.seed = 55;
    CtVolume vol = generate_phantom_volume(spec, 1).volume;

    SUBCASE("no suspicious slice gives benign with the no_findings flag") {
        ModelCheckpoint seg = constant_seg_ckpt(hw, 0.01);
        ModelCheckpoint cls = constant_cls_ckpt(hw, 0.f, 0.f);
        CaseVerdict v = run_cascade(seg, cls, vol, "caseA");
        CHECK(v.no_findings);
        CHECK(v.case_score == 0.0);
        CHECK(v.predicted_label == CaseLabel::benign);
        CHECK(v.n_suspicious == 0);
        CHECK(v.slice_probs.empty());
    }
    SUBCASE("constant (0,1) classifier makes any suspicious volume malignant with score 1") {
        ModelCheckpoint seg = constant_seg_ckpt(hw, 0.9);
        ModelCheckpoint cls = constant_cls_ckpt(hw, -60.f, 60.f);
        CaseVerdict v = run_cascade(seg, cls, vol, "caseB");
        CHECK_FALSE(v.no_findings);
        CHECK(v.n_suspicious == 12);
        CHECK(v.case_score == 1.0);
        CHECK(v.predicted_label == CaseLabel::malignant);
    }
    SUBCASE("case score is the mean of the slice probabilities") {
        nn::Model seg_m = nn::build_segmentation_net(hw, hw);
        nn::init_params(seg_m, 71);
        nn::Model cls_m = nn::build_classifier_net(hw, hw);
        nn::init_params(cls_m, 72);
        ModelCheckpoint seg = checkpoint_from_model(seg_m, {});
        ModelCheckpoint cls = checkpoint_from_model(cls_m, {});
        CascadeOptions opts;
        opts.threshold = 0.2;  // random init spreads around 0.5, keep some slices
        CaseVerdict v = run_cascade(seg, cls, vol, "caseC", opts);
        if (!v.slice_probs.empty()) {
            double mean = 0;
            for (auto& [idx, p] : v.slice_probs) mean += p;
            mean /= static_cast<double>(v.slice_probs.size());
            CHECK(v.case_score == doctest::Approx(mean).epsilon(1e-9));
            CHECK((v.case_score >= 0.5) ==
                  (v.predicted_label == CaseLabel::malignant));
        }
    }
    SUBCASE("deterministic in inference mode") {
        nn::Model seg_m = nn::build_segmentation_net(hw, hw);
        nn::init_params(seg_m, 73);
        nn::Model cls_m = nn::build_classifier_net(hw, hw);
        nn::init_params(cls_m, 74);
        ModelCheckpoint seg = checkpoint_from_model(seg_m, {});
        ModelCheckpoint cls = checkpoint_from_model(cls_m, {});
        CascadeOptions opts;
        opts.threshold = 0.3;
        CaseVerdict a = run_cascade(seg, cls, vol, "caseD", opts);
        CaseVerdict b = run_cascade(seg, cls, vol, "caseD", opts);
        CHECK(a.case_score == b.case_score);
        CHECK(a.slice_probs == b.slice_probs);
        opts.workers = 4;
        CaseVerdict c = run_cascade(seg, cls, vol, "caseD", opts);
        CHECK(a.case_score == c.case_score);
    }
    SUBCASE("majority-vote aggregation counts slices at or above 0.5") {
        ModelCheckpoint seg = constant_seg_ckpt(hw, 0.9);
        ModelCheckpoint cls = constant_cls_ckpt(hw, 0.1f, -0.1f);  // p_malig < 0.5
        CascadeOptions opts;
        opts.aggregation = CaseAggregation::majority_vote;
        CaseVerdict v = run_cascade(seg, cls, vol, "caseE", opts);
        CHECK(v.case_score == 0.0);
        CHECK(v.predicted_label == CaseLabel::benign);
    }
    SUBCASE("empty volume is rejected") {
        CtVolume empty;
        ModelCheckpoint seg = constant_seg_ckpt(hw, 0.5);
        ModelCheckpoint cls = constant_cls_ckpt(hw, 0.f, 0.f);
        CHECK_THROWS_AS(run_cascade(seg, cls, empty, "x"), std::invalid_argument);
    }
    SUBCASE("checkpoint input-size mismatch is rejected") {
        ModelCheckpoint seg = constant_seg_ckpt(hw, 0.5);
        ModelCheckpoint cls = constant_cls_ckpt(64, 0.f, 0.f);
        CHECK_THROWS_AS(run_cascade(seg, cls, vol, "x"), std::invalid_argument);
    }
}

TEST_CASE("verdict and screen CSV emission") {
    lnc::testing::TempDir dir("cascade_csv");
    CaseVerdict v;
    v.series_uid = "c1";
    v.case_score = 0.75;
    v.predicted_label = CaseLabel::malignant;
    v.n_suspicious = 4;
    save_verdicts_csv({v}, dir.path / "verdicts.csv");
    CsvTable t = read_csv(dir.path / "verdicts.csv");
    CHECK(t.header == std::vector<std::string>{"seriesuid", "case_score", "label",
                                               "n_suspicious_slices", "no_findings"});
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0][0] == "c1");
    CHECK(t.rows[0][2] == "malignant");
    CHECK(t.rows[0][4] == "0");
}
