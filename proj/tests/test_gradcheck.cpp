#include <doctest.h>

#include "lnc/model.hpp"
#include "lnc/train.hpp"
#include "support.hpp"

using namespace lnc;
using namespace lnc::testing;

// Quick finite-difference checks; the acceptance suite runs the full
// 32-parameter, 5-seed version at the pinned step and tolerance.

TEST_CASE("finite differences agree with backprop on the segmentation net") {
    nn::Model m = nn::build_segmentation_net(16, 16);
    nn::init_params(m, 101);
    FdContext ctx = make_fd_context(m, FdLoss::seg_bce, 2, 101);
    FdResult r = fd_gradcheck(ctx, 10, 1e-3, 101);
    CHECK(r.checked == 10);
    CHECK(r.max_rel_err <= 1e-4);
}

TEST_CASE("finite differences agree with backprop on the classifier net") {
    nn::Model m = nn::build_classifier_net(16, 16);
    nn::init_params(m, 202);
    FdContext ctx = make_fd_context(m, FdLoss::cls_ce, 3, 202);
    FdResult r = fd_gradcheck(ctx, 12, 1e-3, 202);
    CHECK(r.checked == 12);
    CHECK(r.max_rel_err <= 1e-4);
}

TEST_CASE("finite differences agree on the baseline architectures") {
    for (const char* id : {nn::kArchClsFc, nn::kArchClsEncDec}) {
        nn::Model m = nn::build_arch(id, 16, 16);
        nn::init_params(m, 303);
        FdContext ctx = make_fd_context(m, FdLoss::cls_ce, 2, 303);
        FdResult r = fd_gradcheck(ctx, 8, 1e-3, 303);
        CHECK(r.checked == 8);
        CHECK(r.max_rel_err <= 1e-4);
    }
}

TEST_CASE("training-mode gradients differentiate the dropout-masked loss") {
    // With the dropout rng cloned per evaluation, the masked loss is a
    // deterministic smooth function and FD must match the masked backward.
    nn::Model m = nn::build_classifier_net(16, 16);
    nn::init_params(m, 404);
    const auto refs_f = nn::param_refs(m);

    nn::ParamStore<double> store = nn::params_to<double>(m);
    std::vector<double> input(2 * 16 * 16);
    std::mt19937_64 rng(405);
    for (auto& v : input) v = uniform_range(rng, 0.1, 0.9);

    auto loss_at = [&](double delta, size_t layer, size_t idx) {
        store.w[layer][idx] += delta;
        nn::SampleCache<double> cache;
        std::mt19937_64 drop = substream(7, "dropout", 0);
        nn::forward_sample<double>(m, store.refs(), input.data(), nn::RunMode::training,
                                   &drop, cache);
        store.w[layer][idx] -= delta;
        return -std::log(std::clamp(cache.out.back()[1], 1e-7, 1.0 - 1e-7));
    };

    // Analytic gradient with the same fixed mask.
    nn::SampleCache<double> cache;
    std::mt19937_64 drop = substream(7, "dropout", 0);
    nn::forward_sample<double>(m, store.refs(), input.data(), nn::RunMode::training, &drop,
                               cache);
    const auto& y = cache.out.back();
    std::vector<double> g = {y[0] - 0.0, y[1] - 1.0};
    auto grads = nn::make_zero_grads<double>(m);
    nn::backward_sample<double>(m, store.refs(), input.data(), cache, g.data(), grads,
                                nullptr, static_cast<int>(m.layers.size()) - 2);

    // Probe a handful of fc1 weights (dense layers sit behind the dropout).
    size_t fc1 = 0;
    for (size_t i = 0; i < m.layers.size(); ++i)
        if (m.layers[i].kind == nn::LayerKind::dense) { fc1 = i; break; }
    std::mt19937_64 pick(406);
    for (int k = 0; k < 6; ++k) {
        size_t idx = uniform_below(pick, m.weights[fc1].size());
        const double h = 1e-5;
        double fd = (loss_at(h, fc1, idx) - loss_at(-h, fc1, idx)) / (2 * h);
        double an = grads.w[fc1][idx];
        double denom = std::max({std::abs(fd), std::abs(an), 1e-10});
        CHECK(std::abs(fd - an) / denom <= 1e-4);
    }
    (void)refs_f;
}
