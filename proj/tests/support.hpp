#pragma once

// Test-only helpers and independent oracles. Everything here must stay
// independent of the library code paths it checks: losses are scalar loops,
// AUC is the O(n^2) pairwise statistic, masks are exhaustive voxel scans.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "lnc/annotations.hpp"
#include "lnc/model.hpp"
#include "lnc/rng.hpp"
#include "lnc/volume.hpp"

namespace lnc::testing {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("lnc_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

/// Scalar-loop BCE oracle (long double accumulation, clamp 1e-7).
inline double oracle_bce(const std::vector<float>& pred, const std::vector<float>& target) {
    long double acc = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        long double y = pred[i];
        if (y < 1e-7L) y = 1e-7L;
        if (y > 1.0L - 1e-7L) y = 1.0L - 1e-7L;
        long double t = target[i];
        acc += t * std::log(y) + (1.0L - t) * std::log(1.0L - y);
    }
    return static_cast<double>(-acc / static_cast<long double>(pred.size()));
}

/// Pairwise rank statistic: P(score+ > score-) + 0.5 P(tie).
inline double oracle_auc_pairwise(const std::vector<double>& scores,
                                  const std::vector<uint8_t>& truths) {
    long double wins = 0, ties = 0;
    int64_t n_pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!truths[i]) continue;
        for (size_t j = 0; j < scores.size(); ++j) {
            if (truths[j]) continue;
            ++n_pairs;
            if (scores[i] > scores[j]) wins += 1;
            else if (scores[i] == scores[j]) ties += 1;
        }
    }
    return static_cast<double>((wins + 0.5L * ties) / static_cast<long double>(n_pairs));
}

/// Exhaustive per-voxel world-distance scan (union of closed balls).
inline MaskVolume oracle_ball_mask(const CtVolume& vol,
                                   const std::vector<NoduleAnnotation>& findings) {
    MaskVolume mask;
    mask.dims = vol.dims;
    mask.origin = vol.origin;
    mask.spacing = vol.spacing;
    mask.voxels.assign(vol.voxel_count(), 0);
    for (int z = 0; z < vol.dims[2]; ++z)
        for (int y = 0; y < vol.dims[1]; ++y)
            for (int x = 0; x < vol.dims[0]; ++x) {
                Vec3 w = voxel_to_world(vol, {double(x), double(y), double(z)});
                for (const auto& f : findings) {
                    double dx = w[0] - f.center_world[0];
                    double dy = w[1] - f.center_world[1];
                    double dz = w[2] - f.center_world[2];
                    if (dx * dx + dy * dy + dz * dz <=
                        (f.diameter_mm / 2) * (f.diameter_mm / 2)) {
                        mask.voxels[mask.index(x, y, z)] = 1;
                        break;
                    }
                }
            }
    return mask;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check.
//
// Central differences are only valid where the loss is differentiable on
// [theta-h, theta+h]. Probes whose +/-h evaluations cross a relu sign change,
// a maxpool argmax flip, or a loss-clamp boundary are detected by comparing
// activation signatures and replaced with the next candidate parameter.
// ---------------------------------------------------------------------------

enum class FdLoss { seg_bce, cls_ce };

struct FdResult {
    double max_rel_err = 0;
    int checked = 0;
    int resampled = 0;
};

struct FdSignature {
    std::vector<std::vector<uint8_t>> bits;  // per sample: relu signs, clamp flags
    std::vector<std::vector<int32_t>> argmax;
    bool operator==(const FdSignature&) const = default;
};

struct FdContext {
    const nn::Model* model = nullptr;
    nn::ParamStore<double> store;
    std::vector<std::vector<double>> inputs;   // per sample
    std::vector<std::vector<double>> targets;  // seg: per-pixel; cls: one-hot(2)
    FdLoss kind = FdLoss::seg_bce;
};

inline double fd_loss_one(const FdContext& ctx, size_t sample,
                          nn::SampleCache<double>& cache, FdSignature* sig) {
    const auto refs = ctx.store.refs();
    nn::forward_sample<double>(*ctx.model, refs, ctx.inputs[sample].data(),
                               nn::RunMode::inference, nullptr, cache);
    const auto& y = cache.out.back();
    if (sig) {
        std::vector<uint8_t> bits;
        for (size_t li = 0; li < ctx.model->layers.size(); ++li) {
            if (ctx.model->layers[li].kind == nn::LayerKind::relu)
                for (double v : cache.out[li]) bits.push_back(v > 0 ? 1 : 0);
            if (ctx.model->layers[li].kind == nn::LayerKind::maxpool2x2)
                sig->argmax.push_back(cache.argmax[li]);
        }
        for (double v : y) bits.push_back(v < 1e-7 || v > 1.0 - 1e-7 ? 1 : 0);
        sig->bits.push_back(std::move(bits));
    }
    const auto& t = ctx.targets[sample];
    long double acc = 0;
    if (ctx.kind == FdLoss::seg_bce) {
        for (size_t i = 0; i < y.size(); ++i) {
            long double p = std::clamp(y[i], 1e-7, 1.0 - 1e-7);
            acc += t[i] * std::log(p) + (1.0L - t[i]) * std::log(1.0L - p);
        }
        return static_cast<double>(-acc / static_cast<long double>(y.size()));
    }
    size_t truth = t[1] > 0.5 ? 1 : 0;
    long double p = std::clamp(y[truth], 1e-7, 1.0 - 1e-7);
    return static_cast<double>(-std::log(p));
}

inline double fd_loss_total(const FdContext& ctx, FdSignature* sig) {
    nn::SampleCache<double> cache;
    long double acc = 0;
    for (size_t s = 0; s < ctx.inputs.size(); ++s)
        acc += fd_loss_one(ctx, s, cache, sig);
    return static_cast<double>(acc / static_cast<long double>(ctx.inputs.size()));
}

/// Analytic gradients of the same loss, computed in double via the fused
/// logits gradient (matches the training engine's differentiation route).
inline nn::GradSet<double> fd_analytic_grads(const FdContext& ctx) {
    const nn::Model& m = *ctx.model;
    nn::GradSet<double> grads = nn::make_zero_grads<double>(m);
    const auto refs = ctx.store.refs();
    const int logits_layer = static_cast<int>(m.layers.size()) - 2;
    const double inv_b = 1.0 / static_cast<double>(ctx.inputs.size());
    nn::SampleCache<double> cache;
    for (size_t s = 0; s < ctx.inputs.size(); ++s) {
        nn::forward_sample<double>(m, refs, ctx.inputs[s].data(), nn::RunMode::inference,
                                   nullptr, cache);
        const auto& y = cache.out.back();
        std::vector<double> g(y.size());
        if (ctx.kind == FdLoss::seg_bce) {
            const double inv_n = 1.0 / static_cast<double>(y.size());
            for (size_t i = 0; i < y.size(); ++i)
                g[i] = (y[i] - ctx.targets[s][i]) * inv_n * inv_b;
        } else {
            for (size_t i = 0; i < y.size(); ++i)
                g[i] = (y[i] - ctx.targets[s][i]) * inv_b;
        }
        nn::backward_sample<double>(m, refs, ctx.inputs[s].data(), cache, g.data(), grads,
                                    nullptr, logits_layer);
    }
    return grads;
}

inline FdResult fd_gradcheck(FdContext& ctx, int n_params, double step, uint64_t pick_seed) {
    const nn::Model& m = *ctx.model;
    nn::GradSet<double> analytic = fd_analytic_grads(ctx);

    // Flat index space over every parameter element.
    struct Slot {
        size_t layer;
        bool is_bias;
        size_t index;
    };
    int64_t total = 0;
    for (size_t i = 0; i < m.weights.size(); ++i)
        total += static_cast<int64_t>(m.weights[i].size() + m.biases[i].size());

    auto pick_slot = [&](uint64_t flat) -> Slot {
        for (size_t i = 0; i < m.weights.size(); ++i) {
            if (flat < m.weights[i].size()) return {i, false, static_cast<size_t>(flat)};
            flat -= m.weights[i].size();
            if (flat < m.biases[i].size()) return {i, true, static_cast<size_t>(flat)};
            flat -= m.biases[i].size();
        }
        return {0, false, 0};
    };

    std::mt19937_64 rng = substream(pick_seed, "fd-pick");
    FdResult res;
    int attempts = 0;
    while (res.checked < n_params && attempts < n_params * 20) {
        ++attempts;
        Slot slot = pick_slot(uniform_below(rng, static_cast<uint64_t>(total)));
        auto& vec = slot.is_bias ? ctx.store.b[slot.layer] : ctx.store.w[slot.layer];
        const double saved = vec[slot.index];

        FdSignature sig_plus, sig_minus;
        vec[slot.index] = saved + step;
        double lp = fd_loss_total(ctx, &sig_plus);
        vec[slot.index] = saved - step;
        double lm = fd_loss_total(ctx, &sig_minus);
        vec[slot.index] = saved;

        if (!(sig_plus == sig_minus)) {
            ++res.resampled;  // non-differentiable within the FD window
            continue;
        }
        const double fd = (lp - lm) / (2 * step);
        const double an = slot.is_bias ? analytic.b[slot.layer][slot.index]
                                       : analytic.w[slot.layer][slot.index];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-12});
        double rel = std::abs(fd - an) / denom;
        if (std::abs(fd) < 1e-10 && std::abs(an) < 1e-10) rel = 0;
        res.max_rel_err = std::max(res.max_rel_err, rel);
        ++res.checked;
    }
    return res;
}

/// Random smooth inputs in (0.05, 0.95) plus matched targets for a model.
inline FdContext make_fd_context(const nn::Model& m, FdLoss kind, int batch, uint64_t seed) {
    FdContext ctx;
    ctx.model = &m;
    ctx.store = nn::params_to<double>(m);
    ctx.kind = kind;
    std::mt19937_64 rng = substream(seed, "fd-data");
    const int64_t in_n = m.input_shape().numel();
    const int64_t out_n = m.output_shape().numel();
    for (int s = 0; s < batch; ++s) {
        std::vector<double> x(static_cast<size_t>(in_n));
        for (auto& v : x) v = uniform_range(rng, 0.05, 0.95);
        ctx.inputs.push_back(std::move(x));
        std::vector<double> t(static_cast<size_t>(out_n), 0.0);
        if (kind == FdLoss::seg_bce) {
            for (auto& v : t) v = uniform01(rng) < 0.3 ? 1.0 : 0.0;
        } else {
            t[uniform_below(rng, 2)] = 1.0;
        }
        ctx.targets.push_back(std::move(t));
    }
    return ctx;
}

}  // namespace lnc::testing
