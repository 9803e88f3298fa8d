#include "lnc/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "lnc/csv.hpp"
#include "lnc/rng.hpp"

namespace lnc {

void SplitConfig::validate() const {
    if (train < 0 || val < 0 || test < 0)
        throw std::invalid_argument("split: fractions must be >= 0");
    if (std::abs(train + val + test - 1.0) > 1e-9)
        throw std::invalid_argument("split: fractions must sum to 1");
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (!(learning_rate > 0)) throw std::invalid_argument("train: learning_rate must be > 0");
    if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
    if (oversample_factor < 1)
        throw std::invalid_argument("train: oversample_factor must be >= 1");
    if (workers < 1) throw std::invalid_argument("train: workers must be >= 1");
}

void TrainHistory::save_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("history: cannot write " + path.string());
    out << "epoch,train_loss,val_loss,val_accuracy\n";
    for (const auto& e : epochs) {
        out << e.epoch << ',' << format_double(e.train_loss) << ','
            << format_double(e.val_loss) << ',';
        if (e.val_accuracy) out << format_double(*e.val_accuracy);
        out << '\n';
    }
}

namespace {

template <typename T>
double bce_impl(std::span<const T> pred, std::span<const T> target) {
    if (pred.size() != target.size())
        throw std::invalid_argument("bce_loss: shape mismatch (" + std::to_string(pred.size()) +
                                    " vs " + std::to_string(target.size()) + ")");
    if (pred.empty()) throw std::invalid_argument("bce_loss: empty input");
    double acc = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double y = std::clamp(static_cast<double>(pred[i]), kBceEps, 1.0 - kBceEps);
        double t = static_cast<double>(target[i]);
        acc += t * std::log(y) + (1.0 - t) * std::log1p(-y);
    }
    return -acc / static_cast<double>(pred.size());
}

template <typename T>
void bce_grad_impl(std::span<const T> pred, std::span<const T> target, std::span<T> grad) {
    if (pred.size() != target.size() || pred.size() != grad.size())
        throw std::invalid_argument("bce_loss_grad: shape mismatch");
    const double n = static_cast<double>(pred.size());
    for (size_t i = 0; i < pred.size(); ++i) {
        double y = static_cast<double>(pred[i]);
        if (y < kBceEps || y > 1.0 - kBceEps) {
            grad[i] = T(0);  // clamped region: loss is locally constant in pred
            continue;
        }
        double t = static_cast<double>(target[i]);
        grad[i] = static_cast<T>((y - t) / (y * (1.0 - y)) / n);
    }
}

}  // namespace

double bce_loss(std::span<const float> pred, std::span<const float> target) {
    return bce_impl(pred, target);
}
double bce_loss(std::span<const double> pred, std::span<const double> target) {
    return bce_impl(pred, target);
}
void bce_loss_grad(std::span<const float> pred, std::span<const float> target,
                   std::span<float> grad) {
    bce_grad_impl(pred, target, grad);
}
void bce_loss_grad(std::span<const double> pred, std::span<const double> target,
                   std::span<double> grad) {
    bce_grad_impl(pred, target, grad);
}

SplitIndices split_dataset(size_t n, const SplitConfig& cfg) {
    cfg.validate();
    if (n == 0) throw std::invalid_argument("split: empty input");
    const int64_t n_val = std::llround(cfg.val * static_cast<double>(n));
    const int64_t n_test = std::llround(cfg.test * static_cast<double>(n));
    const int64_t n_train = static_cast<int64_t>(n) - n_val - n_test;
    if (n_train < 0)
        throw std::runtime_error("split: rounded val+test exceed the dataset size");

    std::vector<size_t> perm(n);
    std::iota(perm.begin(), perm.end(), size_t{0});
    std::mt19937_64 rng = substream(cfg.seed, "split");
    shuffle(perm, rng);

    SplitIndices out;
    out.train.assign(perm.begin(), perm.begin() + n_train);
    out.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
    out.test.assign(perm.begin() + n_train + n_val, perm.end());
    return out;
}

std::vector<size_t> oversample_benign(const std::vector<CaseLabel>& labels, int factor,
                                      uint64_t seed) {
    if (factor < 1) throw std::invalid_argument("oversample: factor must be >= 1");
    std::vector<size_t> out;
    out.reserve(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) {
        int copies = labels[i] == CaseLabel::benign ? factor : 1;
        for (int c = 0; c < copies; ++c) out.push_back(i);
    }
    std::mt19937_64 rng = substream(seed, "oversample");
    shuffle(out, rng);
    return out;
}

void AdamOptimizer::step(nn::Model& m, const nn::GradSet<float>& grads) {
    if (mw_.empty()) {
        auto zeros_like = [](const std::vector<std::vector<float>>& src) {
            std::vector<std::vector<float>> z;
            z.reserve(src.size());
            for (const auto& v : src) z.emplace_back(v.size(), 0.f);
            return z;
        };
        mw_ = zeros_like(m.weights);
        vw_ = zeros_like(m.weights);
        mb_ = zeros_like(m.biases);
        vb_ = zeros_like(m.biases);
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto update = [&](std::vector<float>& p, const std::vector<float>& g,
                      std::vector<float>& mom, std::vector<float>& vel) {
        for (size_t j = 0; j < p.size(); ++j) {
            double gj = g[j];
            double mj = beta1_ * mom[j] + (1.0 - beta1_) * gj;
            double vj = beta2_ * vel[j] + (1.0 - beta2_) * gj * gj;
            mom[j] = static_cast<float>(mj);
            vel[j] = static_cast<float>(vj);
            p[j] -= static_cast<float>(lr_ * (mj / bc1) / (std::sqrt(vj / bc2) + eps_));
        }
    };
    for (size_t i = 0; i < m.weights.size(); ++i) {
        if (m.weights[i].empty()) continue;
        update(m.weights[i], grads.w[i], mw_[i], vw_[i]);
        update(m.biases[i], grads.b[i], mb_[i], vb_[i]);
    }
}

namespace {

// One optimization step: per-sample forward/backward with the batch-mean
// gradient, accumulated into per-worker buckets that are reduced in fixed
// order. `emit_grad` fills the dL/d(output) buffer for one sample and
// returns that sample's loss.
template <typename EmitGrad>
double run_step(nn::Model& model, const std::vector<const float*>& inputs,
                const EmitGrad& emit_grad, const TrainConfig& cfg, uint64_t global_step,
                AdamOptimizer& opt, int grad_layer) {
    const int b = static_cast<int>(inputs.size());
    const int workers = std::min(cfg.workers, b);
    const int64_t out_n = model.shapes[grad_layer].numel();
    const auto refs = nn::param_refs(model);

    std::vector<nn::GradSet<float>> buckets;
    buckets.reserve(workers);
    for (int t = 0; t < workers; ++t) buckets.push_back(nn::make_zero_grads<float>(model));
    std::vector<double> losses(b, 0.0);

    auto work = [&](int tid) {
        nn::SampleCache<float> cache;
        std::vector<float> grad_out(static_cast<size_t>(out_n));
        const int chunk = (b + workers - 1) / workers;
        const int begin = tid * chunk;
        const int end = std::min(b, begin + chunk);
        for (int i = begin; i < end; ++i) {
            std::mt19937_64 drop_rng =
                substream(cfg.seed, "dropout",
                          global_step * static_cast<uint64_t>(cfg.batch_size) +
                              static_cast<uint64_t>(i));
            nn::forward_sample<float>(model, refs, inputs[i], nn::RunMode::training,
                                      &drop_rng, cache);
            losses[i] = emit_grad(i, cache.out.back(), grad_out);
            const float scale = 1.f / static_cast<float>(b);
            for (auto& g : grad_out) g *= scale;
            nn::backward_sample<float>(model, refs, inputs[i], cache, grad_out.data(),
                                       buckets[tid], nullptr, grad_layer);
        }
    };

    if (workers > 1) {
#pragma omp parallel num_threads(workers)
        {
#pragma omp for schedule(static)
            for (int t = 0; t < workers; ++t) work(t);
        }
    } else {
        work(0);
    }

    for (int t = 1; t < workers; ++t) {
        for (size_t i = 0; i < buckets[0].w.size(); ++i) {
            for (size_t j = 0; j < buckets[0].w[i].size(); ++j)
                buckets[0].w[i][j] += buckets[t].w[i][j];
            for (size_t j = 0; j < buckets[0].b[i].size(); ++j)
                buckets[0].b[i][j] += buckets[t].b[i][j];
        }
    }

    double batch_loss = 0;
    for (double l : losses) batch_loss += l;
    batch_loss /= b;
    opt.step(model, buckets[0]);
    return batch_loss;
}

// Inference losses for a sample list; per-sample losses are summed in index
// order regardless of worker count.
template <typename PerSample>
void run_inference(const nn::Model&, int n, int workers, const PerSample& fn) {
    workers = std::min(workers, std::max(1, n));
    if (workers > 1) {
#pragma omp parallel num_threads(workers)
        {
            nn::SampleCache<float> cache;
#pragma omp for schedule(static)
            for (int i = 0; i < n; ++i) fn(i, cache);
        }
    } else {
        nn::SampleCache<float> cache;
        for (int i = 0; i < n; ++i) fn(i, cache);
    }
}

void check_finite(double loss, const char* stage, int epoch, uint64_t step) {
    if (!std::isfinite(loss))
        throw std::runtime_error(std::string("training diverged: ") + stage +
                                 " loss is not finite at epoch " + std::to_string(epoch) +
                                 ", step " + std::to_string(step));
}

}  // namespace

std::pair<ModelCheckpoint, TrainHistory> train_segmentation(const SegTrainData& data,
                                                            nn::Model& model,
                                                            const TrainConfig& cfg) {
    cfg.validate();
    if (data.train.empty()) throw std::invalid_argument("train_segmentation: empty training set");
    const int64_t hw = static_cast<int64_t>(model.in_h) * model.in_w;
    auto check_sample = [&](const SliceSample& s) {
        if (!s.mask) throw std::invalid_argument("train_segmentation: sample without mask");
        if (s.width != model.in_w || s.height != model.in_h)
            throw std::invalid_argument("train_segmentation: sample dims mismatch");
    };
    for (const auto& s : data.train) check_sample(s);
    for (const auto& s : data.val) check_sample(s);
    if (model.layers.empty() || model.layers.back().kind != nn::LayerKind::sigmoid)
        throw std::invalid_argument("train_segmentation: model must end in a sigmoid head");
    const int logits_layer = static_cast<int>(model.layers.size()) - 2;

    // Mask targets as floats, once.
    auto to_target = [&](const SliceSample& s) {
        std::vector<float> t(static_cast<size_t>(hw));
        for (int64_t i = 0; i < hw; ++i) t[i] = static_cast<float>((*s.mask)[i]);
        return t;
    };
    std::vector<std::vector<float>> train_targets, val_targets;
    train_targets.reserve(data.train.size());
    for (const auto& s : data.train) train_targets.push_back(to_target(s));
    val_targets.reserve(data.val.size());
    for (const auto& s : data.val) val_targets.push_back(to_target(s));

    AdamOptimizer opt(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    TrainHistory history;
    TrainingMeta meta;
    meta.seed = cfg.seed;
    meta.epochs = cfg.epochs;
    ModelCheckpoint best = checkpoint_from_model(model, meta);
    double best_val = std::numeric_limits<double>::infinity();
    uint64_t global_step = 0;

    std::vector<size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::mt19937_64 order_rng = substream(cfg.seed, "batch-order", epoch);
        shuffle(order, order_rng);

        double loss_sum = 0;
        int64_t seen = 0;
        for (size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
            const size_t end = std::min(order.size(), pos + cfg.batch_size);
            std::vector<const float*> inputs;
            std::vector<const float*> targets;
            for (size_t k = pos; k < end; ++k) {
                inputs.push_back(data.train[order[k]].image.data());
                targets.push_back(train_targets[order[k]].data());
            }
            auto emit = [&](int i, const std::vector<float>& pred,
                            std::vector<float>& grad_out) {
                // Fused BCE-through-sigmoid gradient w.r.t. the logits:
                // (y - t) / n. Stable in the saturated regime where the
                // clamped elementwise form has vanishing slope.
                const float inv_n = 1.f / static_cast<float>(pred.size());
                for (size_t j = 0; j < pred.size(); ++j)
                    grad_out[j] = (pred[j] - targets[i][j]) * inv_n;
                return bce_loss(std::span<const float>(pred.data(), pred.size()),
                                std::span<const float>(targets[i], pred.size()));
            };
            double batch_loss =
                run_step(model, inputs, emit, cfg, global_step, opt, logits_layer);
            check_finite(batch_loss, "segmentation", epoch, global_step);
            loss_sum += batch_loss * static_cast<double>(inputs.size());
            seen += static_cast<int64_t>(inputs.size());
            ++global_step;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(seen);

        if (!data.val.empty()) {
            std::vector<double> vloss(data.val.size());
            const auto refs = nn::param_refs(model);
            run_inference(model, static_cast<int>(data.val.size()), cfg.workers,
                          [&](int i, nn::SampleCache<float>& cache) {
                              nn::forward_sample<float>(model, refs, data.val[i].image.data(),
                                                        nn::RunMode::inference, nullptr, cache);
                              const auto& y = cache.out.back();
                              vloss[i] = bce_loss(std::span<const float>(y.data(), y.size()),
                                                  std::span<const float>(val_targets[i].data(),
                                                                         y.size()));
                          });
            double vsum = 0;
            for (double l : vloss) vsum += l;
            stats.val_loss = vsum / static_cast<double>(vloss.size());
            check_finite(stats.val_loss, "segmentation validation", epoch, global_step);
        } else {
            stats.val_loss = stats.train_loss;
        }
        history.epochs.push_back(stats);

        const bool is_last = epoch == cfg.epochs;
        if ((!data.val.empty() && stats.val_loss < best_val) ||
            (data.val.empty() && is_last)) {
            best_val = stats.val_loss;
            meta.final_train_loss = stats.train_loss;
            meta.final_val_loss = stats.val_loss;
            best = checkpoint_from_model(model, meta);
        }
    }
    return {std::move(best), std::move(history)};
}

std::pair<ModelCheckpoint, TrainHistory> train_classifier(const ClsTrainData& data,
                                                          const ModelCheckpoint& seg_ckpt,
                                                          nn::Model& model,
                                                          const TrainConfig& cfg) {
    cfg.validate();
    if (data.train.empty()) throw std::invalid_argument("train_classifier: empty training set");
    if (seg_ckpt.arch_id != nn::kArchSegUnet)
        throw std::invalid_argument("train_classifier: screening checkpoint has arch '" +
                                    seg_ckpt.arch_id + "'");
    if (model.in_c != 2)
        throw std::invalid_argument("train_classifier: model must take 2-channel fused input");
    auto check_sample = [&](const FusedSample& s) {
        if (s.width != model.in_w || s.height != model.in_h ||
            static_cast<int64_t>(s.data.size()) != 2ll * model.in_h * model.in_w)
            throw std::invalid_argument(
                "train_classifier: fused sample must be 2x" + std::to_string(model.in_h) + "x" +
                std::to_string(model.in_w));
    };
    for (const auto& s : data.train) check_sample(s);
    for (const auto& s : data.val) check_sample(s);

    if (model.layers.empty() || model.layers.back().kind != nn::LayerKind::softmax)
        throw std::invalid_argument("train_classifier: model must end in a softmax head");
    const int logits_layer = static_cast<int>(model.layers.size()) - 2;

    std::vector<CaseLabel> train_labels;
    train_labels.reserve(data.train.size());
    for (const auto& s : data.train) train_labels.push_back(s.label);
    std::vector<size_t> multiset = oversample_benign(train_labels, cfg.oversample_factor, cfg.seed);

    AdamOptimizer opt(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    TrainHistory history;
    TrainingMeta meta;
    meta.seed = cfg.seed;
    meta.epochs = cfg.epochs;
    ModelCheckpoint best = checkpoint_from_model(model, meta);
    double best_val = std::numeric_limits<double>::infinity();
    uint64_t global_step = 0;

    auto sample_loss_grad = [](const std::vector<float>& pred, CaseLabel label,
                               std::vector<float>* grad_out) {
        // 2-class cross entropy on one-hot targets: -log(prob of true class),
        // with the fused softmax gradient (y - t) w.r.t. the logits.
        const size_t truth = label == CaseLabel::malignant ? 1 : 0;
        const double y = std::clamp(static_cast<double>(pred[truth]), kBceEps, 1.0 - kBceEps);
        if (grad_out) {
            (*grad_out)[0] = pred[0] - (truth == 0 ? 1.f : 0.f);
            (*grad_out)[1] = pred[1] - (truth == 1 ? 1.f : 0.f);
        }
        return -std::log(y);
    };

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<size_t> order = multiset;
        std::mt19937_64 order_rng = substream(cfg.seed, "batch-order", epoch);
        shuffle(order, order_rng);

        double loss_sum = 0;
        int64_t seen = 0;
        for (size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
            const size_t end = std::min(order.size(), pos + cfg.batch_size);
            std::vector<const float*> inputs;
            std::vector<CaseLabel> labels;
            for (size_t k = pos; k < end; ++k) {
                inputs.push_back(data.train[order[k]].data.data());
                labels.push_back(data.train[order[k]].label);
            }
            auto emit = [&](int i, const std::vector<float>& pred,
                            std::vector<float>& grad_out) {
                return sample_loss_grad(pred, labels[i], &grad_out);
            };
            double batch_loss =
                run_step(model, inputs, emit, cfg, global_step, opt, logits_layer);
            check_finite(batch_loss, "classifier", epoch, global_step);
            loss_sum += batch_loss * static_cast<double>(inputs.size());
            seen += static_cast<int64_t>(inputs.size());
            ++global_step;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(seen);

        if (!data.val.empty()) {
            std::vector<double> vloss(data.val.size());
            std::vector<uint8_t> correct(data.val.size(), 0);
            const auto refs = nn::param_refs(model);
            run_inference(model, static_cast<int>(data.val.size()), cfg.workers,
                          [&](int i, nn::SampleCache<float>& cache) {
                              nn::forward_sample<float>(model, refs, data.val[i].data.data(),
                                                        nn::RunMode::inference, nullptr, cache);
                              const auto& y = cache.out.back();
                              vloss[i] = sample_loss_grad(y, data.val[i].label, nullptr);
                              const size_t truth =
                                  data.val[i].label == CaseLabel::malignant ? 1 : 0;
                              correct[i] = (y[1] > y[0]) == (truth == 1) ? 1 : 0;
                          });
            double vsum = 0;
            int64_t acc = 0;
            for (size_t i = 0; i < vloss.size(); ++i) {
                vsum += vloss[i];
                acc += correct[i];
            }
            stats.val_loss = vsum / static_cast<double>(vloss.size());
            stats.val_accuracy = static_cast<double>(acc) / static_cast<double>(vloss.size());
            check_finite(stats.val_loss, "classifier validation", epoch, global_step);
        } else {
            stats.val_loss = stats.train_loss;
        }
        history.epochs.push_back(stats);

        const bool is_last = epoch == cfg.epochs;
        if ((!data.val.empty() && stats.val_loss < best_val) ||
            (data.val.empty() && is_last)) {
            best_val = stats.val_loss;
            meta.final_train_loss = stats.train_loss;
            meta.final_val_loss = stats.val_loss;
            best = checkpoint_from_model(model, meta);
        }
    }
    return {std::move(best), std::move(history)};
}

}  // namespace lnc
