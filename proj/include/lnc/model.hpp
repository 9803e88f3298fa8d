#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace lnc::nn {

// Networks are linear layer lists; skip connections reference the output of
// an earlier layer by index, which is enough to express the U-Net ladder.
enum class LayerKind {
    conv3x3,
    conv1x1,
    maxpool2x2,
    upsample2x,
    concat_skip,
    dropout,
    dense,
    relu,
    sigmoid,
    softmax,
    flatten,
};

struct LayerSpec {
    LayerKind kind;
    int channels_out = 0;      // conv / dense
    double dropout_rate = 0.0; // dropout
    int skip_source = -1;      // concat_skip: index of the layer to concatenate
    std::string name;          // stable prefix for parameter tensor names
};

/// Activation shape; flattened activations use h = w = 1.
struct ActShape {
    int c = 0, h = 0, w = 0;
    int64_t numel() const { return static_cast<int64_t>(c) * h * w; }
    bool operator==(const ActShape&) const = default;
};

/// A shape-checked network: topology plus float parameters. Parameters for
/// layer i live in weights[i] / biases[i] (empty for parameterless layers).
/// Conv weights are [c_out, c_in*k*k] row-major, dense weights [out, in].
struct Model {
    std::string arch_id;
    int in_c = 0, in_h = 0, in_w = 0;
    std::vector<LayerSpec> layers;
    std::vector<ActShape> shapes;  // output shape of each layer
    std::vector<std::vector<float>> weights;
    std::vector<std::vector<float>> biases;

    ActShape input_shape() const { return {in_c, in_h, in_w}; }
    ActShape output_shape() const { return shapes.empty() ? input_shape() : shapes.back(); }
    /// Fan-in of a parameterized layer (c_in*k*k or dense input width).
    int64_t fan_in(size_t layer) const;
};

inline constexpr const char* kArchSegUnet = "seg_unet";
inline constexpr const char* kArchClsEncoder = "cls_encoder";
inline constexpr const char* kArchClsFc = "cls_fc";
inline constexpr const char* kArchClsEncDec = "cls_encdec";

/// U-Net screener: five-conv encoder (64..1024 channels, pool after the
/// first four, dropout on the last two), four upsample+concat+conv decoder
/// levels (512..64), 1x1 conv head with sigmoid. Requires H, W % 16 == 0.
Model build_segmentation_net(int input_h, int input_w);

/// Fused-input classifier: three conv levels (8, 16, 32) with pooling,
/// dropout after the last relu, dense 128 + relu, dense 2 + softmax.
/// Input is 2 channels; requires H, W % 8 == 0.
Model build_classifier_net(int input_h, int input_w);

/// Baseline: flatten the 2-channel input straight into dense 128 / dense 2.
Model build_baseline_fc(int input_h, int input_w);

/// Baseline: the segmentation topology at 8-start width, decoder output
/// flattened into the same dense head. Requires H, W % 16 == 0.
Model build_baseline_encdec(int input_h, int input_w);

/// Dispatch by arch_id; throws on unknown ids.
Model build_arch(const std::string& arch_id, int input_h, int input_w);

/// Fan-in-scaled uniform init for weights, zero biases. Deterministic.
void init_params(Model& m, uint64_t seed);

/// Sum of parameter element counts.
int64_t count_parameters(const Model& m);

/// Names of the parameter tensors of layer i: {name}.w / {name}.b.
std::string weight_name(const Model& m, size_t layer);
std::string bias_name(const Model& m, size_t layer);

enum class RunMode { inference, training };

template <typename T>
struct ParamRefs {
    std::vector<std::span<const T>> w, b;
};

/// Views over a model's own float parameters (no copy).
ParamRefs<float> param_refs(const Model& m);

/// Owning copy of the parameters converted to T (used for the float->double
/// path of the finite-difference checks).
template <typename T>
struct ParamStore {
    std::vector<std::vector<T>> w, b;
    ParamRefs<T> refs() const {
        ParamRefs<T> r;
        r.w.reserve(w.size());
        r.b.reserve(b.size());
        for (const auto& v : w) r.w.emplace_back(v.data(), v.size());
        for (const auto& v : b) r.b.emplace_back(v.data(), v.size());
        return r;
    }
};

template <typename T>
ParamStore<T> params_to(const Model& m) {
    ParamStore<T> p;
    p.w.reserve(m.weights.size());
    p.b.reserve(m.biases.size());
    for (const auto& v : m.weights) p.w.emplace_back(v.begin(), v.end());
    for (const auto& v : m.biases) p.b.emplace_back(v.begin(), v.end());
    return p;
}

/// Per-sample forward state. Layer outputs are retained so that skip
/// concatenation and the backward pass can address them; pool layers record
/// argmax indices and dropout layers their scaled masks.
template <typename T>
struct SampleCache {
    std::vector<std::vector<T>> out;
    std::vector<std::vector<int32_t>> argmax;
    std::vector<std::vector<T>> drop_mask;
};

template <typename T>
struct GradSet {
    std::vector<std::vector<T>> w, b;
};

template <typename T>
GradSet<T> make_zero_grads(const Model& m) {
    GradSet<T> g;
    g.w.reserve(m.weights.size());
    g.b.reserve(m.biases.size());
    for (const auto& v : m.weights) g.w.emplace_back(v.size(), T(0));
    for (const auto& v : m.biases) g.b.emplace_back(v.size(), T(0));
    return g;
}

/// Forward one sample (input length = in_c*in_h*in_w). In training mode the
/// dropout rng must be supplied; inference mode never consumes randomness.
template <typename T>
void forward_sample(const Model& m, const ParamRefs<T>& p, const T* input, RunMode mode,
                    std::mt19937_64* dropout_rng, SampleCache<T>& cache);

/// Accumulate parameter gradients (and optionally the input gradient) for one
/// sample given its forward cache and dL/d(output of layer `start_layer`).
/// The default (-1) starts at the final layer; trainers pass the pre-sigmoid
/// or pre-softmax layer to use the fused, numerically stable loss gradient.
template <typename T>
void backward_sample(const Model& m, const ParamRefs<T>& p, const T* input,
                     const SampleCache<T>& cache, const T* grad_out, GradSet<T>& grads,
                     T* grad_input = nullptr, int start_layer = -1);

/// Batched activations, row-major [b][c][h][w].
struct Batch {
    int b = 0, c = 0, h = 0, w = 0;
    std::vector<float> data;
    int64_t sample_size() const { return static_cast<int64_t>(c) * h * w; }
    float* sample(int i) { return data.data() + i * sample_size(); }
    const float* sample(int i) const { return data.data() + i * sample_size(); }
};

/// Forward a batch through the model's own parameters. Shape-checked against
/// the declared input; throws with expected-vs-actual on mismatch. Training
/// mode draws per-sample dropout streams from (dropout_seed, step, index) so
/// results do not depend on worker count.
Batch forward(const Model& m, const Batch& input, RunMode mode = RunMode::inference,
              uint64_t dropout_seed = 0, uint64_t step = 0, int workers = 1);

extern template void forward_sample<float>(const Model&, const ParamRefs<float>&,
                                           const float*, RunMode, std::mt19937_64*,
                                           SampleCache<float>&);
extern template void forward_sample<double>(const Model&, const ParamRefs<double>&,
                                            const double*, RunMode, std::mt19937_64*,
                                            SampleCache<double>&);
extern template void backward_sample<float>(const Model&, const ParamRefs<float>&,
                                            const float*, const SampleCache<float>&,
                                            const float*, GradSet<float>&, float*, int);
extern template void backward_sample<double>(const Model&, const ParamRefs<double>&,
                                             const double*, const SampleCache<double>&,
                                             const double*, GradSet<double>&, double*, int);

}  // namespace lnc::nn
