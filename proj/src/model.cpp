#include "lnc/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lnc/rng.hpp"

namespace lnc::nn {

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

int kernel_size(LayerKind k) { return k == LayerKind::conv3x3 ? 3 : 1; }

bool has_params(LayerKind k) {
    return k == LayerKind::conv3x3 || k == LayerKind::conv1x1 || k == LayerKind::dense;
}

// Scratch buffers reused across calls; sized to the largest layer seen.
template <typename T>
std::vector<T>& tls_col_buffer() {
    thread_local std::vector<T> buf;
    return buf;
}
template <typename T>
std::vector<T>& tls_dcol_buffer() {
    thread_local std::vector<T> buf;
    return buf;
}

template <typename T>
void im2col_3x3(const T* x, int c_in, int h, int w, T* col) {
    const int hw = h * w;
    for (int c = 0; c < c_in; ++c) {
        const T* xc = x + static_cast<int64_t>(c) * hw;
        for (int ky = 0; ky < 3; ++ky) {
            const int sy = ky - 1;
            for (int kx = 0; kx < 3; ++kx) {
                const int sx = kx - 1;
                T* dst = col + (static_cast<int64_t>(c) * 9 + ky * 3 + kx) * hw;
                for (int y = 0; y < h; ++y) {
                    const int iy = y + sy;
                    T* drow = dst + static_cast<int64_t>(y) * w;
                    if (iy < 0 || iy >= h) {
                        std::fill(drow, drow + w, T(0));
                        continue;
                    }
                    const T* srow = xc + static_cast<int64_t>(iy) * w;
                    if (sx == 0) {
                        std::copy(srow, srow + w, drow);
                    } else if (sx < 0) {
                        drow[0] = T(0);
                        std::copy(srow, srow + w - 1, drow + 1);
                    } else {
                        std::copy(srow + 1, srow + w, drow);
                        drow[w - 1] = T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_3x3_add(const T* col, int c_in, int h, int w, T* dx) {
    const int hw = h * w;
    for (int c = 0; c < c_in; ++c) {
        T* xc = dx + static_cast<int64_t>(c) * hw;
        for (int ky = 0; ky < 3; ++ky) {
            const int sy = ky - 1;
            for (int kx = 0; kx < 3; ++kx) {
                const int sx = kx - 1;
                const T* src = col + (static_cast<int64_t>(c) * 9 + ky * 3 + kx) * hw;
                for (int y = 0; y < h; ++y) {
                    const int iy = y + sy;
                    if (iy < 0 || iy >= h) continue;
                    const T* srow = src + static_cast<int64_t>(y) * w;
                    T* drow = xc + static_cast<int64_t>(iy) * w;
                    if (sx == 0) {
                        for (int x2 = 0; x2 < w; ++x2) drow[x2] += srow[x2];
                    } else if (sx < 0) {
                        for (int x2 = 1; x2 < w; ++x2) drow[x2 - 1] += srow[x2];
                    } else {
                        for (int x2 = 0; x2 < w - 1; ++x2) drow[x2 + 1] += srow[x2];
                    }
                }
            }
        }
    }
}

template <typename T>
void conv_forward(LayerKind kind, std::span<const T> wv, std::span<const T> bv, const T* x,
                  const ActShape& in, int c_out, T* y) {
    const int hw = in.h * in.w;
    const int k = kernel_size(kind);
    const int rows = in.c * k * k;
    const T* col = x;
    if (k == 3) {
        auto& buf = tls_col_buffer<T>();
        buf.resize(static_cast<size_t>(rows) * hw);
        im2col_3x3(x, in.c, in.h, in.w, buf.data());
        col = buf.data();
    }
    Eigen::Map<const MatRM<T>> W(wv.data(), c_out, rows);
    Eigen::Map<const MatRM<T>> C(col, rows, hw);
    Eigen::Map<MatRM<T>> Y(y, c_out, hw);
    Y.noalias() = W * C;
    Eigen::Map<const Vec<T>> B(bv.data(), c_out);
    Y.colwise() += B;
}

template <typename T>
void conv_backward(LayerKind kind, std::span<const T> wv, const T* x, const ActShape& in,
                   int c_out, const T* dy, std::vector<T>& gw, std::vector<T>& gb, T* dx) {
    const int hw = in.h * in.w;
    const int k = kernel_size(kind);
    const int rows = in.c * k * k;
    const T* col = x;
    if (k == 3) {
        auto& buf = tls_col_buffer<T>();
        buf.resize(static_cast<size_t>(rows) * hw);
        im2col_3x3(x, in.c, in.h, in.w, buf.data());
        col = buf.data();
    }
    Eigen::Map<const MatRM<T>> W(wv.data(), c_out, rows);
    Eigen::Map<const MatRM<T>> C(col, rows, hw);
    Eigen::Map<const MatRM<T>> DY(dy, c_out, hw);

    Eigen::Map<MatRM<T>> GW(gw.data(), c_out, rows);
    GW.noalias() += DY * C.transpose();
    Eigen::Map<Vec<T>> GB(gb.data(), c_out);
    GB.noalias() += DY.rowwise().sum();

    if (!dx) return;
    if (k == 1) {
        Eigen::Map<MatRM<T>> DX(dx, rows, hw);
        DX.noalias() += W.transpose() * DY;
    } else {
        auto& dbuf = tls_dcol_buffer<T>();
        dbuf.resize(static_cast<size_t>(rows) * hw);
        Eigen::Map<MatRM<T>> DC(dbuf.data(), rows, hw);
        DC.noalias() = W.transpose() * DY;
        col2im_3x3_add(dbuf.data(), in.c, in.h, in.w, dx);
    }
}

}  // namespace

int64_t Model::fan_in(size_t layer) const {
    const auto& spec = layers[layer];
    if (!has_params(spec.kind) || spec.channels_out == 0) return 0;
    return static_cast<int64_t>(weights[layer].size()) / spec.channels_out;
}

ParamRefs<float> param_refs(const Model& m) {
    ParamRefs<float> r;
    r.w.reserve(m.weights.size());
    r.b.reserve(m.biases.size());
    for (const auto& v : m.weights) r.w.emplace_back(v.data(), v.size());
    for (const auto& v : m.biases) r.b.emplace_back(v.data(), v.size());
    return r;
}

template <typename T>
void forward_sample(const Model& m, const ParamRefs<T>& p, const T* input, RunMode mode,
                    std::mt19937_64* dropout_rng, SampleCache<T>& cache) {
    const size_t L = m.layers.size();
    cache.out.resize(L);
    cache.argmax.resize(L);
    cache.drop_mask.resize(L);

    ActShape in_shape = m.input_shape();
    const T* x = input;
    for (size_t i = 0; i < L; ++i) {
        const LayerSpec& spec = m.layers[i];
        const ActShape& os = m.shapes[i];
        auto& out = cache.out[i];
        out.resize(static_cast<size_t>(os.numel()));
        cache.argmax[i].clear();
        cache.drop_mask[i].clear();

        switch (spec.kind) {
            case LayerKind::conv3x3:
            case LayerKind::conv1x1:
                conv_forward(spec.kind, p.w[i], p.b[i], x, in_shape, os.c, out.data());
                break;
            case LayerKind::maxpool2x2: {
                auto& am = cache.argmax[i];
                am.resize(out.size());
                const int oh = os.h, ow = os.w, ih = in_shape.h, iw = in_shape.w;
                for (int c = 0; c < os.c; ++c) {
                    const T* xc = x + static_cast<int64_t>(c) * ih * iw;
                    for (int y = 0; y < oh; ++y) {
                        for (int x2 = 0; x2 < ow; ++x2) {
                            int base = (2 * y) * iw + 2 * x2;
                            int best = base;
                            T bv = xc[base];
                            if (xc[base + 1] > bv) { bv = xc[base + 1]; best = base + 1; }
                            if (xc[base + iw] > bv) { bv = xc[base + iw]; best = base + iw; }
                            if (xc[base + iw + 1] > bv) { bv = xc[base + iw + 1]; best = base + iw + 1; }
                            size_t oi = (static_cast<size_t>(c) * oh + y) * ow + x2;
                            out[oi] = bv;
                            am[oi] = static_cast<int32_t>(c) * ih * iw + best;
                        }
                    }
                }
                break;
            }
            case LayerKind::upsample2x: {
                const int ih = in_shape.h, iw = in_shape.w;
                for (int c = 0; c < os.c; ++c) {
                    const T* xc = x + static_cast<int64_t>(c) * ih * iw;
                    T* oc = out.data() + static_cast<int64_t>(c) * os.h * os.w;
                    for (int y = 0; y < os.h; ++y) {
                        const T* srow = xc + static_cast<int64_t>(y / 2) * iw;
                        T* drow = oc + static_cast<int64_t>(y) * os.w;
                        for (int x2 = 0; x2 < os.w; ++x2) drow[x2] = srow[x2 / 2];
                    }
                }
                break;
            }
            case LayerKind::concat_skip: {
                const auto& src = cache.out[spec.skip_source];
                const size_t n_prev = static_cast<size_t>(in_shape.numel());
                std::copy(x, x + n_prev, out.data());
                std::copy(src.begin(), src.end(), out.data() + n_prev);
                break;
            }
            case LayerKind::dropout: {
                if (mode == RunMode::training) {
                    if (!dropout_rng)
                        throw std::invalid_argument("forward: training mode requires a dropout rng");
                    auto& mask = cache.drop_mask[i];
                    mask.resize(out.size());
                    const T scale = T(1.0 / (1.0 - spec.dropout_rate));
                    for (size_t j = 0; j < out.size(); ++j) {
                        mask[j] = uniform01(*dropout_rng) < spec.dropout_rate ? T(0) : scale;
                        out[j] = x[j] * mask[j];
                    }
                } else {
                    std::copy(x, x + out.size(), out.begin());
                }
                break;
            }
            case LayerKind::dense: {
                Eigen::Map<const MatRM<T>> W(p.w[i].data(), os.c, in_shape.numel());
                Eigen::Map<const Vec<T>> X(x, in_shape.numel());
                Eigen::Map<const Vec<T>> B(p.b[i].data(), os.c);
                Eigen::Map<Vec<T>> Y(out.data(), os.c);
                Y.noalias() = W * X + B;
                break;
            }
            case LayerKind::relu:
                for (size_t j = 0; j < out.size(); ++j) out[j] = x[j] > T(0) ? x[j] : T(0);
                break;
            case LayerKind::sigmoid:
                for (size_t j = 0; j < out.size(); ++j) out[j] = T(1) / (T(1) + std::exp(-x[j]));
                break;
            case LayerKind::softmax: {
                T mx = x[0];
                for (size_t j = 1; j < out.size(); ++j) mx = std::max(mx, x[j]);
                T sum = T(0);
                for (size_t j = 0; j < out.size(); ++j) {
                    out[j] = std::exp(x[j] - mx);
                    sum += out[j];
                }
                for (size_t j = 0; j < out.size(); ++j) out[j] /= sum;
                break;
            }
            case LayerKind::flatten:
                std::copy(x, x + out.size(), out.begin());
                break;
        }
        x = out.data();
        in_shape = os;
    }
}

template <typename T>
void backward_sample(const Model& m, const ParamRefs<T>& p, const T* input,
                     const SampleCache<T>& cache, const T* grad_out, GradSet<T>& grads,
                     T* grad_input, int start_layer) {
    const size_t L = m.layers.size();
    const size_t start = start_layer < 0 ? L - 1 : static_cast<size_t>(start_layer);
    if (start >= L) throw std::invalid_argument("backward: start layer out of range");
    // Gradient w.r.t. each layer's output, allocated lazily; a layer's output
    // can feed both the next layer and a later concat.
    std::vector<std::vector<T>> og(L);
    auto deposit = [&](size_t layer, const T* g, size_t n) {
        auto& buf = og[layer];
        if (buf.empty()) {
            buf.assign(g, g + n);
        } else {
            for (size_t j = 0; j < n; ++j) buf[j] += g[j];
        }
    };
    og[start].assign(grad_out, grad_out + m.shapes[start].numel());

    std::vector<T> dx;
    for (size_t ii = start + 1; ii-- > 0;) {
        if (og[ii].empty()) continue;
        const LayerSpec& spec = m.layers[ii];
        const ActShape in_shape = ii == 0 ? m.input_shape() : m.shapes[ii - 1];
        const ActShape& os = m.shapes[ii];
        const T* x = ii == 0 ? input : cache.out[ii - 1].data();
        const T* dy = og[ii].data();
        const auto& out = cache.out[ii];

        dx.assign(static_cast<size_t>(in_shape.numel()), T(0));
        bool want_dx = ii > 0 || grad_input != nullptr;

        switch (spec.kind) {
            case LayerKind::conv3x3:
            case LayerKind::conv1x1:
                conv_backward(spec.kind, p.w[ii], x, in_shape, os.c, dy, grads.w[ii],
                              grads.b[ii], want_dx ? dx.data() : nullptr);
                break;
            case LayerKind::maxpool2x2: {
                const auto& am = cache.argmax[ii];
                for (size_t j = 0; j < am.size(); ++j) dx[am[j]] += dy[j];
                break;
            }
            case LayerKind::upsample2x: {
                const int ih = in_shape.h, iw = in_shape.w;
                for (int c = 0; c < os.c; ++c) {
                    T* dc = dx.data() + static_cast<int64_t>(c) * ih * iw;
                    const T* gyc = dy + static_cast<int64_t>(c) * os.h * os.w;
                    for (int y = 0; y < os.h; ++y) {
                        T* drow = dc + static_cast<int64_t>(y / 2) * iw;
                        const T* grow = gyc + static_cast<int64_t>(y) * os.w;
                        for (int x2 = 0; x2 < os.w; ++x2) drow[x2 / 2] += grow[x2];
                    }
                }
                break;
            }
            case LayerKind::concat_skip: {
                const size_t n_prev = static_cast<size_t>(in_shape.numel());
                std::copy(dy, dy + n_prev, dx.begin());
                const auto& src_shape = m.shapes[spec.skip_source];
                deposit(spec.skip_source, dy + n_prev,
                        static_cast<size_t>(src_shape.numel()));
                break;
            }
            case LayerKind::dropout: {
                const auto& mask = cache.drop_mask[ii];
                if (mask.empty()) {
                    std::copy(dy, dy + dx.size(), dx.begin());
                } else {
                    for (size_t j = 0; j < dx.size(); ++j) dx[j] = dy[j] * mask[j];
                }
                break;
            }
            case LayerKind::dense: {
                Eigen::Map<const MatRM<T>> W(p.w[ii].data(), os.c, in_shape.numel());
                Eigen::Map<const Vec<T>> X(x, in_shape.numel());
                Eigen::Map<const Vec<T>> DY(dy, os.c);
                Eigen::Map<MatRM<T>> GW(grads.w[ii].data(), os.c, in_shape.numel());
                GW.noalias() += DY * X.transpose();
                Eigen::Map<Vec<T>> GB(grads.b[ii].data(), os.c);
                GB.noalias() += DY;
                if (want_dx) {
                    Eigen::Map<Vec<T>> DX(dx.data(), in_shape.numel());
                    DX.noalias() = W.transpose() * DY;
                }
                break;
            }
            case LayerKind::relu:
                for (size_t j = 0; j < dx.size(); ++j) dx[j] = out[j] > T(0) ? dy[j] : T(0);
                break;
            case LayerKind::sigmoid:
                for (size_t j = 0; j < dx.size(); ++j) dx[j] = dy[j] * out[j] * (T(1) - out[j]);
                break;
            case LayerKind::softmax: {
                T dot = T(0);
                for (size_t j = 0; j < dx.size(); ++j) dot += dy[j] * out[j];
                for (size_t j = 0; j < dx.size(); ++j) dx[j] = out[j] * (dy[j] - dot);
                break;
            }
            case LayerKind::flatten:
                std::copy(dy, dy + dx.size(), dx.begin());
                break;
        }

        og[ii].clear();
        og[ii].shrink_to_fit();
        if (ii == 0) {
            if (grad_input)
                for (size_t j = 0; j < dx.size(); ++j) grad_input[j] += dx[j];
        } else {
            deposit(ii - 1, dx.data(), dx.size());
        }
    }
}

template void forward_sample<float>(const Model&, const ParamRefs<float>&, const float*,
                                    RunMode, std::mt19937_64*, SampleCache<float>&);
template void forward_sample<double>(const Model&, const ParamRefs<double>&, const double*,
                                     RunMode, std::mt19937_64*, SampleCache<double>&);
template void backward_sample<float>(const Model&, const ParamRefs<float>&, const float*,
                                     const SampleCache<float>&, const float*,
                                     GradSet<float>&, float*, int);
template void backward_sample<double>(const Model&, const ParamRefs<double>&, const double*,
                                      const SampleCache<double>&, const double*,
                                      GradSet<double>&, double*, int);

namespace {

void infer_shapes(Model& m) {
    ActShape s = m.input_shape();
    m.shapes.clear();
    m.weights.assign(m.layers.size(), {});
    m.biases.assign(m.layers.size(), {});
    for (size_t i = 0; i < m.layers.size(); ++i) {
        const LayerSpec& spec = m.layers[i];
        switch (spec.kind) {
            case LayerKind::conv3x3:
            case LayerKind::conv1x1: {
                const int k = kernel_size(spec.kind);
                if (spec.channels_out < 1)
                    throw std::invalid_argument("model: conv needs channels_out");
                m.weights[i].assign(
                    static_cast<size_t>(spec.channels_out) * s.c * k * k, 0.f);
                m.biases[i].assign(static_cast<size_t>(spec.channels_out), 0.f);
                s.c = spec.channels_out;
                break;
            }
            case LayerKind::maxpool2x2:
                if (s.h % 2 || s.w % 2)
                    throw std::invalid_argument("model: maxpool2x2 needs even dims, got " +
                                                std::to_string(s.h) + "x" + std::to_string(s.w));
                s.h /= 2;
                s.w /= 2;
                break;
            case LayerKind::upsample2x:
                s.h *= 2;
                s.w *= 2;
                break;
            case LayerKind::concat_skip: {
                if (spec.skip_source < 0 || spec.skip_source >= static_cast<int>(i))
                    throw std::invalid_argument("model: concat_skip source out of range");
                const ActShape& src = m.shapes[spec.skip_source];
                if (src.h != s.h || src.w != s.w)
                    throw std::invalid_argument("model: concat_skip spatial dims differ");
                s.c += src.c;
                break;
            }
            case LayerKind::dropout:
                if (spec.dropout_rate <= 0 || spec.dropout_rate >= 1)
                    throw std::invalid_argument("model: dropout rate must be in (0,1)");
                break;
            case LayerKind::dense:
                if (s.h != 1 || s.w != 1)
                    throw std::invalid_argument("model: dense requires flattened input");
                if (spec.channels_out < 1)
                    throw std::invalid_argument("model: dense needs channels_out");
                m.weights[i].assign(static_cast<size_t>(spec.channels_out) * s.c, 0.f);
                m.biases[i].assign(static_cast<size_t>(spec.channels_out), 0.f);
                s.c = spec.channels_out;
                break;
            case LayerKind::relu:
            case LayerKind::sigmoid:
                break;
            case LayerKind::softmax:
                if (s.h != 1 || s.w != 1)
                    throw std::invalid_argument("model: softmax requires flattened input");
                break;
            case LayerKind::flatten:
                s = {s.c * s.h * s.w, 1, 1};
                break;
        }
        m.shapes.push_back(s);
    }
}

void require_divisible(int h, int w, int div, const char* arch) {
    if (h < div || w < div || h % div || w % div)
        throw std::invalid_argument(std::string(arch) + ": input dims must be multiples of " +
                                    std::to_string(div) + ", got " + std::to_string(h) + "x" +
                                    std::to_string(w));
}

// Encoder/decoder ladder shared by the U-Net screener and the encdec
// baseline trunk. Returns the index of the final decoder relu.
void add_unet_trunk(Model& m, int base_channels) {
    const int c1 = base_channels;
    auto add = [&m](LayerSpec spec) {
        m.layers.push_back(std::move(spec));
        return static_cast<int>(m.layers.size()) - 1;
    };
    int skip[4];
    int channels = c1;
    for (int level = 1; level <= 4; ++level) {
        std::string nm = "enc" + std::to_string(level);
        add({LayerKind::conv3x3, channels, 0, -1, nm + "_conv"});
        int r = add({LayerKind::relu, 0, 0, -1, nm + "_relu"});
        if (level == 4) r = add({LayerKind::dropout, 0, 0.5, -1, nm + "_drop"});
        skip[level - 1] = r;
        add({LayerKind::maxpool2x2, 0, 0, -1, nm + "_pool"});
        channels *= 2;
    }
    add({LayerKind::conv3x3, channels, 0, -1, "enc5_conv"});
    add({LayerKind::relu, 0, 0, -1, "enc5_relu"});
    add({LayerKind::dropout, 0, 0.5, -1, "enc5_drop"});

    for (int level = 1; level <= 4; ++level) {
        channels /= 2;
        std::string nm = "dec" + std::to_string(level);
        add({LayerKind::upsample2x, 0, 0, -1, nm + "_up"});
        add({LayerKind::concat_skip, 0, 0, skip[4 - level], nm + "_cat"});
        add({LayerKind::conv3x3, channels, 0, -1, nm + "_conv"});
        add({LayerKind::relu, 0, 0, -1, nm + "_relu"});
    }
}

}  // namespace

Model build_segmentation_net(int input_h, int input_w) {
    require_divisible(input_h, input_w, 16, kArchSegUnet);
    Model m;
    m.arch_id = kArchSegUnet;
    m.in_c = 1;
    m.in_h = input_h;
    m.in_w = input_w;
    add_unet_trunk(m, 64);
    m.layers.push_back({LayerKind::conv1x1, 1, 0, -1, "head_conv"});
    m.layers.push_back({LayerKind::sigmoid, 0, 0, -1, "head_sigmoid"});
    infer_shapes(m);
    return m;
}

Model build_classifier_net(int input_h, int input_w) {
    require_divisible(input_h, input_w, 8, kArchClsEncoder);
    Model m;
    m.arch_id = kArchClsEncoder;
    m.in_c = 2;
    m.in_h = input_h;
    m.in_w = input_w;
    int channels = 8;
    for (int level = 1; level <= 3; ++level) {
        std::string nm = "conv" + std::to_string(level);
        m.layers.push_back({LayerKind::conv3x3, channels, 0, -1, nm});
        m.layers.push_back({LayerKind::relu, 0, 0, -1, nm + "_relu"});
        if (level == 3) m.layers.push_back({LayerKind::dropout, 0, 0.5, -1, nm + "_drop"});
        m.layers.push_back({LayerKind::maxpool2x2, 0, 0, -1, nm + "_pool"});
        channels *= 2;
    }
    m.layers.push_back({LayerKind::flatten, 0, 0, -1, "flatten"});
    m.layers.push_back({LayerKind::dense, 128, 0, -1, "fc1"});
    m.layers.push_back({LayerKind::relu, 0, 0, -1, "fc1_relu"});
    m.layers.push_back({LayerKind::dense, 2, 0, -1, "fc2"});
    m.layers.push_back({LayerKind::softmax, 0, 0, -1, "softmax"});
    infer_shapes(m);
    return m;
}

Model build_baseline_fc(int input_h, int input_w) {
    if (input_h < 1 || input_w < 1)
        throw std::invalid_argument("cls_fc: invalid input dims");
    Model m;
    m.arch_id = kArchClsFc;
    m.in_c = 2;
    m.in_h = input_h;
    m.in_w = input_w;
    m.layers.push_back({LayerKind::flatten, 0, 0, -1, "flatten"});
    m.layers.push_back({LayerKind::dense, 128, 0, -1, "fc1"});
    m.layers.push_back({LayerKind::relu, 0, 0, -1, "fc1_relu"});
    m.layers.push_back({LayerKind::dense, 2, 0, -1, "fc2"});
    m.layers.push_back({LayerKind::softmax, 0, 0, -1, "softmax"});
    infer_shapes(m);
    return m;
}

Model build_baseline_encdec(int input_h, int input_w) {
    require_divisible(input_h, input_w, 16, kArchClsEncDec);
    Model m;
    m.arch_id = kArchClsEncDec;
    m.in_c = 2;
    m.in_h = input_h;
    m.in_w = input_w;
    add_unet_trunk(m, 8);
    m.layers.push_back({LayerKind::flatten, 0, 0, -1, "flatten"});
    m.layers.push_back({LayerKind::dense, 128, 0, -1, "fc1"});
    m.layers.push_back({LayerKind::relu, 0, 0, -1, "fc1_relu"});
    m.layers.push_back({LayerKind::dense, 2, 0, -1, "fc2"});
    m.layers.push_back({LayerKind::softmax, 0, 0, -1, "softmax"});
    infer_shapes(m);
    return m;
}

Model build_arch(const std::string& arch_id, int input_h, int input_w) {
    if (arch_id == kArchSegUnet) return build_segmentation_net(input_h, input_w);
    if (arch_id == kArchClsEncoder) return build_classifier_net(input_h, input_w);
    if (arch_id == kArchClsFc) return build_baseline_fc(input_h, input_w);
    if (arch_id == kArchClsEncDec) return build_baseline_encdec(input_h, input_w);
    throw std::runtime_error("unknown arch_id '" + arch_id + "'");
}

void init_params(Model& m, uint64_t seed) {
    for (size_t i = 0; i < m.layers.size(); ++i) {
        if (m.weights[i].empty()) continue;
        std::mt19937_64 rng = substream(seed, "init", i);
        const double a = std::sqrt(3.0 / static_cast<double>(m.fan_in(i)));
        for (auto& w : m.weights[i]) w = static_cast<float>(uniform_range(rng, -a, a));
        std::fill(m.biases[i].begin(), m.biases[i].end(), 0.f);
    }
}

int64_t count_parameters(const Model& m) {
    int64_t n = 0;
    for (const auto& w : m.weights) n += static_cast<int64_t>(w.size());
    for (const auto& b : m.biases) n += static_cast<int64_t>(b.size());
    return n;
}

std::string weight_name(const Model& m, size_t layer) { return m.layers[layer].name + ".w"; }
std::string bias_name(const Model& m, size_t layer) { return m.layers[layer].name + ".b"; }

Batch forward(const Model& m, const Batch& input, RunMode mode, uint64_t dropout_seed,
              uint64_t step, int workers) {
    if (input.c != m.in_c || input.h != m.in_h || input.w != m.in_w)
        throw std::invalid_argument(
            "forward: input shape mismatch for " + m.arch_id + " (expected " +
            std::to_string(m.in_c) + "x" + std::to_string(m.in_h) + "x" +
            std::to_string(m.in_w) + ", got " + std::to_string(input.c) + "x" +
            std::to_string(input.h) + "x" + std::to_string(input.w) + ")");
    const ActShape os = m.output_shape();
    Batch out;
    out.b = input.b;
    out.c = os.c;
    out.h = os.h;
    out.w = os.w;
    out.data.resize(static_cast<size_t>(input.b) * os.numel());
    const auto refs = param_refs(m);

    auto run_sample = [&](int i, SampleCache<float>& cache) {
        std::mt19937_64 rng;
        std::mt19937_64* prng = nullptr;
        if (mode == RunMode::training) {
            rng = substream(dropout_seed, "dropout",
                            step * static_cast<uint64_t>(input.b) + static_cast<uint64_t>(i));
            prng = &rng;
        }
        forward_sample<float>(m, refs, input.sample(i), mode, prng, cache);
        std::copy(cache.out.back().begin(), cache.out.back().end(), out.sample(i));
    };

    if (workers > 1) {
#pragma omp parallel num_threads(workers)
        {
            SampleCache<float> cache;
#pragma omp for schedule(static)
            for (int i = 0; i < input.b; ++i) run_sample(i, cache);
        }
    } else {
        SampleCache<float> cache;
        for (int i = 0; i < input.b; ++i) run_sample(i, cache);
    }
    return out;
}

}  // namespace lnc::nn
