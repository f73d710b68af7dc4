#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fedmix/errors.hpp"
#include "fedmix/grid.hpp"
#include "fedmix/rng.hpp"

namespace fedmix {

// Flat model parameter vector; deltas share the representation. Layout is
// fixed by ModelSpec (see param_layout below).
using ParamVector = std::vector<double>;

// Dense per-pixel segmentation model: two same-padded KxK convolutions with a
// tanh between them, a 1x1 projection, and a sigmoid output. Output shape
// always equals input shape.
struct ModelSpec {
    int height = 32;
    int width = 32;
    int hidden_channels = 8;
    int kernel = 3;

    void validate() const {
        if (height <= 0 || width <= 0)
            throw ValidationError("ModelSpec: image size must be positive");
        if (hidden_channels <= 0)
            throw ValidationError("ModelSpec: hidden_channels must be positive");
        if (kernel <= 0 || kernel % 2 == 0)
            throw ValidationError("ModelSpec: kernel must be odd and positive");
    }

    std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }

    bool operator==(const ModelSpec&) const = default;
};

// Parameter layout, in order: conv1 weights [C][1][K][K], conv1 biases [C],
// conv2 weights [C][C][K][K], conv2 biases [C], projection weights [C],
// projection bias [1].
struct ParamLayout {
    std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0, w3 = 0, b3 = 0;
    std::size_t total = 0;
};

inline ParamLayout param_layout(const ModelSpec& spec) {
    const std::size_t c = static_cast<std::size_t>(spec.hidden_channels);
    const std::size_t kk = static_cast<std::size_t>(spec.kernel) * spec.kernel;
    ParamLayout l;
    l.w1 = 0;
    l.b1 = l.w1 + c * kk;
    l.w2 = l.b1 + c;
    l.b2 = l.w2 + c * c * kk;
    l.w3 = l.b2 + c;
    l.b3 = l.w3 + c;
    l.total = l.b3 + 1;
    return l;
}

inline std::size_t param_count(const ModelSpec& spec) { return param_layout(spec).total; }

// Seed-deterministic init: weights uniform in [-r, r] with r = 1/sqrt(fan_in)
// per layer, biases zero.
inline ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    const auto layout = param_layout(spec);
    const std::size_t c = static_cast<std::size_t>(spec.hidden_channels);
    const std::size_t kk = static_cast<std::size_t>(spec.kernel) * spec.kernel;
    ParamVector params(layout.total, 0.0);
    rng::Stream rng(seed);
    const double r1 = 1.0 / std::sqrt(static_cast<double>(kk));
    for (std::size_t i = layout.w1; i < layout.b1; ++i) params[i] = rng.uniform(-r1, r1);
    const double r2 = 1.0 / std::sqrt(static_cast<double>(c * kk));
    for (std::size_t i = layout.w2; i < layout.b2; ++i) params[i] = rng.uniform(-r2, r2);
    const double r3 = 1.0 / std::sqrt(static_cast<double>(c));
    for (std::size_t i = layout.w3; i < layout.b3; ++i) params[i] = rng.uniform(-r3, r3);
    return params;
}

namespace detail {

// Same-padded correlation: out[co] = bias[co] + sum_ci weights[co][ci] * in[ci].
// Plane-major buffers, weight layout [co][ci][ky][kx].
inline void conv_forward(const double* in, int c_in, int c_out, int h, int w, int k, const double* weights,
                         const double* bias, double* out) {
    const int off = k / 2;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int co = 0; co < c_out; ++co) {
        double* out_plane = out + co * plane;
        std::fill(out_plane, out_plane + plane, bias[co]);
        for (int ci = 0; ci < c_in; ++ci) {
            const double* in_plane = in + ci * plane;
            const double* wk = weights + (static_cast<std::size_t>(co) * c_in + ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                const int y0 = std::max(0, off - ky);
                const int y1 = std::min(h, h + off - ky);
                for (int kx = 0; kx < k; ++kx) {
                    const double wv = wk[ky * k + kx];
                    const int x0 = std::max(0, off - kx);
                    const int x1 = std::min(w, w + off - kx);
                    for (int y = y0; y < y1; ++y) {
                        double* orow = out_plane + static_cast<std::size_t>(y) * w;
                        const double* irow = in_plane + static_cast<std::size_t>(y + ky - off) * w + (kx - off);
                        for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                    }
                }
            }
        }
    }
}

// Accumulates parameter gradients and (optionally) the input gradient for the
// convolution above, given d_out = dL/d(pre-activation output).
inline void conv_backward(const double* in, const double* d_out, int c_in, int c_out, int h, int w, int k,
                          const double* weights, double* d_weights, double* d_bias, double* d_in) {
    const int off = k / 2;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int co = 0; co < c_out; ++co) {
        const double* dout_plane = d_out + co * plane;
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += dout_plane[i];
        d_bias[co] += acc;
        for (int ci = 0; ci < c_in; ++ci) {
            const double* in_plane = in + ci * plane;
            double* din_plane = d_in ? d_in + ci * plane : nullptr;
            const double* wk = weights + (static_cast<std::size_t>(co) * c_in + ci) * k * k;
            double* dwk = d_weights + (static_cast<std::size_t>(co) * c_in + ci) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                const int y0 = std::max(0, off - ky);
                const int y1 = std::min(h, h + off - ky);
                for (int kx = 0; kx < k; ++kx) {
                    const int x0 = std::max(0, off - kx);
                    const int x1 = std::min(w, w + off - kx);
                    double wgrad = 0.0;
                    const double wv = wk[ky * k + kx];
                    for (int y = y0; y < y1; ++y) {
                        const double* drow = dout_plane + static_cast<std::size_t>(y) * w;
                        const double* irow = in_plane + static_cast<std::size_t>(y + ky - off) * w + (kx - off);
                        double* dirow =
                            din_plane ? din_plane + static_cast<std::size_t>(y + ky - off) * w + (kx - off) : nullptr;
                        for (int x = x0; x < x1; ++x) {
                            wgrad += drow[x] * irow[x];
                            if (dirow) dirow[x] += wv * drow[x];
                        }
                    }
                    dwk[ky * k + kx] += wgrad;
                }
            }
        }
    }
}

}  // namespace detail

// Post-activation feature maps kept for the backward pass.
struct ForwardCache {
    std::vector<double> hidden1;  // tanh(conv1), C*H*W
    std::vector<double> hidden2;  // tanh(conv2), C*H*W
    Grid2D output;                // sigmoid(projection), H*W
};

inline void check_forward_shapes(const ModelSpec& spec, const ParamVector& params, const Grid2D& image) {
    if (image.height != spec.height || image.width != spec.width)
        throw DimensionError("forward: image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                             " does not match model spec " + std::to_string(spec.height) + "x" +
                             std::to_string(spec.width));
    if (params.size() != param_count(spec))
        throw DimensionError("forward: parameter vector length " + std::to_string(params.size()) +
                             " does not match spec count " + std::to_string(param_count(spec)));
}

inline ForwardCache forward_cached(const ModelSpec& spec, const ParamVector& params, const Grid2D& image) {
    check_forward_shapes(spec, params, image);
    const auto layout = param_layout(spec);
    const int c = spec.hidden_channels;
    const int h = spec.height, w = spec.width, k = spec.kernel;
    const std::size_t plane = spec.pixels();

    ForwardCache cache;
    cache.hidden1.assign(static_cast<std::size_t>(c) * plane, 0.0);
    detail::conv_forward(image.values.data(), 1, c, h, w, k, params.data() + layout.w1, params.data() + layout.b1,
                         cache.hidden1.data());
    for (auto& v : cache.hidden1) v = std::tanh(v);

    cache.hidden2.assign(static_cast<std::size_t>(c) * plane, 0.0);
    detail::conv_forward(cache.hidden1.data(), c, c, h, w, k, params.data() + layout.w2, params.data() + layout.b2,
                         cache.hidden2.data());
    for (auto& v : cache.hidden2) v = std::tanh(v);

    cache.output = Grid2D(h, w);
    const double* proj = params.data() + layout.w3;
    const double bias = params[layout.b3];
    for (std::size_t p = 0; p < plane; ++p) {
        double z = bias;
        for (int ci = 0; ci < c; ++ci) z += proj[ci] * cache.hidden2[ci * plane + p];
        cache.output.values[p] = 1.0 / (1.0 + std::exp(-z));
    }
    return cache;
}

// Per-pixel probabilities in [0,1], same shape as the input image.
inline Grid2D forward(const ModelSpec& spec, const ParamVector& params, const Grid2D& image) {
    return forward_cached(spec, params, image).output;
}

// dL/d(params) given dL/d(output probabilities); accumulates into grad, which
// must already have the layout length.
inline void backward_into(const ModelSpec& spec, const ParamVector& params, const Grid2D& image,
                          const ForwardCache& cache, const Grid2D& loss_grad_at_output, ParamVector& grad) {
    check_forward_shapes(spec, params, image);
    require_same_shape(loss_grad_at_output, cache.output, "backward");
    if (grad.size() != param_count(spec))
        throw DimensionError("backward: gradient buffer length mismatch");
    const auto layout = param_layout(spec);
    const int c = spec.hidden_channels;
    const int h = spec.height, w = spec.width, k = spec.kernel;
    const std::size_t plane = spec.pixels();

    // Output sigmoid.
    std::vector<double> dz3(plane);
    for (std::size_t p = 0; p < plane; ++p) {
        const double out = cache.output.values[p];
        dz3[p] = loss_grad_at_output.values[p] * out * (1.0 - out);
    }

    // 1x1 projection.
    const double* proj = params.data() + layout.w3;
    std::vector<double> d_hidden2(static_cast<std::size_t>(c) * plane);
    double db3 = 0.0;
    for (std::size_t p = 0; p < plane; ++p) db3 += dz3[p];
    grad[layout.b3] += db3;
    for (int ci = 0; ci < c; ++ci) {
        const double* h2 = cache.hidden2.data() + ci * plane;
        double* dh2 = d_hidden2.data() + ci * plane;
        double dw = 0.0;
        const double wv = proj[ci];
        for (std::size_t p = 0; p < plane; ++p) {
            dw += dz3[p] * h2[p];
            dh2[p] = wv * dz3[p];
        }
        grad[layout.w3 + ci] += dw;
    }

    // tanh after conv2.
    for (std::size_t i = 0; i < d_hidden2.size(); ++i)
        d_hidden2[i] *= 1.0 - cache.hidden2[i] * cache.hidden2[i];

    std::vector<double> d_hidden1(static_cast<std::size_t>(c) * plane, 0.0);
    detail::conv_backward(cache.hidden1.data(), d_hidden2.data(), c, c, h, w, k, params.data() + layout.w2,
                          grad.data() + layout.w2, grad.data() + layout.b2, d_hidden1.data());

    // tanh after conv1.
    for (std::size_t i = 0; i < d_hidden1.size(); ++i)
        d_hidden1[i] *= 1.0 - cache.hidden1[i] * cache.hidden1[i];

    detail::conv_backward(image.values.data(), d_hidden1.data(), 1, c, h, w, k, params.data() + layout.w1,
                          grad.data() + layout.w1, grad.data() + layout.b1, nullptr);
}

inline ParamVector backward(const ModelSpec& spec, const ParamVector& params, const Grid2D& image,
                            const Grid2D& loss_grad_at_output) {
    const auto cache = forward_cached(spec, params, image);
    ParamVector grad(param_count(spec), 0.0);
    backward_into(spec, params, image, cache, loss_grad_at_output, grad);
    return grad;
}

// Adam optimizer state. Single-owner mutable: one state per model per client.
struct AdamState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    long step = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_param_count(std::size_t n, double lr = 1e-3) {
        AdamState s;
        s.first_moment.assign(n, 0.0);
        s.second_moment.assign(n, 0.0);
        s.learning_rate = lr;
        return s;
    }
};

// Standard Adam update, in place. Deterministic given (params, grad, state).
inline void adam_step(ParamVector& params, const ParamVector& grad, AdamState& state) {
    if (params.size() != grad.size() || params.size() != state.first_moment.size())
        throw DimensionError("adam_step: length mismatch (params " + std::to_string(params.size()) + ", grad " +
                             std::to_string(grad.size()) + ", moments " +
                             std::to_string(state.first_moment.size()) + ")");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = state.beta1 * m + (1.0 - state.beta1) * grad[i];
        v = state.beta2 * v + (1.0 - state.beta2) * grad[i] * grad[i];
        const double m_hat = m / bc1;
        const double v_hat = v / bc2;
        params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
}

}  // namespace fedmix
