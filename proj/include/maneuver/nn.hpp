#pragma once

// Stacked LSTM classifier with a two-layer fully connected head, trained by
// exact backpropagation through time.
//
// Per time step each LSTM layer computes, with gates stacked in the order
// (input, forget, cell, output):
//   a   = W_ih x_t + W_hh h_{t-1} + b
//   i   = sigmoid(a_i), f = sigmoid(a_f), g = tanh(a_g), o = sigmoid(a_o)
//   c_t = f * c_{t-1} + i * g
//   h_t = o * tanh(c_t)
// Inverted dropout sits between stacked LSTM layers. The final hidden state
// of the top layer feeds fc1 -> ReLU -> dropout -> fc2 -> ReLU -> dropout
// -> classifier, which emits raw logits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "maneuver/error.hpp"
#include "maneuver/matrix.hpp"
#include "maneuver/random.hpp"

namespace maneuver {

inline constexpr const char* kGateOrder = "input,forget,cell,output";

struct ModelConfig {
    std::size_t n_lstm_layers = 2;
    std::size_t hidden_size = 32;
    double lstm_dropout = 0.7;
    double fc_dropout = 0.3;
    std::size_t fc1_size = 32;
    std::size_t fc2_size = 16;
    std::size_t n_features = 8;
    std::size_t n_classes = 8;
    std::uint64_t init_seed = 0;

    void validate() const {
        if (n_lstm_layers < 1 || hidden_size < 1 || fc1_size < 1 || fc2_size < 1 || n_features < 1 ||
            n_classes < 1) {
            throw ConfigError("model sizes must all be >= 1");
        }
        if (!(lstm_dropout >= 0.0 && lstm_dropout < 1.0) || !(fc_dropout >= 0.0 && fc_dropout < 1.0)) {
            throw ConfigError("dropout rates must lie in [0, 1)");
        }
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LstmLayerParams {
    Matrix w_ih;               // [4H x F]
    Matrix w_hh;               // [4H x H]
    std::vector<double> bias;  // [4H]

    std::size_t hidden() const { return w_hh.cols(); }
    std::size_t inputs() const { return w_ih.cols(); }

    friend bool operator==(const LstmLayerParams&, const LstmLayerParams&) = default;
};

struct DenseParams {
    Matrix weight;             // [out x in]
    std::vector<double> bias;  // [out]

    friend bool operator==(const DenseParams&, const DenseParams&) = default;
};

struct ModelParams {
    std::vector<LstmLayerParams> lstm;
    DenseParams fc1;
    DenseParams fc2;
    DenseParams classifier;

    // Every tensor in a fixed order: per LSTM layer (w_ih, w_hh, bias), then
    // fc1, fc2 and classifier (weight, bias).
    template <typename Self>
    static auto tensors_of(Self& self) {
        using Span = std::conditional_t<std::is_const_v<Self>, std::span<const double>, std::span<double>>;
        std::vector<Span> out;
        for (auto& l : self.lstm) {
            out.push_back(l.w_ih.values());
            out.push_back(l.w_hh.values());
            out.push_back(Span(l.bias));
        }
        for (auto* d : {&self.fc1, &self.fc2, &self.classifier}) {
            out.push_back(d->weight.values());
            out.push_back(Span(d->bias));
        }
        return out;
    }

    std::vector<std::span<double>> tensors() { return tensors_of(*this); }
    std::vector<std::span<const double>> tensors() const { return tensors_of(*this); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (auto t : tensors()) n += t.size();
        return n;
    }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct ManeuverModel {
    ModelConfig config;
    ModelParams params;
};

// Zero-filled parameter set with the shapes implied by the config.
inline ModelParams zero_params(const ModelConfig& cfg) {
    const std::size_t h = cfg.hidden_size;
    ModelParams p;
    for (std::size_t l = 0; l < cfg.n_lstm_layers; ++l) {
        const std::size_t in = l == 0 ? cfg.n_features : h;
        p.lstm.push_back({Matrix(4 * h, in), Matrix(4 * h, h), std::vector<double>(4 * h, 0.0)});
    }
    p.fc1 = {Matrix(cfg.fc1_size, h), std::vector<double>(cfg.fc1_size, 0.0)};
    p.fc2 = {Matrix(cfg.fc2_size, cfg.fc1_size), std::vector<double>(cfg.fc2_size, 0.0)};
    p.classifier = {Matrix(cfg.n_classes, cfg.fc2_size), std::vector<double>(cfg.n_classes, 0.0)};
    return p;
}

// Weights uniform in [-1/sqrt(fan), 1/sqrt(fan)] with fan = H for LSTM
// layers and fan = in_features for dense layers. Biases are zero except the
// forget-gate slice, which starts at 1.
inline ModelParams init_params(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p = zero_params(cfg);
    Rng rng(cfg.init_seed);
    const double lstm_bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_size));
    for (auto& l : p.lstm) {
        for (double& w : l.w_ih.values()) w = rng.uniform(-lstm_bound, lstm_bound);
        for (double& w : l.w_hh.values()) w = rng.uniform(-lstm_bound, lstm_bound);
        std::fill(l.bias.begin() + static_cast<std::ptrdiff_t>(cfg.hidden_size),
                  l.bias.begin() + static_cast<std::ptrdiff_t>(2 * cfg.hidden_size), 1.0);
    }
    for (auto* d : {&p.fc1, &p.fc2, &p.classifier}) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(d->weight.cols()));
        for (double& w : d->weight.values()) w = rng.uniform(-bound, bound);
    }
    return p;
}

inline ManeuverModel make_model(const ModelConfig& cfg) { return {cfg, init_params(cfg)}; }

namespace detail {

inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// out += W x
inline void gemv_add(const Matrix& w, std::span<const double> x, std::span<double> out) {
    const std::size_t cols = w.cols();
    for (std::size_t r = 0; r < w.rows(); ++r) {
        const double* row = w.values().data() + r * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        out[r] += acc;
    }
}

// out += W^T y
inline void gemv_t_add(const Matrix& w, std::span<const double> y, std::span<double> out) {
    const std::size_t cols = w.cols();
    for (std::size_t r = 0; r < w.rows(); ++r) {
        const double* row = w.values().data() + r * cols;
        const double yr = y[r];
        if (yr == 0.0) continue;
        for (std::size_t c = 0; c < cols; ++c) out[c] += row[c] * yr;
    }
}

// G += y x^T
inline void outer_add(Matrix& g, std::span<const double> y, std::span<const double> x) {
    const std::size_t cols = g.cols();
    for (std::size_t r = 0; r < g.rows(); ++r) {
        double* row = g.values().data() + r * cols;
        const double yr = y[r];
        if (yr == 0.0) continue;
        for (std::size_t c = 0; c < cols; ++c) row[c] += yr * x[c];
    }
}

inline void check_layer(const LstmLayerParams& p, std::size_t x, std::size_t h, std::size_t c) {
    const std::size_t hidden = p.hidden();
    if (p.w_ih.rows() != 4 * hidden || p.w_hh.rows() != 4 * hidden || p.bias.size() != 4 * hidden) {
        throw DimensionError("inconsistent LSTM layer parameter shapes");
    }
    if (x != p.inputs() || h != hidden || c != hidden) {
        throw DimensionError("LSTM cell input/state size mismatch");
    }
}

// One cell step. `gates` receives post-activation (i, f, g, o), `c` and `h`
// the new states.
inline void cell_step(const LstmLayerParams& p, std::span<const double> x, std::span<const double> h_prev,
                      std::span<const double> c_prev, std::span<double> gates, std::span<double> c,
                      std::span<double> h) {
    const std::size_t hidden = p.hidden();
    std::copy(p.bias.begin(), p.bias.end(), gates.begin());
    gemv_add(p.w_ih, x, gates);
    gemv_add(p.w_hh, h_prev, gates);
    for (std::size_t j = 0; j < hidden; ++j) {
        const double i = sigmoid(gates[j]);
        const double f = sigmoid(gates[hidden + j]);
        const double g = std::tanh(gates[2 * hidden + j]);
        const double o = sigmoid(gates[3 * hidden + j]);
        gates[j] = i;
        gates[hidden + j] = f;
        gates[2 * hidden + j] = g;
        gates[3 * hidden + j] = o;
        c[j] = f * c_prev[j] + i * g;
        h[j] = o * std::tanh(c[j]);
    }
}

}  // namespace detail

struct CellState {
    std::vector<double> h;
    std::vector<double> c;
};

inline CellState lstm_cell_forward(std::span<const double> x, std::span<const double> h_prev,
                                   std::span<const double> c_prev, const LstmLayerParams& params) {
    detail::check_layer(params, x.size(), h_prev.size(), c_prev.size());
    const std::size_t hidden = params.hidden();
    std::vector<double> gates(4 * hidden);
    CellState out{std::vector<double>(hidden), std::vector<double>(hidden)};
    detail::cell_step(params, x, h_prev, c_prev, gates, out.c, out.h);
    return out;
}

enum class Mode { train, eval };

namespace detail {

// Realized dropout masks for one sample. Entries hold the inverted-dropout
// multiplier (0 or 1/(1-p)).
struct SampleMasks {
    std::vector<std::vector<double>> lstm;  // per inter-layer gap: [T x H]
    std::vector<double> fc1;
    std::vector<double> fc2;
};

inline std::vector<double> draw_mask(Rng& rng, std::size_t n, double p) {
    std::vector<double> m(n, 1.0);
    if (p <= 0.0) return m;
    const double keep_scale = 1.0 / (1.0 - p);
    for (double& v : m) v = rng.uniform() >= p ? keep_scale : 0.0;
    return m;
}

inline std::vector<SampleMasks> draw_masks(const ModelConfig& cfg, std::size_t batch, std::size_t steps,
                                           Mode mode, std::uint64_t seed) {
    std::vector<SampleMasks> out(batch);
    if (mode == Mode::eval) return out;
    Rng rng(seed);
    for (auto& m : out) {
        for (std::size_t l = 1; l < cfg.n_lstm_layers; ++l) {
            m.lstm.push_back(draw_mask(rng, steps * cfg.hidden_size, cfg.lstm_dropout));
        }
        m.fc1 = draw_mask(rng, cfg.fc1_size, cfg.fc_dropout);
        m.fc2 = draw_mask(rng, cfg.fc2_size, cfg.fc_dropout);
    }
    return out;
}

// Activations of one sample kept for the backward pass.
struct LayerTrace {
    std::vector<double> inputs;  // [T x in], after dropout
    std::vector<double> gates;   // [T x 4H], post-activation
    std::vector<double> cells;   // [T x H]
    std::vector<double> hidden;  // [T x H]
};

struct SampleTrace {
    std::vector<LayerTrace> layers;
    std::vector<double> z1, d1, z2, d2;
};

inline void apply_mask(std::span<double> v, const std::vector<double>& mask) {
    if (mask.empty()) return;
    for (std::size_t j = 0; j < v.size(); ++j) v[j] *= mask[j];
}

// Forward pass of one [T x F] window; writes K logits.
inline void forward_sample(const ManeuverModel& m, std::span<const double> window, std::size_t steps,
                           const SampleMasks& masks, SampleTrace& tr, std::span<double> logits) {
    const auto& cfg = m.config;
    const std::size_t h = cfg.hidden_size;
    tr.layers.resize(cfg.n_lstm_layers);
    std::vector<double> zero(h, 0.0);
    for (std::size_t l = 0; l < cfg.n_lstm_layers; ++l) {
        const auto& p = m.params.lstm[l];
        auto& lt = tr.layers[l];
        const std::size_t in = p.inputs();
        if (l == 0) {
            lt.inputs.assign(window.begin(), window.end());
        } else {
            lt.inputs = tr.layers[l - 1].hidden;
            if (!masks.lstm.empty()) apply_mask(lt.inputs, masks.lstm[l - 1]);
        }
        lt.gates.assign(steps * 4 * h, 0.0);
        lt.cells.assign(steps * h, 0.0);
        lt.hidden.assign(steps * h, 0.0);
        for (std::size_t t = 0; t < steps; ++t) {
            std::span<const double> h_prev = t == 0 ? std::span<const double>(zero)
                                                    : std::span<const double>(lt.hidden.data() + (t - 1) * h, h);
            std::span<const double> c_prev = t == 0 ? std::span<const double>(zero)
                                                    : std::span<const double>(lt.cells.data() + (t - 1) * h, h);
            cell_step(p, std::span<const double>(lt.inputs.data() + t * in, in), h_prev, c_prev,
                      std::span<double>(lt.gates.data() + t * 4 * h, 4 * h),
                      std::span<double>(lt.cells.data() + t * h, h), std::span<double>(lt.hidden.data() + t * h, h));
        }
    }
    const std::span<const double> top(tr.layers.back().hidden.data() + (steps - 1) * h, h);

    const auto& fc1 = m.params.fc1;
    tr.z1 = fc1.bias;
    gemv_add(fc1.weight, top, tr.z1);
    tr.d1.resize(tr.z1.size());
    for (std::size_t j = 0; j < tr.z1.size(); ++j) tr.d1[j] = std::max(tr.z1[j], 0.0);
    apply_mask(tr.d1, masks.fc1);

    const auto& fc2 = m.params.fc2;
    tr.z2 = fc2.bias;
    gemv_add(fc2.weight, tr.d1, tr.z2);
    tr.d2.resize(tr.z2.size());
    for (std::size_t j = 0; j < tr.z2.size(); ++j) tr.d2[j] = std::max(tr.z2[j], 0.0);
    apply_mask(tr.d2, masks.fc2);

    const auto& cls = m.params.classifier;
    std::copy(cls.bias.begin(), cls.bias.end(), logits.begin());
    gemv_add(cls.weight, tr.d2, logits);
}

// Accumulates parameter gradients of one sample given dL/dlogits.
inline void backward_sample(const ManeuverModel& m, std::size_t steps, const SampleMasks& masks,
                            const SampleTrace& tr, std::span<const double> dlogits, ModelParams& grads) {
    const auto& cfg = m.config;
    const auto& p = m.params;
    const std::size_t h = cfg.hidden_size;
    const std::span<const double> top(tr.layers.back().hidden.data() + (steps - 1) * h, h);

    outer_add(grads.classifier.weight, dlogits, tr.d2);
    for (std::size_t k = 0; k < dlogits.size(); ++k) grads.classifier.bias[k] += dlogits[k];

    std::vector<double> dz2(cfg.fc2_size, 0.0);
    gemv_t_add(p.classifier.weight, dlogits, dz2);
    for (std::size_t j = 0; j < dz2.size(); ++j) {
        if (!masks.fc2.empty()) dz2[j] *= masks.fc2[j];
        if (tr.z2[j] <= 0.0) dz2[j] = 0.0;
    }
    outer_add(grads.fc2.weight, dz2, tr.d1);
    for (std::size_t j = 0; j < dz2.size(); ++j) grads.fc2.bias[j] += dz2[j];

    std::vector<double> dz1(cfg.fc1_size, 0.0);
    gemv_t_add(p.fc2.weight, dz2, dz1);
    for (std::size_t j = 0; j < dz1.size(); ++j) {
        if (!masks.fc1.empty()) dz1[j] *= masks.fc1[j];
        if (tr.z1[j] <= 0.0) dz1[j] = 0.0;
    }
    outer_add(grads.fc1.weight, dz1, top);
    for (std::size_t j = 0; j < dz1.size(); ++j) grads.fc1.bias[j] += dz1[j];

    // dL/dh_t of the current layer's outputs, [T x H].
    std::vector<double> dh_out(steps * h, 0.0);
    gemv_t_add(p.fc1.weight, dz1, std::span<double>(dh_out.data() + (steps - 1) * h, h));

    std::vector<double> dh_next(h), dc_next(h), da(4 * h);
    for (std::size_t l = cfg.n_lstm_layers; l-- > 0;) {
        const auto& lp = p.lstm[l];
        auto& lg = grads.lstm[l];
        const auto& lt = tr.layers[l];
        const std::size_t in = lp.inputs();
        std::vector<double> dx(steps * in, 0.0);
        std::fill(dh_next.begin(), dh_next.end(), 0.0);
        std::fill(dc_next.begin(), dc_next.end(), 0.0);
        for (std::size_t t = steps; t-- > 0;) {
            const double* gates = lt.gates.data() + t * 4 * h;
            const double* c = lt.cells.data() + t * h;
            for (std::size_t j = 0; j < h; ++j) {
                const double i = gates[j];
                const double f = gates[h + j];
                const double g = gates[2 * h + j];
                const double o = gates[3 * h + j];
                const double tc = std::tanh(c[j]);
                const double c_prev = t == 0 ? 0.0 : lt.cells[(t - 1) * h + j];
                const double dh = dh_out[t * h + j] + dh_next[j];
                const double d_o = dh * tc;
                const double dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                da[j] = dc * g * i * (1.0 - i);
                da[h + j] = dc * c_prev * f * (1.0 - f);
                da[2 * h + j] = dc * i * (1.0 - g * g);
                da[3 * h + j] = d_o * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            const std::span<const double> x(lt.inputs.data() + t * in, in);
            outer_add(lg.w_ih, da, x);
            if (t > 0) {
                outer_add(lg.w_hh, da, std::span<const double>(lt.hidden.data() + (t - 1) * h, h));
            }
            for (std::size_t r = 0; r < 4 * h; ++r) lg.bias[r] += da[r];
            std::fill(dh_next.begin(), dh_next.end(), 0.0);
            gemv_t_add(lp.w_hh, da, dh_next);
            if (l > 0) gemv_t_add(lp.w_ih, da, std::span<double>(dx.data() + t * in, in));
        }
        if (l > 0) {
            if (!masks.lstm.empty()) apply_mask(dx, masks.lstm[l - 1]);
            dh_out = std::move(dx);
        }
    }
}

inline void check_batch(const ModelConfig& cfg, const Tensor3& batch) {
    if (batch.dim1() < 1) throw DimensionError("windows must have at least one time step");
    if (batch.dim2() != cfg.n_features) {
        throw DimensionError("batch has " + std::to_string(batch.dim2()) + " features, model expects " +
                             std::to_string(cfg.n_features));
    }
}

}  // namespace detail

// Logits [B x K]. Train mode realizes dropout masks from `dropout_seed`;
// eval mode applies no dropout.
inline Matrix forward(const ManeuverModel& m, const Tensor3& batch, Mode mode, std::uint64_t dropout_seed = 0) {
    detail::check_batch(m.config, batch);
    const auto masks = detail::draw_masks(m.config, batch.dim0(), batch.dim1(), mode, dropout_seed);
    Matrix logits(batch.dim0(), m.config.n_classes);
    detail::SampleTrace tr;
    for (std::size_t b = 0; b < batch.dim0(); ++b) {
        detail::forward_sample(m, batch.item(b), batch.dim1(), masks[b], tr, logits.row(b));
    }
    return logits;
}

struct LossAndGrad {
    double loss = 0.0;
    Matrix grad;  // dL/dlogits, [B x K]
};

// Mean cross-entropy of softmax(logits) against integer targets.
inline LossAndGrad softmax_cross_entropy(const Matrix& logits, std::span<const int> targets) {
    if (targets.size() != logits.rows()) {
        throw DimensionError("target count differs from batch size");
    }
    const std::size_t k = logits.cols();
    const double inv_b = logits.rows() == 0 ? 0.0 : 1.0 / static_cast<double>(logits.rows());
    LossAndGrad out{0.0, Matrix(logits.rows(), k)};
    for (std::size_t b = 0; b < logits.rows(); ++b) {
        const int target = targets[b];
        if (target < 0 || static_cast<std::size_t>(target) >= k) {
            throw DataError("target " + std::to_string(target) + " outside [0, " + std::to_string(k) + ")");
        }
        const auto row = logits.row(b);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double v : row) sum += std::exp(v - mx);
        const double log_z = mx + std::log(sum);
        out.loss += (log_z - row[static_cast<std::size_t>(target)]) * inv_b;
        auto g = out.grad.row(b);
        for (std::size_t j = 0; j < k; ++j) {
            g[j] = std::exp(row[j] - log_z) * inv_b;
        }
        g[static_cast<std::size_t>(target)] -= inv_b;
    }
    return out;
}

struct BackwardResult {
    double loss = 0.0;
    ModelParams grads;
};

// Loss and exact parameter gradients in train mode, with the dropout masks
// realized from `dropout_seed` (the same masks forward() would draw).
inline BackwardResult backward(const ManeuverModel& m, const Tensor3& batch, std::span<const int> targets,
                               std::uint64_t dropout_seed) {
    detail::check_batch(m.config, batch);
    if (targets.size() != batch.dim0()) throw DimensionError("target count differs from batch size");
    const std::size_t steps = batch.dim1();
    const auto masks = detail::draw_masks(m.config, batch.dim0(), steps, Mode::train, dropout_seed);
    std::vector<detail::SampleTrace> traces(batch.dim0());
    Matrix logits(batch.dim0(), m.config.n_classes);
    for (std::size_t b = 0; b < batch.dim0(); ++b) {
        detail::forward_sample(m, batch.item(b), steps, masks[b], traces[b], logits.row(b));
    }
    auto lg = softmax_cross_entropy(logits, targets);
    BackwardResult out{lg.loss, zero_params(m.config)};
    for (std::size_t b = 0; b < batch.dim0(); ++b) {
        detail::backward_sample(m, steps, masks[b], traces[b], lg.grad.row(b), out.grads);
    }
    return out;
}

struct AdamState {
    ModelParams m;
    ModelParams v;
    std::uint64_t t = 0;
};

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

inline AdamState make_adam_state(const ModelConfig& cfg) { return {zero_params(cfg), zero_params(cfg), 0}; }

// Adam with bias correction; increments state.t before the update.
inline void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const AdamOptions& opt) {
    ++state.t;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.t));
    auto p = params.tensors();
    auto g = grads.tensors();
    auto m = state.m.tensors();
    auto v = state.v.tensors();
    if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
        throw DimensionError("optimizer state does not match parameters");
    }
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p[k].size() != g[k].size() || p[k].size() != m[k].size() || p[k].size() != v[k].size()) {
            throw DimensionError("optimizer state does not match parameters");
        }
        for (std::size_t i = 0; i < p[k].size(); ++i) {
            m[k][i] = opt.beta1 * m[k][i] + (1.0 - opt.beta1) * g[k][i];
            v[k][i] = opt.beta2 * v[k][i] + (1.0 - opt.beta2) * g[k][i] * g[k][i];
            const double m_hat = m[k][i] / bc1;
            const double v_hat = v[k][i] / bc2;
            p[k][i] -= opt.lr * m_hat / (std::sqrt(v_hat) + opt.eps);
        }
    }
}

inline void sgd_step(ModelParams& params, const ModelParams& grads, double lr) {
    auto p = params.tensors();
    auto g = grads.tensors();
    for (std::size_t k = 0; k < p.size(); ++k) {
        for (std::size_t i = 0; i < p[k].size(); ++i) p[k][i] -= lr * g[k][i];
    }
}

// Index of the largest entry; ties resolve to the lowest index.
inline int argmax(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
        if (row[j] > row[best]) best = j;
    }
    return static_cast<int>(best);
}

}  // namespace maneuver
