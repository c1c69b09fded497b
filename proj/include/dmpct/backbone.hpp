#pragma once

// Reference per-plane segmenter: softmax over local patch features, optionally
// through one tanh hidden layer, fitted by mini-batch SGD on the mean per-pixel
// cross-entropy of each slice.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dmpct/segmenter.hpp"

namespace dmpct {

inline constexpr double kProbFloor = 1e-12;
/// Eigenvalue floor of the whitening transform, relative to the largest eigenvalue.
inline constexpr double kWhitenFloor = 1e-2;

/// Box-mean features for one slice via replicate-padded integral images.
class FeatureExtractor {
public:
    FeatureExtractor(const ChannelizedSlice& slice, const PatchFeatureSpec& spec)
        : spec_(&spec), width_(slice.width), height_(slice.height), pad_(spec.max_radius()) {
        if (slice.num_channels() != spec.channels)
            throw DimsMismatch("slice has " + std::to_string(slice.num_channels()) + " channels, feature spec expects " +
                               std::to_string(spec.channels));
        pw_ = width_ + 2 * pad_;
        ph_ = height_ + 2 * pad_;
        stride_ = pw_ + 1;
        integral_.assign(std::size_t(spec.channels) * (ph_ + 1) * stride_, 0.0);
        raw_ = &slice;
        for (std::uint32_t c = 0; c < spec.channels; ++c) {
            double* I = integral_.data() + std::size_t(c) * (ph_ + 1) * stride_;
            const Slice2<float>& ch = slice.channels[c];
            for (std::uint32_t r = 0; r < ph_; ++r) {
                const std::uint32_t sr = clamp_index(r, height_);
                double run = 0.0;
                for (std::uint32_t q = 0; q < pw_; ++q) {
                    run += ch.at(sr, clamp_index(q, width_));
                    I[std::size_t(r + 1) * stride_ + q + 1] = I[std::size_t(r) * stride_ + q + 1] + run;
                }
            }
        }
    }

    std::size_t dim() const noexcept { return spec_->feature_dim(); }

    /// Layout: [pixel value per channel] [radius-r mean per channel, for each radius] [row, col].
    void extract(std::uint32_t row, std::uint32_t col, std::span<double> out) const {
        std::size_t f = 0;
        for (std::uint32_t c = 0; c < spec_->channels; ++c) out[f++] = raw_->channels[c].at(row, col);
        for (std::uint32_t radius : spec_->pooling_radii) {
            const double area = double(2 * radius + 1) * double(2 * radius + 1);
            const std::uint32_t r0 = row + pad_ - radius, r1 = row + pad_ + radius + 1;
            const std::uint32_t c0 = col + pad_ - radius, c1 = col + pad_ + radius + 1;
            for (std::uint32_t c = 0; c < spec_->channels; ++c) {
                const double* I = integral_.data() + std::size_t(c) * (ph_ + 1) * stride_;
                const double sum = I[std::size_t(r1) * stride_ + c1] - I[std::size_t(r0) * stride_ + c1] -
                                   I[std::size_t(r1) * stride_ + c0] + I[std::size_t(r0) * stride_ + c0];
                out[f++] = sum / area;
            }
        }
        if (spec_->include_coords) {
            out[f++] = height_ > 1 ? double(row) / double(height_ - 1) : 0.0;
            out[f++] = width_ > 1 ? double(col) / double(width_ - 1) : 0.0;
        }
    }

private:
    std::uint32_t clamp_index(std::uint32_t padded, std::uint32_t extent) const noexcept {
        const std::int64_t v = std::int64_t(padded) - pad_;
        return static_cast<std::uint32_t>(std::clamp<std::int64_t>(v, 0, std::int64_t(extent) - 1));
    }

    const PatchFeatureSpec* spec_;
    const ChannelizedSlice* raw_ = nullptr;
    std::uint32_t width_, height_, pad_;
    std::uint32_t pw_ = 0, ph_ = 0, stride_ = 0;
    std::vector<double> integral_;
};

/// Feature vector for one pixel. Patch means use edge-replicated padding.
inline std::vector<double> featurize(const ChannelizedSlice& slice, const PatchFeatureSpec& spec, std::uint32_t row,
                                     std::uint32_t col) {
    if (row >= slice.height || col >= slice.width)
        throw IndexError("pixel (" + std::to_string(row) + ", " + std::to_string(col) + ") outside " +
                         std::to_string(slice.width) + "x" + std::to_string(slice.height) + " slice");
    FeatureExtractor fx(slice, spec);
    std::vector<double> out(fx.dim());
    fx.extract(row, col, out);
    return out;
}

/// Affine whitening applied before the model: x' = matrix * (x - shift).
struct InputNorm {
    std::vector<float> shift;
    std::vector<float> matrix; // dim x dim, row-major

    static InputNorm identity(std::size_t dim) {
        InputNorm n{std::vector<float>(dim, 0.0f), std::vector<float>(dim * dim, 0.0f)};
        for (std::size_t i = 0; i < dim; ++i) n.matrix[i * dim + i] = 1.0f;
        return n;
    }
    std::size_t size() const noexcept { return shift.size(); }
    bool valid() const noexcept { return matrix.size() == shift.size() * shift.size(); }
    /// x <- matrix * (x - shift)
    void apply(std::span<double> x) const noexcept {
        const std::size_t d = x.size();
        double centred[64];
        std::vector<double> heap;
        double* c = centred;
        if (d > 64) {
            heap.resize(d);
            c = heap.data();
        }
        for (std::size_t i = 0; i < d; ++i) c[i] = x[i] - double(shift[i]);
        for (std::size_t i = 0; i < d; ++i) {
            const float* row = matrix.data() + i * d;
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) acc += double(row[j]) * c[j];
            x[i] = acc;
        }
    }
    friend bool operator==(const InputNorm&, const InputNorm&) = default;
};

/// Model parameters. With `hidden == 0` the model is logits = weights * x + bias;
/// otherwise logits = weights * tanh(hidden_weights * x + hidden_bias) + bias.
template <typename Real>
struct Parameters {
    std::uint32_t inputs = 0;
    std::uint32_t hidden = 0;
    std::uint32_t classes = 0;
    std::vector<Real> hidden_weights; // hidden x inputs
    std::vector<Real> hidden_bias;    // hidden
    std::vector<Real> weights;        // classes x (hidden ? hidden : inputs)
    std::vector<Real> bias;           // classes

    Parameters() = default;
    Parameters(std::uint32_t in, std::uint32_t hid, std::uint32_t cls)
        : inputs(in), hidden(hid), classes(cls), hidden_weights(std::size_t(hid) * in), hidden_bias(hid),
          weights(std::size_t(cls) * (hid ? hid : in)), bias(cls) {}

    std::uint32_t top_inputs() const noexcept { return hidden ? hidden : inputs; }
    std::size_t count() const noexcept {
        return hidden_weights.size() + hidden_bias.size() + weights.size() + bias.size();
    }

    /// Visits every scalar in serialization order.
    template <typename F>
    void for_each(F&& f) {
        for (auto& v : hidden_weights) f(v);
        for (auto& v : hidden_bias) f(v);
        for (auto& v : weights) f(v);
        for (auto& v : bias) f(v);
    }
    template <typename F>
    void for_each(F&& f) const {
        for (const auto& v : hidden_weights) f(v);
        for (const auto& v : hidden_bias) f(v);
        for (const auto& v : weights) f(v);
        for (const auto& v : bias) f(v);
    }

    template <typename Other>
    Parameters<Other> cast() const {
        Parameters<Other> out(inputs, hidden, classes);
        auto conv = [](const std::vector<Real>& src, std::vector<Other>& dst) {
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<Other>(src[i]);
        };
        conv(hidden_weights, out.hidden_weights);
        conv(hidden_bias, out.hidden_bias);
        conv(weights, out.weights);
        conv(bias, out.bias);
        return out;
    }

    friend bool operator==(const Parameters&, const Parameters&) = default;
};

namespace detail {

/// Softmax probabilities for one feature vector; `hidden_act` receives tanh activations.
template <typename Real>
void class_probs(const Parameters<Real>& p, std::span<const double> x, std::span<double> hidden_act,
                 std::span<double> probs) {
    std::span<const double> top = x;
    if (p.hidden) {
        for (std::uint32_t j = 0; j < p.hidden; ++j) {
            double a = p.hidden_bias[j];
            const Real* w = p.hidden_weights.data() + std::size_t(j) * p.inputs;
            for (std::uint32_t i = 0; i < p.inputs; ++i) a += double(w[i]) * x[i];
            hidden_act[j] = std::tanh(a);
        }
        top = hidden_act.first(p.hidden);
    }
    const std::uint32_t n = p.top_inputs();
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::uint32_t k = 0; k < p.classes; ++k) {
        double z = p.bias[k];
        const Real* w = p.weights.data() + std::size_t(k) * n;
        for (std::uint32_t i = 0; i < n; ++i) z += double(w[i]) * top[i];
        probs[k] = z;
        zmax = std::max(zmax, z);
    }
    double denom = 0.0;
    for (std::uint32_t k = 0; k < p.classes; ++k) {
        probs[k] = std::exp(probs[k] - zmax);
        denom += probs[k];
    }
    for (std::uint32_t k = 0; k < p.classes; ++k) probs[k] /= denom;
}

inline double pixel_loss(double p_true) { return -std::log(std::max(p_true, kProbFloor)); }

/// Copy of `p` whose first layer acts on raw features: A' = A * M, c' = c - A' * shift,
/// so class_probs(fold_norm(p, n), x) == class_probs(p, n(x)).
inline Parameters<double> fold_norm(const Parameters<double>& p, const InputNorm& norm) {
    Parameters<double> f = p;
    const std::size_t d = p.inputs;
    auto& a = p.hidden ? f.hidden_weights : f.weights;
    auto& c = p.hidden ? f.hidden_bias : f.bias;
    const auto& a0 = p.hidden ? p.hidden_weights : p.weights;
    const std::size_t rows = c.size();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < d; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) acc += a0[r * d + j] * double(norm.matrix[j * d + i]);
            a[r * d + i] = acc;
        }
        for (std::size_t i = 0; i < d; ++i) c[r] -= a[r * d + i] * double(norm.shift[i]);
    }
    return f;
}

} // namespace detail

class SegmenterState;
ProbMap forward(const SegmenterState& state, const ChannelizedSlice& slice);

/// Trained weights of one plane's model plus the metadata needed to rebuild features.
class SegmenterState {
public:
    Plane plane = Plane::Axial;
    std::uint16_t num_classes = 0; // K; the model outputs K+1 classes
    PatchFeatureSpec features{};
    InputNorm norm;
    Parameters<float> params;
    std::uint64_t rng_seed = 0;
    std::uint64_t step_count = 0;

    std::uint32_t output_classes() const noexcept { return std::uint32_t(num_classes) + 1; }

    bool finite() const {
        bool ok = true;
        params.for_each([&](float v) { ok = ok && std::isfinite(v); });
        for (std::size_t i = 0; i < norm.size(); ++i)
            ok = ok && std::isfinite(norm.shift[i]);
        for (float v : norm.matrix) ok = ok && std::isfinite(v);
        return ok;
    }

    ProbMap forward(const ChannelizedSlice& s) const { return dmpct::forward(*this, s); }
    HardPrediction predict_hard(const ChannelizedSlice& s) const { return hard_from_probs(forward(s)); }

    friend bool operator==(const SegmenterState&, const SegmenterState&) = default;
};

/// Seeded initial state: zeros for the linear model, uniform +-0.05 weights with zero
/// biases when a hidden layer is configured.
inline SegmenterState initial_state(const TrainOptions& opts) {
    SegmenterState s;
    s.plane = opts.plane;
    s.num_classes = opts.num_classes;
    s.features = opts.features;
    s.rng_seed = opts.seed;
    s.norm = InputNorm::identity(opts.features.feature_dim());
    s.params = Parameters<float>(static_cast<std::uint32_t>(opts.features.feature_dim()), opts.hidden_width,
                                 std::uint32_t(opts.num_classes) + 1);
    if (opts.hidden_width > 0) {
        std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
        std::uniform_real_distribution<float> u(-0.05f, 0.05f);
        for (auto& w : s.params.hidden_weights) w = u(rng);
        for (auto& w : s.params.weights) w = u(rng);
    }
    return s;
}

inline ProbMap forward(const SegmenterState& state, const ChannelizedSlice& slice) {
    FeatureExtractor fx(slice, state.features);
    const auto p = detail::fold_norm(state.params.cast<double>(), state.norm);
    ProbMap out{slice.width, slice.height, state.output_classes(), {}};
    out.probs.resize(slice.pixels() * out.classes);
    std::vector<double> x(fx.dim()), h(p.hidden), probs(out.classes);
    for (std::uint32_t row = 0; row < slice.height; ++row)
        for (std::uint32_t col = 0; col < slice.width; ++col) {
            fx.extract(row, col, x);
            detail::class_probs(p, x, h, probs);
            const std::size_t base = (std::size_t(row) * slice.width + col) * out.classes;
            for (std::uint32_t k = 0; k < out.classes; ++k) out.probs[base + k] = static_cast<float>(probs[k]);
        }
    return out;
}

inline HardPrediction predict_hard(const SegmenterState& state, const ChannelizedSlice& slice) {
    return hard_from_probs(forward(state, slice));
}

/// One slice of a mini-batch. Empty `pixels` means every pixel.
struct BatchItem {
    const ChannelizedSlice* slice = nullptr;
    std::span<const std::uint8_t> labels;
    std::vector<std::uint32_t> pixels;
};

namespace detail {

inline void check_item(const BatchItem& item, std::uint32_t classes) {
    if (item.slice == nullptr) throw InvalidArgument("batch item has no slice");
    if (item.labels.size() != item.slice->pixels())
        throw DimsMismatch("label slice has " + std::to_string(item.labels.size()) + " pixels, image slice has " +
                           std::to_string(item.slice->pixels()));
    for (std::uint32_t px : item.pixels)
        if (px >= item.slice->pixels()) throw IndexError("sampled pixel index out of range");
    for (std::uint8_t y : item.labels)
        if (y >= classes) throw InvalidArgument("label " + std::to_string(y) + " outside model classes");
}

/// Mean cross-entropy over the batch (each item weighted equally). When `grad` is non-null
/// the analytic gradient of that mean is accumulated into it.
inline double batch_objective(const Parameters<double>& p, const PatchFeatureSpec& spec, const InputNorm& norm,
                              std::span<const BatchItem> batch, Parameters<double>* grad) {
    if (norm.size() != spec.feature_dim()) throw InvalidArgument("input normalisation width differs from feature width");
    if (batch.empty()) throw InvalidArgument("empty mini-batch");
    if (grad) *grad = Parameters<double>(p.inputs, p.hidden, p.classes);
    // Evaluate on raw features with the normalisation folded into the first layer; the
    // first-layer gradient is accumulated in raw space and mapped back at the end.
    const Parameters<double> q = fold_norm(p, norm);
    std::vector<double> x(spec.feature_dim()), h(p.hidden), probs(p.classes), dz(p.classes), dh(p.hidden);
    double total = 0.0;
    const std::uint32_t n_top = p.top_inputs();
    for (const BatchItem& item : batch) {
        check_item(item, p.classes);
        FeatureExtractor fx(*item.slice, spec);
        const std::size_t n = item.pixels.empty() ? item.slice->pixels() : item.pixels.size();
        const double scale = 1.0 / (double(n) * double(batch.size()));
        double item_loss = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const std::uint32_t px = item.pixels.empty() ? static_cast<std::uint32_t>(t) : item.pixels[t];
            const std::uint32_t row = px / item.slice->width, col = px % item.slice->width;
            fx.extract(row, col, x);
            class_probs(q, x, h, probs);
            const std::uint8_t y = item.labels[px];
            item_loss += pixel_loss(probs[y]);
            if (!grad) continue;
            for (std::uint32_t k = 0; k < p.classes; ++k) dz[k] = (probs[k] - (k == y ? 1.0 : 0.0)) * scale;
            std::span<const double> top = p.hidden ? std::span<const double>(h) : std::span<const double>(x);
            for (std::uint32_t k = 0; k < p.classes; ++k) {
                grad->bias[k] += dz[k];
                double* gw = grad->weights.data() + std::size_t(k) * n_top;
                for (std::uint32_t i = 0; i < n_top; ++i) gw[i] += dz[k] * top[i];
            }
            if (p.hidden) {
                for (std::uint32_t j = 0; j < p.hidden; ++j) {
                    double s = 0.0;
                    for (std::uint32_t k = 0; k < p.classes; ++k) s += p.weights[std::size_t(k) * n_top + j] * dz[k];
                    dh[j] = s * (1.0 - h[j] * h[j]);
                }
                for (std::uint32_t j = 0; j < p.hidden; ++j) {
                    grad->hidden_bias[j] += dh[j];
                    double* gw = grad->hidden_weights.data() + std::size_t(j) * p.inputs;
                    for (std::uint32_t i = 0; i < p.inputs; ++i) gw[i] += dh[j] * x[i];
                }
            }
        }
        total += item_loss / double(n);
    }
    if (grad) {
        // dA = (G_raw - g_c * shift^T) * M^T
        const std::size_t d = p.inputs;
        auto& ga = p.hidden ? grad->hidden_weights : grad->weights;
        const auto& gc = p.hidden ? grad->hidden_bias : grad->bias;
        std::vector<double> centred(d);
        for (std::size_t r = 0; r < gc.size(); ++r) {
            for (std::size_t i = 0; i < d; ++i) centred[i] = ga[r * d + i] - gc[r] * double(norm.shift[i]);
            for (std::size_t j = 0; j < d; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < d; ++i) acc += centred[i] * double(norm.matrix[j * d + i]);
                ga[r * d + j] = acc;
            }
        }
    }
    return total / double(batch.size());
}

} // namespace detail

/// Mean per-pixel cross-entropy of `state` on one labelled slice (natural log).
inline double loss(const SegmenterState& state, const ChannelizedSlice& slice, std::span<const std::uint8_t> labels) {
    if (labels.size() != slice.pixels())
        throw DimsMismatch("label slice has " + std::to_string(labels.size()) + " pixels, image slice has " +
                           std::to_string(slice.pixels()));
    BatchItem item{&slice, labels, {}};
    return detail::batch_objective(state.params.cast<double>(), state.features, state.norm, std::span(&item, 1),
                                   nullptr);
}

inline double loss(const SegmenterState& state, const ChannelizedSlice& slice, const Slice2<std::uint8_t>& labels) {
    if (labels.width != slice.width || labels.height != slice.height)
        throw DimsMismatch("label slice " + std::to_string(labels.width) + "x" + std::to_string(labels.height) +
                           " vs image slice " + std::to_string(slice.width) + "x" + std::to_string(slice.height));
    return loss(state, slice, std::span<const std::uint8_t>(labels.data));
}

/// Batch objective and analytic gradient at double-precision parameters.
inline double batch_loss(const Parameters<double>& p, const PatchFeatureSpec& spec, const InputNorm& norm,
                         std::span<const BatchItem> batch) {
    return detail::batch_objective(p, spec, norm, batch, nullptr);
}
inline Parameters<double> batch_gradient(const Parameters<double>& p, const PatchFeatureSpec& spec,
                                         const InputNorm& norm, std::span<const BatchItem> batch,
                                         double* loss_out = nullptr) {
    Parameters<double> g;
    const double l = detail::batch_objective(p, spec, norm, batch, &g);
    if (loss_out) *loss_out = l;
    return g;
}

namespace detail {

inline std::vector<double> flatten(const Parameters<double>& p) {
    std::vector<double> out;
    out.reserve(p.count());
    p.for_each([&](double v) { out.push_back(v); });
    return out;
}

/// Per-run optimiser memory: first/second moment estimates and the step counter.
struct OptimizerMemory {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;
};

/// One update of the batch-mean loss.
///   Sgd:      theta -= lr * g, with heavy-ball momentum m <- momentum * m + g when momentum > 0
///   Adam:     bias-corrected moments with (beta1, beta2) = (momentum, 0.999), eps 1e-8
/// `memory` may be null for memoryless plain SGD.
inline SegmenterState optimizer_step(const SegmenterState& state, std::span<const BatchItem> batch,
                                     double learning_rate, Optimizer kind, double momentum, OptimizerMemory* memory,
                                     double* loss_out) {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw InvalidArgument("learning rate must be a finite non-negative number");
    const auto p = state.params.cast<double>();
    double l = 0.0;
    const auto g = flatten(batch_gradient(p, state.features, state.norm, batch, &l));
    bool finite = std::isfinite(l);
    for (double v : g) finite = finite && std::isfinite(v);
    if (!finite) {
        std::ostringstream msg;
        msg << "non-finite gradient at step " << state.step_count << " (" << plane_name(state.plane)
            << " plane, loss " << l << ")";
        throw TrainingError(msg.str());
    }
    std::vector<double> step = g;
    if (memory) {
        if (memory->m.size() != g.size()) *memory = {std::vector<double>(g.size()), std::vector<double>(g.size()), 0};
        ++memory->t;
        if (kind == Optimizer::Adam) {
            constexpr double beta2 = 0.999, eps = 1e-8;
            const double c1 = 1.0 - std::pow(momentum, double(memory->t));
            const double c2 = 1.0 - std::pow(beta2, double(memory->t));
            for (std::size_t i = 0; i < g.size(); ++i) {
                memory->m[i] = momentum * memory->m[i] + (1.0 - momentum) * g[i];
                memory->v[i] = beta2 * memory->v[i] + (1.0 - beta2) * g[i] * g[i];
                const double mh = c1 > 0 ? memory->m[i] / c1 : memory->m[i];
                step[i] = mh / (std::sqrt(memory->v[i] / c2) + eps);
            }
        } else if (momentum != 0.0) {
            for (std::size_t i = 0; i < g.size(); ++i) step[i] = memory->m[i] = momentum * memory->m[i] + g[i];
        }
    }
    SegmenterState next = state;
    if (learning_rate != 0.0) {
        std::size_t i = 0;
        auto it = p;
        it.for_each([&](double& v) {
            v -= learning_rate * step[i];
            ++i;
        });
        next.params = it.cast<float>();
    }
    ++next.step_count;
    if (loss_out) *loss_out = l;
    return next;
}

} // namespace detail

/// One plain SGD update on the batch-mean loss: theta <- theta - lr * grad.
/// The pre-update loss is returned through `loss_out`.
inline SegmenterState sgd_step(const SegmenterState& state, std::span<const BatchItem> batch, double learning_rate,
                               double* loss_out = nullptr) {
    return detail::optimizer_step(state, batch, learning_rate, Optimizer::Sgd, 0.0, nullptr, loss_out);
}

/// ZCA whitening fitted over every pixel of up to `max_slices` evenly spaced slices:
/// shift = feature mean, matrix = C^(-1/2) with eigenvalues floored at
/// kWhitenFloor * max eigenvalue so collinear features stay bounded.
inline InputNorm fit_input_norm(const TrainingSet& set, const PatchFeatureSpec& spec, std::size_t max_slices = 64) {
    const std::size_t dim = spec.feature_dim();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(Eigen::Index(dim));
    Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(Eigen::Index(dim), Eigen::Index(dim));
    std::vector<double> x(dim);
    std::size_t n = 0;
    const std::size_t stride = std::max<std::size_t>(1, set.size() / max_slices);
    for (std::size_t i = 0; i < set.size(); i += stride) {
        const ChannelizedSlice& s = set.slices[i];
        FeatureExtractor fx(s, spec);
        for (std::uint32_t row = 0; row < s.height; ++row)
            for (std::uint32_t col = 0; col < s.width; ++col) {
                fx.extract(row, col, x);
                const Eigen::Map<const Eigen::VectorXd> v(x.data(), Eigen::Index(dim));
                sum += v;
                outer.selfadjointView<Eigen::Lower>().rankUpdate(v);
                ++n;
            }
    }
    InputNorm norm = InputNorm::identity(dim);
    if (n == 0) return norm;
    const Eigen::VectorXd mean = sum / double(n);
    Eigen::MatrixXd cov = outer.selfadjointView<Eigen::Lower>();
    cov = cov / double(n) - mean * mean.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw TrainingError("input covariance eigendecomposition failed");
    const double top = std::max(eig.eigenvalues().maxCoeff(), 1e-12);
    Eigen::VectorXd inv_sqrt(static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < Eigen::Index(dim); ++i)
        inv_sqrt[i] = 1.0 / std::sqrt(std::max(eig.eigenvalues()[i], 0.0) + kWhitenFloor * top);
    const Eigen::MatrixXd zca = eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();
    for (std::size_t r = 0; r < dim; ++r) {
        norm.shift[r] = static_cast<float>(mean[Eigen::Index(r)]);
        for (std::size_t c = 0; c < dim; ++c)
            norm.matrix[r * dim + c] = static_cast<float>(zca(Eigen::Index(r), Eigen::Index(c)));
    }
    return norm;
}

/// Fits a SegmenterState on one plane's slices. A fresh state first fits its input
/// whitening to the set; a warm start keeps the previous one. Slice order is reshuffled every epoch and
/// `batch_pixels` pixels are drawn (with replacement) per slice visit; updates use
/// heavy-ball momentum (`opts.momentum`, 0 gives plain SGD); both are driven
/// by `opts.seed`, so the result is a pure function of (opts, set, warm).
inline TrainResult<SegmenterState> train(const TrainingSet& set, const TrainOptions& opts,
                                         const SegmenterState* warm = nullptr) {
    if (set.empty()) throw InvalidArgument("cannot train on an empty training set");
    if (set.slices.size() != set.labels.size()) throw DimsMismatch("training set slice/label count mismatch");
    if (opts.batch_slices == 0) throw InvalidArgument("batch_slices must be >= 1");
    if (!(opts.learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
    if (!(opts.momentum >= 0.0 && opts.momentum < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
    for (std::size_t i = 0; i < set.size(); ++i)
        if (set.labels[i].width != set.slices[i].width || set.labels[i].height != set.slices[i].height)
            throw DimsMismatch("training slice " + std::to_string(i) + " label dims differ from image dims");

    SegmenterState state = warm ? *warm : initial_state(opts);
    if (!warm && opts.iterations > 0) state.norm = fit_input_norm(set, opts.features);
    if (warm) {
        if (warm->num_classes != opts.num_classes || !(warm->features == opts.features) ||
            warm->params.hidden != opts.hidden_width)
            throw InvalidArgument("warm-start state does not match training options");
        state.plane = opts.plane;
        state.rng_seed = opts.seed;
    }

    TrainResult<SegmenterState> result{std::move(state), {}};
    if (opts.iterations == 0) return result;

    std::mt19937_64 rng(opts.seed);
    std::vector<std::size_t> order(set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();
    const std::size_t steps_per_epoch = std::max<std::size_t>(1, (set.size() + opts.batch_slices - 1) / opts.batch_slices);

    std::vector<BatchItem> batch;
    detail::OptimizerMemory memory;
    double epoch_sum = 0.0;
    std::size_t epoch_steps = 0;
    for (std::uint64_t it = 0; it < opts.iterations; ++it) {
        batch.clear();
        for (std::uint32_t b = 0; b < opts.batch_slices && b < set.size(); ++b) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            const std::size_t idx = order[cursor++];
            BatchItem item{&set.slices[idx], std::span<const std::uint8_t>(set.labels[idx].data), {}};
            const std::size_t npx = set.slices[idx].pixels();
            if (opts.batch_pixels > 0 && opts.batch_pixels < npx) {
                std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(npx - 1));
                item.pixels.resize(opts.batch_pixels);
                for (auto& px : item.pixels) px = pick(rng);
            }
            batch.push_back(std::move(item));
        }
        double l = 0.0;
        double lr = opts.learning_rate;
        if (opts.cosine_decay)
            lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * double(it) / double(opts.iterations)));
        result.model = detail::optimizer_step(result.model, batch, lr, opts.optimizer, opts.momentum, &memory, &l);
        epoch_sum += l;
        if (++epoch_steps == steps_per_epoch) {
            result.epoch_loss.push_back(epoch_sum / double(epoch_steps));
            epoch_sum = 0.0;
            epoch_steps = 0;
        }
    }
    if (epoch_steps > 0) result.epoch_loss.push_back(epoch_sum / double(epoch_steps));
    return result;
}

/// SegmenterTrainer adapter for the reference model.
struct ReferenceTrainer {
    using model_type = SegmenterState;

    TrainResult<SegmenterState> train(const TrainingSet& set, const TrainOptions& opts,
                                      const SegmenterState* warm) const {
        return dmpct::train(set, opts, warm);
    }
};

static_assert(SegmenterTrainer<ReferenceTrainer>);

} // namespace dmpct
