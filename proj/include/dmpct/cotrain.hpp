#pragma once

// Teacher/student multi-planar co-training and its baselines.
//
//   S <- S_L
//   for t = 1..T:
//       train the sagittal, coronal and axial models on the plane slices of S
//       pseudo-label every unlabelled volume by multi-planar fusion
//       S <- S_L + pseudo-labelled volumes
//   train the three models once more on S

#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "dmpct/backbone.hpp"
#include "dmpct/dataset.hpp"
#include "dmpct/fusion.hpp"
#include "dmpct/parallel.hpp"

namespace dmpct {

enum class RunAction : std::uint8_t { Train, PseudoLabel, Fuse };

constexpr std::string_view action_name(RunAction a) noexcept {
    switch (a) {
    case RunAction::Train: return "train";
    case RunAction::PseudoLabel: return "pseudo-label";
    case RunAction::Fuse: return "fuse";
    }
    return "?";
}

struct RunEvent {
    unsigned round = 0;
    std::optional<Plane> plane;
    RunAction action = RunAction::Train;
    std::size_t items = 0; // slices trained on, or volumes labelled
    double loss_first = std::nan("");
    double loss_last = std::nan("");
    double wall_ms = 0.0;
    std::string note;
};

/// Append-only event trace of a run.
class RunLog {
public:
    void append(RunEvent e) { events_.push_back(std::move(e)); }
    const std::vector<RunEvent>& events() const noexcept { return events_; }

    std::size_t count(RunAction a, std::optional<Plane> plane = std::nullopt) const {
        std::size_t n = 0;
        for (const auto& e : events_)
            if (e.action == a && (!plane || e.plane == plane)) ++n;
        return n;
    }

private:
    std::vector<RunEvent> events_;
};

/// A training failure, carrying the trace up to the failing pass.
class RunAborted : public TrainingError {
public:
    RunAborted(const std::string& what, RunLog log) : TrainingError(what), log_(std::move(log)) {}
    const RunLog& log() const noexcept { return log_; }

private:
    RunLog log_;
};

enum class Mode : std::uint8_t { Fcn, Spsl, Dmpct, DmpctConfident };

constexpr std::string_view mode_name(Mode m) noexcept {
    switch (m) {
    case Mode::Fcn: return "fcn";
    case Mode::Spsl: return "spsl";
    case Mode::Dmpct: return "dmpct";
    case Mode::DmpctConfident: return "dmpct-confident";
    }
    return "?";
}

inline std::optional<Mode> parse_mode(std::string_view s) {
    for (Mode m : {Mode::Fcn, Mode::Spsl, Mode::Dmpct, Mode::DmpctConfident})
        if (mode_name(m) == s) return m;
    return std::nullopt;
}

struct CotrainOptions {
    unsigned rounds = 2; // T
    TrainOptions train{};          // plane, seed and iterations are filled per pass
    std::uint64_t teacher_iterations = 600;
    std::uint64_t student_iterations = 1200;
    bool warm_start = false;
    std::vector<WindowSpec> windows = default_windows();
    std::uint64_t seed = 0;
    unsigned workers = 1;
    std::size_t top_n = 384; // confident-slice mode only
    bool record_provenance = true;
};

template <typename Model>
struct CotrainHooks {
    /// Called with the models trained in pass `round` (1..T+1).
    std::function<void(unsigned round, const PlaneModelBundle<Model>&)> on_models;
    /// Called with each pseudo-mask produced in round `round` (1..T).
    std::function<void(unsigned round, std::size_t unlabeled_index, const LabelMask&)> on_pseudo;
};

template <typename Model>
struct CotrainResult {
    PlaneModelBundle<Model> bundle;
    RunLog log;
    /// Pseudo-masks from the last round (empty for the supervised baseline).
    std::vector<LabelMask> pseudo_masks;
};

/// Seed of training pass `pass` (0 = teacher) for plane `p`.
inline std::uint64_t pass_seed(std::uint64_t master, Plane p, unsigned pass) {
    return derive_seed(master, "train", plane_index(p), pass);
}

/// Adds every slice of (volume, mask) along `p` to `set`.
inline void append_plane_slices(TrainingSet& set, const Volume& volume, const LabelMask& mask,
                                std::span<const WindowSpec> windows) {
    if (volume.dims() != mask.dims())
        throw DimsMismatch("volume " + to_string(volume.dims()) + " vs mask " + to_string(mask.dims()));
    const SliceStack<float> raw = slice(volume.voxels(), set.plane);
    SliceStack<std::uint8_t> labels = slice(mask.labels(), set.plane);
    for (std::size_t i = 0; i < raw.count(); ++i)
        set.add(channelize(raw.slices[i], windows), std::move(labels.slices[i]));
}

/// Channel-wise entropy-based slice confidence: minus the mean per-pixel entropy (nats).
inline double slice_confidence(const ProbMap& pm) {
    double total = 0.0;
    for (std::size_t i = 0; i < pm.pixels(); ++i) {
        double h = 0.0;
        for (float p : pm.row(i))
            if (p > 0.0f) h -= double(p) * std::log(double(p));
        total += h;
    }
    return pm.pixels() ? -total / double(pm.pixels()) : 0.0;
}

struct SliceSelection {
    std::vector<std::size_t> indices; // ascending
    bool truncated = false;           // top_n exceeded the number of candidates
};

/// Picks the `top_n` highest scores (ties go to the lower index); indices returned ascending.
inline SliceSelection select_top_scores(std::span<const double> scores, std::size_t top_n) {
    if (top_n < 1) throw InvalidArgument("top_n must be >= 1");
    SliceSelection sel;
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    sel.truncated = top_n > order.size();
    order.resize(std::min(top_n, order.size()));
    std::sort(order.begin(), order.end());
    sel.indices = std::move(order);
    return sel;
}

/// Most confident slices by mean per-pixel entropy.
inline SliceSelection select_confident_slices(std::span<const ProbMap> prob_maps, std::size_t top_n) {
    std::vector<double> scores;
    scores.reserve(prob_maps.size());
    for (const auto& pm : prob_maps) scores.push_back(slice_confidence(pm));
    return select_top_scores(scores, top_n);
}

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

/// Trains the three plane models; `build(p)` supplies plane p's training set.
template <SegmenterTrainer Trainer>
PlaneModelBundle<typename Trainer::model_type> train_round(
    const Trainer& trainer, const CotrainOptions& opts, unsigned pass, std::uint64_t iterations,
    const std::function<TrainingSet(Plane)>& build, const PlaneModelBundle<typename Trainer::model_type>* warm,
    RunLog& log, unsigned round) {
    using Model = typename Trainer::model_type;
    std::array<std::optional<TrainResult<Model>>, 3> results;
    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> ms{};
    try {
        parallel_for(3, opts.workers, [&](std::size_t i) {
            const auto start = std::chrono::steady_clock::now();
            const Plane p = kPlanes[i];
            const TrainingSet set = build(p);
            TrainOptions to = opts.train;
            to.plane = p;
            to.seed = pass_seed(opts.seed, p, pass);
            to.iterations = iterations;
            sizes[i] = set.size();
            results[i].emplace(trainer.train(set, to, warm ? &(*warm)[p] : nullptr));
            ms[i] = elapsed_ms(start);
        });
    } catch (const TrainingError& e) {
        throw RunAborted("round " + std::to_string(round) + ": " + e.what(), log);
    }
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& curve = results[i]->epoch_loss;
        for (double l : curve)
            if (!std::isfinite(l))
                throw RunAborted("non-finite loss while training the " + std::string(plane_name(kPlanes[i])) +
                                     " model in round " + std::to_string(round),
                                 log);
        RunEvent e;
        e.round = round;
        e.plane = kPlanes[i];
        e.items = sizes[i];
        if (!curve.empty()) {
            e.loss_first = curve.front();
            e.loss_last = curve.back();
        }
        e.wall_ms = ms[i];
        e.note = "iterations=" + std::to_string(iterations);
        log.append(std::move(e));
    }
    return PlaneModelBundle<Model>{{std::move(results[0]->model), std::move(results[1]->model),
                                    std::move(results[2]->model)}};
}

inline void check_dataset(const Dataset& data) {
    if (data.labeled.empty()) throw InvalidArgument("the labelled set is empty");
    data.validate();
    for (const auto& u : data.unlabeled)
        if (!u.volume.dims().valid()) throw InvalidArgument("unlabelled case " + u.id + " has invalid dims");
}

inline TrainingSet labeled_set(const Dataset& data, Plane p, std::span<const WindowSpec> windows) {
    TrainingSet set{p, data.num_classes, {}, {}};
    for (const auto& c : data.labeled) append_plane_slices(set, c.volume, c.mask, windows);
    return set;
}

inline void check_options(const CotrainOptions& opts, const Dataset& data) {
    if (opts.train.num_classes != data.num_classes)
        throw InvalidArgument("training options K=" + std::to_string(opts.train.num_classes) +
                              " but dataset K=" + std::to_string(data.num_classes));
    if (opts.windows.size() != opts.train.features.channels)
        throw InvalidArgument("window count must equal the feature channel count");
}

template <typename Model>
void check_bundle(const PlaneModelBundle<Model>& bundle, std::uint16_t num_classes) {
    if constexpr (requires(const Model& m) { m.num_classes; }) {
        for (Plane p : kPlanes)
            if (bundle[p].num_classes != num_classes)
                throw InvalidArgument(std::string(plane_name(p)) + " model has K=" +
                                      std::to_string(bundle[p].num_classes) + ", expected K=" +
                                      std::to_string(num_classes));
    }
}

} // namespace detail

/// Teacher: one model per plane, trained only on the labelled set.
template <SegmenterTrainer Trainer>
CotrainResult<typename Trainer::model_type> train_teacher(const Trainer& trainer, const Dataset& data,
                                                          const CotrainOptions& opts,
                                                          const CotrainHooks<typename Trainer::model_type>& hooks = {}) {
    detail::check_dataset(data);
    detail::check_options(opts, data);
    CotrainResult<typename Trainer::model_type> out;
    auto build = [&](Plane p) { return detail::labeled_set(data, p, opts.windows); };
    out.bundle = detail::train_round(trainer, opts, 0, opts.teacher_iterations, build, nullptr, out.log, 1);
    if (hooks.on_models) hooks.on_models(1, out.bundle);
    return out;
}

/// Fused pseudo-masks for every unlabelled volume.
template <SliceSegmenter Model>
std::vector<LabelMask> generate_pseudo_labels(const PlaneModelBundle<Model>& bundle,
                                              std::span<const UnlabeledCase> unlabeled, std::uint16_t num_classes,
                                              std::span<const WindowSpec> windows, unsigned workers = 1) {
    detail::check_bundle(bundle, num_classes);
    std::vector<std::optional<LabelMask>> masks(unlabeled.size());
    parallel_for(unlabeled.size(), workers, [&](std::size_t i) {
        FusionOptions fo;
        fo.record_provenance = false;
        masks[i].emplace(predict_volume(bundle, unlabeled[i].volume, windows, num_classes, fo).fused.labels);
    });
    std::vector<LabelMask> out;
    out.reserve(masks.size());
    for (auto& m : masks) out.push_back(std::move(*m));
    return out;
}

/// Supervised baseline: teacher only, inference still fuses the three planes.
template <SegmenterTrainer Trainer>
CotrainResult<typename Trainer::model_type> run_supervised(const Trainer& trainer, const Dataset& data,
                                                           const CotrainOptions& opts,
                                                           const CotrainHooks<typename Trainer::model_type>& hooks = {}) {
    return train_teacher(trainer, data, opts, hooks);
}

/// Multi-planar co-training.
template <SegmenterTrainer Trainer>
CotrainResult<typename Trainer::model_type> run_dmpct(const Trainer& trainer, const Dataset& data,
                                                      const CotrainOptions& opts,
                                                      const CotrainHooks<typename Trainer::model_type>& hooks = {}) {
    using Model = typename Trainer::model_type;
    if (opts.rounds < 1) throw InvalidArgument("T must be >= 1");
    detail::check_dataset(data);
    detail::check_options(opts, data);

    CotrainResult<Model> out;
    std::vector<LabelMask> pseudo;
    for (unsigned t = 1; t <= opts.rounds + 1; ++t) {
        auto build = [&](Plane p) {
            TrainingSet set = detail::labeled_set(data, p, opts.windows);
            for (std::size_t i = 0; i < pseudo.size(); ++i)
                append_plane_slices(set, data.unlabeled[i].volume, pseudo[i], opts.windows);
            return set;
        };
        const bool student = t > 1;
        const PlaneModelBundle<Model>* warm = (student && opts.warm_start) ? &out.bundle : nullptr;
        out.bundle = detail::train_round(trainer, opts, t - 1,
                                         student ? opts.student_iterations : opts.teacher_iterations, build, warm,
                                         out.log, t);
        if (hooks.on_models) hooks.on_models(t, out.bundle);
        if (t > opts.rounds) break;

        const auto start = std::chrono::steady_clock::now();
        pseudo = generate_pseudo_labels(out.bundle, std::span<const UnlabeledCase>(data.unlabeled),
                                        data.num_classes, opts.windows, opts.workers);
        const double ms = detail::elapsed_ms(start);
        out.log.append({t, std::nullopt, RunAction::PseudoLabel, pseudo.size(), std::nan(""), std::nan(""), ms,
                        "per-plane inference on unlabelled volumes"});
        out.log.append({t, std::nullopt, RunAction::Fuse, pseudo.size(), std::nan(""), std::nan(""), 0.0,
                        "multi-planar fusion"});
        if (hooks.on_pseudo)
            for (std::size_t i = 0; i < pseudo.size(); ++i) hooks.on_pseudo(t, i, pseudo[i]);
    }
    out.pseudo_masks = std::move(pseudo);
    return out;
}

/// Single-plane self-training: plane V is retrained on its own stacked predictions,
/// without fusion. The returned bundle is still fused at inference time.
template <SegmenterTrainer Trainer>
CotrainResult<typename Trainer::model_type> run_spsl(const Trainer& trainer, const Dataset& data,
                                                     const CotrainOptions& opts,
                                                     const CotrainHooks<typename Trainer::model_type>& hooks = {}) {
    using Model = typename Trainer::model_type;
    if (opts.rounds < 1) throw InvalidArgument("T must be >= 1");
    detail::check_dataset(data);
    detail::check_options(opts, data);

    CotrainResult<Model> out;
    // pseudo[plane][unlabeled index]
    std::array<std::vector<LabelMask>, 3> pseudo;
    const std::size_t n_unl = data.unlabeled.size();
    for (unsigned t = 1; t <= opts.rounds + 1; ++t) {
        auto build = [&](Plane p) {
            TrainingSet set = detail::labeled_set(data, p, opts.windows);
            const auto& own = pseudo[plane_index(p)];
            for (std::size_t i = 0; i < own.size(); ++i)
                append_plane_slices(set, data.unlabeled[i].volume, own[i], opts.windows);
            return set;
        };
        const bool student = t > 1;
        const PlaneModelBundle<Model>* warm = (student && opts.warm_start) ? &out.bundle : nullptr;
        out.bundle = detail::train_round(trainer, opts, t - 1,
                                         student ? opts.student_iterations : opts.teacher_iterations, build, warm,
                                         out.log, t);
        if (hooks.on_models) hooks.on_models(t, out.bundle);
        if (t > opts.rounds) break;

        for (Plane p : kPlanes) {
            const auto start = std::chrono::steady_clock::now();
            std::vector<std::optional<LabelMask>> masks(n_unl);
            parallel_for(n_unl, opts.workers, [&](std::size_t i) {
                PlanePrediction pp = predict_plane(out.bundle[p], data.unlabeled[i].volume, opts.windows, p);
                masks[i].emplace(std::move(pp.labels), data.num_classes);
            });
            auto& own = pseudo[plane_index(p)];
            own.clear();
            for (auto& m : masks) own.push_back(std::move(*m));
            out.log.append({t, p, RunAction::PseudoLabel, n_unl, std::nan(""), std::nan(""),
                            detail::elapsed_ms(start), "single-plane self-labelling"});
        }
    }
    return out;
}

/// Confident-slice co-training: each round, plane V's training set is S_L plus only the
/// `top_n` unlabelled slices on which M^V is most confident (lowest mean entropy),
/// labelled by multi-planar fusion.
template <SegmenterTrainer Trainer>
CotrainResult<typename Trainer::model_type> run_dmpct_confident(
    const Trainer& trainer, const Dataset& data, const CotrainOptions& opts,
    const CotrainHooks<typename Trainer::model_type>& hooks = {}) {
    using Model = typename Trainer::model_type;
    if (opts.rounds < 1) throw InvalidArgument("T must be >= 1");
    detail::check_dataset(data);
    detail::check_options(opts, data);

    CotrainResult<Model> out;
    std::vector<LabelMask> pseudo;
    // selected[plane] = flattened (volume * extent + slice) indices
    std::array<std::vector<std::size_t>, 3> selected;
    std::array<std::vector<std::size_t>, 3> plane_offsets;
    for (unsigned t = 1; t <= opts.rounds + 1; ++t) {
        auto build = [&](Plane p) {
            TrainingSet set = detail::labeled_set(data, p, opts.windows);
            const auto& offsets = plane_offsets[plane_index(p)];
            for (std::size_t flat : selected[plane_index(p)]) {
                const std::size_t v = std::size_t(std::upper_bound(offsets.begin(), offsets.end(), flat) -
                                                  offsets.begin()) - 1;
                const auto idx = static_cast<std::uint32_t>(flat - offsets[v]);
                set.add(channelize(data.unlabeled[v].volume, opts.windows, p, idx),
                        extract_slice(pseudo[v].labels(), p, idx));
            }
            return set;
        };
        const bool student = t > 1;
        const PlaneModelBundle<Model>* warm = (student && opts.warm_start) ? &out.bundle : nullptr;
        out.bundle = detail::train_round(trainer, opts, t - 1,
                                         student ? opts.student_iterations : opts.teacher_iterations, build, warm,
                                         out.log, t);
        if (hooks.on_models) hooks.on_models(t, out.bundle);
        if (t > opts.rounds) break;

        const auto start = std::chrono::steady_clock::now();
        pseudo = generate_pseudo_labels(out.bundle, std::span<const UnlabeledCase>(data.unlabeled),
                                        data.num_classes, opts.windows, opts.workers);
        out.log.append({t, std::nullopt, RunAction::PseudoLabel, pseudo.size(), std::nan(""), std::nan(""),
                        detail::elapsed_ms(start), "per-plane inference on unlabelled volumes"});
        out.log.append({t, std::nullopt, RunAction::Fuse, pseudo.size(), std::nan(""), std::nan(""), 0.0,
                        "multi-planar fusion"});
        if (hooks.on_pseudo)
            for (std::size_t i = 0; i < pseudo.size(); ++i) hooks.on_pseudo(t, i, pseudo[i]);

        for (Plane p : kPlanes) {
            auto& offsets = plane_offsets[plane_index(p)];
            offsets.assign(1, 0);
            for (const auto& u : data.unlabeled)
                offsets.push_back(offsets.back() + plane_extent(u.volume.dims(), p));
            std::vector<double> scores(offsets.back());
            parallel_for(data.unlabeled.size(), opts.workers, [&](std::size_t v) {
                const Volume& vol = data.unlabeled[v].volume;
                for (std::uint32_t s = 0; s < plane_extent(vol.dims(), p); ++s)
                    scores[offsets[v] + s] = slice_confidence(out.bundle[p].forward(channelize(vol, opts.windows, p, s)));
            });
            offsets.pop_back();
            if (scores.empty()) {
                selected[plane_index(p)].clear();
                continue;
            }
            SliceSelection sel = select_top_scores(scores, opts.top_n);
            RunEvent e;
            e.round = t;
            e.plane = p;
            e.action = RunAction::PseudoLabel;
            e.items = sel.indices.size();
            e.note = "confident slices selected" + std::string(sel.truncated ? " (top_n exceeds candidates)" : "");
            out.log.append(std::move(e));
            selected[plane_index(p)] = std::move(sel.indices);
        }
    }
    out.pseudo_masks = std::move(pseudo);
    return out;
}

/// Dispatches on `mode`.
template <SegmenterTrainer Trainer>
CotrainResult<typename Trainer::model_type> run_mode(Mode mode, const Trainer& trainer, const Dataset& data,
                                                     const CotrainOptions& opts,
                                                     const CotrainHooks<typename Trainer::model_type>& hooks = {}) {
    switch (mode) {
    case Mode::Fcn: return run_supervised(trainer, data, opts, hooks);
    case Mode::Spsl: return run_spsl(trainer, data, opts, hooks);
    case Mode::Dmpct: return run_dmpct(trainer, data, opts, hooks);
    case Mode::DmpctConfident: return run_dmpct_confident(trainer, data, opts, hooks);
    }
    throw InvalidArgument("unknown mode");
}

} // namespace dmpct
