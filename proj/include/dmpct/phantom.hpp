#pragma once

// Seeded synthetic volumes with geometric "organs".

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dmpct/dataset.hpp"
#include "dmpct/parallel.hpp"
#include "dmpct/volume.hpp"

namespace dmpct {

enum class OrganShape : std::uint8_t { Ellipsoid, Capsule };

struct OrganSpec {
    OrganShape shape = OrganShape::Ellipsoid;
    /// Ellipsoid: semi-axes (x, y, z). Capsule: (radius, half length, unused).
    std::array<float, 3> size{4.0f, 4.0f, 4.0f};
    float hu_mean = 0.0f;
    float hu_std = 0.0f;
    /// Fixed centre in voxel coordinates; random placement when empty.
    std::optional<std::array<float, 3>> center;
};

class PlacementError : public Error {
public:
    using Error::Error;
};

struct PhantomSpec {
    Dims dims{48, 48, 48};
    std::vector<OrganSpec> organs;
    float background_mean = -60.0f;
    float background_std = 15.0f;
    float noise_sigma = 0.0f;
    /// Per-case shift of every organ mean, drawn once per case from N(0, case_hu_jitter).
    float case_hu_jitter = 0.0f;
    /// Relative per-axis size jitter, uniform in [-size_jitter, +size_jitter].
    float size_jitter = 0.0f;
    /// Uniform per-axis offset (voxels) applied to organs with a fixed centre.
    float position_jitter = 0.0f;
    std::uint64_t placement_seed = 0;
    /// Distribution-shift knobs.
    float hu_offset = 0.0f;
    float size_scale = 1.0f;

    std::uint16_t num_classes() const noexcept { return static_cast<std::uint16_t>(organs.size()); }

    void validate() const {
        if (!dims.valid()) throw InvalidArgument("phantom dims must be >= 1");
        if (organs.empty() || organs.size() > 255) throw InvalidArgument("phantom needs 1..255 organs");
        if (background_std < 0 || noise_sigma < 0 || case_hu_jitter < 0 || size_jitter < 0 || position_jitter < 0 || size_jitter >= 1)
            throw InvalidArgument("phantom standard deviations must be >= 0 and size_jitter < 1");
        if (!(size_scale > 0)) throw InvalidArgument("size_scale must be positive");
        for (const auto& o : organs) {
            if (o.hu_std < 0) throw InvalidArgument("organ hu_std must be >= 0");
            for (float s : o.size)
                if (!(s >= 0)) throw InvalidArgument("organ sizes must be >= 0");
        }
    }

    /// Stable text form, hashed into the manifest.
    std::string describe() const {
        std::ostringstream s;
        s.precision(9);
        s << "dims=" << to_string(dims) << ";bg=" << background_mean << "," << background_std
          << ";noise=" << noise_sigma << ";case_jitter=" << case_hu_jitter << ";size_jitter=" << size_jitter << ";position_jitter=" << position_jitter
          << ";placement_seed=" << placement_seed << ";offset=" << hu_offset << ";scale=" << size_scale;
        for (const auto& o : organs) {
            s << ";organ=" << int(o.shape) << ":" << o.size[0] << "," << o.size[1] << "," << o.size[2] << ":"
              << o.hu_mean << "," << o.hu_std;
            if (o.center) s << "@" << (*o.center)[0] << "," << (*o.center)[1] << "," << (*o.center)[2];
        }
        return s.str();
    }
    std::uint64_t hash() const { return hash_tag(describe()); }
};

/// Default desk-scale phantom: K organs with means -20 + step*k HU. Organ 1 is a large
/// ellipsoid, organ 2 a capsule, organ 3 a medium ellipsoid and the last organ a small
/// sphere of radius ~3. Extra organs alternate shapes at medium size.
inline PhantomSpec default_phantom(std::uint16_t organs = 4, float hu_step = 45.0f, float organ_std = 12.0f) {
    PhantomSpec spec;
    for (std::uint16_t k = 1; k <= organs; ++k) {
        OrganSpec o;
        o.hu_mean = -20.0f + hu_step * float(k);
        o.hu_std = organ_std;
        if (k == organs && organs > 1) {
            o.size = {3.0f, 3.0f, 3.0f};
        } else if (k == 1) {
            o.size = {11.0f, 8.0f, 9.0f};
        } else if (k % 2 == 0) {
            o.shape = OrganShape::Capsule;
            o.size = {4.0f, 9.0f, 0.0f};
        } else {
            o.size = {7.0f, 6.0f, 8.0f};
        }
        spec.organs.push_back(o);
    }
    return spec;
}

namespace detail {

struct PlacedOrgan {
    OrganShape shape;
    std::array<double, 3> center;
    std::array<double, 3> extent; // half extents of the bounding box
    std::array<double, 3> axes;   // ellipsoid semi-axes
    double radius = 0;            // capsule
    std::array<double, 3> dir{};  // capsule unit axis
    double half_length = 0;

    bool contains(double x, double y, double z) const noexcept {
        const double dx = x - center[0], dy = y - center[1], dz = z - center[2];
        if (shape == OrganShape::Ellipsoid) {
            auto term = [](double d, double a) { return a > 0 ? (d / a) * (d / a) : (d == 0 ? 0.0 : 2.0); };
            return term(dx, axes[0]) + term(dy, axes[1]) + term(dz, axes[2]) <= 1.0;
        }
        double t = dx * dir[0] + dy * dir[1] + dz * dir[2];
        t = std::clamp(t, -half_length, half_length);
        const double px = dx - t * dir[0], py = dy - t * dir[1], pz = dz - t * dir[2];
        return px * px + py * py + pz * pz <= radius * radius;
    }
};

/// Voxel (x, y, z) bounds of the organ's bounding box clipped to the grid.
inline std::array<std::int64_t, 6> clip_box(const PlacedOrgan& o, const Dims& dims) {
    std::array<std::int64_t, 6> b{};
    const std::array<std::uint32_t, 3> ext{dims.w, dims.h, dims.d};
    for (int a = 0; a < 3; ++a) {
        b[2 * a] = std::max<std::int64_t>(0, std::int64_t(std::floor(o.center[a] - o.extent[a])));
        b[2 * a + 1] = std::min<std::int64_t>(ext[a] - 1, std::int64_t(std::ceil(o.center[a] + o.extent[a])));
    }
    return b;
}

} // namespace detail

/// Deterministic (spec, case_seed) -> (volume, mask). Organs are placed in index order and
/// a voxel keeps the first organ that claims it.
inline std::pair<Volume, LabelMask> generate_case(const PhantomSpec& spec, std::uint64_t case_seed) {
    spec.validate();
    const Dims dims = spec.dims;
    std::mt19937_64 place_rng(derive_seed(case_seed, "placement", spec.placement_seed));
    std::mt19937_64 noise_rng(derive_seed(case_seed, "noise"));

    Grid3<std::uint8_t> labels(dims, 0);
    const std::array<double, 3> ext{double(dims.w), double(dims.h), double(dims.d)};
    constexpr int kAttempts = 64;

    for (std::size_t k = 0; k < spec.organs.size(); ++k) {
        const OrganSpec& os = spec.organs[k];
        const auto label = static_cast<std::uint8_t>(k + 1);
        std::optional<detail::PlacedOrgan> best;
        std::size_t best_overlap = 0;
        for (int attempt = 0; attempt < kAttempts; ++attempt) {
            detail::PlacedOrgan o{};
            o.shape = os.shape;
            auto jit = [&](std::mt19937_64& rng) {
                return spec.size_jitter > 0
                           ? std::uniform_real_distribution<double>(-spec.size_jitter, spec.size_jitter)(rng)
                           : 0.0;
            };
            const double scale = spec.size_scale;
            if (os.shape == OrganShape::Ellipsoid) {
                for (int a = 0; a < 3; ++a) {
                    o.axes[a] = os.size[a] * scale * (1.0 + jit(place_rng));
                    o.extent[a] = o.axes[a];
                }
            } else {
                o.radius = os.size[0] * scale * (1.0 + jit(place_rng));
                o.half_length = os.size[1] * scale * (1.0 + jit(place_rng));
                std::normal_distribution<double> g(0.0, 1.0);
                double n2 = 0;
                do {
                    for (auto& c : o.dir) c = g(place_rng);
                    n2 = o.dir[0] * o.dir[0] + o.dir[1] * o.dir[1] + o.dir[2] * o.dir[2];
                } while (n2 < 1e-12);
                for (auto& c : o.dir) c /= std::sqrt(n2);
                for (int a = 0; a < 3; ++a) o.extent[a] = o.half_length * std::abs(o.dir[a]) + o.radius;
            }
            bool fits = true;
            for (int a = 0; a < 3; ++a) {
                const double lo = o.extent[a], hi = ext[a] - 1.0 - o.extent[a];
                if (os.center) {
                    o.center[a] = (*os.center)[a];
                    if (spec.position_jitter > 0) {
                        o.center[a] += std::uniform_real_distribution<double>(-spec.position_jitter,
                                                                             spec.position_jitter)(place_rng);
                        if (lo <= hi) o.center[a] = std::clamp(o.center[a], lo, hi);
                    }
                    if (o.center[a] < lo || o.center[a] > hi) fits = false;
                } else if (lo <= hi) {
                    o.center[a] = std::uniform_real_distribution<double>(lo, hi)(place_rng);
                } else {
                    fits = false;
                }
            }
            if (!fits) continue;
            if (os.center && !(spec.position_jitter > 0)) {
                best = o;
                break;
            }
            const auto b = detail::clip_box(o, dims);
            std::size_t overlap = 0, inside = 0;
            for (auto z = b[4]; z <= b[5]; ++z)
                for (auto y = b[2]; y <= b[3]; ++y)
                    for (auto x = b[0]; x <= b[1]; ++x)
                        if (o.contains(double(x), double(y), double(z))) {
                            ++inside;
                            if (labels(std::uint32_t(x), std::uint32_t(y), std::uint32_t(z)) != 0) ++overlap;
                        }
            if (!best || overlap < best_overlap) {
                best = o;
                best_overlap = overlap;
            }
            if (overlap * 10 <= inside) break;
        }
        if (!best)
            throw PlacementError("organ " + std::to_string(k + 1) + " does not fit inside " + to_string(dims) +
                                 " after " + std::to_string(kAttempts) + " attempts");
        const auto b = detail::clip_box(*best, dims);
        for (auto z = b[4]; z <= b[5]; ++z)
            for (auto y = b[2]; y <= b[3]; ++y)
                for (auto x = b[0]; x <= b[1]; ++x) {
                    auto& v = labels(std::uint32_t(x), std::uint32_t(y), std::uint32_t(z));
                    if (v == 0 && best->contains(double(x), double(y), double(z))) v = label;
                }
    }

    // Region means, with an optional per-case shift of each organ.
    std::vector<double> mean(spec.organs.size() + 1), stdev(spec.organs.size() + 1);
    mean[0] = spec.background_mean;
    stdev[0] = spec.background_std;
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t k = 0; k < spec.organs.size(); ++k) {
        mean[k + 1] = spec.organs[k].hu_mean + spec.case_hu_jitter * gauss(noise_rng);
        stdev[k + 1] = spec.organs[k].hu_std;
    }
    std::vector<float> voxels(dims.count());
    for (std::size_t i = 0; i < voxels.size(); ++i) {
        const std::uint8_t l = labels[i];
        const double tissue = gauss(noise_rng);
        const double acquisition = gauss(noise_rng);
        const double v = mean[l] + stdev[l] * tissue + spec.noise_sigma * acquisition;
        voxels[i] = static_cast<float>(v + spec.hu_offset);
    }
    return {Volume(dims, std::move(voxels)), LabelMask(std::move(labels), spec.num_classes())};
}

struct SplitCounts {
    std::size_t labeled = 4;
    std::size_t unlabeled = 16;
    std::size_t test = 10;

    friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};

struct CaseRecord {
    std::string id;
    std::string split; // "labeled" | "unlabeled" | "test"
    std::uint64_t seed;
};

struct GeneratedDataset {
    Dataset data;
    /// True masks of the unlabelled cases. Diagnostics only; never handed to training.
    std::vector<LabelMask> hidden_unlabeled_masks;
    std::vector<CaseRecord> manifest;
};

/// Per-case seed for global case index `i` (labelled, then unlabelled, then test).
inline std::uint64_t case_seed(std::uint64_t master_seed, std::size_t i) { return derive_seed(master_seed, "case", i); }

inline GeneratedDataset generate_dataset(const PhantomSpec& spec, const SplitCounts& counts,
                                         std::uint64_t master_seed, unsigned workers = 1) {
    if (counts.labeled < 1) throw InvalidArgument("at least one labelled case is required");
    spec.validate();
    const std::size_t total = counts.labeled + counts.unlabeled + counts.test;
    std::vector<std::pair<Volume, LabelMask>> cases(total);
    parallel_for(total, workers, [&](std::size_t i) { cases[i] = generate_case(spec, case_seed(master_seed, i)); });

    GeneratedDataset out;
    out.data.num_classes = spec.num_classes();
    auto id = [](char prefix, std::size_t i) {
        std::string n = std::to_string(i);
        return std::string(1, prefix) + std::string(3 - std::min<std::size_t>(3, n.size()), '0') + n;
    };
    for (std::size_t i = 0; i < total; ++i) {
        auto& [vol, mask] = cases[i];
        const std::uint64_t seed = case_seed(master_seed, i);
        if (i < counts.labeled) {
            out.data.labeled.push_back({id('L', i), std::move(vol), std::move(mask)});
            out.manifest.push_back({out.data.labeled.back().id, "labeled", seed});
        } else if (i < counts.labeled + counts.unlabeled) {
            out.data.unlabeled.push_back({id('U', i - counts.labeled), std::move(vol)});
            out.hidden_unlabeled_masks.push_back(std::move(mask));
            out.manifest.push_back({out.data.unlabeled.back().id, "unlabeled", seed});
        } else {
            out.data.test.push_back({id('T', i - counts.labeled - counts.unlabeled), std::move(vol), std::move(mask)});
            out.manifest.push_back({out.data.test.back().id, "test", seed});
        }
    }
    return out;
}

} // namespace dmpct
