#pragma once

// Run directory layout:
//
//   <run>/config.txt                     effective configuration (echo_config)
//   <run>/manifest.json-lines            copy of the dataset manifest
//   <run>/runlog.json-lines              one RunEvent per line
//   <run>/round_<t>/model_<plane>.dmpw   models of training pass t (1 = teacher)
//   <run>/round_<t>/pseudo/<id>.dmpl     fused pseudo-masks produced in round t
//   <run>/final/model_<plane>.dmpw       models used for inference

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

#include "dmpct/backbone_io.hpp"
#include "dmpct/cotrain.hpp"
#include "dmpct/dataset_io.hpp"

namespace dmpct {

inline std::filesystem::path model_path(const std::filesystem::path& dir, Plane p) {
    return dir / ("model_" + std::string(plane_name(p)) + ".dmpw");
}

inline void save_bundle(const PlaneModelBundle<SegmenterState>& bundle, const std::filesystem::path& dir) {
    for (Plane p : kPlanes) save_segmenter(bundle[p], model_path(dir, p));
}

/// Loads the three plane models from `dir`; each file's plane tag must match its name.
inline PlaneModelBundle<SegmenterState> load_bundle(const std::filesystem::path& dir) {
    PlaneModelBundle<SegmenterState> out;
    for (Plane p : kPlanes) {
        const auto path = model_path(dir, p);
        if (!std::filesystem::exists(path)) throw ParseError(ParseError::Kind::Io, "missing model file " + path.string());
        out.models[plane_index(p)] = load_segmenter(path);
        if (out[p].plane != p)
            throw ParseError(ParseError::Kind::BadField, path.string() + ": holds a " +
                                                             std::string(plane_name(out[p].plane)) + " model");
    }
    const auto k = out[Plane::Sagittal].num_classes;
    for (Plane p : kPlanes)
        if (out[p].num_classes != k) throw InvalidArgument("plane models in " + dir.string() + " disagree on K");
    return out;
}

inline std::string runlog_line(const RunEvent& e) {
    nlohmann::ordered_json j;
    j["round"] = e.round;
    j["plane"] = e.plane ? nlohmann::ordered_json(std::string(plane_name(*e.plane))) : nlohmann::ordered_json(nullptr);
    j["action"] = std::string(action_name(e.action));
    j["items"] = e.items;
    j["loss_first"] = std::isfinite(e.loss_first) ? nlohmann::ordered_json(e.loss_first) : nlohmann::ordered_json(nullptr);
    j["loss_last"] = std::isfinite(e.loss_last) ? nlohmann::ordered_json(e.loss_last) : nlohmann::ordered_json(nullptr);
    j["note"] = e.note;
    return j.dump();
}

/// Wall-clock times are left out so that identical runs give identical logs.
inline void save_runlog(const RunLog& log, const std::filesystem::path& path) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    for (const auto& e : log.events()) out << runlog_line(e) << "\n";
    if (!out) throw ParseError(ParseError::Kind::Io, "cannot write " + path.string());
}

/// Hooks that checkpoint every round's models and pseudo-masks under `run_dir`.
inline CotrainHooks<SegmenterState> checkpoint_hooks(const std::filesystem::path& run_dir, const Dataset& data) {
    CotrainHooks<SegmenterState> h;
    h.on_models = [run_dir](unsigned round, const PlaneModelBundle<SegmenterState>& b) {
        save_bundle(b, run_dir / ("round_" + std::to_string(round)));
    };
    h.on_pseudo = [run_dir, &data](unsigned round, std::size_t i, const LabelMask& m) {
        save_mask(m, run_dir / ("round_" + std::to_string(round)) / "pseudo" / (data.unlabeled.at(i).id + ".dmpl"));
    };
    return h;
}

} // namespace dmpct
