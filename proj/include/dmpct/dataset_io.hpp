#pragma once

// On-disk dataset layout:
//
//   <dir>/manifest.json-lines        one {"id","split","seed","spec_hash"} object per case
//   <dir>/phantom.txt                generator spec (describe())
//   <dir>/labeled/<id>.dmpv|.dmpl
//   <dir>/unlabeled/<id>.dmpv
//   <dir>/test/<id>.dmpv|.dmpl
//   <dir>/oracle/<id>.dmpl           true masks of unlabelled cases, diagnostics only

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dmpct/phantom.hpp"
#include "dmpct/volume_io.hpp"

namespace dmpct {

struct ManifestEntry {
    std::string id;
    std::string split;
    std::uint64_t seed = 0;
    std::uint64_t spec_hash = 0;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

inline std::string manifest_line(const ManifestEntry& e) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["split"] = e.split;
    j["seed"] = e.seed;
    j["spec_hash"] = e.spec_hash;
    return j.dump();
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(ParseError::Kind::Io, "cannot open " + path.string());
    std::vector<ManifestEntry> out;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            out.push_back({j.at("id").get<std::string>(), j.at("split").get<std::string>(),
                           j.at("seed").get<std::uint64_t>(), j.at("spec_hash").get<std::uint64_t>()});
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(ParseError::Kind::BadField,
                             path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
        const auto& s = out.back().split;
        if (s != "labeled" && s != "unlabeled" && s != "test")
            throw ParseError(ParseError::Kind::BadField, path.string() + ":" + std::to_string(n) + ": split '" + s + "'");
    }
    return out;
}

inline void save_dataset(const GeneratedDataset& g, const PhantomSpec& spec, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const std::uint64_t hash = spec.hash();
    {
        std::ofstream m(dir / "manifest.json-lines", std::ios::trunc);
        for (const auto& r : g.manifest) m << manifest_line({r.id, r.split, r.seed, hash}) << "\n";
        if (!m) throw ParseError(ParseError::Kind::Io, "cannot write " + (dir / "manifest.json-lines").string());
        std::ofstream p(dir / "phantom.txt", std::ios::trunc);
        p << spec.describe() << "\n";
    }
    for (const auto& c : g.data.labeled) {
        save_volume(c.volume, dir / "labeled" / (c.id + ".dmpv"));
        save_mask(c.mask, dir / "labeled" / (c.id + ".dmpl"));
    }
    for (std::size_t i = 0; i < g.data.unlabeled.size(); ++i) {
        const auto& c = g.data.unlabeled[i];
        save_volume(c.volume, dir / "unlabeled" / (c.id + ".dmpv"));
        if (i < g.hidden_unlabeled_masks.size()) save_mask(g.hidden_unlabeled_masks[i], dir / "oracle" / (c.id + ".dmpl"));
    }
    for (const auto& c : g.data.test) {
        save_volume(c.volume, dir / "test" / (c.id + ".dmpv"));
        save_mask(c.mask, dir / "test" / (c.id + ".dmpl"));
    }
}

/// Reads a dataset written by save_dataset. Oracle masks are not loaded.
inline Dataset load_dataset(const std::filesystem::path& dir, std::vector<ManifestEntry>* manifest_out = nullptr) {
    const auto manifest = read_manifest(dir / "manifest.json-lines");
    Dataset d;
    bool have_k = false;
    auto check_k = [&](const LabelMask& m, const std::string& id) {
        if (!have_k) {
            d.num_classes = m.num_classes();
            have_k = true;
        } else if (m.num_classes() != d.num_classes) {
            throw InvalidArgument("case " + id + " has K=" + std::to_string(m.num_classes()) + ", expected K=" +
                                  std::to_string(d.num_classes));
        }
    };
    for (const auto& e : manifest) {
        const auto base = dir / e.split / e.id;
        Volume v = load_volume(base.string() + ".dmpv");
        if (e.split == "unlabeled") {
            d.unlabeled.push_back({e.id, std::move(v)});
            continue;
        }
        LabelMask m = load_mask(base.string() + ".dmpl");
        check_k(m, e.id);
        (e.split == "labeled" ? d.labeled : d.test).push_back({e.id, std::move(v), std::move(m)});
    }
    d.validate();
    if (manifest_out) *manifest_out = manifest;
    return d;
}

} // namespace dmpct
