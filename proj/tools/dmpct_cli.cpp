// dmpct: generate phantoms, train, pseudo-label, co-train, evaluate and compare runs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dmpct/dmpct.hpp"

namespace fs = std::filesystem;
using namespace dmpct;

namespace {

struct Common {
    std::string config;
    std::string out;
    std::string data;
    std::string models;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> mode;
    unsigned workers = 1;
};

ExperimentConfig load_config(const Common& c) {
    ExperimentConfig cfg;
    if (!c.config.empty()) {
        std::ifstream in(c.config);
        if (!in) throw ParseError(ParseError::Kind::Io, "cannot open config " + c.config);
        std::stringstream ss;
        ss << in.rdbuf();
        try {
            cfg = parse_config(ss.str());
        } catch (const ConfigError& e) {
            throw ConfigError(0, c.config + (e.line() > 0 ? ":" + std::to_string(e.line()) : "") + ": " + e.message());
        }
    }
    if (c.seed) cfg.seed = *c.seed;
    if (c.mode) {
        const auto m = parse_mode(*c.mode);
        if (!m) throw ConfigError(0, "unknown mode '" + *c.mode + "'");
        cfg.mode = *m;
    }
    if (!c.data.empty()) cfg.data_dir = c.data;
    if (!c.out.empty()) cfg.out_dir = c.out;
    return cfg;
}

std::string require_dir(const std::string& value, const char* what) {
    if (value.empty()) throw InvalidArgument(std::string("missing ") + what + " (flag or config key)");
    return value;
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    out << text;
    if (!out) throw ParseError(ParseError::Kind::Io, "cannot write " + path.string());
}

Dataset load_data(const ExperimentConfig& cfg, std::vector<ManifestEntry>* manifest = nullptr) {
    const fs::path dir = require_dir(cfg.data_dir, "--data");
    Dataset d = load_dataset(dir, manifest);
    if (d.num_classes != cfg.num_classes)
        throw InvalidArgument("dataset " + dir.string() + " has K=" + std::to_string(d.num_classes) +
                              " but the config has K=" + std::to_string(cfg.num_classes));
    return d;
}

void check_bundle_k(const PlaneModelBundle<SegmenterState>& b, const ExperimentConfig& cfg, const fs::path& dir) {
    if (b[Plane::Sagittal].num_classes != cfg.num_classes)
        throw InvalidArgument("models in " + dir.string() + " have K=" +
                              std::to_string(b[Plane::Sagittal].num_classes) + " but the config has K=" +
                              std::to_string(cfg.num_classes));
}

void write_run_header(const fs::path& run, const ExperimentConfig& cfg) {
    fs::create_directories(run);
    write_text(run / "config.txt", echo_config(cfg));
    const fs::path manifest = fs::path(cfg.data_dir) / "manifest.json-lines";
    fs::copy_file(manifest, run / "manifest.json-lines", fs::copy_options::overwrite_existing);
}

int cmd_generate(const Common& c) {
    const ExperimentConfig cfg = load_config(c);
    const fs::path out = require_dir(cfg.out_dir, "--out");
    const PhantomSpec spec = cfg.phantom_spec();
    const auto g = generate_dataset(spec, cfg.counts, cfg.seed, c.workers);
    save_dataset(g, spec, out);
    write_text(out / "config.txt", echo_config(cfg));
    std::cout << "generated " << g.manifest.size() << " cases in " << out.string() << "\n";
    return 0;
}

int cmd_cotrain(const Common& c, std::optional<Mode> forced) {
    ExperimentConfig cfg = load_config(c);
    if (forced) cfg.mode = *forced;
    const fs::path run = require_dir(cfg.out_dir, "--out");
    const Dataset data = load_data(cfg);
    write_run_header(run, cfg);
    const auto hooks = checkpoint_hooks(run, data);
    const auto opts = cfg.cotrain_options(c.workers);
    try {
        auto result = run_mode(cfg.mode, ReferenceTrainer{}, data, opts, hooks);
        save_runlog(result.log, run / "runlog.json-lines");
        save_bundle(result.bundle, run / "final");
    } catch (const RunAborted& e) {
        save_runlog(e.log(), run / "runlog.json-lines");
        throw;
    }
    std::cout << mode_name(cfg.mode) << " run written to " << run.string() << "\n";
    return 0;
}

int cmd_pseudolabel(const Common& c) {
    const ExperimentConfig cfg = load_config(c);
    const fs::path out = require_dir(cfg.out_dir, "--out");
    const fs::path models = require_dir(c.models, "--models");
    const Dataset data = load_data(cfg);
    const auto bundle = load_bundle(models);
    check_bundle_k(bundle, cfg, models);
    const auto masks = generate_pseudo_labels(bundle, std::span<const UnlabeledCase>(data.unlabeled), cfg.num_classes,
                                              cfg.windows, c.workers);
    for (std::size_t i = 0; i < masks.size(); ++i) save_mask(masks[i], out / (data.unlabeled[i].id + ".dmpl"));
    std::cout << "wrote " << masks.size() << " pseudo-masks to " << out.string() << "\n";
    return 0;
}

int cmd_evaluate(const Common& c) {
    const ExperimentConfig cfg = load_config(c);
    const fs::path out = require_dir(cfg.out_dir, "--out");
    const fs::path models = c.models.empty() ? out / "final" : fs::path(c.models);
    const auto bundle = load_bundle(models);
    check_bundle_k(bundle, cfg, models);
    const Dataset data = load_data(cfg);
    if (data.test.empty()) throw InvalidArgument("dataset " + cfg.data_dir + " has no test cases");
    auto rep = evaluate(bundle, std::span<const LabeledCase>(data.test), cfg.num_classes, cfg.windows, c.workers);
    save_report({{std::string(mode_name(cfg.mode)), std::move(rep)}}, out);
    std::cout << "report written to " << (out / "report.csv").string() << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out_dir, const std::string& baseline) {
    if (out_dir.empty()) throw InvalidArgument("missing --out");
    std::vector<ModeReport> all;
    for (const auto& r : runs) {
        const fs::path p = fs::is_directory(r) ? fs::path(r) / "report.json" : fs::path(r);
        for (auto& m : load_report(p)) all.push_back(std::move(m));
    }
    all = compare_runs(std::move(all), baseline);
    save_report(all, out_dir, "comparison");
    write_csv(std::cout, all);
    return 0;
}

std::string one_line(std::string s) {
    for (char& ch : s)
        if (ch == '\n' || ch == '\r') ch = ' ';
    return s;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-planar co-training on synthetic phantoms"};
    app.require_subcommand(1);
    Common c;
    std::vector<std::string> runs;
    std::string baseline = "fcn";

    auto add_common = [&](CLI::App* sub, bool data, bool models) {
        sub->add_option("--config", c.config, "key = value configuration file");
        sub->add_option("--out", c.out, "output directory");
        sub->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--seed", c.seed, "master seed (overrides the config)");
        sub->add_option("--mode", c.mode, "fcn | spsl | dmpct | dmpct-confident");
        if (data) sub->add_option("--data", c.data, "dataset directory written by `generate`");
        if (models) sub->add_option("--models", c.models, "directory holding model_<plane>.dmpw");
    };
    auto* gen = app.add_subcommand("generate", "write a phantom dataset");
    add_common(gen, false, false);
    auto* train = app.add_subcommand("train", "train the supervised teacher models");
    add_common(train, true, false);
    auto* pseudo = app.add_subcommand("pseudolabel", "fused pseudo-masks for the unlabelled cases");
    add_common(pseudo, true, true);
    auto* cot = app.add_subcommand("cotrain", "run the configured mode end to end");
    add_common(cot, true, false);
    auto* eval = app.add_subcommand("evaluate", "per-organ DSC report on the test split");
    add_common(eval, true, true);
    auto* rep = app.add_subcommand("report", "merge evaluated runs into one comparison");
    rep->add_option("--runs", runs, "run directories or report.json files")->required();
    rep->add_option("--out", c.out, "output directory")->required();
    rep->add_option("--baseline", baseline, "mode used as the p-value baseline");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: usage: " << one_line(e.what()) << "\n";
        return 2;
    }

    try {
        if (*gen) return cmd_generate(c);
        if (*train) return cmd_cotrain(c, Mode::Fcn);
        if (*pseudo) return cmd_pseudolabel(c);
        if (*cot) return cmd_cotrain(c, std::nullopt);
        if (*eval) return cmd_evaluate(c);
        if (*rep) return cmd_report(runs, c.out, baseline);
    } catch (const ConfigError& e) {
        std::cerr << "error: config: " << one_line(e.what()) << "\n";
        return 3;
    } catch (const ParseError& e) {
        std::cerr << "error: io: " << one_line(e.what()) << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << one_line(e.what()) << "\n";
        return 1;
    }
    return 1;
}
