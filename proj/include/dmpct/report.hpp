#pragma once

// DSC reports: per-mode CSV rows `mode,organ,n,mean_dsc,std_dsc,p_vs_baseline` and a
// JSON form that keeps every per-case value so aggregates can be recomputed.

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dmpct/metrics.hpp"

namespace dmpct {

/// One evaluated run, labelled by the mode that produced it.
struct ModeReport {
    std::string mode;
    EvaluationReport report;
};

inline constexpr std::string_view kCsvHeader = "mode,organ,n,mean_dsc,std_dsc,p_vs_baseline";
inline constexpr std::string_view kMeanRowNote = "mean row: per-case mean over organs; equals the mean of the per-organ means";

namespace detail {
inline std::string csv_number(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}
} // namespace detail

inline void write_csv(std::ostream& out, const std::vector<ModeReport>& runs) {
    out << kCsvHeader << "\n";
    for (const auto& run : runs) {
        auto row = [&](const OrganReport& r, const std::string& organ) {
            out << run.mode << "," << organ << "," << r.per_case.size() << "," << detail::csv_number(r.mean) << ","
                << detail::csv_number(r.std) << "," << (r.p_value ? detail::csv_number(*r.p_value) : "") << "\n";
        };
        for (const auto& o : run.report.organs) row(o, std::to_string(o.organ));
        row(run.report.mean_row, "mean");
    }
}

inline nlohmann::ordered_json to_json(const OrganReport& r) {
    nlohmann::ordered_json j;
    j["organ"] = r.organ == 0 ? nlohmann::ordered_json("mean") : nlohmann::ordered_json(r.organ);
    j["n"] = r.per_case.size();
    j["mean_dsc"] = r.mean;
    j["std_dsc"] = r.std;
    j["p_vs_baseline"] = r.p_value ? nlohmann::ordered_json(*r.p_value) : nlohmann::ordered_json(nullptr);
    j["per_case"] = r.per_case;
    return j;
}

inline nlohmann::ordered_json to_json(const ModeReport& run) {
    nlohmann::ordered_json j;
    j["mode"] = run.mode;
    j["case_ids"] = run.report.case_ids;
    j["organs"] = nlohmann::ordered_json::array();
    for (const auto& o : run.report.organs) j["organs"].push_back(to_json(o));
    j["mean"] = to_json(run.report.mean_row);
    j["note"] = kMeanRowNote;
    return j;
}

/// Rebuilds a report from its JSON form. Aggregates are recomputed from the per-case
/// values and must match the stored ones exactly.
inline ModeReport mode_report_from_json(const nlohmann::json& j, const std::string& what = "report") {
    try {
        ModeReport run;
        run.mode = j.at("mode").get<std::string>();
        const auto ids = j.at("case_ids").get<std::vector<std::string>>();
        std::vector<std::vector<double>> dscs(ids.size());
        const auto& organs = j.at("organs");
        for (std::size_t k = 0; k < organs.size(); ++k) {
            const auto vals = organs[k].at("per_case").get<std::vector<double>>();
            if (vals.size() != ids.size()) throw InvalidArgument(what + ": organ " + std::to_string(k + 1) + " has " +
                                                                 std::to_string(vals.size()) + " cases");
            for (std::size_t c = 0; c < ids.size(); ++c) dscs[c].push_back(vals[c]);
        }
        run.report = summarize(ids, dscs, static_cast<std::uint16_t>(organs.size()));
        auto check = [&](const OrganReport& r, const nlohmann::json& stored, const std::string& name) {
            if (stored.at("mean_dsc").get<double>() != r.mean || stored.at("std_dsc").get<double>() != r.std)
                throw InvalidArgument(what + ": stored aggregates of " + name + " disagree with per-case values");
        };
        for (std::size_t k = 0; k < organs.size(); ++k) {
            check(run.report.organs[k], organs[k], "organ " + std::to_string(k + 1));
            if (!organs[k].at("p_vs_baseline").is_null())
                run.report.organs[k].p_value = organs[k].at("p_vs_baseline").get<double>();
        }
        check(run.report.mean_row, j.at("mean"), "the mean row");
        if (!j.at("mean").at("p_vs_baseline").is_null())
            run.report.mean_row.p_value = j.at("mean").at("p_vs_baseline").get<double>();
        return run;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(ParseError::Kind::BadField, what + ": " + e.what());
    }
}

inline void save_report(const std::vector<ModeReport>& runs, const std::filesystem::path& dir,
                        const std::string& stem = "report") {
    std::filesystem::create_directories(dir);
    std::ofstream csv(dir / (stem + ".csv"), std::ios::trunc);
    write_csv(csv, runs);
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& r : runs) j.push_back(to_json(r));
    std::ofstream js(dir / (stem + ".json"), std::ios::trunc);
    js << j.dump(2) << "\n";
    if (!csv || !js) throw ParseError(ParseError::Kind::Io, "cannot write report files in " + dir.string());
}

inline std::vector<ModeReport> load_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(ParseError::Kind::Io, "cannot open " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(ParseError::Kind::BadField, path.string() + ": " + e.what());
    }
    std::vector<ModeReport> out;
    if (j.is_array())
        for (const auto& r : j) out.push_back(mode_report_from_json(r, path.string()));
    else
        out.push_back(mode_report_from_json(j, path.string()));
    return out;
}

/// Table-shaped comparison: every run other than `baseline` gets Wilcoxon p-values
/// against the baseline run (which must cover the same cases). With fewer than 5
/// test cases no p-values are attached.
inline std::vector<ModeReport> compare_runs(std::vector<ModeReport> runs, const std::string& baseline = "fcn") {
    const ModeReport* base = nullptr;
    for (const auto& r : runs)
        if (r.mode == baseline) base = &r;
    if (!base) throw InvalidArgument("no run with baseline mode '" + baseline + "'");
    const EvaluationReport base_report = base->report;
    for (auto& r : runs) {
        if (r.mode == baseline) continue;
        if (r.report.case_ids != base_report.case_ids)
            throw InvalidArgument("run '" + r.mode + "' covers different test cases than the baseline");
        if (base_report.case_ids.size() < 5) continue;
        attach_p_values(r.report, base_report);
    }
    return runs;
}

} // namespace dmpct
