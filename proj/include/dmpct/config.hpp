#pragma once

// Experiment configuration: UTF-8 `key = value` lines, `#` starts a comment.
// Unknown or repeated keys, malformed values and constraint violations raise
// ConfigError carrying the 1-based line number.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "dmpct/cotrain.hpp"
#include "dmpct/error.hpp"
#include "dmpct/phantom.hpp"

namespace dmpct {

struct ExperimentConfig {
    Mode mode = Mode::Dmpct;
    unsigned rounds = 2; // T
    std::uint16_t num_classes = 4;
    std::vector<WindowSpec> windows = default_windows();

    double learning_rate = 0.1;
    double momentum = 0.9;
    Optimizer optimizer = Optimizer::Sgd;
    bool cosine_decay = true;
    std::uint64_t teacher_iters = 3000;
    std::optional<std::uint64_t> student_iters; // unset: 2 x teacher_iters
    std::uint32_t batch_slices = 4;
    std::uint32_t batch_pixels = 512;
    std::uint32_t hidden_width = 0;
    bool warm_start = false;
    std::size_t top_n = 384;
    std::uint64_t seed = 0;

    // Phantom generation.
    Dims dims{48, 48, 48};
    float hu_step = 100.0f;
    float organ_std = 12.0f;
    float background_mean = -60.0f;
    float background_std = 15.0f;
    float noise_sigma = 0.0f;
    float case_hu_jitter = 35.0f;
    float size_jitter = 0.2f;
    float hu_offset = 0.0f;
    float size_scale = 1.0f;
    SplitCounts counts{};

    std::string data_dir;
    std::string out_dir;

    std::uint64_t effective_student_iters() const noexcept { return student_iters.value_or(2 * teacher_iters); }

    /// Throws ConfigError (line 0) on a violated constraint.
    void validate() const;

    CotrainOptions cotrain_options(unsigned workers = 1) const {
        CotrainOptions o;
        o.rounds = rounds;
        o.train.num_classes = num_classes;
        o.train.learning_rate = learning_rate;
        o.train.momentum = momentum;
        o.train.optimizer = optimizer;
        o.train.cosine_decay = cosine_decay;
        o.train.batch_slices = batch_slices;
        o.train.batch_pixels = batch_pixels;
        o.train.hidden_width = hidden_width;
        o.train.features.channels = static_cast<std::uint32_t>(windows.size());
        o.teacher_iterations = teacher_iters;
        o.student_iterations = effective_student_iters();
        o.warm_start = warm_start;
        o.windows = windows;
        o.seed = seed;
        o.workers = workers;
        o.top_n = top_n;
        return o;
    }

    PhantomSpec phantom_spec() const {
        PhantomSpec s = default_phantom(num_classes, hu_step, organ_std);
        s.dims = dims;
        s.background_mean = background_mean;
        s.background_std = background_std;
        s.noise_sigma = noise_sigma;
        s.case_hu_jitter = case_hu_jitter;
        s.size_jitter = size_jitter;
        s.hu_offset = hu_offset;
        s.size_scale = size_scale;
        return s;
    }

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail::config {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

// Value parsers throw ConfigError without a line; parse_config adds line and key.

template <typename T>
T parse_number(std::string_view v) {
    T out{};
    const char* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec == std::errc::result_out_of_range) throw ConfigError(0, "'" + std::string(v) + "' is out of range");
    if (ec != std::errc() || ptr != end || v.empty())
        throw ConfigError(0, "expected a number, got '" + std::string(v) + "'");
    if constexpr (std::is_floating_point_v<T>)
        if (!std::isfinite(out)) throw ConfigError(0, "value must be finite");
    return out;
}

template <typename T>
std::string format_number(T v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

inline bool parse_bool(std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(0, "expected true or false, got '" + std::string(v) + "'");
}

inline std::vector<WindowSpec> parse_windows(std::string_view v) {
    std::vector<WindowSpec> out;
    while (!v.empty()) {
        const auto comma = v.find(',');
        const std::string_view item = trim(v.substr(0, comma));
        const auto colon = item.find(':', 1); // skip a leading minus sign
        if (colon == std::string_view::npos)
            throw ConfigError(0, "expected lo:hi pairs, got '" + std::string(item) + "'");
        const WindowSpec w{parse_number<float>(trim(item.substr(0, colon))),
                           parse_number<float>(trim(item.substr(colon + 1)))};
        if (!w.valid()) throw ConfigError(0, "need lo < hi in '" + std::string(item) + "'");
        out.push_back(w);
        if (comma == std::string_view::npos) break;
        v.remove_prefix(comma + 1);
        if (trim(v).empty()) throw ConfigError(0, "trailing comma");
    }
    if (out.empty()) throw ConfigError(0, "at least one window is required");
    return out;
}

inline Dims parse_dims(std::string_view v) {
    std::array<std::uint32_t, 3> d{};
    for (int i = 0; i < 3; ++i) {
        const auto x = v.find('x');
        if ((x == std::string_view::npos) != (i == 2)) throw ConfigError(0, "expected WxHxD");
        d[i] = parse_number<std::uint32_t>(trim(v.substr(0, x)));
        if (x != std::string_view::npos) v.remove_prefix(x + 1);
    }
    return {d[0], d[1], d[2]};
}

struct Field {
    std::function<void(ExperimentConfig&, std::string_view)> set;
    std::function<std::optional<std::string>(const ExperimentConfig&)> get; // nullopt: omit from echo
};

template <typename T>
Field number_field(T ExperimentConfig::*member) {
    return {[member](ExperimentConfig& c, std::string_view v) {
                c.*member = parse_number<T>(v);
            },
            [member](const ExperimentConfig& c) { return std::optional<std::string>(format_number(c.*member)); }};
}

inline Field bool_field(bool ExperimentConfig::*member) {
    return {[member](ExperimentConfig& c, std::string_view v) { c.*member = parse_bool(v); },
            [member](const ExperimentConfig& c) {
                return std::optional<std::string>(c.*member ? "true" : "false");
            }};
}

inline Field string_field(std::string ExperimentConfig::*member) {
    return {[member](ExperimentConfig& c, std::string_view v) { c.*member = std::string(v); },
            [member](const ExperimentConfig& c) { return std::optional<std::string>(c.*member); }};
}

/// Keys in echo order.
inline const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = [] {
        std::vector<std::pair<std::string, Field>> t;
        t.emplace_back("mode", Field{[](ExperimentConfig& c, std::string_view v) {
                                         auto m = parse_mode(v);
                                         if (!m)
                                             throw ConfigError(0, "expected fcn, spsl, dmpct or "
                                                                  "dmpct-confident, got '" +
                                                                         std::string(v) + "'");
                                         c.mode = *m;
                                     },
                                     [](const ExperimentConfig& c) {
                                         return std::optional<std::string>(std::string(mode_name(c.mode)));
                                     }});
        t.emplace_back("T", number_field(&ExperimentConfig::rounds));
        t.emplace_back("K", number_field(&ExperimentConfig::num_classes));
        t.emplace_back("windows", Field{[](ExperimentConfig& c, std::string_view v) {
                                            c.windows = parse_windows(v);
                                        },
                                        [](const ExperimentConfig& c) {
                                            std::string s;
                                            for (std::size_t i = 0; i < c.windows.size(); ++i) {
                                                if (i) s += ",";
                                                s += format_number(c.windows[i].lo) + ":" +
                                                     format_number(c.windows[i].hi);
                                            }
                                            return std::optional<std::string>(s);
                                        }});
        t.emplace_back("learning_rate", number_field(&ExperimentConfig::learning_rate));
        t.emplace_back("momentum", number_field(&ExperimentConfig::momentum));
        t.emplace_back("optimizer", Field{[](ExperimentConfig& c, std::string_view v) {
                                              if (v == "sgd") c.optimizer = Optimizer::Sgd;
                                              else if (v == "adam") c.optimizer = Optimizer::Adam;
                                              else throw ConfigError(0, "expected sgd or adam");
                                          },
                                          [](const ExperimentConfig& c) {
                                              return std::optional<std::string>(
                                                  c.optimizer == Optimizer::Adam ? "adam" : "sgd");
                                          }});
        t.emplace_back("cosine_decay", bool_field(&ExperimentConfig::cosine_decay));
        t.emplace_back("teacher_iters", number_field(&ExperimentConfig::teacher_iters));
        t.emplace_back("student_iters", Field{[](ExperimentConfig& c, std::string_view v) {
                                                  c.student_iters =
                                                      parse_number<std::uint64_t>(v);
                                              },
                                              [](const ExperimentConfig& c) -> std::optional<std::string> {
                                                  if (!c.student_iters) return std::nullopt;
                                                  return format_number(*c.student_iters);
                                              }});
        t.emplace_back("batch_slices", number_field(&ExperimentConfig::batch_slices));
        t.emplace_back("batch_pixels", number_field(&ExperimentConfig::batch_pixels));
        t.emplace_back("hidden_width", number_field(&ExperimentConfig::hidden_width));
        t.emplace_back("warm_start", bool_field(&ExperimentConfig::warm_start));
        t.emplace_back("top_n", number_field(&ExperimentConfig::top_n));
        t.emplace_back("seed", number_field(&ExperimentConfig::seed));
        t.emplace_back("phantom.dims", Field{[](ExperimentConfig& c, std::string_view v) {
                                                 c.dims = parse_dims(v);
                                             },
                                             [](const ExperimentConfig& c) {
                                                 return std::optional<std::string>(to_string(c.dims));
                                             }});
        t.emplace_back("phantom.hu_step", number_field(&ExperimentConfig::hu_step));
        t.emplace_back("phantom.organ_std", number_field(&ExperimentConfig::organ_std));
        t.emplace_back("phantom.background_mean", number_field(&ExperimentConfig::background_mean));
        t.emplace_back("phantom.background_std", number_field(&ExperimentConfig::background_std));
        t.emplace_back("phantom.noise_sigma", number_field(&ExperimentConfig::noise_sigma));
        t.emplace_back("phantom.case_hu_jitter", number_field(&ExperimentConfig::case_hu_jitter));
        t.emplace_back("phantom.size_jitter", number_field(&ExperimentConfig::size_jitter));
        t.emplace_back("phantom.hu_offset", number_field(&ExperimentConfig::hu_offset));
        t.emplace_back("phantom.size_scale", number_field(&ExperimentConfig::size_scale));
        auto count_field = [](std::size_t SplitCounts::*member) {
            return Field{[member](ExperimentConfig& c, std::string_view v) {
                             c.counts.*member = parse_number<std::size_t>(v);
                         },
                         [member](const ExperimentConfig& c) {
                             return std::optional<std::string>(format_number(c.counts.*member));
                         }};
        };
        t.emplace_back("labeled", count_field(&SplitCounts::labeled));
        t.emplace_back("unlabeled", count_field(&SplitCounts::unlabeled));
        t.emplace_back("test", count_field(&SplitCounts::test));
        t.emplace_back("data_dir", string_field(&ExperimentConfig::data_dir));
        t.emplace_back("out_dir", string_field(&ExperimentConfig::out_dir));
        return t;
    }();
    return table;
}

} // namespace detail::config

inline void ExperimentConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(0, m); };
    if (rounds < 1) fail("T must be >= 1");
    if (num_classes < 1 || num_classes > 255) fail("K must be in 1..255");
    if (windows.empty()) fail("at least one window is required");
    for (const auto& w : windows)
        if (!w.valid()) fail("every window needs lo < hi");
    if (!(learning_rate > 0)) fail("learning_rate must be > 0");
    if (!(momentum >= 0 && momentum < 1)) fail("momentum must be in [0, 1)");
    if (teacher_iters < 1) fail("teacher_iters must be >= 1");
    if (effective_student_iters() < 1) fail("student_iters must be >= 1");
    if (batch_slices < 1) fail("batch_slices must be >= 1");
    if (batch_pixels < 1) fail("batch_pixels must be >= 1");
    if (top_n < 1) fail("top_n must be >= 1");
    if (!dims.valid()) fail("phantom.dims must be >= 1 on every axis");
    if (!(organ_std >= 0) || !(background_std >= 0) || !(noise_sigma >= 0) || !(case_hu_jitter >= 0))
        fail("phantom standard deviations must be >= 0");
    if (!(size_jitter >= 0 && size_jitter < 1)) fail("phantom.size_jitter must be in [0, 1)");
    if (!(size_scale > 0)) fail("phantom.size_scale must be > 0");
    if (counts.labeled < 1) fail("labeled must be >= 1");
}

/// Parses config text; the result is validated and has defaults applied.
inline ExperimentConfig parse_config(std::string_view text) {
    using namespace detail::config;
    ExperimentConfig cfg;
    std::map<std::string, int, std::less<>> seen;
    int line_no = 0;
    while (!text.empty() || line_no == 0) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) {
            if (text.empty()) break;
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(line_no, "expected key = value");
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(line_no, "missing key before '='");
        const auto& table = fields();
        const auto it = std::find_if(table.begin(), table.end(), [&](const auto& f) { return f.first == key; });
        if (it == table.end()) throw ConfigError(line_no, "unknown key '" + key + "'");
        if (auto prev = seen.find(key); prev != seen.end())
            throw ConfigError(line_no, "key '" + key + "' already set on line " + std::to_string(prev->second));
        seen.emplace(key, line_no);
        try {
            it->second.set(cfg, value);
        } catch (const ConfigError& e) {
            throw ConfigError(line_no, key + ": " + e.what());
        }
        if (text.empty()) break;
    }
    // Constraint errors point at the offending key's line when it was set explicitly.
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        int line = 0;
        for (const auto& [key, ln] : seen)
            if (msg.rfind(key + " ", 0) == 0 && ln > line) line = ln;
        throw ConfigError(line, msg);
    }
    return cfg;
}

/// Effective configuration as parseable text: parse_config(echo_config(c)) == c.
inline std::string echo_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    for (const auto& [key, field] : detail::config::fields())
        if (auto v = field.get(cfg)) out << key << " = " << *v << "\n";
    return out.str();
}

} // namespace dmpct
