#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "core.hpp"
#include "io.hpp"

namespace consensus_net {

struct Series {
    std::string label;
    std::vector<double> values;
};

struct LineChart {
    std::string title;
    std::string y_label;
    std::vector<double> times;
    std::vector<Series> series;
};

inline const std::vector<std::string>& plot_series_names() {
    static const std::vector<std::string> names{"x", "y", "dhat", "errors", "lyapunov"};
    return names;
}

namespace detail {

inline std::string fixed(double v, int precision) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, precision);
    return {buf, res.ptr};
}

inline std::string tick_label(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 4);
    return {buf, res.ptr};
}

// Round step (1, 2 or 5 times a power of ten) giving about `target` ticks.
inline std::vector<double> nice_ticks(double lo, double hi, int target = 6) {
    const double span = hi - lo;
    const double raw = span / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        step = m * mag;
        if (span / step <= target) {
            break;
        }
    }
    std::vector<double> ticks;
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) {
        ticks.push_back(std::abs(t) < 1e-12 * span ? 0.0 : t);
    }
    return ticks;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

} // namespace detail

[[nodiscard]] inline std::string render_svg(const LineChart& chart) {
    if (chart.times.empty() || chart.series.empty()) {
        throw ValidationError("plot: nothing to draw (empty trajectory)");
    }
    constexpr double width = 800;
    constexpr double height = 480;
    constexpr double left = 80;
    constexpr double right = 150;
    constexpr double top = 40;
    constexpr double bottom = 60;
    constexpr std::array<const char*, 8> palette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                  "#9467bd", "#8c564b", "#e377c2", "#17becf"};

    double t0 = chart.times.front();
    double t1 = chart.times.back();
    if (t1 <= t0) {
        t1 = t0 + 1.0;
    }
    double lo = INFINITY;
    double hi = -INFINITY;
    for (const auto& s : chart.series) {
        for (double v : s.values) {
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
    }
    if (!std::isfinite(lo)) {
        lo = -1.0;
        hi = 1.0;
    }
    if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;

    const double pw = width - left - right;
    const double ph = height - top - bottom;
    auto sx = [&](double t) { return left + (t - t0) / (t1 - t0) * pw; };
    auto sy = [&](double v) { return top + (hi - v) / (hi - lo) * ph; };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"480\" viewBox=\"0 0 800 480\">\n";
    out += "<rect width=\"800\" height=\"480\" fill=\"white\"/>\n";
    out += "<text x=\"" + detail::fixed(left + pw / 2, 1) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" +
           detail::escape(chart.title) + "</text>\n";
    out += "<rect x=\"" + detail::fixed(left, 1) + "\" y=\"" + detail::fixed(top, 1) + "\" width=\"" +
           detail::fixed(pw, 1) + "\" height=\"" + detail::fixed(ph, 1) +
           "\" fill=\"none\" stroke=\"black\"/>\n";

    for (double t : detail::nice_ticks(t0, t1)) {
        const std::string x = detail::fixed(sx(t), 2);
        out += "<line x1=\"" + x + "\" y1=\"" + detail::fixed(top + ph, 1) + "\" x2=\"" + x + "\" y2=\"" +
               detail::fixed(top + ph + 5, 1) + "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + x + "\" y=\"" + detail::fixed(top + ph + 20, 1) +
               "\" text-anchor=\"middle\" font-size=\"12\">" + detail::tick_label(t) + "</text>\n";
    }
    for (double v : detail::nice_ticks(lo, hi)) {
        const std::string y = detail::fixed(sy(v), 2);
        out += "<line x1=\"" + detail::fixed(left - 5, 1) + "\" y1=\"" + y + "\" x2=\"" + detail::fixed(left, 1) +
               "\" y2=\"" + y + "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + detail::fixed(left - 8, 1) + "\" y=\"" + y +
               "\" text-anchor=\"end\" dominant-baseline=\"middle\" font-size=\"12\">" + detail::tick_label(v) +
               "</text>\n";
    }
    out += "<text x=\"" + detail::fixed(left + pw / 2, 1) + "\" y=\"" + detail::fixed(height - 15, 1) +
           "\" text-anchor=\"middle\" font-size=\"14\">time [s]</text>\n";
    out += "<text x=\"20\" y=\"" + detail::fixed(top + ph / 2, 1) +
           "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 20 " + detail::fixed(top + ph / 2, 1) +
           ")\">" + detail::escape(chart.y_label) + "</text>\n";

    for (std::size_t k = 0; k < chart.series.size(); ++k) {
        const auto& s = chart.series[k];
        const char* color = palette[k % palette.size()];
        out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.values.size() && i < chart.times.size(); ++i) {
            if (!std::isfinite(s.values[i])) {
                continue;
            }
            out += detail::fixed(sx(chart.times[i]), 2) + "," + detail::fixed(sy(s.values[i]), 2) + " ";
        }
        out += "\"/>\n";
        const double ly = top + 10 + 20.0 * static_cast<double>(k);
        out += "<line x1=\"" + detail::fixed(left + pw + 15, 1) + "\" y1=\"" + detail::fixed(ly, 1) + "\" x2=\"" +
               detail::fixed(left + pw + 40, 1) + "\" y2=\"" + detail::fixed(ly, 1) + "\" stroke=\"" + color +
               "\" stroke-width=\"2\"/>\n";
        out += "<text x=\"" + detail::fixed(left + pw + 45, 1) + "\" y=\"" + detail::fixed(ly, 1) +
               "\" dominant-baseline=\"middle\" font-size=\"12\">" + detail::escape(s.label) + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

// Builds the chart for one series name from the artifacts in `dir`.
[[nodiscard]] inline LineChart load_chart(const std::filesystem::path& dir, const std::string& which) {
    const auto& names = plot_series_names();
    if (std::find(names.begin(), names.end(), which) == names.end()) {
        std::string valid;
        for (const auto& n : names) {
            valid += (valid.empty() ? "" : ", ") + n;
        }
        throw ValidationError("plot: unknown series '" + which + "'; valid options: " + valid);
    }

    const bool from_metrics = which == "errors" || which == "lyapunov";
    const io::CsvTable table = io::read_csv(dir / (from_metrics ? "metrics.csv" : "trajectory.csv"));
    if (table.rows.empty()) {
        throw ValidationError("plot: empty trajectory in " + dir.string());
    }
    LineChart chart;
    for (const auto& row : table.rows) {
        chart.times.push_back(row[0]);
    }
    auto add_column = [&](const std::string& column, const std::string& label) {
        const int c = table.column(column);
        if (c < 0) {
            throw IoError("plot: column '" + column + "' missing");
        }
        Series s{label, {}};
        for (const auto& row : table.rows) {
            s.values.push_back(row[static_cast<std::size_t>(c)]);
        }
        chart.series.push_back(std::move(s));
    };

    if (which == "errors") {
        chart.title = "consensus errors";
        chart.y_label = "norm";
        add_column("norm_e_x", "|e_x|");
        add_column("norm_e_y", "|e_y|");
        add_column("norm_e_d", "|e_d|");
    } else if (which == "lyapunov") {
        const bool matched = table.column("H") >= 0;
        chart.title = matched ? "Lyapunov function H" : "Lyapunov function W";
        chart.y_label = matched ? "H" : "W";
        add_column(matched ? "H" : "W", chart.y_label);
    } else {
        const std::string prefix = which + "_";
        chart.title = which == "dhat" ? "integral action dhat_i" : which + "_i";
        chart.y_label = which;
        for (const auto& h : table.header) {
            if (h.rfind(prefix, 0) == 0) {
                add_column(h, "agent " + h.substr(prefix.size()));
            }
        }
    }
    return chart;
}

// Writes <dir>/<which>.svg and returns its path.
inline std::filesystem::path plot(const std::filesystem::path& dir, const std::string& which) {
    const std::string svg = render_svg(load_chart(dir, which));
    const auto path = dir / (which + ".svg");
    io::write_atomic(path, svg);
    return path;
}

} // namespace consensus_net
