// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "fkpd/envs/mixture.hpp"
#include "fkpd/harness/train.hpp"

namespace fkpd {

namespace detail {

inline std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fixed(double v, int digits = 2) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    std::string s = buf;
    if (s == "-0.00" || s == "-0.0" || s == "-0") s.erase(0, 1);
    return s;
}

inline std::ofstream open_text(const std::filesystem::path& p) {
    std::ofstream os(p, std::ios::trunc);
    if (!os) throw IoError("cannot write '" + p.string() + "'");
    return os;
}

inline void close_text(std::ofstream& os, const std::filesystem::path& p) {
    os.flush();
    if (!os) throw IoError("failed writing '" + p.string() + "'");
}

inline void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir))
        throw IoError("cannot create output directory '" + dir.string() + "'");
}

} // namespace detail

/// Trace columns, in CSV order.
inline const std::vector<std::string>& trace_columns() {
    static const std::vector<std::string> cols{"step",      "total",     "preference",
                                               "regularization", "batch_accuracy", "e_winning",
                                               "e_losing",  "i_acc",     "u"};
    return cols;
}

inline std::vector<double> trace_row(const TraceRecord& r) {
    return {static_cast<double>(r.step), r.total, r.preference, r.regularization,
            r.batch_accuracy, r.e_winning, r.e_losing, r.i_acc, r.u};
}

inline void validate_trace(const TrainTrace& t) {
    if (t.records.empty()) throw ConfigError("report: empty trace");
    for (std::size_t i = 0; i < t.records.size(); ++i) {
        if (i > 0 && t.records[i].step <= t.records[i - 1].step)
            throw ConfigError("report: trace steps must increase");
        for (double v : trace_row(t.records[i]))
            if (!std::isfinite(v)) throw NumericError("report: non-finite trace entry");
    }
}

inline void write_trace_csv(const TrainTrace& t, std::ostream& os) {
    const auto& cols = trace_columns();
    for (std::size_t c = 0; c < cols.size(); ++c) os << (c ? "," : "") << cols[c];
    os << '\n';
    for (const TraceRecord& r : t.records) {
        const std::vector<double> row = trace_row(r);
        os << r.step;
        for (std::size_t c = 1; c < row.size(); ++c) os << ',' << detail::num(row[c]);
        os << '\n';
    }
}

inline void write_loss_log_csv(const std::vector<LossLogRow>& log, Variant v, std::ostream& os) {
    os << "step,variant,total,preference,regularization,implicit_accuracy,e_winning,e_losing\n";
    for (const LossLogRow& r : log) {
        os << r.step << ',' << to_string(v) << ',' << detail::num(r.report.total) << ','
           << detail::num(r.report.preference) << ',' << detail::num(r.report.regularization) << ','
           << detail::num(r.report.implicit_accuracy) << ',' << detail::num(r.report.e_winning)
           << ',' << detail::num(r.report.e_losing) << '\n';
    }
}

// -- SVG --------------------------------------------------------------------

struct PlotSeries {
    std::string name;
    std::string color;
    std::vector<std::pair<double, double>> points;
    bool dashed = false;
};

/// Minimal deterministic line chart.
inline std::string svg_line_plot(const std::string& title, const std::string& y_label,
                                 const std::vector<PlotSeries>& series) {
    constexpr double W = 640, H = 400, L = 70, R = 150, T = 40, B = 50;
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series)
        for (auto [x, y] : s.points) {
            x0 = std::min(x0, x); x1 = std::max(x1, x);
            y0 = std::min(y0, y); y1 = std::max(y1, y);
        }
    if (!(x1 > x0)) { x0 -= 0.5; x1 += 0.5; }
    if (!(y1 > y0)) { y0 -= 0.5; y1 += 0.5; }
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
    using detail::fixed;
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
                    "font-family=\"sans-serif\" font-size=\"12\">\n";
    s += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    s += "<text x=\"" + fixed(W / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
         title + "</text>\n";
    s += "<rect x=\"" + fixed(L) + "\" y=\"" + fixed(T) + "\" width=\"" + fixed(W - L - R) +
         "\" height=\"" + fixed(H - T - B) + "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double yv = y0 + (y1 - y0) * i / 4.0, xv = x0 + (x1 - x0) * i / 4.0;
        s += "<text x=\"" + fixed(L - 6) + "\" y=\"" + fixed(py(yv) + 4) +
             "\" text-anchor=\"end\">" + fixed(yv, 3) + "</text>\n";
        s += "<text x=\"" + fixed(px(xv)) + "\" y=\"" + fixed(H - B + 16) +
             "\" text-anchor=\"middle\">" + fixed(xv, 0) + "</text>\n";
    }
    s += "<text x=\"" + fixed((L + W - R) / 2) + "\" y=\"" + fixed(H - 12) +
         "\" text-anchor=\"middle\">step</text>\n";
    s += "<text x=\"16\" y=\"" + fixed((T + H - B) / 2) + "\" transform=\"rotate(-90 16 " +
         fixed((T + H - B) / 2) + ")\" text-anchor=\"middle\">" + y_label + "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const PlotSeries& ser = series[k];
        std::string pts;
        for (auto [x, y] : ser.points) pts += fixed(px(x)) + "," + fixed(py(y)) + " ";
        s += "<polyline fill=\"none\" stroke=\"" + ser.color + "\" stroke-width=\"2\"" +
             (ser.dashed ? " stroke-dasharray=\"6 4\"" : "") + " points=\"" + pts + "\"/>\n";
        const double ly = T + 14 + 18.0 * static_cast<double>(k);
        s += "<line x1=\"" + fixed(W - R + 10) + "\" y1=\"" + fixed(ly - 4) + "\" x2=\"" +
             fixed(W - R + 30) + "\" y2=\"" + fixed(ly - 4) + "\" stroke=\"" + ser.color +
             "\" stroke-width=\"2\"/>\n";
        s += "<text x=\"" + fixed(W - R + 36) + "\" y=\"" + fixed(ly) + "\">" + ser.name +
             "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

/// Samples as dots over the mixture's 1-std circles.
inline std::string svg_toy_scatter(const std::string& title, const DenseArray& samples,
                                   const MixtureSpec& spec) {
    constexpr double S = 480, M = 30;
    double lo = INFINITY, hi = -INFINITY;
    for (const Point2& m : spec.means)
        for (double v : m) { lo = std::min(lo, v); hi = std::max(hi, v); }
    lo -= 1.5;
    hi += 1.5;
    auto px = [&](double x) { return M + (x - lo) / (hi - lo) * (S - 2 * M); };
    auto py = [&](double y) { return S - M - (y - lo) / (hi - lo) * (S - 2 * M); };
    using detail::fixed;
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"480\" "
                    "font-family=\"sans-serif\" font-size=\"12\">\n";
    s += "<rect width=\"480\" height=\"480\" fill=\"white\"/>\n";
    s += "<text x=\"240\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + title + "</text>\n";
    for (std::size_t i = 0; i < samples.rows(); ++i) {
        const double x = samples(i, 0), y = samples(i, 1);
        if (x < lo || x > hi || y < lo || y > hi) continue;
        s += "<circle cx=\"" + fixed(px(x)) + "\" cy=\"" + fixed(py(y)) +
             "\" r=\"1.5\" fill=\"#d62728\" fill-opacity=\"0.5\"/>\n";
    }
    const double r = spec.stddev / (hi - lo) * (S - 2 * M);
    for (const Point2& m : spec.means) {
        s += "<circle cx=\"" + fixed(px(m[0])) + "\" cy=\"" + fixed(py(m[1])) + "\" r=\"" +
             fixed(r) + "\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n";
    }
    s += "</svg>\n";
    return s;
}

inline void write_text_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream os = detail::open_text(p);
    os << text;
    detail::close_text(os, p);
}

/// Writes trace.csv, one CSV per series (series/<name>.csv) and the D-MSE and
/// implicit-accuracy plots. Returns the files written.
inline std::vector<std::filesystem::path> write_report(const TrainTrace& trace,
                                                       const std::filesystem::path& dir,
                                                       const std::string& prefix = "") {
    validate_trace(trace);
    detail::ensure_dir(dir);
    detail::ensure_dir(dir / "series");
    std::vector<std::filesystem::path> files;

    const auto trace_path = dir / (prefix + "trace.csv");
    {
        std::ofstream os = detail::open_text(trace_path);
        write_trace_csv(trace, os);
        detail::close_text(os, trace_path);
    }
    files.push_back(trace_path);

    const auto& cols = trace_columns();
    for (std::size_t c = 1; c < cols.size(); ++c) {
        const auto p = dir / "series" / (prefix + cols[c] + ".csv");
        std::ofstream os = detail::open_text(p);
        os << "step," << cols[c] << '\n';
        for (const TraceRecord& r : trace.records)
            os << r.step << ',' << detail::num(trace_row(r)[c]) << '\n';
        detail::close_text(os, p);
        files.push_back(p);
    }

    PlotSeries ew{"E_winning", "#2ca02c", {}}, el{"E_losing", "#d62728", {}},
        ref{"reference", "#7f7f7f", {}, true}, acc{"I_acc (held-out)", "#1f77b4", {}};
    for (const TraceRecord& r : trace.records) {
        const double x = static_cast<double>(r.step);
        ew.points.emplace_back(x, r.e_winning);
        el.points.emplace_back(x, r.e_losing);
        ref.points.emplace_back(x, trace.reference_dmse);
        acc.points.emplace_back(x, r.i_acc);
    }
    const std::string v = to_string(trace.variant);
    const auto dmse_path = dir / (prefix + "dmse.svg");
    write_text_file(dmse_path, svg_line_plot("Average D-MSE (" + v + ")", "D-MSE", {ew, el, ref}));
    files.push_back(dmse_path);
    const auto acc_path = dir / (prefix + "implicit_accuracy.svg");
    write_text_file(acc_path, svg_line_plot("Implicit accuracy (" + v + ")", "I_acc", {acc}));
    files.push_back(acc_path);
    return files;
}

// -- trace persistence ------------------------------------------------------

inline nlohmann::json trace_to_json(const TrainTrace& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (const TraceRecord& r : t.records) rows.push_back(trace_row(r));
    return {{"variant", to_string(t.variant)},
            {"reference_dmse", t.reference_dmse},
            {"bias", t.bias},
            {"columns", trace_columns()},
            {"records", rows}};
}

inline TrainTrace trace_from_json(const nlohmann::json& j) {
    try {
        TrainTrace t;
        t.variant = variant_from_string(j.at("variant").get<std::string>());
        t.reference_dmse = j.at("reference_dmse").get<double>();
        t.bias = j.at("bias").get<double>();
        for (const auto& row : j.at("records")) {
            const auto v = row.get<std::vector<double>>();
            if (v.size() != trace_columns().size()) throw IoError("trace: wrong record width");
            t.records.push_back({static_cast<std::size_t>(v[0]), v[1], v[2], v[3], v[4], v[5],
                                 v[6], v[7], v[8]});
        }
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("trace: ") + e.what());
    }
}

inline void save_trace(const TrainTrace& t, const std::string& path) {
    write_text_file(path, trace_to_json(t).dump(1) + "\n");
}

inline TrainTrace load_trace(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open trace '" + path + "'");
    try {
        return trace_from_json(nlohmann::json::parse(is));
    } catch (const nlohmann::json::parse_error& e) {
        throw IoError("trace '" + path + "': " + e.what());
    }
}

} // namespace fkpd
