#include "meanflow/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace meanflow {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void CsvTable::add_row(std::vector<std::string> row) {
    if (row.size() != header.size())
        throw MeanflowError("CsvTable: row width does not match the header");
    rows.push_back(std::move(row));
}

void write_csv(const CsvTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // binary: no platform newline surprises
    if (!out) throw MeanflowError("cannot open '" + path + "' for writing");
    for (size_t i = 0; i < table.header.size(); ++i)
        out << (i ? "," : "") << table.header[i];
    out << "\n";
    for (const auto& row : table.rows) {
        for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << "\n";
    }
    if (!out) throw MeanflowError("write failed for '" + path + "'");
}

// -------------------------------------------------------------------- SVG

namespace {

constexpr int kWidth = 720, kHeight = 480;
constexpr int kMarginL = 80, kMarginR = 24, kMarginT = 48, kMarginB = 56;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

} // namespace

void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<SvgSeries>& series, bool log_log) {
    // collect plottable points
    std::vector<std::vector<std::pair<double, double>>> data;
    double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
    bool any = false;
    for (const auto& s : series) {
        std::vector<std::pair<double, double>> pts;
        for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            double x = s.x[i], y = s.y[i];
            if (log_log) {
                if (x <= 0 || y <= 0) continue;
                x = std::log10(x);
                y = std::log10(y);
            }
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            if (!any) {
                xmin = xmax = x;
                ymin = ymax = y;
                any = true;
            }
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
            pts.emplace_back(x, y);
        }
        data.push_back(std::move(pts));
    }
    if (!any) {
        xmin = ymin = 0;
        xmax = ymax = 1;
    }
    if (xmax - xmin < 1e-12) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymax - ymin < 1e-12) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    const double padx = 0.05 * (xmax - xmin), pady = 0.08 * (ymax - ymin);
    xmin -= padx;
    xmax += padx;
    ymin -= pady;
    ymax += pady;

    auto px = [&](double x) {
        return kMarginL + (x - xmin) / (xmax - xmin) * (kWidth - kMarginL - kMarginR);
    };
    auto py = [&](double y) {
        return kHeight - kMarginB - (y - ymin) / (ymax - ymin) * (kHeight - kMarginT - kMarginB);
    };

    std::ofstream out(path, std::ios::binary);
    if (!out) throw MeanflowError("cannot open '" + path + "' for writing");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"monospace\" font-size=\"15\">" << title << "</text>\n";

    // axes box
    out << "<rect x=\"" << kMarginL << "\" y=\"" << kMarginT << "\" width=\""
        << kWidth - kMarginL - kMarginR << "\" height=\"" << kHeight - kMarginT - kMarginB
        << "\" fill=\"none\" stroke=\"black\"/>\n";

    // ticks
    auto emit_ticks = [&](bool xaxis) {
        std::vector<double> ticks;
        const double lo = xaxis ? xmin : ymin, hi = xaxis ? xmax : ymax;
        if (log_log) {
            for (int e = static_cast<int>(std::floor(lo)); e <= static_cast<int>(std::ceil(hi));
                 ++e)
                if (e >= lo && e <= hi) ticks.push_back(e);
        } else {
            for (int k = 0; k <= 5; ++k) ticks.push_back(lo + (hi - lo) * k / 5.0);
        }
        for (double tv : ticks) {
            const double label_v = log_log ? std::pow(10.0, tv) : tv;
            if (xaxis) {
                const double x = px(tv);
                out << "<line x1=\"" << x << "\" y1=\"" << kHeight - kMarginB << "\" x2=\"" << x
                    << "\" y2=\"" << kHeight - kMarginB + 5 << "\" stroke=\"black\"/>\n"
                    << "<text x=\"" << x << "\" y=\"" << kHeight - kMarginB + 20
                    << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"11\">"
                    << tick_label(label_v) << "</text>\n";
            } else {
                const double y = py(tv);
                out << "<line x1=\"" << kMarginL - 5 << "\" y1=\"" << y << "\" x2=\"" << kMarginL
                    << "\" y2=\"" << y << "\" stroke=\"black\"/>\n"
                    << "<text x=\"" << kMarginL - 8 << "\" y=\"" << y + 4
                    << "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"11\">"
                    << tick_label(label_v) << "</text>\n";
            }
        }
    };
    emit_ticks(true);
    emit_ticks(false);

    out << "<text x=\"" << (kMarginL + kWidth - kMarginR) / 2 << "\" y=\"" << kHeight - 12
        << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\">" << x_label
        << "</text>\n"
        << "<text x=\"18\" y=\"" << (kMarginT + kHeight - kMarginB) / 2
        << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\" "
        << "transform=\"rotate(-90 18 " << (kMarginT + kHeight - kMarginB) / 2 << ")\">"
        << y_label << "</text>\n";

    for (size_t s = 0; s < data.size(); ++s) {
        const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
        if (!data[s].empty()) {
            out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" "
                << "points=\"";
            for (const auto& [x, y] : data[s]) out << px(x) << "," << py(y) << " ";
            out << "\"/>\n";
            for (const auto& [x, y] : data[s])
                out << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"2.5\" fill=\""
                    << color << "\"/>\n";
        }
        out << "<rect x=\"" << kWidth - kMarginR - 150 << "\" y=\""
            << kMarginT + 10 + 18 * static_cast<int>(s) << "\" width=\"12\" height=\"4\" fill=\""
            << color << "\"/>\n"
            << "<text x=\"" << kWidth - kMarginR - 132 << "\" y=\""
            << kMarginT + 16 + 18 * static_cast<int>(s)
            << "\" font-family=\"monospace\" font-size=\"11\">" << series[s].label
            << "</text>\n";
    }
    out << "</svg>\n";
    if (!out) throw MeanflowError("write failed for '" + path + "'");
}

// --------------------------------------------------------------- manifest

std::uint64_t RunManifest::config_hash() const {
    std::uint64_t h = 14695981039346656037ULL;
    auto feed = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [k, v] : config) {  // std::map: sorted keys
        feed(k);
        feed("=");
        feed(v);
        feed("\n");
    }
    return h;
}

bool RunManifest::all_passed() const {
    for (const auto& [name, ok] : checks)
        if (!ok) return false;
    return true;
}

void RunManifest::write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MeanflowError("cannot open '" + path + "' for writing");
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(config_hash()));
    out << "manifest_version = 1\n"
        << "scenario = " << scenario << "\n"
        << "command = " << command << "\n"
        << "tool_version = " << tool_version << "\n"
        << "config_hash = " << hash << "\n";
    if (!timestamp.empty()) out << "timestamp = " << timestamp << "\n";
    for (const auto& [k, v] : config) out << "config " << k << " = " << v << "\n";
    for (const auto& o : outputs) out << "output = " << o << "\n";
    for (const auto& [name, ok] : checks)
        out << "check " << (ok ? "pass" : "FAIL") << " " << name << "\n";
    out << "summary = " << (all_passed() ? "pass" : "FAIL") << "\n";
    if (!out) throw MeanflowError("write failed for '" + path + "'");
}

// ---------------------------------------------------------- frame export

std::vector<std::string> export_solution_csv(const GridSolution& sol, const std::string& dir,
                                             const std::string& prefix) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> written;

    CsvTable trace;
    trace.header = {"time", "mass", "l2_norm"};
    for (size_t k = 0; k < sol.step_times.size(); ++k)
        trace.add_row({format_double(sol.step_times[k]), format_double(sol.mass_trace[k]),
                       format_double(sol.l2_trace[k])});
    const std::string trace_path = dir + "/" + prefix + "_trace.csv";
    write_csv(trace, trace_path);
    written.push_back(trace_path);

    const GridSpec& g = sol.grid;
    for (size_t f = 0; f < sol.frames.size(); ++f) {
        CsvTable frame;
        for (int a = 0; a < g.dim; ++a) frame.header.push_back("i" + std::to_string(a));
        frame.header.push_back("x_time_" + format_double(sol.times[f]));
        const long total = g.cells();
        for (long i = 0; i < total; ++i) {
            std::vector<std::string> row;
            long rem = i;
            long idx[3] = {0, 0, 0};
            for (int a = g.dim - 1; a >= 0; --a) {
                idx[a] = rem % g.n;
                rem /= g.n;
            }
            for (int a = 0; a < g.dim; ++a) row.push_back(std::to_string(idx[a]));
            row.push_back(format_double(sol.frames[f](i)));
            frame.add_row(std::move(row));
        }
        const std::string path = dir + "/" + prefix + "_frame" + std::to_string(f) + ".csv";
        write_csv(frame, path);
        written.push_back(path);
    }
    return written;
}

Eigen::VectorXd import_frame_csv(const std::string& path, const GridSpec& expected) {
    std::ifstream in(path);
    if (!in) throw MeanflowError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw MeanflowError("empty frame file '" + path + "'");
    Eigen::VectorXd u = Eigen::VectorXd::Zero(expected.cells());
    long count = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        long flat = 0;
        for (int a = 0; a < expected.dim; ++a) {
            if (!std::getline(ss, cell, ','))
                throw MeanflowError("short row in '" + path + "'");
            flat = flat * expected.n + std::stol(cell);
        }
        if (!std::getline(ss, cell, ',')) throw MeanflowError("short row in '" + path + "'");
        if (flat < 0 || flat >= u.size())
            throw MeanflowError("index out of range in '" + path + "'");
        u(flat) = std::stod(cell);
        ++count;
    }
    if (count != u.size())
        throw MeanflowError("frame file '" + path + "' does not match the expected grid");
    return u;
}

} // namespace meanflow
