#ifndef MEANFLOW_REPORT_HPP
#define MEANFLOW_REPORT_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "meanflow/pde.hpp"

namespace meanflow {

/// Shortest-round-trip decimal rendering (%.17g); CSV output is
/// byte-identical across runs with identical configs.
std::string format_double(double v);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row);
};

void write_csv(const CsvTable& table, const std::string& path);

struct SvgSeries {
    std::string label;
    std::vector<double> x, y;
};

/// Static line chart; log_log plots both axes on decade ticks (nonpositive
/// values are dropped there).
void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<SvgSeries>& series, bool log_log = false);

struct RunManifest {
    std::string scenario;
    std::string command;
    std::string tool_version;
    std::string timestamp;  ///< not hashed; CSVs carry no wall-clock data
    std::map<std::string, std::string> config;
    std::vector<std::string> outputs;
    std::vector<std::pair<std::string, bool>> checks;  ///< (name, pass)

    /// FNV-1a over sorted key=value pairs: stable under key reordering.
    std::uint64_t config_hash() const;
    bool all_passed() const;
    void write(const std::string& path) const;
};

/// Frame files <prefix>_frame<k>.csv plus <prefix>_trace.csv (norms per step).
std::vector<std::string> export_solution_csv(const GridSolution& sol, const std::string& dir,
                                             const std::string& prefix);

/// Nodal frame round-trip used by the import path of the solvers.
Eigen::VectorXd import_frame_csv(const std::string& path, const GridSpec& expected);

} // namespace meanflow

#endif
