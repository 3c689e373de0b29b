#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "meanflow/report.hpp"

using namespace meanflow;

namespace {
std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}
} // namespace

TEST_CASE("format_double round-trips and is deterministic") {
    CHECK(format_double(0.1) == "0.10000000000000001");
    CHECK(format_double(1.0) == "1");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
    CHECK(format_double(1e-300) == format_double(1e-300));
}

TEST_CASE("csv writer enforces rectangular tables and is byte stable") {
    CsvTable t;
    t.header = {"a", "b"};
    t.add_row({"1", "2"});
    CHECK_THROWS_AS(t.add_row({"only one"}), MeanflowError);
    const std::string p1 = "report_test_a.csv", p2 = "report_test_b.csv";
    write_csv(t, p1);
    write_csv(t, p2);
    CHECK(slurp(p1) == "a,b\n1,2\n");
    CHECK(slurp(p1) == slurp(p2));
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("manifest hash is stable under key reordering and tracks values") {
    RunManifest a;
    a.config = {{"x", "1"}, {"y", "2"}};
    RunManifest b;
    b.config["y"] = "2";  // inserted in the other order
    b.config["x"] = "1";
    CHECK(a.config_hash() == b.config_hash());

    RunManifest c = a;
    c.config["y"] = "3";
    CHECK(c.config_hash() != a.config_hash());
    RunManifest d = a;
    d.config["z"] = "0";
    CHECK(d.config_hash() != a.config_hash());
    // timestamp does not enter the hash
    RunManifest e = a;
    e.timestamp = "2001-01-01T00:00:00Z";
    CHECK(e.config_hash() == a.config_hash());
}

TEST_CASE("manifest summary and file format") {
    RunManifest m;
    m.scenario = "demo";
    m.command = "converge";
    m.tool_version = "0.1.0";
    m.config["a"] = "1";
    m.outputs.push_back("x.csv");
    m.checks.emplace_back("first", true);
    CHECK(m.all_passed());
    m.checks.emplace_back("second", false);
    CHECK_FALSE(m.all_passed());
    const std::string path = "report_test_manifest.txt";
    m.write(path);
    const std::string text = slurp(path);
    CHECK(text.find("scenario = demo") != std::string::npos);
    CHECK(text.find("check pass first") != std::string::npos);
    CHECK(text.find("check FAIL second") != std::string::npos);
    CHECK(text.find("summary = FAIL") != std::string::npos);
    std::remove(path.c_str());
}

TEST_CASE("svg chart emits a valid document with all series") {
    SvgSeries s1{"errors", {0.2, 0.1, 0.05}, {0.1, 0.04, 0.02}};
    SvgSeries s2{"reference", {0.2, 0.1, 0.05}, {0.2, 0.1, 0.05}};
    const std::string path = "report_test_chart.svg";
    write_svg_chart(path, "demo", "eps", "error", {s1, s2}, true);
    const std::string text = slurp(path);
    CHECK(text.rfind("<svg", 0) == 0);
    CHECK(text.find("</svg>") != std::string::npos);
    CHECK(text.find("errors") != std::string::npos);
    CHECK(text.find("reference") != std::string::npos);
    CHECK(text.find("polyline") != std::string::npos);
    std::remove(path.c_str());
}

TEST_CASE("solution export and frame import round trip") {
    GridSolution sol;
    sol.grid = GridSpec::centered(2, 8, 2.0);
    sol.times = {0.0, 0.5};
    for (int f = 0; f < 2; ++f) {
        Eigen::VectorXd u(sol.grid.cells());
        for (long i = 0; i < u.size(); ++i) u(i) = std::sin(0.1 * (i + f));
        sol.frames.push_back(u);
    }
    sol.step_times = {0.0, 0.25, 0.5};
    sol.mass_trace = {1.0, 1.0, 1.0};
    sol.l2_trace = {1.0, 0.9, 0.8};

    const std::string dir = "report_test_export";
    const std::vector<std::string> files = export_solution_csv(sol, dir, "demo");
    CHECK(files.size() == 3);  // trace + two frames
    const Eigen::VectorXd back = import_frame_csv(dir + "/demo_frame1.csv", sol.grid);
    CHECK((back - sol.frames[1]).lpNorm<Eigen::Infinity>() == 0.0);

    GridSpec wrong = sol.grid;
    wrong.n = 16;
    CHECK_THROWS_AS(import_frame_csv(dir + "/demo_frame1.csv", wrong), MeanflowError);
    for (const auto& f : files) std::remove(f.c_str());
    std::filesystem::remove_all(dir);
}
