#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "meanflow/scenario.hpp"

using namespace meanflow;

namespace {
std::string write_temp(const std::string& text) {
    const std::string path = "scenario_test_tmp.cfg";
    std::ofstream out(path);
    out << text;
    return path;
}
} // namespace

TEST_CASE("all built-in scenarios resolve and are self-consistent") {
    for (const std::string& name : builtin_scenario_names()) {
        CAPTURE(name);
        CHECK(is_builtin_scenario(name));
        const Scenario sc = builtin_scenario(name);
        CHECK(sc.name == name);
        CHECK(sc.dim >= 1);
        CHECK(sc.dim <= 3);
        CHECK(sc.grid.n > 0);
        CHECK(sc.T > 0);
        CHECK(sc.lambda > 0);
        CHECK(sc.lambda <= sc.Lambda);
        CHECK(static_cast<bool>(sc.initial));
        CHECK(static_cast<bool>(sc.b));
        CHECK(static_cast<bool>(sc.D));
        CHECK(static_cast<bool>(sc.mean_flow.velocity));
        // declared mean flow consistent with the full field at y = 0 mean:
        sc.mean_flow.validate_at(sc.X0);
    }
    CHECK_FALSE(is_builtin_scenario("no_such_scenario"));
    CHECK_THROWS_AS(builtin_scenario("no_such_scenario"), MeanflowError);
}

TEST_CASE("constant_drift scenario carries the documented parameters") {
    const Scenario sc = builtin_scenario("constant_drift");
    CHECK(sc.dim == 2);
    const Vec b_bar = sc.mean_flow.velocity(make_vec({0.0, 0.0}));
    CHECK(b_bar(0) == doctest::Approx(1.0));
    CHECK(b_bar(1) == doctest::Approx(0.5));
    CHECK(sc.expected_verdict == Scenario::Verdict::homogenizes);
    CHECK(sc.x_independent);
    CHECK(sc.micro_oscillation);
    CHECK(sc.eps_sweep.size() == 3);
}

TEST_CASE("rotation scenario is the linear field [[0,-1],[1,0]]") {
    const Scenario sc = builtin_scenario("rotation");
    const Vec v = sc.mean_flow.velocity(make_vec({1.0, 0.0}));
    CHECK(v(0) == doctest::Approx(0.0));
    CHECK(v(1) == doctest::Approx(1.0));
    const Eigen::MatrixXd d = sc.D(make_vec({0.0, 0.0}), make_vec({0.0, 0.0}));
    CHECK(d(0, 0) == doctest::Approx(1.0));
    CHECK(d(1, 1) == doctest::Approx(2.0));
    CHECK_FALSE(builtin_scenario("lagrangian_only").has_cell);
}

TEST_CASE("expected verdicts of the counterexample scenarios") {
    CHECK(builtin_scenario("shear").expected_verdict == Scenario::Verdict::trivial_limit);
    CHECK(builtin_scenario("dyadic_nonunique").expected_verdict ==
          Scenario::Verdict::non_unique);
    CHECK(std::string(to_string(Scenario::Verdict::non_unique)) == "non_unique");
    CHECK(verdict_from_string("trivial_limit") == Scenario::Verdict::trivial_limit);
    CHECK_THROWS_AS(verdict_from_string("perhaps"), MeanflowError);
}

TEST_CASE("config round trip: built-in text parses to the same scenario") {
    for (const std::string& name : builtin_scenario_names()) {
        CAPTURE(name);
        const std::string text = builtin_scenario_config(name);
        const Scenario sc = parse_config_text(text, name);
        const Scenario direct = builtin_scenario(name);
        CHECK(sc.dim == direct.dim);
        CHECK(sc.grid.n == direct.grid.n);
        CHECK(sc.T == direct.T);
        CHECK(sc.expected_verdict == direct.expected_verdict);
    }
}

TEST_CASE("load_config reads a file") {
    const std::string path = write_temp(builtin_scenario_config("rotation"));
    const Scenario sc = load_config(path);
    CHECK(sc.dim == 2);
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_config("does_not_exist.cfg"), MeanflowError);
}

TEST_CASE("unknown keys are rejected with their location") {
    std::string text = builtin_scenario_config("rotation");
    text += "\n[grid]\nbananas = 7\n";
    try {
        parse_config_text(text, "inline");
        FAIL("expected a schema error");
    } catch (const MeanflowError& e) {
        const std::string what = e.what();
        CHECK(what.find("bananas") != std::string::npos);
        CHECK(what.find("inline") != std::string::npos);
    }
}

TEST_CASE("malformed lines are schema errors") {
    CHECK_THROWS_AS(parse_config_text("[scenario]\nthis line has no equals sign\n", "bad"),
                    MeanflowError);
    CHECK_THROWS_AS(parse_config_text("[scenario]\nname = a\nname = b\n", "dup"),
                    MeanflowError);
}

TEST_CASE("config key values flatten section and key") {
    const auto kv = config_key_values(builtin_scenario_config("rotation"));
    CHECK(kv.count("scenario.name") == 1);
    CHECK(kv.at("scenario.name") == "rotation");
    CHECK(kv.count("grid.n") == 1);
}

TEST_CASE("effective options inherit the scenario algebra declarations") {
    const Scenario sc = builtin_scenario("rotation");
    const EffectiveOptions o = sc.effective_options();
    CHECK(o.orbit_class == SignalClass::periodic);
    CHECK(o.period == doctest::Approx(2 * M_PI));
    CHECK(o.lambda == doctest::Approx(sc.lambda));
}
