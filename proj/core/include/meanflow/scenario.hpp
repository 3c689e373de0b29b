#ifndef MEANFLOW_SCENARIO_HPP
#define MEANFLOW_SCENARIO_HPP

#include <map>
#include <string>
#include <vector>

#include "meanflow/effective_tensor.hpp"
#include "meanflow/flow.hpp"
#include "meanflow/pde.hpp"

namespace meanflow {

/// A fully resolved model setup: mean flow, microscopic fields, solver box
/// and sweep parameters, plus the declared fast-time algebra classes.
struct Scenario {
    enum class Verdict { homogenizes, trivial_limit, non_unique };

    std::string name;
    std::string description;
    int dim = 0;

    MeanFlowField mean_flow;
    std::function<Vec(const Vec&, const Vec&)> b;              ///< full field incl. mean part
    std::function<Eigen::MatrixXd(const Vec&, const Vec&)> D;  ///< (x, y)
    std::function<double(const Vec&)> initial;

    double lambda = 1, Lambda = 1;
    int modes = 32;
    bool x_independent = true;  ///< cell dispersion matrix independent of x
    bool has_cell = true;       ///< false: no microscopic oscillation to solve for
    bool macro_diffusion = false;  ///< D is a function of x alone (Lagrangian model)
    bool micro_oscillation = false;  ///< coefficients oscillate on the eps scale

    SignalClass orbit_class = SignalClass::generic;  ///< declared class of the orbit signals
    double orbit_period = 0;

    GridSpec grid;
    double T = 0.1;
    std::vector<double> eps_sweep;
    Vec X0;  ///< reference macroscopic point

    Verdict expected_verdict = Verdict::homogenizes;

    EffectiveOptions effective_options() const;
};

const char* to_string(Scenario::Verdict v);
Scenario::Verdict verdict_from_string(const std::string& s);

std::vector<std::string> builtin_scenario_names();
bool is_builtin_scenario(const std::string& name);
Scenario builtin_scenario(const std::string& name);

/// The config text a built-in scenario is constructed from (the same
/// parser handles files and built-ins).
std::string builtin_scenario_config(const std::string& name);

/// Parse a scenario config file (sectioned key = value text; unknown keys
/// rejected with their line number).
Scenario load_config(const std::string& path);
Scenario parse_config_text(const std::string& text, const std::string& origin);

/// Flattened section.key -> value view of a config text (for manifests).
std::map<std::string, std::string> config_key_values(const std::string& text);

} // namespace meanflow

#endif
