#include "meanflow/scenario.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace meanflow {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<double> parse_list(const std::string& s, const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            size_t pos = 0;
            out.push_back(std::stod(item, &pos));
            if (pos != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw MeanflowError("config: bad number '" + item + "' in " + key);
        }
    }
    if (out.empty()) throw MeanflowError("config: empty list in " + key);
    return out;
}

/// section.key -> (value, line); every lookup marks the key consumed so
/// leftovers can be rejected with their position.
class KeyMap {
public:
    KeyMap(const std::string& text, std::string origin) : origin_(std::move(origin)) {
        std::stringstream ss(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(ss, line)) {
            ++lineno;
            const std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    fail(lineno, "malformed section header '" + t + "'");
                section = trim(t.substr(1, t.size() - 2));
                if (section.empty()) fail(lineno, "empty section name");
                continue;
            }
            const size_t eq = t.find('=');
            if (eq == std::string::npos) fail(lineno, "expected 'key = value', got '" + t + "'");
            const std::string key = trim(t.substr(0, eq));
            const std::string value = trim(t.substr(eq + 1));
            if (key.empty()) fail(lineno, "empty key");
            if (section.empty()) fail(lineno, "key '" + key + "' appears before any section");
            const std::string full = section + "." + key;
            if (entries_.count(full)) fail(lineno, "duplicate key '" + full + "'");
            entries_[full] = {value, lineno};
        }
    }

    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    std::string get_string(const std::string& key) {
        auto it = entries_.find(key);
        if (it == entries_.end()) throw MeanflowError(origin_ + ": missing key '" + key + "'");
        it->second.consumed = true;
        return it->second.value;
    }
    std::string get_string(const std::string& key, const std::string& def) {
        return has(key) ? get_string(key) : def;
    }
    double get_double(const std::string& key) {
        const std::string v = get_string(key);
        try {
            size_t pos = 0;
            double d = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (const std::exception&) {
            fail_key(key, "bad number '" + v + "'");
        }
        return 0;
    }
    double get_double(const std::string& key, double def) {
        return has(key) ? get_double(key) : def;
    }
    int get_int(const std::string& key) {
        const double d = get_double(key);
        if (d != std::floor(d)) fail_key(key, "expected an integer");
        return static_cast<int>(d);
    }
    int get_int(const std::string& key, int def) { return has(key) ? get_int(key) : def; }
    bool get_bool(const std::string& key, bool def) {
        if (!has(key)) return def;
        const std::string v = get_string(key);
        if (v == "true") return true;
        if (v == "false") return false;
        fail_key(key, "expected true or false, got '" + v + "'");
        return def;
    }
    std::vector<double> get_list(const std::string& key) {
        return parse_list(get_string(key), key);
    }
    std::vector<double> get_list(const std::string& key, std::vector<double> def) {
        return has(key) ? get_list(key) : def;
    }
    Eigen::MatrixXd get_matrix(const std::string& key, int rows, int cols) {
        const std::string v = get_string(key);
        std::stringstream ss(v);
        std::string row;
        std::vector<std::vector<double>> data;
        while (std::getline(ss, row, ';')) data.push_back(parse_list(row, key));
        if (static_cast<int>(data.size()) != rows) fail_key(key, "wrong number of matrix rows");
        Eigen::MatrixXd m(rows, cols);
        for (int i = 0; i < rows; ++i) {
            if (static_cast<int>(data[static_cast<size_t>(i)].size()) != cols)
                fail_key(key, "wrong number of matrix columns");
            for (int j = 0; j < cols; ++j)
                m(i, j) = data[static_cast<size_t>(i)][static_cast<size_t>(j)];
        }
        return m;
    }

    [[noreturn]] void fail_key(const std::string& key, const std::string& why) const {
        auto it = entries_.find(key);
        const int line = it == entries_.end() ? 0 : it->second.line;
        fail(line, "key '" + key + "': " + why);
    }
    [[noreturn]] void fail(int line, const std::string& why) const {
        std::ostringstream os;
        os << origin_ << ":" << line << ": " << why;
        throw MeanflowError(os.str());
    }

    std::map<std::string, std::string> values() const {
        std::map<std::string, std::string> out;
        for (const auto& [key, e] : entries_) out[key] = e.value;
        return out;
    }

    void reject_unknown() const {
        for (const auto& [key, e] : entries_)
            if (!e.consumed) fail(e.line, "unknown key '" + key + "'");
    }

private:
    struct Entry {
        std::string value;
        int line = 0;
        mutable bool consumed = false;
    };
    std::string origin_;
    std::map<std::string, Entry> entries_;
};

Vec vec_from(const std::vector<double>& v, int dim, const std::string& key) {
    if (static_cast<int>(v.size()) != dim)
        throw MeanflowError("config: key '" + key + "' needs " + std::to_string(dim) +
                            " components");
    Vec out(dim);
    for (int i = 0; i < dim; ++i) out(i) = v[static_cast<size_t>(i)];
    return out;
}

Scenario build(KeyMap& m) {
    Scenario sc;
    sc.name = m.get_string("scenario.name");
    sc.description = m.get_string("scenario.description", "");
    sc.dim = m.get_int("scenario.dimension");
    if (sc.dim < 1 || sc.dim > 3) m.fail_key("scenario.dimension", "must be 1, 2 or 3");
    sc.expected_verdict = verdict_from_string(m.get_string("scenario.verdict"));
    const int d = sc.dim;

    // ---- mean flow
    const std::string ftype = m.get_string("flow.type");
    if (ftype == "constant") {
        sc.mean_flow = constant_drift_field(vec_from(m.get_list("flow.b_star"), d, "flow.b_star"));
    } else if (ftype == "linear") {
        Eigen::MatrixXd a = m.get_matrix("flow.matrix", d, d);
        Vec bs = Vec::Zero(d);
        if (m.has("flow.b_star")) bs = vec_from(m.get_list("flow.b_star"), d, "flow.b_star");
        sc.mean_flow = linear_field(a, bs);
    } else if (ftype == "shear") {
        if (d != 2) m.fail_key("flow.type", "shear needs dimension 2");
        sc.mean_flow = shear_field();
    } else if (ftype == "asympt_constant") {
        if (d != 2) m.fail_key("flow.type", "asympt_constant needs dimension 2");
        sc.mean_flow = asymptotically_constant_field(
            m.get_double("flow.speed"), m.get_double("flow.v_base"),
            m.get_double("flow.bump"), m.get_double("flow.width"));
    } else {
        m.fail_key("flow.type", "unknown flow type '" + ftype + "'");
    }

    // ---- microscopic fluid field
    const std::string osc = m.get_string("micro.oscillation", "none");
    const double amp = m.get_double("micro.amp", 0.0);
    auto mean_velocity = sc.mean_flow.velocity;
    if (osc == "none") {
        sc.b = [mean_velocity](const Vec& x, const Vec&) { return mean_velocity(x); };
    } else if (osc == "cross_cos") {
        if (d < 2) m.fail_key("micro.oscillation", "cross_cos needs dimension >= 2");
        sc.b = [mean_velocity, amp, d](const Vec& x, const Vec& y) {
            Vec v = mean_velocity(x);
            // each component oscillates in a different coordinate: divergence free
            for (int a = 0; a < d; ++a) v(a) += amp * std::cos(two_pi * y((a + 1) % d));
            return v;
        };
    } else {
        m.fail_key("micro.oscillation", "unknown oscillation '" + osc + "'");
    }

    // ---- diffusion
    const std::string dif = m.get_string("micro.diffusion", "identity");
    const std::string frame = m.get_string("micro.frame", "micro");
    if (frame != "micro" && frame != "macro") m.fail_key("micro.frame", "must be micro or macro");
    sc.macro_diffusion = frame == "macro";
    if (dif == "identity") {
        sc.D = [d](const Vec&, const Vec&) { return Eigen::MatrixXd::Identity(d, d).eval(); };
        sc.lambda = 1;
        sc.Lambda = 1;
    } else if (dif == "diagonal") {
        const Vec diag = vec_from(m.get_list("micro.d_diag"), d, "micro.d_diag");
        sc.D = [diag](const Vec&, const Vec&) {
            return Eigen::MatrixXd(diag.asDiagonal());
        };
        sc.lambda = diag.minCoeff();
        sc.Lambda = diag.maxCoeff();
    } else if (dif == "sin_1d") {
        if (d != 1) m.fail_key("micro.diffusion", "sin_1d needs dimension 1");
        const double base = m.get_double("micro.d_base");
        const double damp = m.get_double("micro.d_amp");
        sc.D = [base, damp](const Vec&, const Vec& y) {
            Eigen::MatrixXd out(1, 1);
            out(0, 0) = base + damp * std::sin(two_pi * y(0));
            return out;
        };
        sc.lambda = base - std::abs(damp);
        sc.Lambda = base + std::abs(damp);
    } else if (dif == "dyadic_x") {
        if (d != 1) m.fail_key("micro.diffusion", "dyadic_x needs dimension 1");
        sc.D = [](const Vec& x, const Vec&) {
            Eigen::MatrixXd out(1, 1);
            out(0, 0) = piecewise_dyadic_coefficient(x(0));
            return out;
        };
        sc.lambda = 1;
        sc.Lambda = 2;
        sc.has_cell = false;
    } else {
        m.fail_key("micro.diffusion", "unknown diffusion '" + dif + "'");
    }
    if (sc.macro_diffusion) sc.has_cell = false;

    sc.micro_oscillation = osc != "none" || dif == "sin_1d";

    sc.lambda = m.get_double("cell.lambda", sc.lambda);
    sc.Lambda = m.get_double("cell.Lambda", sc.Lambda);
    sc.modes = m.get_int("cell.modes", d == 1 ? 256 : d == 2 ? 64 : 16);
    sc.x_independent = m.get_bool("cell.x_independent", osc == "none" || ftype == "constant");

    // ---- declared fast-time class of the orbit signals
    const std::string cls = m.get_string("orbit.class", "generic");
    if (cls == "periodic") {
        sc.orbit_class = SignalClass::periodic;
        sc.orbit_period = m.get_double("orbit.period");
    } else if (cls == "converging") {
        sc.orbit_class = SignalClass::converging_at_infinity;
    } else if (cls == "generic") {
        sc.orbit_class = SignalClass::generic;
    } else {
        m.fail_key("orbit.class", "unknown class '" + cls + "'");
    }

    // ---- solver box, sweep, initial data
    sc.grid = GridSpec::centered(d, m.get_int("grid.n"), m.get_double("grid.side"));
    sc.T = m.get_double("run.T");
    sc.eps_sweep = m.get_list("run.eps", {0.2, 0.1, 0.05});
    sc.X0 = m.has("run.X0") ? vec_from(m.get_list("run.X0"), d, "run.X0") : Vec::Zero(d);
    const double sigma = m.get_double("initial.sigma", sc.grid.length(0) / 16);
    sc.initial = [sigma](const Vec& x) {
        return std::exp(-x.squaredNorm() / (2.0 * sigma * sigma));
    };

    m.reject_unknown();
    return sc;
}

const std::map<std::string, std::string>& builtin_configs() {
    static const std::map<std::string, std::string> configs = {
        {"constant_drift", R"(
[scenario]
name = constant_drift
description = constant mean drift with a periodic cross-cosine oscillation
dimension = 2
verdict = homogenizes
[flow]
type = constant
b_star = 1.0, 0.5
[micro]
oscillation = cross_cos
amp = 0.5
diffusion = identity
[cell]
modes = 32
[orbit]
class = periodic
period = 1.0
[grid]
n = 128
side = 4
[run]
T = 0.1
eps = 0.2, 0.1, 0.05
[initial]
sigma = 0.25
)"},
        {"rotation", R"(
[scenario]
name = rotation
description = rigid rotation of the plane with anisotropic diffusion
dimension = 2
verdict = homogenizes
[flow]
type = linear
matrix = 0, -1; 1, 0
[micro]
diffusion = diagonal
d_diag = 1, 2
[cell]
modes = 32
x_independent = true
[orbit]
class = periodic
period = 6.283185307179586
[grid]
n = 128
side = 8
[run]
T = 0.1
eps = 0.2, 0.1, 0.05
X0 = 1, 0
[initial]
sigma = 0.5
)"},
        {"asympt_constant", R"(
[scenario]
name = asympt_constant
description = constant drift with a smooth localized transition region
dimension = 2
verdict = homogenizes
[flow]
type = asympt_constant
speed = 1.0
v_base = 0.5
bump = 0.75
width = 2.0
[micro]
diffusion = identity
[cell]
modes = 32
x_independent = true
[orbit]
class = converging
[grid]
n = 128
side = 8
[run]
T = 0.1
eps = 0.2, 0.1, 0.05
[initial]
sigma = 0.5
)"},
        {"shear", R"(
[scenario]
name = shear
description = linear shear flow; the limit along the flow is trivial
dimension = 2
verdict = trivial_limit
[flow]
type = shear
[micro]
diffusion = identity
[cell]
modes = 32
x_independent = true
[orbit]
class = generic
[grid]
n = 512
side = 32
[run]
T = 0.5
eps = 0.4, 0.2, 0.1
[initial]
sigma = 1.0
)"},
        {"dyadic_nonunique", R"(
[scenario]
name = dyadic_nonunique
description = dyadic on/off diffusion swept by a unit drift; no unique limit
dimension = 1
verdict = non_unique
[flow]
type = constant
b_star = 1.0
[micro]
diffusion = dyadic_x
[orbit]
class = generic
[grid]
n = 2048
side = 40
[run]
T = 1.0
eps = 0.0625, 0.001953125
[initial]
sigma = 1.0
)"},
        {"perturbed_eps", R"(
[scenario]
name = perturbed_eps
description = leading periodic fluid field with an eps-order macroscopic perturbation
dimension = 2
verdict = homogenizes
[flow]
type = constant
b_star = 1.0, 0.5
[micro]
oscillation = cross_cos
amp = 0.5
diffusion = identity
[cell]
modes = 32
[orbit]
class = periodic
period = 1.0
[grid]
n = 128
side = 4
[run]
T = 0.1
eps = 0.2, 0.1, 0.05
[initial]
sigma = 0.25
)"},
        {"lagrangian_only", R"(
[scenario]
name = lagrangian_only
description = macroscopic diffusion conjugated along a rotation; no cell problem
dimension = 2
verdict = homogenizes
[flow]
type = linear
matrix = 0, -1; 1, 0
[micro]
diffusion = diagonal
d_diag = 1, 2
frame = macro
[orbit]
class = periodic
period = 6.283185307179586
[grid]
n = 128
side = 8
[run]
T = 0.1
eps = 0.2, 0.1, 0.05
X0 = 1, 0
[initial]
sigma = 0.5
)"},
        {"periodic_zero_mean", R"(
[scenario]
name = periodic_zero_mean
description = zero mean drift, classical periodic homogenization cross-check
dimension = 2
verdict = homogenizes
[flow]
type = constant
b_star = 0, 0
[micro]
oscillation = cross_cos
amp = 1.0
diffusion = identity
[cell]
modes = 32
[orbit]
class = periodic
period = 1.0
[grid]
n = 128
side = 4
[run]
T = 0.1
eps = 0.2, 0.1, 0.05
[initial]
sigma = 0.25
)"},
    };
    return configs;
}

} // namespace

EffectiveOptions Scenario::effective_options() const {
    EffectiveOptions o;
    o.modes = modes;
    o.lambda = lambda;
    o.Lambda = Lambda;
    o.orbit_class = orbit_class;
    o.period = orbit_period;
    o.x_independent_coefficients = x_independent;
    return o;
}

const char* to_string(Scenario::Verdict v) {
    switch (v) {
        case Scenario::Verdict::homogenizes: return "homogenizes";
        case Scenario::Verdict::trivial_limit: return "trivial_limit";
        case Scenario::Verdict::non_unique: return "non_unique";
    }
    return "?";
}

Scenario::Verdict verdict_from_string(const std::string& s) {
    if (s == "homogenizes") return Scenario::Verdict::homogenizes;
    if (s == "trivial_limit") return Scenario::Verdict::trivial_limit;
    if (s == "non_unique") return Scenario::Verdict::non_unique;
    throw MeanflowError("unknown verdict '" + s + "'");
}

std::vector<std::string> builtin_scenario_names() {
    std::vector<std::string> names;
    for (const auto& [name, text] : builtin_configs()) names.push_back(name);
    return names;
}

bool is_builtin_scenario(const std::string& name) {
    return builtin_configs().count(name) > 0;
}

std::string builtin_scenario_config(const std::string& name) {
    auto it = builtin_configs().find(name);
    if (it == builtin_configs().end())
        throw MeanflowError("unknown built-in scenario '" + name + "'");
    return it->second;
}

Scenario builtin_scenario(const std::string& name) {
    return parse_config_text(builtin_scenario_config(name), "builtin:" + name);
}

Scenario parse_config_text(const std::string& text, const std::string& origin) {
    KeyMap m(text, origin);
    return build(m);
}

std::map<std::string, std::string> config_key_values(const std::string& text) {
    return KeyMap(text, "config").values();
}

Scenario load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MeanflowError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

} // namespace meanflow
