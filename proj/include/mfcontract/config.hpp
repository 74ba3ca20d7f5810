#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "epidemic.hpp"
#include "io.hpp"
#include "lq_model.hpp"
#include "sweep.hpp"

namespace mfc {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Sectioned key = value text. Every entry remembers its line so that value
/// errors can point at the offending line.
class Config {
public:
    struct Entry {
        std::string value;
        std::size_t line = 0;
    };

    static Config parse(std::istream& in, const std::string& name) {
        Config c;
        c.name_ = name;
        std::string line, section;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find_first_of("#;");
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']' || line.size() < 3)
                    throw ConfigError(where(name, lineno) + "malformed section header");
                section = trim(line.substr(1, line.size() - 2));
                c.sections_[section];
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(where(name, lineno) + "expected 'key = value'");
            if (section.empty())
                throw ConfigError(where(name, lineno) + "entry outside of any [section]");
            const std::string key = trim(line.substr(0, eq));
            if (key.empty()) throw ConfigError(where(name, lineno) + "empty key");
            auto& sec = c.sections_[section];
            if (sec.count(key))
                throw ConfigError(where(name, lineno) + "duplicate key '" + key + "' in [" +
                                  section + "]");
            sec[key] = {trim(line.substr(eq + 1)), lineno};
        }
        return c;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file " + path);
        return parse(in, path);
    }

    bool has(const std::string& section, const std::string& key) const {
        auto s = sections_.find(section);
        return s != sections_.end() && s->second.count(key);
    }
    bool has_section(const std::string& section) const { return sections_.count(section) > 0; }

    double number(const std::string& section, const std::string& key) const {
        const Entry& e = require(section, key);
        try {
            return parse_double(e.value, key);
        } catch (const IoError&) {
            throw ConfigError(where(name_, e.line) + "'" + key + "' is not a number: '" + e.value +
                              "'");
        }
    }
    double number(const std::string& section, const std::string& key, double fallback) const {
        return has(section, key) ? number(section, key) : fallback;
    }

    std::uint64_t integer(const std::string& section, const std::string& key,
                          std::uint64_t fallback) const {
        if (!has(section, key)) return fallback;
        const Entry& e = require(section, key);
        std::uint64_t v = 0;
        auto [ptr, ec] = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
        if (ec != std::errc() || ptr != e.value.data() + e.value.size())
            throw ConfigError(where(name_, e.line) + "'" + key +
                              "' is not a nonnegative integer: '" + e.value + "'");
        return v;
    }

    std::string text(const std::string& section, const std::string& key,
                     const std::string& fallback) const {
        return has(section, key) ? require(section, key).value : fallback;
    }

    bool flag(const std::string& section, const std::string& key, bool fallback) const {
        if (!has(section, key)) return fallback;
        const Entry& e = require(section, key);
        if (e.value == "true" || e.value == "1") return true;
        if (e.value == "false" || e.value == "0") return false;
        throw ConfigError(where(name_, e.line) + "'" + key + "' must be true or false");
    }

    Vector numbers(const std::string& section, const std::string& key) const {
        const Entry& e = require(section, key);
        Vector out;
        for (const auto& cell : split_csv(e.value)) {
            try {
                out.push_back(parse_double(trim(cell), key));
            } catch (const IoError&) {
                throw ConfigError(where(name_, e.line) + "'" + key + "' has a non-numeric entry '" +
                                  trim(cell) + "'");
            }
        }
        return out;
    }

    std::size_t line_of(const std::string& section, const std::string& key) const {
        return require(section, key).line;
    }

    /// Throws on keys not in `allowed` (catches typos that would silently use defaults).
    void restrict_keys(const std::string& section, const std::vector<std::string>& allowed) const {
        auto s = sections_.find(section);
        if (s == sections_.end()) return;
        for (const auto& [key, e] : s->second) {
            bool ok = false;
            for (const auto& a : allowed) ok = ok || a == key;
            if (!ok)
                throw ConfigError(where(name_, e.line) + "unknown key '" + key + "' in [" + section +
                                  "]");
        }
    }

    void restrict_sections(const std::vector<std::string>& allowed) const {
        for (const auto& [name, sec] : sections_) {
            bool ok = false;
            for (const auto& a : allowed) ok = ok || a == name;
            if (!ok) throw ConfigError(name_ + ": unknown section [" + name + "]");
        }
    }

    const std::string& name() const { return name_; }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }
    static std::string where(const std::string& name, std::size_t line) {
        return name + ":" + std::to_string(line) + ": ";
    }
    const Entry& require(const std::string& section, const std::string& key) const {
        auto s = sections_.find(section);
        if (s == sections_.end() || !s->second.count(key))
            throw ConfigError(name_ + ": missing required field '" + key + "' in [" + section + "]");
        return s->second.at(key);
    }

    std::string name_;
    std::map<std::string, std::map<std::string, Entry>> sections_;
};

// ---------------------------------------------------------------------------
// Scenario sections

inline const std::vector<std::string> kEpidemicKeys = {
    "theta_A_plus", "theta_A_minus", "theta_B_plus", "theta_B_minus", "phi_A",   "phi_B",
    "nu_I",         "nu_H",          "gamma_I",      "gamma_H",       "alpha_hi", "alpha_lo",
    "sigma_A",      "sigma_B",       "sigma_P",      "p0",            "T",        "eps_floor"};

inline EpidemicParams epidemic_from_config(const Config& c) {
    c.restrict_keys("epidemic", kEpidemicKeys);
    EpidemicParams p;
    double* fields[] = {&p.theta_A_plus, &p.theta_A_minus, &p.theta_B_plus, &p.theta_B_minus,
                        &p.phi_A,        &p.phi_B,         &p.nu_I,         &p.nu_H,
                        &p.gamma_I,      &p.gamma_H,       &p.alpha_hi,     &p.alpha_lo,
                        &p.sigma_A,      &p.sigma_B,       &p.sigma_P};
    for (std::size_t i = 0; i < std::size(fields); ++i) *fields[i] = c.number("epidemic", kEpidemicKeys[i]);
    p.T = c.number("epidemic", "T");
    p.eps_floor = c.number("epidemic", "eps_floor");
    try {
        p.p0 = ProbabilityVector(c.numbers("epidemic", "p0"));
    } catch (const StructuralError& e) {
        throw ConfigError(c.name() + ":" + std::to_string(c.line_of("epidemic", "p0")) + ": p0: " +
                          e.what());
    }
    try {
        validate(p);
    } catch (const StructuralError& e) {
        throw ConfigError(c.name() + ": " + e.what());
    }
    return p;
}

struct SweepSettings {
    std::size_t n_steps = 2000;
    double damping = 0.5;
    double tol = 1e-8;
    int max_iters = 2000;
    bool check_multiplicity = true;
    int continuation_levels = 3;

    SweepParams params(double T) const {
        SweepParams p = SweepParams::for_horizon(T, n_steps);
        p.damping = damping;
        p.tol = tol;
        p.max_iters = max_iters;
        p.check_multiplicity = check_multiplicity;
        p.continuation_levels = continuation_levels;
        return p;
    }
};

inline SweepSettings sweep_from_config(const Config& c) {
    c.restrict_keys("sweep", {"n_steps", "damping", "tol", "max_iters", "check_multiplicity",
                              "continuation_levels"});
    SweepSettings s;
    s.n_steps = c.integer("sweep", "n_steps", s.n_steps);
    s.damping = c.number("sweep", "damping", s.damping);
    s.tol = c.number("sweep", "tol", s.tol);
    s.max_iters = static_cast<int>(c.integer("sweep", "max_iters", s.max_iters));
    s.check_multiplicity = c.flag("sweep", "check_multiplicity", s.check_multiplicity);
    s.continuation_levels =
        static_cast<int>(c.integer("sweep", "continuation_levels", s.continuation_levels));
    if (s.n_steps < 1) throw ConfigError(c.name() + ": [sweep] n_steps must be positive");
    if (!(s.damping > 0.0 && s.damping <= 1.0))
        throw ConfigError(c.name() + ": [sweep] damping must lie in (0, 1]");
    if (!(s.tol > 0.0)) throw ConfigError(c.name() + ": [sweep] tol must be positive");
    if (s.max_iters < 1) throw ConfigError(c.name() + ": [sweep] max_iters must be positive");
    return s;
}

/// u(r) = scale * r^exponent ("power"), scale * r ("linear") or scale * log(1 + r) ("log").
struct UtilitySettings {
    std::string kind = "power";
    double scale = 2.0;
    double exponent = 0.5;
    double r_lo = 0.0;
    double r_hi = 1000.0;

    UtilitySpec spec() const {
        UtilitySpec u;
        u.r_lo = r_lo;
        u.r_hi = r_hi;
        const double a = scale, e = exponent;
        if (kind == "power")
            u.u = [a, e](double r) { return a * std::pow(r, e); };
        else if (kind == "linear")
            u.u = [a](double r) { return a * r; };
        else if (kind == "log")
            u.u = [a](double r) { return a * std::log1p(r); };
        else
            throw StructuralError("unknown utility kind '" + kind + "'");
        return u;
    }
};

struct ContractSettings {
    std::optional<double> kappa;
    UtilitySettings utility;
};

inline ContractSettings contract_from_config(const Config& c) {
    c.restrict_keys("contract", {"kappa", "utility", "u_scale", "u_exponent", "r_lo", "r_hi"});
    ContractSettings s;
    if (c.has("contract", "kappa")) s.kappa = c.number("contract", "kappa");
    s.utility.kind = c.text("contract", "utility", s.utility.kind);
    s.utility.scale = c.number("contract", "u_scale", s.utility.scale);
    s.utility.exponent = c.number("contract", "u_exponent", s.utility.exponent);
    s.utility.r_lo = c.number("contract", "r_lo", s.utility.r_lo);
    s.utility.r_hi = c.number("contract", "r_hi", s.utility.r_hi);
    if (s.utility.kind != "power" && s.utility.kind != "linear" && s.utility.kind != "log")
        throw ConfigError(c.name() + ":" + std::to_string(c.line_of("contract", "utility")) +
                          ": utility must be power, linear or log");
    return s;
}

struct McSettings {
    std::size_t paths = 10000;
    std::uint64_t seed = 20261014;
};

inline McSettings mc_from_config(const Config& c) {
    c.restrict_keys("mc", {"paths", "seed"});
    McSettings s;
    s.paths = c.integer("mc", "paths", s.paths);
    s.seed = c.integer("mc", "seed", s.seed);
    if (s.paths < 1) throw ConfigError(c.name() + ": [mc] paths must be positive");
    return s;
}

struct CompareSettings {
    double sigma_p_planning = 1.5;
};

inline CompareSettings compare_from_config(const Config& c) {
    c.restrict_keys("compare", {"sigma_p_planning"});
    CompareSettings s;
    s.sigma_p_planning = c.number("compare", "sigma_p_planning", s.sigma_p_planning);
    return s;
}

struct Scenario {
    EpidemicParams epidemic;
    SweepSettings sweep;
    ContractSettings contract;
    McSettings mc;
    CompareSettings compare;
};

inline Scenario scenario_from_config(const Config& c) {
    c.restrict_sections({"epidemic", "sweep", "contract", "mc", "compare"});
    if (!c.has_section("epidemic")) throw ConfigError(c.name() + ": missing section [epidemic]");
    return {epidemic_from_config(c), sweep_from_config(c), contract_from_config(c), mc_from_config(c),
            compare_from_config(c)};
}

/// The full default scenario as config text.
inline std::string default_config_text() {
    const EpidemicParams p;
    const SweepSettings s;
    const UtilitySettings u;
    const McSettings mc;
    const CompareSettings cmp;
    std::ostringstream os;
    os << "# Two-city epidemic scenario.\n"
       << "# theta, phi, gamma, alpha_hi and sigma values are the reference scenario;\n"
       << "# nu_I, nu_H, alpha_lo, p0 and T are repository choices.\n"
       << "[epidemic]\n"
       << "theta_A_plus = " << fmt(p.theta_A_plus) << "\n"
       << "theta_A_minus = " << fmt(p.theta_A_minus) << "\n"
       << "theta_B_plus = " << fmt(p.theta_B_plus) << "\n"
       << "theta_B_minus = " << fmt(p.theta_B_minus) << "\n"
       << "phi_A = " << fmt(p.phi_A) << "\n"
       << "phi_B = " << fmt(p.phi_B) << "\n"
       << "nu_I = " << fmt(p.nu_I) << "\n"
       << "nu_H = " << fmt(p.nu_H) << "\n"
       << "gamma_I = " << fmt(p.gamma_I) << "\n"
       << "gamma_H = " << fmt(p.gamma_H) << "\n"
       << "alpha_hi = " << fmt(p.alpha_hi) << "\n"
       << "alpha_lo = " << fmt(p.alpha_lo) << "\n"
       << "sigma_A = " << fmt(p.sigma_A) << "\n"
       << "sigma_B = " << fmt(p.sigma_B) << "\n"
       << "sigma_P = " << fmt(p.sigma_P) << "\n"
       << "p0 = " << fmt(p.p0[0]) << ", " << fmt(p.p0[1]) << ", " << fmt(p.p0[2]) << ", "
       << fmt(p.p0[3]) << "\n"
       << "T = " << fmt(p.T) << "\n"
       << "eps_floor = " << fmt(p.eps_floor) << "\n\n"
       << "[sweep]\n"
       << "n_steps = " << s.n_steps << "\n"
       << "damping = " << fmt(s.damping) << "\n"
       << "tol = " << fmt(s.tol) << "\n"
       << "max_iters = " << s.max_iters << "\n"
       << "check_multiplicity = " << (s.check_multiplicity ? "true" : "false") << "\n"
       << "continuation_levels = " << s.continuation_levels << "\n\n"
       << "[contract]\n"
       << "# reservation threshold; required by verify\n"
       << "kappa = 0\n"
       << "utility = " << u.kind << "\n"
       << "u_scale = " << fmt(u.scale) << "\n"
       << "u_exponent = " << fmt(u.exponent) << "\n"
       << "r_lo = " << fmt(u.r_lo) << "\n"
       << "r_hi = " << fmt(u.r_hi) << "\n\n"
       << "[mc]\n"
       << "paths = " << mc.paths << "\n"
       << "seed = " << mc.seed << "\n\n"
       << "[compare]\n"
       << "sigma_p_planning = " << fmt(cmp.sigma_p_planning) << "\n";
    return os.str();
}

}  // namespace mfc
