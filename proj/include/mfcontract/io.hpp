#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "anarchy.hpp"
#include "contract.hpp"
#include "core.hpp"
#include "fbode.hpp"
#include "markov_core.hpp"

namespace mfc {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shortest text that parses back to the same double.
inline std::string fmt(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw IoError("cannot format number");
    return std::string(buf, end);
}

inline double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && *b == ' ') ++b;
    while (e > b && (e[-1] == ' ' || e[-1] == '\r')) --e;
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e) throw IoError(where + ": not a number: '" + s + "'");
    return v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    std::map<std::string, std::string> meta;  // from leading "# key=value" lines
};

inline CsvTable parse_csv(std::istream& in, const std::string& name) {
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq != std::string::npos) {
                std::string key = line.substr(1, eq - 1);
                key.erase(0, key.find_first_not_of(' '));
                t.meta[key] = line.substr(eq + 1);
            }
            continue;
        }
        auto cells = split_csv(line);
        if (t.header.empty()) {
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size())
            throw IoError(name + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(t.header.size()) + " columns");
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) row.push_back(parse_double(c, name + ":" + std::to_string(lineno)));
        t.rows.push_back(std::move(row));
    }
    if (t.header.empty()) throw IoError(name + ": no header");
    return t;
}

inline CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return parse_csv(in, path);
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("write failed for " + path);
}

inline std::string columns(const std::string& prefix, std::size_t m) {
    std::string s;
    for (std::size_t i = 1; i <= m; ++i) s += "," + prefix + std::to_string(i);
    return s;
}

inline void expect_header(const CsvTable& t, const std::string& want, const std::string& name) {
    std::string got;
    for (std::size_t i = 0; i < t.header.size(); ++i) got += (i ? "," : "") + t.header[i];
    if (got != want) throw IoError(name + ": header '" + got + "' does not match '" + want + "'");
}

inline TimeGrid grid_from_column(const CsvTable& t, const std::string& name) {
    if (t.rows.size() < 2) throw IoError(name + ": need at least two time nodes");
    const double t0 = t.rows.front()[0], t1 = t.rows.back()[0];
    const TimeGrid g(t0, t1, t.rows.size() - 1);
    for (std::size_t k = 0; k < t.rows.size(); ++k)
        if (std::abs(t.rows[k][0] - g.node(k)) > 1e-9 * (1.0 + std::abs(t1)))
            throw IoError(name + ": time column is not a uniform grid");
    return g;
}

// ---------------------------------------------------------------------------
// Node flows: t, <a>_1..<a>_m, <b>_1..<b>_m, <c>_1..<c>_m

struct NodeFlows {
    explicit NodeFlows(TimeGrid g) : grid(g) {}

    TimeGrid grid;
    std::vector<Vector> p, x, a;
};

inline std::string flows_csv(const TimeGrid& grid, const std::vector<ProbabilityVector>& p,
                             const std::vector<Vector>& x, const std::vector<Vector>& a,
                             const std::string& x_name) {
    const std::size_t m = p.front().size();
    std::string s = "t" + columns("p_", m) + columns(x_name + "_", m) + columns("a_", m) + "\n";
    for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
        s += fmt(grid.node(k));
        for (double v : p[k].entries()) s += "," + fmt(v);
        for (double v : x[k]) s += "," + fmt(v);
        for (double v : a[k]) s += "," + fmt(v);
        s += "\n";
    }
    return s;
}

inline NodeFlows parse_flows(const CsvTable& t, const std::string& x_name, const std::string& name) {
    if ((t.header.size() - 1) % 3 != 0 || t.header.size() < 7)
        throw IoError(name + ": unexpected column count");
    const std::size_t m = (t.header.size() - 1) / 3;
    expect_header(t, "t" + columns("p_", m) + columns(x_name + "_", m) + columns("a_", m), name);
    NodeFlows f{grid_from_column(t, name)};
    for (const auto& r : t.rows) {
        f.p.emplace_back(r.begin() + 1, r.begin() + 1 + m);
        f.x.emplace_back(r.begin() + 1 + m, r.begin() + 1 + 2 * m);
        f.a.emplace_back(r.begin() + 1 + 2 * m, r.end());
    }
    return f;
}

inline std::string solution_csv(const FBODESolution& s) {
    return flows_csv(s.grid, s.pi_flow, s.y_flow, s.control_flow, "y");
}

inline std::string anarchy_csv(const AnarchySolution& s) {
    return flows_csv(s.grid, s.pi_flow, s.v_flow, s.control_flow, "v");
}

/// Node values of a solution; rates, objective and residual are not stored.
inline FBODESolution parse_solution_csv(const CsvTable& t, const std::string& name) {
    NodeFlows f = parse_flows(t, "y", name);
    FBODESolution s{f.grid};
    for (auto& p : f.p) s.pi_flow.emplace_back(std::move(p));
    s.y_flow = std::move(f.x);
    s.control_flow = std::move(f.a);
    s.converged = true;
    return s;
}

inline AnarchySolution parse_anarchy_csv(const CsvTable& t, const std::string& name) {
    NodeFlows f = parse_flows(t, "v", name);
    AnarchySolution s{f.grid};
    for (auto& p : f.p) s.pi_flow.emplace_back(std::move(p));
    s.v_flow = std::move(f.x);
    s.control_flow = std::move(f.a);
    s.converged = true;
    return s;
}

// ---------------------------------------------------------------------------
// Paths: "# horizon=T", header "t_jump,new_state", first row is (0, initial state).
// States are written 1-based.

inline std::string path_csv(const CTMCPath& p) {
    std::string s = "# horizon=" + fmt(p.horizon) + "\nt_jump,new_state\n0," +
                    std::to_string(p.initial_state + 1) + "\n";
    for (const auto& j : p.jumps) s += fmt(j.time) + "," + std::to_string(j.state + 1) + "\n";
    return s;
}

inline CTMCPath parse_path_csv(const CsvTable& t, const std::string& name) {
    expect_header(t, "t_jump,new_state", name);
    auto it = t.meta.find("horizon");
    if (it == t.meta.end()) throw IoError(name + ": missing '# horizon=' line");
    if (t.rows.empty()) throw IoError(name + ": missing initial state row");
    auto state = [&](double v) {
        if (v < 1.0 || v != std::floor(v)) throw IoError(name + ": bad state index");
        return static_cast<std::size_t>(v) - 1;
    };
    CTMCPath p;
    p.horizon = parse_double(it->second, name);
    p.initial_state = state(t.rows[0][1]);
    for (std::size_t k = 1; k < t.rows.size(); ++k) p.jumps.push_back({t.rows[k][0], state(t.rows[k][1])});
    return p;
}

// ---------------------------------------------------------------------------
// Contract tables: t, state, z_1..z_m, a_hat (state 1-based)

inline std::string contract_csv(const ContractSpec& c, const FBODESolution& s) {
    const std::size_t m = c.y0.size();
    std::string out = "t,state" + columns("z_", m) + ",a_hat\n";
    for (std::size_t k = 0; k < s.grid.n_nodes(); ++k)
        for (std::size_t j = 0; j < m; ++j) {
            out += fmt(s.grid.node(k)) + "," + std::to_string(j + 1);
            for (std::size_t i = 0; i < m; ++i) out += "," + fmt(c.z_flow[k](j, i));
            out += "," + fmt(s.control_flow[k][j]) + "\n";
        }
    return out;
}

struct ContractTables {
    std::vector<Matrix> z_flow;
    std::vector<Vector> a_hat;
};

inline ContractTables parse_contract_csv(const CsvTable& t, const std::string& name) {
    if (t.header.size() < 5) throw IoError(name + ": unexpected column count");
    const std::size_t m = t.header.size() - 3;
    expect_header(t, "t,state" + columns("z_", m) + ",a_hat", name);
    if (t.rows.size() % m != 0) throw IoError(name + ": row count is not a multiple of m");
    ContractTables ct;
    for (std::size_t r = 0; r < t.rows.size(); r += m) {
        Matrix z(m, m, 0.0);
        Vector a(m);
        for (std::size_t j = 0; j < m; ++j) {
            const auto& row = t.rows[r + j];
            if (row[1] != static_cast<double>(j + 1)) throw IoError(name + ": states out of order");
            for (std::size_t i = 0; i < m; ++i) z(j, i) = row[2 + i];
            a[j] = row[2 + m];
        }
        ct.z_flow.push_back(std::move(z));
        ct.a_hat.push_back(std::move(a));
    }
    return ct;
}

// ---------------------------------------------------------------------------
// Realizations: path_id, xi, agent_cost, principal_path_cost

inline std::string realizations_csv(const std::vector<ContractRealization>& rs) {
    std::string s = "path_id,xi,agent_cost,principal_path_cost\n";
    for (std::size_t k = 0; k < rs.size(); ++k)
        s += std::to_string(k) + "," + fmt(rs[k].xi) + "," + fmt(rs[k].agent_cost) + "," +
             fmt(rs[k].principal_path_cost) + "\n";
    return s;
}

struct RealizationRow {
    std::size_t path_id;
    double xi, agent_cost, principal_path_cost;
    bool operator==(const RealizationRow&) const = default;
};

inline std::vector<RealizationRow> parse_realizations_csv(const CsvTable& t, const std::string& name) {
    expect_header(t, "path_id,xi,agent_cost,principal_path_cost", name);
    std::vector<RealizationRow> out;
    for (const auto& r : t.rows) out.push_back({static_cast<std::size_t>(r[0]), r[1], r[2], r[3]});
    return out;
}

// ---------------------------------------------------------------------------
// Generic numeric series: header names + columns

inline std::string series_csv(const std::vector<std::string>& names,
                              const std::vector<std::vector<double>>& cols) {
    std::string s;
    for (std::size_t i = 0; i < names.size(); ++i) s += (i ? "," : "") + names[i];
    s += "\n";
    const std::size_t n = cols.front().size();
    for (const auto& c : cols)
        if (c.size() != n) throw IoError("series columns differ in length");
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < cols.size(); ++i) s += (i ? "," : "") + fmt(cols[i][k]);
        s += "\n";
    }
    return s;
}

}  // namespace mfc
