/*
 * Copyright 2026 The gridkernel Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <algorithm>
#include <complex>
#include <deque>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "gridkernel/common.hpp"

namespace gridkernel {

enum class BusType { slack, pv, pq };

struct Bus {
    int id = 0;
    BusType type = BusType::pq;
    double p_load = 0.0;  // MW
    double q_load = 0.0;  // MVAr
    double gs = 0.0;      // shunt conductance, MW at V=1 pu
    double bs = 0.0;      // shunt susceptance, MVAr at V=1 pu
    double v_setpoint = 1.0; // pu; gen VG for pv/slack, case VM otherwise
    double va_deg = 0.0;     // case-file angle, used for warm starts
    double base_kv = 0.0;
};

struct Branch {
    int id = 0; // 1-based, file order
    int from = 0;
    int to = 0;
    double r = 0.0;
    double x = 0.0;
    double b_charging = 0.0;
    double tap = 1.0;
};

struct Gen {
    int bus = 0;
    double p_set = 0.0; // MW
    double v_set = 1.0; // pu
    double q_min = 0.0; // MVAr
    double q_max = 0.0; // MVAr
};

/// Static network description. Bus ids are kept as declared; a dense
/// 0-based index is maintained internally for matrix work.
struct GridCase {
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Gen> gens;
    double base_mva = 100.0;

    std::map<int, int> bus_index; // declared id -> dense index

    int n_bus() const { return static_cast<int>(buses.size()); }
    int n_branch() const { return static_cast<int>(branches.size()); }

    int index_of(int bus_id) const {
        auto it = bus_index.find(bus_id);
        if (it == bus_index.end())
            throw ArgumentError("unknown bus id " + std::to_string(bus_id));
        return it->second;
    }

    int slack_index() const {
        for (int i = 0; i < n_bus(); ++i)
            if (buses[i].type == BusType::slack) return i;
        throw ValidationError("no slack bus");
    }

    /// Content hash identifying the case; registries use it to reject
    /// models trained on different networks.
    std::uint64_t identity_hash() const {
        std::ostringstream os;
        os << base_mva << '|';
        for (const auto& b : buses)
            os << b.id << ',' << static_cast<int>(b.type) << ',' << b.p_load
               << ',' << b.q_load << ';';
        for (const auto& br : branches)
            os << br.from << '-' << br.to << ',' << br.r << ',' << br.x << ';';
        return fnv1a(os.str());
    }
};

/// One network configuration: a branch in-service mask over a case.
struct Topology {
    std::uint64_t case_hash = 0;
    std::vector<bool> in_service; // one entry per branch, file order
    std::string label = "base";

    std::vector<int> out_branch_ids(const GridCase& gc) const {
        std::vector<int> out;
        for (int i = 0; i < static_cast<int>(in_service.size()); ++i)
            if (!in_service[i]) out.push_back(gc.branches[i].id);
        return out;
    }
};

using AdmittanceMatrix = Eigen::MatrixXcd;

/// Per-node index lists into the injection vector. Node k's real and
/// reactive coordinates sit at 2k and 2k+1 (dense index, ascending).
struct NeighborhoodStructure {
    std::vector<std::vector<int>> members;       // dense node indices, incl. self
    std::vector<std::vector<int>> coord_indices; // into the 2|N| injection vector

    int n_node() const { return static_cast<int>(members.size()); }
};

namespace detail {

inline void validate(const GridCase& gc) {
    if (gc.buses.empty()) throw ValidationError("case has no buses");
    if (gc.branches.empty())
        throw ValidationError("case has no branches (disconnected)");
    int slack_count = 0;
    for (const auto& b : gc.buses)
        if (b.type == BusType::slack) ++slack_count;
    if (slack_count == 0) throw ValidationError("case has no slack bus");
    if (slack_count > 1)
        throw ValidationError("case has " + std::to_string(slack_count) +
                              " slack buses, expected exactly one");
    for (const auto& br : gc.branches) {
        if (!gc.bus_index.count(br.from) || !gc.bus_index.count(br.to))
            throw ValidationError("branch " + std::to_string(br.id) +
                                  " references undeclared bus");
        if (br.r < 0.0)
            throw ValidationError("branch " + std::to_string(br.id) +
                                  " has negative resistance");
        if (br.x == 0.0)
            throw ValidationError("branch " + std::to_string(br.id) +
                                  " has zero reactance");
    }
}

inline void index_buses(GridCase& gc) {
    gc.bus_index.clear();
    for (int i = 0; i < gc.n_bus(); ++i) {
        if (!gc.bus_index.emplace(gc.buses[i].id, i).second)
            throw ValidationError("duplicate bus id " +
                                  std::to_string(gc.buses[i].id));
    }
}

/// Reads one MATPOWER matrix section `mpc.<name> = [ rows ];` as rows of
/// doubles. Tolerates comments, blank lines, and trailing semicolons.
inline std::vector<std::vector<double>> read_matrix(const std::string& text,
                                                    const std::string& name) {
    const std::string key = "mpc." + name;
    auto pos = text.find(key);
    if (pos == std::string::npos)
        throw ParseError("missing section " + key);
    pos = text.find('[', pos);
    if (pos == std::string::npos)
        throw ParseError("section " + key + ": expected '['");
    auto end = text.find(']', pos);
    if (end == std::string::npos)
        throw ParseError("section " + key + ": unterminated matrix");

    // line number of the section start, for error reporting
    int base_line = 1 + static_cast<int>(std::count(text.begin(),
                                                    text.begin() + pos, '\n'));
    std::vector<std::vector<double>> rows;
    std::istringstream body(text.substr(pos + 1, end - pos - 1));
    std::string line;
    int lineno = base_line;
    while (std::getline(body, line)) {
        ++lineno;
        if (auto c = line.find('%'); c != std::string::npos) line.erase(c);
        std::replace(line.begin(), line.end(), ';', ' ');
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        std::vector<double> row;
        double v;
        while (ls >> v) row.push_back(v);
        if (!ls.eof()) {
            std::string tok;
            ls.clear();
            ls >> tok;
            throw ParseError("case file line " + std::to_string(lineno) +
                             ": bad token '" + tok + "' in " + key);
        }
        if (!row.empty()) rows.push_back(std::move(row));
    }
    return rows;
}

inline double read_base_mva(const std::string& text) {
    auto pos = text.find("mpc.baseMVA");
    if (pos == std::string::npos) throw ParseError("missing mpc.baseMVA");
    pos = text.find('=', pos);
    if (pos == std::string::npos) throw ParseError("malformed mpc.baseMVA");
    std::istringstream is(text.substr(pos + 1));
    double v;
    if (!(is >> v)) throw ParseError("malformed mpc.baseMVA value");
    return v;
}

inline GridCase parse_matpower(const std::string& text) {
    GridCase gc;
    gc.base_mva = read_base_mva(text);

    auto bus_rows = read_matrix(text, "bus");
    for (const auto& row : bus_rows) {
        if (row.size() < 10) throw ParseError("bus row too short");
        Bus b;
        b.id = static_cast<int>(row[0]);
        switch (static_cast<int>(row[1])) {
            case 3: b.type = BusType::slack; break;
            case 2: b.type = BusType::pv; break;
            case 1: b.type = BusType::pq; break;
            default:
                throw ParseError("bus " + std::to_string(b.id) +
                                 ": unsupported type " +
                                 std::to_string(static_cast<int>(row[1])));
        }
        b.p_load = row[2];
        b.q_load = row[3];
        b.gs = row[4];
        b.bs = row[5];
        b.v_setpoint = row[7];
        b.va_deg = row[8];
        b.base_kv = row[9];
        gc.buses.push_back(b);
    }

    auto gen_rows = read_matrix(text, "gen");
    for (const auto& row : gen_rows) {
        if (row.size() < 8) throw ParseError("gen row too short");
        if (row.size() >= 8 && row[7] <= 0) continue; // out-of-service unit
        Gen g;
        g.bus = static_cast<int>(row[0]);
        g.p_set = row[1];
        g.q_max = row[3];
        g.q_min = row[4];
        g.v_set = row[5];
        gc.gens.push_back(g);
    }

    auto br_rows = read_matrix(text, "branch");
    int next_id = 1;
    for (const auto& row : br_rows) {
        if (row.size() < 5) throw ParseError("branch row too short");
        Branch br;
        br.id = next_id++;
        br.from = static_cast<int>(row[0]);
        br.to = static_cast<int>(row[1]);
        br.r = row[2];
        br.x = row[3];
        br.b_charging = row[4];
        if (row.size() > 8 && row[8] != 0.0) br.tap = row[8];
        gc.branches.push_back(br);
    }

    index_buses(gc);
    // gen voltage setpoints override the bus VM column at pv/slack buses
    for (const auto& g : gc.gens) {
        if (!gc.bus_index.count(g.bus))
            throw ValidationError("gen references undeclared bus " +
                                  std::to_string(g.bus));
        Bus& b = gc.buses[gc.bus_index.at(g.bus)];
        if (b.type != BusType::pq) b.v_setpoint = g.v_set;
    }
    validate(gc);
    return gc;
}

inline GridCase parse_json_case(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad JSON case: ") + e.what());
    }
    GridCase gc;
    try {
        gc.base_mva = j.at("base_mva").get<double>();
        for (const auto& jb : j.at("buses")) {
            Bus b;
            b.id = jb.at("id").get<int>();
            std::string t = jb.at("type").get<std::string>();
            if (t == "slack") b.type = BusType::slack;
            else if (t == "pv") b.type = BusType::pv;
            else if (t == "pq") b.type = BusType::pq;
            else throw ParseError("bus " + std::to_string(b.id) +
                                  ": unknown type '" + t + "'");
            b.p_load = jb.value("p_load", 0.0);
            b.q_load = jb.value("q_load", 0.0);
            b.gs = jb.value("gs", 0.0);
            b.bs = jb.value("bs", 0.0);
            b.v_setpoint = jb.value("v_setpoint", 1.0);
            b.va_deg = jb.value("va_deg", 0.0);
            b.base_kv = jb.value("base_kv", 0.0);
            gc.buses.push_back(b);
        }
        int next_id = 1;
        for (const auto& jb : j.at("branches")) {
            Branch br;
            br.id = jb.value("id", next_id);
            next_id = br.id + 1;
            br.from = jb.at("from").get<int>();
            br.to = jb.at("to").get<int>();
            br.r = jb.at("r").get<double>();
            br.x = jb.at("x").get<double>();
            br.b_charging = jb.value("b", 0.0);
            br.tap = jb.value("tap", 1.0);
            gc.branches.push_back(br);
        }
        if (j.contains("gens")) {
            for (const auto& jg : j.at("gens")) {
                Gen g;
                g.bus = jg.at("bus").get<int>();
                g.p_set = jg.value("p_set", 0.0);
                g.v_set = jg.value("v_set", 1.0);
                g.q_min = jg.value("q_min", 0.0);
                g.q_max = jg.value("q_max", 0.0);
                gc.gens.push_back(g);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad JSON case: ") + e.what());
    }
    index_buses(gc);
    for (const auto& g : gc.gens) {
        if (!gc.bus_index.count(g.bus))
            throw ValidationError("gen references undeclared bus " +
                                  std::to_string(g.bus));
        Bus& b = gc.buses[gc.bus_index.at(g.bus)];
        if (b.type != BusType::pq) b.v_setpoint = g.v_set;
    }
    validate(gc);
    return gc;
}

} // namespace detail

/// Parses a case from text; JSON if it starts with '{', else MATPOWER .m.
inline GridCase parse_case(const std::string& text) {
    auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{')
        return detail::parse_json_case(text);
    return detail::parse_matpower(text);
}

inline GridCase load_case(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open case file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_case(ss.str());
}

/// All-branches-in topology for a case.
inline Topology base_topology(const GridCase& gc) {
    Topology t;
    t.case_hash = gc.identity_hash();
    t.in_service.assign(gc.branches.size(), true);
    t.label = "base";
    return t;
}

namespace detail {

inline std::string topology_label(const GridCase& gc,
                                  const std::vector<bool>& in_service) {
    std::vector<int> out;
    for (size_t i = 0; i < in_service.size(); ++i)
        if (!in_service[i]) out.push_back(gc.branches[i].id);
    if (out.empty()) return "base";
    std::sort(out.begin(), out.end());
    std::string label = "N-" + std::to_string(out.size()) + ":";
    for (size_t i = 0; i < out.size(); ++i) {
        if (i) label += ',';
        label += std::to_string(out[i]);
    }
    return label;
}

} // namespace detail

/// Takes the listed branches out of service. Branch ids must exist and be
/// currently in service.
inline Topology apply_outage(const GridCase& gc, const Topology& topo,
                             const std::vector<int>& branch_ids) {
    Topology out = topo;
    for (int id : branch_ids) {
        int pos = -1;
        for (int i = 0; i < gc.n_branch(); ++i)
            if (gc.branches[i].id == id) { pos = i; break; }
        if (pos < 0)
            throw ArgumentError("unknown branch id " + std::to_string(id));
        if (!out.in_service[pos])
            throw ArgumentError("branch " + std::to_string(id) +
                                " already out of service");
        out.in_service[pos] = false;
    }
    out.label = detail::topology_label(gc, out.in_service);
    return out;
}

/// Standard Y-bus assembly. Bus shunts are stamped on the diagonal;
/// out-of-service branches contribute nothing.
inline AdmittanceMatrix build_ybus(const GridCase& gc, const Topology& topo) {
    if (topo.in_service.size() != static_cast<size_t>(gc.n_branch()))
        throw ArgumentError("topology branch count does not match case");
    const int n = gc.n_bus();
    AdmittanceMatrix Y = AdmittanceMatrix::Zero(n, n);
    for (int i = 0; i < gc.n_branch(); ++i) {
        if (!topo.in_service[i]) continue;
        const Branch& br = gc.branches[i];
        if (br.r == 0.0 && br.x == 0.0)
            throw ValidationError("branch " + std::to_string(br.id) +
                                  " has zero impedance");
        const std::complex<double> y = 1.0 / std::complex<double>(br.r, br.x);
        const std::complex<double> ysh(0.0, br.b_charging / 2.0);
        const double t = br.tap;
        const int f = gc.index_of(br.from);
        const int to = gc.index_of(br.to);
        Y(f, f) += (y + ysh) / (t * t);
        Y(to, to) += y + ysh;
        Y(f, to) -= y / t;
        Y(to, f) -= y / t;
    }
    for (int i = 0; i < n; ++i)
        Y(i, i) += std::complex<double>(gc.buses[i].gs, gc.buses[i].bs) /
                   gc.base_mva;
    return Y;
}

/// True iff every bus is reachable from the slack over in-service branches.
inline bool is_connected(const GridCase& gc, const Topology& topo) {
    const int n = gc.n_bus();
    std::vector<std::vector<int>> adj(n);
    for (int i = 0; i < gc.n_branch(); ++i) {
        if (!topo.in_service[i]) continue;
        int f = gc.index_of(gc.branches[i].from);
        int t = gc.index_of(gc.branches[i].to);
        adj[f].push_back(t);
        adj[t].push_back(f);
    }
    std::vector<bool> seen(n, false);
    std::deque<int> queue{gc.slack_index()};
    seen[gc.slack_index()] = true;
    int count = 1;
    while (!queue.empty()) {
        int u = queue.front();
        queue.pop_front();
        for (int v : adj[u])
            if (!seen[v]) {
                seen[v] = true;
                ++count;
                queue.push_back(v);
            }
    }
    return count == n;
}

/// Per-node neighborhood index sets: x_n = {n} ∪ {m : (n,m) in service},
/// with both real and reactive coordinates per member node.
inline NeighborhoodStructure neighborhoods(const GridCase& gc,
                                           const Topology& topo) {
    const int n = gc.n_bus();
    NeighborhoodStructure ns;
    ns.members.assign(n, {});
    ns.coord_indices.assign(n, {});
    for (int i = 0; i < n; ++i) ns.members[i].push_back(i);
    for (int i = 0; i < gc.n_branch(); ++i) {
        if (!topo.in_service[i]) continue;
        int f = gc.index_of(gc.branches[i].from);
        int t = gc.index_of(gc.branches[i].to);
        ns.members[f].push_back(t);
        ns.members[t].push_back(f);
    }
    for (int i = 0; i < n; ++i) {
        auto& m = ns.members[i];
        std::sort(m.begin(), m.end());
        m.erase(std::unique(m.begin(), m.end()), m.end());
        for (int node : m) {
            ns.coord_indices[i].push_back(2 * node);
            ns.coord_indices[i].push_back(2 * node + 1);
        }
    }
    return ns;
}

} // namespace gridkernel
