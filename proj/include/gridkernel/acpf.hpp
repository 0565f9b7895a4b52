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

#include <atomic>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridkernel/common.hpp"
#include "gridkernel/netcase.hpp"

namespace gridkernel {

/// Global count of Newton-Raphson solves. All sample-budget reporting is
/// derived from this counter and nothing else.
inline std::atomic<long>& solve_counter() {
    static std::atomic<long> counter{0};
    return counter;
}

/// Nodal injections in pu (generation minus demand), dense bus order.
struct InjectionVector {
    Eigen::VectorXd p;
    Eigen::VectorXd q;

    /// Stacked GP input: node k's (p, q) at coordinates 2k, 2k+1.
    Eigen::VectorXd stacked() const {
        Eigen::VectorXd s(2 * p.size());
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            s[2 * i] = p[i];
            s[2 * i + 1] = q[i];
        }
        return s;
    }
};

/// Base-case injection: per-unit generator setpoints minus loads. Reactive
/// coordinates carry the (negated) load only; generator reactive output is
/// a power-flow outcome, not an input.
inline InjectionVector base_injection(const GridCase& gc) {
    const int n = gc.n_bus();
    InjectionVector inj;
    inj.p = Eigen::VectorXd::Zero(n);
    inj.q = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        inj.p[i] = -gc.buses[i].p_load / gc.base_mva;
        inj.q[i] = -gc.buses[i].q_load / gc.base_mva;
    }
    for (const auto& g : gc.gens)
        inj.p[gc.index_of(g.bus)] += g.p_set / gc.base_mva;
    return inj;
}

struct PfSolution {
    Eigen::VectorXd v_mag; // pu
    Eigen::VectorXd v_ang; // radians, slack at 0 for flat start
    bool converged = false;
    int iterations = 0;
    double max_mismatch = 0.0; // pu
    std::string reason;        // set when not converged
};

enum class PfStart { flat, from_case };

struct PfOptions {
    double tol = 1e-8;
    int max_iter = 20;
    PfStart start = PfStart::flat;
};

/// Polar-form Newton-Raphson load flow. Unknowns: angles at non-slack
/// buses, magnitudes at PQ buses. PV buses hold their voltage setpoint;
/// generator reactive limits are not enforced.
inline PfSolution solve_nr(const GridCase& gc, const Topology& topo,
                           const InjectionVector& inj,
                           const PfOptions& opts = {}) {
    const int n = gc.n_bus();
    if (inj.p.size() != n || inj.q.size() != n)
        throw ArgumentError("injection dimension does not match case");
    if (!is_connected(gc, topo))
        throw ArgumentError("topology '" + topo.label + "' is disconnected");

    solve_counter().fetch_add(1, std::memory_order_relaxed);

    const AdmittanceMatrix Y = build_ybus(gc, topo);
    const Eigen::MatrixXd G = Y.real();
    const Eigen::MatrixXd B = Y.imag();

    const int slack = gc.slack_index();
    std::vector<int> ang_vars, mag_vars; // dense bus indices per unknown
    for (int i = 0; i < n; ++i) {
        if (i == slack) continue;
        ang_vars.push_back(i);
        if (gc.buses[i].type == BusType::pq) mag_vars.push_back(i);
    }
    const int na = static_cast<int>(ang_vars.size());
    const int nm = static_cast<int>(mag_vars.size());

    Eigen::VectorXd vm(n), va(n);
    for (int i = 0; i < n; ++i) {
        const Bus& b = gc.buses[i];
        if (opts.start == PfStart::from_case) {
            vm[i] = b.v_setpoint;
            va[i] = b.va_deg * M_PI / 180.0;
        } else {
            vm[i] = (b.type == BusType::pq) ? 1.0 : b.v_setpoint;
            va[i] = 0.0;
        }
    }
    if (opts.start == PfStart::from_case) {
        // reference the slack angle to zero
        const double shift = va[slack];
        for (int i = 0; i < n; ++i) va[i] -= shift;
    }

    auto calc_power = [&](Eigen::VectorXd& pc, Eigen::VectorXd& qc) {
        for (int i = 0; i < n; ++i) {
            double pi = 0.0, qi = 0.0;
            for (int k = 0; k < n; ++k) {
                if (G(i, k) == 0.0 && B(i, k) == 0.0) continue;
                const double th = va[i] - va[k];
                const double c = std::cos(th), s = std::sin(th);
                pi += vm[k] * (G(i, k) * c + B(i, k) * s);
                qi += vm[k] * (G(i, k) * s - B(i, k) * c);
            }
            pc[i] = vm[i] * pi;
            qc[i] = vm[i] * qi;
        }
    };

    PfSolution sol;
    Eigen::VectorXd pc(n), qc(n);
    for (int iter = 0; iter <= opts.max_iter; ++iter) {
        calc_power(pc, qc);
        Eigen::VectorXd mismatch(na + nm);
        for (int a = 0; a < na; ++a)
            mismatch[a] = inj.p[ang_vars[a]] - pc[ang_vars[a]];
        for (int m = 0; m < nm; ++m)
            mismatch[na + m] = inj.q[mag_vars[m]] - qc[mag_vars[m]];

        sol.max_mismatch = mismatch.size() ? mismatch.cwiseAbs().maxCoeff()
                                           : 0.0;
        sol.iterations = iter;
        if (sol.max_mismatch < opts.tol) {
            sol.converged = true;
            break;
        }
        if (iter == opts.max_iter) {
            sol.reason = "max iterations reached";
            break;
        }

        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(na + nm, na + nm);
        for (int a = 0; a < na; ++a) {
            const int i = ang_vars[a];
            for (int b = 0; b < na; ++b) {
                const int k = ang_vars[b];
                if (i == k)
                    J(a, b) = -qc[i] - B(i, i) * vm[i] * vm[i];
                else {
                    const double th = va[i] - va[k];
                    J(a, b) = vm[i] * vm[k] *
                              (G(i, k) * std::sin(th) - B(i, k) * std::cos(th));
                }
            }
            for (int b = 0; b < nm; ++b) {
                const int k = mag_vars[b];
                if (i == k)
                    J(a, na + b) = pc[i] / vm[i] + G(i, i) * vm[i];
                else {
                    const double th = va[i] - va[k];
                    J(a, na + b) = vm[i] * (G(i, k) * std::cos(th) +
                                            B(i, k) * std::sin(th));
                }
            }
        }
        for (int m = 0; m < nm; ++m) {
            const int i = mag_vars[m];
            for (int b = 0; b < na; ++b) {
                const int k = ang_vars[b];
                if (i == k)
                    J(na + m, b) = pc[i] - G(i, i) * vm[i] * vm[i];
                else {
                    const double th = va[i] - va[k];
                    J(na + m, b) = -vm[i] * vm[k] *
                                   (G(i, k) * std::cos(th) +
                                    B(i, k) * std::sin(th));
                }
            }
            for (int b = 0; b < nm; ++b) {
                const int k = mag_vars[b];
                if (i == k)
                    J(na + m, na + b) = qc[i] / vm[i] - B(i, i) * vm[i];
                else {
                    const double th = va[i] - va[k];
                    J(na + m, na + b) = vm[i] * (G(i, k) * std::sin(th) -
                                                 B(i, k) * std::cos(th));
                }
            }
        }

        Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
        if (!lu.isInvertible()) {
            sol.reason = "singular Jacobian";
            break;
        }
        const Eigen::VectorXd dx = lu.solve(mismatch);
        if (!dx.allFinite()) {
            sol.reason = "non-finite Newton step";
            break;
        }
        for (int a = 0; a < na; ++a) va[ang_vars[a]] += dx[a];
        for (int m = 0; m < nm; ++m) vm[mag_vars[m]] += dx[na + m];
    }

    sol.v_mag = vm;
    sol.v_ang = va;
    return sol;
}

struct SampleSet {
    std::vector<InjectionVector> samples;
    std::uint64_t seed = 0;
    double hypercube_fraction = 0.0;
    std::string topology_label = "base";
};

/// Draws i.i.d. injection vectors from the load hypercube: every nonzero
/// base-case load coordinate is scaled by an independent
/// Uniform[1-fraction, 1+fraction] draw; generator setpoints stay fixed.
inline SampleSet sample_injections(const GridCase& gc, double fraction,
                                   int count, std::uint64_t seed) {
    if (count <= 0) throw ArgumentError("sample count must be positive");
    if (fraction < 0.0 || fraction >= 1.0)
        throw ArgumentError("hypercube fraction must be in [0, 1)");

    const int n = gc.n_bus();
    Eigen::VectorXd gen_p = Eigen::VectorXd::Zero(n);
    for (const auto& g : gc.gens)
        gen_p[gc.index_of(g.bus)] += g.p_set / gc.base_mva;

    Rng rng(seed);
    SampleSet set;
    set.seed = seed;
    set.hypercube_fraction = fraction;
    set.samples.reserve(count);
    for (int s = 0; s < count; ++s) {
        InjectionVector inj;
        inj.p = Eigen::VectorXd::Zero(n);
        inj.q = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i) {
            double pl = gc.buses[i].p_load / gc.base_mva;
            double ql = gc.buses[i].q_load / gc.base_mva;
            if (pl != 0.0) pl *= rng.uniform(1.0 - fraction, 1.0 + fraction);
            if (ql != 0.0) ql *= rng.uniform(1.0 - fraction, 1.0 + fraction);
            inj.p[i] = gen_p[i] - pl;
            inj.q[i] = -ql;
        }
        set.samples.push_back(std::move(inj));
    }
    return set;
}

/// Solved power-flow data for GP training: one input row per sample,
/// one voltage column per target node.
struct Dataset {
    Eigen::MatrixXd inputs;       // N_s x 2|N|, stacked injections
    Eigen::MatrixXd voltages;     // N_s x targets.size(), pu
    std::vector<int> target_nodes; // declared bus ids
    std::string topology_label;
    int rejected = 0; // non-converged samples dropped
    long solves = 0;
};

inline Dataset generate_dataset(const GridCase& gc, const Topology& topo,
                                const SampleSet& set,
                                const std::vector<int>& target_nodes,
                                const PfOptions& opts = {}) {
    Dataset ds;
    ds.target_nodes = target_nodes;
    ds.topology_label = topo.label;
    const int nt = static_cast<int>(target_nodes.size());
    std::vector<int> target_idx;
    for (int id : target_nodes) target_idx.push_back(gc.index_of(id));

    const int total = static_cast<int>(set.samples.size());
    ds.inputs.resize(total, 2 * gc.n_bus());
    ds.voltages.resize(total, nt);
    int kept = 0;
    const long before = solve_counter().load();
    for (const auto& inj : set.samples) {
        PfSolution sol = solve_nr(gc, topo, inj, opts);
        if (!sol.converged) {
            ++ds.rejected;
            continue;
        }
        ds.inputs.row(kept) = inj.stacked().transpose();
        for (int t = 0; t < nt; ++t)
            ds.voltages(kept, t) = sol.v_mag[target_idx[t]];
        ++kept;
    }
    ds.inputs.conservativeResize(kept, Eigen::NoChange);
    ds.voltages.conservativeResize(kept, Eigen::NoChange);
    ds.solves = solve_counter().load() - before;
    if (total > 0 && ds.rejected > 0.01 * total)
        throw ValidationError(
            "dataset rejected " + std::to_string(ds.rejected) + " of " +
            std::to_string(total) +
            " samples; distribution leaves feasible region");
    return ds;
}

/// All k-branch-outage topologies that stay slack-connected and whose
/// base-load power flow converges. Lexicographic in (sorted) branch ids.
inline std::vector<Topology> enumerate_feasible(const GridCase& gc, int k,
                                                const PfOptions& opts = {}) {
    if (k != 1 && k != 2) throw ArgumentError("contingency order must be 1 or 2");
    const Topology base = base_topology(gc);
    const InjectionVector inj = base_injection(gc);

    std::vector<int> ids;
    for (const auto& br : gc.branches) ids.push_back(br.id);
    std::sort(ids.begin(), ids.end());

    std::vector<std::vector<int>> combos;
    if (k == 1) {
        for (int a : ids) combos.push_back({a});
    } else {
        for (size_t i = 0; i < ids.size(); ++i)
            for (size_t j = i + 1; j < ids.size(); ++j)
                combos.push_back({ids[i], ids[j]});
    }

    std::vector<Topology> feasible;
    for (const auto& combo : combos) {
        Topology t = apply_outage(gc, base, combo);
        if (!is_connected(gc, t)) continue;
        if (!solve_nr(gc, t, inj, opts).converged) continue;
        feasible.push_back(std::move(t));
    }
    return feasible;
}

} // namespace gridkernel
