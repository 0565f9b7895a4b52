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

#include <chrono>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridkernel/acpf.hpp"
#include "gridkernel/common.hpp"
#include "gridkernel/gpr.hpp"
#include "gridkernel/transfer.hpp"

namespace gridkernel {

enum class Method { full_gp, vdk, htl, mt_vdk };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::full_gp: return "full_gp";
        case Method::vdk: return "vdk";
        case Method::htl: return "htl";
        case Method::mt_vdk: return "mt_vdk";
    }
    return "?";
}

struct ExperimentPlan {
    std::vector<Method> methods{Method::vdk, Method::mt_vdk};
    std::vector<int> source_branches; // e.g. {1, 5, 10}; base always included
    std::vector<int> target_nodes;    // declared bus ids
    int n_train = 60;
    int iters = 50;
    int n_test = 500;
    int source_samples = 512;
    int source_iters = 60;
    double fraction = 0.10;
    std::uint64_t master_seed = 7;
    int max_topologies = 0; // 0 = all feasible topologies
};

struct ResultRow {
    int node = 0;
    std::string topology_label;
    std::string method;
    int n_train = 0;
    double mae = 0.0;
    double lml = 0.0;
    double wall_s = 0.0;
    long solves = 0;
};

namespace detail {

inline Hyperparameters cold_start(const KernelSpec& spec) {
    return Hyperparameters::defaults(spec.n_sub(), spec.n_weights());
}

/// Source topologies for a plan: the base case plus each listed N-1 outage.
inline std::vector<Topology> source_topologies(const GridCase& gc,
                                               const ExperimentPlan& plan) {
    std::vector<Topology> topos{base_topology(gc)};
    for (int id : plan.source_branches)
        topos.push_back(apply_outage(gc, base_topology(gc), {id}));
    return topos;
}

/// Trains one source model: large sample budget, cold-start VDK.
inline GpModel train_source(const GridCase& gc, const Topology& topo,
                            int node, const ExperimentPlan& plan) {
    const std::uint64_t seed = derive_seed(
        plan.master_seed, "source:" + topo.label + ":" + std::to_string(node));
    const long before = solve_counter().load();
    const SampleSet samples =
        sample_injections(gc, plan.fraction, plan.source_samples, seed);
    const Dataset ds = generate_dataset(gc, topo, samples, {node});
    TrainingSet data = training_set(ds, node);
    const KernelSpec spec = make_vdk_spec(neighborhoods(gc, topo));
    FitOptions fopts;
    fopts.iters = plan.source_iters;
    GpModel model = fit(data, spec, cold_start(spec), fopts);
    model.solve_count = solve_counter().load() - before;
    return model;
}

inline SourceRegistry build_registry(const GridCase& gc,
                                     const ExperimentPlan& plan, int node) {
    SourceRegistry reg;
    reg.case_hash = gc.identity_hash();
    for (const auto& topo : source_topologies(gc, plan))
        reg.entries.push_back(train_source(gc, topo, node, plan));
    return reg;
}

/// Deterministic subsample: seeded Fisher-Yates pick of `count` items.
inline std::vector<Topology> subsample(std::vector<Topology> topos, int count,
                                       std::uint64_t seed) {
    if (count <= 0 || count >= static_cast<int>(topos.size())) return topos;
    Rng rng(derive_seed(seed, "topology-subsample"));
    for (size_t i = 0; i < topos.size(); ++i) {
        const size_t j =
            i + static_cast<size_t>(rng.uniform() * (topos.size() - i));
        std::swap(topos[i], topos[std::min(j, topos.size() - 1)]);
    }
    topos.resize(count);
    std::sort(topos.begin(), topos.end(),
              [](const Topology& a, const Topology& b) {
                  return a.label < b.label;
              });
    return topos;
}

inline ResultRow run_one(const GridCase& gc, const Topology& topo, int node,
                         Method method, const SourceRegistry& registry,
                         const ExperimentPlan& plan) {
    // Training draws are shared by every method on a given (topology, node)
    // so that method comparisons are paired: differences in MAE reflect the
    // estimator, not the luck of the sample.
    const std::uint64_t train_seed =
        derive_seed(plan.master_seed,
                    "train:" + topo.label + ":" + std::to_string(node));
    const std::uint64_t test_seed =
        derive_seed(plan.master_seed,
                    "test:" + topo.label + ":" + std::to_string(node));

    const long before = solve_counter().load();
    const SampleSet train_samples =
        sample_injections(gc, plan.fraction, plan.n_train, train_seed);
    const Dataset train_ds = generate_dataset(gc, topo, train_samples, {node});
    TrainingSet data = training_set(train_ds, node);

    const SampleSet test_samples =
        sample_injections(gc, plan.fraction, plan.n_test, test_seed);
    const Dataset test_ds = generate_dataset(gc, topo, test_samples, {node});
    const TrainingSet test = training_set(test_ds, node);

    FitOptions fopts;
    fopts.iters = plan.iters;
    TransferOptions topts;
    topts.fit = fopts;

    const auto t0 = std::chrono::steady_clock::now();
    GpModel model;
    switch (method) {
        case Method::full_gp: {
            const KernelSpec spec = make_full_se_spec(2 * gc.n_bus());
            model = fit(data, spec, cold_start(spec), fopts);
            break;
        }
        case Method::vdk: {
            const KernelSpec spec = make_vdk_spec(neighborhoods(gc, topo));
            model = fit(data, spec, cold_start(spec), fopts);
            break;
        }
        case Method::htl:
            model = train_htl(data, gc, topo, registry, topts);
            break;
        case Method::mt_vdk:
            model = train_mt(data, gc, topo, registry, topts);
            break;
    }
    const auto t1 = std::chrono::steady_clock::now();

    ResultRow row;
    row.node = node;
    row.topology_label = topo.label;
    row.method = method_name(method);
    row.n_train = data.size();
    row.mae = mae(model, test);
    row.lml = model.lml;
    row.wall_s = std::chrono::duration<double>(t1 - t0).count();
    row.solves = solve_counter().load() - before;
    return row;
}

} // namespace detail

/// Benchmarks every plan method over feasible k-order contingency
/// topologies, excluding topologies present in the source set. Results are
/// deterministic per master seed (wall time aside).
inline std::vector<ResultRow> run_contingency_bench(const GridCase& gc,
                                                    const ExperimentPlan& plan,
                                                    int k) {
    const std::vector<Topology> all = enumerate_feasible(gc, k);
    std::vector<Topology> targets;
    std::vector<std::string> source_labels;
    for (const auto& t : detail::source_topologies(gc, plan))
        source_labels.push_back(t.label);
    for (const auto& t : all)
        if (std::find(source_labels.begin(), source_labels.end(), t.label) ==
            source_labels.end())
            targets.push_back(t);
    targets = detail::subsample(std::move(targets), plan.max_topologies,
                                plan.master_seed);

    const bool needs_sources =
        std::find(plan.methods.begin(), plan.methods.end(), Method::htl) !=
            plan.methods.end() ||
        std::find(plan.methods.begin(), plan.methods.end(), Method::mt_vdk) !=
            plan.methods.end();

    std::vector<ResultRow> rows;
    for (int node : plan.target_nodes) {
        SourceRegistry registry;
        if (needs_sources) registry = detail::build_registry(gc, plan, node);
        for (const auto& topo : targets)
            for (Method m : plan.methods)
                rows.push_back(
                    detail::run_one(gc, topo, node, m, registry, plan));
    }
    return rows;
}

inline std::vector<ResultRow> run_n1(const GridCase& gc,
                                     const ExperimentPlan& plan) {
    return run_contingency_bench(gc, plan, 1);
}

/// N-2 benchmark; sources stay N-1/base only, so every target network
/// structure is fully out-of-sample.
inline std::vector<ResultRow> run_n2(const GridCase& gc,
                                     const ExperimentPlan& plan) {
    return run_contingency_bench(gc, plan, 2);
}

/// Per-(node, topology) MAE difference mt - htl, and the fraction of
/// instances where mt wins.
struct MtHtlComparison {
    struct Entry {
        int node;
        std::string topology_label;
        double diff; // mae_mt - mae_htl
    };
    std::vector<Entry> entries;
    double mt_win_rate = 0.0;
};

inline MtHtlComparison compare_mt_htl(const std::vector<ResultRow>& rows) {
    MtHtlComparison cmp;
    int wins = 0;
    for (const auto& r : rows) {
        if (r.method != "mt_vdk") continue;
        for (const auto& h : rows) {
            if (h.method != "htl" || h.node != r.node ||
                h.topology_label != r.topology_label)
                continue;
            cmp.entries.push_back({r.node, r.topology_label, r.mae - h.mae});
            if (r.mae < h.mae) ++wins;
        }
    }
    if (!cmp.entries.empty())
        cmp.mt_win_rate = static_cast<double>(wins) / cmp.entries.size();
    return cmp;
}

/// Empirical CDF of MAE at each cutoff, per method: the fraction of
/// (node, topology) instances with MAE below the cutoff.
struct AreaRow {
    std::string method;
    double cutoff;
    double fraction;
};

inline std::vector<AreaRow> area_under_density(
    const std::vector<ResultRow>& rows, const std::vector<double>& cutoffs) {
    if (rows.empty()) throw ArgumentError("area_under_density: no rows");
    std::vector<std::string> methods;
    for (const auto& r : rows)
        if (std::find(methods.begin(), methods.end(), r.method) ==
            methods.end())
            methods.push_back(r.method);
    std::vector<AreaRow> out;
    for (const auto& m : methods) {
        int total = 0;
        for (const auto& r : rows)
            if (r.method == m) ++total;
        for (double c : cutoffs) {
            int below = 0;
            for (const auto& r : rows)
                if (r.method == m && r.mae < c) ++below;
            out.push_back({m, c, static_cast<double>(below) / total});
        }
    }
    return out;
}

/// Power-flow solve accounting per method, against the brute-force MCS
/// baseline T x (topology count).
struct BudgetRow {
    std::string method;
    int topologies = 0;
    long train_solves = 0;
    long mcs_solves = 0;
    double ratio = 0.0; // mcs / train
};

inline std::vector<BudgetRow> solve_budget_report(
    const std::vector<ResultRow>& rows, int mcs_samples_per_topology = 1000) {
    std::vector<BudgetRow> out;
    std::vector<std::string> methods;
    for (const auto& r : rows)
        if (std::find(methods.begin(), methods.end(), r.method) ==
            methods.end())
            methods.push_back(r.method);
    for (const auto& m : methods) {
        BudgetRow b;
        b.method = m;
        std::vector<std::string> labels;
        for (const auto& r : rows) {
            if (r.method != m) continue;
            b.train_solves += r.solves;
            if (std::find(labels.begin(), labels.end(), r.topology_label) ==
                labels.end())
                labels.push_back(r.topology_label);
        }
        b.topologies = static_cast<int>(labels.size());
        b.mcs_solves = static_cast<long>(mcs_samples_per_topology) *
                       b.topologies;
        if (b.train_solves > 0)
            b.ratio = static_cast<double>(b.mcs_solves) / b.train_solves;
        out.push_back(b);
    }
    return out;
}

// ---- emission ----

inline std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

/// Quotes a field when needed (topology labels of order two contain commas).
inline std::string csv_field(const std::string& s) {
    if (s.find(',') == std::string::npos && s.find('"') == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::string read_csv_field(std::istringstream& ls) {
    std::string field;
    if (ls.peek() == '"') {
        ls.get();
        char c;
        while (ls.get(c)) {
            if (c == '"') {
                if (ls.peek() == '"') {
                    field += '"';
                    ls.get();
                } else {
                    break;
                }
            } else {
                field += c;
            }
        }
        if (ls.peek() == ',') ls.get();
    } else {
        std::getline(ls, field, ',');
    }
    return field;
}

inline std::string rows_to_csv(const std::vector<ResultRow>& rows) {
    std::ostringstream os;
    os << "node,topology,method,n_train,mae_pu,lml,wall_s,solves\n";
    for (const auto& r : rows)
        os << r.node << ',' << csv_field(r.topology_label) << ',' << r.method
           << ','
           << r.n_train << ',' << format_double(r.mae) << ','
           << format_double(r.lml) << ',' << format_double(r.wall_s) << ','
           << r.solves << '\n';
    return os.str();
}

/// Deterministic CSV: wall time zeroed so reruns are byte-identical.
inline std::string rows_to_csv_deterministic(std::vector<ResultRow> rows) {
    for (auto& r : rows) r.wall_s = 0.0;
    return rows_to_csv(rows);
}

inline std::vector<ResultRow> rows_from_csv(const std::string& csv) {
    std::vector<ResultRow> rows;
    std::istringstream is(csv);
    std::string line;
    if (!std::getline(is, line)) return rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        ResultRow r;
        r.node = std::stoi(read_csv_field(ls));
        r.topology_label = read_csv_field(ls);
        r.method = read_csv_field(ls);
        r.n_train = std::stoi(read_csv_field(ls));
        r.mae = std::stod(read_csv_field(ls));
        r.lml = std::stod(read_csv_field(ls));
        r.wall_s = std::stod(read_csv_field(ls));
        r.solves = std::stol(read_csv_field(ls));
        rows.push_back(std::move(r));
    }
    return rows;
}

inline nlohmann::json rows_to_json(const std::vector<ResultRow>& rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows)
        j.push_back({{"node", r.node},
                     {"topology", r.topology_label},
                     {"method", r.method},
                     {"n_train", r.n_train},
                     {"mae_pu", r.mae},
                     {"lml", r.lml},
                     {"wall_s", r.wall_s},
                     {"solves", r.solves}});
    return j;
}

inline void write_text(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write file: " + path);
    f << content;
    if (!f) throw IoError("write failed: " + path);
}

inline void emit(const std::vector<ResultRow>& rows, const std::string& format,
                 const std::string& path) {
    if (format == "csv") write_text(path, rows_to_csv(rows));
    else if (format == "json") write_text(path, rows_to_json(rows).dump(2) + "\n");
    else throw ArgumentError("unknown output format '" + format + "'");
}

} // namespace gridkernel
