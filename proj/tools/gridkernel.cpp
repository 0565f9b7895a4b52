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

// gridkernel command-line tool: case inspection, power-flow solves,
// sampling, GP training (cold-start and transfer), voltage envelopes,
// and the contingency benchmark harness.
//
// Exit codes: 0 success, 2 validation/argument/I-O error, 3 numerical
// failure (non-convergence or ill-conditioning).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridkernel/gridkernel.hpp"

namespace fs = std::filesystem;
using namespace gridkernel;

namespace {

// ---------------------------------------------------------------- helpers

/// Case paths resolve as given first, then relative to GRIDKERNEL_CASE_DIR.
std::string resolve_case_path(const std::string& path) {
    if (fs::exists(path)) return path;
    if (const char* dir = std::getenv("GRIDKERNEL_CASE_DIR")) {
        const fs::path candidate = fs::path(dir) / path;
        if (fs::exists(candidate)) return candidate.string();
    }
    return path; // load_case reports the failure
}

GridCase load_case_arg(const std::string& path) {
    return load_case(resolve_case_path(path));
}

Topology make_topology(const GridCase& gc, const std::vector<int>& outages) {
    Topology topo = base_topology(gc);
    if (!outages.empty()) topo = apply_outage(gc, topo, outages);
    return topo;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

void write_output(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
        return;
    }
    write_text(path, content);
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read file: " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

// ------------------------------------------------- sample / dataset CSV

/// Sample CSV schema: one column pair per bus in dense order,
/// `p_<bus id>,q_<bus id>,...`; one row per injection sample (pu).
std::string samples_to_csv(const GridCase& gc, const SampleSet& set) {
    std::ostringstream os;
    for (int i = 0; i < gc.n_bus(); ++i)
        os << (i ? "," : "") << "p_" << gc.buses[i].id << ",q_"
           << gc.buses[i].id;
    os << '\n';
    for (const auto& inj : set.samples) {
        for (int i = 0; i < gc.n_bus(); ++i)
            os << (i ? "," : "") << fmt(inj.p[i]) << ',' << fmt(inj.q[i]);
        os << '\n';
    }
    return os.str();
}

std::vector<std::vector<double>> read_numeric_csv(
    const std::string& path, std::vector<std::string>& header) {
    std::istringstream is(read_file(path));
    std::string line;
    if (!std::getline(is, line))
        throw ValidationError("empty CSV file: " + path);
    header.clear();
    {
        std::istringstream hs(line);
        std::string field;
        while (std::getline(hs, field, ',')) header.push_back(field);
    }
    std::vector<std::vector<double>> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        std::vector<double> row;
        while (std::getline(ls, field, ',')) row.push_back(std::stod(field));
        if (row.size() != header.size())
            throw ValidationError("ragged CSV row in " + path);
        rows.push_back(std::move(row));
    }
    return rows;
}

SampleSet samples_from_csv(const GridCase& gc, const std::string& path) {
    std::vector<std::string> header;
    const auto rows = read_numeric_csv(path, header);
    const int n = gc.n_bus();
    if (static_cast<int>(header.size()) < 2 * n)
        throw ValidationError("sample CSV has " +
                              std::to_string(header.size()) +
                              " columns; case needs " + std::to_string(2 * n));
    SampleSet set;
    for (const auto& row : rows) {
        InjectionVector inj;
        inj.p = Eigen::VectorXd::Zero(n);
        inj.q = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i) {
            inj.p[i] = row[2 * i];
            inj.q[i] = row[2 * i + 1];
        }
        set.samples.push_back(std::move(inj));
    }
    return set;
}

/// Dataset CSV schema: the sample columns followed by one voltage column
/// `V_<node>` per target node.
std::string dataset_to_csv(const GridCase& gc, const Dataset& ds) {
    std::ostringstream os;
    for (int i = 0; i < gc.n_bus(); ++i)
        os << (i ? "," : "") << "p_" << gc.buses[i].id << ",q_"
           << gc.buses[i].id;
    for (int node : ds.target_nodes) os << ",V_" << node;
    os << '\n';
    for (Eigen::Index r = 0; r < ds.inputs.rows(); ++r) {
        for (Eigen::Index c = 0; c < ds.inputs.cols(); ++c)
            os << (c ? "," : "") << fmt(ds.inputs(r, c));
        for (Eigen::Index t = 0; t < ds.voltages.cols(); ++t)
            os << ',' << fmt(ds.voltages(r, t));
        os << '\n';
    }
    return os.str();
}

/// Reads a dataset CSV back into a test set for one node: inputs from the
/// p/q columns, targets from the matching `V_<node>` column.
TrainingSet test_set_from_csv(const std::string& path, int node,
                              int input_cols) {
    std::vector<std::string> header;
    const auto rows = read_numeric_csv(path, header);
    const std::string want = "V_" + std::to_string(node);
    int vcol = -1;
    for (size_t c = 0; c < header.size(); ++c)
        if (header[c] == want) vcol = static_cast<int>(c);
    if (vcol < 0)
        throw ValidationError("CSV " + path + " has no column " + want);
    if (static_cast<int>(header.size()) < input_cols)
        throw ValidationError("CSV " + path + " has too few input columns");
    TrainingSet set;
    set.target_node = node;
    set.inputs.resize(static_cast<Eigen::Index>(rows.size()), input_cols);
    set.targets.resize(static_cast<Eigen::Index>(rows.size()));
    for (size_t r = 0; r < rows.size(); ++r) {
        for (int c = 0; c < input_cols; ++c) set.inputs(r, c) = rows[r][c];
        set.targets[static_cast<Eigen::Index>(r)] = rows[r][vcol];
    }
    return set;
}

// ------------------------------------------------------------ emission

std::string envelopes_to_csv(const std::vector<Envelope>& envs) {
    std::ostringstream os;
    os << "node,topology,beta_lower,beta_upper,kappa,T,epsilon,delta,"
          "confidence,train_solves\n";
    for (const auto& e : envs)
        os << e.node << ',' << csv_field(e.topology_label) << ','
           << fmt(e.beta_lower) << ',' << fmt(e.beta_upper) << ','
           << fmt(e.config.kappa) << ',' << e.config.T << ','
           << fmt(e.config.epsilon) << ',' << fmt(e.config.delta) << ','
           << fmt(e.adjusted_conf) << ',' << e.train_solves << '\n';
    return os.str();
}

nlohmann::json envelopes_to_json(const std::vector<Envelope>& envs) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : envs)
        j.push_back({{"node", e.node},
                     {"topology", e.topology_label},
                     {"beta_lower", e.beta_lower},
                     {"beta_upper", e.beta_upper},
                     {"kappa", e.config.kappa},
                     {"T", e.config.T},
                     {"epsilon", e.config.epsilon},
                     {"delta", e.config.delta},
                     {"confidence", e.adjusted_conf},
                     {"train_solves", e.train_solves}});
    return j;
}

std::string area_to_csv(const std::vector<AreaRow>& rows) {
    std::ostringstream os;
    os << "method,cutoff_pu,fraction\n";
    for (const auto& r : rows)
        os << r.method << ',' << fmt(r.cutoff) << ',' << fmt(r.fraction)
           << '\n';
    return os.str();
}

std::string budget_to_csv(const std::vector<BudgetRow>& rows) {
    std::ostringstream os;
    os << "method,topologies,train_solves,mcs_solves,ratio\n";
    for (const auto& r : rows)
        os << r.method << ',' << r.topologies << ',' << r.train_solves << ','
           << r.mcs_solves << ',' << fmt(r.ratio) << '\n';
    return os.str();
}

// -------------------------------------------------------------- options

struct GlobalOpts {
    std::uint64_t seed = 7;
    int threads = 1;
    std::string out;
    std::string format = "csv";
};

Method method_from_name(const std::string& name) {
    if (name == "full_gp") return Method::full_gp;
    if (name == "vdk") return Method::vdk;
    if (name == "htl") return Method::htl;
    if (name == "mt_vdk") return Method::mt_vdk;
    throw ArgumentError("unknown method '" + name +
                        "' (expected full_gp|vdk|htl|mt_vdk)");
}

struct BenchOpts {
    std::string case_path;
    std::vector<std::string> methods;
    std::vector<int> sources;
    std::vector<int> nodes;
    int n_train = 60;
    int iters = 50;
    int n_test = 500;
    int source_samples = 512;
    int source_iters = 60;
    double fraction = 0.10;
    int max_topologies = -1; // -1 = desk-scale default
    bool full = false;
    bool deterministic = false;
};

ExperimentPlan plan_from(const BenchOpts& b, const GlobalOpts& g,
                         int desk_default) {
    ExperimentPlan plan;
    plan.methods.clear();
    for (const auto& m : b.methods) plan.methods.push_back(method_from_name(m));
    plan.source_branches = b.sources;
    plan.target_nodes = b.nodes;
    plan.n_train = b.n_train;
    plan.iters = b.iters;
    plan.n_test = b.n_test;
    plan.source_samples = b.source_samples;
    plan.source_iters = b.source_iters;
    plan.fraction = b.fraction;
    plan.master_seed = g.seed;
    plan.max_topologies =
        b.full ? 0 : (b.max_topologies >= 0 ? b.max_topologies : desk_default);
    return plan;
}

void emit_bench(const std::vector<ResultRow>& rows, const BenchOpts& b,
                const GlobalOpts& g, const std::string& default_out) {
    const std::string path = g.out.empty() ? default_out : g.out;
    if (g.format == "csv") {
        write_output(path, b.deterministic ? rows_to_csv_deterministic(rows)
                                           : rows_to_csv(rows));
    } else if (g.format == "json") {
        write_output(path, rows_to_json(rows).dump(2) + "\n");
    } else {
        throw ArgumentError("unknown output format '" + g.format + "'");
    }
    std::cerr << rows.size() << " result rows written to " << path << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"topology-aware power-flow learning toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts g;
    app.add_option("--seed", g.seed, "master random seed");
    app.add_option("--threads", g.threads, "worker threads for dense algebra");
    app.add_option("--out", g.out, "output path ('-' for stdout)");
    app.add_option("--format", g.format, "output format: csv or json")
        ->check(CLI::IsMember({"csv", "json"}));

    // ---- case ----
    auto* cmd_case = app.add_subcommand("case", "network case utilities");
    cmd_case->require_subcommand(1);

    std::string case_path;
    auto* case_info = cmd_case->add_subcommand("info", "print case summary");
    case_info->add_option("file", case_path, "case file (.m or .json)")
        ->required();

    std::vector<int> outages;
    auto* case_ybus =
        cmd_case->add_subcommand("ybus", "emit Y-bus as CSV triplets i,j,g,b");
    case_ybus->add_option("file", case_path)->required();
    case_ybus->add_option("--outage", outages,
                          "branch ids to take out of service")
        ->delimiter(',');

    // ---- pf ----
    auto* cmd_pf = app.add_subcommand("pf", "power-flow solves");
    cmd_pf->require_subcommand(1);
    std::string loads_path;
    auto* pf_solve = cmd_pf->add_subcommand("solve", "Newton-Raphson solve");
    pf_solve->add_option("case", case_path)->required();
    pf_solve->add_option("--outage", outages, "branch ids out of service")
        ->delimiter(',');
    pf_solve->add_option("--loads", loads_path,
                         "CSV bus,p_mw,q_mvar load overrides");

    // ---- sample ----
    auto* cmd_sample = app.add_subcommand("sample", "injection sampling");
    cmd_sample->require_subcommand(1);
    int n_samples = 2000;
    double fraction = 0.10;
    auto* sample_gen = cmd_sample->add_subcommand(
        "gen", "draw injections from the load hypercube");
    sample_gen->add_option("case", case_path)->required();
    sample_gen->add_option("--n", n_samples, "sample count");
    sample_gen->add_option("--frac", fraction, "hypercube half-width");

    // ---- dataset ----
    auto* cmd_dataset = app.add_subcommand("dataset", "solved training data");
    cmd_dataset->require_subcommand(1);
    std::string samples_path;
    std::vector<int> nodes;
    auto* dataset_gen = cmd_dataset->add_subcommand(
        "gen", "solve samples on a topology and record node voltages");
    dataset_gen->add_option("case", case_path)->required();
    dataset_gen->add_option("--outage", outages)->delimiter(',');
    dataset_gen->add_option("--samples", samples_path, "sample CSV")
        ->required();
    dataset_gen->add_option("--nodes", nodes, "target bus ids")
        ->delimiter(',')
        ->required();

    // ---- train ----
    auto* cmd_train = app.add_subcommand("train", "fit GP voltage models");
    cmd_train->require_subcommand(1);
    int node = 0;
    int n_train = 60;
    int iters = 50;
    std::string sources_dir;
    const auto add_train_common = [&](CLI::App* c, bool with_sources) {
        c->add_option("case", case_path)->required();
        c->add_option("--outage", outages)->delimiter(',');
        c->add_option("--node", node, "target bus id")->required();
        c->add_option("--n", n_train, "training sample count");
        c->add_option("--iters", iters, "optimizer iterations");
        c->add_option("--frac", fraction, "hypercube half-width");
        if (with_sources)
            c->add_option("--sources", sources_dir,
                          "directory of source model JSON files")
                ->required();
    };
    auto* train_vdk_cmd =
        cmd_train->add_subcommand("vdk", "cold-start VDK-GP");
    add_train_common(train_vdk_cmd, false);
    auto* train_htl_cmd =
        cmd_train->add_subcommand("htl", "hyperparameter-transfer VDK-GP");
    add_train_common(train_htl_cmd, true);
    auto* train_mt_cmd =
        cmd_train->add_subcommand("mt", "multi-task VDK-GP");
    add_train_common(train_mt_cmd, true);

    // ---- eval ----
    auto* cmd_eval = app.add_subcommand("eval", "evaluate a saved model");
    std::string model_path, truth_path, report = "mae";
    cmd_eval->add_option("model", model_path, "model JSON")->required();
    cmd_eval->add_option("--samples", samples_path,
                         "optional sample CSV (inputs only)");
    cmd_eval->add_option("--truth", truth_path,
                         "dataset CSV with true voltages")
        ->required();
    cmd_eval->add_option("--report", report, "metric to report")
        ->check(CLI::IsMember({"mae"}));

    // ---- pve ----
    auto* cmd_pve = app.add_subcommand("pve", "probabilistic voltage envelopes");
    cmd_pve->require_subcommand(1);
    std::string models_dir;
    PveConfig pve_cfg;
    auto* pve_build = cmd_pve->add_subcommand(
        "build", "envelopes from saved models, no extra solves");
    pve_build->add_option("--case", case_path, "case the models were trained on")
        ->required();
    pve_build->add_option("--models", models_dir, "directory of model JSONs")
        ->required();
    pve_build->add_option("--eps", pve_cfg.epsilon, "violation probability");
    pve_build->add_option("--delta", pve_cfg.delta, "confidence complement");
    pve_build->add_option("--kappa", pve_cfg.kappa, "std-dev multiplier");
    pve_build->add_option("--T", pve_cfg.T, "evaluation sample count");
    pve_build->add_option("--frac", fraction, "hypercube half-width");

    // ---- bench ----
    auto* cmd_bench = app.add_subcommand("bench", "contingency benchmarks");
    cmd_bench->require_subcommand(1);
    BenchOpts b;
    const auto add_bench_common = [&](CLI::App* c) {
        c->add_option("case", b.case_path)->required();
        c->add_option("--methods", b.methods,
                      "methods: full_gp,vdk,htl,mt_vdk")
            ->delimiter(',');
        c->add_option("--sources", b.sources, "source branch ids")
            ->delimiter(',');
        c->add_option("--nodes", b.nodes, "target bus ids")->delimiter(',');
        c->add_option("--n", b.n_train, "training samples per topology");
        c->add_option("--iters", b.iters, "optimizer iterations");
        c->add_option("--test", b.n_test, "test samples per topology");
        c->add_option("--source-samples", b.source_samples);
        c->add_option("--source-iters", b.source_iters);
        c->add_option("--frac", b.fraction, "hypercube half-width");
        c->add_option("--max-topologies", b.max_topologies,
                      "cap on target topologies (desk-scale default)");
        c->add_flag("--full", b.full, "run every feasible topology");
        c->add_flag("--deterministic", b.deterministic,
                    "zero wall times for byte-identical reruns");
    };
    auto* bench_n1 =
        cmd_bench->add_subcommand("n1", "single-branch-outage benchmark");
    add_bench_common(bench_n1);
    auto* bench_n2 =
        cmd_bench->add_subcommand("n2", "double-branch-outage benchmark");
    add_bench_common(bench_n2);

    // ---- report ----
    auto* cmd_report = app.add_subcommand("report", "summaries of result CSVs");
    cmd_report->require_subcommand(1);
    std::string results_path;
    std::vector<double> cutoffs{2e-4, 5e-4, 10e-4};
    int mcs_per_topology = 1000;
    auto* report_area = cmd_report->add_subcommand(
        "area", "fraction of instances below each MAE cutoff");
    report_area->add_option("results", results_path, "bench result CSV")
        ->required();
    report_area->add_option("--cutoffs", cutoffs, "MAE cutoffs in pu")
        ->delimiter(',');
    auto* report_budget = cmd_report->add_subcommand(
        "budget", "power-flow solve accounting vs brute-force MCS");
    report_budget->add_option("results", results_path)->required();
    report_budget->add_option("--mcs", mcs_per_topology,
                              "MCS samples per topology");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        Eigen::setNbThreads(g.threads);

        if (*case_info) {
            const GridCase gc = load_case_arg(case_path);
            std::ostringstream os;
            os << "buses: " << gc.n_bus() << "\nbranches: " << gc.n_branch()
               << "\nslack bus: " << gc.buses[gc.slack_index()].id
               << "\nbase MVA: " << gc.base_mva << "\n";
            write_output(g.out, os.str());
        } else if (*case_ybus) {
            const GridCase gc = load_case_arg(case_path);
            const Topology topo = make_topology(gc, outages);
            const AdmittanceMatrix Y = build_ybus(gc, topo);
            std::ostringstream os;
            os << "i,j,g,b\n";
            for (int i = 0; i < gc.n_bus(); ++i)
                for (int j = 0; j < gc.n_bus(); ++j)
                    if (Y(i, j) != std::complex<double>(0.0, 0.0))
                        os << gc.buses[i].id << ',' << gc.buses[j].id << ','
                           << fmt(Y(i, j).real()) << ',' << fmt(Y(i, j).imag())
                           << '\n';
            write_output(g.out, os.str());
        } else if (*pf_solve) {
            GridCase gc = load_case_arg(case_path);
            if (!loads_path.empty()) {
                std::vector<std::string> header;
                for (const auto& row : read_numeric_csv(loads_path, header)) {
                    if (row.size() < 3)
                        throw ValidationError(
                            "load override rows need bus,p_mw,q_mvar");
                    Bus& bus = gc.buses[gc.index_of(
                        static_cast<int>(row[0]))];
                    bus.p_load = row[1];
                    bus.q_load = row[2];
                }
            }
            const Topology topo = make_topology(gc, outages);
            const PfSolution sol = solve_nr(gc, topo, base_injection(gc));
            if (!sol.converged) {
                std::cerr << "power flow did not converge: " << sol.reason
                          << "\n";
                return 3;
            }
            if (g.format == "json") {
                nlohmann::json j;
                j["converged"] = sol.converged;
                j["iterations"] = sol.iterations;
                j["max_mismatch_pu"] = sol.max_mismatch;
                j["buses"] = nlohmann::json::array();
                for (int i = 0; i < gc.n_bus(); ++i)
                    j["buses"].push_back(
                        {{"bus", gc.buses[i].id},
                         {"v_pu", sol.v_mag[i]},
                         {"angle_deg", sol.v_ang[i] * 180.0 / M_PI}});
                write_output(g.out, j.dump(2) + "\n");
            } else {
                std::ostringstream os;
                os << "bus,v_pu,angle_deg\n";
                for (int i = 0; i < gc.n_bus(); ++i)
                    os << gc.buses[i].id << ',' << fmt(sol.v_mag[i]) << ','
                       << fmt(sol.v_ang[i] * 180.0 / M_PI) << '\n';
                write_output(g.out, os.str());
                std::cerr << "converged in " << sol.iterations
                          << " iterations, max mismatch " << sol.max_mismatch
                          << " pu\n";
            }
        } else if (*sample_gen) {
            const GridCase gc = load_case_arg(case_path);
            const SampleSet set =
                sample_injections(gc, fraction, n_samples, g.seed);
            write_output(g.out, samples_to_csv(gc, set));
        } else if (*dataset_gen) {
            const GridCase gc = load_case_arg(case_path);
            const Topology topo = make_topology(gc, outages);
            const SampleSet set = samples_from_csv(gc, samples_path);
            const Dataset ds = generate_dataset(gc, topo, set, nodes);
            write_output(g.out, dataset_to_csv(gc, ds));
            if (ds.rejected > 0)
                std::cerr << ds.rejected
                          << " non-converged samples dropped\n";
        } else if (*train_vdk_cmd || *train_htl_cmd || *train_mt_cmd) {
            const GridCase gc = load_case_arg(case_path);
            const Topology topo = make_topology(gc, outages);
            const long before = solve_counter().load();
            const SampleSet set =
                sample_injections(gc, fraction, n_train, g.seed);
            const Dataset ds = generate_dataset(gc, topo, set, {node});
            const TrainingSet data = training_set(ds, node);
            FitOptions fopts;
            fopts.iters = iters;
            GpModel model;
            if (*train_vdk_cmd) {
                const KernelSpec spec = make_vdk_spec(neighborhoods(gc, topo));
                model = fit(data, spec,
                            Hyperparameters::defaults(spec.n_sub(),
                                                      spec.n_weights()),
                            fopts);
            } else {
                const SourceRegistry reg = load_registry(sources_dir);
                TransferOptions topts;
                topts.fit = fopts;
                model = *train_htl_cmd
                            ? train_htl(data, gc, topo, reg, topts)
                            : train_mt(data, gc, topo, reg, topts);
            }
            model.solve_count = solve_counter().load() - before;
            const std::string path = g.out.empty() ? "model.json" : g.out;
            save_model(model, path);
            std::cerr << "model for node " << node << " on '" << topo.label
                      << "' saved to " << path << " (lml " << model.lml
                      << ", " << model.solve_count << " solves)\n";
        } else if (*cmd_eval) {
            const GpModel model = load_model(model_path);
            const int input_cols = static_cast<int>(model.x_train.cols());
            TrainingSet test =
                test_set_from_csv(truth_path, model.target_node, input_cols);
            if (!samples_path.empty()) {
                // inputs taken from the sample CSV, truth only for targets
                std::vector<std::string> header;
                const auto rows = read_numeric_csv(samples_path, header);
                if (static_cast<Eigen::Index>(rows.size()) !=
                    test.targets.size())
                    throw ValidationError(
                        "sample and truth CSVs have different row counts");
                for (size_t r = 0; r < rows.size(); ++r)
                    for (int c = 0; c < input_cols; ++c)
                        test.inputs(static_cast<Eigen::Index>(r), c) =
                            rows[r][c];
            }
            const double err = mae(model, test);
            if (g.format == "json") {
                nlohmann::json j{{"report", report},
                                 {"node", model.target_node},
                                 {"topology", model.label},
                                 {"n_test", test.size()},
                                 {"mae_pu", err}};
                write_output(g.out, j.dump(2) + "\n");
            } else {
                write_output(g.out, "report,node,topology,n_test,mae_pu\n" +
                                        report + "," +
                                        std::to_string(model.target_node) +
                                        "," + csv_field(model.label) + "," +
                                        std::to_string(test.size()) + "," +
                                        fmt(err) + "\n");
            }
        } else if (*pve_build) {
            const GridCase gc = load_case_arg(case_path);
            std::vector<GpModel> models;
            std::vector<fs::path> files;
            if (!fs::is_directory(models_dir))
                throw IoError("model directory not found: " + models_dir);
            for (const auto& entry : fs::directory_iterator(models_dir))
                if (entry.path().extension() == ".json")
                    files.push_back(entry.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files) models.push_back(load_model(f.string()));
            if (models.empty())
                throw ValidationError("no model JSONs in " + models_dir);
            const std::vector<Envelope> envs =
                build_envelopes(models, gc, fraction, pve_cfg, g.seed);
            if (g.format == "json")
                write_output(g.out, envelopes_to_json(envs).dump(2) + "\n");
            else
                write_output(g.out, envelopes_to_csv(envs));
        } else if (*bench_n1 || *bench_n2) {
            const GridCase gc = load_case_arg(b.case_path);
            const bool n1 = static_cast<bool>(*bench_n1);
            // desk-scale presets; --full or --max-topologies overrides
            if (b.methods.empty())
                b.methods = n1 ? std::vector<std::string>{"vdk", "mt_vdk"}
                               : std::vector<std::string>{"htl", "mt_vdk"};
            if (b.sources.empty())
                b.sources = n1 ? std::vector<int>{1, 5, 10}
                               : std::vector<int>{1, 10};
            if (b.nodes.empty())
                b.nodes = n1 ? std::vector<int>{4} : std::vector<int>{6, 25};
            const ExperimentPlan plan = plan_from(b, g, n1 ? 10 : 30);
            const std::vector<ResultRow> rows =
                n1 ? run_n1(gc, plan) : run_n2(gc, plan);
            emit_bench(rows, b, g, n1 ? "bench_n1.csv" : "bench_n2.csv");
            const MtHtlComparison cmp = compare_mt_htl(rows);
            if (!cmp.entries.empty())
                std::cerr << "MT-vs-HTL win rate: " << cmp.mt_win_rate << " ("
                          << cmp.entries.size() << " instances)\n";
        } else if (*report_area) {
            const std::vector<ResultRow> rows =
                rows_from_csv(read_file(results_path));
            const std::vector<AreaRow> table = area_under_density(rows, cutoffs);
            if (g.format == "json") {
                nlohmann::json j = nlohmann::json::array();
                for (const auto& r : table)
                    j.push_back({{"method", r.method},
                                 {"cutoff_pu", r.cutoff},
                                 {"fraction", r.fraction}});
                write_output(g.out, j.dump(2) + "\n");
            } else {
                write_output(g.out, area_to_csv(table));
            }
        } else if (*report_budget) {
            const std::vector<ResultRow> rows =
                rows_from_csv(read_file(results_path));
            const std::vector<BudgetRow> table =
                solve_budget_report(rows, mcs_per_topology);
            if (g.format == "json") {
                nlohmann::json j = nlohmann::json::array();
                for (const auto& r : table)
                    j.push_back({{"method", r.method},
                                 {"topologies", r.topologies},
                                 {"train_solves", r.train_solves},
                                 {"mcs_solves", r.mcs_solves},
                                 {"ratio", r.ratio}});
                write_output(g.out, j.dump(2) + "\n");
            } else {
                write_output(g.out, budget_to_csv(table));
            }
        }
        return 0;
    } catch (const ConditioningError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
}
