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
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "test_support.hpp"

using namespace gridkernel;

namespace {

ResultRow row(int node, const std::string& topo, const std::string& method,
              double mae_val, long solves = 10) {
    ResultRow r;
    r.node = node;
    r.topology_label = topo;
    r.method = method;
    r.n_train = 60;
    r.mae = mae_val;
    r.lml = 1.0;
    r.wall_s = 0.5;
    r.solves = solves;
    return r;
}

ExperimentPlan tiny_plan() {
    ExperimentPlan plan;
    plan.methods = {Method::vdk, Method::htl, Method::mt_vdk};
    plan.source_branches = {1};
    plan.target_nodes = {4};
    plan.n_train = 15;
    plan.iters = 3;
    plan.n_test = 30;
    plan.source_samples = 40;
    plan.source_iters = 5;
    plan.master_seed = 7;
    plan.max_topologies = 2;
    return plan;
}

} // namespace

TEST_CASE("area under density counts instances below each cutoff") {
    std::vector<ResultRow> rows{
        row(4, "a", "vdk", 1e-4), row(4, "b", "vdk", 3e-4),
        row(4, "c", "vdk", 9e-4), row(4, "d", "vdk", 2e-3),
        row(4, "a", "mt_vdk", 5e-5), row(4, "b", "mt_vdk", 3e-4)};
    const auto area = area_under_density(rows, {2e-4, 1e-3, 1e-2});

    auto frac = [&](const std::string& m, double c) {
        for (const auto& a : area)
            if (a.method == m && a.cutoff == c) return a.fraction;
        return -1.0;
    };
    CHECK(frac("vdk", 2e-4) == doctest::Approx(0.25));
    CHECK(frac("vdk", 1e-3) == doctest::Approx(0.75));
    CHECK(frac("vdk", 1e-2) == doctest::Approx(1.0));
    CHECK(frac("mt_vdk", 2e-4) == doctest::Approx(0.5));
    CHECK(frac("mt_vdk", 1e-2) == doctest::Approx(1.0));

    // monotone in the cutoff and bounded in [0, 1]
    for (const auto& a : area) {
        CHECK(a.fraction >= 0.0);
        CHECK(a.fraction <= 1.0);
    }
    CHECK_THROWS_AS(area_under_density({}, {1e-3}), ArgumentError);
}

TEST_CASE("mt vs htl comparison pairs rows and scores wins") {
    std::vector<ResultRow> rows{
        row(4, "N-1:2", "htl", 4e-4),  row(4, "N-1:2", "mt_vdk", 2e-4),
        row(4, "N-1:3", "htl", 1e-4),  row(4, "N-1:3", "mt_vdk", 3e-4),
        row(6, "N-1:2", "htl", 5e-4),  row(6, "N-1:2", "mt_vdk", 1e-4),
        row(4, "N-1:9", "vdk", 7e-4)}; // unpaired method rows are ignored
    const auto cmp = compare_mt_htl(rows);
    REQUIRE(cmp.entries.size() == 3);
    CHECK(cmp.mt_win_rate == doctest::Approx(2.0 / 3.0));
    for (const auto& e : cmp.entries) {
        if (e.node == 4 && e.topology_label == "N-1:2")
            CHECK(e.diff == doctest::Approx(-2e-4));
        if (e.node == 4 && e.topology_label == "N-1:3")
            CHECK(e.diff == doctest::Approx(2e-4));
    }
    CHECK(compare_mt_htl({}).entries.empty());
}

TEST_CASE("solve budget report aggregates per method") {
    std::vector<ResultRow> rows{
        row(4, "N-1:2", "vdk", 1e-4, 90), row(4, "N-1:3", "vdk", 1e-4, 90),
        row(6, "N-1:2", "vdk", 1e-4, 90), // same topology, second node
        row(4, "N-1:2", "mt_vdk", 1e-4, 110)};
    const auto budget = solve_budget_report(rows, 1000);
    REQUIRE(budget.size() == 2);
    for (const auto& b : budget) {
        if (b.method == "vdk") {
            CHECK(b.topologies == 2);
            CHECK(b.train_solves == 270);
            CHECK(b.mcs_solves == 2000);
            CHECK(b.ratio == doctest::Approx(2000.0 / 270.0));
        } else {
            CHECK(b.method == "mt_vdk");
            CHECK(b.topologies == 1);
            CHECK(b.mcs_solves == 1000);
        }
    }
}

TEST_CASE("csv round-trip preserves rows including comma labels") {
    std::vector<ResultRow> rows{row(4, "N-1:7", "vdk", 1.25e-4, 45),
                                row(6, "N-2:12,15", "mt_vdk", 7.5e-5, 90)};
    rows[0].lml = -123.456;
    rows[1].wall_s = 2.5;
    const std::string csv = rows_to_csv(rows);
    CHECK(csv.rfind("node,topology,method,n_train,mae_pu,lml,wall_s,solves\n",
                    0) == 0);
    const auto back = rows_from_csv(csv);
    REQUIRE(back.size() == 2);
    CHECK(back[1].topology_label == "N-2:12,15");
    CHECK(back[0].mae == rows[0].mae);
    CHECK(back[0].lml == rows[0].lml);
    CHECK(back[1].wall_s == rows[1].wall_s);
    CHECK(back[1].solves == 90);

    // deterministic variant zeroes wall time only
    const auto det = rows_from_csv(rows_to_csv_deterministic(rows));
    CHECK(det[1].wall_s == 0.0);
    CHECK(det[1].mae == rows[1].mae);

    // empty input emits the header alone
    CHECK(rows_to_csv({}) ==
          "node,topology,method,n_train,mae_pu,lml,wall_s,solves\n");
    CHECK(rows_from_csv(rows_to_csv({})).empty());
}

TEST_CASE("emit writes csv and json files") {
    std::vector<ResultRow> rows{row(4, "N-1:7", "vdk", 1e-4)};
    emit(rows, "csv", "emit_test.csv");
    emit(rows, "json", "emit_test.json");

    std::ifstream fcsv("emit_test.csv");
    std::string header;
    std::getline(fcsv, header);
    CHECK(header == "node,topology,method,n_train,mae_pu,lml,wall_s,solves");

    std::ifstream fjson("emit_test.json");
    nlohmann::json j;
    fjson >> j;
    REQUIRE(j.is_array());
    CHECK(j[0]["method"] == "vdk");
    CHECK(j[0]["mae_pu"] == doctest::Approx(1e-4));

    std::remove("emit_test.csv");
    std::remove("emit_test.json");
    CHECK_THROWS_AS(emit(rows, "xml", "emit_test.xml"), ArgumentError);
}

TEST_CASE("topology subsample is deterministic and sorted") {
    const GridCase gc = gktest::case30();
    std::vector<Topology> all = enumerate_feasible(gc, 1);
    const auto a = detail::subsample(all, 5, 42);
    const auto b = detail::subsample(all, 5, 42);
    REQUIRE(a.size() == 5);
    for (size_t i = 0; i < 5; ++i) CHECK(a[i].label == b[i].label);
    for (size_t i = 1; i < a.size(); ++i) CHECK(a[i - 1].label < a[i].label);
    const auto c = detail::subsample(all, 5, 43);
    bool any_diff = false;
    for (size_t i = 0; i < 5; ++i) any_diff |= (a[i].label != c[i].label);
    CHECK(any_diff);
    // count >= size is a no-op
    CHECK(detail::subsample(all, 0, 42).size() == all.size());
    CHECK(detail::subsample(all, 999, 42).size() == all.size());
}

TEST_CASE("small contingency benchmark: shape, accounting, reproducibility") {
    const GridCase gc = gktest::case30();
    const ExperimentPlan plan = tiny_plan();

    const long before = solve_counter().load();
    const auto rows = run_n1(gc, plan);
    const long total = solve_counter().load() - before;

    // 2 target topologies x 3 methods x 1 node
    REQUIRE(rows.size() == 6);
    long row_solves = 0;
    for (const auto& r : rows) {
        CHECK(r.n_train == plan.n_train);
        CHECK(r.mae > 0.0);
        CHECK(r.mae < 0.05);
        CHECK(r.solves >= plan.n_train); // train set always counted
        row_solves += r.solves;
        // source topologies are excluded from the target set
        CHECK(r.topology_label != "N-1:1");
        CHECK(r.topology_label != "base");
    }
    // remaining solves: source training (2 sources x 40 samples) plus the
    // base-load feasibility screen over the 38 viable single outages
    CHECK(total - row_solves == 2 * plan.source_samples + 38);

    // the per-(topology, node) test pool is shared across methods, so each
    // method sees the same test draw and solves split train + test evenly
    for (const auto& r : rows)
        CHECK(r.solves == plan.n_train + plan.n_test);

    // rerun is byte-identical under the deterministic emitter
    const auto rows2 = run_n1(gc, plan);
    CHECK(rows_to_csv_deterministic(rows) == rows_to_csv_deterministic(rows2));
}

TEST_CASE("transfer methods use the hot start on the small benchmark") {
    const GridCase gc = gktest::case30();
    ExperimentPlan plan = tiny_plan();
    plan.max_topologies = 1;
    const auto rows = run_n1(gc, plan);
    REQUIRE(rows.size() == 3);
    // all three methods produce usable models on the same instance
    for (const auto& r : rows) {
        CHECK(std::isfinite(r.lml));
        CHECK(r.topology_label == rows[0].topology_label);
    }
}
