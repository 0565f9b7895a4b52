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

#include "test_support.hpp"

using namespace gridkernel;

TEST_CASE("required sample counts at reference settings") {
    // ln(1/1e-4)/ln(1/0.99) = 9.2103/0.0100503 = 916.42 -> 917
    CHECK(required_samples(0.02, 1e-4) == 917);
    // halving epsilon roughly doubles the requirement:
    // ln(1e4)/ln(1/0.995) = 1837.46 -> 1838
    CHECK(required_samples(0.01, 1e-4) == 1838);
    // generous settings still clamp to at least one sample
    CHECK(required_samples(0.999, 0.999) == 1);
    CHECK_THROWS_AS(required_samples(0.0, 1e-4), ArgumentError);
    CHECK_THROWS_AS(required_samples(0.02, 1.0), ArgumentError);
}

TEST_CASE("sample count and implied epsilon are mutually consistent") {
    for (double eps : {0.005, 0.01, 0.02, 0.05, 0.2}) {
        for (double delta : {1e-2, 1e-4, 1e-6}) {
            const int T = required_samples(eps, delta);
            // T samples cover eps; T-1 would not
            CHECK(implied_epsilon(T, delta) <= eps + 1e-12);
            if (T > 1) CHECK(implied_epsilon(T - 1, delta) > eps);
        }
    }
    // T = 1000 at delta = 1e-4 implies roughly 1.84% violation mass
    const double eps = implied_epsilon(1000, 1e-4);
    CHECK(eps == doctest::Approx(0.0184).epsilon(0.01));
    CHECK(eps < 0.019);
}

TEST_CASE("normal tail values") {
    CHECK(gamma_tail(0.0) == doctest::Approx(0.5));
    // standard table values
    CHECK(gamma_tail(1.0) == doctest::Approx(0.158655).epsilon(1e-4));
    CHECK(gamma_tail(3.5) == doctest::Approx(2.3263e-4).epsilon(1e-3));
    CHECK(gamma_tail(3.75) == doctest::Approx(8.8417e-5).epsilon(1e-3));
    CHECK_THROWS_AS(gamma_tail(-1.0), ArgumentError);
}

TEST_CASE("adjusted confidence at the reference operating point") {
    const double c = adjusted_confidence(1e-4, 3.75, 1000);
    CHECK(std::abs(c - 0.9157) < 5e-4);
    // with no evaluation draws only the scenario bound discounts
    CHECK(adjusted_confidence(1e-4, 3.75, 0) == doctest::Approx(1.0 - 1e-4));
    // monotone: more draws, less confidence; larger kappa, more confidence
    CHECK(adjusted_confidence(1e-4, 3.75, 2000) < c);
    CHECK(adjusted_confidence(1e-4, 4.5, 1000) > c);
}

TEST_CASE("beta estimates match a direct scan and widen with kappa") {
    const GridCase gc = gktest::case30();
    const Topology base = base_topology(gc);
    const Dataset ds = generate_dataset(
        gc, base, sample_injections(gc, 0.1, 40, 21), {4});
    TrainingSet data = training_set(ds, 4);
    const KernelSpec spec = make_vdk_spec(neighborhoods(gc, base));
    FitOptions fo;
    fo.iters = 30;
    const GpModel model = fit(data, spec, Hyperparameters::defaults(30), fo);

    const SampleSet evals = sample_injections(gc, 0.1, 200, 777);
    const auto [upper, lower] = estimate_beta(model, evals, 3.0);

    double u_ref = -1e300, l_ref = 1e300;
    for (const auto& inj : evals.samples) {
        const auto [mu, var] = predict(model, inj.stacked());
        u_ref = std::max(u_ref, mu + 3.0 * std::sqrt(var));
        l_ref = std::min(l_ref, mu - 3.0 * std::sqrt(var));
    }
    CHECK(upper == doctest::Approx(u_ref));
    CHECK(lower == doctest::Approx(l_ref));
    CHECK(upper > lower);

    const auto [u_wide, l_wide] = estimate_beta(model, evals, 4.0);
    CHECK(u_wide >= upper);
    CHECK(l_wide <= lower);

    SampleSet empty;
    CHECK_THROWS_AS(estimate_beta(model, empty, 3.0), ArgumentError);
}

TEST_CASE("envelope construction consumes no power-flow solves") {
    const GridCase gc = gktest::case30();
    const Topology base = base_topology(gc);
    const Dataset ds = generate_dataset(
        gc, base, sample_injections(gc, 0.1, 30, 22), {4});
    TrainingSet data = training_set(ds, 4);
    data.topology_label = base.label;
    const KernelSpec spec = make_vdk_spec(neighborhoods(gc, base));
    FitOptions fo;
    fo.iters = 10;
    GpModel model = fit(data, spec, Hyperparameters::defaults(30), fo);
    model.label = base.label;
    model.target_node = 4;
    model.solve_count = ds.solves;

    PveConfig cfg;
    cfg.T = 500;
    const long before = solve_counter().load();
    const auto envs = build_envelopes({model}, gc, 0.1, cfg, 99);
    CHECK(solve_counter().load() == before);

    REQUIRE(envs.size() == 1);
    CHECK(envs[0].node == 4);
    CHECK(envs[0].topology_label == base.label);
    CHECK(envs[0].train_solves == 30);
    CHECK(envs[0].beta_upper > envs[0].beta_lower);
    CHECK(envs[0].adjusted_conf ==
          doctest::Approx(adjusted_confidence(cfg.delta, cfg.kappa, cfg.T)));

    // reproducible: identical call gives identical bounds
    const auto envs2 = build_envelopes({model}, gc, 0.1, cfg, 99);
    CHECK(envs2[0].beta_upper == envs[0].beta_upper);
    CHECK(envs2[0].beta_lower == envs[0].beta_lower);

    // different seed moves the draws, so bounds differ slightly
    const auto envs3 = build_envelopes({model}, gc, 0.1, cfg, 100);
    CHECK(envs3[0].beta_upper != envs[0].beta_upper);

    PveConfig bad;
    bad.T = 0;
    CHECK_THROWS_AS(build_envelopes({model}, gc, 0.1, bad, 99),
                    ArgumentError);
}

TEST_CASE("envelope covers held-out true voltages on the base case") {
    const GridCase gc = gktest::case30();
    const Topology base = base_topology(gc);
    const Dataset ds = generate_dataset(
        gc, base, sample_injections(gc, 0.1, 60, 23), {4});
    TrainingSet data = training_set(ds, 4);
    data.topology_label = base.label;
    const KernelSpec spec = make_vdk_spec(neighborhoods(gc, base));
    FitOptions fo;
    fo.iters = 50;
    GpModel model = fit(data, spec, Hyperparameters::defaults(30), fo);
    model.label = base.label;
    model.target_node = 4;

    PveConfig cfg; // kappa = 3.75, T = 1000
    const auto envs = build_envelopes({model}, gc, 0.1, cfg, 5);
    REQUIRE(envs.size() == 1);

    const Dataset held = generate_dataset(
        gc, base, sample_injections(gc, 0.1, 500, 4242), {4});
    const TrainingSet truth = training_set(held, 4);
    int inside = 0;
    for (int i = 0; i < truth.size(); ++i)
        if (truth.targets[i] <= envs[0].beta_upper &&
            truth.targets[i] >= envs[0].beta_lower)
            ++inside;
    CHECK(inside >= static_cast<int>(0.99 * truth.size()));
}
