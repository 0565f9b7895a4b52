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
#include <filesystem>
#include <fstream>

#include "test_support.hpp"

using namespace gridkernel;

namespace {

Hyperparameters random_theta(Rng& rng, int n_sub) {
    Hyperparameters h;
    h.log_tau = gktest::random_vector(rng, n_sub, -1.0, 1.0);
    h.log_len = gktest::random_vector(rng, n_sub, -1.0, 1.0);
    h.log_noise = rng.uniform(-6.0, -3.0);
    h.log_weights = Eigen::VectorXd::Zero(0);
    return h;
}

/// Lightweight registry entry: only the fields the transfer path reads
/// (kernel structure, hyperparameters, label).
GpModel bare_entry(Rng& rng, const NeighborhoodStructure& nbr,
                   const std::string& label) {
    GpModel m;
    m.spec = make_vdk_spec(nbr);
    m.theta = random_theta(rng, static_cast<int>(nbr.members.size()));
    m.label = label;
    return m;
}

/// Fully trained entry on synthetic data, usable for persistence tests.
GpModel trained_entry(Rng& rng, const NeighborhoodStructure& nbr,
                      const std::string& label) {
    const int n = static_cast<int>(nbr.members.size());
    TrainingSet data;
    data.inputs.resize(6, 2 * n);
    data.targets.resize(6);
    for (int i = 0; i < 6; ++i) {
        data.inputs.row(i) = gktest::random_vector(rng, 2 * n).transpose();
        data.targets[i] = 1.0 + 0.01 * data.inputs(i, 0);
    }
    FitOptions fo;
    fo.iters = 0;
    GpModel m = fit(data, make_vdk_spec(nbr), random_theta(rng, n), fo);
    m.label = label;
    return m;
}

} // namespace

TEST_CASE("htl init with one source returns that source") {
    Rng rng(60);
    const NeighborhoodStructure nbr = gktest::line_graph(5);
    SourceRegistry reg;
    reg.entries.push_back(bare_entry(rng, nbr, "N-1:3"));
    const Hyperparameters avg = htl_init(reg);
    CHECK(avg.log_tau == reg.entries[0].theta.log_tau);
    CHECK(avg.log_len == reg.entries[0].theta.log_len);
    // noise is a likelihood parameter, not part of the transferred kernel
    // configuration; it restarts from the cold-start default
    CHECK(avg.log_noise ==
          Hyperparameters::defaults(static_cast<int>(avg.log_tau.size()))
              .log_noise);
}

TEST_CASE("htl init averages in log space") {
    Rng rng(59);
    const NeighborhoodStructure nbr = gktest::line_graph(2);
    SourceRegistry reg;
    GpModel a = bare_entry(rng, nbr, "N-1:1");
    a.theta.log_tau << std::log(1.0), std::log(4.0);
    a.theta.log_len << std::log(2.0), std::log(2.0);
    a.theta.log_noise = std::log(1e-2);
    GpModel b = bare_entry(rng, nbr, "N-1:2");
    b.theta.log_tau << std::log(4.0), std::log(1.0);
    b.theta.log_len << std::log(8.0), std::log(2.0);
    b.theta.log_noise = std::log(1e-4);
    reg.entries = {a, b};

    const Hyperparameters avg = htl_init(reg);
    // geometric means: sqrt(1*4)=2, sqrt(2*8)=4, sqrt(1e-2*1e-4)=1e-3
    CHECK(std::exp(avg.log_tau[0]) == doctest::Approx(2.0));
    CHECK(std::exp(avg.log_tau[1]) == doctest::Approx(2.0));
    CHECK(std::exp(avg.log_len[0]) == doctest::Approx(4.0));
    CHECK(std::exp(avg.log_len[1]) == doctest::Approx(2.0));
    // noise is never averaged from the sources
    CHECK(avg.log_noise ==
          doctest::Approx(Hyperparameters::defaults(2).log_noise));

    // raw-space variant: arithmetic means instead
    const Hyperparameters raw = htl_init(reg, /*raw_average=*/true);
    CHECK(std::exp(raw.log_tau[0]) == doctest::Approx(2.5));
    CHECK(std::exp(raw.log_len[0]) == doctest::Approx(5.0));
}

TEST_CASE("htl init is invariant to source order") {
    Rng rng(61);
    const NeighborhoodStructure nbr = gktest::line_graph(6);
    SourceRegistry fwd, rev;
    for (int i = 0; i < 4; ++i)
        fwd.entries.push_back(
            bare_entry(rng, nbr, "N-1:" + std::to_string(i)));
    rev.entries.assign(fwd.entries.rbegin(), fwd.entries.rend());
    const Hyperparameters a = htl_init(fwd);
    const Hyperparameters b = htl_init(rev);
    CHECK((a.log_tau - b.log_tau).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((a.log_len - b.log_len).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(a.log_noise == doctest::Approx(b.log_noise));
}

TEST_CASE("htl init rejects empty and inconsistent registries") {
    SourceRegistry empty;
    CHECK_THROWS_AS(htl_init(empty), ArgumentError);

    Rng rng(62);
    SourceRegistry mixed;
    mixed.entries.push_back(bare_entry(rng, gktest::line_graph(4), "a"));
    mixed.entries.push_back(bare_entry(rng, gktest::line_graph(5), "b"));
    CHECK_THROWS_AS(htl_init(mixed), ValidationError);
}

TEST_CASE("mt training leaves the frozen sources untouched") {
    Rng rng(63);
    const GridCase gc = gktest::case30();
    const Topology base = base_topology(gc);

    SourceRegistry reg;
    for (int branch : {1, 5}) {
        const Topology cut = apply_outage(gc, base, {branch});
        reg.entries.push_back(
            bare_entry(rng, neighborhoods(gc, cut), cut.label));
    }
    const std::vector<FrozenSource> before = reg.frozen_sources();

    const Dataset ds = generate_dataset(
        gc, base, sample_injections(gc, 0.1, 20, 11), {4});
    TrainingSet data = training_set(ds, 4);
    TransferOptions opts;
    opts.fit.iters = 15;
    const GpModel model = train_mt(data, gc, base, reg, opts);

    const std::vector<FrozenSource> after = reg.frozen_sources();
    REQUIRE(after.size() == before.size());
    for (size_t i = 0; i < before.size(); ++i) {
        CHECK(after[i].log_tau == before[i].log_tau);
        CHECK(after[i].log_len == before[i].log_len);
        CHECK(after[i].label == before[i].label);
    }
    CHECK(model.spec.kind == KernelKind::mt_vdk);
}

TEST_CASE("mt hyperparameter vector has 2|N|+2 entries on the 30-bus case") {
    Rng rng(64);
    const GridCase gc = gktest::case30();
    const Topology base = base_topology(gc);
    SourceRegistry reg;
    reg.entries.push_back(
        bare_entry(rng, neighborhoods(gc, base), base.label));

    const Dataset ds = generate_dataset(
        gc, base, sample_injections(gc, 0.1, 15, 12), {4});
    TrainingSet data = training_set(ds, 4);
    TransferOptions opts;
    opts.fit.iters = 0;
    const GpModel model = train_mt(data, gc, base, reg, opts);
    CHECK(model.theta.total_param_count() == 2 * 30 + 2);

    // per-source weights add one omega per source instead
    SourceRegistry reg2 = reg;
    reg2.entries.push_back(bare_entry(
        rng, neighborhoods(gc, apply_outage(gc, base, {5})), "N-1:5"));
    TransferOptions per;
    per.fit.iters = 0;
    per.per_source_weights = true;
    const GpModel m2 = train_mt(data, gc, base, reg2, per);
    CHECK(m2.theta.log_weights.size() == 2);
    CHECK(m2.theta.total_param_count() == 2 * 30 + 3);
}

TEST_CASE("mt with zero source weight matches plain vdk") {
    Rng rng(65);
    const GridCase gc = gktest::case30();
    const Topology base = base_topology(gc);
    SourceRegistry reg;
    reg.entries.push_back(bare_entry(
        rng, neighborhoods(gc, apply_outage(gc, base, {7})), "N-1:7"));

    const Dataset ds = generate_dataset(
        gc, base, sample_injections(gc, 0.1, 20, 13), {4});
    TrainingSet data = training_set(ds, 4);

    TransferOptions opts;
    opts.fit.iters = 0;
    opts.omega_init = 1e-200; // effectively zero contribution
    const GpModel m_mt = train_mt(data, gc, base, reg, opts);

    // the plain model must start from the same hot-start point
    const KernelSpec vdk = make_vdk_spec(neighborhoods(gc, base));
    Hyperparameters th0 = htl_init(reg);
    FitOptions fo;
    fo.iters = 0;
    const GpModel m_vdk = fit(data, vdk, th0, fo);

    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::VectorXd s =
            sample_injections(gc, 0.1, 1, 400 + trial).samples[0].stacked();
        CHECK(std::abs(predict(m_mt, s).first - predict(m_vdk, s).first) <
              1e-10);
        CHECK(std::abs(predict(m_mt, s).second - predict(m_vdk, s).second) <
              1e-10);
    }
}

TEST_CASE("htl training seeds from the source average") {
    Rng rng(66);
    const GridCase gc = gktest::case30();
    const Topology base = base_topology(gc);
    SourceRegistry reg;
    for (int branch : {2, 6, 9}) {
        const Topology cut = apply_outage(gc, base, {branch});
        reg.entries.push_back(
            bare_entry(rng, neighborhoods(gc, cut), cut.label));
    }
    const Dataset ds = generate_dataset(
        gc, base, sample_injections(gc, 0.1, 15, 14), {4});
    TrainingSet data = training_set(ds, 4);
    TransferOptions opts;
    opts.fit.iters = 0;
    const GpModel model = train_htl(data, gc, base, reg, opts);
    const Hyperparameters avg = htl_init(reg);
    CHECK(model.theta.log_tau == avg.log_tau);
    CHECK(model.theta.log_len == avg.log_len);
    CHECK(model.spec.kind == KernelKind::vdk);
}

TEST_CASE("registry persists and reloads through a directory") {
    Rng rng(67);
    const NeighborhoodStructure nbr = gktest::line_graph(5);
    SourceRegistry reg;
    for (int i = 0; i < 3; ++i)
        reg.entries.push_back(
            trained_entry(rng, nbr, "N-1:" + std::to_string(10 + i)));

    const std::string dir = "registry_roundtrip";
    std::filesystem::remove_all(dir);
    persist_registry(reg, dir);
    const SourceRegistry loaded = load_registry(dir);
    std::filesystem::remove_all(dir);

    REQUIRE(loaded.entries.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(loaded.entries[i].label == reg.entries[i].label);
        CHECK((loaded.entries[i].theta.log_tau -
               reg.entries[i].theta.log_tau)
                  .cwiseAbs()
                  .maxCoeff() < 1e-15);
        CHECK(loaded.entries[i].spec.nbr.members ==
              reg.entries[i].spec.nbr.members);
    }
    CHECK(loaded.contains_label("N-1:11"));
    CHECK_FALSE(loaded.contains_label("N-1:99"));
}

TEST_CASE("corrupt registry file is reported by name") {
    const std::string dir = "registry_corrupt";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    std::ofstream(dir + "/bad_source.json") << "{not json";
    bool named = false;
    try {
        load_registry(dir);
    } catch (const IoError& e) {
        named = std::string(e.what()).find("bad_source.json") !=
                std::string::npos;
    }
    std::filesystem::remove_all(dir);
    CHECK(named);
}

TEST_CASE("loading a missing registry directory fails") {
    CHECK_THROWS_AS(load_registry("no_such_registry_dir"), IoError);
}

TEST_CASE("target factorization size is independent of source count") {
    Rng rng(68);
    const GridCase gc = gktest::case30();
    const Topology base = base_topology(gc);

    const Dataset ds = generate_dataset(
        gc, base, sample_injections(gc, 0.1, 24, 15), {4});
    TrainingSet data = training_set(ds, 4);

    auto largest_factorization = [&](int n_sources) {
        SourceRegistry reg;
        Rng local(700 + n_sources);
        for (int i = 0; i < n_sources; ++i) {
            const Topology cut = apply_outage(gc, base, {i + 1});
            reg.entries.push_back(
                bare_entry(local, neighborhoods(gc, cut), cut.label));
        }
        factorization_log().clear();
        factorization_tracking() = true;
        TransferOptions opts;
        opts.fit.iters = 5;
        (void)train_mt(data, gc, base, reg, opts);
        factorization_tracking() = false;
        int biggest = 0;
        for (int n : factorization_log()) biggest = std::max(biggest, n);
        return biggest;
    };

    const int with_one = largest_factorization(1);
    const int with_five = largest_factorization(5);
    CHECK(with_one == data.size());
    CHECK(with_five == data.size());
}
