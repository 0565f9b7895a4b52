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

#include <cmath>
#include <string>
#include <vector>

#include "gridkernel/acpf.hpp"
#include "gridkernel/common.hpp"
#include "gridkernel/gpr.hpp"

namespace gridkernel {

struct PveConfig {
    double epsilon = 0.02; // accepted violation probability
    double delta = 1e-4;   // confidence complement
    double kappa = 3.75;   // predictive std-dev multiplier
    int T = 1000;          // evaluation sample count
};

struct Envelope {
    int node = 0;
    std::string topology_label;
    double beta_lower = 0.0;
    double beta_upper = 0.0;
    PveConfig config;
    double adjusted_conf = 0.0;
    long train_solves = 0;
};

/// Smallest T with T >= ln(1/delta) / ln(1/(1 - eps/2)), clamped to >= 1.
inline int required_samples(double epsilon, double delta) {
    if (epsilon <= 0.0 || epsilon >= 1.0)
        throw ArgumentError("epsilon must be in (0, 1)");
    if (delta <= 0.0 || delta >= 1.0)
        throw ArgumentError("delta must be in (0, 1)");
    const double t = std::log(1.0 / delta) / std::log(1.0 / (1.0 - epsilon / 2.0));
    const int T = static_cast<int>(std::ceil(t));
    return T < 1 ? 1 : T;
}

/// Violation probability implied by a given sample count: the inverse of
/// the worst-case bound, eps = 2 (1 - exp(-ln(1/delta)/T)).
inline double implied_epsilon(int T, double delta) {
    if (T < 1) throw ArgumentError("T must be >= 1");
    if (delta <= 0.0 || delta >= 1.0)
        throw ArgumentError("delta must be in (0, 1)");
    return 2.0 * (1.0 - std::exp(-std::log(1.0 / delta) / T));
}

/// Standard normal upper-tail probability 1 - Phi(kappa).
inline double gamma_tail(double kappa) {
    if (kappa < 0.0) throw ArgumentError("kappa must be non-negative");
    return 0.5 * std::erfc(kappa / std::sqrt(2.0));
}

/// Confidence after discounting for GP approximation error:
/// (1 - delta) (1 - gamma(kappa))^T.
inline double adjusted_confidence(double delta, double kappa, int T) {
    if (delta <= 0.0 || delta >= 1.0)
        throw ArgumentError("delta must be in (0, 1)");
    if (T < 0) throw ArgumentError("T must be non-negative");
    return (1.0 - delta) * std::pow(1.0 - gamma_tail(kappa), T);
}

/// Envelope boundaries over evaluation samples:
///   beta_upper = max_i mu(s_i) + kappa sigma(s_i)
///   beta_lower = min_i mu(s_i) - kappa sigma(s_i)
/// Pure model evaluation; consumes no power-flow solves.
inline std::pair<double, double> estimate_beta(const GpModel& model,
                                               const SampleSet& eval_samples,
                                               double kappa) {
    if (eval_samples.samples.empty())
        throw ArgumentError("estimate_beta: empty evaluation set");
    double upper = -std::numeric_limits<double>::infinity();
    double lower = std::numeric_limits<double>::infinity();
    for (const auto& inj : eval_samples.samples) {
        const auto [mu, var] = predict(model, inj.stacked());
        const double sigma = std::sqrt(var);
        upper = std::max(upper, mu + kappa * sigma);
        lower = std::min(lower, mu - kappa * sigma);
    }
    return {upper, lower};
}

/// One envelope per model, each over T fresh evaluation draws from the
/// load hypercube. Evaluation streams are derived from (seed, label, node)
/// so runs are reproducible and independent of training draws.
inline std::vector<Envelope> build_envelopes(const std::vector<GpModel>& models,
                                             const GridCase& gc,
                                             double fraction,
                                             const PveConfig& config,
                                             std::uint64_t seed) {
    if (config.epsilon <= 0.0 || config.epsilon >= 1.0 ||
        config.delta <= 0.0 || config.delta >= 1.0 || config.kappa < 0.0 ||
        config.T < 1)
        throw ArgumentError("invalid PVE configuration");
    std::vector<Envelope> envelopes;
    for (const auto& model : models) {
        const std::uint64_t stream = derive_seed(
            seed, "pve:" + model.label + ":" + std::to_string(model.target_node));
        const SampleSet evals =
            sample_injections(gc, fraction, config.T, stream);
        const auto [upper, lower] = estimate_beta(model, evals, config.kappa);
        Envelope env;
        env.node = model.target_node;
        env.topology_label = model.label;
        env.beta_upper = upper;
        env.beta_lower = lower;
        env.config = config;
        env.adjusted_conf =
            adjusted_confidence(config.delta, config.kappa, config.T);
        env.train_solves = model.solve_count;
        envelopes.push_back(std::move(env));
    }
    return envelopes;
}

} // namespace gridkernel
