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
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "gridkernel/common.hpp"
#include "gridkernel/kernels.hpp"

namespace gridkernel {

/// Sizes of every Cholesky factorization performed, recorded when enabled.
/// Test hook for the training-cost separation property (target fits must
/// never factorize source-sized systems).
inline std::vector<int>& factorization_log() {
    static std::vector<int> log;
    return log;
}
inline bool& factorization_tracking() {
    static bool enabled = false;
    return enabled;
}

struct TrainingSet {
    Eigen::MatrixXd inputs; // N_s x 2|N|, raw (unstandardized)
    Eigen::VectorXd targets; // voltage pu
    int target_node = 0;     // declared bus id
    std::string topology_label = "base";

    int size() const { return static_cast<int>(targets.size()); }
};

inline TrainingSet training_set(const Dataset& ds, int node) {
    for (size_t t = 0; t < ds.target_nodes.size(); ++t) {
        if (ds.target_nodes[t] != node) continue;
        TrainingSet set;
        set.inputs = ds.inputs;
        set.targets = ds.voltages.col(static_cast<Eigen::Index>(t));
        set.target_node = node;
        set.topology_label = ds.topology_label;
        return set;
    }
    throw ArgumentError("dataset has no column for node " +
                        std::to_string(node));
}

namespace detail {

/// Flat optimizer vector: [log tau..., log len..., log omega..., log noise].
inline Eigen::VectorXd pack(const Hyperparameters& h) {
    Eigen::VectorXd v(h.total_param_count());
    int o = 0;
    v.segment(o, h.log_tau.size()) = h.log_tau;
    o += static_cast<int>(h.log_tau.size());
    v.segment(o, h.log_len.size()) = h.log_len;
    o += static_cast<int>(h.log_len.size());
    v.segment(o, h.log_weights.size()) = h.log_weights;
    o += static_cast<int>(h.log_weights.size());
    v[o] = h.log_noise;
    return v;
}

inline Hyperparameters unpack(const Eigen::VectorXd& v,
                              const Hyperparameters& like) {
    Hyperparameters h = like;
    int o = 0;
    h.log_tau = v.segment(o, like.log_tau.size());
    o += static_cast<int>(like.log_tau.size());
    h.log_len = v.segment(o, like.log_len.size());
    o += static_cast<int>(like.log_len.size());
    h.log_weights = v.segment(o, like.log_weights.size());
    o += static_cast<int>(like.log_weights.size());
    h.log_noise = v[o];
    return h;
}

struct CholResult {
    Eigen::MatrixXd L;
    double jitter = 0.0;
};

/// Cholesky with escalating jitter: start at 1e-10, grow x10, at most six
/// escalations.
inline CholResult robust_cholesky(const Eigen::MatrixXd& A) {
    if (factorization_tracking())
        factorization_log().push_back(static_cast<int>(A.rows()));
    double jitter = 0.0;
    for (int attempt = 0; attempt <= 6; ++attempt) {
        Eigen::MatrixXd M = A;
        if (jitter > 0.0)
            M += jitter * Eigen::MatrixXd::Identity(A.rows(), A.cols());
        Eigen::LLT<Eigen::MatrixXd> llt(M);
        if (llt.info() == Eigen::Success)
            return {llt.matrixL(), jitter};
        jitter = (jitter == 0.0) ? 1e-10 : jitter * 10.0;
    }
    throw ConditioningError("Cholesky failed after max jitter escalation");
}

} // namespace detail

struct LmlResult {
    double value = 0.0;
    Eigen::VectorXd grad; // per flat log-hyperparameter, noise last
};

/// Log marginal likelihood and its analytic gradient:
///   L = -1/2 y'a - 1/2 log det(K + sn^2 I) - N/2 log 2pi
///   dL/dt_k = 1/2 tr((aa' - A) dK/dt_k),  A = (K + sn^2 I)^{-1}
/// `y` must already be centered by the caller.
inline LmlResult log_marginal_likelihood(const Hyperparameters& theta,
                                         const Eigen::MatrixXd& Xstd,
                                         const Eigen::VectorXd& y,
                                         const KernelSpec& spec,
                                         const GramContext& ctx) {
    const int n = static_cast<int>(y.size());
    const double sn2 = std::exp(2.0 * theta.log_noise);
    Eigen::MatrixXd K = ctx.gram(spec, theta);
    K.diagonal().array() += sn2;

    const auto chol = detail::robust_cholesky(K);
    const Eigen::MatrixXd& L = chol.L;
    const Eigen::VectorXd alpha =
        L.transpose().triangularView<Eigen::Upper>().solve(
            L.triangularView<Eigen::Lower>().solve(y));

    double logdet = 0.0;
    for (int i = 0; i < n; ++i) logdet += 2.0 * std::log(L(i, i));

    LmlResult res;
    res.value = -0.5 * y.dot(alpha) - 0.5 * logdet -
                0.5 * n * std::log(2.0 * M_PI);

    // W = alpha alpha' - K^{-1}; gradient is 1/2 <W, dK/dtheta>
    Eigen::MatrixXd Kinv =
        L.transpose().triangularView<Eigen::Upper>().solve(
            L.triangularView<Eigen::Lower>().solve(
                Eigen::MatrixXd::Identity(n, n)));
    Eigen::MatrixXd W = alpha * alpha.transpose() - Kinv;

    res.grad.resize(theta.total_param_count());
    int g = 0;
    const int nsub = static_cast<int>(ctx.sqdist.size());
    std::vector<Eigen::MatrixXd> subgram(nsub);
    for (int i = 0; i < nsub; ++i) {
        const double tau2 = std::exp(2.0 * theta.log_tau[i]);
        const double len2 = std::exp(2.0 * theta.log_len[i]);
        subgram[i] =
            tau2 * (-ctx.sqdist[i] / (2.0 * len2)).array().exp().matrix();
    }
    for (int i = 0; i < nsub; ++i)
        res.grad[g++] = 0.5 * W.cwiseProduct(2.0 * subgram[i]).sum();
    for (int i = 0; i < nsub; ++i) {
        const double len2 = std::exp(2.0 * theta.log_len[i]);
        res.grad[g++] =
            0.5 * W.cwiseProduct(subgram[i].cwiseProduct(ctx.sqdist[i]) / len2)
                      .sum();
    }
    if (spec.kind == KernelKind::mt_vdk) {
        if (spec.per_source_weights) {
            for (size_t m = 0; m < ctx.source_grams.size(); ++m)
                res.grad[g++] =
                    0.5 * std::exp(theta.log_weights[static_cast<int>(m)]) *
                    W.cwiseProduct(ctx.source_grams[m]).sum();
        } else {
            Eigen::MatrixXd sum =
                Eigen::MatrixXd::Zero(ctx.n, ctx.n);
            for (const auto& Ks : ctx.source_grams) sum += Ks;
            res.grad[g++] =
                0.5 * std::exp(theta.log_weights[0]) * W.cwiseProduct(sum).sum();
        }
    }
    // dK/dlog sn = 2 sn^2 I
    res.grad[g++] = 0.5 * 2.0 * sn2 * W.trace();
    return res;
}

/// Convenience overload on a raw training set (standardizes internally).
inline LmlResult log_marginal_likelihood(const Hyperparameters& theta,
                                         const TrainingSet& data,
                                         const KernelSpec& spec) {
    const Standardization st = Standardization::fit(data.inputs);
    const Eigen::MatrixXd Xstd = st.apply(data.inputs);
    const Eigen::VectorXd y =
        data.targets.array() - data.targets.mean();
    const GramContext ctx = GramContext::build(Xstd, spec);
    return log_marginal_likelihood(theta, Xstd, y, spec, ctx);
}

struct FitOptions {
    int iters = 50;
    double learning_rate = 0.05; // log-space Adam step
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct GpModel {
    KernelSpec spec;
    Hyperparameters theta;
    Eigen::MatrixXd x_train; // raw inputs
    Eigen::VectorXd y_train; // raw targets
    Standardization standardization;
    double y_mean = 0.0;
    Eigen::MatrixXd chol_L;
    Eigen::VectorXd alpha;
    double jitter = 0.0;
    double lml = 0.0;
    std::vector<double> lml_trace;
    long solve_count = 0; // power-flow solves consumed building the data
    std::string label;
    int target_node = 0;
};

namespace detail {

inline void factorize_model(GpModel& model) {
    const Eigen::MatrixXd Xstd = model.standardization.apply(model.x_train);
    const GramContext ctx = GramContext::build(Xstd, model.spec);
    Eigen::MatrixXd K = ctx.gram(model.spec, model.theta);
    K.diagonal().array() += std::exp(2.0 * model.theta.log_noise);
    const auto chol = robust_cholesky(K);
    model.chol_L = chol.L;
    model.jitter = chol.jitter;
    const Eigen::VectorXd y = model.y_train.array() - model.y_mean;
    model.alpha =
        model.chol_L.transpose().triangularView<Eigen::Upper>().solve(
            model.chol_L.triangularView<Eigen::Lower>().solve(y));
}

} // namespace detail

/// Fixed-budget Adam ascent on the log marginal likelihood, returning the
/// best iterate. Deterministic: no randomness enters the optimizer.
inline GpModel fit(const TrainingSet& data, const KernelSpec& spec,
                   const Hyperparameters& theta0, const FitOptions& opts = {}) {
    if (data.size() < 2 && opts.iters > 0)
        throw ArgumentError("fit requires at least two training samples");
    if (data.size() < 1) throw ArgumentError("fit requires training data");

    GpModel model;
    model.spec = spec;
    model.x_train = data.inputs;
    model.y_train = data.targets;
    model.standardization = Standardization::fit(data.inputs);
    model.y_mean = data.targets.mean();
    model.label = data.topology_label;
    model.target_node = data.target_node;

    const Eigen::MatrixXd Xstd = model.standardization.apply(data.inputs);
    const Eigen::VectorXd y = data.targets.array() - model.y_mean;
    const GramContext ctx = GramContext::build(Xstd, spec);

    Eigen::VectorXd x = detail::pack(theta0);
    Eigen::VectorXd best_x = x;
    double best_lml = -std::numeric_limits<double>::infinity();

    Eigen::VectorXd m = Eigen::VectorXd::Zero(x.size());
    Eigen::VectorXd v = Eigen::VectorXd::Zero(x.size());
    for (int it = 0; it < opts.iters; ++it) {
        const Hyperparameters th = detail::unpack(x, theta0);
        const LmlResult r = log_marginal_likelihood(th, Xstd, y, spec, ctx);
        if (it == 0 && !std::isfinite(r.value))
            throw ConditioningError(
                "non-finite log marginal likelihood at initial "
                "hyperparameters");
        model.lml_trace.push_back(r.value);
        if (r.value > best_lml) {
            best_lml = r.value;
            best_x = x;
        }
        m = opts.beta1 * m + (1.0 - opts.beta1) * r.grad;
        v = opts.beta2 * v +
            (1.0 - opts.beta2) * r.grad.cwiseProduct(r.grad);
        const double bc1 = 1.0 - std::pow(opts.beta1, it + 1);
        const double bc2 = 1.0 - std::pow(opts.beta2, it + 1);
        const Eigen::VectorXd mhat = m / bc1;
        const Eigen::VectorXd vhat = v / bc2;
        x += opts.learning_rate *
             (mhat.array() / (vhat.array().sqrt() + opts.eps)).matrix();
    }

    model.theta = detail::unpack(opts.iters > 0 ? best_x : x, theta0);
    if (opts.iters == 0) {
        const LmlResult r =
            log_marginal_likelihood(model.theta, Xstd, y, spec, ctx);
        best_lml = r.value;
        model.lml_trace.push_back(r.value);
    }
    model.lml = best_lml;
    detail::factorize_model(model);
    return model;
}

/// Predictive mean and variance via two triangular solves against the
/// stored factor. Variance is clamped at zero.
inline std::pair<double, double> predict(const GpModel& model,
                                         const Eigen::VectorXd& s) {
    if (s.size() != model.x_train.cols())
        throw ArgumentError("predict: input dimension mismatch");
    const Eigen::VectorXd sstd = model.standardization.apply(s);
    const Eigen::MatrixXd Xstd = model.standardization.apply(model.x_train);
    const int n = static_cast<int>(model.x_train.rows());
    Eigen::VectorXd k(n);
    for (int i = 0; i < n; ++i)
        k[i] = kernel_eval(sstd, Xstd.row(i).transpose(), model.spec,
                           model.theta);
    const double mu = k.dot(model.alpha) + model.y_mean;
    const Eigen::VectorXd z =
        model.chol_L.triangularView<Eigen::Lower>().solve(k);
    const double kss = kernel_eval(sstd, sstd, model.spec, model.theta);
    double var = kss - z.squaredNorm();
    if (var < 0.0) var = 0.0;
    return {mu, var};
}

/// Mean absolute prediction error over a test set, pu.
inline double mae(const GpModel& model, const TrainingSet& test) {
    if (test.size() == 0) throw ArgumentError("mae: empty test set");
    double acc = 0.0;
    for (int i = 0; i < test.size(); ++i) {
        const auto [mu, var] = predict(model, test.inputs.row(i).transpose());
        (void)var;
        acc += std::abs(mu - test.targets[i]);
    }
    return acc / test.size();
}

// ---- model serialization ----

namespace detail {

inline nlohmann::json nbr_to_json(const NeighborhoodStructure& nbr) {
    return nlohmann::json{{"members", nbr.members}};
}

inline NeighborhoodStructure nbr_from_json(const nlohmann::json& j) {
    NeighborhoodStructure nbr;
    nbr.members = j.at("members").get<std::vector<std::vector<int>>>();
    nbr.coord_indices.resize(nbr.members.size());
    for (size_t i = 0; i < nbr.members.size(); ++i)
        for (int node : nbr.members[i]) {
            nbr.coord_indices[i].push_back(2 * node);
            nbr.coord_indices[i].push_back(2 * node + 1);
        }
    return nbr;
}

inline std::vector<double> vec_to_std(const Eigen::VectorXd& v) {
    return {v.data(), v.data() + v.size()};
}

inline Eigen::VectorXd vec_from_std(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                             static_cast<Eigen::Index>(v.size()));
}

} // namespace detail

inline nlohmann::json model_to_json(const GpModel& model) {
    nlohmann::json j;
    switch (model.spec.kind) {
        case KernelKind::full_se: j["kind"] = "full_se"; break;
        case KernelKind::vdk: j["kind"] = "vdk"; break;
        case KernelKind::mt_vdk: j["kind"] = "mt_vdk"; break;
    }
    j["input_dim"] = model.spec.input_dim;
    if (model.spec.kind != KernelKind::full_se)
        j["neighborhoods"] = detail::nbr_to_json(model.spec.nbr);
    j["per_source_weights"] = model.spec.per_source_weights;
    nlohmann::json srcs = nlohmann::json::array();
    for (const auto& s : model.spec.sources)
        srcs.push_back({{"neighborhoods", detail::nbr_to_json(s.nbr)},
                        {"log_tau", detail::vec_to_std(s.log_tau)},
                        {"log_len", detail::vec_to_std(s.log_len)},
                        {"label", s.label}});
    j["sources"] = srcs;
    j["log_tau"] = detail::vec_to_std(model.theta.log_tau);
    j["log_len"] = detail::vec_to_std(model.theta.log_len);
    j["log_noise"] = model.theta.log_noise;
    j["log_weights"] = detail::vec_to_std(model.theta.log_weights);

    std::vector<std::vector<double>> xs;
    for (Eigen::Index i = 0; i < model.x_train.rows(); ++i) {
        Eigen::VectorXd row = model.x_train.row(i);
        xs.push_back(detail::vec_to_std(row));
    }
    j["x_train"] = xs;
    j["y_train"] = detail::vec_to_std(model.y_train);
    j["standardization"] = {
        {"mean", detail::vec_to_std(model.standardization.mean)},
        {"scale", detail::vec_to_std(model.standardization.scale)}};
    j["y_mean"] = model.y_mean;
    j["lml"] = model.lml;
    j["solve_count"] = model.solve_count;
    j["label"] = model.label;
    j["target_node"] = model.target_node;
    return j;
}

inline GpModel model_from_json(const nlohmann::json& j) {
    GpModel model;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "full_se") model.spec.kind = KernelKind::full_se;
    else if (kind == "vdk") model.spec.kind = KernelKind::vdk;
    else if (kind == "mt_vdk") model.spec.kind = KernelKind::mt_vdk;
    else throw IoError("model JSON: unknown kernel kind '" + kind + "'");
    model.spec.input_dim = j.at("input_dim").get<int>();
    if (model.spec.kind != KernelKind::full_se)
        model.spec.nbr = detail::nbr_from_json(j.at("neighborhoods"));
    model.spec.per_source_weights = j.value("per_source_weights", false);
    for (const auto& js : j.at("sources")) {
        FrozenSource s;
        s.nbr = detail::nbr_from_json(js.at("neighborhoods"));
        s.log_tau = detail::vec_from_std(js.at("log_tau"));
        s.log_len = detail::vec_from_std(js.at("log_len"));
        s.label = js.value("label", "");
        model.spec.sources.push_back(std::move(s));
    }
    model.theta.log_tau = detail::vec_from_std(j.at("log_tau"));
    model.theta.log_len = detail::vec_from_std(j.at("log_len"));
    model.theta.log_noise = j.at("log_noise").get<double>();
    model.theta.log_weights = detail::vec_from_std(j.at("log_weights"));

    const auto xs = j.at("x_train").get<std::vector<std::vector<double>>>();
    const auto ys = j.at("y_train").get<std::vector<double>>();
    if (xs.size() != ys.size())
        throw IoError("model JSON: x_train/y_train length mismatch");
    model.x_train.resize(static_cast<Eigen::Index>(xs.size()),
                         xs.empty() ? 0 : static_cast<Eigen::Index>(xs[0].size()));
    for (size_t i = 0; i < xs.size(); ++i)
        model.x_train.row(static_cast<Eigen::Index>(i)) =
            detail::vec_from_std(xs[i]).transpose();
    model.y_train = detail::vec_from_std(ys);
    model.standardization.mean =
        detail::vec_from_std(j.at("standardization").at("mean"));
    model.standardization.scale =
        detail::vec_from_std(j.at("standardization").at("scale"));
    model.y_mean = j.at("y_mean").get<double>();
    model.lml = j.at("lml").get<double>();
    model.solve_count = j.value("solve_count", 0L);
    model.label = j.value("label", "");
    model.target_node = j.value("target_node", 0);
    detail::factorize_model(model);
    return model;
}

inline void save_model(const GpModel& model, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write model file: " + path);
    f << model_to_json(model).dump(2) << '\n';
}

inline GpModel load_model(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open model file: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("corrupt model file " + path + ": " + e.what());
    }
    try {
        return model_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("corrupt model file " + path + ": " + e.what());
    }
}

} // namespace gridkernel
