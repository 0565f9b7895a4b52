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

#include <Eigen/Dense>

#include "gridkernel/common.hpp"
#include "gridkernel/netcase.hpp"

namespace gridkernel {

/// Kernel hyperparameters, stored in log-space. One (tau, len) pair per
/// sub-kernel: |N| pairs for a VDK, a single pair for a full SE kernel.
/// `log_weights` holds the MT source weight(s): empty for plain kernels,
/// one entry for the single-omega MT form, M_s entries for the
/// per-source-weight variant.
struct Hyperparameters {
    Eigen::VectorXd log_tau;
    Eigen::VectorXd log_len;
    double log_noise = -5.0;
    Eigen::VectorXd log_weights;

    int kernel_param_count() const {
        return static_cast<int>(log_tau.size() + log_len.size() +
                                log_weights.size());
    }
    /// Full trainable length, noise included (2|N|+2 for single-omega MT).
    int total_param_count() const { return kernel_param_count() + 1; }

    static Hyperparameters defaults(int n_sub, int n_weights = 0) {
        Hyperparameters h;
        h.log_tau = Eigen::VectorXd::Constant(n_sub, 1.0);
        h.log_len = Eigen::VectorXd::Constant(n_sub, 1.0);
        h.log_noise = -5.0;
        h.log_weights = Eigen::VectorXd::Zero(n_weights);
        return h;
    }
};

enum class KernelKind { full_se, vdk, mt_vdk };

/// A frozen source kernel: neighborhood structure plus the optimal
/// hyperparameters it was trained to. Never modified after construction.
struct FrozenSource {
    NeighborhoodStructure nbr;
    Eigen::VectorXd log_tau;
    Eigen::VectorXd log_len;
    std::string label;
};

struct KernelSpec {
    KernelKind kind = KernelKind::vdk;
    NeighborhoodStructure nbr; // target structure (vdk / mt_vdk)
    int input_dim = 0;
    std::vector<FrozenSource> sources; // mt_vdk only
    bool per_source_weights = false;

    int n_sub() const {
        return kind == KernelKind::full_se ? 1 : nbr.n_node();
    }
    int n_weights() const {
        if (kind != KernelKind::mt_vdk) return 0;
        return per_source_weights ? static_cast<int>(sources.size()) : 1;
    }
};

inline KernelSpec make_full_se_spec(int input_dim) {
    KernelSpec s;
    s.kind = KernelKind::full_se;
    s.input_dim = input_dim;
    return s;
}

inline KernelSpec make_vdk_spec(const NeighborhoodStructure& nbr) {
    KernelSpec s;
    s.kind = KernelKind::vdk;
    s.nbr = nbr;
    s.input_dim = 2 * nbr.n_node();
    return s;
}

inline KernelSpec make_mt_vdk_spec(const NeighborhoodStructure& target,
                                   std::vector<FrozenSource> sources,
                                   bool per_source_weights = false) {
    KernelSpec s;
    s.kind = KernelKind::mt_vdk;
    s.nbr = target;
    s.input_dim = 2 * target.n_node();
    s.sources = std::move(sources);
    s.per_source_weights = per_source_weights;
    return s;
}

/// Squared-exponential kernel: tau^2 exp(-||x-x'||^2 / 2 len^2).
inline double se_eval(const Eigen::VectorXd& x, const Eigen::VectorXd& xp,
                      double tau, double len) {
    if (x.size() != xp.size())
        throw ArgumentError("se_eval: dimension mismatch");
    const double d2 = (x - xp).squaredNorm();
    return tau * tau * std::exp(-d2 / (2.0 * len * len));
}

namespace detail {

inline double sub_sqdist(const Eigen::VectorXd& s, const Eigen::VectorXd& sp,
                         const std::vector<int>& coords) {
    double d2 = 0.0;
    for (int c : coords) {
        const double d = s[c] - sp[c];
        d2 += d * d;
    }
    return d2;
}

inline double vdk_eval_logs(const Eigen::VectorXd& s, const Eigen::VectorXd& sp,
                            const NeighborhoodStructure& nbr,
                            const Eigen::VectorXd& log_tau,
                            const Eigen::VectorXd& log_len) {
    double k = 0.0;
    for (int n = 0; n < nbr.n_node(); ++n) {
        const double tau2 = std::exp(2.0 * log_tau[n]);
        const double len2 = std::exp(2.0 * log_len[n]);
        k += tau2 * std::exp(-sub_sqdist(s, sp, nbr.coord_indices[n]) /
                             (2.0 * len2));
    }
    return k;
}

} // namespace detail

/// Additive vertex-degree kernel: one SE sub-kernel per node, each acting
/// only on that node's neighborhood injection coordinates.
inline double vdk_eval(const Eigen::VectorXd& s, const Eigen::VectorXd& sp,
                       const NeighborhoodStructure& nbr,
                       const Hyperparameters& theta) {
    if (theta.log_tau.size() != nbr.n_node())
        throw ArgumentError("vdk_eval: hyperparameter count does not match "
                            "neighborhood structure");
    return detail::vdk_eval_logs(s, sp, nbr, theta.log_tau, theta.log_len);
}

/// Target VDK plus weighted frozen source VDKs.
inline double mt_vdk_eval(const Eigen::VectorXd& s, const Eigen::VectorXd& sp,
                          const KernelSpec& spec,
                          const Hyperparameters& theta) {
    double k = detail::vdk_eval_logs(s, sp, spec.nbr, theta.log_tau,
                                     theta.log_len);
    for (size_t m = 0; m < spec.sources.size(); ++m) {
        const double lw = spec.per_source_weights
                              ? theta.log_weights[static_cast<int>(m)]
                              : theta.log_weights[0];
        const double w = std::exp(lw);
        k += w * detail::vdk_eval_logs(s, sp, spec.sources[m].nbr,
                                       spec.sources[m].log_tau,
                                       spec.sources[m].log_len);
    }
    return k;
}

/// k(s, s') for any spec kind.
inline double kernel_eval(const Eigen::VectorXd& s, const Eigen::VectorXd& sp,
                          const KernelSpec& spec,
                          const Hyperparameters& theta) {
    switch (spec.kind) {
        case KernelKind::full_se:
            return se_eval(s, sp, std::exp(theta.log_tau[0]),
                           std::exp(theta.log_len[0]));
        case KernelKind::vdk:
            return vdk_eval(s, sp, spec.nbr, theta);
        case KernelKind::mt_vdk:
            return mt_vdk_eval(s, sp, spec, theta);
    }
    throw ArgumentError("unknown kernel kind");
}

/// Precomputed per-sub-kernel squared distances for one design matrix.
/// Distances are hyperparameter-free, so they are built once per training
/// set and reused across every optimizer iteration; the frozen-source Gram
/// is constant too (up to the omega factor) and cached here.
struct GramContext {
    std::vector<Eigen::MatrixXd> sqdist;       // one per target sub-kernel
    std::vector<Eigen::MatrixXd> source_grams; // one per frozen source
    int n = 0;

    static GramContext build(const Eigen::MatrixXd& X, const KernelSpec& spec) {
        GramContext ctx;
        ctx.n = static_cast<int>(X.rows());
        auto pairwise = [&](const std::vector<int>& coords) {
            Eigen::MatrixXd sub(ctx.n, static_cast<int>(coords.size()));
            for (size_t c = 0; c < coords.size(); ++c)
                sub.col(static_cast<int>(c)) = X.col(coords[c]);
            const Eigen::VectorXd sq = sub.rowwise().squaredNorm();
            Eigen::MatrixXd d2 = sq.replicate(1, ctx.n) +
                                 sq.transpose().replicate(ctx.n, 1) -
                                 2.0 * sub * sub.transpose();
            return d2.cwiseMax(0.0).eval();
        };

        if (spec.kind == KernelKind::full_se) {
            std::vector<int> all(X.cols());
            for (int c = 0; c < X.cols(); ++c) all[c] = c;
            ctx.sqdist.push_back(pairwise(all));
        } else {
            for (int node = 0; node < spec.nbr.n_node(); ++node)
                ctx.sqdist.push_back(pairwise(spec.nbr.coord_indices[node]));
        }
        for (const auto& src : spec.sources) {
            Eigen::MatrixXd Ks = Eigen::MatrixXd::Zero(ctx.n, ctx.n);
            for (int node = 0; node < src.nbr.n_node(); ++node) {
                const double tau2 = std::exp(2.0 * src.log_tau[node]);
                const double len2 = std::exp(2.0 * src.log_len[node]);
                Ks += tau2 * (-pairwise(src.nbr.coord_indices[node]) /
                              (2.0 * len2))
                                 .array()
                                 .exp()
                                 .matrix();
            }
            ctx.source_grams.push_back(std::move(Ks));
        }
        return ctx;
    }

    /// Gram matrix at the given hyperparameters.
    Eigen::MatrixXd gram(const KernelSpec& spec,
                         const Hyperparameters& theta) const {
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
        for (size_t i = 0; i < sqdist.size(); ++i) {
            const double tau2 = std::exp(2.0 * theta.log_tau[static_cast<int>(i)]);
            const double len2 = std::exp(2.0 * theta.log_len[static_cast<int>(i)]);
            K += tau2 *
                 (-sqdist[i] / (2.0 * len2)).array().exp().matrix();
        }
        for (size_t m = 0; m < source_grams.size(); ++m) {
            const double lw = spec.per_source_weights
                                  ? theta.log_weights[static_cast<int>(m)]
                                  : theta.log_weights[0];
            K += std::exp(lw) * source_grams[m];
        }
        return K;
    }
};

/// Dense cross-Gram K[i][j] = k(s1_i, s2_j). Empty inputs yield an empty
/// matrix.
inline Eigen::MatrixXd gram(const Eigen::MatrixXd& X1,
                            const Eigen::MatrixXd& X2, const KernelSpec& spec,
                            const Hyperparameters& theta) {
    Eigen::MatrixXd K(X1.rows(), X2.rows());
    for (Eigen::Index i = 0; i < X1.rows(); ++i)
        for (Eigen::Index j = 0; j < X2.rows(); ++j)
            K(i, j) = kernel_eval(X1.row(i), X2.row(j), spec, theta);
    return K;
}

/// Gram derivatives with respect to each log kernel hyperparameter, in
/// packing order [log tau..., log len..., log omega...]. Frozen source
/// hyperparameters contribute no entries; the noise derivative lives with
/// the GP marginal likelihood.
inline std::vector<Eigen::MatrixXd> gram_grad(const Eigen::MatrixXd& X,
                                              const KernelSpec& spec,
                                              const Hyperparameters& theta) {
    if (X.rows() == 0) throw ArgumentError("gram_grad: empty sample set");
    const GramContext ctx = GramContext::build(X, spec);
    std::vector<Eigen::MatrixXd> grads;
    const int nsub = static_cast<int>(ctx.sqdist.size());
    std::vector<Eigen::MatrixXd> subgram(nsub);
    for (int i = 0; i < nsub; ++i) {
        const double tau2 = std::exp(2.0 * theta.log_tau[i]);
        const double len2 = std::exp(2.0 * theta.log_len[i]);
        subgram[i] =
            tau2 * (-ctx.sqdist[i] / (2.0 * len2)).array().exp().matrix();
    }
    for (int i = 0; i < nsub; ++i) grads.push_back(2.0 * subgram[i]);
    for (int i = 0; i < nsub; ++i) {
        const double len2 = std::exp(2.0 * theta.log_len[i]);
        grads.push_back(subgram[i].cwiseProduct(ctx.sqdist[i]) / len2);
    }
    if (spec.kind == KernelKind::mt_vdk) {
        if (spec.per_source_weights) {
            for (size_t m = 0; m < ctx.source_grams.size(); ++m)
                grads.push_back(std::exp(theta.log_weights[static_cast<int>(m)]) *
                                ctx.source_grams[m]);
        } else {
            Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(ctx.n, ctx.n);
            for (const auto& Ks : ctx.source_grams) sum += Ks;
            grads.push_back(std::exp(theta.log_weights[0]) * sum);
        }
    }
    return grads;
}

/// Per-coordinate affine input scaling fitted on the training set.
/// Zero-variance coordinates are passed through untouched.
struct Standardization {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    static Standardization fit(const Eigen::MatrixXd& X) {
        Standardization st;
        st.mean = X.colwise().mean();
        st.scale.resize(X.cols());
        for (Eigen::Index c = 0; c < X.cols(); ++c) {
            const double var =
                (X.col(c).array() - st.mean[c]).square().mean();
            const double sd = std::sqrt(var);
            if (sd > 1e-12) {
                st.scale[c] = sd;
            } else {
                st.mean[c] = 0.0; // pass-through
                st.scale[c] = 1.0;
            }
        }
        return st;
    }

    Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const {
        return (X.rowwise() - mean.transpose()).array().rowwise() /
               scale.transpose().array();
    }

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
        return (x - mean).cwiseQuotient(scale);
    }
};

} // namespace gridkernel
