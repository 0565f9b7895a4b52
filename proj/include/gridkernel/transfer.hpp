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

#include <filesystem>
#include <string>
#include <vector>

#include "gridkernel/common.hpp"
#include "gridkernel/gpr.hpp"

namespace gridkernel {

/// Read-only collection of trained source models for one target node.
struct SourceRegistry {
    std::vector<GpModel> entries;
    std::uint64_t case_hash = 0;

    int size() const { return static_cast<int>(entries.size()); }

    bool contains_label(const std::string& label) const {
        for (const auto& m : entries)
            if (m.label == label) return true;
        return false;
    }

    std::vector<FrozenSource> frozen_sources() const {
        std::vector<FrozenSource> srcs;
        for (const auto& m : entries) {
            FrozenSource s;
            s.nbr = m.spec.nbr;
            s.log_tau = m.theta.log_tau;
            s.log_len = m.theta.log_len;
            s.label = m.label;
            srcs.push_back(std::move(s));
        }
        return srcs;
    }
};

/// Hyperparameter hot start: coordinate-wise average of source kernel
/// optima (amplitudes and lengthscales). The average is taken in log-space
/// (geometric mean of raw values), matching the domain the optimizer works
/// in; set `raw_average` for the arithmetic-mean alternative. The noise
/// term is a likelihood parameter, not a kernel hyperparameter, so it is
/// not transferred: it restarts from the cold-start default.
inline Hyperparameters htl_init(const SourceRegistry& registry,
                                bool raw_average = false) {
    if (registry.size() == 0)
        throw ArgumentError("htl_init: empty source registry");
    const auto& first = registry.entries.front().theta;
    for (const auto& m : registry.entries)
        if (m.theta.log_tau.size() != first.log_tau.size() ||
            m.theta.log_len.size() != first.log_len.size())
            throw ValidationError(
                "source registry mixes hyperparameter lengths");

    Hyperparameters avg;
    avg.log_tau = Eigen::VectorXd::Zero(first.log_tau.size());
    avg.log_len = Eigen::VectorXd::Zero(first.log_len.size());
    avg.log_noise = 0.0;
    avg.log_weights = Eigen::VectorXd::Zero(0);
    const double ms = registry.size();
    if (raw_average) {
        Eigen::VectorXd tau = Eigen::VectorXd::Zero(first.log_tau.size());
        Eigen::VectorXd len = Eigen::VectorXd::Zero(first.log_len.size());
        for (const auto& m : registry.entries) {
            tau += m.theta.log_tau.array().exp().matrix();
            len += m.theta.log_len.array().exp().matrix();
        }
        avg.log_tau = (tau / ms).array().log();
        avg.log_len = (len / ms).array().log();
    } else {
        for (const auto& m : registry.entries) {
            avg.log_tau += m.theta.log_tau;
            avg.log_len += m.theta.log_len;
        }
        avg.log_tau /= ms;
        avg.log_len /= ms;
    }
    avg.log_noise =
        Hyperparameters::defaults(static_cast<int>(first.log_tau.size()))
            .log_noise;
    return avg;
}

struct TransferOptions {
    FitOptions fit;
    bool raw_average = false;
    bool per_source_weights = false;
    double omega_init = 1.0;
};

/// VDK-GP on the target topology, hot-started at the source average.
inline GpModel train_htl(const TrainingSet& data, const GridCase& gc,
                         const Topology& target_topo,
                         const SourceRegistry& registry,
                         const TransferOptions& opts = {}) {
    if (registry.size() == 0)
        throw ArgumentError("train_htl: empty source registry");
    const KernelSpec spec = make_vdk_spec(neighborhoods(gc, target_topo));
    Hyperparameters theta0 = htl_init(registry, opts.raw_average);
    theta0.log_weights = Eigen::VectorXd::Zero(0);
    return fit(data, spec, theta0, opts.fit);
}

/// MT-VDK-GP: trainable target VDK plus frozen source kernels under a
/// single trainable weight (or one per source). Target hyperparameters
/// hot-start from the source average.
inline GpModel train_mt(const TrainingSet& data, const GridCase& gc,
                        const Topology& target_topo,
                        const SourceRegistry& registry,
                        const TransferOptions& opts = {}) {
    if (registry.size() == 0)
        throw ArgumentError("train_mt: empty source registry");
    const KernelSpec spec =
        make_mt_vdk_spec(neighborhoods(gc, target_topo),
                         registry.frozen_sources(), opts.per_source_weights);
    Hyperparameters theta0 = htl_init(registry, opts.raw_average);
    theta0.log_weights = Eigen::VectorXd::Constant(
        spec.n_weights(), std::log(opts.omega_init));
    return fit(data, spec, theta0, opts.fit);
}

/// Loads every *.json model under `dir` into a registry, enforcing a
/// common case hash when models carry one.
inline SourceRegistry load_registry(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir))
        throw IoError("registry directory not found: " + dir);
    SourceRegistry reg;
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".json")
            paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
        try {
            reg.entries.push_back(load_model(p.string()));
        } catch (const IoError&) {
            throw;
        } catch (const std::exception& e) {
            throw IoError("corrupt model file " + p.string() + ": " +
                          e.what());
        }
    }
    if (reg.entries.empty())
        throw IoError("no model files found in " + dir);
    return reg;
}

inline void persist_registry(const SourceRegistry& registry,
                             const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    int idx = 0;
    for (const auto& m : registry.entries) {
        std::string name = m.label;
        for (char& c : name)
            if (c == ':' || c == ',' || c == '/') c = '_';
        save_model(m, (fs::path(dir) /
                       ("source_" + std::to_string(idx++) + "_" + name +
                        ".json"))
                          .string());
    }
}

} // namespace gridkernel
