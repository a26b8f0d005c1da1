// Copyright 2026-present the mvrcache authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace mvrcache {

struct Observation {
    double s = 0.0;
    bool c = false;
};

struct ClassWeights {
    double w1 = 1.0;
    double w0 = 1.0;
};

struct FitOptions {
    double gamma_max = 200.0;
    int max_iterations = 500;
    double grad_tol = 1e-8;
    /// When in (0,1), also collect the likelihood-ratio region at this level.
    double likelihood_level = 0.0;
};

struct LogisticFit {
    double t = 0.5;
    double gamma = 1.0;
    double se_t = 0.0;
    double se_gamma = 0.0;
    std::size_t n = 0;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    double loss = 0.0;
    int iterations = 0;
    /// Grid points (t, gamma) whose loss lies within the chi-square(2)
    /// threshold of the optimum: the optimum plus, for every grid value of t,
    /// the smallest and largest member gamma.
    std::vector<std::pair<double, double>> likelihood_region;
};

/// 1 / (1 + exp(-gamma (s - t))), evaluated without overflow.
double logistic(double s, double t, double gamma);

/// Weighted binary cross-entropy of one prediction, computed from the logit.
double weighted_bce(double s, bool c, double t, double gamma, ClassWeights w = {});

/// Maximum-likelihood (t, gamma) over t in [0,1], gamma in (0, gamma_max].
/// Throws kNotIdentifiable unless both classes are present.
LogisticFit fit_logistic(std::span<const Observation> obs, ClassWeights weights = {}, FitOptions options = {});

inline double correctness_prob(const LogisticFit& fit, double s) {
    return logistic(s, fit.t, fit.gamma);
}

/// kPaperMin and kWorstCaseMax take the min or max over the Wald box;
/// kLikelihoodMax takes the max over the likelihood-ratio region.
enum class RegionMode { kPaperMin, kWorstCaseMax, kLikelihoodMax };

RegionMode parse_region_mode(std::string_view name);
std::string_view to_string(RegionMode m);

struct ExplorationConfig {
    double delta = 0.05;
    double epsilon = 0.05;
    double gamma_max = 200.0;
    RegionMode region = RegionMode::kPaperMin;

    void validate() const;
};

/// ((1 - delta) - alpha) / (1 - alpha) with alpha = (1 - epsilon) L(s; t, gamma),
/// before clamping.
double exploration_value(double s, double t, double gamma, double delta, double epsilon);

struct Region {
    double t_lo, t_hi, g_lo, g_hi;
};

/// Wald box at level 1 - epsilon intersected with the parameter domain.
Region confidence_region(const LogisticFit& fit, double epsilon, double gamma_max);

/// Exploration probability tau in [0, 1].
double exploration_prob(const LogisticFit& fit, double s, const ExplorationConfig& config);

}  // namespace mvrcache
