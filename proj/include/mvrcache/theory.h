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
#include <cstdint>
#include <json.hpp>
#include <span>
#include <utility>
#include <vector>

#include "mvrcache/logistic.h"

namespace mvrcache {

/// Class-conditional score distributions N(mu1, sigma^2) and N(mu0, sigma^2).
struct GaussianPair {
    double mu1 = 0.8;
    double mu0 = 0.4;
    double sigma = 0.1;

    double delta() const { return mu1 - mu0; }
};

struct LogisticParams {
    double t = 0.0;
    double gamma = 0.0;
};

LogisticParams closed_form_params(const GaussianPair& pair);

/// |log(f1(s)/f0(s)) - gamma (s - t)| with the closed-form parameters.
double logodds_identity_check(const GaussianPair& pair, double s);

/// Bayes posterior P(c=1 | s) for the pair with class prior pi1.
double gaussian_posterior(const GaussianPair& pair, double s, double pi1 = 0.5);

/// Monte Carlo population loss at the closed-form parameters. Draws depend
/// only on (n, seed), so estimates at different deltas share random numbers.
double population_loss_mc(double delta, double sigma, std::size_t n, std::uint64_t seed);
/// Same estimator evaluated on raw scores mu + sigma z of a concrete pair.
double population_loss_mc(const GaussianPair& pair, std::size_t n, std::uint64_t seed);

struct MidpointFlow {
    double drift = 0.0;       // |final midpoint - initial midpoint|
    double separation_growth = 0.0;
    double initial_separation = 0.0;
    double final_separation = 0.0;
};

/// Euler integration of ds = -gamma (g(s) - y) dt over antithetic pairs
/// s1 = mu1 + sigma z, s0 = mu0 - sigma z, with g centred at the pair midpoint.
MidpointFlow midpoint_flow_sim(const GaussianPair& pair, double gamma, std::size_t steps, double dt,
                               std::size_t pairs = 10000, std::uint64_t seed = 1);

struct ClassDiagnostics {
    std::size_t n = 0;
    double mean = 0.0;
    double std = 0.0;
    double ks = 0.0;
};

struct FitDiagnostics {
    ClassDiagnostics positive;
    ClassDiagnostics negative;
};

/// Kolmogorov-Smirnov distance between a sample and the normal with the
/// sample's own mean and standard deviation.
double ks_against_moment_normal(std::vector<double> sample, double* mean = nullptr, double* std = nullptr);

FitDiagnostics gaussian_validator(std::span<const Observation> scored);

struct TheoryConfig {
    std::uint64_t seed = 1;
    double sigma = 0.2;
    std::size_t mc_samples = 100000;
    std::size_t sweep_points = 1000;
    std::size_t flow_pairs = 10000;
    std::size_t flow_steps = 1000;
    double flow_dt = 1e-3;
    GaussianPair flow_pair{0.7, 0.3, 0.1};
};

/// Runs every validator and returns the report document. Replay scores, when
/// given, feed the normality diagnostics.
nlohmann::ordered_json theory_report(const TheoryConfig& config, std::span<const Observation> replay_scores = {});

}  // namespace mvrcache
