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

#include "mvrcache/theory.h"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numbers>
#include <random>

#include "mvrcache/error.h"

namespace mvrcache {

namespace {

double log_normal_pdf(double s, double mu, double sigma) {
    double z = (s - mu) / sigma;
    return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

// log(1 + e^x) without overflow.
double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

std::vector<double> standard_normals(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    std::vector<double> out(n);
    for (auto& x : out) {
        x = z(rng);
    }
    return out;
}

}  // namespace

LogisticParams closed_form_params(const GaussianPair& pair) {
    return {(pair.mu1 + pair.mu0) / 2.0, (pair.mu1 - pair.mu0) / (pair.sigma * pair.sigma)};
}

double logodds_identity_check(const GaussianPair& pair, double s) {
    auto p = closed_form_params(pair);
    double lhs = log_normal_pdf(s, pair.mu1, pair.sigma) - log_normal_pdf(s, pair.mu0, pair.sigma);
    return std::abs(lhs - p.gamma * (s - p.t));
}

double gaussian_posterior(const GaussianPair& pair, double s, double pi1) {
    double l1 = std::log(pi1) + log_normal_pdf(s, pair.mu1, pair.sigma);
    double l0 = std::log(1.0 - pi1) + log_normal_pdf(s, pair.mu0, pair.sigma);
    return 1.0 / (1.0 + std::exp(l0 - l1));
}

double population_loss_mc(double delta, double sigma, std::size_t n, std::uint64_t seed) {
    if (n < 1000) {
        throw Error(ErrorCode::kConfig, "population loss needs at least 1000 samples");
    }
    // Scores measured from the midpoint t: s - t = +-delta/2 + sigma z.
    double gamma = delta / (sigma * sigma);
    auto z1 = standard_normals(n, seed);
    auto z0 = standard_normals(n, seed ^ 0x9e3779b97f4a7c15ULL);
    double l1 = 0.0, l0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        l1 += softplus(-gamma * (delta / 2.0 + sigma * z1[i]));
        l0 += softplus(gamma * (-delta / 2.0 + sigma * z0[i]));
    }
    return 0.5 * l1 / static_cast<double>(n) + 0.5 * l0 / static_cast<double>(n);
}

double population_loss_mc(const GaussianPair& pair, std::size_t n, std::uint64_t seed) {
    if (n < 1000) {
        throw Error(ErrorCode::kConfig, "population loss needs at least 1000 samples");
    }
    // s - t = (mu - t) + sigma z, so the means enter only through their
    // offsets from the midpoint.
    auto p = closed_form_params(pair);
    double off1 = pair.mu1 - p.t, off0 = pair.mu0 - p.t;
    auto z1 = standard_normals(n, seed);
    auto z0 = standard_normals(n, seed ^ 0x9e3779b97f4a7c15ULL);
    double l1 = 0.0, l0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        l1 += softplus(-p.gamma * (off1 + pair.sigma * z1[i]));
        l0 += softplus(p.gamma * (off0 + pair.sigma * z0[i]));
    }
    return 0.5 * l1 / static_cast<double>(n) + 0.5 * l0 / static_cast<double>(n);
}

MidpointFlow midpoint_flow_sim(const GaussianPair& pair, double gamma, std::size_t steps, double dt,
                               std::size_t pairs, std::uint64_t seed) {
    if (pairs < 1) {
        throw Error(ErrorCode::kConfig, "midpoint flow needs at least one pair");
    }
    double t = (pair.mu1 + pair.mu0) / 2.0;
    auto z = standard_normals(pairs, seed);
    std::vector<double> s1(pairs), s0(pairs);
    for (std::size_t i = 0; i < pairs; ++i) {
        s1[i] = pair.mu1 + pair.sigma * z[i];
        s0[i] = pair.mu0 - pair.sigma * z[i];
    }
    auto summary = [&] {
        double m1 = 0.0, m0 = 0.0;
        for (std::size_t i = 0; i < pairs; ++i) {
            m1 += s1[i];
            m0 += s0[i];
        }
        m1 /= static_cast<double>(pairs);
        m0 /= static_cast<double>(pairs);
        return std::make_pair((m1 + m0) / 2.0, m1 - m0);
    };
    auto [mid0, sep0] = summary();
    for (std::size_t k = 0; k < steps; ++k) {
        for (std::size_t i = 0; i < pairs; ++i) {
            s1[i] -= dt * gamma * (logistic(s1[i], t, gamma) - 1.0);
            s0[i] -= dt * gamma * logistic(s0[i], t, gamma);
        }
    }
    auto [mid1, sep1] = summary();
    return {std::abs(mid1 - mid0), sep1 - sep0, sep0, sep1};
}

double ks_against_moment_normal(std::vector<double> sample, double* mean, double* std) {
    auto n = static_cast<double>(sample.size());
    double mu = 0.0;
    for (double x : sample) {
        mu += x;
    }
    mu /= n;
    double var = 0.0;
    for (double x : sample) {
        var += (x - mu) * (x - mu);
    }
    double sd = std::sqrt(var / (n - 1.0));
    if (mean) {
        *mean = mu;
    }
    if (std) {
        *std = sd;
    }
    if (!(sd > 0.0)) {
        return 1.0;
    }
    std::sort(sample.begin(), sample.end());
    boost::math::normal_distribution<double> dist(mu, sd);
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        double f = boost::math::cdf(dist, sample[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return std::clamp(d, 0.0, 1.0);
}

FitDiagnostics gaussian_validator(std::span<const Observation> scored) {
    std::vector<double> pos, neg;
    for (const auto& o : scored) {
        (o.c ? pos : neg).push_back(o.s);
    }
    if (pos.size() < 30 || neg.size() < 30) {
        throw Error(ErrorCode::kInsufficientData, "normality check needs 30 samples per class, got " +
                                                      std::to_string(pos.size()) + " positive and " +
                                                      std::to_string(neg.size()) + " negative");
    }
    FitDiagnostics out;
    out.positive.n = pos.size();
    out.positive.ks = ks_against_moment_normal(std::move(pos), &out.positive.mean, &out.positive.std);
    out.negative.n = neg.size();
    out.negative.ks = ks_against_moment_normal(std::move(neg), &out.negative.mean, &out.negative.std);
    return out;
}

nlohmann::ordered_json theory_report(const TheoryConfig& config, std::span<const Observation> replay_scores) {
    nlohmann::ordered_json r;
    r["schema"] = "mvrcache-theory";
    r["version"] = 1;
    r["seed"] = config.seed;

    auto cf = closed_form_params({0.8, 0.4, 0.1});
    r["closed_form"] = {{"mu1", 0.8}, {"mu0", 0.4}, {"sigma", 0.1}, {"t", cf.t}, {"gamma", cf.gamma}};

    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double max_residual = 0.0, max_posterior_gap = 0.0;
    for (std::size_t i = 0; i < config.sweep_points; ++i) {
        double a = u(rng), b = u(rng);
        GaussianPair p{std::max(a, b), std::min(a, b), 0.02 + 0.3 * u(rng)};
        double s = u(rng);
        max_residual = std::max(max_residual, logodds_identity_check(p, s));
        auto lp = closed_form_params(p);
        max_posterior_gap = std::max(max_posterior_gap, std::abs(logistic(s, lp.t, lp.gamma) -
                                                                 gaussian_posterior(p, s)));
    }
    r["logodds_identity"] = {{"points", config.sweep_points},
                             {"max_residual", max_residual},
                             {"max_posterior_gap", max_posterior_gap}};

    nlohmann::ordered_json grid = nlohmann::ordered_json::array();
    std::vector<double> losses;
    for (int k = 1; k <= 9; ++k) {
        double delta = k / 10.0;
        losses.push_back(population_loss_mc(delta, config.sigma, config.mc_samples, config.seed));
        grid.push_back({{"delta", delta}, {"loss", losses.back()}});
    }
    bool monotone = true;
    for (std::size_t k = 1; k < losses.size(); ++k) {
        monotone = monotone && losses[k] < losses[k - 1];
    }
    double at_zero = population_loss_mc(0.0, config.sigma, config.mc_samples, config.seed);
    double shift_a = population_loss_mc(GaussianPair{0.75, 0.25, config.sigma}, config.mc_samples, config.seed);
    double shift_b = population_loss_mc(GaussianPair{0.5, 0.0, config.sigma}, config.mc_samples, config.seed);
    r["population_loss"] = {{"sigma", config.sigma},
                            {"samples", config.mc_samples},
                            {"grid", grid},
                            {"monotone_decreasing", monotone},
                            {"delta_zero", at_zero},
                            {"delta_zero_gap", std::abs(at_zero - std::log(2.0))},
                            {"shift_invariance_gap", std::abs(shift_a - shift_b)}};

    auto fp = config.flow_pair;
    auto flow = midpoint_flow_sim(fp, closed_form_params(fp).gamma, config.flow_steps, config.flow_dt,
                                  config.flow_pairs, config.seed);
    r["midpoint_flow"] = {{"mu1", fp.mu1},
                          {"mu0", fp.mu0},
                          {"sigma", fp.sigma},
                          {"steps", config.flow_steps},
                          {"dt", config.flow_dt},
                          {"drift", flow.drift},
                          {"separation_growth", flow.separation_growth}};

    auto diag_json = [](const ClassDiagnostics& d) {
        return nlohmann::ordered_json{{"n", d.n}, {"mean", d.mean}, {"std", d.std}, {"ks", d.ks}};
    };
    if (replay_scores.empty()) {
        r["normality"] = nullptr;
    } else {
        try {
            auto d = gaussian_validator(replay_scores);
            r["normality"] = {{"positive", diag_json(d.positive)}, {"negative", diag_json(d.negative)}};
        } catch (const Error& e) {
            r["normality"] = {{"error", e.what()}};
        }
    }
    return r;
}

}  // namespace mvrcache
