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

#include "mvrcache/logistic.h"

#include <algorithm>
#include <array>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <limits>
#include <string>

#include "mvrcache/error.h"

namespace mvrcache {

namespace {

constexpr double kGammaFloor = 1e-9;
constexpr double kSeFloor = 1e-6;

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

struct Eval {
    double loss = 0.0;
    double gt = 0.0;  // d loss / d t
    double gg = 0.0;  // d loss / d gamma
    double htt = 0.0, hgg = 0.0, htg = 0.0;
};

Eval evaluate(std::span<const Observation> obs, ClassWeights w, double t, double gamma, bool hessian) {
    Eval e;
    for (const auto& o : obs) {
        double wc = o.c ? w.w1 : w.w0;
        double d = o.s - t;
        double x = gamma * d;
        e.loss += wc * (o.c ? softplus(-x) : softplus(x));
        double p = logistic(o.s, t, gamma);
        double r = wc * (p - (o.c ? 1.0 : 0.0));
        e.gt += -gamma * r;
        e.gg += d * r;
        if (hessian) {
            double q = wc * p * (1.0 - p);
            e.htt += q * gamma * gamma;
            e.hgg += q * d * d;
            e.htg += -q * gamma * d - r;
        }
    }
    return e;
}

/// Loss alone, stopping once it exceeds `limit`; every term is non-negative
/// so the partial sum is then already a valid "above limit" answer.
double loss_until(std::span<const Observation> obs, ClassWeights w, double t, double gamma,
                  double limit = std::numeric_limits<double>::infinity()) {
    double loss = 0.0;
    for (const auto& o : obs) {
        double x = gamma * (o.s - t);
        loss += (o.c ? w.w1 : w.w0) * (o.c ? softplus(-x) : softplus(x));
        if (loss > limit) {
            break;
        }
    }
    return loss;
}

}  // namespace

double logistic(double s, double t, double gamma) {
    double x = gamma * (s - t);
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double ex = std::exp(x);
    return ex / (1.0 + ex);
}

double weighted_bce(double s, bool c, double t, double gamma, ClassWeights w) {
    double x = gamma * (s - t);
    return c ? w.w1 * softplus(-x) : w.w0 * softplus(x);
}

LogisticFit fit_logistic(std::span<const Observation> obs, ClassWeights weights, FitOptions options) {
    LogisticFit fit;
    fit.n = obs.size();
    for (const auto& o : obs) {
        if (!(o.s >= 0.0 && o.s <= 1.0)) {
            throw Error(ErrorCode::kRange, "similarity " + std::to_string(o.s) + " outside [0,1]");
        }
        (o.c ? fit.n_pos : fit.n_neg)++;
    }
    if (fit.n_pos == 0 || fit.n_neg == 0) {
        throw Error(ErrorCode::kNotIdentifiable, std::to_string(fit.n_pos) + " positive and " +
                                                     std::to_string(fit.n_neg) + " negative observations");
    }
    const double gmax = options.gamma_max;

    // Grid seed: 20 linear values of t, 20 log-spaced values of gamma.
    double best_t = 0.5, best_g = 1.0, best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 20; ++i) {
        double t = i / 19.0;
        for (int j = 0; j < 20; ++j) {
            double g = std::exp(std::log(0.1) + (std::log(gmax) - std::log(0.1)) * j / 19.0);
            double l = loss_until(obs, weights, t, g);
            if (l < best) {
                best = l;
                best_t = t;
                best_g = g;
            }
        }
    }

    // Projected gradient descent in a diagonally rescaled metric with
    // backtracking (step halving).
    auto project = [&](double& t, double& g) {
        t = std::clamp(t, 0.0, 1.0);
        g = std::clamp(g, kGammaFloor, gmax);
    };
    double t = best_t, g = best_g;
    auto cur = evaluate(obs, weights, t, g, true);
    double step = 1.0;
    int it = 0;
    for (; it < options.max_iterations; ++it) {
        double pt = cur.gt, pg = cur.gg;
        if ((t <= 0.0 && pt > 0.0) || (t >= 1.0 && pt < 0.0)) pt = 0.0;
        if ((g <= kGammaFloor && pg > 0.0) || (g >= gmax && pg < 0.0)) pg = 0.0;
        if (std::hypot(pt, pg) < options.grad_tol) {
            break;
        }
        double st = 1.0 / std::max(std::abs(cur.htt), 1e-12);
        double sg = 1.0 / std::max(std::abs(cur.hgg), 1e-12);
        bool moved = false;
        for (int halvings = 0; halvings < 60; ++halvings) {
            double nt = t - step * st * cur.gt;
            double ng = g - step * sg * cur.gg;
            project(nt, ng);
            auto cand = evaluate(obs, weights, nt, ng, true);
            if (!std::isfinite(cand.loss)) {
                throw Error(ErrorCode::kNumeric, "non-finite loss during fit");
            }
            if (cand.loss < cur.loss) {
                moved = true;
                t = nt;
                g = ng;
                cur = cand;
                step = std::min(step * 2.0, 1.0);
                break;
            }
            step *= 0.5;
        }
        if (!moved) {
            break;
        }
    }
    if (!std::isfinite(cur.loss)) {
        throw Error(ErrorCode::kNumeric, "non-finite loss at the optimum");
    }
    fit.t = t;
    fit.gamma = g;
    fit.loss = cur.loss;
    fit.iterations = it;

    // Standard errors from the inverse observed information. A singular or
    // indefinite information matrix leaves the parameters unconstrained.
    double det = cur.htt * cur.hgg - cur.htg * cur.htg;
    double var_t = det > 0.0 && cur.htt > 0.0 ? cur.hgg / det : std::numeric_limits<double>::infinity();
    double var_g = det > 0.0 && cur.hgg > 0.0 ? cur.htt / det : std::numeric_limits<double>::infinity();
    fit.se_t = std::isfinite(var_t) ? std::max(std::sqrt(var_t), kSeFloor) : 1.0;
    fit.se_gamma = std::isfinite(var_g) ? std::max(std::sqrt(var_g), kSeFloor) : gmax;
    fit.se_t = std::min(fit.se_t, 1.0);
    fit.se_gamma = std::min(fit.se_gamma, gmax);

    if (options.likelihood_level > 0.0 && options.likelihood_level < 1.0) {
        // Coarse global grid plus a fine grid around the optimum so that
        // narrow regions are still resolved.
        double limit = fit.loss - std::log(1.0 - options.likelihood_level);
        // For fixed t the loss is convex in gamma, so each grid row meets the
        // region in a run of consecutive points. The logit gamma (s - t) is
        // monotone along a row, so only the two ends of each run are kept.
        auto inside = [&](double tt, double gg) { return loss_until(obs, weights, tt, gg, limit) <= limit; };
        auto scan_row = [&](double tt, int n, auto&& gamma_at) {
            int lo = 0;
            while (lo <= n && !inside(tt, gamma_at(lo))) {
                ++lo;
            }
            if (lo > n) {
                return;
            }
            int hi = n;
            while (hi > lo && !inside(tt, gamma_at(hi))) {
                --hi;
            }
            fit.likelihood_region.emplace_back(tt, gamma_at(lo));
            if (hi > lo) {
                fit.likelihood_region.emplace_back(tt, gamma_at(hi));
            }
        };
        fit.likelihood_region.emplace_back(t, g);
        const double lo = std::log(std::min(0.01, gmax)), hi = std::log(gmax);
        for (int i = 0; i <= 50; ++i) {
            scan_row(i / 50.0, 50, [&](int j) { return std::exp(lo + (hi - lo) * j / 50.0); });
        }
        for (int i = 0; i <= 40; ++i) {
            double tt = t + 0.1 * (i / 20.0 - 1.0);
            if (tt >= 0.0 && tt <= 1.0) {
                scan_row(tt, 40, [&](int j) { return std::clamp(g * std::exp(1.5 * (j / 20.0 - 1.0)), kGammaFloor, gmax); });
            }
        }
    }
    return fit;
}

RegionMode parse_region_mode(std::string_view name) {
    if (name == "paper-min") return RegionMode::kPaperMin;
    if (name == "worst-case-max") return RegionMode::kWorstCaseMax;
    if (name == "likelihood-max") return RegionMode::kLikelihoodMax;
    throw Error(ErrorCode::kConfig, "unknown region mode \"" + std::string(name) + "\"");
}

std::string_view to_string(RegionMode m) {
    switch (m) {
        case RegionMode::kPaperMin: return "paper-min";
        case RegionMode::kWorstCaseMax: return "worst-case-max";
        case RegionMode::kLikelihoodMax: return "likelihood-max";
    }
    return "paper-min";
}

void ExplorationConfig::validate() const {
    if (!(delta > 0.0 && delta < 1.0)) {
        throw Error(ErrorCode::kConfig, "delta must lie in (0,1)");
    }
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
        throw Error(ErrorCode::kConfig, "epsilon must lie in (0,1)");
    }
    if (!(gamma_max > 0.0)) {
        throw Error(ErrorCode::kConfig, "gamma_max must be positive");
    }
}

double exploration_value(double s, double t, double gamma, double delta, double epsilon) {
    double alpha = (1.0 - epsilon) * logistic(s, t, gamma);
    return ((1.0 - delta) - alpha) / (1.0 - alpha);
}

Region confidence_region(const LogisticFit& fit, double epsilon, double gamma_max) {
    static const boost::math::normal_distribution<double> unit;
    double z = boost::math::quantile(unit, 1.0 - epsilon / 2.0);
    return {std::clamp(fit.t - z * fit.se_t, 0.0, 1.0), std::clamp(fit.t + z * fit.se_t, 0.0, 1.0),
            std::clamp(fit.gamma - z * fit.se_gamma, kGammaFloor, gamma_max),
            std::clamp(fit.gamma + z * fit.se_gamma, kGammaFloor, gamma_max)};
}

double exploration_prob(const LogisticFit& fit, double s, const ExplorationConfig& config) {
    if (config.region == RegionMode::kLikelihoodMax) {
        // g decreases in the logit, so the maximum sits at the smallest logit.
        double worst_t = fit.t, worst_g = fit.gamma;
        double worst = fit.gamma * (s - fit.t);
        for (const auto& [t, g] : fit.likelihood_region) {
            double logit = g * (s - t);
            if (logit < worst) {
                worst = logit;
                worst_t = t;
                worst_g = g;
            }
        }
        return std::clamp(exploration_value(s, worst_t, worst_g, config.delta, config.epsilon), 0.0, 1.0);
    }
    auto r = confidence_region(fit, config.epsilon, config.gamma_max);
    bool take_min = config.region == RegionMode::kPaperMin;
    double out = take_min ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    auto consider = [&](double t, double g) {
        double v = exploration_value(s, t, g, config.delta, config.epsilon);
        out = take_min ? std::min(out, v) : std::max(out, v);
    };
    for (double t : {r.t_lo, r.t_hi}) {
        for (double g : {r.g_lo, r.g_hi}) {
            consider(t, g);
        }
    }
    for (int i = 1; i <= 9; ++i) {
        for (int j = 1; j <= 9; ++j) {
            consider(r.t_lo + (r.t_hi - r.t_lo) * i / 10.0, r.g_lo + (r.g_hi - r.g_lo) * j / 10.0);
        }
    }
    return std::clamp(out, 0.0, 1.0);
}

}  // namespace mvrcache
