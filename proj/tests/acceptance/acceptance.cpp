// Acceptance suite: one PASS/FAIL line per criterion. Exit status is
// non-zero when any criterion fails.
//
// usage: acceptance [--only N[,N...]] [--work DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mvrcache/error.h"
#include "mvrcache/kernels.h"
#include "mvrcache/logistic.h"
#include "mvrcache/policy.h"
#include "mvrcache/replay.h"
#include "mvrcache/segment.h"
#include "mvrcache/simscore.h"
#include "mvrcache/store.h"
#include "mvrcache/synth.h"
#include "mvrcache/theory.h"
#include "mvrcache/train.h"

using namespace mvrcache;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

fs::path g_work;

UnitVector random_unit(std::mt19937_64& rng, std::size_t d) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(d);
    for (auto& x : v) {
        x = n(rng);
    }
    return UnitVector::normalized(std::move(v));
}

MultiVector random_mv(std::mt19937_64& rng, std::size_t m, std::size_t d) {
    std::vector<UnitVector> rows;
    for (std::size_t i = 0; i < m; ++i) {
        rows.push_back(random_unit(rng, d));
    }
    return MultiVector(rows);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------- 1

Outcome maxsim_exactness() {
    ScoreMatrix s{2, 3, {0.01, 0.83, 0.02, 0.05, 0.80, 0.01}};
    double f = maxsim(s), r = maxsim_reverse(s), sm = smaxsim(s);
    bool ok = std::abs(f - 1.63) <= 1e-12 && std::abs(r - 0.90) <= 1e-12 && std::abs(sm - 0.5575) <= 1e-12;
    return {ok, fmt("forward=%.15g reverse=%.15g smaxsim=%.15g", f, r, sm)};
}

// ---------------------------------------------------------------- 2

double brute_directional(const MultiVector& q, const MultiVector& d) {
    double total = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        double best = 0.0;
        for (std::size_t j = 0; j < d.size(); ++j) {
            double c = 0.0;
            for (std::size_t k = 0; k < q.dim(); ++k) {
                c += q.row(i)[k] * d.row(j)[k];
            }
            best = std::max(best, c);
        }
        total += best;
    }
    return total / static_cast<double>(q.size());
}

Outcome smaxsim_properties() {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<std::size_t> m(1, 4);
    std::size_t asym = 0, range = 0, oracle = 0;
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        auto a = random_mv(rng, m(rng), 16);
        auto b = random_mv(rng, m(rng), 16);
        double ab = smaxsim(a, b), ba = smaxsim(b, a);
        double ref = 0.5 * (brute_directional(a, b) + brute_directional(b, a));
        asym += ab != ba;
        range += !(ab >= 0.0 && ab <= 1.0);
        worst = std::max(worst, std::abs(ab - ref));
        oracle += std::abs(ab - ref) > 1e-12;
    }
    return {asym == 0 && range == 0 && oracle == 0,
            fmt("pairs=1000 asymmetric=%zu out_of_range=%zu oracle_mismatch=%zu max_abs_diff=%.3g", asym, range,
                oracle, worst)};
}

// ---------------------------------------------------------------- 3

std::vector<Observation> gaussian_obs(std::mt19937_64& rng, std::size_t n, double mu1, double mu0, double sigma) {
    // Scores outside [0,1] are redrawn; this leaves P(c | s) unchanged.
    std::bernoulli_distribution coin(0.5);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<Observation> out;
    while (out.size() < n) {
        bool c = coin(rng);
        double s = (c ? mu1 : mu0) + sigma * z(rng);
        if (s >= 0.0 && s <= 1.0) {
            out.push_back({s, c});
        }
    }
    return out;
}

Outcome mle_recovery() {
    auto truth = closed_form_params({0.8, 0.4, 0.1});
    int passes = 0;
    double worst_t = 0.0, worst_g = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        std::mt19937_64 rng(seed);
        auto fit = fit_logistic(gaussian_obs(rng, 2000, 0.8, 0.4, 0.1));
        double et = std::abs(fit.t - truth.t) / truth.t;
        double eg = std::abs(fit.gamma - truth.gamma) / truth.gamma;
        worst_t = std::max(worst_t, et);
        worst_g = std::max(worst_g, eg);
        passes += et <= 0.1 && eg <= 0.1;
    }
    // Context only: the per-seed pass rate of the estimator on further seeds.
    int wider = 0;
    for (std::uint64_t seed = 1001; seed <= 1200; ++seed) {
        std::mt19937_64 rng(seed);
        auto fit = fit_logistic(gaussian_obs(rng, 2000, 0.8, 0.4, 0.1));
        wider += std::abs(fit.t - truth.t) <= 0.1 * truth.t && std::abs(fit.gamma - truth.gamma) <= 0.1 * truth.gamma;
    }
    return {passes >= 18, fmt("closed_form=(%.3g, %.3g) seeds_within_10pct=%d/20 max_rel_err_t=%.3f "
                              "max_rel_err_gamma=%.3f | info: per-seed rate on 200 further seeds=%.3f",
                              truth.t, truth.gamma, passes, worst_t, worst_g, wider / 200.0)};
}

// ---------------------------------------------------------------- 4

Outcome tau_algebra() {
    ExplorationConfig cfg;
    LogisticFit one;
    one.t = 0.0;
    one.gamma = 100.0;  // logit 100 at s = 1, so L = 1 exactly
    LogisticFit zero;
    zero.t = 1.0;
    zero.gamma = 1e6;  // L underflows to exactly 0 at s = 0
    double tau_full = exploration_prob(one, 1.0, cfg);
    double tau_none = exploration_prob(zero, 0.0, cfg);
    bool degenerate = cfg.delta == cfg.epsilon && tau_full == 0.0 && tau_none == 1.0 - cfg.delta;

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        LogisticFit fit;
        fit.t = u(rng);
        fit.gamma = 1.0 + 99.0 * u(rng);
        fit.se_t = 0.15 * u(rng);
        fit.se_gamma = 20.0 * u(rng);
        double s = u(rng);
        for (auto mode : {RegionMode::kPaperMin, RegionMode::kWorstCaseMax}) {
            ExplorationConfig c;
            c.region = mode;
            auto r = confidence_region(fit, c.epsilon, c.gamma_max);
            double best = mode == RegionMode::kPaperMin ? INFINITY : -INFINITY;
            for (int i = 0; i <= 1000; ++i) {
                double t = r.t_lo + (r.t_hi - r.t_lo) * i / 1000.0;
                for (int j = 0; j <= 1000; ++j) {
                    double v = exploration_value(s, t, r.g_lo + (r.g_hi - r.g_lo) * j / 1000.0, c.delta, c.epsilon);
                    best = mode == RegionMode::kPaperMin ? std::min(best, v) : std::max(best, v);
                }
            }
            worst = std::max(worst, std::abs(exploration_prob(fit, s, c) - std::clamp(best, 0.0, 1.0)));
        }
    }
    return {degenerate && worst <= 1e-4,
            fmt("tau(alpha=1-delta)=%.17g tau(alpha=0)=%.17g grid_max_abs_diff=%.3g over 100 fits x 2 regions",
                tau_full, tau_none, worst)};
}

// ---------------------------------------------------------------- 5

struct GuaranteeRun {
    double error_rate = 0.0;
    double hit_rate = 0.0;
};

// Entries carry true logistic parameters; a cache hit is correct with
// probability L(s; t, gamma) of the retrieved entry.
GuaranteeRun guarantee_stream(std::uint64_t seed, RegionMode region) {
    constexpr std::size_t kEntries = 10, kDim = 8, kSteps = 2000;
    PolicyConfig cfg;
    cfg.exploration.region = region;
    SemanticCache cache("synthetic", kDim);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<LogisticParams> truth;
    for (std::size_t e = 0; e < kEntries; ++e) {
        auto mv = random_mv(rng, 1, kDim);
        cache.insert(make_prompt("e" + std::to_string(e), "entry"), {}, mv,
                     UnitVector::from_unit({mv.row(0).begin(), mv.row(0).end()}), {"r"}, "synthetic");
        truth.push_back({0.5 + 0.3 * u(rng), 15.0 + 45.0 * u(rng)});
    }
    std::size_t errors = 0, hits = 0;
    for (std::size_t step = 0; step < kSteps; ++step) {
        std::size_t e = static_cast<std::size_t>(u(rng) * kEntries);
        double s = std::min(1.0, 0.4 + 0.6 * u(rng));
        bool correct = u(rng) < logistic(s, truth[e].t, truth[e].gamma);
        auto fit = cache.current_fit(e, cfg.fit_options(), cfg.min_obs_per_class);
        double tau = fit ? exploration_prob(*fit, s, cfg.exploration) : 1.0;
        if (u(rng) < tau) {
            cache.append_observation(e, s, correct);
        } else {
            ++hits;
            errors += !correct;
        }
    }
    return {static_cast<double>(errors) / kSteps, static_cast<double>(hits) / kSteps};
}

Outcome error_guarantee() {
    const double delta = 0.05;
    const double bound = delta + 3.0 * std::sqrt(delta * (1.0 - delta) / 2000.0);
    std::string detail = fmt("bound=%.4f", bound);
    bool pass = false;
    for (auto region : {RegionMode::kWorstCaseMax, RegionMode::kLikelihoodMax, RegionMode::kPaperMin}) {
        int ok = 0;
        double worst = 0.0, hit = 0.0;
        auto t0 = std::chrono::steady_clock::now();
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            auto r = guarantee_stream(seed, region);
            ok += r.error_rate <= bound;
            worst = std::max(worst, r.error_rate);
            hit += r.hit_rate / 20.0;
        }
        if (region == RegionMode::kWorstCaseMax) {
            pass = ok >= 19;
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        detail += fmt(" | %s%s: seeds_within=%d/20 max_error=%.4f mean_hit=%.3f %.0fs",
                      std::string(to_string(region)).c_str(),
                      region == RegionMode::kWorstCaseMax ? "" : " (info)", ok, worst, hit, secs);
    }
    return {pass, detail};
}

// ---------------------------------------------------------------- 6

SegmenterConfig tiny_policy(std::uint64_t seed) {
    SegmenterConfig c;
    c.vocab_buckets = 64;
    c.token_dim = 6;
    c.hidden = 8;
    c.init_seed = seed;
    return c;
}

Outcome reinforce_gradient() {
    // Two prompts with one interior candidate each: every policy yields one of
    // two segmentations per prompt, so the expected reward is a 4-term sum.
    std::vector<CorpusRecord> recs{
        {make_prompt("a", "the plot was thin, i loved it"), {"positive"}},
        {make_prompt("b", "the plot was thin, i hated it"), {"negative"}},
    };
    Corpus corpus(recs, {{"train", {0, 1}}});
    EmbeddingCache emb(std::make_shared<HashEmbedder>(EmbedderConfig{.dimension = 64}));
    SegmentationPolicy policy(tiny_policy(29));
    TrainConfig tc;
    tc.validate_during_training = false;
    tc.seed = 6;
    Trainer trainer(corpus, policy, emb, tc, SimMode::kSymmetric, {});
    auto [t, gamma] = trainer.anchor_fit(0);
    auto weights = trainer.class_weights();
    std::vector<bool> labels{trainer.neighbor_map().label[1]};

    const Prompt& pa = corpus.at(0).prompt;
    const Prompt& pb = corpus.at(1).prompt;
    auto options = [&](const Prompt& p) {
        auto c = candidate_positions(p);
        std::vector<Segmentation> segs{{}};
        for (std::size_t k = 0; k + 1 < c.size(); ++k) {
            segs.push_back({{c.positions[k]}});
        }
        return segs;
    };
    auto sa = options(pa), sb = options(pb);
    if (sa.size() != 2 || sb.size() != 2) {
        return {false, "instance does not have exactly two candidates per prompt"};
    }
    auto mv = [&](const Prompt& p, const Segmentation& s) { return MultiVector(emb.get_many(apply_segmentation(p, s))); };
    double reward[2][2];
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            double s = std::min(1.0, smaxsim(mv(pa, sa[i]), mv(pb, sb[j])));
            reward[i][j] = step_reward(std::vector<double>{s}, labels, t, gamma, weights);
        }
    }
    auto expected = [&](const SegmentationPolicy& pol) {
        auto ea = pol.encode(pa), eb = pol.encode(pb);
        double j = 0.0;
        for (int i = 0; i < 2; ++i) {
            for (int k = 0; k < 2; ++k) {
                j += std::exp(pol.replay(ea, sa[i]).log_prob + pol.replay(eb, sb[k]).log_prob) * reward[i][k];
            }
        }
        return j;
    };
    double j0 = expected(policy);

    // Central differences of the enumerated objective.
    std::vector<double> fd;
    std::vector<std::pair<Eigen::MatrixXd*, Eigen::Index>> coords;
    policy.params().visit([&](const char*, Eigen::MatrixXd& m) {
        for (Eigen::Index k = 0; k < m.size(); ++k) {
            coords.push_back({&m, k});
        }
    });
    const double h = 1e-5;
    for (auto [m, k] : coords) {
        double orig = m->data()[k];
        m->data()[k] = orig + h;
        double up = expected(policy);
        m->data()[k] = orig - h;
        double down = expected(policy);
        m->data()[k] = orig;
        fd.push_back((up - down) / (2.0 * h));
    }

    // Score-function estimate with 10^5 joint samples and the exact
    // expected reward as a fixed baseline, in batches to bound memory.
    auto total = policy.params().zeros_like();
    constexpr std::size_t kBatches = 10, kPerBatch = 10000;
    for (std::size_t b = 0; b < kBatches; ++b) {
        auto est = trainer.estimate_gradient(0, kPerBatch, j0);
        total.add_scaled(est.grad, 1.0 / kBatches);
    }
    std::vector<double> mc;
    total.visit([&](const char*, const Eigen::MatrixXd& m) {
        for (Eigen::Index k = 0; k < m.size(); ++k) {
            mc.push_back(m.data()[k]);
        }
    });

    std::vector<std::size_t> order(fd.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::partial_sort(order.begin(), order.begin() + 10, order.end(),
                      [&](std::size_t x, std::size_t y) { return std::abs(fd[x]) > std::abs(fd[y]); });
    double worst = 0.0;
    for (std::size_t r = 0; r < 10; ++r) {
        auto i = order[r];
        worst = std::max(worst, std::abs(mc[i] - fd[i]) / std::abs(fd[i]));
    }
    return {worst <= 0.05, fmt("params=%zu J=%.6f rewards=[%.4f %.4f %.4f %.4f] top10_max_rel_err=%.4f", fd.size(), j0,
                               reward[0][0], reward[0][1], reward[1][0], reward[1][1], worst)};
}

// ---------------------------------------------------------------- 7

Outcome pointer_invariants() {
    std::mt19937_64 rng(7);
    const std::vector<std::string> words{"summarize", "list", "the", "three", "points", "and", "format", "as",
                                         "bullets", "please", "review", "movie", "why", "how", "is", "it"};
    const std::string punct = ",.;:!?";
    std::size_t masked_nonzero = 0, non_increasing = 0, too_long = 0, greedy_mismatch = 0, lp_mismatch = 0;
    std::size_t decodes = 0;
    std::vector<SegmentationPolicy> policies;
    for (std::uint64_t s = 1; s <= 10; ++s) {
        policies.emplace_back(tiny_policy(s));
    }
    while (decodes < 10000) {
        std::string text;
        std::size_t len = 1 + rng() % 24;
        for (std::size_t i = 0; i < len; ++i) {
            text += words[rng() % words.size()];
            if (rng() % 4 == 0) {
                text += punct[rng() % punct.size()];
            }
            text += ' ';
        }
        auto prompt = make_prompt("p", text);
        const auto& policy = policies[rng() % policies.size()];
        auto enc = policy.encode(prompt);
        auto g1 = policy.decode(enc, DecodeMode::kGreedy);
        auto g2 = policy.decode(enc, DecodeMode::kGreedy);
        greedy_mismatch += !(g1.segmentation == g2.segmentation) || g1.log_prob != g2.log_prob;
        for (int rep = 0; rep < 9; ++rep) {
            auto tr = policy.decode(enc, DecodeMode::kSample, &rng);
            ++decodes;
            too_long += tr.steps.size() > enc.candidates.size();
            const auto& sp = tr.segmentation.splits;
            for (std::size_t k = 1; k < sp.size(); ++k) {
                non_increasing += sp[k] <= sp[k - 1];
            }
            double lp = 0.0;
            std::size_t last = 0;
            for (const auto& st : tr.steps) {
                std::vector<char> mask(enc.candidates.size(), 0);
                for (std::size_t c = 0; c < mask.size(); ++c) {
                    mask[c] = enc.candidates.positions[c] > last;
                }
                auto dist = policy.step_distribution(enc, st.d, mask);
                for (std::size_t c = 0; c < mask.size(); ++c) {
                    masked_nonzero += !mask[c] && dist[c] != 0.0;
                }
                lp += std::log(st.probs[st.chosen]);
                last = enc.candidates.positions[st.admissible[st.chosen]];
            }
            lp_mismatch += std::abs(lp - tr.log_prob) > 1e-9 ||
                           std::abs(policy.replay(enc, tr.segmentation).log_prob - tr.log_prob) > 1e-9;
        }
    }
    bool ok = masked_nonzero == 0 && non_increasing == 0 && too_long == 0 && greedy_mismatch == 0 && lp_mismatch == 0;
    return {ok, fmt("decodes=%zu masked_nonzero=%zu non_increasing=%zu over_length=%zu greedy_mismatch=%zu "
                    "log_prob_mismatch=%zu",
                    decodes, masked_nonzero, non_increasing, too_long, greedy_mismatch, lp_mismatch)};
}

// ---------------------------------------------------------------- 8

Outcome loss_monotonicity() {
    const double sigma = 0.2;
    const std::size_t n = 100000;
    std::vector<double> losses;
    for (int k = 1; k <= 9; ++k) {
        losses.push_back(population_loss_mc(k / 10.0, sigma, n, 8));
    }
    bool monotone = true;
    for (std::size_t k = 1; k < losses.size(); ++k) {
        monotone = monotone && losses[k] < losses[k - 1];
    }
    double zero_gap = std::abs(population_loss_mc(0.0, sigma, n, 8) - std::log(2.0));
    // Shifting both means by a power of two keeps every offset exact.
    double dyadic_a = population_loss_mc(GaussianPair{0.75, 0.25, sigma}, n, 8);
    double dyadic_b = population_loss_mc(GaussianPair{0.5, 0.0, sigma}, n, 8);
    // 0.9 - 0.3 and 0.7 - 0.1 are different doubles, so only rounding-level
    // agreement is possible for this pair.
    double stated_gap = std::abs(population_loss_mc(GaussianPair{0.9, 0.3, sigma}, n, 8) -
                                 population_loss_mc(GaussianPair{0.7, 0.1, sigma}, n, 8));
    bool ok = monotone && zero_gap <= 1e-3 && dyadic_a == dyadic_b && stated_gap <= 1e-12;
    return {ok, fmt("L(0.1)=%.5f L(0.9)=%.5f strictly_decreasing=%d |L(0)-ln2|=%.3g shift_exact=%d "
                    "gap(0.9,0.3 vs 0.7,0.1)=%.3g",
                    losses.front(), losses.back(), monotone, zero_gap, dyadic_a == dyadic_b, stated_gap)};
}

// ---------------------------------------------------------------- 9

Outcome midpoint_checks() {
    GaussianPair pair{0.8, 0.4, 0.1};
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        worst = std::max(worst, logodds_identity_check(pair, i / 999.0));
    }
    GaussianPair flow_pair{0.7, 0.3, 0.1};
    auto flow = midpoint_flow_sim(flow_pair, closed_form_params(flow_pair).gamma, 1000, 1e-3);
    bool ok = worst < 1e-9 && flow.drift < 1e-3 && flow.separation_growth > 0.0;
    return {ok, fmt("max_logodds_residual=%.3g drift=%.3g separation %.4f -> %.4f", worst, flow.drift,
                    flow.initial_separation, flow.final_separation)};
}

// ---------------------------------------------------------------- 10 and 12

SynthConfig e2e_corpus() {
    return SynthConfig{};
}

RunConfig e2e_config(const fs::path& corpus, const fs::path& out) {
    RunConfig c;
    c.corpus = corpus;
    c.out = out;
    c.region = RegionMode::kLikelihoodMax;
    c.train.max_neighbors = 16;
    return c;
}

struct E2E {
    double mvr_hit = 0, mvr_err = 0, sv_hit = 0, sv_err = 0;
    double seconds = 0;
};

E2E run_e2e(const fs::path& dir) {
    auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(dir);
    write_corpus(dir / "corpus.jsonl", generate_synthetic_corpus(e2e_corpus()));
    auto train = e2e_config(dir / "corpus.jsonl", dir / "train");
    run_train(train);
    auto mvr = e2e_config(dir / "corpus.jsonl", dir / "mvr-cache");
    mvr.checkpoint = train.out / "policy.json";
    auto m = run_replay(mvr);
    auto sv = e2e_config(dir / "corpus.jsonl", dir / "single-vector");
    sv.mode = BaselineMode::kSingleVector;
    auto s = run_replay(sv);
    E2E r{m.final_hit_rate(), m.final_error_rate(), s.final_hit_rate(), s.final_error_rate()};
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

Outcome end_to_end() {
    auto r = run_e2e(g_work / "e2e");
    const double delta = 0.05;
    bool ok = r.mvr_hit >= r.sv_hit + 0.05 && r.mvr_err <= delta && r.sv_err <= delta && r.seconds < 1200.0;
    return {ok, fmt("mvr-cache hit=%.4f err=%.4f | single-vector hit=%.4f err=%.4f | gain=%+.1fpp | %.0f s",
                    r.mvr_hit, r.mvr_err, r.sv_hit, r.sv_err, 100.0 * (r.mvr_hit - r.sv_hit), r.seconds)};
}

// ---------------------------------------------------------------- 11

Outcome retrieval_soundness() {
    SynthConfig sc;
    sc.scenarios = 40;
    sc.topic_templates = 3;
    sc.sentiment_last = false;
    sc.train = 500;
    sc.val = 0;
    sc.test = 300;
    auto corpus = generate_synthetic_corpus(sc);
    EmbeddingCache emb(std::make_shared<HashEmbedder>(EmbedderConfig{}));
    SplitAllSegmenter seg(CandidateVariant::kPunctuation);
    SemanticCache cache(emb.fingerprint(), emb.dimension(), StoreConfig{20});
    for (auto i : corpus.split("train")) {
        auto r = represent(corpus.at(i).prompt, seg, emb);
        cache.insert(corpus.at(i).prompt, r.segmentation, r.multivector, r.single_vector, corpus.at(i).response,
                     emb.fingerprint());
    }
    std::size_t full_mismatch = 0, dominance = 0, recall = 0, queries = 0;
    for (auto i : corpus.split("test")) {
        auto r = represent(corpus.at(i).prompt, seg, emb);
        auto scan = cache.full_scan_nn(r.multivector);
        auto all = cache.retrieve_nn(r.multivector, r.single_vector, cache.size());
        auto top = cache.retrieve_nn(r.multivector, r.single_vector, 20);
        ++queries;
        full_mismatch += all->entry_id != scan->entry_id || all->score != scan->score;
        recall += top->entry_id == scan->entry_id;
        for (const auto& c : top->candidates) {
            dominance += c.score > top->score;
        }
        dominance += top->score > scan->score;
    }
    return {cache.size() == 500 && full_mismatch == 0 && dominance == 0,
            fmt("entries=%zu queries=%zu full_scan_mismatch=%zu dominance_violations=%zu recall@20=%.3f",
                cache.size(), queries, full_mismatch, dominance, static_cast<double>(recall) / queries)};
}

// ---------------------------------------------------------------- 12

// Runs an artifact-producing command twice into the same directory and
// compares the deterministic files byte for byte.
std::string rerun_diff(const fs::path& out, const std::function<void()>& run) {
    fs::remove_all(out);
    run();
    auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
    std::map<std::string, std::string> first;
    for (const auto& f : manifest["deterministic_files"]) {
        first[f.get<std::string>()] = slurp(out / f.get<std::string>());
    }
    fs::remove_all(out);
    run();
    std::string bad;
    for (const auto& [name, bytes] : first) {
        if (slurp(out / name) != bytes) {
            bad += " " + out.filename().string() + "/" + name;
        }
    }
    return bad;
}

Outcome determinism() {
    auto dir = g_work / "determinism";
    fs::create_directories(dir);
    auto corpus = dir / "corpus.jsonl";
    write_corpus(corpus, generate_synthetic_corpus(e2e_corpus()));
    std::string first = slurp(corpus);
    write_corpus(corpus, generate_synthetic_corpus(e2e_corpus()));
    std::string bad = first == slurp(corpus) ? "" : " corpus.jsonl";

    auto train = e2e_config(corpus, dir / "train");
    train.train.steps = 40;
    train.train.refresh_every = 20;
    bad += rerun_diff(train.out, [&] { run_train(train); });
    std::size_t checked = 1 + 1;
    for (auto mode : {BaselineMode::kMvrCache, BaselineMode::kSingleVector, BaselineMode::kTokenLevel,
                      BaselineMode::kSentenceHeuristic}) {
        auto c = e2e_config(corpus, dir / std::string(to_string(mode)));
        c.mode = mode;
        c.checkpoint = train.out / "policy.json";
        bad += rerun_diff(c.out, [&] { run_replay(c); });
        ++checked;
    }
    auto cross = e2e_config(corpus, dir / "crossdomain");
    cross.checkpoint = train.out / "policy.json";
    bad += rerun_diff(cross.out, [&] { run_crossdomain(train, cross); });
    auto th = e2e_config(corpus, dir / "theory");
    th.mode = BaselineMode::kSingleVector;
    TheoryConfig tc;
    bad += rerun_diff(th.out, [&] { run_theory(th, tc); });
    checked += 2;

    // The end-to-end run of criterion 10, when present, is repeated as well.
    auto e2e = g_work / "e2e";
    if (fs::exists(e2e / "mvr-cache" / "steps.csv")) {
        auto again = g_work / "e2e_rerun";
        fs::remove_all(again);
        run_e2e(again);
        for (const auto* sub : {"train", "mvr-cache", "single-vector"}) {
            auto manifest = nlohmann::json::parse(slurp(e2e / sub / "manifest.json"));
            for (const auto& f : manifest["deterministic_files"]) {
                auto name = f.get<std::string>();
                if (name == "manifest.json") {
                    continue;  // records the output path, which differs
                }
                if (slurp(e2e / sub / name) != slurp(again / sub / name)) {
                    bad += std::string(" e2e/") + sub + "/" + name;
                }
            }
        }
        checked += 3;
    }
    return {bad.empty(), fmt("commands_rerun=%zu differing:%s", checked, bad.empty() ? " none" : bad.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    g_work = fs::current_path() / "acceptance_work";
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        if (a == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            for (std::string x; std::getline(ss, x, ',');) {
                only.insert(std::stoi(x));
            }
        } else if (a == "--work" && i + 1 < argc) {
            g_work = argv[++i];
        } else {
            std::fprintf(stderr, "usage: %s [--only N[,N...]] [--work DIR]\n", argv[0]);
            return 2;
        }
    }
    fs::create_directories(g_work);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"maxsim exactness", maxsim_exactness},
        {"smaxsim properties", smaxsim_properties},
        {"logistic MLE recovery", mle_recovery},
        {"exploration probability algebra", tau_algebra},
        {"error-rate guarantee", error_guarantee},
        {"score-function gradient", reinforce_gradient},
        {"pointer-policy invariants", pointer_invariants},
        {"population loss monotonicity", loss_monotonicity},
        {"log-odds identity and midpoint flow", midpoint_checks},
        {"end-to-end segmentation benefit", end_to_end},
        {"two-stage retrieval soundness", retrieval_soundness},
        {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        int id = static_cast<int>(i + 1);
        if (!only.empty() && !only.count(id)) {
            continue;
        }
        auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
