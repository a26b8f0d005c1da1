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

#include "mvrcache/segment.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "mvrcache/error.h"
#include "mvrcache/hash.h"

namespace mvrcache {

namespace {

constexpr std::uint64_t kTokenSalt = 0x3c6ef372fe94f82bULL;
constexpr int kCheckpointVersion = 1;

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<MatrixXd*> tensors(PolicyParams& p) {
    std::vector<MatrixXd*> out;
    p.visit([&](const char*, MatrixXd& m) { out.push_back(&m); });
    return out;
}

std::vector<const MatrixXd*> tensors(const PolicyParams& p) {
    std::vector<const MatrixXd*> out;
    p.visit([&](const char*, const MatrixXd& m) { out.push_back(&m); });
    return out;
}

MatrixXd sigmoid(const MatrixXd& x) {
    return (1.0 + (-x.array()).exp()).inverse().matrix();
}

LstmTrace lstm_forward(const MatrixXd& w, const MatrixXd& u, const MatrixXd& b, const MatrixXd& x,
                       const VectorXd& h0, const VectorXd& c0) {
    const auto n = u.cols();
    const auto steps = x.cols();
    LstmTrace tr;
    tr.x = x;
    tr.act.resize(4 * n, steps);
    tr.h.resize(n, steps + 1);
    tr.c.resize(n, steps + 1);
    tr.h.col(0) = h0;
    tr.c.col(0) = c0;
    MatrixXd pre = w * x;
    pre.colwise() += b.col(0);
    VectorXd g(4 * n);
    for (Eigen::Index t = 0; t < steps; ++t) {
        g.noalias() = pre.col(t) + u * tr.h.col(t);
        auto a = tr.act.col(t);
        a.segment(0, 2 * n) = sigmoid(g.segment(0, 2 * n));
        a.segment(2 * n, n) = g.segment(2 * n, n).array().tanh().matrix();
        a.segment(3 * n, n) = sigmoid(g.segment(3 * n, n));
        tr.c.col(t + 1) = a.segment(n, n).cwiseProduct(tr.c.col(t)) + a.segment(0, n).cwiseProduct(a.segment(2 * n, n));
        tr.h.col(t + 1) = a.segment(3 * n, n).cwiseProduct(tr.c.col(t + 1).array().tanh().matrix());
    }
    return tr;
}

struct LstmGrads {
    MatrixXd dx;
    VectorXd dh0;
    VectorXd dc0;
};

// dh_out(:, t) is the gradient on h_{t+1}; dh_final/dc_final act on the last state.
LstmGrads lstm_backward(const MatrixXd& w, const MatrixXd& u, const LstmTrace& tr, const MatrixXd& dh_out,
                        const VectorXd& dh_final, const VectorXd& dc_final, MatrixXd& gw, MatrixXd& gu,
                        MatrixXd& gb) {
    const auto n = u.cols();
    const auto steps = tr.x.cols();
    MatrixXd dg(4 * n, steps);
    VectorXd dh_next = dh_final;
    VectorXd dc_next = dc_final;
    for (Eigen::Index t = steps - 1; t >= 0; --t) {
        auto a = tr.act.col(t);
        auto i = a.segment(0, n).array();
        auto f = a.segment(n, n).array();
        auto gg = a.segment(2 * n, n).array();
        auto o = a.segment(3 * n, n).array();
        Eigen::ArrayXd dh = dh_next.array();
        if (dh_out.cols() > 0) {
            dh += dh_out.col(t).array();
        }
        Eigen::ArrayXd tc = tr.c.col(t + 1).array().tanh();
        Eigen::ArrayXd dc = dc_next.array() + dh * o * (1.0 - tc.square());
        dg.col(t).segment(0, n) = (dc * gg * i * (1.0 - i)).matrix();
        dg.col(t).segment(n, n) = (dc * tr.c.col(t).array() * f * (1.0 - f)).matrix();
        dg.col(t).segment(2 * n, n) = (dc * i * (1.0 - gg.square())).matrix();
        dg.col(t).segment(3 * n, n) = (dh * tc * o * (1.0 - o)).matrix();
        dc_next = (dc * f).matrix();
        dh_next.noalias() = u.transpose() * dg.col(t);
    }
    gu.noalias() += dg * tr.h.leftCols(steps).transpose();
    gw.noalias() += dg * tr.x.transpose();
    gb.col(0) += dg.rowwise().sum();
    return {w.transpose() * dg, dh_next, dc_next};
}

void fill_uniform(MatrixXd& m, Eigen::Index rows, Eigen::Index cols, double scale, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    m.resize(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            m(i, j) = dist(rng);
        }
    }
}

void init_lstm(MatrixXd& w, MatrixXd& u, MatrixXd& b, Eigen::Index in, Eigen::Index n, std::mt19937_64& rng) {
    double s = 1.0 / std::sqrt(static_cast<double>(n));
    fill_uniform(w, 4 * n, in, s, rng);
    fill_uniform(u, 4 * n, n, s, rng);
    b = MatrixXd::Zero(4 * n, 1);
    b.block(n, 0, n, 1).setOnes();
}

std::size_t token_bucket(const std::string& token, std::size_t buckets) {
    return splitmix64(fnv1a64(token) ^ kTokenSalt) % buckets;
}

}  // namespace

CandidateVariant parse_candidate_variant(std::string_view name) {
    if (name == "punctuation") return CandidateVariant::kPunctuation;
    if (name == "sentence") return CandidateVariant::kSentence;
    if (name == "keyword") return CandidateVariant::kKeyword;
    if (name == "token") return CandidateVariant::kToken;
    throw Error(ErrorCode::kConfig, "unknown candidate variant \"" + std::string(name) + "\"");
}

std::string_view to_string(CandidateVariant v) {
    switch (v) {
        case CandidateVariant::kPunctuation: return "punctuation";
        case CandidateVariant::kSentence: return "sentence";
        case CandidateVariant::kKeyword: return "keyword";
        case CandidateVariant::kToken: return "token";
    }
    return "punctuation";
}

CandidatePositions candidate_positions(const Prompt& prompt, CandidateVariant variant, std::string_view punctuation) {
    const auto n = prompt.length();
    std::vector<std::size_t> pos;
    for (std::size_t k = 1; k < n; ++k) {
        const auto& tok = prompt.tokens[k - 1];
        bool punct = is_punctuation_token(tok, punctuation);
        if (variant == CandidateVariant::kToken) {
            pos.push_back(k);
        } else if (punct && !(variant == CandidateVariant::kSentence && tok == ",")) {
            pos.push_back(k);
        }
        if (variant == CandidateVariant::kKeyword && k >= 2 && (tok == "and" || tok == "or")) {
            pos.push_back(k - 1);
        }
    }
    std::sort(pos.begin(), pos.end());
    pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
    pos.push_back(n);
    return {std::move(pos)};
}

std::vector<std::string> apply_segmentation(const Prompt& prompt, const Segmentation& seg) {
    const auto n = prompt.length();
    std::vector<std::string> out;
    std::size_t prev = 0;
    auto emit = [&](std::size_t end) {
        if (end <= prev || end > n) {
            throw Error(ErrorCode::kInvalidSegmentation,
                        "split " + std::to_string(end) + " after " + std::to_string(prev) + " with L=" +
                            std::to_string(n));
        }
        std::string text;
        for (std::size_t k = prev; k < end; ++k) {
            if (!text.empty()) {
                text.push_back(' ');
            }
            text += prompt.tokens[k];
        }
        out.push_back(std::move(text));
        prev = end;
    };
    for (auto p : seg.splits) {
        if (p >= n) {
            throw Error(ErrorCode::kInvalidSegmentation,
                        "split " + std::to_string(p) + " is not below L=" + std::to_string(n));
        }
        emit(p);
    }
    emit(n);
    return out;
}

void SegmenterConfig::validate() const {
    if (vocab_buckets < 1 || token_dim < 1 || hidden < 2 || hidden % 2 != 0) {
        throw Error(ErrorCode::kConfig, "segmenter needs positive sizes and an even hidden size");
    }
    if (max_segments < 1) {
        throw Error(ErrorCode::kConfig, "max_segments must be >= 1");
    }
}

std::string SegmenterConfig::fingerprint() const {
    std::ostringstream os;
    os << "ptr-v1;punct=" << punctuation << ";cand=" << to_string(variant) << ";V=" << vocab_buckets
       << ";dtok=" << token_dim << ";H=" << hidden << ";mmax=" << max_segments;
    return os.str();
}

PolicyParams PolicyParams::zeros_like() const {
    PolicyParams out = *this;
    for (auto* m : tensors(out)) {
        m->setZero();
    }
    return out;
}

std::size_t PolicyParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto* m : tensors(*this)) {
        n += static_cast<std::size_t>(m->size());
    }
    return n;
}

void PolicyParams::add_scaled(const PolicyParams& other, double scale) {
    auto a = tensors(*this);
    auto b = tensors(other);
    for (std::size_t i = 0; i < a.size(); ++i) {
        *a[i] += scale * *b[i];
    }
}

double PolicyParams::squared_norm() const {
    double s = 0.0;
    for (const auto* m : tensors(*this)) {
        s += m->squaredNorm();
    }
    return s;
}

bool PolicyParams::all_finite() const {
    for (const auto* m : tensors(*this)) {
        if (!m->allFinite()) {
            return false;
        }
    }
    return true;
}

SegmentationPolicy::SegmentationPolicy(SegmenterConfig config) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(config_.init_seed);
    const auto dt = static_cast<Eigen::Index>(config_.token_dim);
    const auto hid = static_cast<Eigen::Index>(config_.hidden);
    const auto half = hid / 2;
    const double s = 1.0 / std::sqrt(static_cast<double>(hid));
    auto& p = params_;
    fill_uniform(p.emb, dt, static_cast<Eigen::Index>(config_.vocab_buckets), 0.5, rng);
    init_lstm(p.ef_w, p.ef_u, p.ef_b, dt, half, rng);
    init_lstm(p.eb_w, p.eb_u, p.eb_b, dt, half, rng);
    fill_uniform(p.wp, hid, hid, s, rng);
    p.bp = MatrixXd::Zero(hid, 1);
    init_lstm(p.dw, p.du, p.db, hid, hid, rng);
    fill_uniform(p.w1, hid, hid, s, rng);
    fill_uniform(p.w2, hid, hid, s, rng);
    fill_uniform(p.v, hid, 1, s, rng);
    fill_uniform(p.h_stop, hid, 1, 0.5, rng);
}

EncodedPrompt SegmentationPolicy::encode(const Prompt& prompt) const {
    return encode(prompt, candidate_positions(prompt, config_.variant, config_.punctuation));
}

EncodedPrompt SegmentationPolicy::encode(const Prompt& prompt, const CandidatePositions& candidates) const {
    const auto n = static_cast<Eigen::Index>(prompt.length());
    if (n == 0) {
        throw Error(ErrorCode::kInvalidSegmentation, "cannot encode an empty prompt");
    }
    if (candidates.positions.empty() || candidates.stop() != prompt.length()) {
        throw Error(ErrorCode::kInvalidSegmentation, "candidate list must end with the stop slot");
    }
    const auto& p = params_;
    const auto hid = static_cast<Eigen::Index>(config_.hidden);
    const auto half = hid / 2;

    EncodedPrompt enc;
    enc.candidates = candidates;
    enc.buckets.reserve(prompt.length());
    MatrixXd x(p.emb.rows(), n);
    MatrixXd xr(p.emb.rows(), n);
    for (Eigen::Index t = 0; t < n; ++t) {
        auto b = token_bucket(prompt.tokens[static_cast<std::size_t>(t)], config_.vocab_buckets);
        enc.buckets.push_back(b);
        x.col(t) = p.emb.col(static_cast<Eigen::Index>(b));
    }
    xr = x.rowwise().reverse();
    VectorXd zh = VectorXd::Zero(half);
    enc.enc_f = lstm_forward(p.ef_w, p.ef_u, p.ef_b, x, zh, zh);
    enc.enc_b = lstm_forward(p.eb_w, p.eb_u, p.eb_b, xr, zh, zh);
    enc.e.resize(hid, n);
    enc.e.topRows(half) = enc.enc_f.h.rightCols(n);
    enc.e.bottomRows(half) = enc.enc_b.h.rightCols(n).rowwise().reverse();
    MatrixXd pre = p.wp * enc.e;
    pre.colwise() += p.bp.col(0);
    enc.h = pre.array().tanh().matrix();

    VectorXd z = VectorXd::Zero(hid);
    enc.init = lstm_forward(p.dw, p.du, p.db, enc.h, z, z);

    const auto slots = static_cast<Eigen::Index>(candidates.size());
    enc.pointers.resize(hid, slots);
    for (Eigen::Index k = 0; k + 1 < slots; ++k) {
        auto pos = candidates.positions[static_cast<std::size_t>(k)];
        if (pos < 1 || pos >= prompt.length()) {
            throw Error(ErrorCode::kInvalidSegmentation, "candidate " + std::to_string(pos) + " out of range");
        }
        enc.pointers.col(k) = enc.h.col(static_cast<Eigen::Index>(pos) - 1);
    }
    enc.pointers.col(slots - 1) = p.h_stop.col(0);
    enc.w1p.noalias() = p.w1 * enc.pointers;
    return enc;
}

DecoderState SegmentationPolicy::initial_state(const EncodedPrompt& enc) const {
    auto steps = enc.init.x.cols();
    return {enc.init.h.col(steps), enc.init.c.col(steps), 0, 0};
}

namespace {

struct StepScores {
    std::vector<std::size_t> admissible;
    std::vector<double> probs;
    MatrixXd z;
};

StepScores score_step(const PolicyParams& p, const EncodedPrompt& enc, const VectorXd& d,
                      const std::vector<char>& mask) {
    StepScores out;
    for (std::size_t k = 0; k < mask.size(); ++k) {
        if (mask[k]) {
            out.admissible.push_back(k);
        }
    }
    if (out.admissible.empty()) {
        throw Error(ErrorCode::kInvalidSegmentation, "mask admits no position");
    }
    VectorXd bvec = p.w2 * d;
    const auto a = static_cast<Eigen::Index>(out.admissible.size());
    out.z.resize(bvec.size(), a);
    std::vector<double> u(out.admissible.size());
    double umax = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < a; ++j) {
        out.z.col(j) = (enc.w1p.col(static_cast<Eigen::Index>(out.admissible[j])) + bvec).array().tanh().matrix();
        u[j] = p.v.col(0).dot(out.z.col(j));
        if (!std::isfinite(u[j])) {
            throw Error(ErrorCode::kNumeric, "non-finite pointer logit at slot " + std::to_string(out.admissible[j]));
        }
        umax = std::max(umax, u[j]);
    }
    double total = 0.0;
    out.probs.resize(u.size());
    for (std::size_t j = 0; j < u.size(); ++j) {
        out.probs[j] = std::exp(u[j] - umax);
        total += out.probs[j];
    }
    for (auto& q : out.probs) {
        q /= total;
    }
    return out;
}

}  // namespace

std::vector<double> SegmentationPolicy::step_distribution(const EncodedPrompt& enc, const VectorXd& d,
                                                          const std::vector<char>& mask) const {
    if (mask.size() != enc.candidates.size()) {
        throw Error(ErrorCode::kConfig, "mask length does not match the candidate list");
    }
    auto s = score_step(params_, enc, d, mask);
    std::vector<double> out(mask.size(), 0.0);
    for (std::size_t j = 0; j < s.admissible.size(); ++j) {
        out[s.admissible[j]] = s.probs[j];
    }
    return out;
}

std::vector<double> policy_step(const SegmentationPolicy& policy, const EncodedPrompt& enc,
                                const DecoderState& state, const std::vector<char>& mask) {
    return policy.step_distribution(enc, state.d, mask);
}

DecodeTrace SegmentationPolicy::decode(const EncodedPrompt& enc, DecodeMode mode, std::mt19937_64* rng) const {
    if (mode == DecodeMode::kSample && rng == nullptr) {
        throw Error(ErrorCode::kConfig, "sampled decoding needs an rng");
    }
    return run(enc, mode, rng, nullptr);
}

DecodeTrace SegmentationPolicy::replay(const EncodedPrompt& enc, const Segmentation& seg) const {
    return run(enc, DecodeMode::kGreedy, nullptr, &seg);
}

DecodeTrace SegmentationPolicy::run(const EncodedPrompt& enc, DecodeMode mode, std::mt19937_64* rng,
                                    const Segmentation* forced) const {
    const auto& cand = enc.candidates.positions;
    const auto slots = cand.size();
    const auto stop_slot = slots - 1;
    auto state = initial_state(enc);
    DecodeTrace trace;
    std::vector<char> mask(slots, 1);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    while (true) {
        auto sc = score_step(params_, enc, state.d, mask);
        std::size_t pick = 0;
        if (forced != nullptr) {
            auto k = trace.segmentation.splits.size();
            auto want = k < forced->splits.size() ? forced->splits[k] : enc.candidates.stop();
            auto it = std::find_if(sc.admissible.begin(), sc.admissible.end(),
                                   [&](std::size_t slot) { return cand[slot] == want; });
            if (it == sc.admissible.end()) {
                throw Error(ErrorCode::kInvalidSegmentation,
                            "split " + std::to_string(want) + " is not reachable under the mask");
            }
            pick = static_cast<std::size_t>(it - sc.admissible.begin());
        } else if (mode == DecodeMode::kGreedy) {
            for (std::size_t j = 1; j < sc.probs.size(); ++j) {
                if (sc.probs[j] > sc.probs[pick]) {
                    pick = j;
                }
            }
        } else {
            double r = unif(*rng);
            double acc = 0.0;
            pick = sc.probs.size() - 1;
            for (std::size_t j = 0; j < sc.probs.size(); ++j) {
                acc += sc.probs[j];
                if (r < acc) {
                    pick = j;
                    break;
                }
            }
        }
        DecodeStep step;
        step.admissible = std::move(sc.admissible);
        step.probs = std::move(sc.probs);
        step.z = std::move(sc.z);
        step.chosen = pick;
        step.d = state.d;
        trace.log_prob += std::log(step.probs[pick]);
        auto slot = step.admissible[pick];
        ++state.step;

        bool done = slot == stop_slot;
        if (!done) {
            trace.segmentation.splits.push_back(cand[slot]);
            state.last = cand[slot];
            done = trace.segmentation.splits.size() + 1 >= config_.max_segments;
        }
        if (!done) {
            for (std::size_t k = 0; k <= slot; ++k) {
                mask[k] = 0;
            }
            VectorXd r = VectorXd::Zero(enc.pointers.rows());
            for (std::size_t j = 0; j < step.admissible.size(); ++j) {
                r += step.probs[j] * enc.pointers.col(static_cast<Eigen::Index>(step.admissible[j]));
            }
            step.next = lstm_forward(params_.dw, params_.du, params_.db, r, state.d, state.c);
            state.d = step.next.h.col(1);
            state.c = step.next.c.col(1);
        }
        trace.steps.push_back(std::move(step));
        if (done) {
            break;
        }
    }
    return trace;
}

void SegmentationPolicy::accumulate_log_prob_grad(const EncodedPrompt& enc,
                                                  const std::vector<const DecodeTrace*>& traces,
                                                  const std::vector<double>& weights, PolicyParams& grad) const {
    const auto& p = params_;
    const auto hid = static_cast<Eigen::Index>(config_.hidden);
    const auto half = hid / 2;
    const auto n = enc.h.cols();
    const auto slots = enc.pointers.cols();

    MatrixXd d_w1p = MatrixXd::Zero(hid, slots);
    MatrixXd d_ptr = MatrixXd::Zero(hid, slots);
    VectorXd dd1 = VectorXd::Zero(hid);
    VectorXd dc1 = VectorXd::Zero(hid);
    bool any = false;

    for (std::size_t s = 0; s < traces.size(); ++s) {
        const double w = weights[s];
        if (w == 0.0) {
            continue;
        }
        any = true;
        const auto& tr = *traces[s];
        VectorXd dd = VectorXd::Zero(hid);
        VectorXd dc = VectorXd::Zero(hid);
        for (auto k = static_cast<std::ptrdiff_t>(tr.steps.size()) - 1; k >= 0; --k) {
            const auto& st = tr.steps[static_cast<std::size_t>(k)];
            const auto a = static_cast<Eigen::Index>(st.admissible.size());
            VectorXd dr = VectorXd::Zero(hid);
            if (st.next.x.cols() > 0) {
                auto g = lstm_backward(p.dw, p.du, st.next, MatrixXd(), dd, dc, grad.dw, grad.du, grad.db);
                dr = g.dx.col(0);
                dd = g.dh0;
                dc = g.dc0;
            }
            Eigen::VectorXd du(a);
            Eigen::VectorXd da(a);
            for (Eigen::Index j = 0; j < a; ++j) {
                auto col = static_cast<Eigen::Index>(st.admissible[static_cast<std::size_t>(j)]);
                da(j) = dr.dot(enc.pointers.col(col));
                d_ptr.col(col) += st.probs[static_cast<std::size_t>(j)] * dr;
            }
            double mean_da = 0.0;
            for (Eigen::Index j = 0; j < a; ++j) {
                mean_da += st.probs[static_cast<std::size_t>(j)] * da(j);
            }
            for (Eigen::Index j = 0; j < a; ++j) {
                double pj = st.probs[static_cast<std::size_t>(j)];
                double ind = static_cast<std::size_t>(j) == st.chosen ? 1.0 : 0.0;
                du(j) = w * (ind - pj) + pj * (da(j) - mean_da);
            }
            grad.v.col(0).noalias() += st.z * du;
            MatrixXd dpre = (p.v.col(0) * du.transpose()).cwiseProduct((1.0 - st.z.array().square()).matrix());
            for (Eigen::Index j = 0; j < a; ++j) {
                d_w1p.col(static_cast<Eigen::Index>(st.admissible[static_cast<std::size_t>(j)])) += dpre.col(j);
            }
            VectorXd db = dpre.rowwise().sum();
            grad.w2.noalias() += db * st.d.transpose();
            dd.noalias() += p.w2.transpose() * db;
        }
        dd1 += dd;
        dc1 += dc;
    }
    if (!any) {
        return;
    }

    grad.w1.noalias() += d_w1p * enc.pointers.transpose();
    d_ptr.noalias() += p.w1.transpose() * d_w1p;
    grad.h_stop.col(0) += d_ptr.col(slots - 1);

    auto gi = lstm_backward(p.dw, p.du, enc.init, MatrixXd(), dd1, dc1, grad.dw, grad.du, grad.db);
    MatrixXd dh = gi.dx;
    for (Eigen::Index k = 0; k + 1 < slots; ++k) {
        dh.col(static_cast<Eigen::Index>(enc.candidates.positions[static_cast<std::size_t>(k)]) - 1) += d_ptr.col(k);
    }
    MatrixXd dpre = dh.cwiseProduct((1.0 - enc.h.array().square()).matrix());
    grad.wp.noalias() += dpre * enc.e.transpose();
    grad.bp.col(0) += dpre.rowwise().sum();
    MatrixXd de = p.wp.transpose() * dpre;

    MatrixXd dhf = de.topRows(half);
    MatrixXd dhb = de.bottomRows(half).rowwise().reverse();
    VectorXd zh = VectorXd::Zero(half);
    auto gf = lstm_backward(p.ef_w, p.ef_u, enc.enc_f, dhf, zh, zh, grad.ef_w, grad.ef_u, grad.ef_b);
    auto gb = lstm_backward(p.eb_w, p.eb_u, enc.enc_b, dhb, zh, zh, grad.eb_w, grad.eb_u, grad.eb_b);
    for (Eigen::Index t = 0; t < n; ++t) {
        grad.emb.col(static_cast<Eigen::Index>(enc.buckets[static_cast<std::size_t>(t)])) +=
            gf.dx.col(t) + gb.dx.col(n - 1 - t);
    }
}

void SegmentationPolicy::save(const std::filesystem::path& path) const {
    nlohmann::ordered_json j;
    j["format"] = "mvrcache-policy";
    j["version"] = kCheckpointVersion;
    j["fingerprint"] = config_.fingerprint();
    j["config"] = {{"vocab_buckets", config_.vocab_buckets}, {"token_dim", config_.token_dim},
                   {"hidden", config_.hidden},               {"max_segments", config_.max_segments},
                   {"punctuation", config_.punctuation},     {"variant", to_string(config_.variant)},
                   {"init_seed", config_.init_seed}};
    auto& t = j["tensors"];
    params_.visit([&](const char* name, const MatrixXd& m) {
        t[name] = {{"rows", m.rows()},
                   {"cols", m.cols()},
                   {"data", std::vector<double>(m.data(), m.data() + m.size())}};
    });
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::kIo, "cannot write checkpoint " + path.string());
    }
    out << j.dump() << '\n';
}

SegmentationPolicy SegmentationPolicy::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::kIo, "cannot read checkpoint " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
    }
    if (j.value("format", "") != "mvrcache-policy" || j.value("version", 0) != kCheckpointVersion) {
        throw Error(ErrorCode::kConfig, path.string() + " is not a version " + std::to_string(kCheckpointVersion) +
                                            " policy checkpoint");
    }
    SegmenterConfig cfg;
    const auto& c = j.at("config");
    cfg.vocab_buckets = c.at("vocab_buckets").get<std::size_t>();
    cfg.token_dim = c.at("token_dim").get<std::size_t>();
    cfg.hidden = c.at("hidden").get<std::size_t>();
    cfg.max_segments = c.at("max_segments").get<std::size_t>();
    cfg.punctuation = c.at("punctuation").get<std::string>();
    cfg.variant = parse_candidate_variant(c.at("variant").get<std::string>());
    cfg.init_seed = c.at("init_seed").get<std::uint64_t>();
    if (cfg.fingerprint() != j.at("fingerprint").get<std::string>()) {
        throw Error(ErrorCode::kConfig, "checkpoint fingerprint does not match its config");
    }
    SegmentationPolicy policy(cfg);
    policy.params_.visit([&](const char* name, MatrixXd& m) {
        const auto& t = j.at("tensors").at(name);
        if (t.at("rows").get<Eigen::Index>() != m.rows() || t.at("cols").get<Eigen::Index>() != m.cols()) {
            throw Error(ErrorCode::kConfig, std::string("tensor ") + name + " has the wrong shape");
        }
        auto data = t.at("data").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(data.size()) != m.size()) {
            throw Error(ErrorCode::kConfig, std::string("tensor ") + name + " has the wrong size");
        }
        m = Eigen::Map<const MatrixXd>(data.data(), m.rows(), m.cols());
    });
    if (!policy.params_.all_finite()) {
        throw Error(ErrorCode::kNumeric, "checkpoint holds non-finite parameters");
    }
    return policy;
}

DecodeResult decode(const SegmentationPolicy& policy, const Prompt& prompt, const CandidatePositions& positions,
                    DecodeMode mode, std::uint64_t seed) {
    auto enc = policy.encode(prompt, positions);
    std::mt19937_64 rng(seed);
    auto tr = policy.decode(enc, mode, &rng);
    return {std::move(tr.segmentation), tr.log_prob};
}

SplitAllSegmenter::SplitAllSegmenter(CandidateVariant variant, std::string punctuation, std::size_t max_segments)
    : variant_(variant), punctuation_(std::move(punctuation)), max_segments_(max_segments) {}

Segmentation SplitAllSegmenter::segment(const Prompt& prompt) const {
    auto cand = candidate_positions(prompt, variant_, punctuation_);
    Segmentation seg;
    for (std::size_t k = 0; k + 1 < cand.size(); ++k) {
        if (max_segments_ > 0 && seg.splits.size() + 1 >= max_segments_) {
            break;
        }
        seg.splits.push_back(cand.positions[k]);
    }
    return seg;
}

std::string SplitAllSegmenter::fingerprint() const {
    return "split-all:" + std::string(to_string(variant_)) + ":" + punctuation_ + ":" + std::to_string(max_segments_);
}

Segmentation PolicySegmenter::segment(const Prompt& prompt) const {
    auto enc = policy_->encode(prompt);
    return policy_->decode(enc, DecodeMode::kGreedy).segmentation;
}

Segmentation MemoizedSegmenter::segment(const Prompt& prompt) const {
    {
        std::lock_guard lock(mu_);
        if (auto it = memo_.find(prompt.text); it != memo_.end()) {
            return it->second;
        }
    }
    auto seg = inner_->segment(prompt);
    std::lock_guard lock(mu_);
    memo_.emplace(prompt.text, seg);
    return seg;
}

}  // namespace mvrcache
