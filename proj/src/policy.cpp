#include "rrl/policy.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace rrl {

int PolicyParams::count() const {
    const int h = hidden;
    const int V = vocab_size;
    return V * h + h * raw_context_dim() + h * 2 * h + h + V * h + V;
}

PolicyParams PolicyParams::init(const Vocab& v, int hidden, std::uint64_t seed,
                                std::string_view label) {
    PolicyParams p;
    p.vocab_size = v.size();
    p.hidden = hidden;
    p.flat.assign(p.count(), 0.0);
    RngStream stream = seeded_stream(seed, label);
    // embeddings and projections at scale 0.1, biases zero
    const int weights_end = p.off_bh();
    for (int i = 0; i < weights_end; ++i) p.flat[i] = 0.1 * stream.normal();
    for (int i = p.off_wv(); i < p.off_bv(); ++i) p.flat[i] = 0.1 * stream.normal();
    return p;
}

std::string params_hash(const PolicyParams& p) {
    nlohmann::json j;
    j["vocab_size"] = p.vocab_size;
    j["hidden"] = p.hidden;
    j["flat"] = p.flat;
    return sha256_hex(j.dump());
}

namespace {

void pool_mean(const PolicyParams& params, const TokenSeq& toks, double* out) {
    const int h = params.hidden;
    std::fill(out, out + h, 0.0);
    if (toks.empty()) return;
    for (int t : toks) {
        const double* row = params.emb_row(t);
        for (int k = 0; k < h; ++k) out[k] += row[k];
    }
    const double inv = 1.0 / static_cast<double>(toks.size());
    for (int k = 0; k < h; ++k) out[k] *= inv;
}

}  // namespace

Context encode_context(const WorldSpec& w, const PolicyParams& params, Mode mode,
                       const Instruction* a, const TokenSeq* p0, const Image* first,
                       const Image* second) {
    if (mode == Mode::EVAL && (first == nullptr || second == nullptr))
        throw ContractViolation("encode_context: EVAL mode requires an image pair");

    Context ctx;
    ctx.mode = mode;
    if (a != nullptr) ctx.alias_tokens = a->alias;
    if (p0 != nullptr) ctx.p0_tokens = *p0;

    ctx.psi.assign(PolicyParams::kPairDims, 0.0);
    if (mode == Mode::EVAL) {
        const Image& x1 = *first;
        const Image& x2 = *second;
        if (a != nullptr) {
            ctx.psi[0] = dot(x1.v, a->target);
            ctx.psi[1] = dot(x2.v, a->target);
        }
        if (p0 != nullptr) {
            const Image ref = generate(w, *p0);
            ctx.psi[2] = dot(x1.v, ref.v);
            ctx.psi[3] = dot(x2.v, ref.v);
        }
        ctx.psi[4] = x1.quality;
        ctx.psi[5] = x2.quality;
        ctx.psi[6] = dot(x1.v, x2.v);
    }

    const int h = params.hidden;
    const int R = params.raw_context_dim();
    ctx.raw.assign(R, 0.0);
    pool_mean(params, ctx.alias_tokens, ctx.raw.data());
    pool_mean(params, ctx.p0_tokens, ctx.raw.data() + h);
    ctx.raw[2 * h + (mode == Mode::EVAL ? 0 : 1)] = 1.0;
    for (int i = 0; i < PolicyParams::kPairDims; ++i)
        ctx.raw[2 * h + PolicyParams::kModeDims + i] = ctx.psi[i];

    ctx.projected.assign(h, 0.0);
    const double* wctx = params.flat.data() + params.off_wctx();
    for (int r = 0; r < h; ++r) {
        double acc = 0.0;
        const double* row = wctx + r * R;
        for (int j = 0; j < R; ++j) acc += row[j] * ctx.raw[j];
        ctx.projected[r] = acc;
    }
    return ctx;
}

GrammarCursor::GrammarCursor(const Vocab& v, Mode mode, int think_cap, int answer_cap,
                             bool mask_on)
    : vocab_(&v), mode_(mode), think_cap_(think_cap), answer_cap_(answer_cap), mask_on_(mask_on) {
    rebuild_allowed();
}

void GrammarCursor::rebuild_allowed() {
    allowed_.clear();
    const Vocab& v = *vocab_;
    if (!mask_on_) {
        allowed_.resize(v.size());
        for (int i = 0; i < v.size(); ++i) allowed_[i] = i;
        return;
    }
    auto push_content = [&] {
        for (int id = v.object_begin(); id < v.size(); ++id) allowed_.push_back(id);
    };
    switch (state_) {
        case State::think_open: allowed_.push_back(Vocab::THINK_OPEN); break;
        case State::think_body:
            allowed_.push_back(Vocab::THINK_CLOSE);
            if (think_len_ < think_cap_) push_content();
            break;
        case State::ans_open: allowed_.push_back(Vocab::ANS_OPEN); break;
        case State::ans_body:
            if (mode_ == Mode::EVAL) {
                if (!verdict_emitted_) {
                    allowed_.push_back(Vocab::YES);
                    allowed_.push_back(Vocab::NO);
                } else {
                    allowed_.push_back(Vocab::ANS_CLOSE);
                }
            } else {
                if (ans_len_ == 0) {
                    push_content();
                } else if (ans_len_ >= answer_cap_) {
                    allowed_.push_back(Vocab::ANS_CLOSE);
                } else {
                    allowed_.push_back(Vocab::ANS_CLOSE);
                    push_content();
                }
            }
            break;
        case State::eos: allowed_.push_back(Vocab::EOS); break;
        case State::done: break;
    }
    std::sort(allowed_.begin(), allowed_.end());
}

void GrammarCursor::advance(int token) {
    if (done_) throw ContractViolation("grammar: advance past end of trajectory");
    ++total_len_;
    if (!mask_on_) {
        if (token == Vocab::EOS || total_len_ >= hard_cap()) done_ = true;
        return;
    }
    if (!std::binary_search(allowed_.begin(), allowed_.end(), token))
        throw ContractViolation("grammar: token not allowed in this slot");
    switch (state_) {
        case State::think_open: state_ = State::think_body; break;
        case State::think_body:
            if (token == Vocab::THINK_CLOSE)
                state_ = State::ans_open;
            else
                ++think_len_;
            break;
        case State::ans_open: state_ = State::ans_body; break;
        case State::ans_body:
            if (mode_ == Mode::EVAL) {
                if (vocab_->is_verdict(token)) {
                    verdict_emitted_ = true;
                } else {
                    state_ = State::eos;
                }
            } else {
                if (token == Vocab::ANS_CLOSE)
                    state_ = State::eos;
                else
                    ++ans_len_;
            }
            break;
        case State::eos:
            state_ = State::done;
            done_ = true;
            break;
        case State::done: break;
    }
    rebuild_allowed();
}

bool GrammarCursor::at_answer_content_step() const {
    if (!mask_on_ || state_ != State::ans_body) return false;
    if (mode_ == Mode::EVAL) return false;
    return ans_len_ < answer_cap_;
}

int StepDist::index_of(int token) const {
    auto it = std::lower_bound(support.begin(), support.end(), token);
    if (it == support.end() || *it != token) return -1;
    return static_cast<int>(it - support.begin());
}

std::vector<double> StepDist::dense(int vocab_size) const {
    std::vector<double> out(vocab_size, 0.0);
    for (std::size_t i = 0; i < support.size(); ++i) out[support[i]] = prob[i];
    return out;
}

namespace {

// hidden state for one step: s = tanh(W_h [c; m] + b_h)
void forward_hidden(const PolicyParams& params, const Context& ctx, std::span<const int> prefix,
                    std::vector<double>& x, std::vector<double>& s) {
    const int h = params.hidden;
    x.assign(2 * h, 0.0);
    for (int k = 0; k < h; ++k) x[k] = ctx.projected[k];
    if (!prefix.empty()) {
        for (int t : prefix) {
            const double* row = params.emb_row(t);
            for (int k = 0; k < h; ++k) x[h + k] += row[k];
        }
        const double inv = 1.0 / static_cast<double>(prefix.size());
        for (int k = 0; k < h; ++k) x[h + k] *= inv;
    }
    s.assign(h, 0.0);
    const double* wh = params.flat.data() + params.off_wh();
    const double* bh = params.flat.data() + params.off_bh();
    for (int r = 0; r < h; ++r) {
        double acc = bh[r];
        const double* row = wh + r * 2 * h;
        for (int j = 0; j < 2 * h; ++j) acc += row[j] * x[j];
        s[r] = std::tanh(acc);
    }
}

StepDist dist_from_hidden(const PolicyParams& params, const std::vector<double>& s,
                          const std::vector<int>& support) {
    const int h = params.hidden;
    const double* wv = params.flat.data() + params.off_wv();
    const double* bv = params.flat.data() + params.off_bv();
    StepDist d;
    d.support = support;
    d.logprob.resize(support.size());
    std::vector<double> logits(support.size());
    double max_logit = -1e300;
    for (std::size_t i = 0; i < support.size(); ++i) {
        const int v = support[i];
        double acc = bv[v];
        const double* row = wv + v * h;
        for (int j = 0; j < h; ++j) acc += row[j] * s[j];
        logits[i] = acc;
        max_logit = std::max(max_logit, acc);
    }
    double z = 0.0;
    for (double l : logits) z += std::exp(l - max_logit);
    const double lse = max_logit + std::log(z);
    d.prob.resize(support.size());
    for (std::size_t i = 0; i < support.size(); ++i) {
        d.logprob[i] = logits[i] - lse;
        d.prob[i] = std::exp(d.logprob[i]);
    }
    return d;
}

}  // namespace

StepDist step_distribution(const PolicyParams& params, const Context& ctx,
                           std::span<const int> prefix, const GrammarCursor& cursor) {
    std::vector<double> x, s;
    forward_hidden(params, ctx, prefix, x, s);
    return dist_from_hidden(params, s, cursor.allowed());
}

namespace {

Trajectory finish_trajectory(const Vocab& v, Mode mode, std::vector<int> tokens,
                             std::vector<double> logprobs) {
    Trajectory traj;
    traj.mode = mode;
    traj.tokens = std::move(tokens);
    traj.logprobs = std::move(logprobs);
    ParseResult parsed = parse_answer(v, mode, traj.tokens);
    traj.valid_parse = parsed.valid;
    traj.answer = std::move(parsed.answer);
    return traj;
}

}  // namespace

Trajectory sample_trajectory(const PolicyParams& params, const WorldSpec& w, const Context& ctx,
                             RngStream& stream, int think_cap, int answer_cap, bool mask_on) {
    GrammarCursor cursor(w.vocab, ctx.mode, think_cap, answer_cap, mask_on);
    std::vector<int> tokens;
    std::vector<double> logprobs;
    while (!cursor.done()) {
        const StepDist d = step_distribution(params, ctx, tokens, cursor);
        const double u = stream.uniform();
        std::size_t pick = d.support.size() - 1;
        double cum = 0.0;
        for (std::size_t i = 0; i < d.support.size(); ++i) {
            cum += d.prob[i];
            if (u < cum) {
                pick = i;
                break;
            }
        }
        tokens.push_back(d.support[pick]);
        logprobs.push_back(d.logprob[pick]);
        cursor.advance(d.support[pick]);
    }
    return finish_trajectory(w.vocab, ctx.mode, std::move(tokens), std::move(logprobs));
}

Trajectory greedy_trajectory(const PolicyParams& params, const WorldSpec& w, const Context& ctx,
                             int think_cap, int answer_cap, bool mask_on) {
    GrammarCursor cursor(w.vocab, ctx.mode, think_cap, answer_cap, mask_on);
    std::vector<int> tokens;
    std::vector<double> logprobs;
    while (!cursor.done()) {
        const StepDist d = step_distribution(params, ctx, tokens, cursor);
        std::size_t best = 0;
        for (std::size_t i = 1; i < d.support.size(); ++i)
            if (d.logprob[i] > d.logprob[best]) best = i;  // ties keep lowest id
        tokens.push_back(d.support[best]);
        logprobs.push_back(d.logprob[best]);
        cursor.advance(d.support[best]);
    }
    return finish_trajectory(w.vocab, ctx.mode, std::move(tokens), std::move(logprobs));
}

std::vector<double> logprob(const PolicyParams& params, const Vocab& v, const Context& ctx,
                            const std::vector<int>& tokens, int think_cap, int answer_cap,
                            bool mask_on) {
    GrammarCursor cursor(v, ctx.mode, think_cap, answer_cap, mask_on);
    std::vector<double> out;
    out.reserve(tokens.size());
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (cursor.done())
            throw ImpossibleTrajectory("logprob: trajectory continues past terminal state");
        const StepDist d =
            step_distribution(params, ctx, std::span<const int>(tokens.data(), t), cursor);
        const int idx = d.index_of(tokens[t]);
        if (idx < 0)
            throw ImpossibleTrajectory("logprob: token has zero probability under the mask");
        out.push_back(d.logprob[idx]);
        cursor.advance(tokens[t]);
    }
    return out;
}

double step_kl(const PolicyParams& params, const Context& ctx, const PolicyParams& ref_params,
               const Context& ref_ctx, const Vocab& v, std::span<const int> prefix,
               const GrammarCursor& cursor) {
    (void)v;
    const StepDist p = step_distribution(params, ctx, prefix, cursor);
    const StepDist q = step_distribution(ref_params, ref_ctx, prefix, cursor);
    double kl = 0.0;
    for (std::size_t i = 0; i < p.support.size(); ++i)
        kl += p.prob[i] * (p.logprob[i] - q.logprob[i]);
    return kl;
}

void accumulate_backward(const PolicyParams& params, const Context& ctx,
                         const PolicyParams* ref_params, const Context* ref_ctx, const Vocab& v,
                         const std::vector<int>& tokens, std::span<const double> weights,
                         std::span<const double> kl_coeff, int think_cap, int answer_cap,
                         bool mask_on, std::vector<double>& grad, BackwardStats* stats) {
    if (ref_params != nullptr && ref_ctx == nullptr)
        throw ContractViolation("accumulate_backward: ref params without ref context");
    const int h = params.hidden;
    const int R = params.raw_context_dim();
    if (static_cast<int>(grad.size()) != params.count())
        throw ContractViolation("accumulate_backward: gradient buffer size mismatch");
    if (weights.size() != tokens.size() || kl_coeff.size() != tokens.size())
        throw ContractViolation("accumulate_backward: per-step array size mismatch");

    if (stats != nullptr) {
        stats->step_logprob.assign(tokens.size(), 0.0);
        stats->step_kl.assign(tokens.size(), 0.0);
    }

    GrammarCursor cursor(v, ctx.mode, think_cap, answer_cap, mask_on);
    std::vector<double> gc(h, 0.0);
    std::vector<double> x, s;
    std::vector<double> gl, gs(h), ga(h), gx(2 * h);
    std::vector<int> prefix;
    prefix.reserve(tokens.size());

    double* gemb = grad.data() + params.off_emb();
    double* gwh = grad.data() + params.off_wh();
    double* gbh = grad.data() + params.off_bh();
    double* gwv = grad.data() + params.off_wv();
    double* gbv = grad.data() + params.off_bv();
    const double* wh = params.flat.data() + params.off_wh();
    const double* wv = params.flat.data() + params.off_wv();

    for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (cursor.done())
            throw ImpossibleTrajectory("backward: trajectory continues past terminal state");
        forward_hidden(params, ctx, prefix, x, s);
        const StepDist p = dist_from_hidden(params, s, cursor.allowed());
        const int idx = p.index_of(tokens[t]);
        if (idx < 0) throw ImpossibleTrajectory("backward: token outside masked support");
        if (stats != nullptr) stats->step_logprob[t] = p.logprob[idx];

        const std::size_t n = p.support.size();
        gl.assign(n, 0.0);
        const double w_t = weights[t];
        if (w_t != 0.0) {
            for (std::size_t i = 0; i < n; ++i) gl[i] -= w_t * p.prob[i];
            gl[idx] += w_t;
        }
        double kl = 0.0;
        if (ref_params != nullptr && n > 1) {
            const StepDist q = [&] {
                std::vector<double> rx, rs;
                forward_hidden(*ref_params, *ref_ctx, prefix, rx, rs);
                return dist_from_hidden(*ref_params, rs, cursor.allowed());
            }();
            for (std::size_t i = 0; i < n; ++i) kl += p.prob[i] * (p.logprob[i] - q.logprob[i]);
            if (stats != nullptr) stats->step_kl[t] = kl;
            const double k_t = kl_coeff[t];
            if (k_t != 0.0)
                for (std::size_t i = 0; i < n; ++i)
                    gl[i] -= k_t * p.prob[i] * ((p.logprob[i] - q.logprob[i]) - kl);
        }

        bool any = false;
        for (double g : gl)
            if (g != 0.0) { any = true; break; }
        if (any) {
            std::fill(gs.begin(), gs.end(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double g = gl[i];
                if (g == 0.0) continue;
                const int tok = p.support[i];
                const double* wrow = wv + tok * h;
                double* grow = gwv + tok * h;
                for (int j = 0; j < h; ++j) {
                    gs[j] += g * wrow[j];
                    grow[j] += g * s[j];
                }
                gbv[tok] += g;
            }
            for (int r = 0; r < h; ++r) ga[r] = gs[r] * (1.0 - s[r] * s[r]);
            std::fill(gx.begin(), gx.end(), 0.0);
            for (int r = 0; r < h; ++r) {
                const double g = ga[r];
                if (g == 0.0) continue;
                const double* wrow = wh + r * 2 * h;
                double* grow = gwh + r * 2 * h;
                for (int j = 0; j < 2 * h; ++j) {
                    gx[j] += g * wrow[j];
                    grow[j] += g * x[j];
                }
                gbh[r] += g;
            }
            for (int j = 0; j < h; ++j) gc[j] += gx[j];
            if (!prefix.empty()) {
                const double inv = 1.0 / static_cast<double>(prefix.size());
                for (int tok : prefix) {
                    double* erow = gemb + tok * h;
                    for (int j = 0; j < h; ++j) erow[j] += gx[h + j] * inv;
                }
            }
        }

        cursor.advance(tokens[t]);
        prefix.push_back(tokens[t]);
    }

    // context path: c = W_ctx * raw, raw holds the pooled embeddings
    bool any_c = false;
    for (double g : gc)
        if (g != 0.0) { any_c = true; break; }
    if (!any_c) return;
    double* gwctx = grad.data() + params.off_wctx();
    const double* wctx = params.flat.data() + params.off_wctx();
    std::vector<double> graw(R, 0.0);
    for (int r = 0; r < h; ++r) {
        const double g = gc[r];
        if (g == 0.0) continue;
        const double* row = wctx + r * R;
        double* grow = gwctx + r * R;
        for (int j = 0; j < R; ++j) {
            graw[j] += g * row[j];
            grow[j] += g * ctx.raw[j];
        }
    }
    if (!ctx.alias_tokens.empty()) {
        const double inv = 1.0 / static_cast<double>(ctx.alias_tokens.size());
        for (int tok : ctx.alias_tokens) {
            double* erow = gemb + tok * h;
            for (int j = 0; j < h; ++j) erow[j] += graw[j] * inv;
        }
    }
    if (!ctx.p0_tokens.empty()) {
        const double inv = 1.0 / static_cast<double>(ctx.p0_tokens.size());
        for (int tok : ctx.p0_tokens) {
            double* erow = gemb + tok * h;
            for (int j = 0; j < h; ++j) erow[j] += graw[h + j] * inv;
        }
    }
}

std::vector<double> weighted_logprob_grad(const PolicyParams& params, const Vocab& v,
                                          const Context& ctx, const std::vector<int>& tokens,
                                          std::span<const double> weights, int think_cap,
                                          int answer_cap, bool mask_on) {
    std::vector<double> grad(params.count(), 0.0);
    std::vector<double> zeros(tokens.size(), 0.0);
    accumulate_backward(params, ctx, nullptr, nullptr, v, tokens, weights, zeros, think_cap,
                        answer_cap, mask_on, grad, nullptr);
    return grad;
}

ParseResult parse_answer(const Vocab& v, Mode mode, const std::vector<int>& tokens) {
    ParseResult res;
    const auto n = tokens.size();
    if (n < 5 || tokens[0] != Vocab::THINK_OPEN) return res;
    std::size_t close = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (tokens[i] == Vocab::THINK_CLOSE) {
            close = i;
            break;
        }
    if (close == 0 || close + 1 >= n || tokens[close + 1] != Vocab::ANS_OPEN) return res;
    std::size_t ans_close = 0;
    for (std::size_t i = close + 2; i < n; ++i)
        if (tokens[i] == Vocab::ANS_CLOSE) {
            ans_close = i;
            break;
        }
    if (ans_close == 0) return res;
    if (ans_close + 2 != n || tokens[ans_close + 1] != Vocab::EOS) return res;

    res.think.assign(tokens.begin() + 1, tokens.begin() + close);
    res.answer.assign(tokens.begin() + close + 2, tokens.begin() + ans_close);
    if (res.answer.empty()) return res;
    for (int t : res.answer)
        if (v.is_structural(t)) return res;
    if (mode == Mode::EVAL) {
        if (res.answer.size() != 1 || !v.is_verdict(res.answer[0])) return res;
    } else {
        for (int t : res.answer)
            if (v.is_verdict(t)) return res;
    }
    res.valid = true;
    return res;
}

}  // namespace rrl
