#include "rrl/grpo.hpp"

#include <algorithm>
#include <cmath>

namespace rrl {

Context encode_query(const WorldSpec& w, const PolicyParams& params, const QuerySpec& q) {
    const Instruction* a = q.instruction ? &*q.instruction : nullptr;
    const TokenSeq* p0 = q.p0 ? &*q.p0 : nullptr;
    const Image* x1 = q.first ? &*q.first : nullptr;
    const Image* x2 = q.second ? &*q.second : nullptr;
    return encode_context(w, params, q.mode, a, p0, x1, x2);
}

Group rollout_group(const PolicyParams& params, const WorldSpec& w, const QuerySpec& q, int n,
                    const Caps& caps, RngStream& stream, Exec exec) {
    Group g;
    g.query = q;
    g.trajs.resize(n);
    // one derived seed per member so the draws are identical however the
    // members are scheduled
    std::vector<std::uint64_t> member_seeds(n);
    for (int i = 0; i < n; ++i) member_seeds[i] = stream.next_u64();
    const Context ctx = encode_query(w, params, q);
    parallel_for(exec, n, [&](int i) {
        RngStream member(member_seeds[i], "rollout-member");
        g.trajs[i] = sample_trajectory(params, w, ctx, member, caps.think_cap, caps.answer_cap,
                                       caps.mask_on);
    });
    return g;
}

std::vector<double> normalize_advantages(std::span<const double> rewards) {
    const int n = static_cast<int>(rewards.size());
    if (n < 2) throw ContractViolation("normalize_advantages: group size must be >= 2");
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= n;  // population convention
    const double sd = std::sqrt(var);
    std::vector<double> adv(n, 0.0);
    if (sd < 1e-12) return adv;  // degenerate group: no preference signal
    for (int i = 0; i < n; ++i) adv[i] = (rewards[i] - mean) / sd;
    return adv;
}

TokenRatios token_ratios(const PolicyParams& params, const WorldSpec& w, const Group& group,
                         double eps, const Caps& caps) {
    const Context ctx = encode_query(w, params, group.query);
    TokenRatios out;
    out.s1.resize(group.trajs.size());
    out.s2.resize(group.trajs.size());
    for (std::size_t i = 0; i < group.trajs.size(); ++i) {
        const auto& traj = group.trajs[i];
        const std::vector<double> lp_new = logprob(params, w.vocab, ctx, traj.tokens,
                                                   caps.think_cap, caps.answer_cap, caps.mask_on);
        out.s1[i].resize(traj.tokens.size());
        out.s2[i].resize(traj.tokens.size());
        for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
            const double s1 = std::exp(lp_new[t] - traj.logprobs[t]);
            out.s1[i][t] = s1;
            out.s2[i][t] = std::clamp(s1, 1.0 - eps, 1.0 + eps);
        }
    }
    return out;
}

namespace {

// unclipped branch is the min (subgradient convention keeps boundaries active)
bool ratio_branch_active(double advantage, double s1, double eps) {
    if (advantage > 0.0) return s1 <= 1.0 + eps;
    if (advantage < 0.0) return s1 >= 1.0 - eps;
    return false;
}

struct TrajEval {
    double j_contrib = 0.0;   // (1/L) sum_t min(..) - beta KL
    double kl_sum = 0.0;
    int clipped = 0;
    int tokens = 0;
};

}  // namespace

double surrogate(const PolicyParams& params, const PolicyParams& ref_params, const WorldSpec& w,
                 const Group& group, double eps, double beta, const Caps& caps,
                 UpdateReport* report, Exec exec) {
    const int n = static_cast<int>(group.trajs.size());
    const Context ctx = encode_query(w, params, group.query);
    const Context ref_ctx = encode_query(w, ref_params, group.query);
    std::vector<TrajEval> evals(n);
    std::vector<double> scratch_zero;  // per-thread scratch allocated inside

    parallel_for(exec, n, [&](int i) {
        const auto& traj = group.trajs[i];
        const std::size_t L = traj.tokens.size();
        std::vector<double> zeros(L, 0.0);
        std::vector<double> grad_scratch(params.count(), 0.0);
        BackwardStats stats;
        accumulate_backward(params, ctx, &ref_params, &ref_ctx, w.vocab, traj.tokens, zeros,
                            zeros, caps.think_cap, caps.answer_cap, caps.mask_on, grad_scratch,
                            &stats);
        TrajEval ev;
        ev.tokens = static_cast<int>(L);
        double acc = 0.0;
        for (std::size_t t = 0; t < L; ++t) {
            const double s1 = std::exp(stats.step_logprob[t] - traj.logprobs[t]);
            const double s2 = std::clamp(s1, 1.0 - eps, 1.0 + eps);
            if (s2 != s1) ++ev.clipped;
            const double a = group.advantages[i];
            acc += std::min(s1 * a, s2 * a) - beta * stats.step_kl[t];
            ev.kl_sum += stats.step_kl[t];
        }
        ev.j_contrib = L > 0 ? acc / static_cast<double>(L) : 0.0;
        evals[i] = ev;
    });

    double j = 0.0;
    double kl_total = 0.0;
    int clipped = 0, tokens = 0;
    for (const auto& ev : evals) {  // index order
        j += ev.j_contrib;
        kl_total += ev.kl_sum;
        clipped += ev.clipped;
        tokens += ev.tokens;
    }
    j /= n;
    if (report != nullptr) {
        report->surrogate = j;
        report->mean_kl = tokens > 0 ? kl_total / tokens : 0.0;
        report->clip_frac = tokens > 0 ? static_cast<double>(clipped) / tokens : 0.0;
        double mr = 0.0;
        for (double r : group.rewards) mr += r;
        report->mean_reward = group.rewards.empty() ? 0.0 : mr / group.rewards.size();
    }
    (void)scratch_zero;
    return j;
}

std::vector<double> surrogate_gradient(const PolicyParams& params, const PolicyParams& ref_params,
                                       const WorldSpec& w, const Group& group, double eps,
                                       double beta, const Caps& caps, UpdateReport* report,
                                       Exec exec) {
    const int n = static_cast<int>(group.trajs.size());
    const Context ctx = encode_query(w, params, group.query);
    const Context ref_ctx = encode_query(w, ref_params, group.query);

    std::vector<std::vector<double>> grads(n);
    std::vector<TrajEval> evals(n);

    parallel_for(exec, n, [&](int i) {
        const auto& traj = group.trajs[i];
        const std::size_t L = traj.tokens.size();
        const double a = group.advantages[i];
        const std::vector<double> lp_new = logprob(params, w.vocab, ctx, traj.tokens,
                                                   caps.think_cap, caps.answer_cap, caps.mask_on);
        std::vector<double> weights(L, 0.0), kl_coeff(L, 0.0);
        TrajEval ev;
        ev.tokens = static_cast<int>(L);
        const double inv_nl = 1.0 / (static_cast<double>(n) * static_cast<double>(L));
        double acc = 0.0;
        for (std::size_t t = 0; t < L; ++t) {
            const double s1 = std::exp(lp_new[t] - traj.logprobs[t]);
            const double s2 = std::clamp(s1, 1.0 - eps, 1.0 + eps);
            if (s2 != s1) ++ev.clipped;
            acc += std::min(s1 * a, s2 * a);
            // d/dtheta [s1 * A] = A * s1 * dlogpi/dtheta on the active branch
            if (ratio_branch_active(a, s1, eps)) weights[t] = inv_nl * a * s1;
            kl_coeff[t] = beta * inv_nl;
        }
        grads[i].assign(params.count(), 0.0);
        BackwardStats stats;
        accumulate_backward(params, ctx, &ref_params, &ref_ctx, w.vocab, traj.tokens, weights,
                            kl_coeff, caps.think_cap, caps.answer_cap, caps.mask_on, grads[i],
                            &stats);
        for (double kl : stats.step_kl) {
            ev.kl_sum += kl;
            acc -= beta * kl;
        }
        ev.j_contrib = L > 0 ? acc / static_cast<double>(L) : 0.0;
        evals[i] = ev;
    });

    std::vector<double> grad(params.count(), 0.0);
    double j = 0.0, kl_total = 0.0;
    int clipped = 0, tokens = 0;
    for (int i = 0; i < n; ++i) {  // fixed index order for bit determinism
        for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += grads[i][k];
        j += evals[i].j_contrib;
        kl_total += evals[i].kl_sum;
        clipped += evals[i].clipped;
        tokens += evals[i].tokens;
    }
    j /= n;

    if (report != nullptr) {
        report->surrogate = j;
        report->mean_kl = tokens > 0 ? kl_total / tokens : 0.0;
        report->clip_frac = tokens > 0 ? static_cast<double>(clipped) / tokens : 0.0;
        double norm2 = 0.0;
        for (double g : grad) norm2 += g * g;
        report->grad_norm = std::sqrt(norm2);
        double mr = 0.0;
        for (double r : group.rewards) mr += r;
        report->mean_reward = group.rewards.empty() ? 0.0 : mr / group.rewards.size();
    }
    return grad;
}

void OptState::reset(int n) {
    step = 0;
    m.assign(n, 0.0);
    v.assign(n, 0.0);
}

std::string param_coord_name(const PolicyParams& p, int coord) {
    const int h = p.hidden;
    const int R = p.raw_context_dim();
    if (coord < p.off_wctx()) {
        return "Eemb[" + std::to_string(coord / h) + "][" + std::to_string(coord % h) + "]";
    }
    if (coord < p.off_wh()) {
        const int k = coord - p.off_wctx();
        return "W_ctx[" + std::to_string(k / R) + "][" + std::to_string(k % R) + "]";
    }
    if (coord < p.off_bh()) {
        const int k = coord - p.off_wh();
        return "W_h[" + std::to_string(k / (2 * h)) + "][" + std::to_string(k % (2 * h)) + "]";
    }
    if (coord < p.off_wv()) return "b_h[" + std::to_string(coord - p.off_bh()) + "]";
    if (coord < p.off_bv()) {
        const int k = coord - p.off_wv();
        return "W_v[" + std::to_string(k / h) + "][" + std::to_string(k % h) + "]";
    }
    return "b_v[" + std::to_string(coord - p.off_bv()) + "]";
}

void update_step(PolicyParams& params, std::span<const double> grad, OptState& state,
                 const OptimSettings& opt) {
    if (grad.size() != params.flat.size())
        throw ContractViolation("update_step: gradient size mismatch");
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!std::isfinite(grad[i]))
            throw std::runtime_error("update_step: non-finite gradient at " +
                                     param_coord_name(params, static_cast<int>(i)));

    if (opt.rule == Optimizer::plain_ascent) {
        for (std::size_t i = 0; i < grad.size(); ++i) params.flat[i] += opt.lr * grad[i];
        return;
    }
    if (state.m.size() != grad.size()) state.reset(static_cast<int>(grad.size()));
    state.step += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < grad.size(); ++i) {
        state.m[i] = opt.beta1 * state.m[i] + (1.0 - opt.beta1) * grad[i];
        state.v[i] = opt.beta2 * state.v[i] + (1.0 - opt.beta2) * grad[i] * grad[i];
        const double mh = state.m[i] / bc1;
        const double vh = state.v[i] / bc2;
        params.flat[i] *= 1.0 - opt.lr * opt.weight_decay;
        params.flat[i] += opt.lr * mh / (std::sqrt(vh) + opt.eps_hat);
    }
}

FdReport fd_verify(const FdInstanceSpec& spec, Exec exec) {
    RunConfig cfg = desk_profile();
    cfg.seed = spec.seed;
    cfg.feature_dim = 8;
    cfg.hidden_dim = 8;
    cfg.n_object_tokens = 4;
    cfg.n_concrete_tokens = 5;
    cfg.n_abstract_tokens = 5;  // |V| = 22
    cfg.think_cap = 3;
    cfg.answer_cap = 4;
    const WorldSpec w = build_world(cfg);
    const Caps caps{cfg.think_cap, cfg.answer_cap, true};

    RngStream setup = seeded_stream(spec.seed, "fd-setup");
    Instruction instr;
    instr.id = 0;
    instr.difficulty = Difficulty::hard;
    instr.category = Category::attribute;
    const int c0 = w.vocab.concrete_begin() + setup.uniform_int(w.vocab.n_concrete());
    int c1 = w.vocab.concrete_begin() + setup.uniform_int(w.vocab.n_concrete());
    while (c1 == c0) c1 = w.vocab.concrete_begin() + setup.uniform_int(w.vocab.n_concrete());
    instr.witness = {c0, c1};
    std::vector<double> target(w.d, 0.0);
    for (int t : instr.witness)
        for (int i = 0; i < w.d; ++i) target[i] += w.feature(t)[i];
    instr.target = normalized(std::move(target));
    instr.alias = {w.vocab.abstract_begin(), w.vocab.abstract_begin() + 1};

    TokenSeq p0 = {w.vocab.object_begin(), w.vocab.object_begin() + 1};

    QuerySpec q;
    q.instruction = instr;
    q.p0 = p0;
    if (spec.seed % 2 == 0) {
        q.mode = Mode::EVAL;
        q.first = generate(w, naive_concat(instr, p0));
        TokenSeq better = p0;
        better.insert(better.end(), instr.witness.begin(), instr.witness.end());
        q.second = generate(w, better);
    } else {
        q.mode = Mode::REPROMPT;
    }

    const PolicyParams theta_old = PolicyParams::init(w.vocab, cfg.hidden_dim, spec.seed, "fd-old");
    RngStream roll = seeded_stream(spec.seed, "fd-rollout");
    Group group = rollout_group(theta_old, w, q, spec.group_size, caps, roll, Exec::serial);
    group.rewards.resize(group.trajs.size());
    for (std::size_t i = 0; i < group.trajs.size(); ++i)
        group.rewards[i] = static_cast<double>(i % 3);
    group.advantages = normalize_advantages(group.rewards);

    // perturb away from theta_old, re-drawing until no ratio sits near a clip
    // edge (the min() kink would break central differences)
    PolicyParams theta = theta_old;
    FdReport report;
    report.n_params = theta.count();
    for (int attempt = 0; attempt < 64 && !report.clip_screen_ok; ++attempt) {
        theta = theta_old;
        RngStream prng =
            seeded_stream(spec.seed ^ (0x5151u + attempt), "fd-perturb");
        for (double& x : theta.flat) x += 0.02 * prng.normal();
        const TokenRatios ratios = token_ratios(theta, w, group, spec.eps, caps);
        bool ok = true;
        for (const auto& traj : ratios.s1)
            for (double s1 : traj)
                if (std::abs(s1 - (1.0 - spec.eps)) < 1e-3 ||
                    std::abs(s1 - (1.0 + spec.eps)) < 1e-3)
                    ok = false;
        report.clip_screen_ok = ok;
    }

    std::vector<double> analytic = surrogate_gradient(theta, theta_old, w, group, spec.eps,
                                                      spec.beta, caps, nullptr, exec);
    if (spec.corrupt_coord >= 0 && spec.corrupt_coord < static_cast<int>(analytic.size()))
        analytic[spec.corrupt_coord] += 1.0;

    std::vector<double> fd(analytic.size(), 0.0);
    const double delta = spec.fd_step;
    parallel_for(exec, static_cast<int>(analytic.size()), [&](int i) {
        PolicyParams plus = theta;
        plus.flat[i] += delta;
        PolicyParams minus = theta;
        minus.flat[i] -= delta;
        const double jp =
            surrogate(plus, theta_old, w, group, spec.eps, spec.beta, caps, nullptr, Exec::serial);
        const double jm = surrogate(minus, theta_old, w, group, spec.eps, spec.beta, caps,
                                    nullptr, Exec::serial);
        fd[i] = (jp - jm) / (2.0 * delta);
    });

    double l2_diff = 0.0, l2_fd = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double err =
            std::abs(analytic[i] - fd[i]) / std::max({1.0, std::abs(analytic[i]), std::abs(fd[i])});
        if (err > report.max_rel_err) {
            report.max_rel_err = err;
            report.worst_coord = static_cast<int>(i);
        }
        l2_diff += (analytic[i] - fd[i]) * (analytic[i] - fd[i]);
        l2_fd += fd[i] * fd[i];
    }
    report.rel_l2_err = std::sqrt(l2_diff) / std::max(std::sqrt(l2_fd), 1e-300);
    return report;
}

}  // namespace rrl
