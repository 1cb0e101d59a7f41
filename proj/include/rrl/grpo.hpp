#pragma once

#include <optional>
#include <span>
#include <vector>

#include "rrl/parallel.hpp"
#include "rrl/policy.hpp"

namespace rrl {

// Everything needed to re-encode a query context under any parameter set.
// Groups carry the query rather than a baked Context so that surrogate
// evaluations at perturbed parameters (finite differences) stay exact.
struct QuerySpec {
    Mode mode = Mode::REPROMPT;
    std::optional<Instruction> instruction;
    std::optional<TokenSeq> p0;
    std::optional<Image> first, second;
};

Context encode_query(const WorldSpec& w, const PolicyParams& params, const QuerySpec& q);

// One GRPO update unit: N trajectories for a single query, their scalar
// rewards, and the group-standardized advantages. Old-policy log-probs are
// the ones recorded on each trajectory at sampling time.
struct Group {
    QuerySpec query;
    std::vector<Trajectory> trajs;
    std::vector<double> rewards;
    std::vector<double> advantages;
};

Group rollout_group(const PolicyParams& params, const WorldSpec& w, const QuerySpec& q, int n,
                    const Caps& caps, RngStream& stream, Exec exec = Exec::serial);

// Group-standardized advantages: (r - mean) / population std, all zeros when
// the population std falls below 1e-12.
std::vector<double> normalize_advantages(std::span<const double> rewards);

struct TokenRatios {
    std::vector<std::vector<double>> s1;  // importance ratios per token
    std::vector<std::vector<double>> s2;  // clamped to [1-eps, 1+eps]
};

TokenRatios token_ratios(const PolicyParams& params, const WorldSpec& w, const Group& group,
                         double eps, const Caps& caps);

struct UpdateReport {
    double surrogate = 0.0;
    double mean_kl = 0.0;    // flat mean over all tokens in the group
    double grad_norm = 0.0;  // L2 of the assembled gradient
    double clip_frac = 0.0;  // share of tokens with s2 != s1
    double mean_reward = 0.0;
};

// Token-level clipped surrogate with exact per-step KL penalty:
//   J = (1/N) sum_i (1/L_i) sum_t [ min(s1 A_i, s2 A_i) - beta KL_t ].
double surrogate(const PolicyParams& params, const PolicyParams& ref_params, const WorldSpec& w,
                 const Group& group, double eps, double beta, const Caps& caps,
                 UpdateReport* report = nullptr, Exec exec = Exec::serial);

// Analytic ascent gradient of the surrogate. At a clip boundary the
// unclipped branch's derivative is used, making the gradient total.
std::vector<double> surrogate_gradient(const PolicyParams& params, const PolicyParams& ref_params,
                                       const WorldSpec& w, const Group& group, double eps,
                                       double beta, const Caps& caps,
                                       UpdateReport* report = nullptr, Exec exec = Exec::parallel);

struct OptimSettings {
    Optimizer rule = Optimizer::adamw;
    double lr = 0.01;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_hat = 1e-8;
};

struct OptState {
    long step = 0;
    std::vector<double> m, v;
    void reset(int n);
};

// Ascent step; adamw applies decoupled multiplicative weight decay.
// Non-finite gradient entries abort with the offending coordinate.
void update_step(PolicyParams& params, std::span<const double> grad, OptState& state,
                 const OptimSettings& opt);

// Self-contained gradient-vs-central-differences check on a small seeded
// instance (world, query, group all derived from the seed).
struct FdInstanceSpec {
    std::uint64_t seed = 0;
    double beta = 0.04;
    double eps = 0.2;
    int group_size = 4;
    double fd_step = 1e-5;
    // when >= 0, that gradient coordinate is corrupted by +1 (fault-injection
    // hook for testing the checker itself)
    int corrupt_coord = -1;
};

struct FdReport {
    double max_rel_err = 0.0;
    int worst_coord = -1;
    int n_params = 0;
    double rel_l2_err = 0.0;
    bool clip_screen_ok = false;  // no token ratio within 1e-3 of a clip edge
};

FdReport fd_verify(const FdInstanceSpec& spec, Exec exec = Exec::parallel);

// Human-readable location of a flat parameter coordinate.
std::string param_coord_name(const PolicyParams& p, int coord);

}  // namespace rrl
