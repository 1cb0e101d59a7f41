#pragma once

#include "rrl/policy.hpp"

namespace rrl {

// Two-indicator reward: format validity plus the task bit. Validity gates the
// task bit, so total is always in {0, 1, 2} and task implies format.
struct RewardBreakdown {
    int format_bit = 0;
    int task_bit = 0;
    int total() const { return format_bit + task_bit; }
};

int format_reward(const Trajectory& traj);

// Verifiable reward for evaluator training: format validity plus verdict
// agreement with the stored label (a YES/NO token id).
RewardBreakdown rlvr_reward(const Trajectory& traj, int label_token);

enum class Verdict { yes, no };

// Greedy-decoded pairwise verdict: does the first image beat the second
// under the given condition channels? Invalid decodes (possible only with
// the grammar mask off) fall back to NO.
Verdict evaluator_verdict(const PolicyParams& eval_params, const WorldSpec& w, const Image& x1,
                          const Image& x2, const Instruction* a, const TokenSeq* p0,
                          const Caps& caps);

// Pairwise judge abstraction: the trained evaluator in production, the
// ground-truth oracle in tests and scoring harnesses.
class Judge {
  public:
    virtual ~Judge() = default;
    virtual Verdict compare(const WorldSpec& w, const Image& x1, const Image& x2,
                            const Instruction* a, const TokenSeq* p0) const = 0;
};

// Strict comparison of conditioned oracle bit-sums; ties are not superiority.
class OracleJudge final : public Judge {
  public:
    Verdict compare(const WorldSpec& w, const Image& x1, const Image& x2, const Instruction* a,
                    const TokenSeq* p0) const override;
};

// Frozen parameter snapshot decoding greedily; deterministic by construction.
class EvaluatorJudge final : public Judge {
  public:
    EvaluatorJudge(PolicyParams params, Caps caps) : params_(std::move(params)), caps_(caps) {}
    Verdict compare(const WorldSpec& w, const Image& x1, const Image& x2, const Instruction* a,
                    const TokenSeq* p0) const override;
    const PolicyParams& params() const { return params_; }

  private:
    PolicyParams params_;
    Caps caps_;
};

struct RlmtOutcome {
    RewardBreakdown reward;
    Image x_pol;  // from the parsed reprompt, blank when the parse is invalid
    Image x_ref;  // from the naive concatenation baseline
};

// Endogenous relative reward: the reprompt's image must be judged strictly
// better than the naive-concatenation baseline under (a, p0).
RlmtOutcome rlmt_reward(const WorldSpec& w, const Trajectory& traj, const Judge& judge,
                        const Instruction& a, const TokenSeq& p0);

Image blank_image(int d);

}  // namespace rrl
