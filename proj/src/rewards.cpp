#include "rrl/rewards.hpp"

namespace rrl {

int format_reward(const Trajectory& traj) { return traj.valid_parse ? 1 : 0; }

RewardBreakdown rlvr_reward(const Trajectory& traj, int label_token) {
    if (traj.mode != Mode::EVAL)
        throw ContractViolation("rlvr_reward: trajectory must be in EVAL mode");
    if (label_token != Vocab::YES && label_token != Vocab::NO)
        throw ContractViolation("rlvr_reward: label must be a verdict token");
    RewardBreakdown r;
    r.format_bit = format_reward(traj);
    r.task_bit = (r.format_bit == 1 && traj.answer.size() == 1 && traj.answer[0] == label_token)
                     ? 1
                     : 0;
    return r;
}

Verdict evaluator_verdict(const PolicyParams& eval_params, const WorldSpec& w, const Image& x1,
                          const Image& x2, const Instruction* a, const TokenSeq* p0,
                          const Caps& caps) {
    const Context ctx = encode_context(w, eval_params, Mode::EVAL, a, p0, &x1, &x2);
    const Trajectory traj =
        greedy_trajectory(eval_params, w, ctx, caps.think_cap, caps.answer_cap, caps.mask_on);
    if (!traj.valid_parse) return Verdict::no;
    return traj.answer[0] == Vocab::YES ? Verdict::yes : Verdict::no;
}

Verdict OracleJudge::compare(const WorldSpec& w, const Image& x1, const Image& x2,
                             const Instruction* a, const TokenSeq* p0) const {
    const int r1 = oracle_reward_conditioned(w, x1, a, p0).sum();
    const int r2 = oracle_reward_conditioned(w, x2, a, p0).sum();
    return r1 > r2 ? Verdict::yes : Verdict::no;
}

Verdict EvaluatorJudge::compare(const WorldSpec& w, const Image& x1, const Image& x2,
                                const Instruction* a, const TokenSeq* p0) const {
    return evaluator_verdict(params_, w, x1, x2, a, p0, caps_);
}

Image blank_image(int d) {
    Image img;
    img.v.assign(d, 0.0);
    img.quality = 0.0;
    return img;
}

RlmtOutcome rlmt_reward(const WorldSpec& w, const Trajectory& traj, const Judge& judge,
                        const Instruction& a, const TokenSeq& p0) {
    if (traj.mode != Mode::REPROMPT)
        throw ContractViolation("rlmt_reward: trajectory must be in REPROMPT mode");
    RlmtOutcome out;
    out.reward.format_bit = format_reward(traj);
    out.x_pol = traj.valid_parse ? generate(w, traj.answer) : blank_image(w.d);
    out.x_ref = generate(w, naive_concat(a, p0));
    // validity gating: an unparseable reprompt cannot earn the task bit
    out.reward.task_bit =
        (out.reward.format_bit == 1 &&
         judge.compare(w, out.x_pol, out.x_ref, &a, &p0) == Verdict::yes)
            ? 1
            : 0;
    return out;
}

}  // namespace rrl
