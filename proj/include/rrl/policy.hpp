#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rrl/rng.hpp"
#include "rrl/world.hpp"

namespace rrl {

enum class Mode { EVAL, REPROMPT };

// Sampling caps plus the grammar-mask switch, bundled because they travel
// together through every rollout and replay.
struct Caps {
    int think_cap = 4;
    int answer_cap = 6;
    bool mask_on = true;
};

// Thrown by logprob replay when a token has probability zero under the
// current mask regime.
struct ImpossibleTrajectory : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The learnable parameters, one flat buffer with a fixed documented layout:
//   Eemb (V x h, row-major), W_ctx (h x R, row-major), W_h (h x 2h), b_h (h),
//   W_v (V x h), b_v (V),   with R = 2h + 9 (pooled alias, pooled p0,
//   mode one-hot, 7 pair features).
struct PolicyParams {
    int vocab_size = 0;
    int hidden = 0;
    std::vector<double> flat;

    static constexpr int kModeDims = 2;
    static constexpr int kPairDims = 7;

    int raw_context_dim() const { return 2 * hidden + kModeDims + kPairDims; }
    int count() const;

    // offsets into flat
    int off_emb() const { return 0; }
    int off_wctx() const { return vocab_size * hidden; }
    int off_wh() const { return off_wctx() + hidden * raw_context_dim(); }
    int off_bh() const { return off_wh() + hidden * 2 * hidden; }
    int off_wv() const { return off_bh() + hidden; }
    int off_bv() const { return off_wv() + vocab_size * hidden; }

    const double* emb_row(int token) const { return flat.data() + off_emb() + token * hidden; }

    static PolicyParams init(const Vocab& v, int hidden, std::uint64_t seed,
                             std::string_view label = "init");

    bool operator==(const PolicyParams&) const = default;
};

std::string params_hash(const PolicyParams& p);

// Mode-conditioned context. The raw vector is
//   [pooled alias embedding; pooled p0 embedding; mode one-hot; psi]
// where pooling is the arithmetic mean of embedding rows (zero for an empty
// segment) and psi holds the seven pair features in EVAL mode, zeros in
// REPROMPT mode. The projection c = W_ctx * raw is cached along with the
// token lists so gradients can flow back into the embedding table.
struct Context {
    Mode mode = Mode::REPROMPT;
    TokenSeq alias_tokens;
    TokenSeq p0_tokens;
    std::vector<double> psi;  // 7 entries
    std::vector<double> raw;
    std::vector<double> projected;  // c = W_ctx * raw
};

// EVAL requires the image pair; pass a or p0 as null to drop that channel
// from the condition (the corresponding psi entries and pooled alias go to
// zero).
Context encode_context(const WorldSpec& w, const PolicyParams& params, Mode mode,
                       const Instruction* a, const TokenSeq* p0, const Image* first,
                       const Image* second);

// Masked-slot state machine enforcing
//   THINK_OPEN think* THINK_CLOSE ANS_OPEN ans+ ANS_CLOSE EOS
// with think content capped at think_cap, answer content at answer_cap, and
// the EVAL answer slot restricted to exactly one verdict token. With the
// mask off every token is allowed until EOS or the hard length cap.
class GrammarCursor {
  public:
    GrammarCursor(const Vocab& v, Mode mode, int think_cap, int answer_cap, bool mask_on);

    // sorted ascending token ids
    const std::vector<int>& allowed() const { return allowed_; }
    void advance(int token);
    bool done() const { return done_; }
    bool mask_on() const { return mask_on_; }
    // true when the current slot offers answer-content tokens (REPROMPT)
    bool at_answer_content_step() const;
    int hard_cap() const { return 1 + think_cap_ + answer_cap_ + 5; }

  private:
    void rebuild_allowed();

    enum class State { think_open, think_body, ans_open, ans_body, eos, done };
    const Vocab* vocab_;
    Mode mode_;
    int think_cap_, answer_cap_;
    bool mask_on_;
    State state_ = State::think_open;
    int think_len_ = 0, ans_len_ = 0, total_len_ = 0;
    bool verdict_emitted_ = false;
    bool done_ = false;
    std::vector<int> allowed_;
};

struct ParseResult {
    bool valid = false;
    TokenSeq think;
    TokenSeq answer;
};

struct Trajectory {
    Mode mode = Mode::REPROMPT;
    std::vector<int> tokens;
    std::vector<double> logprobs;  // chosen-token log-probs at sampling time
    bool valid_parse = false;
    TokenSeq answer;  // parsed answer content (empty when invalid)
};

// One autoregressive step: distribution over the cursor's allowed set.
struct StepDist {
    std::vector<int> support;      // token ids, ascending
    std::vector<double> logprob;   // log probabilities over support
    std::vector<double> prob;

    int index_of(int token) const;  // -1 when absent
    // dense V-sized probability vector (exact zeros off support)
    std::vector<double> dense(int vocab_size) const;
};

StepDist step_distribution(const PolicyParams& params, const Context& ctx,
                           std::span<const int> prefix, const GrammarCursor& cursor);

Trajectory sample_trajectory(const PolicyParams& params, const WorldSpec& w, const Context& ctx,
                             RngStream& stream, int think_cap, int answer_cap, bool mask_on);

// Greedy decode: argmax per step, ties to the lowest token id.
Trajectory greedy_trajectory(const PolicyParams& params, const WorldSpec& w, const Context& ctx,
                             int think_cap, int answer_cap, bool mask_on);

// Exact per-step log-probs of an existing token sequence under `params`.
std::vector<double> logprob(const PolicyParams& params, const Vocab& v, const Context& ctx,
                            const std::vector<int>& tokens, int think_cap, int answer_cap,
                            bool mask_on);

// Exact categorical KL over the masked support at one step. ref_ctx must be
// the same query encoded under ref_params (contexts are parameter-specific
// because pooling reads the embedding table).
double step_kl(const PolicyParams& params, const Context& ctx, const PolicyParams& ref_params,
               const Context& ref_ctx, const Vocab& v, std::span<const int> prefix,
               const GrammarCursor& cursor);

// Analytic gradient of sum_t w[t] * log pi(u_t | u_<t, ctx) minus
// sum_t kl_coeff[t] * KL_t(params || ref), accumulated into grad (flat
// layout). ref may be null when all kl_coeff are zero. Also reports per-step
// chosen-token logprobs and KL values for callers assembling ratios.
struct BackwardStats {
    std::vector<double> step_logprob;
    std::vector<double> step_kl;
};

void accumulate_backward(const PolicyParams& params, const Context& ctx,
                         const PolicyParams* ref_params, const Context* ref_ctx, const Vocab& v,
                         const std::vector<int>& tokens, std::span<const double> weights,
                         std::span<const double> kl_coeff, int think_cap, int answer_cap,
                         bool mask_on, std::vector<double>& grad, BackwardStats* stats);

// Gradient of sum_t w[t] log pi(u_t | .) alone.
std::vector<double> weighted_logprob_grad(const PolicyParams& params, const Vocab& v,
                                          const Context& ctx, const std::vector<int>& tokens,
                                          std::span<const double> weights, int think_cap,
                                          int answer_cap, bool mask_on);

ParseResult parse_answer(const Vocab& v, Mode mode, const std::vector<int>& tokens);

}  // namespace rrl
