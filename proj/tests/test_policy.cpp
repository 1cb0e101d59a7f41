#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rrl/grpo.hpp"
#include "rrl/policy.hpp"

using namespace rrl;

namespace {

RunConfig tiny_config(std::uint64_t seed) {
    RunConfig cfg = desk_profile();
    cfg.seed = seed;
    cfg.feature_dim = 8;
    cfg.hidden_dim = 8;
    cfg.n_object_tokens = 4;
    cfg.n_concrete_tokens = 5;
    cfg.n_abstract_tokens = 5;  // |V| = 22
    cfg.think_cap = 3;
    cfg.answer_cap = 4;
    return cfg;
}

struct Fixture {
    WorldSpec w;
    Instruction instr;
    TokenSeq p0;
    QuerySpec query_eval, query_rep;

    explicit Fixture(std::uint64_t seed) {
        w = build_world(tiny_config(seed));
        instr.id = 0;
        instr.category = Category::attribute;
        instr.difficulty = Difficulty::hard;
        instr.witness = {w.vocab.concrete_begin(), w.vocab.concrete_begin() + 2};
        std::vector<double> t(w.d, 0.0);
        for (int tok : instr.witness)
            for (int i = 0; i < w.d; ++i) t[i] += w.feature(tok)[i];
        instr.target = normalized(std::move(t));
        instr.alias = {w.vocab.abstract_begin(), w.vocab.abstract_begin() + 1};
        p0 = {w.vocab.object_begin(), w.vocab.object_begin() + 1};

        query_eval.mode = Mode::EVAL;
        query_eval.instruction = instr;
        query_eval.p0 = p0;
        query_eval.first = generate(w, p0);
        TokenSeq solved = p0;
        solved.insert(solved.end(), instr.witness.begin(), instr.witness.end());
        query_eval.second = generate(w, solved);

        query_rep.mode = Mode::REPROMPT;
        query_rep.instruction = instr;
        query_rep.p0 = p0;
    }
};

double dense_sum(const StepDist& d, int vocab_size) {
    double s = 0.0;
    for (double p : d.dense(vocab_size)) s += p;
    return s;
}

}  // namespace

TEST_CASE("step distributions are normalized, masked and unmasked") {
    Fixture f(0);
    const PolicyParams params = PolicyParams::init(f.w.vocab, 8, 0, "t");
    for (bool mask : {true, false}) {
        const Context ctx = encode_query(f.w, params, f.query_eval);
        GrammarCursor cursor(f.w.vocab, Mode::EVAL, 3, 4, mask);
        std::vector<int> prefix;
        while (!cursor.done() && prefix.size() < 8) {
            const StepDist d = step_distribution(params, ctx, prefix, cursor);
            CHECK(std::abs(dense_sum(d, f.w.vocab.size()) - 1.0) < 1e-9);
            prefix.push_back(d.support[0]);
            cursor.advance(d.support[0]);
        }
    }
}

TEST_CASE("adding a constant to every output bias leaves the distribution unchanged") {
    Fixture f(1);
    PolicyParams params = PolicyParams::init(f.w.vocab, 8, 1, "t");
    const Context ctx = encode_query(f.w, params, f.query_rep);
    GrammarCursor cursor(f.w.vocab, Mode::REPROMPT, 3, 4, true);
    const StepDist before = step_distribution(params, ctx, {}, cursor);
    for (int i = params.off_bv(); i < params.count(); ++i) params.flat[i] += 7.25;
    const Context ctx2 = encode_query(f.w, params, f.query_rep);
    const StepDist after = step_distribution(params, ctx2, {}, cursor);
    for (std::size_t i = 0; i < before.prob.size(); ++i)
        CHECK(before.prob[i] == doctest::Approx(after.prob[i]).epsilon(1e-12));
}

TEST_CASE("grammar mask zeroes disallowed tokens exactly") {
    Fixture f(2);
    const PolicyParams params = PolicyParams::init(f.w.vocab, 8, 2, "t");
    const Context ctx = encode_query(f.w, params, f.query_eval);
    GrammarCursor cursor(f.w.vocab, Mode::EVAL, 3, 4, true);
    const StepDist d = step_distribution(params, ctx, {}, cursor);
    REQUIRE(d.support == std::vector<int>{Vocab::THINK_OPEN});
    const auto dense = d.dense(f.w.vocab.size());
    for (int v = 0; v < f.w.vocab.size(); ++v)
        if (v != Vocab::THINK_OPEN) CHECK(dense[v] == 0.0);
    CHECK(dense[Vocab::THINK_OPEN] == 1.0);
}

TEST_CASE("masked sampling always yields valid parses within the length bound") {
    Fixture f(3);
    const PolicyParams params = PolicyParams::init(f.w.vocab, 8, 3, "t");
    const Context ctx = encode_query(f.w, params, f.query_rep);
    RngStream stream(3, "sample");
    for (int i = 0; i < 200; ++i) {
        const Trajectory t = sample_trajectory(params, f.w, ctx, stream, 3, 4, true);
        CHECK(t.valid_parse);
        CHECK(t.tokens.size() <= std::size_t(3 + 4 + 5));
        CHECK(!t.answer.empty());
    }
}

TEST_CASE("caps 8/12 bound the trajectory at 25 tokens") {
    Fixture f(4);
    const PolicyParams params = PolicyParams::init(f.w.vocab, 8, 4, "t");
    const Context ctx = encode_query(f.w, params, f.query_rep);
    RngStream stream(4, "sample");
    for (int i = 0; i < 100; ++i) {
        const Trajectory t = sample_trajectory(params, f.w, ctx, stream, 8, 12, true);
        CHECK(t.tokens.size() <= 25);
    }
}

TEST_CASE("logprob replays recorded sampling values exactly") {
    Fixture f(5);
    const PolicyParams params = PolicyParams::init(f.w.vocab, 8, 5, "t");
    for (const QuerySpec* q : {&f.query_eval, &f.query_rep}) {
        const Context ctx = encode_query(f.w, params, *q);
        RngStream stream(5, "replay");
        for (int i = 0; i < 50; ++i) {
            const Trajectory t = sample_trajectory(params, f.w, ctx, stream, 3, 4, true);
            const std::vector<double> lp = logprob(params, f.w.vocab, ctx, t.tokens, 3, 4, true);
            CHECK(lp == t.logprobs);  // bit-exact: same code path
        }
    }
}

TEST_CASE("zero parameters without mask give uniform -log|V| steps") {
    RunConfig cfg = desk_profile();
    cfg.n_object_tokens = 10;
    cfg.n_concrete_tokens = 16;
    cfg.n_abstract_tokens = 8;  // |V| = 42
    const WorldSpec w = build_world(cfg);
    PolicyParams params = PolicyParams::init(w.vocab, cfg.hidden_dim, 0, "t");
    std::fill(params.flat.begin(), params.flat.end(), 0.0);
    Instruction instr;
    instr.witness = {w.vocab.concrete_begin()};
    instr.alias = instr.witness;
    instr.target = w.feature(w.vocab.concrete_begin());
    const TokenSeq p0 = {w.vocab.object_begin()};
    const Context ctx = encode_context(w, params, Mode::REPROMPT, &instr, &p0, nullptr, nullptr);
    const std::vector<int> tokens = {Vocab::THINK_OPEN, w.vocab.object_begin(),
                                     Vocab::THINK_CLOSE};
    const std::vector<double> lp = logprob(params, w.vocab, ctx, tokens, 8, 8, false);
    for (double v : lp) CHECK(v == doctest::Approx(-std::log(42.0)).epsilon(1e-4));
}

TEST_CASE("impossible tokens under the mask raise the dedicated error") {
    Fixture f(6);
    const PolicyParams params = PolicyParams::init(f.w.vocab, 8, 6, "t");
    const Context ctx = encode_query(f.w, params, f.query_rep);
    // EOS is never legal at the first masked slot
    CHECK_THROWS_AS(logprob(params, f.w.vocab, ctx, {Vocab::EOS}, 3, 4, true),
                    ImpossibleTrajectory);
}

TEST_CASE("step KL is zero at identical parameters and non-negative otherwise") {
    Fixture f(7);
    const PolicyParams a = PolicyParams::init(f.w.vocab, 8, 7, "t");
    const PolicyParams b = PolicyParams::init(f.w.vocab, 8, 8, "t");
    const Context ca = encode_query(f.w, a, f.query_eval);
    const Context cb = encode_query(f.w, b, f.query_eval);
    GrammarCursor cursor(f.w.vocab, Mode::EVAL, 3, 4, true);
    std::vector<int> prefix;
    while (!cursor.done()) {
        CHECK(std::abs(step_kl(a, ca, a, ca, f.w.vocab, prefix, cursor)) <= 1e-12);
        CHECK(step_kl(a, ca, b, cb, f.w.vocab, prefix, cursor) >= -1e-12);
        const StepDist d = step_distribution(a, ca, prefix, cursor);
        prefix.push_back(d.support[0]);
        cursor.advance(d.support[0]);
    }
}

TEST_CASE("two-token masked KL matches the hand-computed value") {
    // p = (0.9, 0.1) vs q = (0.5, 0.5) on the EVAL verdict slot
    Fixture f(9);
    PolicyParams p_params = PolicyParams::init(f.w.vocab, 8, 9, "t");
    std::fill(p_params.flat.begin(), p_params.flat.end(), 0.0);
    PolicyParams q_params = p_params;
    p_params.flat[p_params.off_bv() + Vocab::YES] = std::log(0.9);
    p_params.flat[p_params.off_bv() + Vocab::NO] = std::log(0.1);
    const Context cp = encode_query(f.w, p_params, f.query_eval);
    const Context cq = encode_query(f.w, q_params, f.query_eval);
    GrammarCursor cursor(f.w.vocab, Mode::EVAL, 3, 4, true);
    const std::vector<int> prefix = {Vocab::THINK_OPEN, Vocab::THINK_CLOSE, Vocab::ANS_OPEN};
    for (int tok : prefix) cursor.advance(tok);
    const double kl = step_kl(p_params, cp, q_params, cq, f.w.vocab, prefix, cursor);
    CHECK(kl == doctest::Approx(0.3681).epsilon(1e-3));
}

TEST_CASE("parse accepts and rejects the documented shapes") {
    const Vocab v = build_vocab(desk_profile());
    const int obj = v.object_begin();
    const int con = v.concrete_begin();
    // well-formed EVAL verdict
    CHECK(parse_answer(v, Mode::EVAL,
                       {Vocab::THINK_OPEN, obj, Vocab::THINK_CLOSE, Vocab::ANS_OPEN, Vocab::YES,
                        Vocab::ANS_CLOSE, Vocab::EOS})
              .valid);
    // missing ANS_CLOSE
    CHECK_FALSE(parse_answer(v, Mode::EVAL,
                             {Vocab::THINK_OPEN, Vocab::THINK_CLOSE, Vocab::ANS_OPEN, Vocab::YES,
                              Vocab::EOS})
                    .valid);
    // REPROMPT with three descriptors
    const ParseResult three = parse_answer(
        v, Mode::REPROMPT,
        {Vocab::THINK_OPEN, Vocab::THINK_CLOSE, Vocab::ANS_OPEN, con, con + 1, con + 2,
         Vocab::ANS_CLOSE, Vocab::EOS});
    CHECK(three.valid);
    CHECK(three.answer == TokenSeq{con, con + 1, con + 2});
    // empty answer
    CHECK_FALSE(parse_answer(v, Mode::REPROMPT,
                             {Vocab::THINK_OPEN, Vocab::THINK_CLOSE, Vocab::ANS_OPEN,
                              Vocab::ANS_CLOSE, Vocab::EOS})
                    .valid);
    // verdict token inside a REPROMPT answer
    CHECK_FALSE(parse_answer(v, Mode::REPROMPT,
                             {Vocab::THINK_OPEN, Vocab::THINK_CLOSE, Vocab::ANS_OPEN, Vocab::YES,
                              Vocab::ANS_CLOSE, Vocab::EOS})
                    .valid);
    // EVAL answer with two verdicts
    CHECK_FALSE(parse_answer(v, Mode::EVAL,
                             {Vocab::THINK_OPEN, Vocab::THINK_CLOSE, Vocab::ANS_OPEN, Vocab::YES,
                              Vocab::NO, Vocab::ANS_CLOSE, Vocab::EOS})
                    .valid);
}

TEST_CASE("REPROMPT context is independent of any image pair") {
    Fixture f(10);
    const PolicyParams params = PolicyParams::init(f.w.vocab, 8, 10, "t");
    const Image img_a = generate(f.w, f.p0);
    const Image img_b = generate(f.w, {f.w.vocab.concrete_begin() + 1});
    const Context c1 =
        encode_context(f.w, params, Mode::REPROMPT, &f.instr, &f.p0, &img_a, &img_b);
    const Context c2 =
        encode_context(f.w, params, Mode::REPROMPT, &f.instr, &f.p0, &img_b, &img_a);
    CHECK(c1.raw == c2.raw);
    CHECK(c1.projected == c2.projected);
    for (double psi : c1.psi) CHECK(psi == 0.0);
}

TEST_CASE("EVAL psi features obey the documented symmetries") {
    Fixture f(11);
    const PolicyParams params = PolicyParams::init(f.w.vocab, 8, 11, "t");
    const Image img = generate(f.w, f.p0);
    const Context ctx = encode_context(f.w, params, Mode::EVAL, &f.instr, &f.p0, &img, &img);
    CHECK(ctx.psi[0] == ctx.psi[1]);
    CHECK(ctx.psi[2] == ctx.psi[3]);
    CHECK(ctx.psi[4] == ctx.psi[5]);
    CHECK(ctx.psi[6] == doctest::Approx(1.0).epsilon(1e-12));
    // dropping the instruction channel zeroes the compliance features and the
    // pooled alias embedding
    const Context no_a = encode_context(f.w, params, Mode::EVAL, nullptr, &f.p0, &img, &img);
    CHECK(no_a.psi[0] == 0.0);
    CHECK(no_a.psi[1] == 0.0);
    for (int k = 0; k < 8; ++k) CHECK(no_a.raw[k] == 0.0);
    CHECK_THROWS_AS(encode_context(f.w, params, Mode::EVAL, &f.instr, &f.p0, nullptr, nullptr),
                    ContractViolation);
}

TEST_CASE("greedy decoding breaks ties toward the lowest token id") {
    Fixture f(12);
    PolicyParams params = PolicyParams::init(f.w.vocab, 8, 12, "t");
    std::fill(params.flat.begin(), params.flat.end(), 0.0);  // all logits equal
    const Context ctx = encode_query(f.w, params, f.query_eval);
    const Trajectory t = greedy_trajectory(params, f.w, ctx, 3, 4, true);
    CHECK(t.valid_parse);
    REQUIRE(t.answer.size() == 1);
    CHECK(t.answer[0] == Vocab::YES);  // YES has the lower id of the verdict pair
}

TEST_CASE("weighted logprob gradient: zeros, linearity") {
    Fixture f(13);
    const PolicyParams params = PolicyParams::init(f.w.vocab, 8, 13, "t");
    const Context ctx = encode_query(f.w, params, f.query_rep);
    RngStream stream(13, "wgrad");
    const Trajectory t = sample_trajectory(params, f.w, ctx, stream, 3, 4, true);
    const std::size_t L = t.tokens.size();

    std::vector<double> zeros(L, 0.0);
    const auto gz = weighted_logprob_grad(params, f.w.vocab, ctx, t.tokens, zeros, 3, 4, true);
    for (double g : gz) CHECK(g == 0.0);

    std::vector<double> w1(L), w2(L), w12(L);
    for (std::size_t i = 0; i < L; ++i) {
        w1[i] = stream.normal();
        w2[i] = stream.normal();
        w12[i] = w1[i] + w2[i];
    }
    const auto g1 = weighted_logprob_grad(params, f.w.vocab, ctx, t.tokens, w1, 3, 4, true);
    const auto g2 = weighted_logprob_grad(params, f.w.vocab, ctx, t.tokens, w2, 3, 4, true);
    const auto g12 = weighted_logprob_grad(params, f.w.vocab, ctx, t.tokens, w12, 3, 4, true);
    for (std::size_t i = 0; i < g1.size(); ++i)
        CHECK(std::abs(g12[i] - (g1[i] + g2[i])) < 1e-10);
}

TEST_CASE("weighted logprob gradient agrees with central differences") {
    // exhaustive coordinate sweep on the tiny instance, three seeds, both
    // modes; the finite-difference evaluation re-encodes the context so the
    // pooling paths into the embedding table are exercised
    for (std::uint64_t seed : {101ull, 102ull, 103ull}) {
        Fixture f(seed);
        const PolicyParams params = PolicyParams::init(f.w.vocab, 8, seed, "fdw");
        const QuerySpec& q = (seed % 2 == 0) ? f.query_eval : f.query_rep;
        const Context ctx = encode_query(f.w, params, q);
        RngStream stream(seed, "fdw-sample");
        const Trajectory t = sample_trajectory(params, f.w, ctx, stream, 3, 4, true);
        std::vector<double> weights(t.tokens.size());
        for (double& x : weights) x = stream.normal();

        const auto analytic =
            weighted_logprob_grad(params, f.w.vocab, ctx, t.tokens, weights, 3, 4, true);

        auto objective = [&](const PolicyParams& p) {
            const Context c = encode_query(f.w, p, q);
            const auto lp = logprob(p, f.w.vocab, c, t.tokens, 3, 4, true);
            double s = 0.0;
            for (std::size_t i = 0; i < lp.size(); ++i) s += weights[i] * lp[i];
            return s;
        };
        const double h = 1e-5;
        double l2_diff = 0.0, l2_fd = 0.0;
        for (int i = 0; i < params.count(); ++i) {
            PolicyParams plus = params;
            plus.flat[i] += h;
            PolicyParams minus = params;
            minus.flat[i] -= h;
            const double fd = (objective(plus) - objective(minus)) / (2.0 * h);
            l2_diff += (analytic[i] - fd) * (analytic[i] - fd);
            l2_fd += fd * fd;
        }
        const double rel = std::sqrt(l2_diff) / std::sqrt(l2_fd);
        CHECK(rel <= 1e-5);
    }
}

TEST_CASE("parameter layout offsets tile the flat vector") {
    const Vocab v = build_vocab(desk_profile());
    const PolicyParams p = PolicyParams::init(v, 16, 0, "layout");
    CHECK(p.off_emb() == 0);
    CHECK(p.off_wctx() == v.size() * 16);
    CHECK(p.off_bv() + v.size() == p.count());
    CHECK(static_cast<int>(p.flat.size()) == p.count());
    // biases start at zero
    for (int i = p.off_bh(); i < p.off_wv(); ++i) CHECK(p.flat[i] == 0.0);
    for (int i = p.off_bv(); i < p.count(); ++i) CHECK(p.flat[i] == 0.0);
}
