// Benchmark comparing the serial reference lane against the OpenMP lane on
// the three data-parallel kernels: group gradient assembly, batched greedy
// decoding, and the finite-difference coordinate sweep. Also verifies that
// both lanes produce bit-identical results.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <vector>

#include "rrl/grpo.hpp"
#include "rrl/rewards.hpp"

using namespace rrl;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    std::vector<double> ms;
    for (int i = 0; i < reps; ++i) {
        const auto t0 = Clock::now();
        fn();
        const auto t1 = Clock::now();
        ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(ms.begin(), ms.end());
    return ms[ms.size() / 2];
}

void report(const char* name, double serial_ms, double parallel_ms, bool identical) {
    std::printf("%-28s serial %9.2f ms   openmp %9.2f ms   speedup %5.2fx   %s\n", name,
                serial_ms, parallel_ms, serial_ms / parallel_ms,
                identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
    std::printf("threads available: %d\n\n", max_threads());

    // inflated dimensions so the kernels have something to chew on
    RunConfig cfg = desk_profile();
    cfg.hidden_dim = 64;
    cfg.n_object_tokens = 40;
    cfg.n_concrete_tokens = 56;
    cfg.n_abstract_tokens = 24;
    cfg.group_size = 64;
    cfg.think_cap = 8;
    cfg.answer_cap = 12;
    const WorldSpec w = build_world(cfg);
    const Caps caps{cfg.think_cap, cfg.answer_cap, true};

    Instruction instr;
    instr.id = 0;
    instr.category = Category::attribute;
    instr.difficulty = Difficulty::hard;
    instr.witness = {w.vocab.concrete_begin(), w.vocab.concrete_begin() + 1};
    std::vector<double> target(w.d, 0.0);
    for (int t : instr.witness)
        for (int i = 0; i < w.d; ++i) target[i] += w.feature(t)[i];
    instr.target = normalized(std::move(target));
    instr.alias = {w.vocab.abstract_begin(), w.vocab.abstract_begin() + 1};
    const TokenSeq p0 = {w.vocab.object_begin(), w.vocab.object_begin() + 1,
                         w.vocab.object_begin() + 2};

    QuerySpec q;
    q.mode = Mode::REPROMPT;
    q.instruction = instr;
    q.p0 = p0;

    const PolicyParams params = PolicyParams::init(w.vocab, cfg.hidden_dim, 7, "bench");
    const PolicyParams ref = PolicyParams::init(w.vocab, cfg.hidden_dim, 8, "bench-ref");

    RngStream roll = seeded_stream(7, "bench-rollout");
    Group group = rollout_group(params, w, q, cfg.group_size, caps, roll, Exec::serial);
    group.rewards.resize(group.trajs.size());
    for (std::size_t i = 0; i < group.trajs.size(); ++i)
        group.rewards[i] = static_cast<double>(i % 3);
    group.advantages = normalize_advantages(group.rewards);

    {
        std::vector<double> g_serial, g_parallel;
        const double ms_s = time_ms(
            [&] {
                g_serial = surrogate_gradient(params, ref, w, group, cfg.clip_epsilon,
                                              cfg.kl_coeff, caps, nullptr, Exec::serial);
            },
            5);
        const double ms_p = time_ms(
            [&] {
                g_parallel = surrogate_gradient(params, ref, w, group, cfg.clip_epsilon,
                                                cfg.kl_coeff, caps, nullptr, Exec::parallel);
            },
            5);
        report("group gradient assembly", ms_s, ms_p, g_serial == g_parallel);
    }

    {
        const int n_contexts = 512;
        std::vector<Instruction> instrs(n_contexts, instr);
        std::vector<int> out_s(n_contexts), out_p(n_contexts);
        auto decode_all = [&](Exec exec, std::vector<int>& out) {
            parallel_for(exec, n_contexts, [&](int i) {
                TokenSeq my_p0 = p0;
                my_p0[0] = w.vocab.object_begin() + (i % w.vocab.n_object());
                const Context ctx =
                    encode_context(w, params, Mode::REPROMPT, &instrs[i], &my_p0, nullptr,
                                   nullptr);
                const Trajectory t = greedy_trajectory(params, w, ctx, caps.think_cap,
                                                       caps.answer_cap, caps.mask_on);
                out[i] = static_cast<int>(t.tokens.size());
            });
        };
        const double ms_s = time_ms([&] { decode_all(Exec::serial, out_s); }, 5);
        const double ms_p = time_ms([&] { decode_all(Exec::parallel, out_p); }, 5);
        report("batched greedy decoding", ms_s, ms_p, out_s == out_p);
    }

    {
        FdInstanceSpec spec;
        spec.seed = 1;
        spec.beta = 0.04;
        FdReport rep_s, rep_p;
        const double ms_s = time_ms([&] { rep_s = fd_verify(spec, Exec::serial); }, 3);
        const double ms_p = time_ms([&] { rep_p = fd_verify(spec, Exec::parallel); }, 3);
        report("fd coordinate sweep", ms_s, ms_p,
               rep_s.max_rel_err == rep_p.max_rel_err && rep_s.worst_coord == rep_p.worst_coord);
    }

    return 0;
}
