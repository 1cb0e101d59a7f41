#pragma once

#include <map>
#include <string>
#include <vector>

#include "rrl/rng.hpp"
#include "rrl/world.hpp"

namespace rrl {

// One training pair: an instruction binding with a minimal prompt whose
// rendered image is clean (all tokens feasible, quality 1) and which does not
// already satisfy the instruction on its own.
struct ProxySample {
    int instruction_id = -1;
    TokenSeq p0;
};

// One pairwise supervision unit. The condition set is {p0} in curriculum 1
// and {a, p0} in curriculum 2; presentation order is randomized at build time
// with the label flipped accordingly. Provenance prompts let the label be
// re-derived and validated from scratch.
struct Quadruplet {
    int phase = 1;
    bool has_a = false;
    int instruction_id = -1;
    TokenSeq p0;
    Image first, second;
    TokenSeq first_prov, second_prov;
    int label = 0;  // Vocab::YES iff the first image is the preferred one
};

struct TestCase {
    int instruction_id = -1;
    TokenSeq p0;
};

struct Dataset {
    std::vector<Instruction> instructions;  // training ids first, then OOD
    std::vector<ProxySample> train;         // 300 = 6 categories x 50
    std::vector<Quadruplet> curriculum1;
    std::vector<Quadruplet> curriculum2;
    std::vector<TestCase> test_cases;   // 40 instructions x prompts_per_instruction
    std::vector<Quadruplet> test_quads;  // curriculum-2 construction, oracle labels

    const Instruction& instruction(int id) const;
    bool is_id_case(const TestCase& tc) const;  // ID vs OOD split membership
};

inline constexpr int kInstructionsPerCategory = 5;
inline constexpr int kBindingsPerInstruction = 10;  // 6 x 5 x 10 = 300
inline constexpr int kTestIdSimple = 8, kTestIdHard = 12;
inline constexpr int kTestOodSimple = 8, kTestOodHard = 12;

// Full deterministic generation pipeline; each sub-step draws from its own
// labeled stream derived from the config seed. The answer cap bounds the
// certified reprompt length so every certificate names a reprompt the policy
// can actually emit.
Dataset gen_dataset(const WorldSpec& w, const RunConfig& cfg);

// Individual stages, exposed for tests.
std::vector<Instruction> gen_train_instructions(const WorldSpec& w, RngStream& stream);
std::vector<ProxySample> gen_train_set(const WorldSpec& w, std::vector<Instruction>& instructions,
                                       RngStream& stream, int answer_cap);
std::vector<Quadruplet> gen_curriculum1(const WorldSpec& w, const std::vector<ProxySample>& samples,
                                        RngStream& stream);
std::vector<Quadruplet> gen_curriculum2(const WorldSpec& w,
                                        const std::vector<Instruction>& instructions,
                                        const std::vector<ProxySample>& samples,
                                        RngStream& stream);

// Re-derive which presented image the oracle prefers: real-valued consistency
// ordering for curriculum 1, strict conditioned bit-sum for curriculum 2.
bool derive_first_preferred(const WorldSpec& w, const std::vector<Instruction>& instructions,
                            const Quadruplet& q);

// Solvability certificate: p0 alone must not comply, p0 plus the witness set
// must reach oracle reward 3, and the certified reprompt must fit the answer
// cap (pass 0 to skip the length bound).
bool certify_binding(const WorldSpec& w, const Instruction& a, const TokenSeq& p0,
                     int answer_cap = 0);
TokenSeq certified_reprompt(const Instruction& a, const TokenSeq& p0);

void save_jsonl(const Dataset& ds, const std::string& path);
Dataset load_jsonl(const std::string& path, const WorldSpec& w);

std::string manifest_json(const Dataset& ds, const WorldSpec& w, const std::string& config_hash);

}  // namespace rrl
