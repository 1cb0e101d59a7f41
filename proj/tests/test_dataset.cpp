#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rrl/dataset.hpp"

using namespace rrl;

namespace {

struct Pipeline {
    RunConfig cfg;
    WorldSpec w;
    Dataset ds;

    explicit Pipeline(std::uint64_t seed) {
        cfg = desk_profile();
        cfg.seed = seed;
        w = build_world(cfg);
        ds = gen_dataset(w, cfg);
    }
};

// one shared pipeline; generation is pure so tests may share it
const Pipeline& pipe() {
    static Pipeline p(0);
    return p;
}

}  // namespace

TEST_CASE("training set is 300 samples, 50 per category") {
    const Dataset& ds = pipe().ds;
    CHECK(ds.train.size() == 300);
    std::map<Category, int> hist;
    for (const ProxySample& s : ds.train) hist[ds.instruction(s.instruction_id).category] += 1;
    CHECK(hist.size() == 6);
    for (const auto& [cat, n] : hist) CHECK(n == 50);
}

TEST_CASE("every training sample passes the solvability certificate") {
    const Pipeline& p = pipe();
    for (const ProxySample& s : p.ds.train) {
        const Instruction& a = p.ds.instruction(s.instruction_id);
        CHECK(certify_binding(p.w, a, s.p0));
        CHECK(generate(p.w, s.p0).quality == 1.0);
    }
}

TEST_CASE("hard instructions fail naive-baseline compliance on every training prompt") {
    const Pipeline& p = pipe();
    int hard_bindings = 0;
    for (const ProxySample& s : p.ds.train) {
        const Instruction& a = p.ds.instruction(s.instruction_id);
        if (a.difficulty != Difficulty::hard) continue;
        const Image img = generate(p.w, naive_concat(a, s.p0));
        CHECK(oracle_reward(p.w, img, a, s.p0).compliance == 0);
        ++hard_bindings;
    }
    CHECK(hard_bindings == 150);
}

TEST_CASE("instruction invariants: witness arity, alias feasibility, conflicts") {
    const Pipeline& p = pipe();
    for (const Instruction& a : p.ds.instructions) {
        if (a.difficulty == Difficulty::simple) {
            CHECK(a.witness.size() == 1);
            CHECK(a.alias == a.witness);
            for (int t : a.alias) CHECK(p.w.vocab.is_feasible(t));
        } else {
            CHECK(a.witness.size() >= 2);
            CHECK(a.witness.size() <= 3);
            for (int t : a.alias) {
                CHECK_FALSE(p.w.vocab.is_feasible(t));
                CHECK(p.w.vocab.role(t) == Role::abstract_descriptor);
            }
        }
        if (a.category == Category::constraint)
            for (std::size_t i = 0; i < a.witness.size(); ++i)
                for (std::size_t j = i + 1; j < a.witness.size(); ++j)
                    CHECK(dot(p.w.feature(a.witness[i]), p.w.feature(a.witness[j])) < 0.0);
    }
}

TEST_CASE("generation is a pure function of (world, seed)") {
    const Pipeline& p = pipe();
    const Dataset again = gen_dataset(p.w, p.cfg);
    const std::string path_a =
        (std::filesystem::temp_directory_path() / "rrl_ds_a.jsonl").string();
    const std::string path_b =
        (std::filesystem::temp_directory_path() / "rrl_ds_b.jsonl").string();
    std::filesystem::remove(path_a);
    std::filesystem::remove(path_b);
    save_jsonl(p.ds, path_a);
    save_jsonl(again, path_b);
    std::ifstream fa(path_a), fb(path_b);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    CHECK(sa.str() == sb.str());
    std::filesystem::remove(path_a);
    std::filesystem::remove(path_b);
}

TEST_CASE("curriculum sets cover all 300 samples with the right conditions") {
    const Dataset& ds = pipe().ds;
    CHECK(ds.curriculum1.size() == 300);
    CHECK(ds.curriculum2.size() == 300);
    for (const Quadruplet& q : ds.curriculum1) {
        CHECK(q.phase == 1);
        CHECK_FALSE(q.has_a);
    }
    for (const Quadruplet& q : ds.curriculum2) {
        CHECK(q.phase == 2);
        CHECK(q.has_a);
    }
}

TEST_CASE("curriculum 1: negatives are strictly less consistent, positives clean") {
    const Pipeline& p = pipe();
    for (const Quadruplet& q : p.ds.curriculum1) {
        const Image ref = generate(p.w, q.p0);
        const bool first_pref = derive_first_preferred(p.w, p.ds.instructions, q);
        const Image& pos = first_pref ? q.first : q.second;
        const Image& neg = first_pref ? q.second : q.first;
        CHECK(pos.quality == 1.0);
        CHECK(dot(neg.v, ref.v) < dot(pos.v, ref.v));
        CHECK(q.label == (first_pref ? Vocab::YES : Vocab::NO));
        // the positive is the rendering of p0 itself
        CHECK(pos.v == ref.v);
    }
}

TEST_CASE("curriculum 1 negatives edit exactly one object token") {
    const Pipeline& p = pipe();
    int removals = 0, additions = 0;
    for (const Quadruplet& q : p.ds.curriculum1) {
        const bool first_pref = derive_first_preferred(p.w, p.ds.instructions, q);
        const TokenSeq& neg_prov = first_pref ? q.second_prov : q.first_prov;
        const TokenSeq& pos_prov = first_pref ? q.first_prov : q.second_prov;
        CHECK(pos_prov == q.p0);
        if (neg_prov.size() == q.p0.size() - 1)
            ++removals;
        else if (neg_prov.size() == q.p0.size() + 1)
            ++additions;
    }
    CHECK(removals + additions == 300);
    CHECK(removals > 30);
    CHECK(additions > 30);
}

TEST_CASE("curriculum 2: positive earns 3, negative stays behind under (a, p0)") {
    const Pipeline& p = pipe();
    int hard_gap_checked = 0;
    for (const Quadruplet& q : p.ds.curriculum2) {
        const Instruction& a = p.ds.instruction(q.instruction_id);
        const bool first_pref = derive_first_preferred(p.w, p.ds.instructions, q);
        const Image& pos = first_pref ? q.first : q.second;
        const Image& neg = first_pref ? q.second : q.first;
        const int r_pos = oracle_reward(p.w, pos, a, q.p0).sum();
        const int r_neg = oracle_reward(p.w, neg, a, q.p0).sum();
        CHECK(r_pos == 3);
        CHECK(r_neg < r_pos);
        if (a.difficulty == Difficulty::hard) {
            // negative keeps consistency and quality, fails only compliance
            CHECK(r_neg == 2);
            ++hard_gap_checked;
        }
    }
    CHECK(hard_gap_checked == 150);
}

TEST_CASE("swapping the presented pair flips the label") {
    const Pipeline& p = pipe();
    for (int i = 0; i < 50; ++i) {
        Quadruplet q = p.ds.curriculum2[i * 6 % p.ds.curriculum2.size()];
        Quadruplet swapped = q;
        std::swap(swapped.first, swapped.second);
        std::swap(swapped.first_prov, swapped.second_prov);
        const bool orig = derive_first_preferred(p.w, p.ds.instructions, q);
        const bool flip = derive_first_preferred(p.w, p.ds.instructions, swapped);
        CHECK(orig == !flip);
    }
}

TEST_CASE("test set histogram: 20 ID / 20 OOD instructions, 8 simple / 12 hard each") {
    const Pipeline& p = pipe();
    std::set<int> id_instr, ood_instr;
    for (const TestCase& tc : p.ds.test_cases) {
        const Instruction& a = p.ds.instruction(tc.instruction_id);
        (a.split == Split::train ? id_instr : ood_instr).insert(tc.instruction_id);
    }
    CHECK(id_instr.size() == 20);
    CHECK(ood_instr.size() == 20);
    auto count_simple = [&](const std::set<int>& ids) {
        int s = 0;
        for (int id : ids)
            if (p.ds.instruction(id).difficulty == Difficulty::simple) ++s;
        return s;
    };
    CHECK(count_simple(id_instr) == 8);
    CHECK(count_simple(ood_instr) == 8);
    CHECK(p.ds.test_cases.size() == 40u * p.cfg.prompts_per_test_instruction);
    CHECK(p.ds.test_quads.size() == p.ds.test_cases.size());
}

TEST_CASE("ID test prompts are disjoint from training prompts") {
    const Pipeline& p = pipe();
    std::set<TokenSeq> train_p0;
    for (const ProxySample& s : p.ds.train) {
        TokenSeq key = s.p0;
        std::sort(key.begin(), key.end());
        train_p0.insert(key);
    }
    for (const TestCase& tc : p.ds.test_cases) {
        TokenSeq key = tc.p0;
        std::sort(key.begin(), key.end());
        CHECK(train_p0.count(key) == 0);
    }
}

TEST_CASE("OOD instructions are fresh: ids, witness sets, aliases") {
    const Pipeline& p = pipe();
    std::set<TokenSeq> train_witness, train_alias;
    for (const Instruction& a : p.ds.instructions) {
        if (a.split != Split::train) continue;
        TokenSeq wk = a.witness, ak = a.alias;
        std::sort(wk.begin(), wk.end());
        std::sort(ak.begin(), ak.end());
        train_witness.insert(wk);
        train_alias.insert(ak);
    }
    int ood = 0;
    for (const Instruction& a : p.ds.instructions) {
        if (a.split != Split::test_ood) continue;
        ++ood;
        CHECK(a.id >= 30);
        TokenSeq wk = a.witness, ak = a.alias;
        std::sort(wk.begin(), wk.end());
        std::sort(ak.begin(), ak.end());
        CHECK(train_witness.count(wk) == 0);
        CHECK(train_alias.count(ak) == 0);
    }
    CHECK(ood == 20);
}

TEST_CASE("jsonl round-trip reproduces the dataset structurally") {
    const Pipeline& p = pipe();
    const std::string path =
        (std::filesystem::temp_directory_path() / "rrl_ds_rt.jsonl").string();
    std::filesystem::remove(path);
    save_jsonl(p.ds, path);
    const Dataset back = load_jsonl(path, p.w);
    CHECK(back.instructions.size() == p.ds.instructions.size());
    CHECK(back.train.size() == p.ds.train.size());
    CHECK(back.curriculum1.size() == p.ds.curriculum1.size());
    CHECK(back.curriculum2.size() == p.ds.curriculum2.size());
    CHECK(back.test_cases.size() == p.ds.test_cases.size());
    CHECK(back.test_quads.size() == p.ds.test_quads.size());
    for (std::size_t i = 0; i < p.ds.train.size(); ++i) {
        CHECK(back.train[i].instruction_id == p.ds.train[i].instruction_id);
        CHECK(back.train[i].p0 == p.ds.train[i].p0);
    }
    for (std::size_t i = 0; i < p.ds.curriculum2.size(); ++i) {
        CHECK(back.curriculum2[i].label == p.ds.curriculum2[i].label);
        CHECK(back.curriculum2[i].first.v == p.ds.curriculum2[i].first.v);
    }
    // saved twice gives identical bytes
    const std::string path2 =
        (std::filesystem::temp_directory_path() / "rrl_ds_rt2.jsonl").string();
    std::filesystem::remove(path2);
    save_jsonl(back, path2);
    std::ifstream fa(path), fb(path2);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    CHECK(sa.str() == sb.str());
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("truncated final line is rejected with its line number") {
    const Pipeline& p = pipe();
    const std::string path =
        (std::filesystem::temp_directory_path() / "rrl_ds_trunc.jsonl").string();
    std::filesystem::remove(path);
    save_jsonl(p.ds, path);
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    in.close();
    std::string text = ss.str();
    text.resize(text.size() - 40);  // cut into the last record
    std::ofstream out(path);
    out << text;
    out.close();
    try {
        load_jsonl(path, p.w);
        FAIL("expected a DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("label-inconsistent records are rejected at load") {
    const Pipeline& p = pipe();
    Dataset tampered = p.ds;
    Quadruplet& q = tampered.curriculum2[7];
    q.label = q.label == Vocab::YES ? Vocab::NO : Vocab::YES;
    const std::string path =
        (std::filesystem::temp_directory_path() / "rrl_ds_tamper.jsonl").string();
    std::filesystem::remove(path);
    save_jsonl(tampered, path);
    CHECK_THROWS_AS(load_jsonl(path, p.w), DataError);
    std::filesystem::remove(path);
}

TEST_CASE("manifest reports counts, hashes, and histograms") {
    const Pipeline& p = pipe();
    const std::string m = manifest_json(p.ds, p.w, config_hash(p.cfg));
    CHECK(m.find("\"train_samples\": 300") != std::string::npos);
    CHECK(m.find("\"world_hash\"") != std::string::npos);
    CHECK(m.find("\"id_hard\": 36") != std::string::npos);
    CHECK(m.find(config_hash(p.cfg)) != std::string::npos);
}
