#include "rrl/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rrl/config.hpp"

namespace rrl {

using nlohmann::json;

const Instruction& Dataset::instruction(int id) const {
    if (id < 0 || id >= static_cast<int>(instructions.size()))
        throw DataError("dataset: unknown instruction id " + std::to_string(id));
    return instructions[id];
}

bool Dataset::is_id_case(const TestCase& tc) const {
    return instruction(tc.instruction_id).split == Split::train;
}

TokenSeq certified_reprompt(const Instruction& a, const TokenSeq& p0) {
    TokenSeq out = p0;
    for (int wtok : a.witness)
        if (std::find(out.begin(), out.end(), wtok) == out.end()) out.push_back(wtok);
    return out;
}

bool certify_binding(const WorldSpec& w, const Instruction& a, const TokenSeq& p0,
                     int answer_cap) {
    const Image base = generate(w, p0);
    if (base.quality != 1.0) return false;
    // p0 alone must not already satisfy the instruction
    if (oracle_reward(w, base, a, p0).compliance != 0) return false;
    // p0 plus witnesses must reach the full reward, within the answer cap
    const TokenSeq reprompt = certified_reprompt(a, p0);
    if (answer_cap > 0 && static_cast<int>(reprompt.size()) > answer_cap) return false;
    const Image solved = generate(w, reprompt);
    return oracle_reward(w, solved, a, p0).sum() == 3;
}

namespace {

constexpr int kInstructionAttempts = 400;
constexpr int kBindingAttempts = 800;

Category categories_all[6] = {Category::material,  Category::perspective,
                              Category::semantic_edit, Category::attribute,
                              Category::constraint, Category::conceptual};

int witness_count_for(Category c) {
    switch (c) {
        case Category::material:
        case Category::perspective:
        case Category::semantic_edit: return 1;
        case Category::attribute: return 2;
        case Category::constraint: return 2;
        case Category::conceptual: return 3;
    }
    return 1;
}

TokenSeq draw_distinct(RngStream& stream, int begin, int count, int k) {
    TokenSeq out;
    while (static_cast<int>(out.size()) < k) {
        const int tok = begin + stream.uniform_int(count);
        if (std::find(out.begin(), out.end(), tok) == out.end()) out.push_back(tok);
    }
    return out;
}

std::vector<double> witness_target(const WorldSpec& w, const TokenSeq& witness) {
    std::vector<double> t(w.d, 0.0);
    for (int tok : witness)
        for (int i = 0; i < w.d; ++i) t[i] += w.feature(tok)[i];
    return normalized(std::move(t));
}

bool constraint_conflict_ok(const WorldSpec& w, const TokenSeq& witness) {
    for (std::size_t i = 0; i < witness.size(); ++i)
        for (std::size_t j = i + 1; j < witness.size(); ++j)
            if (dot(w.feature(witness[i]), w.feature(witness[j])) >= -0.02) return false;
    return true;
}

TokenSeq sorted_key(TokenSeq s) {
    std::sort(s.begin(), s.end());
    return s;
}

// Witness/alias freshness bookkeeping shared by train and OOD generation.
struct InstructionRegistry {
    std::set<TokenSeq> witness_sets;  // sorted
    std::set<TokenSeq> alias_keys;    // sorted
};

Instruction draw_instruction(const WorldSpec& w, Category cat, int id, Split split,
                             InstructionRegistry& reg, RngStream& stream) {
    const Vocab& v = w.vocab;
    for (int attempt = 0; attempt < kInstructionAttempts; ++attempt) {
        Instruction ins;
        ins.id = id;
        ins.category = cat;
        ins.difficulty = category_is_simple(cat) ? Difficulty::simple : Difficulty::hard;
        ins.split = split;
        ins.witness = draw_distinct(stream, v.concrete_begin(), v.n_concrete(),
                                    witness_count_for(cat));
        if (cat == Category::constraint && !constraint_conflict_ok(w, ins.witness)) continue;
        if (ins.difficulty == Difficulty::simple) {
            ins.alias = ins.witness;  // naming the witness directly keeps the
                                      // baseline competitive on simple cases
        } else {
            ins.alias = draw_distinct(stream, v.abstract_begin(), v.n_abstract(), 2);
        }
        const TokenSeq wkey = sorted_key(ins.witness);
        const TokenSeq akey = sorted_key(ins.alias);
        if (reg.witness_sets.count(wkey) || reg.alias_keys.count(akey)) continue;
        ins.target = witness_target(w, ins.witness);
        reg.witness_sets.insert(wkey);
        reg.alias_keys.insert(akey);
        return ins;
    }
    throw DataError("dataset: could not draw a fresh instruction for category " +
                    std::string(category_name(cat)) +
                    " after bounded retries; consider a larger descriptor pool");
}

TokenSeq draw_p0(const WorldSpec& w, RngStream& stream) {
    const Vocab& v = w.vocab;
    const int n_obj = 2 + stream.uniform_int(2);
    const int n_con = stream.uniform_int(2);
    TokenSeq p0 = draw_distinct(stream, v.object_begin(), v.n_object(), n_obj);
    if (n_con > 0) {
        TokenSeq extra = draw_distinct(stream, v.concrete_begin(), v.n_concrete(), n_con);
        p0.insert(p0.end(), extra.begin(), extra.end());
    }
    return p0;
}

TokenSeq draw_certified_p0(const WorldSpec& w, const Instruction& ins,
                           std::set<TokenSeq>& used_p0, RngStream& stream, int answer_cap,
                           const char* what) {
    for (int attempt = 0; attempt < kBindingAttempts; ++attempt) {
        TokenSeq p0 = draw_p0(w, stream);
        if (used_p0.count(sorted_key(p0))) continue;
        if (!certify_binding(w, ins, p0, answer_cap)) continue;
        used_p0.insert(sorted_key(p0));
        return p0;
    }
    throw DataError(std::string("dataset: ") + what + ": no certifiable prompt for instruction " +
                    std::to_string(ins.id) + " (" + category_name(ins.category) +
                    ") after bounded retries");
}

Quadruplet make_pair_record(const WorldSpec& w, int phase, bool has_a, int instruction_id,
                            const TokenSeq& p0, const TokenSeq& pos_prompt,
                            const TokenSeq& neg_prompt, RngStream& stream) {
    Quadruplet q;
    q.phase = phase;
    q.has_a = has_a;
    q.instruction_id = has_a ? instruction_id : -1;
    q.p0 = p0;
    const Image pos = generate(w, pos_prompt);
    const Image neg = generate(w, neg_prompt);
    const bool pos_first = stream.coin();
    if (pos_first) {
        q.first = pos;
        q.second = neg;
        q.first_prov = pos_prompt;
        q.second_prov = neg_prompt;
        q.label = Vocab::YES;
    } else {
        q.first = neg;
        q.second = pos;
        q.first_prov = neg_prompt;
        q.second_prov = pos_prompt;
        q.label = Vocab::NO;
    }
    return q;
}

}  // namespace

bool derive_first_preferred(const WorldSpec& w, const std::vector<Instruction>& instructions,
                            const Quadruplet& q) {
    if (q.phase == 1) {
        // condition {p0}: both sides keep quality 1, the separation lives in
        // the real-valued consistency ordering
        const Image ref = generate(w, q.p0);
        const double d1 = dot(q.first.v, ref.v);
        const double d2 = dot(q.second.v, ref.v);
        if (d1 == d2) throw DataError("quadruplet: tied consistency, no preferred side");
        return d1 > d2;
    }
    if (q.instruction_id < 0 || q.instruction_id >= static_cast<int>(instructions.size()))
        throw DataError("quadruplet: bad instruction reference");
    const Instruction& a = instructions[q.instruction_id];
    const int r1 = oracle_reward_conditioned(w, q.first, &a, &q.p0).sum();
    const int r2 = oracle_reward_conditioned(w, q.second, &a, &q.p0).sum();
    if (r1 == r2) throw DataError("quadruplet: tied oracle rewards, no preferred side");
    return r1 > r2;
}

std::vector<Instruction> gen_train_instructions(const WorldSpec& w, RngStream& stream) {
    std::vector<Instruction> out;
    InstructionRegistry reg;
    int id = 0;
    for (Category cat : categories_all)
        for (int k = 0; k < kInstructionsPerCategory; ++k)
            out.push_back(draw_instruction(w, cat, id++, Split::train, reg, stream));
    return out;
}

std::vector<ProxySample> gen_train_set(const WorldSpec& w, std::vector<Instruction>& instructions,
                                       RngStream& stream, int answer_cap) {
    std::vector<ProxySample> samples;
    std::set<TokenSeq> used_p0;
    for (const Instruction& ins : instructions) {
        for (int b = 0; b < kBindingsPerInstruction; ++b) {
            ProxySample s;
            s.instruction_id = ins.id;
            s.p0 = draw_certified_p0(w, ins, used_p0, stream, answer_cap, "train set");
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

std::vector<Quadruplet> gen_curriculum1(const WorldSpec& w,
                                        const std::vector<ProxySample>& samples,
                                        RngStream& stream) {
    const Vocab& v = w.vocab;
    std::vector<Quadruplet> out;
    out.reserve(samples.size());
    for (const ProxySample& s : samples) {
        const Image pos = generate(w, s.p0);
        TokenSeq neg_prompt;
        for (int attempt = 0;; ++attempt) {
            if (attempt >= kBindingAttempts)
                throw DataError("dataset: curriculum 1: no separating negative for a prompt");
            int n_objects = 0;
            for (int t : s.p0)
                if (v.role(t) == Role::object) ++n_objects;
            const bool remove = stream.coin() && n_objects > 1;  // never empty the prompt
            neg_prompt = s.p0;
            if (remove) {
                int pick = stream.uniform_int(n_objects);
                for (std::size_t i = 0; i < neg_prompt.size(); ++i) {
                    if (v.role(neg_prompt[i]) != Role::object) continue;
                    if (pick-- == 0) {
                        neg_prompt.erase(neg_prompt.begin() + i);
                        break;
                    }
                }
            } else {
                int add = v.object_begin() + stream.uniform_int(v.n_object());
                int guard = 0;
                while (std::find(neg_prompt.begin(), neg_prompt.end(), add) != neg_prompt.end() &&
                       guard++ < 64)
                    add = v.object_begin() + stream.uniform_int(v.n_object());
                if (std::find(neg_prompt.begin(), neg_prompt.end(), add) != neg_prompt.end())
                    continue;
                neg_prompt.push_back(add);
            }
            // strict consistency separation required by the label rule
            const Image neg = generate(w, neg_prompt);
            const double d_neg = dot(neg.v, pos.v);
            if (d_neg < 1.0 - 1e-9) break;
        }
        out.push_back(make_pair_record(w, 1, false, s.instruction_id, s.p0, s.p0, neg_prompt,
                                       stream));
    }
    return out;
}

std::vector<Quadruplet> gen_curriculum2(const WorldSpec& w,
                                        const std::vector<Instruction>& instructions,
                                        const std::vector<ProxySample>& samples,
                                        RngStream& stream) {
    std::vector<Quadruplet> out;
    out.reserve(samples.size());
    for (const ProxySample& s : samples) {
        const Instruction& a = instructions.at(s.instruction_id);
        const TokenSeq pos_prompt = certified_reprompt(a, s.p0);
        Quadruplet q = make_pair_record(w, 2, true, a.id, s.p0, pos_prompt, s.p0, stream);
        // certified upstream; keep the generation-time assertion anyway
        const int r_pos = oracle_reward(w, generate(w, pos_prompt), a, s.p0).sum();
        const int r_neg = oracle_reward(w, generate(w, s.p0), a, s.p0).sum();
        if (r_pos <= r_neg)
            throw DataError("dataset: curriculum 2: positive not strictly preferred");
        out.push_back(std::move(q));
    }
    return out;
}

namespace {

void gen_test_side(const WorldSpec& w, Dataset& ds, InstructionRegistry& reg,
                   std::set<TokenSeq>& used_p0, RngStream& stream, int prompts_per_instruction,
                   int answer_cap) {
    // ID side: reuse training instructions with fresh prompts
    std::vector<int> simple_ids, hard_ids;
    for (const Instruction& ins : ds.instructions) {
        if (ins.split != Split::train) continue;
        (ins.difficulty == Difficulty::simple ? simple_ids : hard_ids).push_back(ins.id);
    }
    auto pick_subset = [&](std::vector<int>& pool, int k) {
        std::vector<int> chosen;
        for (int i = 0; i < k; ++i) {
            const int at = stream.uniform_int(static_cast<int>(pool.size()));
            chosen.push_back(pool[at]);
            pool.erase(pool.begin() + at);
        }
        std::sort(chosen.begin(), chosen.end());
        return chosen;
    };
    std::vector<int> id_instr = pick_subset(simple_ids, kTestIdSimple);
    {
        std::vector<int> h = pick_subset(hard_ids, kTestIdHard);
        id_instr.insert(id_instr.end(), h.begin(), h.end());
    }

    // OOD side: fresh witness combinations, fresh aliases, fresh prompts
    std::vector<int> ood_instr;
    const Category simple_cats[3] = {Category::material, Category::perspective,
                                     Category::semantic_edit};
    const Category hard_cats[3] = {Category::attribute, Category::constraint,
                                   Category::conceptual};
    const int simple_counts[3] = {3, 3, 2};  // 8 simple
    const int hard_counts[3] = {4, 4, 4};    // 12 hard
    int next_id = static_cast<int>(ds.instructions.size());
    for (int c = 0; c < 3; ++c)
        for (int k = 0; k < simple_counts[c]; ++k) {
            ds.instructions.push_back(
                draw_instruction(w, simple_cats[c], next_id, Split::test_ood, reg, stream));
            ood_instr.push_back(next_id++);
        }
    for (int c = 0; c < 3; ++c)
        for (int k = 0; k < hard_counts[c]; ++k) {
            ds.instructions.push_back(
                draw_instruction(w, hard_cats[c], next_id, Split::test_ood, reg, stream));
            ood_instr.push_back(next_id++);
        }

    auto bind = [&](const std::vector<int>& ids, const char* what) {
        for (int id : ids)
            for (int p = 0; p < prompts_per_instruction; ++p) {
                TestCase tc;
                tc.instruction_id = id;
                tc.p0 = draw_certified_p0(w, ds.instruction(id), used_p0, stream, answer_cap,
                                          what);
                ds.test_cases.push_back(std::move(tc));
            }
    };
    bind(id_instr, "test set (ID)");
    bind(ood_instr, "test set (OOD)");

    // oracle-labeled judge quadruplets via the curriculum-2 construction
    for (const TestCase& tc : ds.test_cases) {
        const Instruction& a = ds.instruction(tc.instruction_id);
        ds.test_quads.push_back(
            make_pair_record(w, 2, true, a.id, tc.p0, certified_reprompt(a, tc.p0), tc.p0,
                             stream));
    }
}

}  // namespace

Dataset gen_dataset(const WorldSpec& w, const RunConfig& cfg) {
    const std::uint64_t seed = cfg.seed;
    Dataset ds;
    RngStream s_instr = seeded_stream(seed, "data/instructions");
    ds.instructions = gen_train_instructions(w, s_instr);

    RngStream s_train = seeded_stream(seed, "data/train");
    ds.train = gen_train_set(w, ds.instructions, s_train, cfg.answer_cap);

    RngStream s_c1 = seeded_stream(seed, "data/curriculum1");
    ds.curriculum1 = gen_curriculum1(w, ds.train, s_c1);
    RngStream s_c2 = seeded_stream(seed, "data/curriculum2");
    ds.curriculum2 = gen_curriculum2(w, ds.instructions, ds.train, s_c2);

    // freshness registries seeded from the training side so test prompts,
    // witness sets and aliases stay disjoint
    InstructionRegistry reg;
    for (const Instruction& ins : ds.instructions) {
        reg.witness_sets.insert(sorted_key(ins.witness));
        reg.alias_keys.insert(sorted_key(ins.alias));
    }
    std::set<TokenSeq> used_p0;
    for (const ProxySample& s : ds.train) used_p0.insert(sorted_key(s.p0));

    RngStream s_test = seeded_stream(seed, "data/test");
    gen_test_side(w, ds, reg, used_p0, s_test, cfg.prompts_per_test_instruction, cfg.answer_cap);
    return ds;
}

namespace {

json image_json(const Image& img) {
    return json{{"v", img.v}, {"quality", img.quality}};
}

Image image_from_json(const json& j, int d) {
    Image img;
    img.v = j.at("v").get<std::vector<double>>();
    img.quality = j.at("quality").get<double>();
    if (static_cast<int>(img.v.size()) != d) throw DataError("image: dimension mismatch");
    return img;
}

json quad_json(const char* type, const Quadruplet& q) {
    json j;
    j["type"] = type;
    j["phase"] = q.phase;
    j["has_a"] = q.has_a;
    j["instruction_id"] = q.instruction_id;
    j["p0"] = q.p0;
    j["first"] = image_json(q.first);
    j["second"] = image_json(q.second);
    j["first_prov"] = q.first_prov;
    j["second_prov"] = q.second_prov;
    j["label"] = q.label;
    return j;
}

Quadruplet quad_from_json(const json& j, int d) {
    Quadruplet q;
    q.phase = j.at("phase").get<int>();
    q.has_a = j.at("has_a").get<bool>();
    q.instruction_id = j.at("instruction_id").get<int>();
    q.p0 = j.at("p0").get<TokenSeq>();
    q.first = image_from_json(j.at("first"), d);
    q.second = image_from_json(j.at("second"), d);
    q.first_prov = j.at("first_prov").get<TokenSeq>();
    q.second_prov = j.at("second_prov").get<TokenSeq>();
    q.label = j.at("label").get<int>();
    return q;
}

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::test_id: return "test-id";
        case Split::test_ood: return "test-ood";
    }
    return "?";
}

Split split_from_name(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test-id") return Split::test_id;
    if (s == "test-ood") return Split::test_ood;
    throw DataError("unknown split '" + s + "'");
}

}  // namespace

void save_jsonl(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("dataset: cannot write '" + path + "'");
    for (const Instruction& ins : ds.instructions) {
        json j;
        j["type"] = "instruction";
        j["id"] = ins.id;
        j["category"] = category_name(ins.category);
        j["difficulty"] = ins.difficulty == Difficulty::simple ? "simple" : "hard";
        j["target"] = ins.target;
        j["witness"] = ins.witness;
        j["alias"] = ins.alias;
        j["split"] = split_name(ins.split);
        out << j.dump() << "\n";
    }
    for (const ProxySample& s : ds.train) {
        json j;
        j["type"] = "sample";
        j["instruction_id"] = s.instruction_id;
        j["p0"] = s.p0;
        out << j.dump() << "\n";
    }
    for (const Quadruplet& q : ds.curriculum1) out << quad_json("quadruplet", q).dump() << "\n";
    for (const Quadruplet& q : ds.curriculum2) out << quad_json("quadruplet", q).dump() << "\n";
    for (const TestCase& tc : ds.test_cases) {
        json j;
        j["type"] = "test_case";
        j["instruction_id"] = tc.instruction_id;
        j["p0"] = tc.p0;
        out << j.dump() << "\n";
    }
    for (const Quadruplet& q : ds.test_quads) out << quad_json("test_quadruplet", q).dump() << "\n";
}

namespace {

void validate_dataset(const Dataset& ds, const WorldSpec& w) {
    auto check = [](bool ok, const std::string& what) {
        if (!ok) throw DataError("dataset: invariant violated: " + what);
    };
    for (const Instruction& ins : ds.instructions) {
        const bool simple = ins.difficulty == Difficulty::simple;
        check(simple == category_is_simple(ins.category), "difficulty/category mismatch");
        check(simple ? ins.witness.size() == 1
                     : ins.witness.size() >= 2 && ins.witness.size() <= 3,
              "witness arity");
        for (int t : ins.witness)
            check(w.vocab.role(t) == Role::concrete_descriptor, "witness role");
        if (simple) {
            check(ins.alias == ins.witness, "simple alias must name its witness");
        } else {
            for (int t : ins.alias)
                check(w.vocab.role(t) == Role::abstract_descriptor,
                      "hard alias must be abstract");
        }
        if (ins.category == Category::constraint)
            check(constraint_conflict_ok(w, ins.witness), "constraint witnesses must conflict");
        const std::vector<double> t = witness_target(w, ins.witness);
        double dd = 0.0;
        for (int i = 0; i < w.d; ++i) dd += (t[i] - ins.target[i]) * (t[i] - ins.target[i]);
        check(dd < 1e-18, "target must be the normalized witness feature sum");
    }
    for (const ProxySample& s : ds.train) {
        const Instruction& a = ds.instruction(s.instruction_id);
        check(generate(w, s.p0).quality == 1.0, "sample prompt must render cleanly");
        check(certify_binding(w, a, s.p0), "sample must be solvable and non-trivial");
    }
    auto check_quads = [&](const std::vector<Quadruplet>& quads, const char* what) {
        for (const Quadruplet& q : quads) {
            const bool first_pref = derive_first_preferred(w, ds.instructions, q);
            check(q.label == (first_pref ? Vocab::YES : Vocab::NO),
                  std::string(what) + ": label inconsistent with stored images");
            check(q.has_a == (q.phase == 2), std::string(what) + ": condition set per phase");
        }
    };
    check_quads(ds.curriculum1, "curriculum1");
    check_quads(ds.curriculum2, "curriculum2");
    check_quads(ds.test_quads, "test quadruplets");
    for (const TestCase& tc : ds.test_cases)
        check(certify_binding(w, ds.instruction(tc.instruction_id), tc.p0),
              "test case must be certified solvable");
}

}  // namespace

Dataset load_jsonl(const std::string& path, const WorldSpec& w) {
    std::ifstream in(path);
    if (!in) throw DataError("dataset: cannot open '" + path + "'");
    Dataset ds;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("dataset: line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            const std::string type = j.at("type").get<std::string>();
            if (type == "instruction") {
                Instruction ins;
                ins.id = j.at("id").get<int>();
                ins.category = category_from_name(j.at("category").get<std::string>());
                ins.difficulty = j.at("difficulty").get<std::string>() == "simple"
                                     ? Difficulty::simple
                                     : Difficulty::hard;
                ins.target = j.at("target").get<std::vector<double>>();
                ins.witness = j.at("witness").get<TokenSeq>();
                ins.alias = j.at("alias").get<TokenSeq>();
                ins.split = split_from_name(j.at("split").get<std::string>());
                if (ins.id != static_cast<int>(ds.instructions.size()))
                    throw DataError("instruction ids must be dense and ordered");
                ds.instructions.push_back(std::move(ins));
            } else if (type == "sample") {
                ProxySample s;
                s.instruction_id = j.at("instruction_id").get<int>();
                s.p0 = j.at("p0").get<TokenSeq>();
                ds.train.push_back(std::move(s));
            } else if (type == "quadruplet") {
                Quadruplet q = quad_from_json(j, w.d);
                (q.phase == 1 ? ds.curriculum1 : ds.curriculum2).push_back(std::move(q));
            } else if (type == "test_case") {
                TestCase tc;
                tc.instruction_id = j.at("instruction_id").get<int>();
                tc.p0 = j.at("p0").get<TokenSeq>();
                ds.test_cases.push_back(std::move(tc));
            } else if (type == "test_quadruplet") {
                ds.test_quads.push_back(quad_from_json(j, w.d));
            } else {
                throw DataError("unknown record type '" + type + "'");
            }
        } catch (const json::exception& e) {
            throw DataError("dataset: line " + std::to_string(line_no) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError("dataset: line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    validate_dataset(ds, w);
    return ds;
}

std::string manifest_json(const Dataset& ds, const WorldSpec& w, const std::string& config_hash) {
    json hist;
    int id_simple = 0, id_hard = 0, ood_simple = 0, ood_hard = 0;
    for (const TestCase& tc : ds.test_cases) {
        const Instruction& a = ds.instruction(tc.instruction_id);
        const bool is_id = a.split == Split::train;
        const bool simple = a.difficulty == Difficulty::simple;
        (is_id ? (simple ? id_simple : id_hard) : (simple ? ood_simple : ood_hard))++;
    }
    json cat_hist = json::object();
    for (const ProxySample& s : ds.train) {
        const std::string c = category_name(ds.instruction(s.instruction_id).category);
        cat_hist[c] = cat_hist.value(c, 0) + 1;
    }
    json j;
    j["seed"] = w.seed;
    j["world_hash"] = world_hash(w);
    j["config_hash"] = config_hash;
    j["artifact_version"] = kArtifactVersion;
    j["counts"] = {{"instructions", ds.instructions.size()},
                   {"train_samples", ds.train.size()},
                   {"curriculum1", ds.curriculum1.size()},
                   {"curriculum2", ds.curriculum2.size()},
                   {"test_cases", ds.test_cases.size()},
                   {"test_quadruplets", ds.test_quads.size()}};
    j["train_category_histogram"] = cat_hist;
    j["test_histogram"] = {{"id_simple", id_simple},
                           {"id_hard", id_hard},
                           {"ood_simple", ood_simple},
                           {"ood_hard", ood_hard}};
    return j.dump(2) + "\n";
}

}  // namespace rrl
