#include "rrl/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace rrl {

using nlohmann::json;

std::string fmt_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

void EvalTable::add(bool is_id, bool is_simple, double score) {
    auto bump = [&](int cell) {
        score_sum[cell] += score;
        count[cell] += 1;
    };
    bump(total);
    if (is_id) {
        bump(id_overall);
        bump(is_simple ? id_simple : id_hard);
    } else {
        bump(ood_overall);
        bump(is_simple ? ood_simple : ood_hard);
    }
}

double EvalTable::value(int cell) const {
    if (count[cell] == 0) throw ContractViolation("EvalTable: empty cell has no value");
    return score_sum[cell] / count[cell];
}

std::string EvalTable::to_json(const std::string& metric_name) const {
    json j;
    j["metric"] = metric_name;
    json cells = json::object();
    json counts = json::object();
    for (int c = 0; c < 7; ++c) {
        counts[kCellNames[c]] = count[c];
        if (count[c] > 0) cells[kCellNames[c]] = value(c);
    }
    j["cells"] = cells;
    j["counts"] = counts;
    return j.dump(2) + "\n";
}

const char* MetricsWriter::header() {
    return "step,stage,phase,epoch,mean_reward,format_rate,task_rate,mean_kl,grad_norm,"
           "clip_frac,eval_total,eval_id,eval_ood,win_total,infeasible_mass,answer_len";
}

void MetricsWriter::add_update_row(int step, const std::string& stage, int phase, int epoch,
                                   double mean_reward, double format_rate, double task_rate,
                                   const UpdateReport& report) {
    std::ostringstream os;
    os << step << ',' << stage << ',' << phase << ',' << epoch << ',' << fmt_double(mean_reward)
       << ',' << fmt_double(format_rate) << ',' << fmt_double(task_rate) << ','
       << fmt_double(report.mean_kl) << ',' << fmt_double(report.grad_norm) << ','
       << fmt_double(report.clip_frac) << ",,,,,,";
    rows_.push_back(os.str());
}

void MetricsWriter::add_eval_row(int step, const std::string& stage, int phase, int epoch,
                                 const std::optional<EvalTable>& judge,
                                 const std::optional<double>& win_total,
                                 const std::optional<double>& infeasible_mass,
                                 const std::optional<double>& answer_len) {
    std::ostringstream os;
    os << step << ',' << stage << ',' << phase << ',' << epoch << ",,,,,,,";
    if (judge && judge->has(EvalTable::total)) os << fmt_double(judge->value(EvalTable::total));
    os << ',';
    if (judge && judge->has(EvalTable::id_overall))
        os << fmt_double(judge->value(EvalTable::id_overall));
    os << ',';
    if (judge && judge->has(EvalTable::ood_overall))
        os << fmt_double(judge->value(EvalTable::ood_overall));
    os << ',';
    if (win_total) os << fmt_double(*win_total);
    os << ',';
    if (infeasible_mass) os << fmt_double(*infeasible_mass);
    os << ',';
    if (answer_len) os << fmt_double(*answer_len);
    rows_.push_back(os.str());
}

std::string MetricsWriter::to_csv() const {
    std::string out = header();
    out.push_back('\n');
    for (const auto& r : rows_) {
        out += r;
        out.push_back('\n');
    }
    return out;
}

void MetricsWriter::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("metrics: cannot write '" + path + "'");
    out << to_csv();
}

std::string Diagnostics::to_json() const {
    json j;
    j["infeasible_mass"] = infeasible_mass;
    j["infeasible_emission_rate"] = infeasible_emission_rate;
    j["mean_answer_len"] = mean_answer_len;
    j["mean_bt_pref_vs_naive"] = mean_bt_pref_vs_naive;
    return j.dump(2) + "\n";
}

namespace {

struct CaseKind {
    bool is_id;
    bool is_simple;
};

CaseKind kind_of(const Dataset& ds, int instruction_id) {
    const Instruction& a = ds.instruction(instruction_id);
    return CaseKind{a.split == Split::train, a.difficulty == Difficulty::simple};
}

}  // namespace

EvalTable evaluate_judge(const WorldSpec& w, const Dataset& ds, const VerdictFn& verdict,
                         Exec exec) {
    (void)w;
    const int n = static_cast<int>(ds.test_quads.size());
    std::vector<double> correct(n, 0.0);
    parallel_for(exec, n, [&](int i) {
        const Quadruplet& q = ds.test_quads[i];
        const Verdict v = verdict(q);
        const bool label_yes = q.label == Vocab::YES;
        correct[i] = ((v == Verdict::yes) == label_yes) ? 1.0 : 0.0;
    });
    EvalTable table;
    for (int i = 0; i < n; ++i) {
        const CaseKind k = kind_of(ds, ds.test_quads[i].instruction_id);
        table.add(k.is_id, k.is_simple, correct[i]);
    }
    return table;
}

EvalTable evaluate_judge(const WorldSpec& w, const Dataset& ds, const PolicyParams& params,
                         const Caps& caps, Exec exec) {
    return evaluate_judge(
        w, ds,
        [&](const Quadruplet& q) {
            const Instruction* a = q.has_a ? &ds.instruction(q.instruction_id) : nullptr;
            return evaluator_verdict(params, w, q.first, q.second, a, &q.p0, caps);
        },
        exec);
}

EvalTable evaluate_winrate(const WorldSpec& w, const Dataset& ds, const PolicyParams& policy,
                           const PolicyParams* base_params, Opponent opponent, const Caps& caps,
                           Exec exec) {
    if (opponent == Opponent::base && base_params == nullptr)
        throw ContractViolation("evaluate_winrate: base opponent needs base parameters");
    const int n = static_cast<int>(ds.test_cases.size());
    std::vector<double> scores(n, 0.0);
    parallel_for(exec, n, [&](int i) {
        const TestCase& tc = ds.test_cases[i];
        const Instruction& a = ds.instruction(tc.instruction_id);

        auto reprompt_image = [&](const PolicyParams& p) {
            const Context ctx = encode_context(w, p, Mode::REPROMPT, &a, &tc.p0, nullptr, nullptr);
            const Trajectory t =
                greedy_trajectory(p, w, ctx, caps.think_cap, caps.answer_cap, caps.mask_on);
            return t.valid_parse ? generate(w, t.answer) : blank_image(w.d);
        };

        const Image x_pol = reprompt_image(policy);
        const Image x_opp = opponent == Opponent::naive
                                ? generate(w, naive_concat(a, tc.p0))
                                : reprompt_image(*base_params);
        const int r_pol = oracle_reward(w, x_pol, a, tc.p0).sum();
        const int r_opp = oracle_reward(w, x_opp, a, tc.p0).sum();
        scores[i] = r_pol > r_opp ? 1.0 : (r_pol == r_opp ? 0.5 : 0.0);
    });
    EvalTable table;
    for (int i = 0; i < n; ++i) {
        const CaseKind k = kind_of(ds, ds.test_cases[i].instruction_id);
        table.add(k.is_id, k.is_simple, scores[i]);
    }
    return table;
}

Diagnostics alignment_diagnostics(const WorldSpec& w, const Dataset& ds,
                                  const PolicyParams& params, const Caps& caps,
                                  std::uint64_t seed, int samples_per_context, Exec exec) {
    const int n = static_cast<int>(ds.test_cases.size());
    struct PerCase {
        double mass_sum = 0.0;
        int mass_steps = 0;
        int emissions = 0;
        int samples = 0;
        double answer_len = 0.0;
        double bt = 0.0;
    };
    std::vector<PerCase> acc(n);
    parallel_for(exec, n, [&](int i) {
        const TestCase& tc = ds.test_cases[i];
        const Instruction& a = ds.instruction(tc.instruction_id);
        const Context ctx =
            encode_context(w, params, Mode::REPROMPT, &a, &tc.p0, nullptr, nullptr);
        PerCase pc;

        // greedy walk, recording abstract-token mass at answer-content slots
        GrammarCursor cursor(w.vocab, Mode::REPROMPT, caps.think_cap, caps.answer_cap,
                             caps.mask_on);
        std::vector<int> tokens;
        while (!cursor.done()) {
            const StepDist d = step_distribution(params, ctx, tokens, cursor);
            if (cursor.at_answer_content_step()) {
                double mass = 0.0;
                for (std::size_t k = 0; k < d.support.size(); ++k)
                    if (w.vocab.role(d.support[k]) == Role::abstract_descriptor)
                        mass += d.prob[k];
                pc.mass_sum += mass;
                pc.mass_steps += 1;
            }
            std::size_t best = 0;
            for (std::size_t k = 1; k < d.support.size(); ++k)
                if (d.logprob[k] > d.logprob[best]) best = k;
            tokens.push_back(d.support[best]);
            cursor.advance(d.support[best]);
        }
        const ParseResult greedy_parse = parse_answer(w.vocab, Mode::REPROMPT, tokens);
        const Image x_greedy =
            greedy_parse.valid ? generate(w, greedy_parse.answer) : blank_image(w.d);
        const Image x_ref = generate(w, naive_concat(a, tc.p0));
        pc.bt = bt_preference(oracle_reward(w, x_greedy, a, tc.p0).sum(),
                              oracle_reward(w, x_ref, a, tc.p0).sum(), w.bt_scale);

        RngStream stream(seed, "diagnostics/case" + std::to_string(i));
        for (int s = 0; s < samples_per_context; ++s) {
            const Trajectory t = sample_trajectory(params, w, ctx, stream, caps.think_cap,
                                                   caps.answer_cap, caps.mask_on);
            pc.samples += 1;
            pc.answer_len += static_cast<double>(t.answer.size());
            bool infeasible = false;
            for (int tok : t.answer)
                if (!w.vocab.is_feasible(tok)) infeasible = true;
            if (infeasible) pc.emissions += 1;
        }
        acc[i] = pc;
    });

    Diagnostics d;
    double mass = 0.0, bt = 0.0, alen = 0.0;
    int mass_steps = 0, emissions = 0, samples = 0;
    for (const PerCase& pc : acc) {
        mass += pc.mass_sum;
        mass_steps += pc.mass_steps;
        emissions += pc.emissions;
        samples += pc.samples;
        alen += pc.answer_len;
        bt += pc.bt;
    }
    d.infeasible_mass = mass_steps > 0 ? mass / mass_steps : 0.0;
    d.infeasible_emission_rate = samples > 0 ? static_cast<double>(emissions) / samples : 0.0;
    d.mean_answer_len = samples > 0 ? alen / samples : 0.0;
    d.mean_bt_pref_vs_naive = n > 0 ? bt / n : 0.0;
    return d;
}

namespace {

struct GroupOutcome {
    double mean_reward = 0.0;
    double format_rate = 0.0;
    double task_rate = 0.0;
};

// One GRPO update: rollout, reward, standardize, single gradient step
// (one iteration per update, so every ratio the surrogate sees is 1).
GroupOutcome group_update(const RunConfig& cfg, const WorldSpec& w, PolicyParams& params,
                          const PolicyParams& ref, OptState& opt, const OptimSettings& optim,
                          const QuerySpec& query,
                          const std::function<RewardBreakdown(const Trajectory&)>& reward_fn,
                          RngStream& rollout_stream, UpdateReport& report, Exec exec) {
    const Caps caps{cfg.think_cap, cfg.answer_cap, cfg.grammar_mask};
    Group group = rollout_group(params, w, query, cfg.group_size, caps, rollout_stream, exec);
    GroupOutcome out;
    group.rewards.resize(group.trajs.size());
    for (std::size_t i = 0; i < group.trajs.size(); ++i) {
        const RewardBreakdown r = reward_fn(group.trajs[i]);
        group.rewards[i] = static_cast<double>(r.total());
        out.format_rate += r.format_bit;
        out.task_rate += r.task_bit;
        out.mean_reward += r.total();
    }
    const double n = static_cast<double>(group.trajs.size());
    out.format_rate /= n;
    out.task_rate /= n;
    out.mean_reward /= n;
    group.advantages = normalize_advantages(group.rewards);
    const std::vector<double> grad = surrogate_gradient(params, ref, w, group, cfg.clip_epsilon,
                                                        cfg.kl_coeff, caps, &report, exec);
    update_step(params, grad, opt, optim);
    return out;
}

std::vector<int> epoch_order(std::uint64_t seed, const std::string& label, int n) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    RngStream stream(seed, label);
    for (int i = n - 1; i > 0; --i) std::swap(idx[i], idx[stream.uniform_int(i + 1)]);
    return idx;
}

}  // namespace

PolicyParams train_rlvr(const RunConfig& cfg, const WorldSpec& w, const Dataset& ds,
                        PolicyParams params, bool skip_phase1, MetricsWriter& metrics, int& step,
                        Exec exec) {
    const Caps caps{cfg.think_cap, cfg.answer_cap, cfg.grammar_mask};
    const PolicyParams ref = params;  // stage anchor
    OptState opt;
    opt.reset(params.count());

    const auto eval_row = [&](int phase, int epoch) {
        const EvalTable t = evaluate_judge(w, ds, params, caps, exec);
        metrics.add_eval_row(step, "rlvr", phase, epoch, t, std::nullopt, std::nullopt,
                             std::nullopt);
    };

    const int first_phase = skip_phase1 ? 2 : 1;
    bool initial_row_done = false;
    for (int phase = first_phase; phase <= 2; ++phase) {
        const auto& quads = phase == 1 ? ds.curriculum1 : ds.curriculum2;
        const double lr = phase == 1 ? cfg.lr_rlvr_phase1 : cfg.lr_rlvr_phase2;
        const int epochs = phase == 1 ? cfg.epochs_rlvr_phase1 : cfg.epochs_rlvr_phase2;
        const OptimSettings optim{cfg.optimizer, lr, cfg.weight_decay};
        opt.reset(params.count());  // fresh moments per phase (learning rate changes)
        if (!initial_row_done) {
            eval_row(phase, 0);
            initial_row_done = true;
        }
        for (int epoch = 1; epoch <= epochs; ++epoch) {
            const std::vector<int> order = epoch_order(
                cfg.seed, "shuffle/rlvr" + std::to_string(phase) + "/e" + std::to_string(epoch),
                static_cast<int>(quads.size()));
            for (int qi : order) {
                const Quadruplet& quad = quads[qi];
                QuerySpec query;
                query.mode = Mode::EVAL;
                if (quad.has_a) query.instruction = ds.instruction(quad.instruction_id);
                query.p0 = quad.p0;
                query.first = quad.first;
                query.second = quad.second;
                RngStream rollout(cfg.seed, "rollout/rlvr" + std::to_string(phase) + "/e" +
                                                std::to_string(epoch) + "/s" +
                                                std::to_string(step));
                UpdateReport report;
                const GroupOutcome out = group_update(
                    cfg, w, params, ref, opt, optim, query,
                    [&](const Trajectory& t) { return rlvr_reward(t, quad.label); }, rollout,
                    report, exec);
                ++step;
                metrics.add_update_row(step, "rlvr", phase, epoch, out.mean_reward,
                                       out.format_rate, out.task_rate, report);
            }
            eval_row(phase, epoch);
        }
    }
    return params;
}

PolicyParams snapshot_evaluator(const PolicyParams& params) { return params; }

PolicyParams train_rlmt(const RunConfig& cfg, const WorldSpec& w, const Dataset& ds,
                        PolicyParams params, const PolicyParams& snapshot, MetricsWriter& metrics,
                        int& step, Exec exec) {
    const Caps caps{cfg.think_cap, cfg.answer_cap, cfg.grammar_mask};
    const PolicyParams ref = params;  // stage anchor, re-anchored at stage-2 entry
    const EvaluatorJudge judge(snapshot, caps);
    OptState opt;
    opt.reset(params.count());
    const OptimSettings optim{cfg.optimizer, cfg.lr_rlmt, cfg.weight_decay};

    const auto eval_row = [&](int epoch) {
        const EvalTable t = evaluate_winrate(w, ds, params, nullptr, Opponent::naive, caps, exec);
        const Diagnostics diag = alignment_diagnostics(w, ds, params, caps, cfg.seed, 16, exec);
        metrics.add_eval_row(step, "rlmt", 0, epoch, std::nullopt, t.value(EvalTable::total),
                             diag.infeasible_mass, diag.mean_answer_len);
    };

    eval_row(0);
    for (int epoch = 1; epoch <= cfg.epochs_rlmt; ++epoch) {
        const std::vector<int> order = epoch_order(cfg.seed, "shuffle/rlmt/e" +
                                                                 std::to_string(epoch),
                                                   static_cast<int>(ds.train.size()));
        for (int si : order) {
            const ProxySample& sample = ds.train[si];
            const Instruction& a = ds.instruction(sample.instruction_id);
            QuerySpec query;
            query.mode = Mode::REPROMPT;
            query.instruction = a;
            query.p0 = sample.p0;
            RngStream rollout(cfg.seed,
                              "rollout/rlmt/e" + std::to_string(epoch) + "/s" +
                                  std::to_string(step));
            UpdateReport report;
            const GroupOutcome out = group_update(
                cfg, w, params, ref, opt, optim, query,
                [&](const Trajectory& t) { return rlmt_reward(w, t, judge, a, sample.p0).reward; },
                rollout, report, exec);
            ++step;
            metrics.add_update_row(step, "rlmt", 0, epoch, out.mean_reward, out.format_rate,
                                   out.task_rate, report);
        }
        eval_row(epoch);
    }
    return params;
}

namespace {

json params_json(const PolicyParams& p) {
    return json{{"vocab_size", p.vocab_size}, {"hidden", p.hidden}, {"flat", p.flat}};
}

PolicyParams params_from_json(const json& j) {
    PolicyParams p;
    p.vocab_size = j.at("vocab_size").get<int>();
    p.hidden = j.at("hidden").get<int>();
    p.flat = j.at("flat").get<std::vector<double>>();
    if (static_cast<int>(p.flat.size()) != p.count())
        throw DataError("checkpoint: parameter vector size mismatch");
    return p;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    json j;
    j["config_hash"] = ck.config_hash;
    j["world_hash"] = ck.world_hash;
    j["stage"] = ck.stage;
    j["step"] = ck.step;
    j["params"] = params_json(ck.params);
    j["opt"] = {{"step", ck.opt.step}, {"m", ck.opt.m}, {"v", ck.opt.v}};
    if (ck.snapshot) {
        j["snapshot"] = params_json(*ck.snapshot);
        j["snapshot_hash"] = params_hash(*ck.snapshot);
    }
    j["rng_scheme"] = ck.rng_scheme;
    j["artifact_version"] = kArtifactVersion;
    std::ofstream out(path);
    if (!out) throw DataError("checkpoint: cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path, const std::string& expect_config_hash) {
    std::ifstream in(path);
    if (!in) throw DataError("checkpoint: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    json j;
    try {
        j = json::parse(ss.str());
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: invalid JSON: ") + e.what());
    }
    Checkpoint ck;
    try {
        ck.config_hash = j.at("config_hash").get<std::string>();
        if (!expect_config_hash.empty() && ck.config_hash != expect_config_hash)
            throw DataError("checkpoint: config hash mismatch, refusing to load");
        ck.world_hash = j.at("world_hash").get<std::string>();
        ck.stage = j.at("stage").get<std::string>();
        ck.step = j.at("step").get<int>();
        ck.params = params_from_json(j.at("params"));
        ck.opt.step = j.at("opt").at("step").get<long>();
        ck.opt.m = j.at("opt").at("m").get<std::vector<double>>();
        ck.opt.v = j.at("opt").at("v").get<std::vector<double>>();
        if (j.contains("snapshot")) {
            ck.snapshot = params_from_json(j.at("snapshot"));
            ck.snapshot_hash = j.at("snapshot_hash").get<std::string>();
            if (params_hash(*ck.snapshot) != ck.snapshot_hash)
                throw DataError("checkpoint: snapshot hash mismatch");
        }
        ck.rng_scheme = j.value("rng_scheme", "stateless-labeled");
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: malformed document: ") + e.what());
    }
    return ck;
}

}  // namespace rrl
