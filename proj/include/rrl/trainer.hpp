#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rrl/dataset.hpp"
#include "rrl/grpo.hpp"
#include "rrl/rewards.hpp"

namespace rrl {

// Accuracy / win-rate table in the seven-cell layout used by all evaluation
// harnesses: Total plus per-split overall/simple/hard. Cells keep raw sums
// and counts so Total is the count-weighted mean of the splits by
// construction.
struct EvalTable {
    enum Cell { total = 0, id_overall, id_simple, id_hard, ood_overall, ood_simple, ood_hard };
    static constexpr std::array<const char*, 7> kCellNames = {
        "total", "id_overall", "id_simple", "id_hard", "ood_overall", "ood_simple", "ood_hard"};

    std::array<double, 7> score_sum{};
    std::array<int, 7> count{};

    void add(bool is_id, bool is_simple, double score);
    bool has(int cell) const { return count[cell] > 0; }
    double value(int cell) const;
    std::string to_json(const std::string& metric_name) const;
};

// shortest round-trip decimal form, used for every float that reaches a file
std::string fmt_double(double x);

// Metrics stream with the fixed CSV header. Update rows carry the group
// statistics; evaluation rows carry whichever table cells were measured at
// that step. Absent cells are empty fields.
class MetricsWriter {
  public:
    static const char* header();

    void add_update_row(int step, const std::string& stage, int phase, int epoch,
                        double mean_reward, double format_rate, double task_rate,
                        const UpdateReport& report);
    void add_eval_row(int step, const std::string& stage, int phase, int epoch,
                      const std::optional<EvalTable>& judge, const std::optional<double>& win_total,
                      const std::optional<double>& infeasible_mass,
                      const std::optional<double>& answer_len);

    std::string to_csv() const;
    void save(const std::string& path) const;
    const std::vector<std::string>& rows() const { return rows_; }

  private:
    std::vector<std::string> rows_;
};

struct Diagnostics {
    double infeasible_mass = 0.0;           // abstract-token probability at answer steps
    double infeasible_emission_rate = 0.0;  // sampled reprompts containing any infeasible token
    double mean_answer_len = 0.0;
    double mean_bt_pref_vs_naive = 0.0;  // Bradley-Terry read-out of oracle rewards
    std::string to_json() const;
};

using VerdictFn = std::function<Verdict(const Quadruplet&)>;

// Judge accuracy over the oracle-labeled test quadruplets.
EvalTable evaluate_judge(const WorldSpec& w, const Dataset& ds, const VerdictFn& verdict,
                         Exec exec = Exec::parallel);
EvalTable evaluate_judge(const WorldSpec& w, const Dataset& ds, const PolicyParams& params,
                         const Caps& caps, Exec exec = Exec::parallel);

enum class Opponent { naive, base };

// Blind pairwise scoring against an opponent prompt source: 1 / 0.5 / 0 per
// case by strict oracle-reward comparison under (a, p0).
EvalTable evaluate_winrate(const WorldSpec& w, const Dataset& ds, const PolicyParams& policy,
                           const PolicyParams* base_params, Opponent opponent, const Caps& caps,
                           Exec exec = Exec::parallel);

Diagnostics alignment_diagnostics(const WorldSpec& w, const Dataset& ds,
                                  const PolicyParams& params, const Caps& caps,
                                  std::uint64_t seed, int samples_per_context = 16,
                                  Exec exec = Exec::parallel);

// Stage anchoring: the KL reference is re-anchored at each stage entry, and
// optimizer moments reset with it, so a run resumed from the stage-boundary
// checkpoint is bit-identical to a straight-through run.
PolicyParams train_rlvr(const RunConfig& cfg, const WorldSpec& w, const Dataset& ds,
                        PolicyParams params, bool skip_phase1, MetricsWriter& metrics, int& step,
                        Exec exec = Exec::parallel);

PolicyParams snapshot_evaluator(const PolicyParams& params);

PolicyParams train_rlmt(const RunConfig& cfg, const WorldSpec& w, const Dataset& ds,
                        PolicyParams params, const PolicyParams& snapshot, MetricsWriter& metrics,
                        int& step, Exec exec = Exec::parallel);

struct Checkpoint {
    std::string config_hash;
    std::string world_hash;
    std::string stage;  // "init" | "rlvr" | "rlmt"
    int step = 0;
    PolicyParams params;
    OptState opt;                          // moments at save time (stages reset on entry)
    std::optional<PolicyParams> snapshot;  // frozen evaluator, present after stage 1
    std::string snapshot_hash;
    // randomness is stateless (seed + labels), recorded for provenance only
    std::string rng_scheme = "stateless-labeled";
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path, const std::string& expect_config_hash);

}  // namespace rrl
