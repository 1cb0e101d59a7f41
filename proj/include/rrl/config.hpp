#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rrl {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

enum class Optimizer { plain_ascent, adamw };

// One flat, fully explicit configuration document. Loading rejects unknown
// keys and missing keys alike; nothing is defaulted at runtime, so the
// canonical hash of a config names the experiment unambiguously.
struct RunConfig {
    std::uint64_t seed = 0;

    // dimensions
    int feature_dim = 16;  // d, world feature space
    int hidden_dim = 16;   // h, policy hidden width

    // vocabulary arities per role
    int n_object_tokens = 12;
    int n_concrete_tokens = 28;
    int n_abstract_tokens = 16;

    // group-relative optimization
    int group_size = 6;        // N
    double clip_epsilon = 0.2; // ratio clamp half-width
    double kl_coeff = 0.04;    // beta

    // per-stage/phase schedules
    double lr_rlvr_phase1 = 0.0;
    double lr_rlvr_phase2 = 0.0;
    double lr_rlmt = 0.0;
    int epochs_rlvr_phase1 = 10;
    int epochs_rlvr_phase2 = 10;
    int epochs_rlmt = 10;

    // trajectory caps
    int think_cap = 4;  // L_think_max
    int answer_cap = 6; // L_ans_max
    bool grammar_mask = true;

    Optimizer optimizer = Optimizer::adamw;
    double weight_decay = 0.0;

    // oracle thresholds and preference sharpness
    double theta_compliance = 0.6;  // theta_a
    double theta_consistency = 0.3; // theta_c
    double theta_quality = 0.7;     // theta_q
    double bt_scale = 1.0;          // kappa

    // batching / evaluation fan-out
    int batch_groups = 1;
    int prompts_per_test_instruction = 3;

    int vocab_size() const {
        return n_object_tokens + n_concrete_tokens + n_abstract_tokens + 6 + 2;
    }

    void validate() const;
};

// Strict JSON load: unknown or missing keys are hard errors.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& json_text);
std::string config_to_json(const RunConfig& cfg);

// SHA-256 of the canonical (sorted-key, no-whitespace) serialization.
std::string config_hash(const RunConfig& cfg);
std::string sha256_hex(const std::string& bytes);

// Shipped profiles. `desk` is sized so the full pipeline runs in seconds;
// `paper` records the published full-scale schedule verbatim (its learning
// rates target a 1.5B model and will not move this toy policy).
RunConfig desk_profile();
RunConfig paper_profile();

const char* optimizer_name(Optimizer o);
Optimizer optimizer_from_name(const std::string& name);

inline constexpr const char* kArtifactVersion = "0.1.0";

}  // namespace rrl
