#include "rrl/config.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace rrl {

using nlohmann::json;

void RunConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
    if (feature_dim < 8) fail("feature_dim must be >= 8");
    if (hidden_dim < 8) fail("hidden_dim must be >= 8");
    if (n_object_tokens <= 0 || n_concrete_tokens <= 0 || n_abstract_tokens <= 0)
        fail("vocabulary role counts must be positive");
    if (group_size < 2) fail("group_size must be >= 2");
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) fail("clip_epsilon must lie in (0, 1)");
    if (kl_coeff < 0.0) fail("kl_coeff must be >= 0");
    if (lr_rlvr_phase1 <= 0.0 || lr_rlvr_phase2 <= 0.0 || lr_rlmt <= 0.0)
        fail("learning rates must be positive");
    if (epochs_rlvr_phase1 < 0 || epochs_rlvr_phase2 < 0 || epochs_rlmt < 0)
        fail("epoch counts must be non-negative");
    if (think_cap < 1 || answer_cap < 1) fail("trajectory caps must be >= 1");
    if (weight_decay < 0.0) fail("weight_decay must be >= 0");
    if (!(bt_scale > 0.0)) fail("bt_scale must be positive");
    if (batch_groups < 1) fail("batch_groups must be >= 1");
    if (prompts_per_test_instruction < 1) fail("prompts_per_test_instruction must be >= 1");
    for (double t : {theta_compliance, theta_consistency, theta_quality})
        if (!std::isfinite(t)) fail("oracle thresholds must be finite");
}

const char* optimizer_name(Optimizer o) {
    return o == Optimizer::plain_ascent ? "plain_ascent" : "adamw";
}

Optimizer optimizer_from_name(const std::string& name) {
    if (name == "plain_ascent") return Optimizer::plain_ascent;
    if (name == "adamw") return Optimizer::adamw;
    throw ConfigError("config: unknown optimizer '" + name + "'");
}

namespace {

json config_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["feature_dim"] = c.feature_dim;
    j["hidden_dim"] = c.hidden_dim;
    j["n_object_tokens"] = c.n_object_tokens;
    j["n_concrete_tokens"] = c.n_concrete_tokens;
    j["n_abstract_tokens"] = c.n_abstract_tokens;
    j["group_size"] = c.group_size;
    j["clip_epsilon"] = c.clip_epsilon;
    j["kl_coeff"] = c.kl_coeff;
    j["lr_rlvr_phase1"] = c.lr_rlvr_phase1;
    j["lr_rlvr_phase2"] = c.lr_rlvr_phase2;
    j["lr_rlmt"] = c.lr_rlmt;
    j["epochs_rlvr_phase1"] = c.epochs_rlvr_phase1;
    j["epochs_rlvr_phase2"] = c.epochs_rlvr_phase2;
    j["epochs_rlmt"] = c.epochs_rlmt;
    j["think_cap"] = c.think_cap;
    j["answer_cap"] = c.answer_cap;
    j["grammar_mask"] = c.grammar_mask;
    j["optimizer"] = optimizer_name(c.optimizer);
    j["weight_decay"] = c.weight_decay;
    j["theta_compliance"] = c.theta_compliance;
    j["theta_consistency"] = c.theta_consistency;
    j["theta_quality"] = c.theta_quality;
    j["bt_scale"] = c.bt_scale;
    j["batch_groups"] = c.batch_groups;
    j["prompts_per_test_instruction"] = c.prompts_per_test_instruction;
    return j;
}

}  // namespace

std::string config_to_json(const RunConfig& cfg) { return config_json(cfg).dump(2) + "\n"; }

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be an object");

    const json reference = config_json(RunConfig{});
    std::set<std::string> known;
    for (auto it = reference.begin(); it != reference.end(); ++it) known.insert(it.key());

    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw ConfigError("config: unknown key '" + it.key() + "'");
    for (const auto& k : known)
        if (!j.contains(k)) throw ConfigError("config: missing key '" + k + "'");

    RunConfig c;
    try {
        c.seed = j.at("seed").get<std::uint64_t>();
        c.feature_dim = j.at("feature_dim").get<int>();
        c.hidden_dim = j.at("hidden_dim").get<int>();
        c.n_object_tokens = j.at("n_object_tokens").get<int>();
        c.n_concrete_tokens = j.at("n_concrete_tokens").get<int>();
        c.n_abstract_tokens = j.at("n_abstract_tokens").get<int>();
        c.group_size = j.at("group_size").get<int>();
        c.clip_epsilon = j.at("clip_epsilon").get<double>();
        c.kl_coeff = j.at("kl_coeff").get<double>();
        c.lr_rlvr_phase1 = j.at("lr_rlvr_phase1").get<double>();
        c.lr_rlvr_phase2 = j.at("lr_rlvr_phase2").get<double>();
        c.lr_rlmt = j.at("lr_rlmt").get<double>();
        c.epochs_rlvr_phase1 = j.at("epochs_rlvr_phase1").get<int>();
        c.epochs_rlvr_phase2 = j.at("epochs_rlvr_phase2").get<int>();
        c.epochs_rlmt = j.at("epochs_rlmt").get<int>();
        c.think_cap = j.at("think_cap").get<int>();
        c.answer_cap = j.at("answer_cap").get<int>();
        c.grammar_mask = j.at("grammar_mask").get<bool>();
        c.optimizer = optimizer_from_name(j.at("optimizer").get<std::string>());
        c.weight_decay = j.at("weight_decay").get<double>();
        c.theta_compliance = j.at("theta_compliance").get<double>();
        c.theta_consistency = j.at("theta_consistency").get<double>();
        c.theta_quality = j.at("theta_quality").get<double>();
        c.bt_scale = j.at("bt_scale").get<double>();
        c.batch_groups = j.at("batch_groups").get<int>();
        c.prompts_per_test_instruction = j.at("prompts_per_test_instruction").get<int>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: bad value type: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string config_hash(const RunConfig& cfg) {
    // canonical form: sorted keys (nlohmann object order), no whitespace
    return sha256_hex(config_json(cfg).dump());
}

RunConfig desk_profile() {
    RunConfig c;
    c.seed = 0;
    c.feature_dim = 16;
    c.hidden_dim = 16;
    c.n_object_tokens = 12;
    c.n_concrete_tokens = 28;
    c.n_abstract_tokens = 8;
    c.group_size = 6;
    c.clip_epsilon = 0.2;
    c.kl_coeff = 0.04;
    c.lr_rlvr_phase1 = 0.02;
    c.lr_rlvr_phase2 = 0.02;
    c.lr_rlmt = 0.02;
    c.epochs_rlvr_phase1 = 10;
    c.epochs_rlvr_phase2 = 10;
    c.epochs_rlmt = 10;
    c.think_cap = 3;
    c.answer_cap = 5;
    c.grammar_mask = true;
    c.optimizer = Optimizer::adamw;
    c.weight_decay = 0.0;
    // theta_consistency sits near zero so an untrained policy starts as a
    // coin against the naive baseline instead of strictly dominated
    c.theta_compliance = 0.6;
    c.theta_consistency = 0.0;
    c.theta_quality = 0.7;
    c.bt_scale = 1.0;
    c.batch_groups = 1;
    c.prompts_per_test_instruction = 3;
    c.validate();
    return c;
}

RunConfig paper_profile() {
    RunConfig c = desk_profile();
    // published full-scale schedule, kept verbatim for documentation
    c.lr_rlvr_phase1 = 1e-6;
    c.lr_rlvr_phase2 = 3e-6;
    c.lr_rlmt = 1e-6;
    c.kl_coeff = 0.04;
    c.group_size = 6;
    c.epochs_rlvr_phase1 = 10;
    c.epochs_rlvr_phase2 = 10;
    c.epochs_rlmt = 10;
    c.optimizer = Optimizer::adamw;
    c.validate();
    return c;
}

}  // namespace rrl
