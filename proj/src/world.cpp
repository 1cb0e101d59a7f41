#include "rrl/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace rrl {

using nlohmann::json;

bool Image::blank() const {
    for (double x : v)
        if (x != 0.0) return false;
    return true;
}

const char* category_name(Category c) {
    switch (c) {
        case Category::material: return "material";
        case Category::perspective: return "perspective";
        case Category::semantic_edit: return "semantic-edit";
        case Category::attribute: return "attribute";
        case Category::constraint: return "constraint";
        case Category::conceptual: return "conceptual";
    }
    return "?";
}

Category category_from_name(const std::string& s) {
    for (Category c : {Category::material, Category::perspective, Category::semantic_edit,
                       Category::attribute, Category::constraint, Category::conceptual})
        if (s == category_name(c)) return c;
    throw DataError("unknown category '" + s + "'");
}

bool category_is_simple(Category c) {
    return c == Category::material || c == Category::perspective || c == Category::semantic_edit;
}

const std::vector<double>& WorldSpec::feature(int token) const {
    if (token < 0 || token >= vocab.size() || features[token].empty())
        throw ContractViolation("world: no feature vector for token " + std::to_string(token));
    return features[token];
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

std::vector<double> normalized(std::vector<double> v) {
    const double n = norm(v);
    if (n < 1e-12) {
        std::fill(v.begin(), v.end(), 0.0);
        return v;
    }
    for (double& x : v) x /= n;
    return v;
}

WorldSpec build_world(const RunConfig& cfg) {
    cfg.validate();
    WorldSpec w;
    w.seed = cfg.seed;
    w.d = cfg.feature_dim;
    w.theta_a = cfg.theta_compliance;
    w.theta_c = cfg.theta_consistency;
    w.theta_q = cfg.theta_quality;
    w.bt_scale = cfg.bt_scale;
    w.vocab = build_vocab(cfg);
    w.features.assign(w.vocab.size(), {});
    RngStream stream = seeded_stream(cfg.seed, "world");
    for (int id = 0; id < w.vocab.size(); ++id) {
        if (!w.vocab.is_content(id)) continue;
        std::vector<double> f(w.d);
        for (double& x : f) x = stream.normal();
        w.features[id] = normalized(std::move(f));
    }
    return w;
}

Image generate(const WorldSpec& w, const TokenSeq& prompt) {
    check_prompt(w.vocab, prompt, "generate");
    // fixed summation order by token id keeps permutations bit-exact
    TokenSeq sorted = prompt;
    std::sort(sorted.begin(), sorted.end());
    Image img;
    img.v.assign(w.d, 0.0);
    int feasible = 0;
    for (int t : sorted) {
        if (!w.vocab.is_feasible(t)) continue;
        ++feasible;
        const auto& f = w.feature(t);
        for (int i = 0; i < w.d; ++i) img.v[i] += f[i];
    }
    img.v = normalized(std::move(img.v));
    img.quality =
        prompt.empty() ? 0.0 : static_cast<double>(feasible) / static_cast<double>(prompt.size());
    return img;
}

OracleBits oracle_reward(const WorldSpec& w, const Image& img, const Instruction& a,
                         const TokenSeq& p0) {
    return oracle_reward_conditioned(w, img, &a, &p0);
}

OracleBits oracle_reward_conditioned(const WorldSpec& w, const Image& img, const Instruction* a,
                                     const TokenSeq* p0) {
    OracleBits bits;
    if (a != nullptr) bits.compliance = dot(img.v, a->target) >= w.theta_a ? 1 : 0;
    if (p0 != nullptr) {
        const Image ref = generate(w, *p0);
        bits.consistency = dot(img.v, ref.v) >= w.theta_c ? 1 : 0;
    }
    bits.quality = img.quality >= w.theta_q ? 1 : 0;
    return bits;
}

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double bt_preference(double r1, double r2, double kappa) {
    if (!(kappa > 0.0)) throw ContractViolation("bt_preference: kappa must be positive");
    return logistic(kappa * (r1 - r2));
}

TokenSeq naive_concat(const Instruction& a, const TokenSeq& p0) {
    TokenSeq out = p0;
    out.insert(out.end(), a.alias.begin(), a.alias.end());
    return out;
}

std::string world_to_json(const WorldSpec& w) {
    json j;
    j["seed"] = w.seed;
    j["d"] = w.d;
    j["theta_a"] = w.theta_a;
    j["theta_c"] = w.theta_c;
    j["theta_q"] = w.theta_q;
    j["bt_scale"] = w.bt_scale;
    j["n_object"] = w.vocab.n_object();
    j["n_concrete"] = w.vocab.n_concrete();
    j["n_abstract"] = w.vocab.n_abstract();
    json roles = json::array();
    json feats = json::object();
    for (int id = 0; id < w.vocab.size(); ++id) {
        switch (w.vocab.role(id)) {
            case Role::structural: roles.push_back("structural"); break;
            case Role::verdict: roles.push_back("verdict"); break;
            case Role::object: roles.push_back("object"); break;
            case Role::concrete_descriptor: roles.push_back("concrete-descriptor"); break;
            case Role::abstract_descriptor: roles.push_back("abstract-descriptor"); break;
        }
        if (w.vocab.is_content(id)) feats[std::to_string(id)] = w.features[id];
    }
    j["roles"] = roles;
    j["features"] = feats;
    return j.dump(2) + "\n";
}

WorldSpec world_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("world: invalid JSON: ") + e.what());
    }
    WorldSpec w;
    try {
        w.seed = j.at("seed").get<std::uint64_t>();
        w.d = j.at("d").get<int>();
        w.theta_a = j.at("theta_a").get<double>();
        w.theta_c = j.at("theta_c").get<double>();
        w.theta_q = j.at("theta_q").get<double>();
        w.bt_scale = j.at("bt_scale").get<double>();
        w.vocab = Vocab(j.at("n_object").get<int>(), j.at("n_concrete").get<int>(),
                        j.at("n_abstract").get<int>());
        w.features.assign(w.vocab.size(), {});
        const auto& feats = j.at("features");
        for (int id = 0; id < w.vocab.size(); ++id) {
            if (!w.vocab.is_content(id)) continue;
            w.features[id] = feats.at(std::to_string(id)).get<std::vector<double>>();
            if (static_cast<int>(w.features[id].size()) != w.d)
                throw DataError("world: feature dimension mismatch");
            if (std::abs(norm(w.features[id]) - 1.0) > 1e-9)
                throw DataError("world: feature vector for token " + std::to_string(id) +
                                " is not unit norm");
        }
        const auto& roles = j.at("roles");
        if (static_cast<int>(roles.size()) != w.vocab.size())
            throw DataError("world: role table size mismatch");
    } catch (const json::exception& e) {
        throw DataError(std::string("world: malformed document: ") + e.what());
    }
    return w;
}

void save_world(const WorldSpec& w, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("world: cannot write '" + path + "'");
    out << world_to_json(w);
}

WorldSpec load_world(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("world: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return world_from_json(ss.str());
}

std::string world_hash(const WorldSpec& w) { return sha256_hex(world_to_json(w)); }

}  // namespace rrl
