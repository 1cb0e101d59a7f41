#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rrl/config.hpp"
#include "rrl/rng.hpp"
#include "rrl/vocab.hpp"

namespace rrl {

// A rendered output of the frozen generator: a direction in feature space
// plus a scalar quality in [0,1]. v is the zero vector exactly when the
// prompt carried no renderable content.
struct Image {
    std::vector<double> v;
    double quality = 0.0;
    bool blank() const;
};

enum class Category { material, perspective, semantic_edit, attribute, constraint, conceptual };
enum class Difficulty { simple, hard };
enum class Split { train, test_id, test_ood };

const char* category_name(Category c);
Category category_from_name(const std::string& s);
bool category_is_simple(Category c);

struct Instruction {
    int id = -1;
    Category category = Category::material;
    Difficulty difficulty = Difficulty::simple;
    std::vector<double> target;  // unit tau_a, the normalized witness feature sum
    TokenSeq witness;            // 1-3 concrete descriptor tokens realizing target
    TokenSeq alias;              // names the instruction: the witness itself when
                                 // simple, abstract tokens when hard
    Split split = Split::train;
};

// The frozen generation side: per-token unit features, feasibility induced by
// token roles, oracle thresholds, preference sharpness. Immutable once built.
struct WorldSpec {
    std::uint64_t seed = 0;
    int d = 0;
    double theta_a = 0.0;  // compliance threshold
    double theta_c = 0.0;  // consistency threshold
    double theta_q = 0.0;  // quality threshold
    double bt_scale = 1.0;
    Vocab vocab;
    // features[id] is a unit vector for content tokens, empty otherwise
    std::vector<std::vector<double>> features;

    const std::vector<double>& feature(int token) const;
};

WorldSpec build_world(const RunConfig& cfg);

// Deterministic generator G: sums the features of the feasible prompt tokens
// (in token-id order, so permutations are bit-exact no-ops), normalizes, and
// scores quality as the feasible fraction of content tokens.
Image generate(const WorldSpec& w, const TokenSeq& prompt);

struct OracleBits {
    int compliance = 0;
    int consistency = 0;
    int quality = 0;
    int sum() const { return compliance + consistency + quality; }
};

// Three-bit oracle over an image: instruction adherence, fidelity to the
// original prompt, and rendered quality.
OracleBits oracle_reward(const WorldSpec& w, const Image& img, const Instruction& a,
                         const TokenSeq& p0);

// Channel subset used by pairwise conditions: compliance only when `a` is
// present, consistency only when `p0` is present, quality always.
OracleBits oracle_reward_conditioned(const WorldSpec& w, const Image& img, const Instruction* a,
                                     const TokenSeq* p0);

double logistic(double x);

// Bradley-Terry preference probability sigma(kappa * (r1 - r2)).
double bt_preference(double r1, double r2, double kappa);

// Baseline prompt [p0; alias] with no deduplication or reordering.
TokenSeq naive_concat(const Instruction& a, const TokenSeq& p0);

double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm(const std::vector<double>& a);
std::vector<double> normalized(std::vector<double> v);

// JSON serialization; round-trips bit-exactly.
std::string world_to_json(const WorldSpec& w);
WorldSpec world_from_json(const std::string& text);
void save_world(const WorldSpec& w, const std::string& path);
WorldSpec load_world(const std::string& path);
std::string world_hash(const WorldSpec& w);

}  // namespace rrl
