#include "rrl/vocab.hpp"

namespace rrl {

Vocab::Vocab(int n_object, int n_concrete, int n_abstract)
    : n_object_(n_object), n_concrete_(n_concrete), n_abstract_(n_abstract) {
    if (n_object <= 0 || n_concrete <= 0 || n_abstract <= 0)
        throw ConfigError("vocab: role counts must be positive");
}

Role Vocab::role(int id) const {
    if (id < 0 || id >= size()) throw ContractViolation("vocab: token id out of range");
    if (id < 6) return Role::structural;
    if (id < 8) return Role::verdict;
    if (id < object_end()) return Role::object;
    if (id < concrete_end()) return Role::concrete_descriptor;
    return Role::abstract_descriptor;
}

std::vector<Token> Vocab::tokens() const {
    std::vector<Token> out;
    out.reserve(size());
    for (int id = 0; id < size(); ++id) out.push_back(Token{id, role(id)});
    return out;
}

std::string Vocab::token_name(int id) const {
    switch (id) {
        case BOS: return "<bos>";
        case EOS: return "<eos>";
        case THINK_OPEN: return "<think>";
        case THINK_CLOSE: return "</think>";
        case ANS_OPEN: return "<answer>";
        case ANS_CLOSE: return "</answer>";
        case YES: return "yes";
        case NO: return "no";
        default: break;
    }
    switch (role(id)) {
        case Role::object: return "obj" + std::to_string(id - object_begin());
        case Role::concrete_descriptor: return "con" + std::to_string(id - concrete_begin());
        case Role::abstract_descriptor: return "abs" + std::to_string(id - abstract_begin());
        default: return "tok" + std::to_string(id);
    }
}

Vocab build_vocab(const RunConfig& cfg) {
    return Vocab(cfg.n_object_tokens, cfg.n_concrete_tokens, cfg.n_abstract_tokens);
}

void check_prompt(const Vocab& v, const TokenSeq& prompt, const char* where) {
    for (int t : prompt)
        if (!v.is_content(t))
            throw ContractViolation(std::string(where) +
                                    ": prompt contains a structural or verdict token");
}

}  // namespace rrl
