#pragma once

#include <string>
#include <vector>

#include "rrl/config.hpp"

namespace rrl {

enum class Role { structural, verdict, object, concrete_descriptor, abstract_descriptor };

struct Token {
    int id;
    Role role;
};

// Token id sequence. Prompts must contain only content tokens; helpers below
// enforce that at the boundaries where it matters.
using TokenSeq = std::vector<int>;

// Dense id layout: the six structural tokens, the two verdicts, then the
// content roles in blocks. Z_gen membership (what the generator can render)
// is a function of role alone: objects and concrete descriptors are in,
// everything else is out.
class Vocab {
  public:
    static constexpr int BOS = 0;
    static constexpr int EOS = 1;
    static constexpr int THINK_OPEN = 2;
    static constexpr int THINK_CLOSE = 3;
    static constexpr int ANS_OPEN = 4;
    static constexpr int ANS_CLOSE = 5;
    static constexpr int YES = 6;
    static constexpr int NO = 7;

    Vocab() = default;
    Vocab(int n_object, int n_concrete, int n_abstract);

    int size() const { return 8 + n_object_ + n_concrete_ + n_abstract_; }
    int n_object() const { return n_object_; }
    int n_concrete() const { return n_concrete_; }
    int n_abstract() const { return n_abstract_; }

    int object_begin() const { return 8; }
    int object_end() const { return 8 + n_object_; }
    int concrete_begin() const { return object_end(); }
    int concrete_end() const { return concrete_begin() + n_concrete_; }
    int abstract_begin() const { return concrete_end(); }
    int abstract_end() const { return abstract_begin() + n_abstract_; }

    Role role(int id) const;
    bool is_structural(int id) const { return id >= 0 && id < 6; }
    bool is_verdict(int id) const { return id == YES || id == NO; }
    bool is_content(int id) const { return id >= 8 && id < size(); }
    // Z_gen membership
    bool is_feasible(int id) const { return id >= object_begin() && id < concrete_end(); }

    std::vector<Token> tokens() const;
    std::string token_name(int id) const;

    bool operator==(const Vocab& other) const = default;

  private:
    int n_object_ = 0;
    int n_concrete_ = 0;
    int n_abstract_ = 0;
};

Vocab build_vocab(const RunConfig& cfg);

// Prompt contract: content tokens only.
void check_prompt(const Vocab& v, const TokenSeq& prompt, const char* where);

}  // namespace rrl
