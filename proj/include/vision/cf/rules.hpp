#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "vision/cf/oracle.hpp"
#include "vision/common.hpp"
#include "vision/rng.hpp"

namespace vision::cf {

class NoApplicableRule : public Error {
public:
    explicit NoApplicableRule(const std::string& id) : Error("no rewrite rule applies to '" + id + "'") {}
};

enum class Direction { BenignToVulnerable, VulnerableToBenign };

inline Direction direction_from(Label original) {
    return original == Label::Benign ? Direction::BenignToVulnerable : Direction::VulnerableToBenign;
}

/// CWE-20 rewrite. `apply` works on a private copy of the tree and returns
/// the rewritten source.
struct RewriteRule {
    std::string name;
    Direction direction;
    std::function<bool(const cpg::AstNode&)> matches;
    std::function<std::string(const cpg::AstNode&, Rng&)> apply;
};

/// Fixed application order: taint-constant-arg, drop-validation (B->V),
/// insert-guard, constant-input (V->B).
const std::vector<RewriteRule>& rewrite_rules();
const RewriteRule* find_rule(std::string_view name);

enum class GeneratorKind { Rule, Llm };

struct CounterfactualCandidate {
    std::string paired_id;
    std::string source;
    Label target_label = Label::Benign;
    GeneratorKind generator = GeneratorKind::Rule;
    std::string generator_tag;  // rule name or model tag
    int edit_distance = 0;
};

/// First matching rule for the function's direction; the seed picks among
/// match sites.
CounterfactualCandidate generate_rule_based(const SourceFunction& fn, std::uint64_t seed);

/// Levenshtein distance over token lexemes.
int token_edit_distance(std::string_view a, std::string_view b);

enum class OracleMode {
    PlantedRule,  // synthetic corpus: the generator's labeling rule
    RuleMatch,    // imported corpora: rule match predicates in both directions
};

struct ValidationPolicy {
    int max_edit_tokens = 25;
    OracleMode oracle = OracleMode::PlantedRule;
};

enum class RejectReason { None, ParseError, NoEdit, TooManyEdits, LabelNotFlipped };
std::string_view to_string(RejectReason r);

struct Validation {
    bool accepted = false;
    RejectReason reason = RejectReason::None;
    std::string detail;
};

Validation validate_counterfactual(const SourceFunction& orig, const CounterfactualCandidate& cand,
                                   const ValidationPolicy& policy = {});

}  // namespace vision::cf
