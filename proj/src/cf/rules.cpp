#include "vision/cf/rules.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "vision/cpg/cpg.hpp"

namespace vision::cf {

using cpg::AstNode;
using cpg::AstPtr;
using cpg::NodeKind;

namespace {

// Nodes found by the (const) oracle helpers live in our own clone, so
// writing through them is safe.
AstNode* mut(const AstNode* n) { return const_cast<AstNode*>(n); }

AstPtr parse_statement(const std::string& text) {
    auto ast = cpg::parse_source("void cf_tmp() { " + text + " }");
    return std::move(ast.root->function_body()->children.at(0));
}

AstPtr parse_expression(const std::string& text) {
    auto stmt = parse_statement("cf_tmp(" + text + ");");
    return std::move(stmt->children.at(0));
}

std::set<std::string> used_names(const AstNode& fn) {
    std::set<std::string> out;
    std::function<void(const AstNode&)> go = [&](const AstNode& n) {
        if (!n.name.empty()) out.insert(n.name);
        if (n.kind == NodeKind::Identifier) out.insert(n.op);
        for (const auto& c : n.children) go(*c);
    };
    go(fn);
    return out;
}

std::string fresh_name(const AstNode& fn, const std::string& base) {
    const auto used = used_names(fn);
    if (!used.count(base)) return base;
    for (int i = 2;; ++i) {
        auto name = base + std::to_string(i);
        if (!used.count(name)) return name;
    }
}

std::string return_text(const AstNode& fn) { return fn.type == "void" ? "return;" : "return 0;"; }

// --- B -> V ---------------------------------------------------------------

bool taint_constant_matches(const AstNode& fn) { return !constant_sink_args(fn).empty(); }

std::string taint_constant_apply(const AstNode& orig, Rng& rng) {
    auto fn = orig.clone();
    auto sites = constant_sink_args(*fn);
    const auto& site = sites[rng.below(sites.size())];
    const std::string name = fresh_name(*fn, "user_input");
    mut(site.call)->children[site.arg] = parse_expression(name);
    auto param = std::make_unique<AstNode>(NodeKind::Param);
    param->type = "char *";
    param->name = name;
    fn->children.insert(fn->children.end() - 1, std::move(param));
    return cpg::print(*fn);
}

struct ValidationSite {
    std::size_t guard = 0;     // index into early_return_guards
    std::size_t disjunct = 0;  // index into its disjuncts
};

std::vector<ValidationSite> validation_sites(const AstNode& fn) {
    const auto guards = early_return_guards(fn);
    const auto uses = tainted_uses(fn);
    std::vector<ValidationSite> out;
    for (std::size_t g = 0; g < guards.size(); ++g)
        for (std::size_t d = 0; d < guards[g].disjuncts.size(); ++d) {
            const bool useful = std::any_of(uses.begin(), uses.end(), [&](const TaintedUse& u) {
                return u.top_index > guards[g].top_index && validates(*guards[g].disjuncts[d], u.kind, u.param);
            });
            if (useful) out.push_back({g, d});
        }
    return out;
}

void take_disjuncts(AstPtr e, std::vector<AstPtr>& out) {
    if (e->kind == NodeKind::BinOp && e->op == "||") {
        take_disjuncts(std::move(e->children[0]), out);
        take_disjuncts(std::move(e->children[1]), out);
    } else {
        out.push_back(std::move(e));
    }
}

bool drop_validation_matches(const AstNode& fn) { return !validation_sites(fn).empty(); }

std::string drop_validation_apply(const AstNode& orig, Rng& rng) {
    auto fn = orig.clone();
    const auto sites = validation_sites(*fn);
    const auto site = sites[rng.below(sites.size())];
    const auto guard = early_return_guards(*fn)[site.guard];
    auto* body = fn->function_body();
    AstNode* stmt = mut(guard.stmt);
    std::vector<AstPtr> parts;
    take_disjuncts(std::move(stmt->children[0]), parts);
    parts.erase(parts.begin() + static_cast<std::ptrdiff_t>(site.disjunct));
    if (parts.empty()) {
        body->children.erase(body->children.begin() + static_cast<std::ptrdiff_t>(guard.top_index));
    } else {
        AstPtr cond = std::move(parts[0]);
        for (std::size_t i = 1; i < parts.size(); ++i) {
            auto join = std::make_unique<AstNode>(NodeKind::BinOp);
            join->op = "||";
            join->children.push_back(std::move(cond));
            join->children.push_back(std::move(parts[i]));
            cond = std::move(join);
        }
        cond->parenthesized = false;
        stmt->children[0] = std::move(cond);
    }
    return cpg::print(*fn);
}

// --- V -> B ---------------------------------------------------------------

std::vector<TaintedUse> unvalidated(const AstNode& fn) {
    auto uses = tainted_uses(fn);
    std::erase_if(uses, [](const TaintedUse& u) { return u.validated; });
    return uses;
}

bool insert_guard_matches(const AstNode& fn) {
    const auto uses = unvalidated(fn);
    return std::any_of(uses.begin(), uses.end(), [](const TaintedUse& u) { return u.kind == UseKind::Index; });
}

std::string insert_guard_apply(const AstNode& orig, Rng&) {
    auto fn = orig.clone();
    std::vector<std::pair<std::string, UseKind>> needed;
    for (const auto& u : unvalidated(*fn)) {
        std::pair<std::string, UseKind> key{u.param, u.kind};
        if (std::find(needed.begin(), needed.end(), key) == needed.end()) needed.push_back(key);
    }
    std::vector<AstPtr> guards;
    for (const auto& [param, kind] : needed) {
        const std::string cond = kind == UseKind::Index ? param + " < 0" : "strlen(" + param + ") >= 64";
        guards.push_back(parse_statement("if (" + cond + ") " + return_text(*fn)));
    }
    auto& stmts = fn->function_body()->children;
    stmts.insert(stmts.begin(), std::make_move_iterator(guards.begin()), std::make_move_iterator(guards.end()));
    return cpg::print(*fn);
}

bool constant_input_matches(const AstNode& fn) {
    const auto uses = unvalidated(fn);
    return !uses.empty() &&
           std::all_of(uses.begin(), uses.end(), [](const TaintedUse& u) { return u.kind == UseKind::Sink; });
}

std::string constant_input_apply(const AstNode& orig, Rng&) {
    auto fn = orig.clone();
    for (const auto& u : unvalidated(*fn)) {
        AstNode* call = mut(u.site);
        call->children[u.arg] = parse_expression(find_sink(call->name)->constant);
    }
    return cpg::print(*fn);
}

}  // namespace

const std::vector<RewriteRule>& rewrite_rules() {
    static const std::vector<RewriteRule> rules{
        {"taint-constant-arg", Direction::BenignToVulnerable, taint_constant_matches, taint_constant_apply},
        {"drop-validation", Direction::BenignToVulnerable, drop_validation_matches, drop_validation_apply},
        {"insert-guard", Direction::VulnerableToBenign, insert_guard_matches, insert_guard_apply},
        {"constant-input", Direction::VulnerableToBenign, constant_input_matches, constant_input_apply},
    };
    return rules;
}

const RewriteRule* find_rule(std::string_view name) {
    for (const auto& r : rewrite_rules())
        if (r.name == name) return &r;
    return nullptr;
}

CounterfactualCandidate generate_rule_based(const SourceFunction& fn, std::uint64_t seed) {
    auto ast = cpg::parse_source(fn.source);
    const Direction dir = direction_from(fn.label);
    for (const auto& rule : rewrite_rules()) {
        if (rule.direction != dir || !rule.matches(*ast.root)) continue;
        Rng rng(mix_seed(seed, fnv1a64(rule.name)));
        CounterfactualCandidate c;
        c.paired_id = fn.id;
        c.source = rule.apply(*ast.root, rng);
        c.target_label = flip(fn.label);
        c.generator = GeneratorKind::Rule;
        c.generator_tag = rule.name;
        c.edit_distance = token_edit_distance(fn.source, c.source);
        return c;
    }
    throw NoApplicableRule(fn.id);
}

int token_edit_distance(std::string_view a, std::string_view b) {
    const auto ta = cpg::tokenize(a);
    const auto tb = cpg::tokenize(b);
    std::vector<int> prev(tb.size() + 1), cur(tb.size() + 1);
    for (std::size_t j = 0; j <= tb.size(); ++j) prev[j] = static_cast<int>(j);
    for (std::size_t i = 1; i <= ta.size(); ++i) {
        cur[0] = static_cast<int>(i);
        for (std::size_t j = 1; j <= tb.size(); ++j) {
            const int sub = prev[j - 1] + (ta[i - 1].lexeme == tb[j - 1].lexeme ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[tb.size()];
}

std::string_view to_string(RejectReason r) {
    switch (r) {
        case RejectReason::None: return "None";
        case RejectReason::ParseError: return "ParseError";
        case RejectReason::NoEdit: return "NoEdit";
        case RejectReason::TooManyEdits: return "TooManyEdits";
        case RejectReason::LabelNotFlipped: return "LabelNotFlipped";
    }
    return "None";
}

namespace {

bool any_rule_matches(Direction dir, const AstNode& fn) {
    for (const auto& r : rewrite_rules())
        if (r.direction == dir && r.matches(fn)) return true;
    return false;
}

Validation reject(RejectReason r, std::string detail) { return {false, r, std::move(detail)}; }

}  // namespace

Validation validate_counterfactual(const SourceFunction& orig, const CounterfactualCandidate& cand,
                                   const ValidationPolicy& policy) {
    cpg::Ast cand_ast;
    try {
        cand_ast = cpg::parse_source(cand.source);
        SourceFunction f{cand.paired_id, cand.source, cand.target_label, Provenance::Counterfactual};
        auto problem = cpg::check_invariants(cpg::assemble_cpg(cand_ast, f));
        if (!problem.empty()) return reject(RejectReason::ParseError, problem);
    } catch (const Error& e) {
        return reject(RejectReason::ParseError, e.what());
    }
    int distance = 0;
    try {
        distance = token_edit_distance(orig.source, cand.source);
    } catch (const Error& e) {
        return reject(RejectReason::ParseError, std::string("original: ") + e.what());
    }
    if (distance == 0) return reject(RejectReason::NoEdit, "candidate is token-identical to the original");
    if (distance > policy.max_edit_tokens)
        return reject(RejectReason::TooManyEdits,
                      std::to_string(distance) + " token edits > " + std::to_string(policy.max_edit_tokens));
    if (cand.target_label == orig.label) return reject(RejectReason::LabelNotFlipped, "target label equals original");

    cpg::Ast orig_ast;
    try {
        orig_ast = cpg::parse_source(orig.source);
    } catch (const Error& e) {
        return reject(RejectReason::ParseError, std::string("original: ") + e.what());
    }
    if (policy.oracle == OracleMode::PlantedRule) {
        if (oracle_label(*orig_ast.root) != orig.label)
            return reject(RejectReason::LabelNotFlipped, "oracle disagrees with the original label");
        if (oracle_label(*cand_ast.root) != cand.target_label)
            return reject(RejectReason::LabelNotFlipped, "oracle label of candidate is " +
                                                             std::string(to_string(oracle_label(*cand_ast.root))));
    } else {
        const Direction dir = direction_from(orig.label);
        const Direction back = direction_from(cand.target_label);
        if (!any_rule_matches(dir, *orig_ast.root))
            return reject(RejectReason::LabelNotFlipped, "no rule of the applied direction matches the original");
        if (!any_rule_matches(back, *cand_ast.root))
            return reject(RejectReason::LabelNotFlipped, "no reverse-direction rule matches the candidate");
    }
    return {true, RejectReason::None, ""};
}

}  // namespace vision::cf
