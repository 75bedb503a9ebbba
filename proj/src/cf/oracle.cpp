#include "vision/cf/oracle.hpp"

#include <algorithm>
#include <functional>
#include <set>

#include "vision/cpg/cpg.hpp"

namespace vision::cf {

using cpg::AstNode;
using cpg::NodeKind;

const std::vector<SinkSpec>& sinks() {
    static const std::vector<SinkSpec> table{
        {"strcpy", 1, "\"default\""},
        {"strcat", 1, "\"default\""},
        {"sprintf", 2, "\"default\""},
        {"net_cmd", 1, "NULL"},
    };
    return table;
}

const SinkSpec* find_sink(std::string_view name) {
    for (const auto& s : sinks())
        if (s.name == name) return &s;
    return nullptr;
}

namespace {

bool is_ident(const AstNode& e, std::string_view name) {
    return e.kind == NodeKind::Identifier && e.op == name;
}

bool is_zero(const AstNode& e) { return e.kind == NodeKind::Literal && e.literal == cpg::LiteralKind::Int && e.op == "0"; }

bool is_strlen_of(const AstNode& e, std::string_view param) {
    return e.kind == NodeKind::Call && e.name == "strlen" && e.children.size() == 1 && is_ident(*e.child(0), param);
}

void split_or(const AstNode* e, std::vector<const AstNode*>& out) {
    if (e->kind == NodeKind::BinOp && e->op == "||") {
        split_or(e->child(0), out);
        split_or(e->child(1), out);
    } else {
        out.push_back(e);
    }
}

bool returns_only(const AstNode& s) {
    if (s.kind == NodeKind::Return) return true;
    return s.kind == NodeKind::Block && s.children.size() == 1 && s.child(0)->kind == NodeKind::Return;
}

std::set<std::string> param_names(const AstNode& fn) {
    std::set<std::string> out;
    for (std::size_t i = 0; i + 1 < fn.children.size(); ++i) out.insert(fn.children[i]->name);
    return out;
}

bool is_constant(const AstNode& e) {
    return e.kind == NodeKind::Literal || is_ident(e, "NULL");
}

void walk(const AstNode& n, const std::function<void(const AstNode&)>& f) {
    f(n);
    for (const auto& c : n.children) walk(*c, f);
}

}  // namespace

bool is_lower_bound_check(const AstNode& cmp, std::string_view param) {
    if (cmp.kind != NodeKind::BinOp || cmp.children.size() != 2) return false;
    if (cmp.op == "<") return is_ident(*cmp.child(0), param) && is_zero(*cmp.child(1));
    if (cmp.op == ">") return is_zero(*cmp.child(0)) && is_ident(*cmp.child(1), param);
    return false;
}

bool is_length_check(const AstNode& cmp, std::string_view param) {
    if (cmp.kind != NodeKind::BinOp || cmp.children.size() != 2) return false;
    if (cmp.op == ">=" || cmp.op == ">") return is_strlen_of(*cmp.child(0), param);
    if (cmp.op == "<=" || cmp.op == "<") return is_strlen_of(*cmp.child(1), param);
    return false;
}

bool validates(const AstNode& cmp, UseKind kind, std::string_view param) {
    return kind == UseKind::Index ? is_lower_bound_check(cmp, param) : is_length_check(cmp, param);
}

std::vector<Guard> early_return_guards(const AstNode& function) {
    std::vector<Guard> out;
    const auto& body = *function.function_body();
    for (std::size_t i = 0; i < body.children.size(); ++i) {
        const auto& s = *body.children[i];
        if (s.kind != NodeKind::If || s.if_else() || !returns_only(*s.child(1))) continue;
        Guard g;
        g.stmt = &s;
        g.top_index = i;
        split_or(s.child(0), g.disjuncts);
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<TaintedUse> tainted_uses(const AstNode& function) {
    const auto params = param_names(function);
    const auto guards = early_return_guards(function);
    std::vector<TaintedUse> out;
    const auto& body = *function.function_body();
    for (std::size_t i = 0; i < body.children.size(); ++i) {
        const AstNode& stmt = *body.children[i];
        walk(stmt, [&](const AstNode& n) {
            if (n.kind == NodeKind::Index) {
                const AstNode& idx = *n.child(1);
                if (idx.kind == NodeKind::Identifier && params.count(idx.op))
                    out.push_back({UseKind::Index, idx.op, &stmt, &n, 0, i, false});
            } else if (n.kind == NodeKind::Call) {
                if (const auto* sink = find_sink(n.name))
                    for (std::size_t a = sink->first_data_arg; a < n.children.size(); ++a) {
                        const AstNode& arg = *n.child(a);
                        if (arg.kind == NodeKind::Identifier && params.count(arg.op))
                            out.push_back({UseKind::Sink, arg.op, &stmt, &n, a, i, false});
                    }
            }
        });
    }
    for (auto& use : out)
        for (const auto& g : guards) {
            if (g.top_index >= use.top_index) break;
            for (const auto* d : g.disjuncts)
                if (validates(*d, use.kind, use.param)) use.validated = true;
        }
    return out;
}

std::vector<ConstantSinkArg> constant_sink_args(const AstNode& function) {
    std::vector<ConstantSinkArg> out;
    const auto& body = *function.function_body();
    for (std::size_t i = 0; i < body.children.size(); ++i)
        walk(*body.children[i], [&](const AstNode& n) {
            if (n.kind != NodeKind::Call) return;
            if (const auto* sink = find_sink(n.name))
                for (std::size_t a = sink->first_data_arg; a < n.children.size(); ++a)
                    if (is_constant(*n.child(a))) out.push_back({&n, a, i});
        });
    return out;
}

std::vector<int> planted_node_ids(const AstNode& function) {
    const auto uses = tainted_uses(function);
    std::set<std::string> sensitive;
    for (const auto& u : uses) sensitive.insert(u.param);
    std::set<const AstNode*> roots;
    for (const auto& u : uses) roots.insert(u.stmt);
    const auto& body = *function.function_body();
    for (const auto& c : constant_sink_args(function)) roots.insert(body.child(c.top_index));
    for (const auto& g : early_return_guards(function)) {
        bool mentions = false;
        walk(*g.stmt->child(0), [&](const AstNode& n) {
            if (n.kind == NodeKind::Identifier && sensitive.count(n.op)) mentions = true;
        });
        if (mentions) roots.insert(g.stmt);
    }
    for (std::size_t i = 0; i + 1 < function.children.size(); ++i)
        if (sensitive.count(function.children[i]->name)) roots.insert(function.children[i].get());

    std::set<const AstNode*> marked;
    for (const auto* r : roots) walk(*r, [&](const AstNode& n) { marked.insert(&n); });
    std::vector<int> out;
    const auto order = cpg::number_nodes(function);
    for (std::size_t i = 0; i < order.size(); ++i)
        if (marked.count(order[i])) out.push_back(static_cast<int>(i));
    return out;
}

Label oracle_label(const AstNode& function) {
    for (const auto& use : tainted_uses(function))
        if (!use.validated) return Label::Vulnerable;
    return Label::Benign;
}

Label oracle_label(std::string_view source) { return oracle_label(*cpg::parse_source(source).root); }

}  // namespace vision::cf
