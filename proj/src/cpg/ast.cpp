#include "vision/cpg/ast.hpp"

namespace vision::cpg {

namespace {
constexpr std::array<std::string_view, kNodeKindCount> kKindNames = {
    "Function", "Param", "Decl", "Assign", "Call", "If", "While", "For",
    "Return", "BinOp", "UnaryOp", "Index", "Literal", "Identifier", "Block"};
}

std::string_view to_string(NodeKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<NodeKind> parse_node_kind(std::string_view text) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i)
        if (kKindNames[i] == text) return static_cast<NodeKind>(i);
    return std::nullopt;
}

bool is_statement_kind(NodeKind kind) {
    switch (kind) {
        case NodeKind::Decl:
        case NodeKind::Assign:
        case NodeKind::Call:
        case NodeKind::If:
        case NodeKind::While:
        case NodeKind::For:
        case NodeKind::Return: return true;
        default: return false;
    }
}

std::unique_ptr<AstNode> AstNode::clone() const {
    auto copy = std::make_unique<AstNode>(kind);
    copy->op = op;
    copy->name = name;
    copy->type = type;
    copy->array = array;
    copy->literal = literal;
    copy->postfix = postfix;
    copy->parenthesized = parenthesized;
    copy->statement = statement;
    copy->has_init = has_init;
    copy->has_cond = has_cond;
    copy->has_step = has_step;
    copy->tok_begin = tok_begin;
    copy->tok_end = tok_end;
    copy->full_begin = full_begin;
    copy->full_end = full_end;
    copy->line = line;
    copy->children.reserve(children.size());
    for (const auto& c : children) copy->children.push_back(c->clone());
    return copy;
}

AstNode* AstNode::for_init() const { return has_init ? children[0].get() : nullptr; }

AstNode* AstNode::for_cond() const {
    if (!has_cond) return nullptr;
    return children[has_init ? 1 : 0].get();
}

AstNode* AstNode::for_step() const {
    if (!has_step) return nullptr;
    return children[(has_init ? 1 : 0) + (has_cond ? 1 : 0)].get();
}

bool structurally_equal(const AstNode& a, const AstNode& b) {
    if (a.kind != b.kind || a.op != b.op || a.name != b.name || a.type != b.type || a.array != b.array ||
        a.literal != b.literal || a.postfix != b.postfix || a.parenthesized != b.parenthesized ||
        a.statement != b.statement || a.has_init != b.has_init || a.has_cond != b.has_cond ||
        a.has_step != b.has_step || a.children.size() != b.children.size())
        return false;
    for (std::size_t i = 0; i < a.children.size(); ++i)
        if (!structurally_equal(*a.children[i], *b.children[i])) return false;
    return true;
}

}  // namespace vision::cpg
