#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vision::cpg {

enum class NodeKind : std::uint8_t {
    Function,
    Param,
    Decl,
    Assign,
    Call,
    If,
    While,
    For,
    Return,
    BinOp,
    UnaryOp,
    Index,
    Literal,
    Identifier,
    Block
};

inline constexpr std::size_t kNodeKindCount = 15;

std::string_view to_string(NodeKind kind);
std::optional<NodeKind> parse_node_kind(std::string_view text);

/// Statement kinds that participate in the control-flow view.
bool is_statement_kind(NodeKind kind);

enum class LiteralKind : std::uint8_t { Int, String, Char };

/// Node of the mini-C syntax tree.
///
/// Child layout by kind:
///   Function  params..., body Block
///   Decl      [initializer]
///   Assign    lhs, rhs   (op "=", "+=", ...) or operand (op "++"/"--")
///   Call      args...    (callee in `name`)
///   If        cond, then, [else]
///   While     cond, body
///   For       [init], [cond], [step], body   (presence flags below)
///   Return    [value]
///   BinOp     lhs, rhs
///   UnaryOp   operand
///   Index     base, index
///   Block     statements...
struct AstNode {
    NodeKind kind = NodeKind::Block;
    std::string op;      // operator, literal text, or identifier name
    std::string name;    // declared name (Function/Param/Decl) or callee (Call)
    std::string type;    // "int", "char *", ... for Function/Param/Decl
    std::string array;   // "" | "[]" | "[16]" suffix on Param/Decl
    LiteralKind literal = LiteralKind::Int;
    bool postfix = false;
    bool parenthesized = false;
    bool statement = false;  // sits in statement position
    bool has_init = false, has_cond = false, has_step = false;  // For only
    std::vector<std::unique_ptr<AstNode>> children;

    // Token range [tok_begin, tok_end) covered by the node's code snippet,
    // and the full extent [full_begin, full_end) of the construct.
    std::size_t tok_begin = 0, tok_end = 0;
    std::size_t full_begin = 0, full_end = 0;
    int line = 1;

    AstNode() = default;
    explicit AstNode(NodeKind k) : kind(k) {}

    std::unique_ptr<AstNode> clone() const;

    AstNode* child(std::size_t i) const { return children.at(i).get(); }

    // For-loop slot accessors; nullptr when the slot is empty.
    AstNode* for_init() const;
    AstNode* for_cond() const;
    AstNode* for_step() const;
    AstNode* for_body() const { return children.back().get(); }

    // If accessors.
    AstNode* if_else() const { return children.size() > 2 ? children[2].get() : nullptr; }

    AstNode* function_body() const { return children.back().get(); }
};

using AstPtr = std::unique_ptr<AstNode>;

bool structurally_equal(const AstNode& a, const AstNode& b);

}  // namespace vision::cpg
