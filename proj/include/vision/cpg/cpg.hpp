#pragma once

#include <compare>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vision/common.hpp"
#include "vision/cpg/ast.hpp"
#include "vision/cpg/parser.hpp"

namespace vision::cpg {

enum class EdgeKind : std::uint8_t { AST = 0, CFG = 1, DFG = 2 };
inline constexpr std::size_t kEdgeKindCount = 3;

std::string_view to_string(EdgeKind kind);

struct CpgNode {
    int id = 0;
    NodeKind kind = NodeKind::Block;
    std::string code;
    int line = 1;
    std::vector<std::string> tokens;

    bool operator==(const CpgNode&) const = default;
};

struct CpgEdge {
    int src = 0;
    int dst = 0;
    EdgeKind kind = EdgeKind::AST;

    bool operator==(const CpgEdge&) const = default;
    // Canonical order: (kind, src, dst).
    auto operator<=>(const CpgEdge& o) const {
        if (auto c = kind <=> o.kind; c != 0) return c;
        if (auto c = src <=> o.src; c != 0) return c;
        return dst <=> o.dst;
    }
};

struct CodePropertyGraph {
    std::string function_id;
    Label label = Label::Benign;
    Provenance provenance = Provenance::Original;
    std::vector<CpgNode> nodes;
    std::vector<CpgEdge> edges;

    std::size_t size() const { return nodes.size(); }
    bool operator==(const CodePropertyGraph&) const = default;
};

/// Byte/line extent of a node in the function source, for highlighting.
struct SourceSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
    int line_begin = 1;
    int line_end = 1;
};

/// Pre-order numbering of the syntax tree; position = CPG node id.
std::vector<const AstNode*> number_nodes(const AstNode& root);

std::vector<CpgEdge> build_ast_edges(const Ast& ast);

/// Intraprocedural statement-level control flow. Only statement-position
/// nodes of kinds Decl/Assign/Call/If/While/For/Return participate.
std::vector<CpgEdge> build_cfg(const Ast& ast);

/// Def-use edges from flow-sensitive reaching definitions over `cfg`.
/// Parameters are defined at their Param node on function entry.
std::vector<CpgEdge> build_dfg(const Ast& ast, std::span<const CpgEdge> cfg);

/// Variables read / written by a CFG statement (its own expressions only).
struct DefUse {
    std::vector<std::string> uses;
    std::vector<std::string> strong_defs;  // kill earlier definitions
    std::vector<std::string> weak_defs;    // element or pointee writes
};
DefUse statement_def_use(const AstNode& stmt);

/// Ids of statements the CFG enters first (successors of function entry).
std::vector<int> cfg_entry_nodes(const Ast& ast);

/// Nodes from an already-parsed tree.
std::vector<CpgNode> build_nodes(const Ast& ast);

CodePropertyGraph assemble_cpg(const Ast& ast, const SourceFunction& fn);
CodePropertyGraph assemble_cpg(const SourceFunction& fn);

std::vector<SourceSpan> node_spans(const Ast& ast, std::string_view source);

/// Checks every structural invariant; returns a description of the first
/// violation or an empty string.
std::string check_invariants(const CodePropertyGraph& g);

std::string serialize_cpg(const CodePropertyGraph& g);
CodePropertyGraph deserialize_cpg(std::string_view text);

/// Subgraph induced by `keep` (ascending original ids). Node ids are
/// re-densified; `keep[i]` is the original id of new node i.
CodePropertyGraph induced_subgraph(const CodePropertyGraph& g, std::span<const int> keep);

}  // namespace vision::cpg
