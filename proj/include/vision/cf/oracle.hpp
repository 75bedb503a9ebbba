#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "vision/common.hpp"
#include "vision/cpg/parser.hpp"

namespace vision::cf {

/// Calls whose string arguments must be length-checked. Arguments at index
/// `first_data_arg` and later are data positions.
struct SinkSpec {
    std::string name;
    std::size_t first_data_arg;
    std::string constant;  // replacement used when the input is removed
};

const std::vector<SinkSpec>& sinks();
const SinkSpec* find_sink(std::string_view name);

enum class UseKind { Index, Sink };

/// A parameter reaching a sensitive position: an array index, or a data
/// argument of a sink call.
struct TaintedUse {
    UseKind kind = UseKind::Index;
    std::string param;
    const cpg::AstNode* stmt = nullptr;  // enclosing top-level statement
    const cpg::AstNode* site = nullptr;  // the Index node or the Call node
    std::size_t arg = 0;                 // argument position for sinks
    std::size_t top_index = 0;           // position of `stmt` in the body
    bool validated = false;
};

/// A top-level `if (...) return ...;` without else.
struct Guard {
    const cpg::AstNode* stmt = nullptr;
    std::size_t top_index = 0;
    // One entry per `||` disjunct of the condition.
    std::vector<const cpg::AstNode*> disjuncts;
};

/// Whether `cmp` is a lower-bound check of `param` (`p < 0` or `0 > p`).
bool is_lower_bound_check(const cpg::AstNode& cmp, std::string_view param);
/// Whether `cmp` bounds the length of `param` (`strlen(p) >= K`, `strlen(p) > K`,
/// or the mirrored forms).
bool is_length_check(const cpg::AstNode& cmp, std::string_view param);
bool validates(const cpg::AstNode& cmp, UseKind kind, std::string_view param);

std::vector<Guard> early_return_guards(const cpg::AstNode& function);
std::vector<TaintedUse> tainted_uses(const cpg::AstNode& function);

/// Sink arguments that are constants (literals or NULL) at data positions.
struct ConstantSinkArg {
    const cpg::AstNode* call = nullptr;
    std::size_t arg = 0;
    std::size_t top_index = 0;
};
std::vector<ConstantSinkArg> constant_sink_args(const cpg::AstNode& function);

/// Syntax nodes that carry the planted rule: whole guard statements that
/// test a sensitive parameter, whole statements containing a tainted use or
/// a constant sink argument, and the Param nodes of sensitive parameters.
/// A parameter is sensitive when it reaches a tainted use. Pre-order ids
/// (CPG node ids), ascending.
std::vector<int> planted_node_ids(const cpg::AstNode& function);

/// Planted ground truth: Vulnerable iff some tainted use is not preceded
/// by a top-level early-return guard that validates its parameter.
Label oracle_label(const cpg::AstNode& function);
Label oracle_label(std::string_view source);

}  // namespace vision::cf
