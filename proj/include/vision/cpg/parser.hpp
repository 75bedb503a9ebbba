#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "vision/common.hpp"
#include "vision/cpg/ast.hpp"
#include "vision/cpg/lexer.hpp"

namespace vision::cpg {

class ParseError : public Error {
public:
    ParseError(int line, std::string expected, std::string found)
        : Error("parse error at line " + std::to_string(line) + ": expected " + expected + ", found " + found),
          line_(line),
          expected_(std::move(expected)),
          found_(std::move(found)) {}

    int line() const { return line_; }
    const std::string& expected() const { return expected_; }
    const std::string& found() const { return found_; }

private:
    int line_;
    std::string expected_;
    std::string found_;
};

/// A parsed function together with the tokens its spans refer to.
struct Ast {
    std::vector<Token> tokens;
    AstPtr root;  // kind Function
};

/// Recursive-descent parse of exactly one mini-C function definition.
Ast parse(std::vector<Token> tokens);

inline Ast parse_source(std::string_view source) { return parse(tokenize(source)); }

/// Renders an AST back to mini-C source. Re-tokenizing the output gives the
/// token sequence of the tree (parentheses preserved via `parenthesized`).
std::string print(const AstNode& function);

}  // namespace vision::cpg
