#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "vision/common.hpp"

namespace vision::cpg {

enum class TokenKind { Identifier, Keyword, IntLiteral, StringLiteral, CharLiteral, Operator, Punct };

struct Token {
    TokenKind kind;
    std::string lexeme;
    int line = 1;
    std::size_t offset = 0;  // byte offset of the first character

    bool operator==(const Token&) const = default;
};

class LexError : public Error {
public:
    LexError(int line, std::size_t offset, char found)
        : Error("lex error at line " + std::to_string(line) + ", offset " + std::to_string(offset) +
                ": unexpected character '" + std::string(1, found) + "'"),
          line_(line),
          offset_(offset) {}

    int line() const { return line_; }
    std::size_t offset() const { return offset_; }

private:
    int line_;
    std::size_t offset_;
};

bool is_keyword(std::string_view word);

/// Maximal-munch tokenization of mini-C. Comments and whitespace are dropped.
std::vector<Token> tokenize(std::string_view source);

/// Vocabulary form of a token: identifiers/keywords/operators verbatim,
/// literals bucketed to INT_ZERO / INT_SMALL / INT_LARGE / STR_LIT / CHAR_LIT.
std::string normalize_token(const Token& token);

}  // namespace vision::cpg
