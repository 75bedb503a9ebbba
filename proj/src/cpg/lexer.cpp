#include "vision/cpg/lexer.hpp"

#include <array>
#include <cctype>
#include <charconv>

namespace vision::cpg {

namespace {

constexpr std::array<std::string_view, 8> kKeywords = {"int", "char", "void", "if", "else", "while", "for", "return"};

// Longest first so that a linear scan implements maximal munch.
constexpr std::array<std::string_view, 33> kOperators = {
    "<<=", ">>=", "==", "!=", "<=", ">=", "&&", "||", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=",
    "^=",  "<<",  ">>", "+",  "-",  "*",  "/",  "%",  "=",  "<",  ">",  "!",  "~",  "&",  "|",  "^"};

constexpr std::string_view kPunct = "(){}[];,";

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

bool is_keyword(std::string_view word) {
    for (auto kw : kKeywords)
        if (kw == word) return true;
    return false;
}

std::vector<Token> tokenize(std::string_view src) {
    std::vector<Token> out;
    int line = 1;
    std::size_t i = 0;
    const std::size_t n = src.size();
    while (i < n) {
        char c = src[i];
        if (c == '\n') {
            ++line;
            ++i;
            continue;
        }
        if (c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v') {
            ++i;
            continue;
        }
        if (c == '/' && i + 1 < n && src[i + 1] == '/') {
            while (i < n && src[i] != '\n') ++i;
            continue;
        }
        if (c == '/' && i + 1 < n && src[i + 1] == '*') {
            std::size_t start = i;
            int start_line = line;
            i += 2;
            while (i + 1 < n && !(src[i] == '*' && src[i + 1] == '/')) {
                if (src[i] == '\n') ++line;
                ++i;
            }
            if (i + 1 >= n) throw LexError(start_line, start, '/');
            i += 2;
            continue;
        }
        const std::size_t start = i;
        if (ident_start(c)) {
            while (i < n && ident_char(src[i])) ++i;
            std::string word(src.substr(start, i - start));
            out.push_back({is_keyword(word) ? TokenKind::Keyword : TokenKind::Identifier, std::move(word), line, start});
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            if (c == '0' && i + 1 < n && (src[i + 1] == 'x' || src[i + 1] == 'X')) {
                i += 2;
                if (i >= n || !std::isxdigit(static_cast<unsigned char>(src[i]))) throw LexError(line, start, c);
                while (i < n && std::isxdigit(static_cast<unsigned char>(src[i]))) ++i;
            } else {
                while (i < n && std::isdigit(static_cast<unsigned char>(src[i]))) ++i;
            }
            if (i < n && ident_char(src[i])) throw LexError(line, i, src[i]);
            out.push_back({TokenKind::IntLiteral, std::string(src.substr(start, i - start)), line, start});
            continue;
        }
        if (c == '"' || c == '\'') {
            const char quote = c;
            ++i;
            while (i < n && src[i] != quote) {
                if (src[i] == '\n') throw LexError(line, i, '\n');
                if (src[i] == '\\') ++i;
                ++i;
            }
            if (i >= n) throw LexError(line, start, quote);
            ++i;
            out.push_back({quote == '"' ? TokenKind::StringLiteral : TokenKind::CharLiteral,
                           std::string(src.substr(start, i - start)), line, start});
            continue;
        }
        if (kPunct.find(c) != std::string_view::npos) {
            out.push_back({TokenKind::Punct, std::string(1, c), line, start});
            ++i;
            continue;
        }
        bool matched = false;
        for (auto op : kOperators) {
            if (src.substr(i, op.size()) == op) {
                out.push_back({TokenKind::Operator, std::string(op), line, start});
                i += op.size();
                matched = true;
                break;
            }
        }
        if (!matched) throw LexError(line, start, c);
    }
    return out;
}

std::string normalize_token(const Token& token) {
    switch (token.kind) {
        case TokenKind::IntLiteral: {
            unsigned long long value = 0;
            std::string_view text = token.lexeme;
            int base = 10;
            if (text.size() > 2 && (text[1] == 'x' || text[1] == 'X')) {
                text.remove_prefix(2);
                base = 16;
            }
            auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value, base);
            if (ec != std::errc()) return "INT_LARGE";
            if (value == 0) return "INT_ZERO";
            return value <= 255 ? "INT_SMALL" : "INT_LARGE";
        }
        case TokenKind::StringLiteral: return "STR_LIT";
        case TokenKind::CharLiteral: return "CHAR_LIT";
        default: return token.lexeme;
    }
}

}  // namespace vision::cpg
