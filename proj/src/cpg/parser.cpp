#include "vision/cpg/parser.hpp"

#include <sstream>

namespace vision::cpg {

namespace {

bool is_type_keyword(const Token& t) {
    return t.kind == TokenKind::Keyword && (t.lexeme == "int" || t.lexeme == "char" || t.lexeme == "void");
}

bool is_assign_op(const Token& t) {
    if (t.kind != TokenKind::Operator) return false;
    const auto& s = t.lexeme;
    return s == "=" || s == "+=" || s == "-=" || s == "*=" || s == "/=" || s == "%=" || s == "&=" || s == "|=" ||
           s == "^=" || s == "<<=" || s == ">>=";
}

// Binary precedence levels, loosest first.
const std::vector<std::vector<std::string_view>> kBinaryLevels = {
    {"||"}, {"&&"}, {"|"}, {"^"}, {"&"}, {"==", "!="}, {"<", "<=", ">", ">="}, {"<<", ">>"}, {"+", "-"}, {"*", "/", "%"}};

class Parser {
public:
    explicit Parser(const std::vector<Token>& toks) : toks_(toks) {}

    AstPtr function() {
        auto fn = std::make_unique<AstNode>(NodeKind::Function);
        fn->tok_begin = fn->full_begin = pos_;
        fn->line = line();
        fn->type = type_spec();
        fn->name = expect_identifier("function name");
        fn->tok_end = pos_;
        expect("(");
        if (!at(")")) {
            if (at("void") && peek(1).lexeme == ")") {
                ++pos_;
            } else {
                do {
                    fn->children.push_back(param());
                } while (accept(","));
            }
        }
        expect(")");
        fn->children.push_back(block());
        fn->full_end = pos_;
        if (pos_ != toks_.size()) fail("end of input");
        return fn;
    }

private:
    const std::vector<Token>& toks_;
    std::size_t pos_ = 0;

    const Token& peek(std::size_t ahead = 0) const {
        static const Token eof{TokenKind::Punct, "<eof>", 0, 0};
        return pos_ + ahead < toks_.size() ? toks_[pos_ + ahead] : eof;
    }
    int line() const {
        if (pos_ < toks_.size()) return toks_[pos_].line;
        return toks_.empty() ? 1 : toks_.back().line;
    }
    bool at(std::string_view lexeme) const {
        return pos_ < toks_.size() && toks_[pos_].lexeme == lexeme && toks_[pos_].kind != TokenKind::StringLiteral &&
               toks_[pos_].kind != TokenKind::CharLiteral;
    }
    bool accept(std::string_view lexeme) {
        if (!at(lexeme)) return false;
        ++pos_;
        return true;
    }
    [[noreturn]] void fail(const std::string& expected) const {
        const std::string found = pos_ < toks_.size() ? "'" + toks_[pos_].lexeme + "'" : "end of input";
        throw ParseError(line(), expected, found);
    }
    void expect(std::string_view lexeme) {
        if (!accept(lexeme)) fail("'" + std::string(lexeme) + "'");
    }
    std::string expect_identifier(const std::string& what) {
        if (pos_ >= toks_.size() || toks_[pos_].kind != TokenKind::Identifier) fail(what);
        return toks_[pos_++].lexeme;
    }

    std::string type_spec() {
        if (pos_ >= toks_.size() || !is_type_keyword(toks_[pos_])) fail("type");
        std::string type = toks_[pos_++].lexeme;
        if (accept("*")) type += " *";
        return type;
    }

    std::string array_suffix(bool allow_empty) {
        if (!accept("[")) return "";
        if (accept("]")) {
            if (!allow_empty) fail("array size");
            return "[]";
        }
        if (pos_ >= toks_.size() || toks_[pos_].kind != TokenKind::IntLiteral) fail("array size");
        std::string size = toks_[pos_++].lexeme;
        expect("]");
        return "[" + size + "]";
    }

    AstPtr param() {
        auto p = std::make_unique<AstNode>(NodeKind::Param);
        p->tok_begin = p->full_begin = pos_;
        p->line = line();
        p->type = type_spec();
        p->name = expect_identifier("parameter name");
        p->array = array_suffix(true);
        p->tok_end = p->full_end = pos_;
        return p;
    }

    AstPtr block() {
        auto b = std::make_unique<AstNode>(NodeKind::Block);
        b->line = line();
        b->full_begin = pos_;
        expect("{");
        b->tok_begin = b->tok_end = pos_;
        while (!at("}")) {
            if (pos_ >= toks_.size()) fail("'}'");
            if (auto s = statement()) b->children.push_back(std::move(s));
        }
        expect("}");
        b->full_end = pos_;
        return b;
    }

    AstPtr decl(bool consume_semicolon) {
        auto d = std::make_unique<AstNode>(NodeKind::Decl);
        d->statement = true;
        d->tok_begin = d->full_begin = pos_;
        d->line = line();
        d->type = type_spec();
        d->name = expect_identifier("variable name");
        d->array = array_suffix(false);
        if (accept("=")) d->children.push_back(expression());
        d->tok_end = pos_;
        if (consume_semicolon) expect(";");
        d->full_end = pos_;
        return d;
    }

    AstPtr expression_statement(bool consume_semicolon) {
        const std::size_t start = pos_;
        auto e = expression();
        if (e->kind == NodeKind::UnaryOp && (e->op == "++" || e->op == "--")) e->kind = NodeKind::Assign;
        if (e->kind != NodeKind::Assign && e->kind != NodeKind::Call) {
            pos_ = start;
            fail("assignment or call statement");
        }
        if (e->parenthesized) {
            pos_ = start;
            fail("assignment or call statement");
        }
        e->statement = true;
        if (consume_semicolon) expect(";");
        e->full_end = pos_;
        return e;
    }

    AstPtr statement() {
        if (accept(";")) return nullptr;
        if (at("{")) return block();
        if (pos_ < toks_.size() && is_type_keyword(toks_[pos_])) return decl(true);
        if (at("if")) {
            auto s = std::make_unique<AstNode>(NodeKind::If);
            s->statement = true;
            s->tok_begin = s->full_begin = pos_;
            s->line = line();
            ++pos_;
            expect("(");
            s->children.push_back(expression());
            expect(")");
            s->tok_end = pos_;
            s->children.push_back(sub_statement());
            if (accept("else")) s->children.push_back(sub_statement());
            s->full_end = pos_;
            return s;
        }
        if (at("while")) {
            auto s = std::make_unique<AstNode>(NodeKind::While);
            s->statement = true;
            s->tok_begin = s->full_begin = pos_;
            s->line = line();
            ++pos_;
            expect("(");
            s->children.push_back(expression());
            expect(")");
            s->tok_end = pos_;
            s->children.push_back(sub_statement());
            s->full_end = pos_;
            return s;
        }
        if (at("for")) {
            auto s = std::make_unique<AstNode>(NodeKind::For);
            s->statement = true;
            s->tok_begin = s->full_begin = pos_;
            s->line = line();
            ++pos_;
            expect("(");
            if (!at(";")) {
                s->has_init = true;
                if (pos_ < toks_.size() && is_type_keyword(toks_[pos_]))
                    s->children.push_back(decl(false));
                else
                    s->children.push_back(expression_statement(false));
            }
            expect(";");
            if (!at(";")) {
                s->has_cond = true;
                s->children.push_back(expression());
            }
            expect(";");
            if (!at(")")) {
                s->has_step = true;
                s->children.push_back(expression_statement(false));
            }
            expect(")");
            s->tok_end = pos_;
            s->children.push_back(sub_statement());
            s->full_end = pos_;
            return s;
        }
        if (at("return")) {
            auto s = std::make_unique<AstNode>(NodeKind::Return);
            s->statement = true;
            s->tok_begin = s->full_begin = pos_;
            s->line = line();
            ++pos_;
            if (!at(";")) s->children.push_back(expression());
            s->tok_end = pos_;
            expect(";");
            s->full_end = pos_;
            return s;
        }
        if (at("else")) fail("statement");
        return expression_statement(true);
    }

    // Branch/loop bodies; an empty statement becomes an empty Block.
    AstPtr sub_statement() {
        const std::size_t start = pos_;
        const int ln = line();
        auto s = statement();
        if (!s) {
            s = std::make_unique<AstNode>(NodeKind::Block);
            s->tok_begin = s->tok_end = s->full_begin = start;
            s->full_end = pos_;
            s->line = ln;
        }
        return s;
    }

    static void finish(AstNode& node, std::size_t begin, std::size_t end, int line) {
        node.tok_begin = node.full_begin = begin;
        node.tok_end = node.full_end = end;
        node.line = line;
    }

    AstPtr expression() { return assignment(); }

    AstPtr assignment() {
        const std::size_t begin = pos_;
        const int ln = line();
        auto lhs = binary(0);
        if (pos_ < toks_.size() && is_assign_op(toks_[pos_])) {
            const bool lvalue = lhs->kind == NodeKind::Identifier || lhs->kind == NodeKind::Index ||
                                (lhs->kind == NodeKind::UnaryOp && lhs->op == "*" && !lhs->postfix);
            if (!lvalue) fail("assignable expression before '" + toks_[pos_].lexeme + "'");
            auto a = std::make_unique<AstNode>(NodeKind::Assign);
            a->op = toks_[pos_++].lexeme;
            a->children.push_back(std::move(lhs));
            a->children.push_back(assignment());
            finish(*a, begin, pos_, ln);
            return a;
        }
        return lhs;
    }

    AstPtr binary(std::size_t level) {
        if (level == kBinaryLevels.size()) return unary();
        const std::size_t begin = pos_;
        const int ln = line();
        auto lhs = binary(level + 1);
        for (;;) {
            if (pos_ >= toks_.size() || toks_[pos_].kind != TokenKind::Operator) break;
            bool match = false;
            for (auto op : kBinaryLevels[level])
                if (toks_[pos_].lexeme == op) match = true;
            if (!match) break;
            auto b = std::make_unique<AstNode>(NodeKind::BinOp);
            b->op = toks_[pos_++].lexeme;
            b->children.push_back(std::move(lhs));
            b->children.push_back(binary(level + 1));
            finish(*b, begin, pos_, ln);
            lhs = std::move(b);
        }
        return lhs;
    }

    AstPtr unary() {
        const std::size_t begin = pos_;
        const int ln = line();
        if (pos_ < toks_.size() && toks_[pos_].kind == TokenKind::Operator) {
            const auto& op = toks_[pos_].lexeme;
            if (op == "-" || op == "!" || op == "~" || op == "*" || op == "&" || op == "++" || op == "--" ||
                op == "+") {
                auto u = std::make_unique<AstNode>(NodeKind::UnaryOp);
                u->op = op;
                ++pos_;
                u->children.push_back(unary());
                finish(*u, begin, pos_, ln);
                return u;
            }
        }
        return postfix();
    }

    AstPtr postfix() {
        const std::size_t begin = pos_;
        const int ln = line();
        auto e = primary();
        for (;;) {
            if (at("[")) {
                ++pos_;
                auto idx = std::make_unique<AstNode>(NodeKind::Index);
                idx->children.push_back(std::move(e));
                idx->children.push_back(expression());
                expect("]");
                finish(*idx, begin, pos_, ln);
                e = std::move(idx);
            } else if (at("++") || at("--")) {
                auto u = std::make_unique<AstNode>(NodeKind::UnaryOp);
                u->op = toks_[pos_++].lexeme;
                u->postfix = true;
                u->children.push_back(std::move(e));
                finish(*u, begin, pos_, ln);
                e = std::move(u);
            } else {
                break;
            }
        }
        return e;
    }

    AstPtr primary() {
        const std::size_t begin = pos_;
        const int ln = line();
        if (pos_ >= toks_.size()) fail("expression");
        const Token& t = toks_[pos_];
        switch (t.kind) {
            case TokenKind::Identifier: {
                ++pos_;
                if (at("(")) {
                    auto call = std::make_unique<AstNode>(NodeKind::Call);
                    call->name = t.lexeme;
                    ++pos_;
                    if (!at(")")) {
                        do {
                            call->children.push_back(assignment());
                        } while (accept(","));
                    }
                    expect(")");
                    finish(*call, begin, pos_, ln);
                    return call;
                }
                auto id = std::make_unique<AstNode>(NodeKind::Identifier);
                id->op = t.lexeme;
                finish(*id, begin, pos_, ln);
                return id;
            }
            case TokenKind::IntLiteral:
            case TokenKind::StringLiteral:
            case TokenKind::CharLiteral: {
                ++pos_;
                auto lit = std::make_unique<AstNode>(NodeKind::Literal);
                lit->op = t.lexeme;
                lit->literal = t.kind == TokenKind::IntLiteral    ? LiteralKind::Int
                               : t.kind == TokenKind::StringLiteral ? LiteralKind::String
                                                                    : LiteralKind::Char;
                finish(*lit, begin, pos_, ln);
                return lit;
            }
            default: break;
        }
        if (at("(")) {
            ++pos_;
            auto inner = expression();
            expect(")");
            inner->parenthesized = true;
            inner->full_begin = begin;
            inner->full_end = pos_;
            return inner;
        }
        fail("expression");
    }
};

// ---------------------------------------------------------------------------
// Printing

int binary_precedence(const std::string& op) {
    for (std::size_t i = 0; i < kBinaryLevels.size(); ++i)
        for (auto o : kBinaryLevels[i])
            if (o == op) return static_cast<int>(i) + 1;
    return 0;
}

// Higher binds tighter. Assignment 0, binary 1..10, unary 11, postfix/primary 12.
int precedence(const AstNode& e) {
    switch (e.kind) {
        case NodeKind::Assign: return 0;
        case NodeKind::BinOp: return binary_precedence(e.op);
        case NodeKind::UnaryOp: return e.postfix ? 12 : 11;
        default: return 12;
    }
}

class Printer {
public:
    std::string run(const AstNode& fn) {
        out_ << declarator(fn.type, fn.name, "") << "(";
        for (std::size_t i = 0; i + 1 < fn.children.size(); ++i) {
            if (i) out_ << ", ";
            const auto& p = *fn.children[i];
            out_ << declarator(p.type, p.name, p.array);
        }
        out_ << ") ";
        block(*fn.function_body(), 0);
        out_ << "\n";
        return out_.str();
    }

    static std::string expr(const AstNode& e, int min_prec = 0) {
        std::string s = expr_inner(e);
        if (e.parenthesized || precedence(e) < min_prec) return "(" + s + ")";
        return s;
    }

private:
    std::ostringstream out_;

    static std::string declarator(const std::string& type, const std::string& name, const std::string& array) {
        std::string s = type;
        if (s.empty() || s.back() != '*') s += ' ';
        return s + name + array;
    }

    static std::string expr_inner(const AstNode& e) {
        switch (e.kind) {
            case NodeKind::Identifier:
            case NodeKind::Literal: return e.op;
            case NodeKind::Call: {
                std::string s = e.name + "(";
                for (std::size_t i = 0; i < e.children.size(); ++i) {
                    if (i) s += ", ";
                    s += expr(*e.children[i], 1);
                }
                return s + ")";
            }
            case NodeKind::Index: return expr(*e.child(0), 12) + "[" + expr(*e.child(1)) + "]";
            case NodeKind::UnaryOp:
                if (e.postfix) return expr(*e.child(0), 12) + e.op;
                return e.op + expr(*e.child(0), 11);
            case NodeKind::BinOp: {
                const int p = binary_precedence(e.op);
                return expr(*e.child(0), p) + " " + e.op + " " + expr(*e.child(1), p + 1);
            }
            case NodeKind::Assign:
                if (e.children.size() == 1)
                    return e.postfix ? expr(*e.child(0), 12) + e.op : e.op + expr(*e.child(0), 11);
                return expr(*e.child(0), 1) + " " + e.op + " " + expr(*e.child(1), 0);
            default: return "";
        }
    }

    void indent(int depth) {
        for (int i = 0; i < depth; ++i) out_ << "    ";
    }

    void block(const AstNode& b, int depth) {
        out_ << "{\n";
        for (const auto& s : b.children) {
            statement(*s, depth + 1, true);
            out_ << "\n";
        }
        indent(depth);
        out_ << "}";
    }

    static std::string simple(const AstNode& s) {
        if (s.kind == NodeKind::Decl) {
            std::string text = declarator(s.type, s.name, s.array);
            if (!s.children.empty()) text += " = " + expr(*s.child(0), 0);
            return text;
        }
        return expr(s);
    }

    // Bodies of if/while/for: blocks stay on the header line, single
    // statements go indented on the next line.
    void body(const AstNode& s, int depth) {
        if (s.kind == NodeKind::Block) {
            out_ << " ";
            block(s, depth);
        } else {
            out_ << "\n";
            statement(s, depth + 1, true);
        }
    }

    // Writes one statement without a trailing newline.
    void statement(const AstNode& s, int depth, bool do_indent) {
        if (do_indent) indent(depth);
        switch (s.kind) {
            case NodeKind::Block: block(s, depth); break;
            case NodeKind::Decl:
            case NodeKind::Assign:
            case NodeKind::Call: out_ << simple(s) << ";"; break;
            case NodeKind::Return:
                out_ << "return";
                if (!s.children.empty()) out_ << " " << expr(*s.child(0));
                out_ << ";";
                break;
            case NodeKind::If:
                out_ << "if (" << expr(*s.child(0)) << ")";
                body(*s.child(1), depth);
                if (auto* e = s.if_else()) {
                    if (s.child(1)->kind == NodeKind::Block) {
                        out_ << " else";
                    } else {
                        out_ << "\n";
                        indent(depth);
                        out_ << "else";
                    }
                    if (e->kind == NodeKind::If) {
                        out_ << " ";
                        statement(*e, depth, false);
                    } else {
                        body(*e, depth);
                    }
                }
                break;
            case NodeKind::While:
                out_ << "while (" << expr(*s.child(0)) << ")";
                body(*s.children.back(), depth);
                break;
            case NodeKind::For:
                out_ << "for (";
                if (auto* i = s.for_init()) out_ << simple(*i);
                out_ << ";";
                if (auto* c = s.for_cond()) out_ << " " << expr(*c);
                out_ << ";";
                if (auto* st = s.for_step()) out_ << " " << simple(*st);
                out_ << ")";
                body(*s.for_body(), depth);
                break;
            default: break;
        }
    }
};

}  // namespace

Ast parse(std::vector<Token> tokens) {
    Ast ast;
    ast.tokens = std::move(tokens);
    Parser p(ast.tokens);
    ast.root = p.function();
    return ast;
}

std::string print(const AstNode& function) { return Printer().run(function); }

}  // namespace vision::cpg
