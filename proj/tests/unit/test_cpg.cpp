#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <random>
#include <set>

#include "vision/cpg/cpg.hpp"

using namespace vision;
using namespace vision::cpg;

namespace {

std::vector<CpgEdge> of_kind(const CodePropertyGraph& g, EdgeKind k) {
    std::vector<CpgEdge> out;
    for (const auto& e : g.edges)
        if (e.kind == k) out.push_back(e);
    return out;
}

CodePropertyGraph cpg_of(const std::string& src) { return assemble_cpg(SourceFunction{"f", src}); }

int count_kind(const CodePropertyGraph& g, NodeKind k) {
    return static_cast<int>(std::count_if(g.nodes.begin(), g.nodes.end(), [&](auto& n) { return n.kind == k; }));
}

int first_of(const CodePropertyGraph& g, NodeKind k, int nth = 0) {
    for (const auto& n : g.nodes)
        if (n.kind == k && nth-- == 0) return n.id;
    return -1;
}

// Independent reaching-definitions oracle: a definition d of x reaches a use
// at u iff some CFG path d -> ... -> u has no intermediate strong def of x.
// Enumerates simple paths explicitly (fine for <= 10 statements).
std::set<CpgEdge> brute_force_dfg(const Ast& ast, const std::vector<CpgEdge>& cfg) {
    auto order = number_nodes(*ast.root);
    const int n = static_cast<int>(order.size());
    std::vector<std::vector<int>> succ(n);
    std::set<int> stmts;
    for (const auto& e : cfg) {
        succ[e.src].push_back(e.dst);
        stmts.insert(e.src);
        stmts.insert(e.dst);
    }
    auto entry = cfg_entry_nodes(ast);
    stmts.insert(entry.begin(), entry.end());
    std::map<int, DefUse> du;
    for (int s : stmts) du[s] = statement_def_use(*order[s]);
    auto kills = [&](int node, const std::string& v) {
        const auto& d = du[node].strong_defs;
        return std::find(d.begin(), d.end(), v) != d.end();
    };
    auto uses = [&](int node, const std::string& v) {
        const auto& u = du[node].uses;
        return std::find(u.begin(), u.end(), v) != u.end();
    };

    std::set<CpgEdge> out;
    // Walks every simple path from `from`'s successors; records uses reached.
    auto walk = [&](int def_node, const std::string& var, const std::vector<int>& starts) {
        std::vector<bool> on_path(n, false);
        std::function<void(int)> dfs = [&](int node) {
            if (uses(node, var)) out.insert({def_node, node, EdgeKind::DFG});
            if (kills(node, var)) return;
            if (on_path[node]) return;
            on_path[node] = true;
            for (int s : succ[node]) dfs(s);
            on_path[node] = false;
        };
        for (int s : starts) dfs(s);
    };
    for (int s : stmts) {
        for (const auto& v : du[s].strong_defs) walk(s, v, succ[s]);
        for (const auto& v : du[s].weak_defs) walk(s, v, succ[s]);
    }
    for (const auto& c : ast.root->children)
        if (c->kind == NodeKind::Param) {
            int pid = -1;
            for (int i = 0; i < n; ++i)
                if (order[i] == c.get()) pid = i;
            walk(pid, c->name, entry);
        }
    return out;
}

// Random structured mini-C bodies of bounded size for property checks.
class RandomProgram {
public:
    explicit RandomProgram(unsigned seed) : rng_(seed) {}

    std::string generate(int max_statements) {
        budget_ = max_statements;
        std::string body;
        while (budget_ > 0) body += stmt(0);
        return "int f(int a, int b) {\n" + body + "}\n";
    }

private:
    std::mt19937 rng_;
    int budget_ = 0;
    int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng_); }
    std::string var() { return std::string(1, "abxy"[pick(4)]); }
    std::string expr() {
        switch (pick(3)) {
            case 0: return var();
            case 1: return var() + " + " + var();
            default: return std::to_string(pick(5));
        }
    }
    std::string stmt(int depth) {
        --budget_;
        int choice = pick(depth < 2 ? 7 : 3);
        switch (choice) {
            case 0: return var() + " = " + expr() + ";\n";
            case 1: return "int " + var() + "1 = " + expr() + ";\n";
            case 2: return "g(" + var() + ");\n";
            case 3: {
                std::string s = "if (" + var() + " > 0) {\n" + stmt(depth + 1) + "}";
                if (pick(2) && budget_ > 0) s += " else {\n" + stmt(depth + 1) + "}";
                return s + "\n";
            }
            case 4: return "while (" + var() + " < 3) {\n" + stmt(depth + 1) + "}\n";
            case 5: return "for (x = 0; x < b; x++) {\n" + stmt(depth + 1) + "}\n";
            default: return "return " + var() + ";\n";
        }
    }
};

}  // namespace

TEST(Tokenize, SimpleFunction) {
    auto toks = tokenize("int f(int a){return a;}");
    // Keyword/identifier/punctuation count is forced by the grammar: 11.
    ASSERT_EQ(toks.size(), 11u);
    EXPECT_EQ(toks[toks.size() - 2].lexeme, ";");
    EXPECT_EQ(toks.back().lexeme, "}");
    EXPECT_EQ(toks[0].kind, TokenKind::Keyword);
    EXPECT_EQ(toks[1].kind, TokenKind::Identifier);
}

TEST(Tokenize, EmptySource) { EXPECT_TRUE(tokenize("").empty()); }

TEST(Tokenize, RejectsCharacterOutsideTokenSet) {
    try {
        tokenize("int x = @;");
        FAIL() << "expected LexError";
    } catch (const LexError& e) {
        EXPECT_EQ(e.line(), 1);
        EXPECT_EQ(e.offset(), 8u);
    }
}

TEST(Tokenize, MaximalMunchAndComments) {
    auto toks = tokenize("a <<= b>=c; // tail\n/* multi\nline */ x++");
    std::vector<std::string> lex;
    for (auto& t : toks) lex.push_back(t.lexeme);
    EXPECT_EQ(lex, (std::vector<std::string>{"a", "<<=", "b", ">=", "c", ";", "x", "++"}));
    EXPECT_EQ(toks.back().line, 3);
}

TEST(Tokenize, LiteralBuckets) {
    auto toks = tokenize("0 7 4096 \"s\" 'c' 0x10");
    std::vector<std::string> norm;
    for (auto& t : toks) norm.push_back(normalize_token(t));
    EXPECT_EQ(norm, (std::vector<std::string>{"INT_ZERO", "INT_SMALL", "INT_LARGE", "STR_LIT", "CHAR_LIT", "INT_SMALL"}));
}

TEST(Parse, FunctionParamBlockReturn) {
    auto ast = parse_source("int f(int a){return a;}");
    const auto& fn = *ast.root;
    EXPECT_EQ(fn.kind, NodeKind::Function);
    ASSERT_EQ(fn.children.size(), 2u);
    EXPECT_EQ(fn.child(0)->kind, NodeKind::Param);
    EXPECT_EQ(fn.child(0)->name, "a");
    const auto& body = *fn.child(1);
    EXPECT_EQ(body.kind, NodeKind::Block);
    ASSERT_EQ(body.children.size(), 1u);
    EXPECT_EQ(body.child(0)->kind, NodeKind::Return);
    EXPECT_EQ(body.child(0)->child(0)->kind, NodeKind::Identifier);
    EXPECT_EQ(body.child(0)->child(0)->op, "a");
}

TEST(Parse, IfWithTwoReturns) {
    auto ast = parse_source("int f(){if(x>0){return 1;}return 0;}");
    const auto& body = *ast.root->function_body();
    ASSERT_EQ(body.children.size(), 2u);
    const auto& s = *body.child(0);
    EXPECT_EQ(s.kind, NodeKind::If);
    EXPECT_EQ(s.child(0)->kind, NodeKind::BinOp);
    EXPECT_EQ(s.child(0)->op, ">");
    EXPECT_EQ(s.child(1)->child(0)->kind, NodeKind::Return);
    EXPECT_EQ(body.child(1)->kind, NodeKind::Return);
}

TEST(Parse, ErrorCarriesLine) {
    try {
        parse_source("int f({");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 1);
        EXPECT_FALSE(e.expected().empty());
    }
    EXPECT_THROW(parse_source("int f() { a + b; }"), ParseError);
    EXPECT_THROW(parse_source("int f() { return 0; } int g() {}"), ParseError);
    EXPECT_THROW(parse_source("int f() { 3 = x; }"), ParseError);
}

TEST(Parse, PrintRoundTripOverRandomPrograms) {
    for (unsigned seed = 0; seed < 200; ++seed) {
        RandomProgram gen(seed);
        const auto src = gen.generate(10);
        auto a = parse_source(src);
        auto printed = print(*a.root);
        auto b = parse_source(printed);
        ASSERT_TRUE(structurally_equal(*a.root, *b.root)) << src << "\n---\n" << printed;
        EXPECT_EQ(print(*b.root), printed);
    }
}

TEST(Parse, PrintKeepsParenthesesAndOperators) {
    const std::string src =
        "char *g(char *p, int n[]) {\n    int k = (n[0] + 1) * -2;\n    if (!(k < 0) && p == 0)\n        return p;\n"
        "    else if (k)\n        k += 3;\n    else {\n        k--;\n    }\n    for (;;) {\n    }\n    return 0;\n}\n";
    auto a = parse_source(src);
    EXPECT_EQ(print(*a.root), src);
}

TEST(Cfg, StraightLineThreeStatements) {
    auto g = cpg_of("int f(){int a = 1; a = 2; g(a);}");
    EXPECT_EQ(of_kind(g, EdgeKind::CFG).size(), 2u);
}

TEST(Cfg, IfElseForkAndJoin) {
    auto g = cpg_of("int f(int x){if (x) { a = 1; } else { b = 2; } return 0;}");
    const int if_id = first_of(g, NodeKind::If);
    const int a = first_of(g, NodeKind::Assign, 0);
    const int b = first_of(g, NodeKind::Assign, 1);
    const int ret = first_of(g, NodeKind::Return);
    // Reference: fork to both branches, both branches join at the return.
    std::vector<CpgEdge> expected = {{if_id, a, EdgeKind::CFG}, {if_id, b, EdgeKind::CFG},
                                     {a, ret, EdgeKind::CFG},   {b, ret, EdgeKind::CFG}};
    std::sort(expected.begin(), expected.end());
    EXPECT_EQ(of_kind(g, EdgeKind::CFG), expected);
}

TEST(Cfg, LoneReturnHasNoEdges) {
    auto g = cpg_of("int f(int x){return x;}");
    EXPECT_TRUE(of_kind(g, EdgeKind::CFG).empty());
}

TEST(Cfg, LoopsHaveBackAndExitEdges) {
    auto g = cpg_of("int f(int n){int i = 0; while (i < n) { i = i + 1; } for (int j = 0; j < n; j++) { g(j); } return i;}");
    const int decl_i = first_of(g, NodeKind::Decl, 0);
    const int w = first_of(g, NodeKind::While);
    const int body = first_of(g, NodeKind::Assign, 0);
    const int init = first_of(g, NodeKind::Decl, 1);
    const int f = first_of(g, NodeKind::For);
    const int step = first_of(g, NodeKind::Assign, 1);
    const int call = first_of(g, NodeKind::Call);
    const int ret = first_of(g, NodeKind::Return);
    std::vector<CpgEdge> expected = {{decl_i, w, EdgeKind::CFG}, {w, body, EdgeKind::CFG},   {body, w, EdgeKind::CFG},
                                     {w, init, EdgeKind::CFG},   {init, f, EdgeKind::CFG},   {f, call, EdgeKind::CFG},
                                     {call, step, EdgeKind::CFG}, {step, f, EdgeKind::CFG},  {f, ret, EdgeKind::CFG}};
    std::sort(expected.begin(), expected.end());
    EXPECT_EQ(of_kind(g, EdgeKind::CFG), expected);
}

TEST(Dfg, DeclToReturn) {
    auto g = cpg_of("int f(){int a = 1; return a;}");
    auto dfg = of_kind(g, EdgeKind::DFG);
    ASSERT_EQ(dfg.size(), 1u);
    EXPECT_EQ(g.nodes[dfg[0].src].kind, NodeKind::Decl);
    EXPECT_EQ(g.nodes[dfg[0].dst].kind, NodeKind::Return);
}

TEST(Dfg, SecondAssignmentKillsFirst) {
    auto g = cpg_of("int f(){a = 1; a = 2; return a;}");
    const int ret = first_of(g, NodeKind::Return);
    const int second = first_of(g, NodeKind::Assign, 1);
    std::vector<CpgEdge> into_return;
    for (auto& e : of_kind(g, EdgeKind::DFG))
        if (e.dst == ret) into_return.push_back(e);
    ASSERT_EQ(into_return.size(), 1u);
    EXPECT_EQ(into_return[0].src, second);
}

TEST(Dfg, ParamFlowsIntoCondition) {
    auto g = cpg_of("int f(int x){if (x > 0) return 1; return 0;}");
    const int param = first_of(g, NodeKind::Param);
    const int cond = first_of(g, NodeKind::If);
    auto dfg = of_kind(g, EdgeKind::DFG);
    EXPECT_NE(std::find(dfg.begin(), dfg.end(), CpgEdge{param, cond, EdgeKind::DFG}), dfg.end());
}

TEST(Dfg, MatchesBruteForceOracleOnRandomPrograms) {
    for (unsigned seed = 0; seed < 300; ++seed) {
        RandomProgram gen(seed + 1000);
        const auto src = gen.generate(10);
        auto ast = parse_source(src);
        auto cfg = build_cfg(ast);
        auto dfg = build_dfg(ast, cfg);
        auto oracle = brute_force_dfg(ast, cfg);
        ASSERT_EQ(std::set<CpgEdge>(dfg.begin(), dfg.end()), oracle) << src;
    }
}

TEST(Cpg, GuardedScreenFunction) {
    const std::string src =
        "int validScreen(int screen) {\n"
        "    if (screen < 0 || screen >= 16)\n"
        "        return 0;\n"
        "    return 1;\n"
        "}\n";
    auto g = cpg_of(src);
    EXPECT_EQ(count_kind(g, NodeKind::Function), 1);
    EXPECT_GE(count_kind(g, NodeKind::If), 1);
    EXPECT_GE(count_kind(g, NodeKind::Return), 2);
    EXPECT_EQ(check_invariants(g), "");
    EXPECT_EQ(of_kind(g, EdgeKind::AST).size(), g.nodes.size() - 1);
}

TEST(Cpg, EmptyBody) {
    auto g = cpg_of("void f(){}");
    ASSERT_EQ(g.nodes.size(), 2u);
    EXPECT_EQ(g.nodes[0].kind, NodeKind::Function);
    EXPECT_EQ(g.nodes[1].kind, NodeKind::Block);
    EXPECT_TRUE(of_kind(g, EdgeKind::CFG).empty());
    EXPECT_TRUE(of_kind(g, EdgeKind::DFG).empty());
}

TEST(Cpg, UnparsableSourceThrows) {
    EXPECT_THROW(cpg_of("int f( {"), ParseError);
    EXPECT_THROW(cpg_of("int f() { x = $; }"), LexError);
}

TEST(Cpg, CalleeIsFirstToken) {
    auto g = cpg_of("int f(char *d){strcpy(d, \"x\"); return 0;}");
    const auto& call = g.nodes[first_of(g, NodeKind::Call)];
    EXPECT_EQ(call.tokens.front(), "strcpy");
    EXPECT_EQ(call.code, "strcpy ( d , \"x\" )");
}

TEST(Cpg, InvariantsHoldOnRandomPrograms) {
    for (unsigned seed = 0; seed < 200; ++seed) {
        RandomProgram gen(seed + 5000);
        auto src = gen.generate(12);
        auto ast = parse_source(src);
        auto g = assemble_cpg(ast, SourceFunction{"r", src});
        ASSERT_EQ(check_invariants(g), "") << src;
        EXPECT_EQ(of_kind(g, EdgeKind::AST).size(), g.nodes.size() - 1);

        // Every non-Return statement reaches a successor unless it falls off
        // the end of the function.
        auto order = number_nodes(*ast.root);
        std::set<int> has_succ;
        for (auto& e : of_kind(g, EdgeKind::CFG)) has_succ.insert(e.src);
        // Statements whose fallthrough is the function end: trailing
        // statements of the body (and nested tails of trailing if/else).
        std::set<const AstNode*> tails;
        std::function<void(const AstNode&)> mark_tail = [&](const AstNode& s) {
            if (s.kind == NodeKind::Block) {
                if (!s.children.empty()) mark_tail(*s.children.back());
                return;
            }
            tails.insert(&s);
            if (s.kind == NodeKind::If) {
                mark_tail(*s.child(1));
                if (s.if_else()) mark_tail(*s.if_else());
            }
        };
        mark_tail(*ast.root->function_body());
        for (std::size_t i = 0; i < order.size(); ++i) {
            const AstNode& s = *order[i];
            if (!s.statement || s.kind == NodeKind::Return) continue;
            if (tails.count(&s) && s.kind != NodeKind::While && s.kind != NodeKind::For) continue;
            EXPECT_TRUE(has_succ.count(static_cast<int>(i))) << "node " << i << " in\n" << src;
        }
    }
}

TEST(Serialize, RoundTripAndDeterminism) {
    for (unsigned seed = 0; seed < 50; ++seed) {
        RandomProgram gen(seed + 9000);
        auto src = gen.generate(8);
        auto g = cpg_of(src);
        g.label = seed % 2 ? Label::Vulnerable : Label::Benign;
        auto text = serialize_cpg(g);
        EXPECT_EQ(deserialize_cpg(text), g);
        EXPECT_EQ(serialize_cpg(deserialize_cpg(text)), text);
    }
}

TEST(Serialize, TruncatedFileIsFormatError) {
    auto text = serialize_cpg(cpg_of("int f(int a){return a;}"));
    EXPECT_THROW(deserialize_cpg(text.substr(0, text.size() / 2)), FormatError);
}

TEST(Serialize, EdgeToMissingNodeIsFormatError) {
    auto g = cpg_of("int f(int a){return a;}");
    g.edges.push_back({0, 99, EdgeKind::AST});
    auto text = serialize_cpg(g);
    try {
        deserialize_cpg(text);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_GT(e.line(), 1u);
        EXPECT_NE(e.field().find("edges["), std::string::npos);
    }
}

TEST(Induced, RedensifiesIds) {
    auto g = cpg_of("int f(int a){int b = a; return b;}");
    std::vector<int> keep = {0, 2, 3};
    auto sub = induced_subgraph(g, keep);
    ASSERT_EQ(sub.nodes.size(), 3u);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(sub.nodes[i].id, i);
    for (auto& e : sub.edges) {
        EXPECT_LT(e.src, 3);
        EXPECT_LT(e.dst, 3);
    }
}
