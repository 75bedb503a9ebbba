#include "vision/cpg/cpg.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace vision::cpg {

using nlohmann::ordered_json;

std::string_view to_string(EdgeKind kind) {
    switch (kind) {
        case EdgeKind::AST: return "AST";
        case EdgeKind::CFG: return "CFG";
        case EdgeKind::DFG: return "DFG";
    }
    return "AST";
}

namespace {

EdgeKind parse_edge_kind(std::string_view s, std::size_t line, const std::string& field) {
    if (s == "AST") return EdgeKind::AST;
    if (s == "CFG") return EdgeKind::CFG;
    if (s == "DFG") return EdgeKind::DFG;
    throw FormatError(line, field, "unknown edge kind '" + std::string(s) + "'");
}

struct Numbering {
    std::vector<const AstNode*> order;
    std::map<const AstNode*, int> id;
};

Numbering make_numbering(const AstNode& root) {
    Numbering n;
    n.order = number_nodes(root);
    for (std::size_t i = 0; i < n.order.size(); ++i) n.id[n.order[i]] = static_cast<int>(i);
    return n;
}

void collect_identifiers(const AstNode& e, std::vector<std::string>& out) {
    if (e.kind == NodeKind::Identifier) out.push_back(e.op);
    for (const auto& c : e.children) collect_identifiers(*c, out);
}

// Base variable written through an lvalue, and whether the write is strong.
const AstNode* lvalue_base(const AstNode& lhs, bool& strong) {
    if (lhs.kind == NodeKind::Identifier) {
        strong = true;
        return &lhs;
    }
    strong = false;
    const AstNode* cur = &lhs;
    while (cur->kind == NodeKind::Index || (cur->kind == NodeKind::UnaryOp && cur->op == "*"))
        cur = cur->child(0);
    return cur->kind == NodeKind::Identifier ? cur : nullptr;
}

void expr_def_use(const AstNode& e, DefUse& du) {
    if (e.kind == NodeKind::Assign) {
        const AstNode& lhs = *e.child(0);
        bool strong = false;
        const AstNode* base = lvalue_base(lhs, strong);
        const bool reads_target = e.children.size() == 1 || e.op != "=";
        if (lhs.kind == NodeKind::Identifier) {
            if (reads_target) du.uses.push_back(lhs.op);
        } else {
            // Address computation reads the base and every index.
            collect_identifiers(lhs, du.uses);
        }
        if (base) (strong ? du.strong_defs : du.weak_defs).push_back(base->op);
        if (e.children.size() > 1) expr_def_use(*e.child(1), du);
        return;
    }
    if (e.kind == NodeKind::UnaryOp && (e.op == "++" || e.op == "--")) {
        bool strong = false;
        const AstNode* base = lvalue_base(*e.child(0), strong);
        collect_identifiers(*e.child(0), du.uses);
        if (base) (strong ? du.strong_defs : du.weak_defs).push_back(base->op);
        return;
    }
    if (e.kind == NodeKind::Identifier) {
        du.uses.push_back(e.op);
        return;
    }
    for (const auto& c : e.children) expr_def_use(*c, du);
}

void dedupe(std::vector<std::string>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

class CfgBuilder {
public:
    explicit CfgBuilder(const Numbering& n) : num_(n) {}

    std::set<CpgEdge> edges;
    std::vector<int> entry;

    // Connects `preds` to the entry of `s`; returns the dangling exits.
    std::vector<int> flow(const AstNode& s, std::vector<int> preds) {
        switch (s.kind) {
            case NodeKind::Block:
                for (const auto& c : s.children) preds = flow(*c, std::move(preds));
                return preds;
            case NodeKind::Decl:
            case NodeKind::Assign:
            case NodeKind::Call: {
                const int id = connect(preds, s);
                return {id};
            }
            case NodeKind::Return:
                connect(preds, s);
                return {};
            case NodeKind::If: {
                const int id = connect(preds, s);
                auto out = flow(*s.child(1), {id});
                auto other = s.if_else() ? flow(*s.if_else(), {id}) : std::vector<int>{id};
                out.insert(out.end(), other.begin(), other.end());
                std::sort(out.begin(), out.end());
                out.erase(std::unique(out.begin(), out.end()), out.end());
                return out;
            }
            case NodeKind::While: {
                const int id = connect(preds, s);
                auto body_exits = flow(*s.children.back(), {id});
                link(body_exits, id);
                return {id};
            }
            case NodeKind::For: {
                if (auto* init = s.for_init()) preds = {connect(preds, *init)};
                const int id = connect(preds, s);
                auto body_exits = flow(*s.for_body(), {id});
                if (auto* step = s.for_step()) {
                    const int step_id = connect(body_exits, *step);
                    link({step_id}, id);
                } else {
                    link(body_exits, id);
                }
                return {id};
            }
            default: return preds;
        }
    }

private:
    const Numbering& num_;

    int connect(const std::vector<int>& preds, const AstNode& s) {
        const int id = num_.id.at(&s);
        for (int p : preds) {
            if (p < 0)
                entry.push_back(id);
            else
                edges.insert({p, id, EdgeKind::CFG});
        }
        return id;
    }
    void link(const std::vector<int>& preds, int target) {
        for (int p : preds) {
            if (p < 0)
                entry.push_back(target);
            else
                edges.insert({p, target, EdgeKind::CFG});
        }
    }
};

std::string collapse_ws(std::string_view s) {
    std::string out;
    bool space = false;
    for (char c : s) {
        if (c == ' ' || c == '\n' || c == '\t' || c == '\r') {
            space = true;
            continue;
        }
        if (space && !out.empty()) out += ' ';
        space = false;
        out += c;
    }
    return out;
}

std::string snippet(const Ast& ast, std::size_t begin, std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        if (i > begin) out += ' ';
        out += ast.tokens[i].lexeme;
    }
    return collapse_ws(out);
}

// Line number of each object element of the "nodes"/"edges" arrays, in order.
struct ElementLines {
    std::vector<std::size_t> nodes, edges;
};

ElementLines scan_element_lines(std::string_view text) {
    ElementLines out;
    std::size_t line = 1;
    int depth = 0;
    bool in_string = false;
    std::string last_key, current;
    std::string_view active;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '\n') ++line;
        if (in_string) {
            if (c == '\\') {
                ++i;
                continue;
            }
            if (c == '"') {
                in_string = false;
                if (depth == 1) last_key = current;
            } else {
                current += c;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
            current.clear();
        } else if (c == '{' || c == '[') {
            if (depth == 1 && c == '[') active = last_key == "nodes" ? "nodes" : last_key == "edges" ? "edges" : "";
            if (depth == 2 && c == '{') {
                if (active == "nodes") out.nodes.push_back(line);
                if (active == "edges") out.edges.push_back(line);
            }
            ++depth;
        } else if (c == '}' || c == ']') {
            --depth;
        }
    }
    return out;
}

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n'));
}

}  // namespace

std::vector<const AstNode*> number_nodes(const AstNode& root) {
    std::vector<const AstNode*> out;
    std::function<void(const AstNode&)> visit = [&](const AstNode& n) {
        out.push_back(&n);
        for (const auto& c : n.children) visit(*c);
    };
    visit(root);
    return out;
}

std::vector<CpgEdge> build_ast_edges(const Ast& ast) {
    auto num = make_numbering(*ast.root);
    std::vector<CpgEdge> out;
    for (const AstNode* n : num.order)
        for (const auto& c : n->children) out.push_back({num.id.at(n), num.id.at(c.get()), EdgeKind::AST});
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<CpgEdge> build_cfg(const Ast& ast) {
    auto num = make_numbering(*ast.root);
    CfgBuilder b(num);
    b.flow(*ast.root->function_body(), {-1});
    return {b.edges.begin(), b.edges.end()};
}

std::vector<int> cfg_entry_nodes(const Ast& ast) {
    auto num = make_numbering(*ast.root);
    CfgBuilder b(num);
    b.flow(*ast.root->function_body(), {-1});
    std::sort(b.entry.begin(), b.entry.end());
    b.entry.erase(std::unique(b.entry.begin(), b.entry.end()), b.entry.end());
    return b.entry;
}

DefUse statement_def_use(const AstNode& s) {
    DefUse du;
    switch (s.kind) {
        case NodeKind::Decl:
            if (!s.children.empty()) expr_def_use(*s.child(0), du);
            du.strong_defs.push_back(s.name);
            break;
        case NodeKind::Assign:
        case NodeKind::Call: expr_def_use(s, du); break;
        case NodeKind::If:
        case NodeKind::While: expr_def_use(*s.child(0), du); break;
        case NodeKind::For:
            if (auto* c = s.for_cond()) expr_def_use(*c, du);
            break;
        case NodeKind::Return:
            if (!s.children.empty()) expr_def_use(*s.child(0), du);
            break;
        default: break;
    }
    dedupe(du.uses);
    dedupe(du.strong_defs);
    dedupe(du.weak_defs);
    return du;
}

std::vector<CpgEdge> build_dfg(const Ast& ast, std::span<const CpgEdge> cfg) {
    auto num = make_numbering(*ast.root);
    const int n = static_cast<int>(num.order.size());

    // A definition is (defining node, variable).
    using Def = std::pair<int, std::string>;
    std::vector<std::vector<int>> preds(n);
    std::vector<bool> in_cfg(n, false);
    for (const auto& e : cfg) {
        if (e.kind != EdgeKind::CFG) continue;
        preds[e.dst].push_back(e.src);
        in_cfg[e.src] = in_cfg[e.dst] = true;
    }
    const auto entry = cfg_entry_nodes(ast);
    for (int id : entry) in_cfg[id] = true;

    std::set<Def> entry_defs;
    for (const auto& c : ast.root->children)
        if (c->kind == NodeKind::Param) entry_defs.insert({num.id.at(c.get()), c->name});

    std::vector<DefUse> du(n);
    for (int i = 0; i < n; ++i)
        if (in_cfg[i]) du[i] = statement_def_use(*num.order[i]);

    std::vector<std::set<Def>> in(n), out(n);
    std::vector<bool> is_entry(n, false);
    for (int id : entry) is_entry[id] = true;

    auto transfer = [&](int i, const std::set<Def>& input) {
        std::set<Def> result;
        for (const auto& d : input)
            if (!std::binary_search(du[i].strong_defs.begin(), du[i].strong_defs.end(), d.second)) result.insert(d);
        for (const auto& v : du[i].strong_defs) result.insert({i, v});
        for (const auto& v : du[i].weak_defs) result.insert({i, v});
        return result;
    };

    bool changed = true;
    while (changed) {
        changed = false;
        for (int i = 0; i < n; ++i) {
            if (!in_cfg[i]) continue;
            std::set<Def> new_in = is_entry[i] ? entry_defs : std::set<Def>{};
            for (int p : preds[i]) new_in.insert(out[p].begin(), out[p].end());
            auto new_out = transfer(i, new_in);
            if (new_in != in[i] || new_out != out[i]) {
                in[i] = std::move(new_in);
                out[i] = std::move(new_out);
                changed = true;
            }
        }
    }

    std::set<CpgEdge> edges;
    for (int i = 0; i < n; ++i) {
        if (!in_cfg[i]) continue;
        for (const auto& [def_node, var] : in[i])
            if (std::binary_search(du[i].uses.begin(), du[i].uses.end(), var))
                edges.insert({def_node, i, EdgeKind::DFG});
    }
    return {edges.begin(), edges.end()};
}

std::vector<CpgNode> build_nodes(const Ast& ast) {
    auto order = number_nodes(*ast.root);
    std::vector<CpgNode> nodes;
    nodes.reserve(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        const AstNode& a = *order[i];
        CpgNode node;
        node.id = static_cast<int>(i);
        node.kind = a.kind;
        node.line = a.line;
        if (a.kind == NodeKind::Block) {
            node.code = "{ }";
        } else {
            node.code = snippet(ast, a.tok_begin, a.tok_end);
            for (std::size_t t = a.tok_begin; t < a.tok_end; ++t) node.tokens.push_back(normalize_token(ast.tokens[t]));
        }
        nodes.push_back(std::move(node));
    }
    return nodes;
}

CodePropertyGraph assemble_cpg(const Ast& ast, const SourceFunction& fn) {
    CodePropertyGraph g;
    g.function_id = fn.id;
    g.label = fn.label;
    g.provenance = fn.provenance;
    g.nodes = build_nodes(ast);
    auto ast_edges = build_ast_edges(ast);
    auto cfg = build_cfg(ast);
    auto dfg = build_dfg(ast, cfg);
    g.edges = std::move(ast_edges);
    g.edges.insert(g.edges.end(), cfg.begin(), cfg.end());
    g.edges.insert(g.edges.end(), dfg.begin(), dfg.end());
    std::sort(g.edges.begin(), g.edges.end());
    return g;
}

CodePropertyGraph assemble_cpg(const SourceFunction& fn) { return assemble_cpg(parse_source(fn.source), fn); }

std::vector<SourceSpan> node_spans(const Ast& ast, std::string_view source) {
    auto order = number_nodes(*ast.root);
    std::vector<SourceSpan> spans;
    spans.reserve(order.size());
    for (const AstNode* a : order) {
        SourceSpan s;
        if (a->full_end > a->full_begin) {
            const Token& first = ast.tokens[a->full_begin];
            const Token& last = ast.tokens[a->full_end - 1];
            s.begin = first.offset;
            s.end = last.offset + last.lexeme.size();
            s.line_begin = first.line;
            s.line_end = last.line;
        } else {
            s.line_begin = s.line_end = a->line;
            const std::size_t at = a->full_begin < ast.tokens.size() ? ast.tokens[a->full_begin].offset : source.size();
            s.begin = s.end = at;
        }
        spans.push_back(s);
    }
    return spans;
}

std::string check_invariants(const CodePropertyGraph& g) {
    const int n = static_cast<int>(g.nodes.size());
    if (n == 0) return "graph has no nodes";
    for (int i = 0; i < n; ++i) {
        const auto& node = g.nodes[i];
        if (node.id != i) return "node ids are not contiguous at position " + std::to_string(i);
        if ((node.kind == NodeKind::Function) != (i == 0)) return "Function node must be exactly node 0";
        if (node.kind != NodeKind::Block && node.tokens.empty())
            return "node " + std::to_string(i) + " has no tokens";
        if (node.line < 1) return "node " + std::to_string(i) + " has line < 1";
    }
    std::set<CpgEdge> seen;
    std::vector<int> ast_parents(n, 0);
    for (const auto& e : g.edges) {
        if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n) return "edge references a missing node";
        if (!seen.insert(e).second) return "duplicate edge";
        if (e.kind == EdgeKind::AST) ++ast_parents[e.dst];
        if (e.kind == EdgeKind::CFG &&
            (!is_statement_kind(g.nodes[e.src].kind) || !is_statement_kind(g.nodes[e.dst].kind)))
            return "CFG edge between non-statement nodes";
        if (e.kind == EdgeKind::CFG && g.nodes[e.src].kind == NodeKind::Return) return "CFG edge out of Return";
    }
    if (ast_parents[0] != 0) return "root has an AST parent";
    for (int i = 1; i < n; ++i)
        if (ast_parents[i] != 1) return "node " + std::to_string(i) + " does not have exactly one AST parent";
    return {};
}

std::string serialize_cpg(const CodePropertyGraph& g) {
    std::vector<CpgEdge> edges = g.edges;
    std::sort(edges.begin(), edges.end());
    std::vector<const CpgNode*> nodes;
    for (const auto& n : g.nodes) nodes.push_back(&n);
    std::sort(nodes.begin(), nodes.end(), [](auto* a, auto* b) { return a->id < b->id; });

    std::ostringstream os;
    os << "{\n";
    os << "  \"function_id\": " << ordered_json(g.function_id).dump() << ",\n";
    os << "  \"label\": " << ordered_json(std::string(vision::to_string(g.label))).dump() << ",\n";
    os << "  \"provenance\": " << ordered_json(std::string(vision::to_string(g.provenance))).dump() << ",\n";
    os << "  \"nodes\": [";
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        ordered_json j;
        j["id"] = nodes[i]->id;
        j["kind"] = std::string(to_string(nodes[i]->kind));
        j["code"] = nodes[i]->code;
        j["line"] = nodes[i]->line;
        j["tokens"] = nodes[i]->tokens;
        os << (i ? ",\n    " : "\n    ") << j.dump();
    }
    os << (nodes.empty() ? "],\n" : "\n  ],\n");
    os << "  \"edges\": [";
    for (std::size_t i = 0; i < edges.size(); ++i) {
        ordered_json j;
        j["src"] = edges[i].src;
        j["dst"] = edges[i].dst;
        j["kind"] = std::string(to_string(edges[i].kind));
        os << (i ? ",\n    " : "\n    ") << j.dump();
    }
    os << (edges.empty() ? "]\n" : "\n  ]\n");
    os << "}\n";
    return os.str();
}

CodePropertyGraph deserialize_cpg(std::string_view text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0), "json", e.what());
    }
    const auto lines = scan_element_lines(text);
    auto need = [&](const ordered_json& obj, const char* key, std::size_t line, const std::string& path) -> const ordered_json& {
        if (!obj.is_object() || !obj.contains(key)) throw FormatError(line, path + key, "missing field");
        return obj.at(key);
    };
    CodePropertyGraph g;
    try {
        if (!doc.is_object()) throw FormatError(1, "document", "expected an object");
        g.function_id = need(doc, "function_id", 1, "").get<std::string>();
        g.label = parse_label(need(doc, "label", 1, "").get<std::string>());
        g.provenance = parse_provenance(need(doc, "provenance", 1, "").get<std::string>());
        const auto& nodes = need(doc, "nodes", 1, "");
        const auto& edges = need(doc, "edges", 1, "");
        if (!nodes.is_array()) throw FormatError(1, "nodes", "expected an array");
        if (!edges.is_array()) throw FormatError(1, "edges", "expected an array");
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const std::size_t line = i < lines.nodes.size() ? lines.nodes[i] : 0;
            const std::string path = "nodes[" + std::to_string(i) + "].";
            const auto& j = nodes[i];
            CpgNode n;
            n.id = need(j, "id", line, path).get<int>();
            const auto kind_text = need(j, "kind", line, path).get<std::string>();
            auto kind = parse_node_kind(kind_text);
            if (!kind) throw FormatError(line, path + "kind", "unknown node kind '" + kind_text + "'");
            n.kind = *kind;
            n.code = need(j, "code", line, path).get<std::string>();
            n.line = need(j, "line", line, path).get<int>();
            n.tokens = need(j, "tokens", line, path).get<std::vector<std::string>>();
            if (n.id != static_cast<int>(i)) throw FormatError(line, path + "id", "node ids must be sorted and dense");
            g.nodes.push_back(std::move(n));
        }
        for (std::size_t i = 0; i < edges.size(); ++i) {
            const std::size_t line = i < lines.edges.size() ? lines.edges[i] : 0;
            const std::string path = "edges[" + std::to_string(i) + "].";
            const auto& j = edges[i];
            CpgEdge e;
            e.src = need(j, "src", line, path).get<int>();
            e.dst = need(j, "dst", line, path).get<int>();
            e.kind = parse_edge_kind(need(j, "kind", line, path).get<std::string>(), line, path + "kind");
            const int n = static_cast<int>(g.nodes.size());
            if (e.src < 0 || e.src >= n) throw FormatError(line, path + "src", "edge references a missing node");
            if (e.dst < 0 || e.dst >= n) throw FormatError(line, path + "dst", "edge references a missing node");
            g.edges.push_back(e);
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(0, "type", e.what());
    } catch (const FormatError&) {
        throw;
    } catch (const Error& e) {
        throw FormatError(1, "header", e.what());
    }
    std::sort(g.edges.begin(), g.edges.end());
    if (std::adjacent_find(g.edges.begin(), g.edges.end()) != g.edges.end())
        throw FormatError(0, "edges", "duplicate edge");
    return g;
}

CodePropertyGraph induced_subgraph(const CodePropertyGraph& g, std::span<const int> keep) {
    CodePropertyGraph sub;
    sub.function_id = g.function_id;
    sub.label = g.label;
    sub.provenance = g.provenance;
    std::vector<int> remap(g.nodes.size(), -1);
    for (std::size_t i = 0; i < keep.size(); ++i) {
        remap[keep[i]] = static_cast<int>(i);
        CpgNode n = g.nodes[keep[i]];
        n.id = static_cast<int>(i);
        sub.nodes.push_back(std::move(n));
    }
    for (const auto& e : g.edges)
        if (remap[e.src] >= 0 && remap[e.dst] >= 0) sub.edges.push_back({remap[e.src], remap[e.dst], e.kind});
    std::sort(sub.edges.begin(), sub.edges.end());
    return sub;
}

}  // namespace vision::cpg
