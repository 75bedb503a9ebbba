#include "vision/service/service.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>

#include <httplib.h>

#include "vision/bench/dataset.hpp"

namespace vision::service {

using nlohmann::json;

namespace {

HttpError bad_request(const std::string& message) { return HttpError(400, "BadRequest", message); }

Provenance parse_provenance_param(const std::string& text) {
    if (text.empty()) return Provenance::Original;
    try {
        const auto p = parse_provenance(text);
        if (p == Provenance::Upsampled) throw bad_request("provenance must be Original or Counterfactual");
        return p;
    } catch (const HttpError&) {
        throw;
    } catch (const Error& e) {
        throw bad_request(e.what());
    }
}

int parse_int_param(const std::map<std::string, std::string>& q, const std::string& key, int fallback) {
    auto it = q.find(key);
    if (it == q.end() || it->second.empty()) return fallback;
    try {
        std::size_t used = 0;
        const int v = std::stoi(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        throw bad_request(key + " must be an integer");
    }
}

std::string cache_name(const char* kind, const std::string& id, Provenance prov, const std::string& extra = {}) {
    // Ids are user data; hash them into a safe file name.
    return std::string(kind) + "_" + hex64(fnv1a64(id)) + "_" + std::string(to_string(prov)) +
           (extra.empty() ? "" : "_" + extra) + ".json";
}

json explainer_meta(const explain::ExplainerConfig& c) {
    return {{"iterations", c.iterations}, {"lambda", c.lambda}, {"beta", c.beta}, {"lr", c.lr}, {"seed", c.seed}};
}

}  // namespace

void ServiceConfig::validate() const {
    std::string problems;
    if (checkpoint.empty()) problems += " checkpoint path is required;";
    if (manifests.empty()) problems += " at least one manifest is required;";
    if (port < 0 || port > 65535) problems += " port must be in 0..65535;";
    if (default_page_size < 1 || default_page_size > max_page_size) problems += " default_page_size must be in 1..max_page_size;";
    try {
        explainer.validate();
    } catch (const ConfigError& e) {
        problems += std::string(" ") + e.what() + ";";
    }
    if (!problems.empty()) throw ConfigError("invalid service config:" + problems);
}

struct Inspector::Entry {
    std::string split;
    SourceFunction fn;
    cpg::CodePropertyGraph graph;
    ggnn::GraphInput input;
    ggnn::Prediction prediction;
};

Inspector::Inspector(const ServiceConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const auto checkpoint_text = bench::read_file(cfg_.checkpoint);
    model_ = ggnn::deserialize_checkpoint(checkpoint_text);
    checkpoint_id_ = hex64(fnv1a64(checkpoint_text));
    std::string manifest_text;
    for (const auto& m : cfg_.manifests) {
        manifest_text += m.split + "\n" + bench::read_file(m.path);
        for (auto& fn : bench::read_dataset(m.path)) {
            auto e = std::make_unique<Entry>();
            e->split = m.split;
            e->fn = std::move(fn);
            entries_.push_back(std::move(e));
        }
    }
    manifest_id_ = hex64(fnv1a64(manifest_text));
    if (!cfg_.metrics.empty()) {
        const auto text = bench::read_file(cfg_.metrics);
        std::size_t pos = 0;
        while (pos < text.size()) {
            auto end = text.find('\n', pos);
            if (end == std::string::npos) end = text.size();
            const auto line = text.substr(pos, end - pos);
            pos = end + 1;
            if (line.find_first_not_of(" \t\r") != std::string::npos) reports_.push_back(metrics::report_from_json(line));
        }
    }
    index();
}

Inspector::Inspector(ggnn::TrainedModel model, std::vector<std::pair<std::string, SourceFunction>> functions,
                     std::vector<metrics::MetricsReport> reports, ServiceConfig cfg)
    : cfg_(std::move(cfg)), model_(std::move(model)), reports_(std::move(reports)) {
    cfg_.explainer.validate();
    checkpoint_id_ = hex64(fnv1a64(ggnn::serialize_checkpoint(model_)));
    std::string all;
    for (auto& [split, fn] : functions) {
        all += split + "\n" + fn.id + "\n" + fn.source + "\n";
        auto e = std::make_unique<Entry>();
        e->split = split;
        e->fn = std::move(fn);
        entries_.push_back(std::move(e));
    }
    manifest_id_ = hex64(fnv1a64(all));
    index();
}

Inspector::~Inspector() = default;

void Inspector::index() {
    std::sort(entries_.begin(), entries_.end(), [](const auto& a, const auto& b) {
        return std::tie(a->fn.id, a->fn.provenance) < std::tie(b->fn.id, b->fn.provenance);
    });
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        auto& e = *entries_[i];
        if (e.fn.provenance == Provenance::Upsampled)
            throw ConfigError("manifest record '" + e.fn.id + "' is Upsampled; load a dataset manifest instead");
        if (i > 0 && entries_[i - 1]->fn.id == e.fn.id && entries_[i - 1]->fn.provenance == e.fn.provenance)
            throw ConfigError("duplicate function '" + e.fn.id + "' (" + std::string(to_string(e.fn.provenance)) + ")");
        e.graph = cpg::assemble_cpg(e.fn);
        e.input = model_.input(e.graph);
        e.prediction = ggnn::predict(model_.params, e.input);
    }
    if (!cfg_.cache_dir.empty()) {
        // Cached results only hold for this checkpoint and explainer setup.
        cfg_.cache_dir /= checkpoint_id_ + "-" + hex64(fnv1a64(explainer_meta(cfg_.explainer).dump()));
        std::filesystem::create_directories(cfg_.cache_dir);
    }
}

const Inspector::Entry& Inspector::find(const std::string& id, const std::string& provenance) const {
    const auto prov = parse_provenance_param(provenance);
    auto it = std::lower_bound(entries_.begin(), entries_.end(), std::tie(id, prov), [](const auto& e, const auto& key) {
        return std::tie(e->fn.id, e->fn.provenance) < key;
    });
    if (it == entries_.end() || (*it)->fn.id != id || (*it)->fn.provenance != prov)
        throw HttpError(404, "UnknownFunction", "no function '" + id + "' (" + std::string(to_string(prov)) + ")");
    return **it;
}

std::optional<std::string> Inspector::cache_read(const std::string& name) const {
    if (cfg_.cache_dir.empty()) return std::nullopt;
    const auto path = cfg_.cache_dir / name;
    if (!std::filesystem::exists(path)) return std::nullopt;
    return bench::read_file(path);
}

void Inspector::cache_write(const std::string& name, const std::string& payload) const {
    if (!cfg_.cache_dir.empty()) bench::write_file_atomic(cfg_.cache_dir / name, payload);
}

const explain::AttributionResult& Inspector::attribution(const Entry& e) {
    const auto name = cache_name("attribution", e.fn.id, e.fn.provenance);
    {
        std::lock_guard lock(mu_);
        if (auto it = attributions_.find(name); it != attributions_.end()) return *it->second;
    }
    std::shared_ptr<explain::AttributionResult> result;
    if (auto text = cache_read(name)) {
        result = std::make_shared<explain::AttributionResult>(explain::attribution_from_json(*text));
    } else {
        result = std::make_shared<explain::AttributionResult>(
            explain::attribute(model_.params, e.input, cfg_.explainer, e.fn.id));
        cache_write(name, explain::attribution_to_json(*result));
    }
    std::lock_guard lock(mu_);
    // First writer wins so every caller sees the same immutable entry.
    return *attributions_.emplace(name, std::move(result)).first->second;
}

json Inspector::health() const {
    return {{"status", "ok"},
            {"checkpoint_id", checkpoint_id_},
            {"manifest_id", manifest_id_},
            {"functions", entries_.size()},
            {"reports", reports_.size()}};
}

json Inspector::list_functions(const std::map<std::string, std::string>& q) const {
    std::optional<Label> label;
    std::optional<Provenance> prov;
    std::string split;
    for (const auto& [key, value] : q) {
        if (value.empty()) continue;
        if (key == "label") {
            try {
                label = parse_label(value);
            } catch (const Error& e) {
                throw bad_request(e.what());
            }
        } else if (key == "provenance") {
            prov = parse_provenance_param(value);
        } else if (key == "split") {
            split = value;
        } else if (key != "page" && key != "page_size") {
            throw bad_request("unknown query parameter '" + key + "'");
        }
    }
    const int page = parse_int_param(q, "page", 0);
    const int page_size = parse_int_param(q, "page_size", cfg_.default_page_size);
    if (page < 0) throw bad_request("page must be >= 0");
    if (page_size < 1 || page_size > cfg_.max_page_size)
        throw bad_request("page_size must be in 1.." + std::to_string(cfg_.max_page_size));

    std::vector<const Entry*> hits;
    for (const auto& e : entries_)
        if ((!label || e->fn.label == *label) && (!prov || e->fn.provenance == *prov) && (split.empty() || e->split == split))
            hits.push_back(e.get());
    json items = json::array();
    const auto first = static_cast<std::size_t>(page) * static_cast<std::size_t>(page_size);
    for (std::size_t i = first; i < hits.size() && i < first + static_cast<std::size_t>(page_size); ++i) {
        const auto& e = *hits[i];
        items.push_back({{"id", e.fn.id},
                         {"label", to_string(e.fn.label)},
                         {"provenance", to_string(e.fn.provenance)},
                         {"split", e.split},
                         {"prediction", to_string(e.prediction.label)},
                         {"confidence", e.prediction.confidence},
                         {"correct", e.prediction.label == e.fn.label}});
    }
    const auto total = hits.size();
    return {{"items", items},
            {"page", page},
            {"page_size", page_size},
            {"total", total},
            {"pages", (total + static_cast<std::size_t>(page_size) - 1) / static_cast<std::size_t>(page_size)}};
}

std::string Inspector::explanation(const std::string& id, const std::string& provenance) {
    const auto& e = find(id, provenance);
    const auto key = cache_name("explanation", e.fn.id, e.fn.provenance);
    {
        std::lock_guard lock(mu_);
        if (auto it = payloads_.find(key); it != payloads_.end()) return it->second;
    }
    const auto& a = attribution(e);
    const auto ast = cpg::parse_source(e.fn.source);
    const auto spans = cpg::node_spans(ast, e.fn.source);
    json nodes = json::array();
    for (std::size_t i = 0; i < e.graph.nodes.size(); ++i) {
        const auto& n = e.graph.nodes[i];
        const auto& s = spans[i];
        nodes.push_back({{"id", n.id},
                         {"kind", cpg::to_string(n.kind)},
                         {"code", n.code},
                         {"line", n.line},
                         {"span", {{"begin", s.begin}, {"end", s.end}, {"line_begin", s.line_begin}, {"line_end", s.line_end}}}});
    }
    json edges = json::array();
    for (const auto& ed : e.graph.edges) edges.push_back({{"src", ed.src}, {"dst", ed.dst}, {"kind", cpg::to_string(ed.kind)}});
    const json payload{{"function_id", e.fn.id},
                       {"provenance", to_string(e.fn.provenance)},
                       {"split", e.split},
                       {"label", to_string(e.fn.label)},
                       {"cwe", e.fn.cwe},
                       {"source", e.fn.source},
                       {"nodes", nodes},
                       {"edges", edges},
                       {"prediction", to_string(a.prediction)},
                       {"confidence", a.confidence},
                       {"correct", a.prediction == e.fn.label},
                       {"scores", a.scores},
                       {"explainer", explainer_meta(a.meta)}};
    auto text = payload.dump();
    std::lock_guard lock(mu_);
    return payloads_.emplace(key, std::move(text)).first->second;
}

json Inspector::subgraph(const std::string& id, const std::string& provenance, const std::string& mode) {
    if (mode != "positive" && mode != "negative" && mode != "optimal")
        throw bad_request("mode must be positive, negative or optimal");
    const auto& e = find(id, provenance);
    const auto& a = attribution(e);
    const auto order = explain::rank_nodes(a.scores);
    explain::SubgraphResult r;
    std::string flag;
    if (mode == "positive") {
        r = explain::positive_subgraph(model_.params, e.input, a.scores, e.fn.label);
        if (r.exhausted) flag = "never_recovered";
    } else if (mode == "negative") {
        r = explain::negative_subgraph(model_.params, e.input, a.scores);
        if (r.exhausted) flag = "never_flipped";
    } else {
        r = explain::optimal_subgraph(model_.params, e.input, a.scores);
    }
    json trace = json::array();
    for (std::size_t s = 0; s < r.trace.size(); ++s) {
        // The node added (positive/optimal) or removed (negative) at this step.
        json node = nullptr;
        if (mode != "negative")
            node = order[s];
        else if (s > 0)
            node = order[s - 1];
        trace.push_back({{"step", s},
                         {"node", node},
                         {"prediction", to_string(r.trace[s].label)},
                         {"confidence", r.trace[s].confidence}});
    }
    return {{"function_id", e.fn.id},
            {"provenance", to_string(e.fn.provenance)},
            {"mode", mode},
            {"order", order},
            {"nodes", r.nodes},
            {"trace", trace},
            {"exhausted", r.exhausted},
            {"flag", flag.empty() ? json(nullptr) : json(flag)},
            {"model_calls", r.model_calls},
            {"confidence", r.confidence}};
}

json Inspector::what_if(const std::string& id, const json& body) {
    if (!body.is_object()) throw bad_request("body must be a JSON object");
    const auto& e = find(id, body.value("provenance", std::string{}));
    explain::MaskingPolicy policy = cfg_.policy;
    if (body.contains("policy")) {
        try {
            policy = explain::parse_masking_policy(body.at("policy").get<std::string>());
        } catch (const std::exception& ex) {
            throw bad_request(ex.what());
        }
    }
    if (!body.contains("node_ids") || !body.at("node_ids").is_array()) throw bad_request("node_ids must be an array");
    std::vector<int> removed;
    std::set<int> seen;
    for (const auto& v : body.at("node_ids")) {
        if (!v.is_number_integer()) throw bad_request("node_ids must be integers");
        const auto i = v.get<long long>();
        if (i < 0 || i >= e.input.size()) throw bad_request("node id " + std::to_string(i) + " is out of range");
        if (!seen.insert(static_cast<int>(i)).second) throw bad_request("node id " + std::to_string(i) + " is repeated");
        removed.push_back(static_cast<int>(i));
    }
    if (static_cast<int>(removed.size()) == e.input.size()) throw bad_request("the mask removes every node");
    const auto& a = attribution(e);
    const auto w = explain::what_if_mask(model_.params, e.input, a.scores, removed, policy, cfg_.explainer);
    auto nullable = [](const std::vector<double>& xs) {
        json out = json::array();
        for (double x : xs) out.push_back(std::isnan(x) ? json(nullptr) : json(x));
        return out;
    };
    return {{"function_id", e.fn.id},
            {"provenance", to_string(e.fn.provenance)},
            {"policy", explain::to_string(policy)},
            {"masked", removed},
            {"prediction", to_string(w.prediction)},
            {"confidence", w.confidence},
            {"correct", w.prediction == e.fn.label},
            {"scores", nullable(w.scores)},
            {"delta", nullable(w.delta)}};
}

std::string Inspector::dependency(const std::string& id, const std::string& provenance, const std::string& policy_text) {
    const auto& e = find(id, provenance);
    explain::MaskingPolicy policy = cfg_.policy;
    if (!policy_text.empty()) {
        try {
            policy = explain::parse_masking_policy(policy_text);
        } catch (const Error& ex) {
            throw bad_request(ex.what());
        }
    }
    if (e.input.size() < 2) throw HttpError(422, "DegenerateGraph", explain::DegenerateGraph(e.input.size()).what());
    const auto key = cache_name("dependency", e.fn.id, e.fn.provenance, std::string(explain::to_string(policy)));
    {
        std::lock_guard lock(mu_);
        if (auto it = payloads_.find(key); it != payloads_.end()) return it->second;
    }
    std::string text;
    if (auto cached = cache_read(key)) {
        text = std::move(*cached);
    } else {
        // Rows reuse the cached attribution so M agrees with what-if calls.
        const auto& a = attribution(e);
        const int n = e.input.size();
        json m = json::array();
        for (int i = 0; i < n; ++i) {
            const auto row = explain::dependency_row(model_.params, e.input, a.scores, i, policy, cfg_.explainer);
            m.push_back(std::vector<double>(row.data(), row.data() + row.size()));
        }
        json labels = json::array();
        for (const auto& node : e.graph.nodes)
            labels.push_back(std::to_string(node.id) + ":" + std::string(cpg::to_string(node.kind)) + " " + node.code);
        text = json{{"function_id", e.fn.id},
                    {"provenance", to_string(e.fn.provenance)},
                    {"policy", explain::to_string(policy)},
                    {"n", n},
                    {"m", m},
                    {"labels", labels}}
                   .dump();
        cache_write(key, text);
    }
    std::lock_guard lock(mu_);
    return payloads_.emplace(key, std::move(text)).first->second;
}

json Inspector::metrics_list() const {
    json out = json::array();
    for (const auto& r : reports_) out.push_back(json::parse(metrics::report_to_json(r)));
    return {{"reports", out}, {"columns", metrics::report_columns()}};
}

json Inspector::metrics(const std::string& ratio) const {
    std::string tag = ratio;
    std::replace(tag.begin(), tag.end(), '_', '/');
    std::replace(tag.begin(), tag.end(), '-', '/');
    for (const auto& r : reports_)
        if (r.split == tag) return json::parse(metrics::report_to_json(r));
    throw HttpError(404, "UnknownRatio", "no metrics for ratio '" + tag + "'");
}

json Inspector::projection() {
    {
        std::lock_guard lock(mu_);
        if (projection_) return *projection_;
    }
    json points = json::array();
    double ratio = 0;
    if (!entries_.empty()) {
        Eigen::MatrixXd emb(static_cast<Eigen::Index>(entries_.size()), model_.params.cfg.c2);
        for (std::size_t i = 0; i < entries_.size(); ++i)
            emb.row(static_cast<Eigen::Index>(i)) = ggnn::forward(model_.params, entries_[i]->input).graph_embedding.transpose();
        const auto p = metrics::project_2d(emb);
        ratio = p.explained_variance_ratio;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const auto& e = *entries_[i];
            const auto r = static_cast<Eigen::Index>(i);
            points.push_back({{"function_id", e.fn.id},
                              {"provenance", to_string(e.fn.provenance)},
                              {"split", e.split},
                              {"label", to_string(e.fn.label)},
                              {"prediction", to_string(e.prediction.label)},
                              {"x", p.coords(r, 0)},
                              {"y", p.coords(r, 1)}});
        }
    }
    json out{{"points", points}, {"explained_variance_ratio", ratio}};
    std::lock_guard lock(mu_);
    if (!projection_) projection_ = out;
    return *projection_;
}

namespace {

void send_json(httplib::Response& res, const std::string& body, int status = 200) {
    res.status = status;
    res.set_content(body, "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    send_json(res, json{{"error", code}, {"message", message}, {"status", status}}.dump(), status);
}

template <typename F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const HttpError& e) {
            send_error(res, e.status(), e.code(), e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, "BadRequest", e.what());
        } catch (const FormatError& e) {
            send_error(res, 400, "BadRequest", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "InternalError", e.what());
        }
    };
}

std::map<std::string, std::string> query_map(const httplib::Request& req) {
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : req.params) out[k] = v;
    return out;
}

std::string param(const httplib::Request& req, const char* key) {
    return req.has_param(key) ? req.get_param_value(key) : std::string{};
}

}  // namespace

void install_routes(httplib::Server& server, Inspector& inspector, const std::string& cors_origin) {
    const std::string fn = R"(/api/v1/functions/([^/]+))";
    server.Get("/api/v1/health", guarded([&](const auto&, auto& res) { send_json(res, inspector.health().dump()); }));
    server.Get("/api/v1/functions", guarded([&](const auto& req, auto& res) {
                   send_json(res, inspector.list_functions(query_map(req)).dump());
               }));
    server.Get(fn + "/explanation", guarded([&](const auto& req, auto& res) {
                   send_json(res, inspector.explanation(req.matches[1], param(req, "provenance")));
               }));
    server.Get(fn + "/subgraph", guarded([&](const auto& req, auto& res) {
                   send_json(res, inspector.subgraph(req.matches[1], param(req, "provenance"), param(req, "mode")).dump());
               }));
    server.Post(fn + "/what-if", guarded([&](const auto& req, auto& res) {
                    send_json(res, inspector.what_if(req.matches[1], json::parse(req.body)).dump());
                }));
    server.Get(fn + "/dependency", guarded([&](const auto& req, auto& res) {
                   send_json(res, inspector.dependency(req.matches[1], param(req, "provenance"), param(req, "policy")));
               }));
    server.Get("/api/v1/metrics", guarded([&](const auto&, auto& res) { send_json(res, inspector.metrics_list().dump()); }));
    server.Get(R"(/api/v1/metrics/([^/]+))",
               guarded([&](const auto& req, auto& res) { send_json(res, inspector.metrics(req.matches[1]).dump()); }));
    server.Get("/api/v1/projection", guarded([&](const auto&, auto& res) { send_json(res, inspector.projection().dump()); }));

    server.Options(R"(/api/v1/.*)", [](const auto&, auto& res) { res.status = 204; });
    server.set_post_routing_handler([cors_origin](const auto&, auto& res) {
        res.set_header("Access-Control-Allow-Origin", cors_origin);
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
    });
    server.set_error_handler([](const auto&, auto& res) {
        if (res.body.empty()) send_error(res, res.status, res.status == 404 ? "NotFound" : "Error", "no such route");
    });
}

void serve(const ServiceConfig& cfg) {
    Inspector inspector(cfg);
    httplib::Server server;
    install_routes(server, inspector, cfg.cors_origin);
    if (!server.bind_to_port(cfg.host, cfg.port))
        throw ConfigError("cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
    std::cerr << "inspect-service on http://" << cfg.host << ":" << cfg.port << "/api/v1 (checkpoint "
              << inspector.checkpoint_id() << ", " << inspector.health()["functions"] << " functions)\n";
    server.listen_after_bind();
}

}  // namespace vision::service
