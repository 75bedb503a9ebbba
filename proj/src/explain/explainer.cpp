#include "vision/explain/explainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

namespace vision::explain {

using ggnn::GraphInput;
using ggnn::ModelParams;
using nlohmann::json;

void ExplainerConfig::validate() const {
    std::string problems;
    if (iterations < 0) problems += " iterations must be >= 0;";
    if (!(lambda >= 0)) problems += " lambda must be >= 0;";
    if (!(beta >= 0)) problems += " beta must be >= 0;";
    if (!(lr > 0)) problems += " lr must be > 0;";
    if (!problems.empty()) throw ConfigError("invalid explainer config:" + problems);
}

std::string_view to_string(MaskingPolicy p) { return p == MaskingPolicy::RemoveNode ? "remove-node" : "feature-zero"; }

MaskingPolicy parse_masking_policy(std::string_view text) {
    if (text == "remove-node") return MaskingPolicy::RemoveNode;
    if (text == "feature-zero") return MaskingPolicy::FeatureZero;
    throw ConfigError("unknown masking policy '" + std::string(text) + "'");
}

AttributionResult attribute(const ModelParams& model, const GraphInput& g, const ExplainerConfig& cfg,
                            std::string function_id) {
    cfg.validate();
    const int n = g.size();
    if (n < 1) throw ggnn::ShapeError("cannot explain an empty graph");
    AttributionResult out;
    out.function_id = std::move(function_id);
    out.meta = cfg;
    const auto full = ggnn::predict(model, g);
    out.prediction = full.label;
    out.confidence = full.confidence;
    if (n == 1) {
        out.scores = {1.0};
        return out;
    }

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(n);
    GraphInput masked = g;
    for (int it = 0; it < cfg.iterations; ++it) {
        const Eigen::ArrayXd m = 1.0 / (1.0 + (-theta.array()).exp());
        masked.x = g.x.array().colwise() * m;
        const Eigen::MatrixXd grad_x = ggnn::input_gradient(model, masked, full.label);
        // d/dm_i of log p is <grad row i, x row i>; the entropy term
        // contributes -beta * log((1-m)/m) = beta * theta.
        const Eigen::ArrayXd d_m = (grad_x.array() * g.x.array()).rowwise().sum() - cfg.lambda + cfg.beta * theta.array();
        theta.array() += cfg.lr * d_m * m * (1.0 - m);
    }
    out.scores.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.scores[static_cast<std::size_t>(i)] = 1.0 / (1.0 + std::exp(-theta[i]));
    return out;
}

GraphInput induced_input(const GraphInput& g, std::vector<int> keep) {
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
    std::vector<int> remap(static_cast<std::size_t>(g.size()), -1);
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (keep[i] < 0 || keep[i] >= g.size()) throw ggnn::ShapeError("node id out of range");
        remap[static_cast<std::size_t>(keep[i])] = static_cast<int>(i);
    }
    GraphInput out;
    out.label = g.label;
    out.x.resize(static_cast<Eigen::Index>(keep.size()), g.x.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) out.x.row(static_cast<Eigen::Index>(i)) = g.x.row(keep[i]);
    if (!g.active.empty())
        for (int k : keep) out.active.push_back(g.active[static_cast<std::size_t>(k)]);
    for (std::size_t t = 0; t < g.edges.size(); ++t)
        for (const auto& [a, b] : g.edges[t]) {
            const int ra = remap[static_cast<std::size_t>(a)], rb = remap[static_cast<std::size_t>(b)];
            if (ra >= 0 && rb >= 0) out.edges[t].emplace_back(ra, rb);
        }
    return out;
}

GraphInput mask_nodes(const GraphInput& g, const std::vector<int>& removed, MaskingPolicy policy,
                      std::vector<int>* kept) {
    std::vector<char> gone(static_cast<std::size_t>(g.size()), 0);
    for (int r : removed) {
        if (r < 0 || r >= g.size()) throw ggnn::ShapeError("node id out of range");
        gone[static_cast<std::size_t>(r)] = 1;
    }
    std::vector<int> keep;
    for (int i = 0; i < g.size(); ++i)
        if (!gone[static_cast<std::size_t>(i)]) keep.push_back(i);
    if (kept) *kept = keep;
    if (policy == MaskingPolicy::FeatureZero) {
        GraphInput out = g;
        for (int r : removed) out.x.row(r).setZero();
        if (kept) {
            kept->resize(static_cast<std::size_t>(g.size()));
            std::iota(kept->begin(), kept->end(), 0);
        }
        return out;
    }
    if (keep.empty()) throw ggnn::ShapeError("masking removes every node");
    return induced_input(g, keep);
}

std::vector<int> rank_nodes(const std::vector<double>& scores) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    });
    return order;
}

namespace {

void check_scores(const GraphInput& g, const std::vector<double>& scores) {
    if (static_cast<int>(scores.size()) != g.size())
        throw ggnn::ShapeError("score vector has " + std::to_string(scores.size()) + " entries for " +
                               std::to_string(g.size()) + " nodes");
}

}  // namespace

SubgraphResult positive_subgraph(const ModelParams& model, const GraphInput& g, const std::vector<double>& scores,
                                 Label truth) {
    check_scores(g, scores);
    const auto order = rank_nodes(scores);
    SubgraphResult out;
    for (std::size_t k = 1; k <= order.size(); ++k) {
        std::vector<int> prefix(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
        const auto p = ggnn::predict(model, induced_input(g, prefix));
        ++out.model_calls;
        out.trace.push_back(p);
        if (p.label == truth) {
            out.nodes = std::move(prefix);
            out.confidence = p.confidence;
            return out;
        }
    }
    out.nodes = order;
    out.exhausted = true;
    return out;
}

SubgraphResult negative_subgraph(const ModelParams& model, const GraphInput& g, const std::vector<double>& scores) {
    check_scores(g, scores);
    const auto order = rank_nodes(scores);
    SubgraphResult out;
    out.trace.push_back(ggnn::predict(model, g));
    const Label base = out.trace.back().label;
    out.model_calls = 1;
    std::vector<int> removed;
    for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        removed.push_back(order[k]);
        const auto p = ggnn::predict(model, mask_nodes(g, removed, MaskingPolicy::RemoveNode));
        ++out.model_calls;
        out.trace.push_back(p);
        if (p.label != base) {
            out.nodes = std::move(removed);
            out.confidence = p.confidence;
            return out;
        }
    }
    out.nodes = std::move(removed);
    out.exhausted = true;
    return out;
}

SubgraphResult optimal_subgraph(const ModelParams& model, const GraphInput& g, const std::vector<double>& scores) {
    check_scores(g, scores);
    const auto order = rank_nodes(scores);
    const auto full = ggnn::predict(model, g);
    const int cls = full.label == Label::Vulnerable ? 1 : 0;
    SubgraphResult out;
    out.model_calls = 1;
    std::size_t best_k = order.size();
    double best = full.probs[cls];
    out.trace.assign(order.size(), full);
    // Scan shorter prefixes from the longest down so ties keep the shorter.
    for (std::size_t k = order.size() - 1; k >= 1; --k) {
        std::vector<int> prefix(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
        out.trace[k - 1] = ggnn::predict(model, induced_input(g, prefix));
        const double c = out.trace[k - 1].probs[cls];
        ++out.model_calls;
        if (c >= best) {
            best = c;
            best_k = k;
        }
    }
    out.nodes.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(best_k));
    out.confidence = best;
    return out;
}

WhatIf what_if_mask(const ModelParams& model, const GraphInput& g, const std::vector<double>& orig_scores,
                    const std::vector<int>& removed, MaskingPolicy policy, const ExplainerConfig& cfg) {
    check_scores(g, orig_scores);
    std::vector<int> kept;
    const GraphInput masked = mask_nodes(g, removed, policy, &kept);
    const auto attr = attribute(model, masked, cfg);
    WhatIf out;
    out.prediction = attr.prediction;
    out.confidence = attr.confidence;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.scores.assign(orig_scores.size(), nan);
    out.delta.assign(orig_scores.size(), nan);
    for (std::size_t k = 0; k < kept.size(); ++k) {
        const auto j = static_cast<std::size_t>(kept[k]);
        out.scores[j] = attr.scores[k];
        out.delta[j] = std::abs(orig_scores[j] - attr.scores[k]);
    }
    return out;
}

Eigen::VectorXd dependency_row(const ModelParams& model, const GraphInput& g, const std::vector<double>& orig_scores,
                               int i, MaskingPolicy policy, const ExplainerConfig& cfg) {
    if (g.size() < 2) throw DegenerateGraph(g.size());
    const auto w = what_if_mask(model, g, orig_scores, {i}, policy, cfg);
    Eigen::VectorXd row(g.size());
    for (int j = 0; j < g.size(); ++j)
        row[j] = j == i ? orig_scores[static_cast<std::size_t>(i)] : w.delta[static_cast<std::size_t>(j)];
    return row;
}

DependencyMatrix dependency_matrix(const ModelParams& model, const GraphInput& g, MaskingPolicy policy,
                                   const ExplainerConfig& cfg, std::string function_id) {
    if (g.size() < 2) throw DegenerateGraph(g.size());
    const auto orig = attribute(model, g, cfg).scores;
    DependencyMatrix out;
    out.function_id = std::move(function_id);
    out.policy = policy;
    out.m.resize(g.size(), g.size());
    for (int i = 0; i < g.size(); ++i) out.m.row(i) = dependency_row(model, g, orig, i, policy, cfg).transpose();
    return out;
}

std::string attribution_to_json(const AttributionResult& a) {
    json j{{"function_id", a.function_id},
           {"prediction", to_string(a.prediction)},
           {"confidence", a.confidence},
           {"scores", a.scores},
           {"meta",
            {{"iterations", a.meta.iterations},
             {"lambda", a.meta.lambda},
             {"beta", a.meta.beta},
             {"lr", a.meta.lr},
             {"seed", a.meta.seed}}}};
    return j.dump();
}

AttributionResult attribution_from_json(std::string_view text) {
    try {
        const auto j = json::parse(text);
        AttributionResult a;
        a.function_id = j.at("function_id").get<std::string>();
        a.prediction = parse_label(j.at("prediction").get<std::string>());
        a.confidence = j.at("confidence").get<double>();
        a.scores = j.at("scores").get<std::vector<double>>();
        const auto& m = j.at("meta");
        a.meta.iterations = m.at("iterations").get<int>();
        a.meta.lambda = m.at("lambda").get<double>();
        a.meta.beta = m.at("beta").get<double>();
        a.meta.lr = m.at("lr").get<double>();
        a.meta.seed = m.at("seed").get<std::uint64_t>();
        return a;
    } catch (const json::exception& e) {
        throw FormatError(1, "attribution", e.what());
    }
}

std::string dependency_to_json(const DependencyMatrix& d) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(d.m.size()));
    for (Eigen::Index i = 0; i < d.m.rows(); ++i)
        for (Eigen::Index j = 0; j < d.m.cols(); ++j) data.push_back(d.m(i, j));
    json j{{"function_id", d.function_id}, {"policy", to_string(d.policy)}, {"n", d.m.rows()}, {"m", data}};
    return j.dump();
}

DependencyMatrix dependency_from_json(std::string_view text) {
    try {
        const auto j = json::parse(text);
        DependencyMatrix d;
        d.function_id = j.at("function_id").get<std::string>();
        d.policy = parse_masking_policy(j.at("policy").get<std::string>());
        const auto n = j.at("n").get<Eigen::Index>();
        const auto data = j.at("m").get<std::vector<double>>();
        if (n < 0 || static_cast<std::size_t>(n * n) != data.size())
            throw FormatError(1, "m", "expected " + std::to_string(n * n) + " entries");
        d.m.resize(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index k = 0; k < n; ++k) d.m(i, k) = data[static_cast<std::size_t>(i * n + k)];
        return d;
    } catch (const json::exception& e) {
        throw FormatError(1, "dependency", e.what());
    }
}

}  // namespace vision::explain
