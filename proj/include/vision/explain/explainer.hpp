#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "vision/ggnn/model.hpp"

namespace vision::explain {

class DegenerateGraph : public Error {
public:
    explicit DegenerateGraph(int n) : Error("graph with " + std::to_string(n) + " node(s) has no dependencies") {}
};

struct ExplainerConfig {
    int iterations = 200;
    double lambda = 0.05;  // sparsity weight on sum(m)
    double beta = 0.01;    // entropy weight
    double lr = 0.05;
    std::uint64_t seed = 1;

    void validate() const;
};

/// How a node is taken out of the graph.
enum class MaskingPolicy {
    RemoveNode,   // induced subgraph without the node and its edges
    FeatureZero,  // node and edges stay, its feature row is zeroed
};
std::string_view to_string(MaskingPolicy p);
MaskingPolicy parse_masking_policy(std::string_view text);

struct AttributionResult {
    std::string function_id;
    Label prediction = Label::Benign;
    double confidence = 0.5;
    std::vector<double> scores;  // one per node, in [0,1]
    ExplainerConfig meta;
};

/// Soft node mask m = sigmoid(theta), theta starting at 0 (m = 0.5), by
/// plain gradient ascent on
///   log p(y_hat | m * X) - lambda * sum(m) - beta * sum(H(m)).
/// y_hat is the prediction on the unmasked graph.
AttributionResult attribute(const ggnn::ModelParams& model, const ggnn::GraphInput& g, const ExplainerConfig& cfg = {},
                            std::string function_id = {});

/// Subgraph keeping the nodes in `keep` (any order; taken ascending), ids
/// re-densified.
ggnn::GraphInput induced_input(const ggnn::GraphInput& g, std::vector<int> keep);

/// `g` with the nodes in `removed` masked under `policy`. For RemoveNode
/// the returned `kept` lists the original id of every remaining node.
ggnn::GraphInput mask_nodes(const ggnn::GraphInput& g, const std::vector<int>& removed, MaskingPolicy policy,
                            std::vector<int>* kept = nullptr);

/// Nodes by descending score, ties by ascending id.
std::vector<int> rank_nodes(const std::vector<double>& scores);

struct SubgraphResult {
    std::vector<int> nodes;  // in the order they were added/removed
    bool exhausted = false;  // never_recovered / never_flipped
    int model_calls = 0;
    double confidence = 0.0;
    // Prediction after each step: positive, prefix k at k-1; negative, the
    // full graph first and then each removal; optimal, prefix k at k-1.
    std::vector<ggnn::Prediction> trace;
};

/// Adds nodes by rank until the induced subgraph is classified as `truth`.
SubgraphResult positive_subgraph(const ggnn::ModelParams& model, const ggnn::GraphInput& g,
                                 const std::vector<double>& scores, Label truth);
/// Removes nodes by rank until the prediction differs from the full graph's.
/// At most N-1 removals are evaluated (the empty graph has no prediction).
SubgraphResult negative_subgraph(const ggnn::ModelParams& model, const ggnn::GraphInput& g,
                                 const std::vector<double>& scores);
/// Rank prefix maximising confidence in the full graph's prediction; ties
/// go to the shorter prefix.
SubgraphResult optimal_subgraph(const ggnn::ModelParams& model, const ggnn::GraphInput& g,
                                const std::vector<double>& scores);

struct DependencyMatrix {
    std::string function_id;
    MaskingPolicy policy = MaskingPolicy::RemoveNode;
    Eigen::MatrixXd m;  // N x N

    bool operator==(const DependencyMatrix& o) const {
        return function_id == o.function_id && policy == o.policy && m.rows() == o.m.rows() &&
               m.cols() == o.m.cols() && m == o.m;
    }
};

/// Scores of every original node after masking `removed`; entries for
/// nodes deleted under RemoveNode are NaN.
struct WhatIf {
    Label prediction = Label::Benign;
    double confidence = 0.5;
    std::vector<double> scores;
    std::vector<double> delta;  // |orig - new|, NaN where removed
};

WhatIf what_if_mask(const ggnn::ModelParams& model, const ggnn::GraphInput& g, const std::vector<double>& orig_scores,
                    const std::vector<int>& removed, MaskingPolicy policy, const ExplainerConfig& cfg = {});

/// Row i: |score_j^orig - score_j^(i masked)| for j != i, and score_i^orig
/// on the diagonal.
Eigen::VectorXd dependency_row(const ggnn::ModelParams& model, const ggnn::GraphInput& g,
                               const std::vector<double>& orig_scores, int i, MaskingPolicy policy,
                               const ExplainerConfig& cfg = {});
DependencyMatrix dependency_matrix(const ggnn::ModelParams& model, const ggnn::GraphInput& g,
                                   MaskingPolicy policy = MaskingPolicy::RemoveNode, const ExplainerConfig& cfg = {},
                                   std::string function_id = {});

std::string attribution_to_json(const AttributionResult& a);
AttributionResult attribution_from_json(std::string_view text);
/// {"function_id", "policy", "n", "m": row-major}
std::string dependency_to_json(const DependencyMatrix& d);
DependencyMatrix dependency_from_json(std::string_view text);

}  // namespace vision::explain
