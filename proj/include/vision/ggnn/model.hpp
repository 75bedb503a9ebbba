#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vision/common.hpp"
#include "vision/cpg/cpg.hpp"
#include "vision/embed/embedding.hpp"

namespace vision::ggnn {

class ShapeError : public Error {
public:
    using Error::Error;
};

class EmptyDataset : public Error {
public:
    EmptyDataset() : Error("empty dataset") {}
};

/// AST, CFG, DFG and their reverses.
inline constexpr int kEdgeTypes = 6;

struct ModelConfig {
    int d_in = 32 + embed::kKindDims;
    int d_h = 64;
    int steps = 6;
    int c1 = 32;
    int c2 = 16;
    std::uint64_t seed = 1;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

/// One graph ready for the network. `active` empty means every node is
/// active; inactive rows act as zero padding in the readout and are never
/// pooled.
struct GraphInput {
    Eigen::MatrixXd x;  // N x d_in
    std::array<std::vector<std::pair<int, int>>, kEdgeTypes> edges;  // (from, to)
    std::vector<char> active;
    Label label = Label::Benign;

    int size() const { return static_cast<int>(x.rows()); }
    bool is_active(int i) const { return active.empty() || active[static_cast<std::size_t>(i)]; }
};

GraphInput make_input(const cpg::CodePropertyGraph& g, Eigen::MatrixXd features);
GraphInput make_input(const cpg::CodePropertyGraph& g, const embed::EmbeddingTable& table);

/// All trainable tensors. Biases are stored as column matrices so every
/// tensor can be visited uniformly.
struct ModelParams {
    ModelConfig cfg;
    Eigen::MatrixXd proj;     // d_h x d_in
    Eigen::MatrixXd msg;      // d_h x 6 d_h, [W_0 ... W_5]
    Eigen::MatrixXd gate_z;   // d_h x 2 d_h
    Eigen::MatrixXd bias_z;   // d_h x 1
    Eigen::MatrixXd gate_r;
    Eigen::MatrixXd bias_r;
    Eigen::MatrixXd gate_c;
    Eigen::MatrixXd bias_c;
    Eigen::MatrixXd conv1;    // c1 x 3 (d_h + d_in)
    Eigen::MatrixXd conv1_b;  // c1 x 1
    Eigen::MatrixXd conv2;    // c2 x 2 c1
    Eigen::MatrixXd conv2_b;  // c2 x 1
    Eigen::MatrixXd out_w;    // 2 x c2
    Eigen::MatrixXd out_b;    // 2 x 1

    static ModelParams zeros(const ModelConfig& cfg);
    /// Xavier-uniform weights, zero biases.
    static ModelParams init(const ModelConfig& cfg);

    static const std::vector<std::string>& tensor_names();
    std::vector<Eigen::MatrixXd*> tensors();
    std::vector<const Eigen::MatrixXd*> tensors() const;

    bool all_finite() const;
    bool operator==(const ModelParams& o) const;
};

struct ForwardResult {
    Eigen::Vector2d logits;
    Eigen::MatrixXd node_states;      // N x d_h after the last step
    Eigen::VectorXd graph_embedding;  // c2
};

ForwardResult forward(const ModelParams& p, const GraphInput& in);

Eigen::Vector2d softmax(const Eigen::Vector2d& logits);

/// Softmax cross-entropy.
double loss(const Eigen::Vector2d& logits, Label y);

/// Mean batch loss; `grads` receives the gradient of that mean.
double grad(std::span<const GraphInput> batch, const ModelParams& p, ModelParams& grads);
double grad(std::span<const GraphInput* const> batch, const ModelParams& p, ModelParams& grads);

/// d log p(target | X) / dX for one graph, without parameter gradients.
Eigen::MatrixXd input_gradient(const ModelParams& p, const GraphInput& in, Label target,
                               Eigen::Vector2d* logits = nullptr);

struct Prediction {
    Label label = Label::Benign;
    double confidence = 0.5;
    Eigen::Vector2d probs{0.5, 0.5};
};

/// Argmax of softmax; ties go to Benign.
Prediction predict_logits(const Eigen::Vector2d& logits);
Prediction predict(const ModelParams& p, const GraphInput& in);

}  // namespace vision::ggnn
