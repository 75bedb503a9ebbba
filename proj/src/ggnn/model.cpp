#include "vision/ggnn/model.hpp"

#include <cmath>

#include "vision/rng.hpp"

namespace vision::ggnn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void ModelConfig::validate() const {
    std::string problems;
    if (d_in < 1) problems += " d_in must be >= 1;";
    if (d_h < 1) problems += " d_h must be >= 1;";
    if (steps < 0) problems += " steps must be >= 0;";
    if (c1 < 1) problems += " c1 must be >= 1;";
    if (c2 < 1) problems += " c2 must be >= 1;";
    if (!problems.empty()) throw ConfigError("invalid model config:" + problems);
}

GraphInput make_input(const cpg::CodePropertyGraph& g, MatrixXd features) {
    const int n = static_cast<int>(g.nodes.size());
    if (features.rows() != n) throw ShapeError("feature rows do not match node count");
    GraphInput in;
    in.x = std::move(features);
    in.label = g.label;
    for (const auto& e : g.edges) {
        if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n) throw ShapeError("edge references missing node");
        const int k = static_cast<int>(e.kind);
        in.edges[k].emplace_back(e.src, e.dst);
        in.edges[k + 3].emplace_back(e.dst, e.src);
    }
    return in;
}

GraphInput make_input(const cpg::CodePropertyGraph& g, const embed::EmbeddingTable& table) {
    return make_input(g, embed::node_features(g, table));
}

// ---------------------------------------------------------------------------
// Parameters

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
    cfg.validate();
    const int d = cfg.d_h;
    const int s = d + cfg.d_in;
    ModelParams p;
    p.cfg = cfg;
    p.proj = MatrixXd::Zero(d, cfg.d_in);
    p.msg = MatrixXd::Zero(d, kEdgeTypes * d);
    p.gate_z = MatrixXd::Zero(d, 2 * d);
    p.bias_z = MatrixXd::Zero(d, 1);
    p.gate_r = MatrixXd::Zero(d, 2 * d);
    p.bias_r = MatrixXd::Zero(d, 1);
    p.gate_c = MatrixXd::Zero(d, 2 * d);
    p.bias_c = MatrixXd::Zero(d, 1);
    p.conv1 = MatrixXd::Zero(cfg.c1, 3 * s);
    p.conv1_b = MatrixXd::Zero(cfg.c1, 1);
    p.conv2 = MatrixXd::Zero(cfg.c2, 2 * cfg.c1);
    p.conv2_b = MatrixXd::Zero(cfg.c2, 1);
    p.out_w = MatrixXd::Zero(2, cfg.c2);
    p.out_b = MatrixXd::Zero(2, 1);
    return p;
}

ModelParams ModelParams::init(const ModelConfig& cfg) {
    ModelParams p = zeros(cfg);
    Rng rng(mix_seed(cfg.seed, 0x6767));
    auto xavier = [&](MatrixXd& m, int fan_in, int fan_out) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-limit, limit);
    };
    const int d = cfg.d_h;
    xavier(p.proj, cfg.d_in, d);
    xavier(p.msg, d, d);  // per edge-type block
    xavier(p.gate_z, 2 * d, d);
    xavier(p.gate_r, 2 * d, d);
    xavier(p.gate_c, 2 * d, d);
    xavier(p.conv1, static_cast<int>(p.conv1.cols()), cfg.c1);
    xavier(p.conv2, static_cast<int>(p.conv2.cols()), cfg.c2);
    xavier(p.out_w, cfg.c2, 2);
    return p;
}

const std::vector<std::string>& ModelParams::tensor_names() {
    static const std::vector<std::string> names{"proj",   "msg",    "gate_z",  "bias_z", "gate_r",
                                                "bias_r", "gate_c", "bias_c",  "conv1",  "conv1_b",
                                                "conv2",  "conv2_b", "out_w", "out_b"};
    return names;
}

std::vector<MatrixXd*> ModelParams::tensors() {
    return {&proj, &msg, &gate_z, &bias_z, &gate_r, &bias_r, &gate_c, &bias_c,
            &conv1, &conv1_b, &conv2, &conv2_b, &out_w, &out_b};
}

std::vector<const MatrixXd*> ModelParams::tensors() const {
    return {&proj, &msg, &gate_z, &bias_z, &gate_r, &bias_r, &gate_c, &bias_c,
            &conv1, &conv1_b, &conv2, &conv2_b, &out_w, &out_b};
}

bool ModelParams::all_finite() const {
    for (const auto* t : tensors())
        if (!t->allFinite()) return false;
    return true;
}

bool ModelParams::operator==(const ModelParams& o) const {
    if (!(cfg == o.cfg)) return false;
    auto a = tensors();
    auto b = o.tensors();
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i]->rows() != b[i]->rows() || a[i]->cols() != b[i]->cols() || *a[i] != *b[i]) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Forward with a tape for backprop

namespace {

MatrixXd sigmoid(const MatrixXd& m) {
    return m.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

struct Step {
    MatrixXd h_prev;  // N x d
    MatrixXd zcat;    // N x 6d, per-type neighbour sums
    MatrixXd in1;     // [A, H]
    MatrixXd in2;     // [A, R o H]
    MatrixXd z, r, cand;
};

struct Tape {
    MatrixXd h0;
    std::vector<Step> steps;
    MatrixXd h_last;
    MatrixXd s;     // N x (d + d_in), inactive rows zero
    MatrixXd col1;  // N x 3S
    MatrixXd y1, a1;
    MatrixXd col2;  // N x 2 c1
    MatrixXd y2, a2;
    std::vector<int> argmax;  // per channel
    VectorXd pooled;
    Eigen::Vector2d logits;
};

void check_shapes(const ModelParams& p, const GraphInput& in) {
    if (in.size() < 1) throw ShapeError("graph has no nodes");
    if (in.x.cols() != p.cfg.d_in)
        throw ShapeError("feature width " + std::to_string(in.x.cols()) + " != d_in " + std::to_string(p.cfg.d_in));
    if (!in.active.empty() && static_cast<int>(in.active.size()) != in.size())
        throw ShapeError("active mask length does not match node count");
    bool any = false;
    for (int i = 0; i < in.size() && !any; ++i) any = in.is_active(i);
    if (!any) throw ShapeError("no active nodes");
    for (const auto& list : in.edges)
        for (auto [u, v] : list)
            if (u < 0 || v < 0 || u >= in.size() || v >= in.size()) throw ShapeError("edge references missing node");
}

void run_forward(const ModelParams& p, const GraphInput& in, Tape& t) {
    check_shapes(p, in);
    const int n = in.size();
    const int d = p.cfg.d_h;
    const int s_w = d + p.cfg.d_in;
    const int c1 = p.cfg.c1;
    const int c2 = p.cfg.c2;

    t.h0.noalias() = in.x * p.proj.transpose();
    MatrixXd h = t.h0;
    t.steps.assign(static_cast<std::size_t>(p.cfg.steps), Step{});
    for (auto& st : t.steps) {
        st.h_prev = h;
        st.zcat = MatrixXd::Zero(n, kEdgeTypes * d);
        for (int e = 0; e < kEdgeTypes; ++e)
            for (auto [u, v] : in.edges[e]) st.zcat.block(v, e * d, 1, d) += h.row(u);
        MatrixXd a = st.zcat * p.msg.transpose();
        st.in1.resize(n, 2 * d);
        st.in1 << a, h;
        st.z = sigmoid((st.in1 * p.gate_z.transpose()).rowwise() + p.bias_z.col(0).transpose());
        st.r = sigmoid((st.in1 * p.gate_r.transpose()).rowwise() + p.bias_r.col(0).transpose());
        st.in2.resize(n, 2 * d);
        st.in2 << a, st.r.cwiseProduct(h);
        st.cand = ((st.in2 * p.gate_c.transpose()).rowwise() + p.bias_c.col(0).transpose()).array().tanh().matrix();
        h = (1.0 - st.z.array()) * h.array() + st.z.array() * st.cand.array();
    }
    t.h_last = h;

    t.s.resize(n, s_w);
    t.s << h, in.x;
    for (int i = 0; i < n; ++i)
        if (!in.is_active(i)) t.s.row(i).setZero();

    t.col1 = MatrixXd::Zero(n, 3 * s_w);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) {
            const int src = i + k - 1;
            if (src >= 0 && src < n) t.col1.block(i, k * s_w, 1, s_w) = t.s.row(src);
        }
    t.y1 = (t.col1 * p.conv1.transpose()).rowwise() + p.conv1_b.col(0).transpose();
    t.a1 = t.y1.cwiseMax(0.0);
    for (int i = 0; i < n; ++i)
        if (!in.is_active(i)) t.a1.row(i).setZero();

    t.col2 = MatrixXd::Zero(n, 2 * c1);
    for (int i = 0; i < n; ++i) {
        t.col2.block(i, 0, 1, c1) = t.a1.row(i);
        if (i + 1 < n) t.col2.block(i, c1, 1, c1) = t.a1.row(i + 1);
    }
    t.y2 = (t.col2 * p.conv2.transpose()).rowwise() + p.conv2_b.col(0).transpose();
    t.a2 = t.y2.cwiseMax(0.0);
    for (int i = 0; i < n; ++i)
        if (!in.is_active(i)) t.a2.row(i).setZero();

    t.argmax.assign(static_cast<std::size_t>(c2), -1);
    t.pooled = VectorXd::Zero(c2);
    for (int c = 0; c < c2; ++c)
        for (int i = 0; i < n; ++i) {
            if (!in.is_active(i)) continue;
            if (t.argmax[c] < 0 || t.a2(i, c) > t.pooled(c)) {
                t.argmax[c] = i;
                t.pooled(c) = t.a2(i, c);
            }
        }
    t.logits = p.out_w * t.pooled + p.out_b.col(0);
}

// Backprop of dlogits through the tape. `g` may be null (input gradient only).
MatrixXd run_backward(const ModelParams& p, const GraphInput& in, const Tape& t, const Eigen::Vector2d& dlogits,
                      ModelParams* g) {
    const int n = in.size();
    const int d = p.cfg.d_h;
    const int s_w = d + p.cfg.d_in;
    const int c1 = p.cfg.c1;
    const int c2 = p.cfg.c2;

    if (g) {
        g->out_w.noalias() += dlogits * t.pooled.transpose();
        g->out_b.col(0) += dlogits;
    }
    const VectorXd dpooled = p.out_w.transpose() * dlogits;

    MatrixXd dy2 = MatrixXd::Zero(n, c2);
    for (int c = 0; c < c2; ++c) {
        const int i = t.argmax[c];
        if (t.y2(i, c) > 0) dy2(i, c) = dpooled(c);
    }
    if (g) {
        g->conv2.noalias() += dy2.transpose() * t.col2;
        g->conv2_b.col(0) += dy2.colwise().sum().transpose();
    }
    const MatrixXd dcol2 = dy2 * p.conv2;
    MatrixXd dy1 = MatrixXd::Zero(n, c1);
    for (int i = 0; i < n; ++i) {
        dy1.row(i) += dcol2.block(i, 0, 1, c1);
        if (i + 1 < n) dy1.row(i + 1) += dcol2.block(i, c1, 1, c1);
    }
    for (int i = 0; i < n; ++i) {
        if (!in.is_active(i)) {
            dy1.row(i).setZero();
            continue;
        }
        for (int c = 0; c < c1; ++c)
            if (t.y1(i, c) <= 0) dy1(i, c) = 0;
    }
    if (g) {
        g->conv1.noalias() += dy1.transpose() * t.col1;
        g->conv1_b.col(0) += dy1.colwise().sum().transpose();
    }
    const MatrixXd dcol1 = dy1 * p.conv1;
    MatrixXd ds = MatrixXd::Zero(n, s_w);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) {
            const int src = i + k - 1;
            if (src >= 0 && src < n) ds.row(src) += dcol1.block(i, k * s_w, 1, s_w);
        }
    for (int i = 0; i < n; ++i)
        if (!in.is_active(i)) ds.row(i).setZero();

    MatrixXd dx = ds.rightCols(p.cfg.d_in);
    MatrixXd dh = ds.leftCols(d);

    for (int step = p.cfg.steps - 1; step >= 0; --step) {
        const Step& st = t.steps[static_cast<std::size_t>(step)];
        const auto& h = st.h_prev;
        MatrixXd dcand = dh.cwiseProduct(st.z);
        MatrixXd dz = dh.cwiseProduct(st.cand - h);
        MatrixXd dh_prev = dh.cwiseProduct((1.0 - st.z.array()).matrix());

        MatrixXd dpre_c = dcand.array() * (1.0 - st.cand.array().square());
        MatrixXd din2 = dpre_c * p.gate_c;
        MatrixXd da = din2.leftCols(d);
        MatrixXd drh = din2.rightCols(d);
        MatrixXd dr = drh.cwiseProduct(h);
        dh_prev += drh.cwiseProduct(st.r);

        MatrixXd dpre_r = dr.array() * st.r.array() * (1.0 - st.r.array());
        MatrixXd dpre_z = dz.array() * st.z.array() * (1.0 - st.z.array());
        MatrixXd din1 = dpre_r * p.gate_r + dpre_z * p.gate_z;
        da += din1.leftCols(d);
        dh_prev += din1.rightCols(d);

        if (g) {
            g->gate_c.noalias() += dpre_c.transpose() * st.in2;
            g->bias_c.col(0) += dpre_c.colwise().sum().transpose();
            g->gate_r.noalias() += dpre_r.transpose() * st.in1;
            g->bias_r.col(0) += dpre_r.colwise().sum().transpose();
            g->gate_z.noalias() += dpre_z.transpose() * st.in1;
            g->bias_z.col(0) += dpre_z.colwise().sum().transpose();
            g->msg.noalias() += da.transpose() * st.zcat;
        }
        const MatrixXd dzcat = da * p.msg;
        for (int e = 0; e < kEdgeTypes; ++e)
            for (auto [u, v] : in.edges[e]) dh_prev.row(u) += dzcat.block(v, e * d, 1, d);
        dh = std::move(dh_prev);
    }

    if (g) g->proj.noalias() += dh.transpose() * in.x;
    dx.noalias() += dh * p.proj;
    return dx;
}

}  // namespace

ForwardResult forward(const ModelParams& p, const GraphInput& in) {
    Tape t;
    run_forward(p, in, t);
    return {t.logits, t.h_last, t.pooled};
}

Eigen::Vector2d softmax(const Eigen::Vector2d& logits) {
    const double m = logits.maxCoeff();
    Eigen::Vector2d e = (logits.array() - m).exp();
    return e / e.sum();
}

double loss(const Eigen::Vector2d& logits, Label y) {
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    return lse - logits(static_cast<int>(y));
}

double grad(std::span<const GraphInput> batch, const ModelParams& p, ModelParams& grads) {
    std::vector<const GraphInput*> ptrs;
    ptrs.reserve(batch.size());
    for (const auto& in : batch) ptrs.push_back(&in);
    return grad(ptrs, p, grads);
}

double grad(std::span<const GraphInput* const> batch, const ModelParams& p, ModelParams& grads) {
    if (batch.empty()) throw EmptyDataset();
    grads = ModelParams::zeros(p.cfg);
    const double scale = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    Tape t;
    for (const auto* ptr : batch) {
        const auto& in = *ptr;
        run_forward(p, in, t);
        total += loss(t.logits, in.label);
        Eigen::Vector2d dlogits = softmax(t.logits);
        dlogits(static_cast<int>(in.label)) -= 1.0;
        run_backward(p, in, t, dlogits * scale, &grads);
    }
    return total * scale;
}

MatrixXd input_gradient(const ModelParams& p, const GraphInput& in, Label target, Eigen::Vector2d* logits) {
    Tape t;
    run_forward(p, in, t);
    if (logits) *logits = t.logits;
    Eigen::Vector2d w = -softmax(t.logits);
    w(static_cast<int>(target)) += 1.0;
    return run_backward(p, in, t, w, nullptr);
}

Prediction predict_logits(const Eigen::Vector2d& logits) {
    Prediction out;
    out.probs = softmax(logits);
    out.label = logits(1) > logits(0) ? Label::Vulnerable : Label::Benign;
    out.confidence = out.probs(static_cast<int>(out.label));
    return out;
}

Prediction predict(const ModelParams& p, const GraphInput& in) { return predict_logits(forward(p, in).logits); }

}  // namespace vision::ggnn
