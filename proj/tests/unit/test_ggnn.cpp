#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "vision/ggnn/train.hpp"
#include "vision/rng.hpp"

using namespace vision;
using namespace vision::ggnn;

namespace {

ModelConfig small_config(int d_in) {
    ModelConfig c;
    c.d_in = d_in;
    c.d_h = 5;
    c.steps = 3;
    c.c1 = 4;
    c.c2 = 3;
    c.seed = 11;
    return c;
}

GraphInput random_graph(Rng& rng, int d_in, int max_nodes = 15) {
    GraphInput in;
    const int n = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_nodes)));
    in.x.resize(n, d_in);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d_in; ++j) in.x(i, j) = rng.uniform(-1, 1);
    const int m = static_cast<int>(rng.below(static_cast<std::uint64_t>(3 * n + 1)));
    for (int k = 0; k < m; ++k) {
        const int u = static_cast<int>(rng.below(n));
        const int v = static_cast<int>(rng.below(n));
        const int kind = static_cast<int>(rng.below(3));
        in.edges[kind].emplace_back(u, v);
        in.edges[kind + 3].emplace_back(v, u);
    }
    in.label = rng.bernoulli(0.5) ? Label::Vulnerable : Label::Benign;
    return in;
}

double batch_loss(std::span<const GraphInput> batch, const ModelParams& p) {
    double s = 0.0;
    for (const auto& in : batch) s += loss(forward(p, in).logits, in.label);
    return s / static_cast<double>(batch.size());
}

ModelParams random_params(const ModelConfig& cfg, Rng& rng) {
    // Non-zero biases so every term of the backward pass is exercised.
    ModelParams p = ModelParams::init(cfg);
    for (auto* t : p.tensors())
        if (t->cols() == 1)
            for (Eigen::Index i = 0; i < t->rows(); ++i) (*t)(i, 0) = rng.uniform(-0.3, 0.3);
    return p;
}

std::vector<SourceFunction> token_corpus(int n, std::uint64_t seed) {
    // Label is the presence of the token `gets`; everything else is noise.
    std::vector<SourceFunction> out;
    Rng rng(seed);
    const char* names[] = {"alpha", "beta", "gamma", "delta"};
    for (int i = 0; i < n; ++i) {
        const bool vuln = i % 2 == 1;
        std::string body = "int " + std::string(names[rng.below(4)]) + " = a + " + std::to_string(rng.below(9)) + ";";
        if (rng.bernoulli(0.5)) body += " if (a > 3) { a = a - 1; }";
        if (rng.bernoulli(0.5)) body += " puts(a);";
        if (vuln) body += " gets(a);";
        body += " return a;";
        SourceFunction fn{"s" + std::to_string(i), "int f(int a) { " + body + " }"};
        fn.label = vuln ? Label::Vulnerable : Label::Benign;
        out.push_back(fn);
    }
    return out;
}

struct TokenData {
    embed::EmbeddingTable table;
    std::vector<GraphInput> inputs;
};

TokenData token_data(int n, std::uint64_t seed) {
    auto corpus = token_corpus(n, seed);
    embed::SkipgramConfig sg;
    sg.dim = 8;
    sg.epochs = 2;
    TokenData d;
    d.table = embed::pretrain_skipgram(corpus, embed::build_vocab(corpus, 1), sg).table;
    for (const auto& fn : corpus) {
        auto g = cpg::assemble_cpg(fn);
        d.inputs.push_back(make_input(g, d.table));
    }
    return d;
}

}  // namespace

TEST(Loss, ClosedForms) {
    EXPECT_LT(loss({10, -10}, Label::Benign), 1e-4);
    EXPECT_NEAR(loss({0, 0}, Label::Benign), std::log(2.0), 1e-15);
    EXPECT_NEAR(loss({0, 0}, Label::Vulnerable), std::log(2.0), 1e-15);
    EXPECT_NEAR(loss({-10, 10}, Label::Benign), 20.0 + std::log1p(std::exp(-20.0)), 1e-12);
    EXPECT_GE(loss({1e3, -1e3}, Label::Vulnerable), 0.0);
    EXPECT_TRUE(std::isfinite(loss({1e3, -1e3}, Label::Vulnerable)));
}

TEST(Predict, ClosedFormsAndTieBreak) {
    auto a = predict_logits({3, -3});
    EXPECT_EQ(a.label, Label::Benign);
    EXPECT_NEAR(a.confidence, 1.0 / (1.0 + std::exp(-6.0)), 1e-15);
    EXPECT_NEAR(a.confidence, 0.9975, 1e-4);
    auto tie = predict_logits({0, 0});
    EXPECT_EQ(tie.label, Label::Benign);
    EXPECT_EQ(tie.confidence, 0.5);
    EXPECT_EQ(predict_logits({-1, 2}).label, Label::Vulnerable);
}

TEST(Forward, SingleNodeWithoutPropagation) {
    auto cfg = small_config(4);
    cfg.steps = 0;
    auto p = ModelParams::init(cfg);
    GraphInput in;
    in.x = Eigen::MatrixXd::Random(1, 4);
    auto r = forward(p, in);
    EXPECT_TRUE(r.node_states.isApprox(in.x * p.proj.transpose()));
    // with no propagation the message weights are irrelevant
    auto q = p;
    q.msg.setRandom();
    q.gate_z.setRandom();
    EXPECT_EQ(forward(q, in).logits, r.logits);
}

TEST(Forward, SymmetricNodesStayEqual) {
    auto cfg = small_config(4);
    auto p = ModelParams::init(cfg);
    GraphInput in;
    in.x.resize(2, 4);
    in.x.row(0) << 0.1, -0.2, 0.3, 0.4;
    in.x.row(1) = in.x.row(0);
    for (int t = 0; t <= 4; ++t) {
        p.cfg.steps = t;
        auto r = forward(p, in);
        EXPECT_EQ(r.node_states.row(0), r.node_states.row(1)) << t;
    }
}

TEST(Forward, DeterministicAndEdgeOrderInvariant) {
    Rng rng(5);
    auto cfg = small_config(6);
    auto p = ModelParams::init(cfg);
    for (int trial = 0; trial < 10; ++trial) {
        auto in = random_graph(rng, 6);
        auto a = forward(p, in);
        EXPECT_EQ(forward(p, in).logits, a.logits);
        auto shuffled = in;
        for (auto& list : shuffled.edges) rng.shuffle(list);
        EXPECT_LT((forward(p, shuffled).logits - a.logits).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Forward, MaskedIsolatedNodeLeavesLogitsUnchanged) {
    Rng rng(6);
    auto cfg = small_config(6);
    auto p = ModelParams::init(cfg);
    for (int trial = 0; trial < 10; ++trial) {
        auto in = random_graph(rng, 6, 10);
        auto padded = in;
        padded.x.conservativeResize(in.size() + 1, Eigen::NoChange);
        padded.x.row(in.size()).setZero();
        padded.x(in.size(), 2) = 1.0;  // a kind one-hot, no token signal
        padded.active.assign(static_cast<std::size_t>(padded.size()), 1);
        padded.active.back() = 0;
        EXPECT_LT((forward(p, padded).logits - forward(p, in).logits).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Forward, ShapeErrors) {
    auto p = ModelParams::init(small_config(4));
    GraphInput in;
    in.x = Eigen::MatrixXd::Zero(2, 3);
    EXPECT_THROW(forward(p, in), ShapeError);
    in.x = Eigen::MatrixXd::Zero(2, 4);
    in.edges[0].emplace_back(0, 2);
    EXPECT_THROW(forward(p, in), ShapeError);
    in.edges[0].clear();
    in.active = {0, 0};
    EXPECT_THROW(forward(p, in), ShapeError);
    GraphInput empty;
    empty.x.resize(0, 4);
    EXPECT_THROW(forward(p, empty), ShapeError);
}

TEST(Gradient, MatchesCentralDifferences) {
    Rng rng(2024);
    const double eps = 1e-4;
    int graphs = 0;
    for (int trial = 0; trial < 24; ++trial) {
        const int d_in = 3 + static_cast<int>(rng.below(4));
        auto cfg = small_config(d_in);
        cfg.seed = trial;
        auto p = random_params(cfg, rng);
        std::vector<GraphInput> batch{random_graph(rng, d_in)};
        if (trial % 3 == 0) batch.push_back(random_graph(rng, d_in));
        if (trial % 4 == 1 && batch[0].size() > 2) {
            batch[0].active.assign(static_cast<std::size_t>(batch[0].size()), 1);
            batch[0].active[1] = 0;
        }
        ModelParams g;
        grad(batch, p, g);
        auto names = ModelParams::tensor_names();
        auto pt = p.tensors();
        auto gt = g.tensors();
        for (std::size_t k = 0; k < pt.size(); ++k) {
            for (int s = 0; s < 6; ++s) {
                const auto r = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(pt[k]->rows())));
                const auto c = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(pt[k]->cols())));
                const double orig = (*pt[k])(r, c);
                (*pt[k])(r, c) = orig + eps;
                const double up = batch_loss(batch, p);
                (*pt[k])(r, c) = orig - eps;
                const double down = batch_loss(batch, p);
                (*pt[k])(r, c) = orig;
                const double fd = (up - down) / (2 * eps);
                const double an = (*gt[k])(r, c);
                EXPECT_LT(std::abs(an - fd) / std::max(1.0, std::abs(fd)), 1e-4)
                    << names[k] << "(" << r << "," << c << ") analytic " << an << " fd " << fd;
            }
        }
        ++graphs;
    }
    EXPECT_GE(graphs, 20);
}

TEST(Gradient, InputGradientMatchesCentralDifferences) {
    Rng rng(77);
    const double eps = 1e-5;
    for (int trial = 0; trial < 10; ++trial) {
        auto cfg = small_config(5);
        auto p = random_params(cfg, rng);
        auto in = random_graph(rng, 5, 8);
        const Label target = trial % 2 ? Label::Vulnerable : Label::Benign;
        auto dx = input_gradient(p, in, target);
        auto logp = [&](const GraphInput& x) { return -loss(forward(p, x).logits, target); };
        for (int s = 0; s < 8; ++s) {
            const auto r = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(in.size())));
            const auto c = static_cast<Eigen::Index>(rng.below(5));
            auto a = in, b = in;
            a.x(r, c) += eps;
            b.x(r, c) -= eps;
            const double fd = (logp(a) - logp(b)) / (2 * eps);
            EXPECT_LT(std::abs(dx(r, c) - fd) / std::max(1.0, std::abs(fd)), 1e-5);
        }
    }
}

TEST(Gradient, ClassifierBiasClosedForm) {
    Rng rng(8);
    auto p = ModelParams::init(small_config(4));
    p.out_w.setZero();
    p.out_b << 0.3, -0.7;
    auto in = random_graph(rng, 4);
    in.label = Label::Vulnerable;
    ModelParams g;
    grad(std::span<const GraphInput>(&in, 1), p, g);
    Eigen::Vector2d expect = softmax({0.3, -0.7});
    expect(1) -= 1.0;
    EXPECT_NEAR(g.out_b(0, 0), expect(0), 1e-15);
    EXPECT_NEAR(g.out_b(1, 0), expect(1), 1e-15);
    // nothing upstream of a zero classifier receives gradient
    EXPECT_EQ(g.proj.norm(), 0.0);
}

TEST(Gradient, DuplicatedSampleEqualsSingle) {
    Rng rng(9);
    auto p = ModelParams::init(small_config(4));
    auto in = random_graph(rng, 4);
    std::vector<GraphInput> one{in}, two{in, in};
    ModelParams g1, g2;
    EXPECT_NEAR(grad(one, p, g1), grad(two, p, g2), 1e-15);
    auto a = g1.tensors();
    auto b = g2.tensors();
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_LT((*a[k] - *b[k]).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_THROW(grad(std::vector<GraphInput>{}, p, g1), EmptyDataset);
}

TEST(Train, MemorizesSmallSet) {
    auto data = token_data(32, 3);
    ModelConfig cfg;
    cfg.d_in = data.table.dim() + embed::kKindDims;
    cfg.d_h = 32;
    cfg.steps = 3;
    TrainConfig tc;
    tc.epochs = 150;
    tc.batch_size = 8;
    tc.lr = 3e-3;
    auto m = train(data.inputs, {}, cfg, tc, data.table);
    ModelParams g;
    EXPECT_LT(grad(data.inputs, m.params, g), 0.01);
}

TEST(Train, SeparableToyWithinTwentyEpochs) {
    auto data = token_data(200, 4);
    ModelConfig cfg;
    cfg.d_in = data.table.dim() + embed::kKindDims;
    cfg.d_h = 16;
    cfg.steps = 2;
    TrainConfig tc;
    tc.epochs = 20;
    tc.lr = 3e-3;
    auto m = train(data.inputs, {}, cfg, tc, data.table);
    EXPECT_EQ(accuracy(m.params, data.inputs), 1.0);
}

TEST(Train, ZeroEpochsDeterminismAndCheckpoint) {
    auto data = token_data(40, 5);
    ModelConfig cfg;
    cfg.d_in = data.table.dim() + embed::kKindDims;
    cfg.d_h = 8;
    cfg.steps = 2;
    TrainConfig tc;
    tc.epochs = 0;
    auto none = train(data.inputs, data.inputs, cfg, tc, data.table);
    EXPECT_EQ(none.params, ModelParams::init(cfg));
    EXPECT_TRUE(none.log.empty());
    EXPECT_EQ(none.best_epoch, 0);

    tc.epochs = 3;
    std::vector<EpochLog> seen;
    auto a = train(data.inputs, std::span(data.inputs).subspan(0, 10), cfg, tc, data.table,
                   [&](const EpochLog& e) { seen.push_back(e); });
    auto b = train(data.inputs, std::span(data.inputs).subspan(0, 10), cfg, tc, data.table);
    EXPECT_EQ(a.log, b.log);
    EXPECT_EQ(a.params, b.params);
    EXPECT_EQ(seen, a.log);
    for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].epoch, static_cast<int>(i) + 1);
    const auto csv = log_csv(a.log);
    EXPECT_EQ(csv.substr(0, 25), "epoch,train_loss,val_acc\n");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);

    const auto text = serialize_checkpoint(a);
    auto back = deserialize_checkpoint(text);
    EXPECT_EQ(back.params, a.params);
    EXPECT_EQ(back.log, a.log);
    EXPECT_EQ(back.table, a.table);
    EXPECT_EQ(serialize_checkpoint(back), text);
    const auto h = a.table.vocab.hash();
    EXPECT_NO_THROW(deserialize_checkpoint(text, &h));
    const std::uint64_t other = h ^ 1;
    EXPECT_THROW(deserialize_checkpoint(text, &other), FormatError);
    EXPECT_THROW(deserialize_checkpoint(text.substr(0, 100)), FormatError);
    EXPECT_THROW(train(std::vector<GraphInput>{}, {}, cfg, tc, data.table), EmptyDataset);
}

TEST(GraphEmbedding, DimensionAndDeterminism) {
    auto corpus = token_corpus(4, 1);
    auto data = token_data(4, 1);
    TrainedModel m;
    ModelConfig cfg;
    cfg.d_in = data.table.dim() + embed::kKindDims;
    m.params = ModelParams::init(cfg);
    m.table = data.table;
    auto g = cpg::assemble_cpg(corpus[0]);
    auto e = graph_embedding(m, g);
    EXPECT_EQ(e.size(), cfg.c2);
    EXPECT_EQ(graph_embedding(m, g), e);
    auto same = cpg::assemble_cpg(SourceFunction{"other", corpus[0].source});
    EXPECT_EQ(graph_embedding(m, same), e);
}
