#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vision/explain/explainer.hpp"
#include "vision/ggnn/train.hpp"
#include "vision/rng.hpp"

using namespace vision;
using namespace vision::explain;
using ggnn::GraphInput;
using ggnn::ModelParams;

namespace {

struct Fixture {
    embed::EmbeddingTable table;
    std::vector<SourceFunction> fns;
    std::vector<cpg::CodePropertyGraph> graphs;
    std::vector<GraphInput> inputs;
};

// Small functions: most have at most a dozen CPG nodes.
Fixture tiny_functions(int n, std::uint64_t seed) {
    const char* stmts[] = {"gets(a);", "a = a + 1;", "puts(a);", "if (a > 3) return 0;", "b = a;", "a = 2;"};
    Rng rng(seed);
    Fixture f;
    for (int i = 0; i < n; ++i) {
        std::string body;
        const int k = static_cast<int>(rng.below(3));
        for (int s = 0; s < k; ++s) body += std::string(stmts[rng.below(6)]) + " ";
        SourceFunction fn{"t" + std::to_string(i), "int f(int a) { " + body + "return a; }"};
        fn.label = body.find("gets") != std::string::npos ? Label::Vulnerable : Label::Benign;
        f.fns.push_back(fn);
    }
    embed::SkipgramConfig sg;
    sg.dim = 6;
    sg.epochs = 1;
    f.table = embed::pretrain_skipgram(f.fns, embed::build_vocab(f.fns, 1), sg).table;
    for (const auto& fn : f.fns) {
        f.graphs.push_back(cpg::assemble_cpg(fn));
        f.inputs.push_back(ggnn::make_input(f.graphs.back(), f.table));
    }
    return f;
}

ggnn::ModelConfig small_config(int d_in, std::uint64_t seed) {
    ggnn::ModelConfig c;
    c.d_in = d_in;
    c.d_h = 6;
    c.steps = 2;
    c.c1 = 4;
    c.c2 = 3;
    c.seed = seed;
    return c;
}

ModelParams random_model(int d_in, std::uint64_t seed) {
    auto p = ModelParams::init(small_config(d_in, seed));
    Rng rng(seed);
    for (auto* t : p.tensors())
        for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] += rng.uniform(-0.5, 0.5);
    return p;
}

ModelParams constant_model(int d_in, double benign, double vulnerable) {
    auto p = ModelParams::zeros(small_config(d_in, 1));
    p.out_b(0, 0) = benign;
    p.out_b(1, 0) = vulnerable;
    return p;
}

// Prediction on the prefix, built through the CPG rather than the input.
ggnn::Prediction oracle_predict(const ModelParams& p, const Fixture& f, std::size_t idx, std::vector<int> keep) {
    std::sort(keep.begin(), keep.end());
    const auto sub = cpg::induced_subgraph(f.graphs[idx], keep);
    return ggnn::predict(p, ggnn::make_input(sub, f.table));
}

ExplainerConfig fast_config() {
    ExplainerConfig c;
    c.iterations = 40;
    return c;
}

}  // namespace

TEST(Attribute, SingleNodeGraph) {
    GraphInput g;
    g.x = Eigen::MatrixXd::Ones(1, 5);
    const auto a = attribute(random_model(5, 3), g);
    EXPECT_EQ(a.scores, std::vector<double>{1.0});
    const auto pos = positive_subgraph(random_model(5, 3), g, a.scores, a.prediction);
    EXPECT_EQ(pos.nodes, std::vector<int>{0});
    EXPECT_THROW(dependency_matrix(random_model(5, 3), g), DegenerateGraph);
}

TEST(Attribute, ScoresInUnitIntervalAndDeterministic) {
    auto f = tiny_functions(10, 5);
    const auto p = random_model(f.inputs[0].x.cols(), 8);
    for (const auto& in : f.inputs) {
        const auto a = attribute(p, in, fast_config(), "x");
        const auto b = attribute(p, in, fast_config(), "x");
        ASSERT_EQ(a.scores.size(), static_cast<std::size_t>(in.size()));
        EXPECT_EQ(a.scores, b.scores);
        for (double s : a.scores) {
            EXPECT_GE(s, 0.0);
            EXPECT_LE(s, 1.0);
        }
        EXPECT_EQ(a.prediction, ggnn::predict(p, in).label);
    }
}

TEST(Attribute, InputIgnoringModelWithoutPressureKeepsInitialMask) {
    // No gradient reaches the mask, so it never leaves m = 0.5.
    auto f = tiny_functions(3, 2);
    ExplainerConfig c;
    c.lambda = 0;
    c.beta = 0;
    c.iterations = 500;
    const auto a = attribute(constant_model(f.inputs[0].x.cols(), 0.2, 1.0), f.inputs[1], c);
    for (double s : a.scores) EXPECT_EQ(s, 0.5);
}

TEST(Attribute, SparsityPushesScoresDown) {
    auto f = tiny_functions(3, 2);
    const auto a = attribute(constant_model(f.inputs[0].x.cols(), 0.2, 1.0), f.inputs[1]);
    for (double s : a.scores) EXPECT_LT(s, 0.5);
}

TEST(Attribute, ConfigValidation) {
    ExplainerConfig c;
    c.lr = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.lambda = -1;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Rank, DescendingWithTiesByIndex) {
    EXPECT_EQ(rank_nodes({0.2, 0.9, 0.2, 0.9, 0.1}), (std::vector<int>{1, 3, 0, 2, 4}));
}

TEST(Subgraph, ConstantModelNeverFlips) {
    auto f = tiny_functions(6, 4);
    const auto p = constant_model(f.inputs[0].x.cols(), 0.0, 1.0);
    for (const auto& in : f.inputs) {
        if (in.size() < 2) continue;
        std::vector<double> scores(static_cast<std::size_t>(in.size()), 0.5);
        const auto neg = negative_subgraph(p, in, scores);
        EXPECT_TRUE(neg.exhausted);
        EXPECT_EQ(neg.nodes.size(), static_cast<std::size_t>(in.size() - 1));
        EXPECT_LE(neg.model_calls, in.size());
        const auto pos = positive_subgraph(p, in, scores, Label::Benign);
        EXPECT_TRUE(pos.exhausted);
    }
}

TEST(Subgraph, MatchesExhaustivePrefixOracle) {
    auto f = tiny_functions(80, 21);
    int checked = 0;
    for (std::uint64_t model_seed = 1; model_seed <= 3; ++model_seed) {
        const auto p = random_model(f.inputs[0].x.cols(), model_seed);
        Rng rng(model_seed * 77);
        for (std::size_t idx = 0; idx < f.inputs.size(); ++idx) {
            const auto& in = f.inputs[idx];
            const int n = in.size();
            if (n < 2 || n > 12) continue;
            ++checked;
            // Random scores with deliberate ties.
            std::vector<double> scores(static_cast<std::size_t>(n));
            for (auto& s : scores) s = static_cast<double>(rng.below(4)) / 4.0;
            std::vector<int> order(static_cast<std::size_t>(n));
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
            ASSERT_EQ(rank_nodes(scores), order);

            const auto full = ggnn::predict(p, in);
            const int cls = full.label == Label::Vulnerable ? 1 : 0;
            const Label truth = f.fns[idx].label;

            std::vector<ggnn::Prediction> prefix(static_cast<std::size_t>(n + 1));
            for (int k = 1; k <= n; ++k)
                prefix[static_cast<std::size_t>(k)] =
                    oracle_predict(p, f, idx, std::vector<int>(order.begin(), order.begin() + k));
            std::vector<ggnn::Prediction> removed(static_cast<std::size_t>(n));
            for (int k = 1; k < n; ++k)
                removed[static_cast<std::size_t>(k)] =
                    oracle_predict(p, f, idx, std::vector<int>(order.begin() + k, order.end()));

            int pos_k = 0;
            for (int k = 1; k <= n && !pos_k; ++k)
                if (prefix[static_cast<std::size_t>(k)].label == truth) pos_k = k;
            int neg_k = 0;
            for (int k = 1; k < n && !neg_k; ++k)
                if (removed[static_cast<std::size_t>(k)].label != full.label) neg_k = k;
            int opt_k = 1;
            for (int k = 2; k <= n; ++k)
                if (prefix[static_cast<std::size_t>(k)].probs[cls] > prefix[static_cast<std::size_t>(opt_k)].probs[cls])
                    opt_k = k;

            const auto pos = positive_subgraph(p, in, scores, truth);
            EXPECT_EQ(pos.exhausted, pos_k == 0);
            if (pos_k) {
                EXPECT_EQ(pos.nodes, std::vector<int>(order.begin(), order.begin() + pos_k));
                EXPECT_EQ(pos.model_calls, pos_k);
            }
            ASSERT_EQ(pos.trace.size(), static_cast<std::size_t>(pos.model_calls));
            for (std::size_t s = 0; s < pos.trace.size(); ++s)
                EXPECT_EQ(pos.trace[s].confidence, prefix[s + 1].confidence);
            EXPECT_LE(pos.model_calls, n);

            const auto neg = negative_subgraph(p, in, scores);
            EXPECT_EQ(neg.exhausted, neg_k == 0);
            EXPECT_EQ(neg.nodes, std::vector<int>(order.begin(), order.begin() + (neg_k ? neg_k : n - 1)));
            EXPECT_LE(neg.model_calls, n);
            ASSERT_EQ(neg.trace.size(), neg.nodes.size() + 1);
            EXPECT_EQ(neg.trace[0].label, full.label);
            for (std::size_t s = 1; s < neg.trace.size(); ++s)
                EXPECT_EQ(neg.trace[s].confidence, removed[s].confidence);

            const auto opt = optimal_subgraph(p, in, scores);
            EXPECT_EQ(opt.nodes, std::vector<int>(order.begin(), order.begin() + opt_k));
            EXPECT_DOUBLE_EQ(opt.confidence, prefix[static_cast<std::size_t>(opt_k)].probs[cls]);
            EXPECT_LE(opt.model_calls, n);
            ASSERT_EQ(opt.trace.size(), static_cast<std::size_t>(n));
            for (int k = 1; k <= n; ++k)
                EXPECT_EQ(opt.trace[static_cast<std::size_t>(k - 1)].confidence, prefix[static_cast<std::size_t>(k)].confidence);
        }
    }
    EXPECT_GE(checked, 50);
}

TEST(Masking, PoliciesAndRanges) {
    auto f = tiny_functions(4, 9);
    const auto& in = f.inputs[0];
    std::vector<int> kept;
    const auto removed = mask_nodes(in, {0}, MaskingPolicy::RemoveNode, &kept);
    EXPECT_EQ(removed.size(), in.size() - 1);
    EXPECT_EQ(kept.front(), 1);
    const auto zeroed = mask_nodes(in, {0}, MaskingPolicy::FeatureZero, &kept);
    EXPECT_EQ(zeroed.size(), in.size());
    EXPECT_TRUE(zeroed.x.row(0).isZero());
    EXPECT_EQ(kept.size(), static_cast<std::size_t>(in.size()));
    EXPECT_THROW(mask_nodes(in, {in.size()}, MaskingPolicy::RemoveNode), ggnn::ShapeError);
    std::vector<int> all(static_cast<std::size_t>(in.size()));
    std::iota(all.begin(), all.end(), 0);
    EXPECT_THROW(mask_nodes(in, all, MaskingPolicy::RemoveNode), ggnn::ShapeError);
    EXPECT_EQ(parse_masking_policy(to_string(MaskingPolicy::FeatureZero)), MaskingPolicy::FeatureZero);
    EXPECT_THROW(parse_masking_policy("drop"), ConfigError);
}

TEST(WhatIf, EmptyMaskReproducesAttribution) {
    auto f = tiny_functions(5, 13);
    const auto p = random_model(f.inputs[0].x.cols(), 4);
    const auto& in = f.inputs[2];
    const auto a = attribute(p, in, fast_config());
    const auto w = what_if_mask(p, in, a.scores, {}, MaskingPolicy::RemoveNode, fast_config());
    EXPECT_EQ(w.scores, a.scores);
    EXPECT_EQ(w.prediction, a.prediction);
    EXPECT_EQ(w.confidence, a.confidence);
    for (double d : w.delta) EXPECT_EQ(d, 0.0);
}

TEST(Dependency, RowsRecomputeBitExactAndAgreeWithWhatIf) {
    auto f = tiny_functions(30, 17);
    const auto p = random_model(f.inputs[0].x.cols(), 6);
    int checked = 0;
    for (std::size_t idx = 0; idx < f.inputs.size() && checked < 4; ++idx) {
        const auto& in = f.inputs[idx];
        if (in.size() < 4) continue;
        ++checked;
        for (auto policy : {MaskingPolicy::RemoveNode, MaskingPolicy::FeatureZero}) {
            const auto d = dependency_matrix(p, in, policy, fast_config(), f.fns[idx].id);
            ASSERT_EQ(d.m.rows(), in.size());
            const auto orig = attribute(p, in, fast_config()).scores;
            for (int i = 0; i < in.size(); ++i) {
                EXPECT_EQ(d.m(i, i), orig[static_cast<std::size_t>(i)]);
                const Eigen::VectorXd row = dependency_row(p, in, orig, i, policy, fast_config());
                EXPECT_TRUE(row.transpose() == d.m.row(i)) << "row " << i;
                const auto w = what_if_mask(p, in, orig, {i}, policy, fast_config());
                EXPECT_EQ(std::isnan(w.delta[static_cast<std::size_t>(i)]), policy == MaskingPolicy::RemoveNode);
                for (int j = 0; j < in.size(); ++j) {
                    if (j == i) continue;
                    EXPECT_EQ(w.delta[static_cast<std::size_t>(j)], d.m(i, j));
                    EXPECT_GE(d.m(i, j), 0.0);
                }
            }
        }
    }
    EXPECT_EQ(checked, 4);
}

TEST(Serialization, RoundTrips) {
    AttributionResult a;
    a.function_id = "fn-1";
    a.prediction = Label::Vulnerable;
    a.confidence = 0.8125;
    a.scores = {0.1, 0.30000000000000004, 1.0 / 3.0};
    a.meta.iterations = 17;
    a.meta.seed = 99;
    const auto b = attribution_from_json(attribution_to_json(a));
    EXPECT_EQ(b.scores, a.scores);
    EXPECT_EQ(b.prediction, a.prediction);
    EXPECT_EQ(b.confidence, a.confidence);
    EXPECT_EQ(b.meta.iterations, 17);
    EXPECT_EQ(b.meta.seed, 99u);

    DependencyMatrix d;
    d.function_id = "fn-2";
    d.policy = MaskingPolicy::FeatureZero;
    d.m = Eigen::MatrixXd::Random(3, 3).cwiseAbs();
    EXPECT_EQ(dependency_from_json(dependency_to_json(d)), d);
    EXPECT_THROW(dependency_from_json(R"({"function_id":"x","policy":"remove-node","n":2,"m":[1,2,3]})"),
                 FormatError);
    EXPECT_THROW(attribution_from_json("{}"), FormatError);
}
