#pragma once

#include <string>
#include <vector>

#include "vision/bench/benchmark.hpp"
#include "vision/explain/explainer.hpp"
#include "vision/ggnn/train.hpp"
#include "vision/metrics/metrics.hpp"

namespace vision::pipeline {

/// Embedding plus network settings for one benchmark. `model.d_in` is
/// derived from the embedding width.
struct TrainOptions {
    embed::SkipgramConfig skipgram;
    int min_count = 1;
    ggnn::ModelConfig model;
    ggnn::TrainConfig train;

    void validate() const;
};

/// Vocabulary and skip-gram on the benchmark's training functions, then the
/// GGNN on train with model selection on val.
ggnn::TrainedModel train_benchmark(const bench::Benchmark& b, const TrainOptions& opt,
                                   const ggnn::EpochCallback& on_epoch = {});

struct EvalOptions {
    metrics::ReportConfig report;
    bool attributions = true;  // needed for Intra-B/Intra-V/Inter-D
    explain::ExplainerConfig explainer;
};

struct Evaluation {
    metrics::MetricsReport report;
    std::vector<ggnn::Prediction> predictions;
    Eigen::MatrixXd embeddings;  // one row per test function
    std::vector<explain::AttributionResult> attributions;
    metrics::Projection projection;
};

/// Every report column for one model on a paired test set.
Evaluation evaluate(const ggnn::TrainedModel& m, const std::vector<SourceFunction>& test, const std::string& split,
                    const EvalOptions& opt = {});

}  // namespace vision::pipeline
