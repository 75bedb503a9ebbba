#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vision/embed/embedding.hpp"
#include "vision/ggnn/model.hpp"

namespace vision::ggnn {

struct TrainConfig {
    int epochs = 20;
    int batch_size = 32;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 5.0;  // global gradient norm; 0 disables
    std::uint64_t seed = 1;

    void validate() const;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_acc = 0.0;

    bool operator==(const EpochLog&) const = default;
};

struct TrainedModel {
    ModelParams params;
    embed::EmbeddingTable table;
    TrainConfig train_cfg;
    std::vector<EpochLog> log;
    int best_epoch = 0;  // 0 = initial parameters

    GraphInput input(const cpg::CodePropertyGraph& g) const { return make_input(g, table); }
};

double accuracy(const ModelParams& p, std::span<const GraphInput> data);

using EpochCallback = std::function<void(const EpochLog&)>;

/// Adam on shuffled mini-batches; keeps the parameters of the epoch with
/// the strictly best validation accuracy (the last epoch if `val` is empty).
TrainedModel train(std::span<const GraphInput> train_set, std::span<const GraphInput> val_set,
                   const ModelConfig& model_cfg, const TrainConfig& cfg, embed::EmbeddingTable table,
                   const EpochCallback& on_epoch = {});

Prediction predict(const TrainedModel& m, const cpg::CodePropertyGraph& g);
Eigen::VectorXd graph_embedding(const TrainedModel& m, const cpg::CodePropertyGraph& g);

/// `epoch,train_loss,val_acc` rows.
std::string log_csv(std::span<const EpochLog> log);

std::string serialize_checkpoint(const TrainedModel& m);
/// Rejects files whose vocabulary hash disagrees with the embedded table
/// or, when given, with `expected_vocab_hash`.
TrainedModel deserialize_checkpoint(std::string_view text, const std::uint64_t* expected_vocab_hash = nullptr);

}  // namespace vision::ggnn
