#include "vision/ggnn/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "vision/rng.hpp"

namespace vision::ggnn {

using nlohmann::ordered_json;

void TrainConfig::validate() const {
    std::string problems;
    if (epochs < 0) problems += " epochs must be >= 0;";
    if (batch_size < 1) problems += " batch_size must be >= 1;";
    if (!(lr > 0)) problems += " lr must be > 0;";
    if (beta1 < 0 || beta1 >= 1) problems += " beta1 must be in [0,1);";
    if (beta2 < 0 || beta2 >= 1) problems += " beta2 must be in [0,1);";
    if (!(eps > 0)) problems += " eps must be > 0;";
    if (clip_norm < 0) problems += " clip_norm must be >= 0;";
    if (!problems.empty()) throw ConfigError("invalid training config:" + problems);
}

double accuracy(const ModelParams& p, std::span<const GraphInput> data) {
    if (data.empty()) return 0.0;
    long correct = 0;
    for (const auto& in : data) correct += predict(p, in).label == in.label;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainedModel train(std::span<const GraphInput> train_set, std::span<const GraphInput> val_set,
                   const ModelConfig& model_cfg, const TrainConfig& cfg, embed::EmbeddingTable table,
                   const EpochCallback& on_epoch) {
    cfg.validate();
    if (train_set.empty()) throw EmptyDataset();
    TrainedModel out;
    out.params = ModelParams::init(model_cfg);
    out.table = std::move(table);
    out.train_cfg = cfg;

    ModelParams p = out.params;
    ModelParams m1 = ModelParams::zeros(model_cfg);
    ModelParams m2 = ModelParams::zeros(model_cfg);
    ModelParams g;
    double best_acc = -1.0;
    long t = 0;
    std::vector<std::size_t> order(train_set.size());
    std::vector<const GraphInput*> batch;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(&train_set[order[i]]);
            loss_sum += grad(std::span<const GraphInput* const>(batch), p, g) * static_cast<double>(batch.size());

            double scale = 1.0;
            if (cfg.clip_norm > 0) {
                double sq = 0.0;
                for (const auto* x : std::as_const(g).tensors()) sq += x->squaredNorm();
                const double norm = std::sqrt(sq);
                if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
            }
            ++t;
            const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
            const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
            auto pt = p.tensors();
            auto gt = g.tensors();
            auto a = m1.tensors();
            auto b = m2.tensors();
            for (std::size_t k = 0; k < pt.size(); ++k) {
                const Eigen::MatrixXd gk = *gt[k] * scale;
                *a[k] = cfg.beta1 * *a[k] + (1.0 - cfg.beta1) * gk;
                *b[k] = cfg.beta2 * *b[k] + (1.0 - cfg.beta2) * gk.cwiseProduct(gk);
                pt[k]->array() -= cfg.lr * (a[k]->array() / c1) / ((b[k]->array() / c2).sqrt() + cfg.eps);
            }
        }
        EpochLog entry{epoch, loss_sum / static_cast<double>(train_set.size()), accuracy(p, val_set)};
        out.log.push_back(entry);
        if (val_set.empty() || entry.val_acc > best_acc) {
            best_acc = entry.val_acc;
            out.params = p;
            out.best_epoch = epoch;
        }
        if (on_epoch) on_epoch(entry);
    }
    return out;
}

Prediction predict(const TrainedModel& m, const cpg::CodePropertyGraph& g) { return predict(m.params, m.input(g)); }

Eigen::VectorXd graph_embedding(const TrainedModel& m, const cpg::CodePropertyGraph& g) {
    return forward(m.params, m.input(g)).graph_embedding;
}

std::string log_csv(std::span<const EpochLog> log) {
    std::string out = "epoch,train_loss,val_acc\n";
    char buf[96];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", e.epoch, e.train_loss, e.val_acc);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr int kCheckpointVersion = 1;

ordered_json tensor_json(const Eigen::MatrixXd& m) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

}  // namespace

std::string serialize_checkpoint(const TrainedModel& m) {
    ordered_json j;
    j["format"] = "vision-checkpoint";
    j["version"] = kCheckpointVersion;
    const auto& c = m.params.cfg;
    j["model"] = {{"d_in", c.d_in}, {"d_h", c.d_h}, {"steps", c.steps}, {"c1", c.c1}, {"c2", c.c2}, {"seed", c.seed}};
    const auto& t = m.train_cfg;
    j["train"] = {{"epochs", t.epochs},       {"batch_size", t.batch_size}, {"lr", t.lr},     {"beta1", t.beta1},
                  {"beta2", t.beta2},         {"eps", t.eps},               {"clip_norm", t.clip_norm},
                  {"seed", t.seed}};
    j["vocab_hash"] = hex64(m.table.vocab.hash());
    j["best_epoch"] = m.best_epoch;
    ordered_json log = ordered_json::array();
    for (const auto& e : m.log) log.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_acc", e.val_acc}});
    j["log"] = std::move(log);
    ordered_json tensors;
    const auto& names = ModelParams::tensor_names();
    auto values = m.params.tensors();
    for (std::size_t i = 0; i < names.size(); ++i) tensors[names[i]] = tensor_json(*values[i]);
    j["tensors"] = std::move(tensors);
    j["embedding"] = ordered_json::parse(embed::serialize_table(m.table));
    return j.dump() + "\n";
}

TrainedModel deserialize_checkpoint(std::string_view text, const std::uint64_t* expected_vocab_hash) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(1, "json", e.what());
    }
    std::string field = "format";
    try {
        if (j.value("format", "") != "vision-checkpoint") throw FormatError(1, "format", "not a checkpoint");
        field = "version";
        if (j.at("version").get<int>() != kCheckpointVersion) throw FormatError(1, field, "unsupported version");
        TrainedModel m;
        field = "embedding";
        m.table = embed::deserialize_table(j.at("embedding").dump());
        field = "vocab_hash";
        const auto stored = j.at("vocab_hash").get<std::string>();
        if (stored != hex64(m.table.vocab.hash()))
            throw FormatError(1, field, "checkpoint vocabulary hash does not match its embedding table");
        if (expected_vocab_hash && stored != hex64(*expected_vocab_hash))
            throw FormatError(1, field, "checkpoint was trained with a different vocabulary");
        field = "model";
        const auto& mc = j.at("model");
        ModelConfig cfg;
        cfg.d_in = mc.at("d_in").get<int>();
        cfg.d_h = mc.at("d_h").get<int>();
        cfg.steps = mc.at("steps").get<int>();
        cfg.c1 = mc.at("c1").get<int>();
        cfg.c2 = mc.at("c2").get<int>();
        cfg.seed = mc.at("seed").get<std::uint64_t>();
        m.params = ModelParams::zeros(cfg);
        field = "train";
        const auto& tc = j.at("train");
        m.train_cfg.epochs = tc.at("epochs").get<int>();
        m.train_cfg.batch_size = tc.at("batch_size").get<int>();
        m.train_cfg.lr = tc.at("lr").get<double>();
        m.train_cfg.beta1 = tc.at("beta1").get<double>();
        m.train_cfg.beta2 = tc.at("beta2").get<double>();
        m.train_cfg.eps = tc.at("eps").get<double>();
        m.train_cfg.clip_norm = tc.at("clip_norm").get<double>();
        m.train_cfg.seed = tc.at("seed").get<std::uint64_t>();
        field = "best_epoch";
        m.best_epoch = j.at("best_epoch").get<int>();
        field = "log";
        for (const auto& e : j.at("log"))
            m.log.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(), e.at("val_acc").get<double>()});
        const auto& names = ModelParams::tensor_names();
        auto values = m.params.tensors();
        for (std::size_t i = 0; i < names.size(); ++i) {
            field = "tensors." + names[i];
            const auto& tj = j.at("tensors").at(names[i]);
            auto& dst = *values[i];
            if (tj.at("rows").get<Eigen::Index>() != dst.rows() || tj.at("cols").get<Eigen::Index>() != dst.cols())
                throw FormatError(1, field, "shape does not match model config");
            const auto& data = tj.at("data");
            if (static_cast<Eigen::Index>(data.size()) != dst.size()) throw FormatError(1, field, "wrong element count");
            std::size_t k = 0;
            for (Eigen::Index r = 0; r < dst.rows(); ++r)
                for (Eigen::Index c = 0; c < dst.cols(); ++c) dst(r, c) = data[k++].get<double>();
        }
        if (m.table.dim() + embed::kKindDims != cfg.d_in)
            throw FormatError(1, "model.d_in", "does not match embedding width");
        if (!m.params.all_finite()) throw FormatError(1, "tensors", "non-finite value");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(1, field, e.what());
    }
}

}  // namespace vision::ggnn
