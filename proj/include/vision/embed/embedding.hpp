#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "vision/common.hpp"
#include "vision/cpg/cpg.hpp"

namespace vision::embed {

class EmptyCorpus : public Error {
public:
    EmptyCorpus() : Error("empty corpus") {}
};

/// Token vocabulary. Index 0 is UNK and index 1 is PAD; the remaining
/// tokens are ordered by (-frequency, token).
class Vocab {
public:
    static constexpr int kUnk = 0;
    static constexpr int kPad = 1;
    static constexpr std::string_view kUnkToken = "<UNK>";
    static constexpr std::string_view kPadToken = "<PAD>";

    Vocab();
    explicit Vocab(std::vector<std::string> regular_tokens);

    int index(std::string_view token) const;
    bool contains(std::string_view token) const;
    const std::string& token(int index) const { return tokens_.at(static_cast<std::size_t>(index)); }
    int size() const { return static_cast<int>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    std::uint64_t hash() const;

    bool operator==(const Vocab& o) const { return tokens_ == o.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

/// Normalized token stream of one function, or empty if it does not lex.
std::vector<std::string> token_stream(const SourceFunction& fn);

Vocab build_vocab(std::span<const SourceFunction> corpus, int min_count);

struct SkipgramConfig {
    int window = 5;
    int negatives = 5;
    int dim = 32;
    int epochs = 5;
    double lr = 0.025;
    std::uint64_t seed = 1;
    double heldout_fraction = 0.1;

    void validate() const;
};

struct EmbeddingTable {
    static constexpr int kVersion = 1;

    Vocab vocab;
    Eigen::MatrixXd rows;  // |vocab| x dim
    SkipgramConfig meta;

    int dim() const { return static_cast<int>(rows.cols()); }
    Eigen::VectorXd row(int index) const { return rows.row(index).transpose(); }
    bool operator==(const EmbeddingTable& o) const;
};

struct SkipgramResult {
    EmbeddingTable table;
    std::vector<double> train_objective;        // mean SGNS loss per epoch
    // Mean sigmoid score of held-out positive pairs after each epoch. The
    // untrained value (exactly 0.5, output vectors start at zero) is not
    // recorded: pairs with low PMI settle below it.
    std::vector<double> heldout_positive_score;
};

/// Initial table for (vocab, cfg): the state `pretrain_skipgram` starts from.
EmbeddingTable initial_table(const Vocab& vocab, const SkipgramConfig& cfg);

/// Skip-gram with negative sampling trained by SGD on per-function token
/// streams. Single-threaded and bit-reproducible for a fixed seed.
SkipgramResult pretrain_skipgram(std::span<const SourceFunction> corpus, const Vocab& vocab,
                                 const SkipgramConfig& cfg);

inline constexpr int kKindDims = static_cast<int>(cpg::kNodeKindCount);

/// Row per node: mean token embedding followed by a one-hot node kind.
Eigen::MatrixXd node_features(const cpg::CodePropertyGraph& g, const EmbeddingTable& table);

std::string serialize_table(const EmbeddingTable& table);
EmbeddingTable deserialize_table(std::string_view text);

}  // namespace vision::embed
