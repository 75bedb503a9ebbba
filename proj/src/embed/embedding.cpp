#include "vision/embed/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

#include "vision/rng.hpp"

namespace vision::embed {

using nlohmann::ordered_json;

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(std::vector<std::string> regular) {
    tokens_.reserve(regular.size() + 2);
    tokens_.emplace_back(kUnkToken);
    tokens_.emplace_back(kPadToken);
    for (auto& t : regular) tokens_.push_back(std::move(t));
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
            throw Error("duplicate vocabulary token '" + tokens_[i] + "'");
    }
}

int Vocab::index(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

std::uint64_t Vocab::hash() const {
    std::uint64_t h = fnv1a64("vocab");
    for (const auto& t : tokens_) {
        h = fnv1a64(t, h);
        h = fnv1a64(std::string_view("\0", 1), h);
    }
    return h;
}

std::vector<std::string> token_stream(const SourceFunction& fn) {
    std::vector<std::string> out;
    try {
        for (const auto& t : cpg::tokenize(fn.source)) out.push_back(cpg::normalize_token(t));
    } catch (const cpg::LexError&) {
        out.clear();
    }
    return out;
}

Vocab build_vocab(std::span<const SourceFunction> corpus, int min_count) {
    if (corpus.empty()) throw EmptyCorpus();
    std::map<std::string, long> freq;
    for (const auto& fn : corpus)
        for (auto& t : token_stream(fn)) ++freq[t];
    std::vector<std::pair<std::string, long>> kept;
    for (auto& [tok, n] : freq)
        if (n >= min_count && tok != Vocab::kUnkToken && tok != Vocab::kPadToken) kept.emplace_back(tok, n);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> tokens;
    tokens.reserve(kept.size());
    for (auto& [tok, n] : kept) tokens.push_back(tok);
    return Vocab(std::move(tokens));
}

void SkipgramConfig::validate() const {
    std::string problems;
    if (dim < 1) problems += " dim must be >= 1;";
    if (window < 1) problems += " window must be >= 1;";
    if (negatives < 0) problems += " negatives must be >= 0;";
    if (epochs < 0) problems += " epochs must be >= 0;";
    if (!(lr > 0)) problems += " lr must be > 0;";
    if (heldout_fraction < 0 || heldout_fraction >= 1) problems += " heldout_fraction must be in [0,1);";
    if (!problems.empty()) throw ConfigError("invalid skip-gram config:" + problems);
}

bool EmbeddingTable::operator==(const EmbeddingTable& o) const {
    return vocab == o.vocab && rows.rows() == o.rows.rows() && rows.cols() == o.rows.cols() && rows == o.rows &&
           meta.window == o.meta.window && meta.negatives == o.meta.negatives && meta.dim == o.meta.dim &&
           meta.epochs == o.meta.epochs && meta.lr == o.meta.lr && meta.seed == o.meta.seed;
}

namespace {

double sigmoid(double x) {
    if (x > 30) return 1.0;
    if (x < -30) return 0.0;
    return 1.0 / (1.0 + std::exp(-x));
}

// Regular rows scaled to unit length (rare tokens get few updates and would
// otherwise be nearly invisible next to the one-hot kind block), then
// UNK = mean of the regular rows and PAD = zeros.
void finalize_specials(Eigen::MatrixXd& rows) {
    const Eigen::Index v = rows.rows();
    for (Eigen::Index r = 2; r < v; ++r) {
        const double norm = rows.row(r).norm();
        if (norm > 0) rows.row(r) /= norm;
    }
    rows.row(Vocab::kPad).setZero();
    if (v > 2)
        rows.row(Vocab::kUnk) = rows.bottomRows(v - 2).colwise().mean();
    else
        rows.row(Vocab::kUnk).setZero();
}

Eigen::MatrixXd init_rows(int vocab_size, int dim, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x5eed));
    Eigen::MatrixXd rows(vocab_size, dim);
    for (int r = 0; r < vocab_size; ++r)
        for (int c = 0; c < dim; ++c) rows(r, c) = (rng.uniform() - 0.5) / dim;
    finalize_specials(rows);
    return rows;
}

std::vector<std::vector<int>> streams_of(std::span<const SourceFunction> corpus, const Vocab& vocab) {
    std::vector<std::vector<int>> out;
    out.reserve(corpus.size());
    for (const auto& fn : corpus) {
        std::vector<int> ids;
        for (auto& t : token_stream(fn)) {
            const int id = vocab.index(t);
            if (id >= 2) ids.push_back(id);
        }
        out.push_back(std::move(ids));
    }
    return out;
}

double mean_positive_score(const Eigen::MatrixXd& in, const Eigen::MatrixXd& out,
                           const std::vector<std::vector<int>>& streams, int window) {
    double total = 0.0;
    long count = 0;
    for (const auto& s : streams) {
        const int n = static_cast<int>(s.size());
        for (int i = 0; i < n; ++i)
            for (int j = std::max(0, i - window); j <= std::min(n - 1, i + window); ++j) {
                if (j == i) continue;
                total += sigmoid(in.row(s[i]).dot(out.row(s[j])));
                ++count;
            }
    }
    return count ? total / static_cast<double>(count) : 0.5;
}

}  // namespace

EmbeddingTable initial_table(const Vocab& vocab, const SkipgramConfig& cfg) {
    cfg.validate();
    EmbeddingTable t;
    t.vocab = vocab;
    t.meta = cfg;
    t.rows = init_rows(vocab.size(), cfg.dim, cfg.seed);
    return t;
}

SkipgramResult pretrain_skipgram(std::span<const SourceFunction> corpus, const Vocab& vocab,
                                 const SkipgramConfig& cfg) {
    cfg.validate();
    SkipgramResult result;
    result.table = initial_table(vocab, cfg);
    Eigen::MatrixXd& in = result.table.rows;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(vocab.size(), cfg.dim);

    auto all = streams_of(corpus, vocab);
    std::vector<std::size_t> order(all.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng split_rng(mix_seed(cfg.seed, 0x11));
    split_rng.shuffle(order);
    const auto n_held = static_cast<std::size_t>(std::floor(cfg.heldout_fraction * static_cast<double>(all.size())));
    std::vector<std::vector<int>> train, held;
    for (std::size_t i = 0; i < order.size(); ++i) (i < n_held ? held : train).push_back(all[order[i]]);
    if (held.empty()) held = train;

    // Unigram^0.75 noise distribution over training tokens.
    std::vector<double> cumulative(vocab.size(), 0.0);
    {
        std::vector<double> counts(vocab.size(), 0.0);
        for (const auto& s : train)
            for (int id : s) counts[id] += 1.0;
        double acc = 0.0;
        for (int i = 0; i < vocab.size(); ++i) {
            acc += std::pow(counts[i], 0.75);
            cumulative[i] = acc;
        }
    }
    const double noise_total = cumulative.empty() ? 0.0 : cumulative.back();

    long total_pairs = 0;
    for (const auto& s : train) total_pairs += static_cast<long>(s.size());
    total_pairs *= cfg.epochs;

    Rng rng(mix_seed(cfg.seed, 0x22));
    Eigen::VectorXd grad_in(cfg.dim);
    long processed = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss = 0.0;
        long pairs = 0;
        for (const auto& s : train) {
            const int n = static_cast<int>(s.size());
            for (int i = 0; i < n; ++i, ++processed) {
                const double lr =
                    cfg.lr * std::max(1e-4, 1.0 - static_cast<double>(processed) / static_cast<double>(total_pairs + 1));
                const int center = s[i];
                for (int j = std::max(0, i - cfg.window); j <= std::min(n - 1, i + cfg.window); ++j) {
                    if (j == i) continue;
                    grad_in.setZero();
                    for (int k = 0; k <= cfg.negatives; ++k) {
                        int target;
                        double label;
                        if (k == 0) {
                            target = s[j];
                            label = 1.0;
                        } else {
                            if (noise_total <= 0) break;
                            const double u = rng.uniform() * noise_total;
                            target = static_cast<int>(std::upper_bound(cumulative.begin(), cumulative.end(), u) -
                                                      cumulative.begin());
                            target = std::min(target, vocab.size() - 1);
                            if (target == s[j]) continue;
                            label = 0.0;
                        }
                        const double f = sigmoid(in.row(center).dot(out.row(target)));
                        loss -= label > 0 ? std::log(std::max(f, 1e-12)) : std::log(std::max(1.0 - f, 1e-12));
                        const double g = (label - f) * lr;
                        grad_in += g * out.row(target).transpose();
                        out.row(target) += g * in.row(center);
                    }
                    in.row(center) += grad_in.transpose();
                    ++pairs;
                }
            }
        }
        result.train_objective.push_back(pairs ? loss / static_cast<double>(pairs) : 0.0);
        result.heldout_positive_score.push_back(mean_positive_score(in, out, held, cfg.window));
    }
    if (cfg.epochs > 0) finalize_specials(in);
    return result;
}

Eigen::MatrixXd node_features(const cpg::CodePropertyGraph& g, const EmbeddingTable& table) {
    const int d = table.dim();
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(g.nodes.size()), d + kKindDims);
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const auto& node = g.nodes[i];
        const auto r = static_cast<Eigen::Index>(i);
        if (node.tokens.empty()) {
            x.row(r).head(d) = table.rows.row(Vocab::kPad);
        } else {
            Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(d);
            for (const auto& t : node.tokens) acc += table.rows.row(table.vocab.index(t));
            x.row(r).head(d) = acc / static_cast<double>(node.tokens.size());
        }
        x(r, d + static_cast<Eigen::Index>(node.kind)) = 1.0;
    }
    return x;
}

std::string serialize_table(const EmbeddingTable& t) {
    ordered_json j;
    j["format"] = "vision-embedding";
    j["version"] = EmbeddingTable::kVersion;
    j["vocab_size"] = t.vocab.size();
    j["d_tok"] = t.dim();
    j["seed"] = t.meta.seed;
    j["meta"] = {{"window", t.meta.window},
                 {"negatives", t.meta.negatives},
                 {"epochs", t.meta.epochs},
                 {"lr", t.meta.lr},
                 {"heldout_fraction", t.meta.heldout_fraction}};
    j["vocab_hash"] = hex64(t.vocab.hash());
    std::vector<std::string> regular(t.vocab.tokens().begin() + 2, t.vocab.tokens().end());
    j["vocab"] = regular;
    ordered_json rows = ordered_json::array();
    for (Eigen::Index r = 0; r < t.rows.rows(); ++r) {
        std::vector<double> row(t.rows.cols());
        for (Eigen::Index c = 0; c < t.rows.cols(); ++c) row[c] = t.rows(r, c);
        rows.push_back(row);
    }
    j["rows"] = std::move(rows);
    return j.dump() + "\n";
}

EmbeddingTable deserialize_table(std::string_view text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(1, "json", e.what());
    }
    try {
        if (j.value("format", "") != "vision-embedding") throw FormatError(1, "format", "not an embedding table");
        if (j.at("version").get<int>() != EmbeddingTable::kVersion) throw FormatError(1, "version", "unsupported version");
        EmbeddingTable t;
        t.vocab = Vocab(j.at("vocab").get<std::vector<std::string>>());
        const int v = j.at("vocab_size").get<int>();
        const int d = j.at("d_tok").get<int>();
        if (v != t.vocab.size()) throw FormatError(1, "vocab_size", "does not match vocab list");
        if (j.contains("vocab_hash") && j.at("vocab_hash").get<std::string>() != hex64(t.vocab.hash()))
            throw FormatError(1, "vocab_hash", "hash mismatch");
        t.meta.dim = d;
        t.meta.seed = j.at("seed").get<std::uint64_t>();
        const auto& m = j.at("meta");
        t.meta.window = m.at("window").get<int>();
        t.meta.negatives = m.at("negatives").get<int>();
        t.meta.epochs = m.at("epochs").get<int>();
        t.meta.lr = m.at("lr").get<double>();
        t.meta.heldout_fraction = m.value("heldout_fraction", 0.1);
        const auto& rows = j.at("rows");
        if (!rows.is_array() || static_cast<int>(rows.size()) != v) throw FormatError(1, "rows", "expected vocab_size rows");
        t.rows.resize(v, d);
        for (int r = 0; r < v; ++r) {
            const auto& row = rows[r];
            if (!row.is_array() || static_cast<int>(row.size()) != d)
                throw FormatError(1, "rows[" + std::to_string(r) + "]", "expected d_tok values");
            for (int c = 0; c < d; ++c) t.rows(r, c) = row[c].get<double>();
        }
        if (!t.rows.allFinite()) throw FormatError(1, "rows", "non-finite value");
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(1, "table", e.what());
    }
}

}  // namespace vision::embed
