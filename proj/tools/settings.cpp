#include "settings.hpp"

#include <functional>
#include <map>

#include "vision/bench/dataset.hpp"

namespace vision::cli {

using nlohmann::json;

namespace {

class Section {
public:
    Section(const json& doc, std::string name, std::vector<std::string>& problems)
        : name_(std::move(name)), problems_(problems) {
        if (!doc.contains(name_)) return;
        node_ = &doc.at(name_);
        if (!node_->is_object()) {
            problems_.push_back(name_ + ": must be an object");
            node_ = nullptr;
        }
    }

    template <typename T>
    Section& field(const std::string& key, T& dst) {
        known_.push_back(key);
        if (!node_ || !node_->contains(key)) return *this;
        try {
            const auto& v = node_->at(key);
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw std::invalid_argument("expected true or false");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
                if constexpr (std::is_unsigned_v<T>)
                    if (v.get<long long>() < 0) throw std::invalid_argument("expected a non-negative integer");
            }
            dst = v.get<T>();
        } catch (const std::exception& e) {
            problems_.push_back(name_ + "." + key + ": " + e.what());
        }
        return *this;
    }

    void finish() {
        if (!node_) return;
        for (const auto& [key, v] : node_->items())
            if (std::find(known_.begin(), known_.end(), key) == known_.end()) problems_.push_back(name_ + "." + key + ": unknown key");
    }

private:
    std::string name_;
    std::vector<std::string>& problems_;
    const json* node_ = nullptr;
    std::vector<std::string> known_;
};

void collect(std::vector<std::string>& problems, const std::function<void()>& check) {
    try {
        check();
    } catch (const ConfigError& e) {
        problems.push_back(e.what());
    }
}

}  // namespace

void Settings::validate() const {
    std::vector<std::string> problems;
    collect(problems, [&] { synth.validate(); });
    collect(problems, [&] { bench::BenchmarkSpec{100, train_size, val_size, seed}.validate(); });
    for (int r : ratios)
        if (r < 0 || r > 100 || r % 10 != 0) problems.push_back("bench.ratios: " + std::to_string(r) + " is not one of 0, 10, ..., 100");
    if (ratios.empty()) problems.push_back("bench.ratios: must not be empty");
    if (max_edit_tokens < 1) problems.push_back("augment.max_edit_tokens: must be >= 1");
    collect(problems, [&] { train.validate(); });
    collect(problems, [&] { eval.explainer.validate(); });
    if (eval.report.k_nn < 1) problems.push_back("metrics.k_nn: must be >= 1");
    if (service.port < 0 || service.port > 65535) problems.push_back("service.port: must be in 0..65535");
    if (problems.empty()) return;
    std::string msg = "invalid settings:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
}

void apply_config(Settings& s, const json& doc) {
    std::vector<std::string> problems;
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    if (!doc.contains("version"))
        problems.push_back("version: required (current is " + std::to_string(kConfigVersion) + ")");
    else if (doc.at("version") != kConfigVersion)
        problems.push_back("version: unsupported " + doc.at("version").dump() + " (current is " + std::to_string(kConfigVersion) + ")");
    const std::vector<std::string> sections{"version", "seed",     "synth",     "bench",   "augment", "skipgram",
                                            "model",   "train",    "explainer", "metrics", "service"};
    for (const auto& [key, v] : doc.items())
        if (std::find(sections.begin(), sections.end(), key) == sections.end()) problems.push_back(key + ": unknown section");
    if (doc.contains("seed")) {
        if (doc.at("seed").is_number_unsigned() || (doc.at("seed").is_number_integer() && doc.at("seed").get<long long>() >= 0))
            s.seed = doc.at("seed").get<std::uint64_t>();
        else
            problems.push_back("seed: expected a non-negative integer");
    }

    Section(doc, "synth", problems)
        .field("n_pairs", s.synth.n_pairs)
        .field("spurious_strength", s.synth.spurious_strength)
        .field("p_sink", s.synth.p_sink)
        .field("p_second_site", s.synth.p_second_site)
        .field("p_partial_guard", s.synth.p_partial_guard)
        .field("p_distractor_guard", s.synth.p_distractor_guard)
        .field("p_constant_sink", s.synth.p_constant_sink)
        .field("min_filler", s.synth.min_filler)
        .field("max_filler", s.synth.max_filler)
        .field("decoy", s.synth.decoy)
        .finish();
    Section(doc, "bench", problems)
        .field("total_train_size", s.train_size)
        .field("total_val_size", s.val_size)
        .field("ratios", s.ratios)
        .finish();
    Section(doc, "augment", problems).field("max_edit_tokens", s.max_edit_tokens).finish();
    Section(doc, "skipgram", problems)
        .field("dim", s.train.skipgram.dim)
        .field("window", s.train.skipgram.window)
        .field("negatives", s.train.skipgram.negatives)
        .field("epochs", s.train.skipgram.epochs)
        .field("lr", s.train.skipgram.lr)
        .field("min_count", s.train.min_count)
        .finish();
    Section(doc, "model", problems)
        .field("d_h", s.train.model.d_h)
        .field("steps", s.train.model.steps)
        .field("c1", s.train.model.c1)
        .field("c2", s.train.model.c2)
        .finish();
    Section(doc, "train", problems)
        .field("epochs", s.train.train.epochs)
        .field("batch_size", s.train.train.batch_size)
        .field("lr", s.train.train.lr)
        .field("clip_norm", s.train.train.clip_norm)
        .finish();
    Section(doc, "explainer", problems)
        .field("iterations", s.eval.explainer.iterations)
        .field("lambda", s.eval.explainer.lambda)
        .field("beta", s.eval.explainer.beta)
        .field("lr", s.eval.explainer.lr)
        .finish();
    Section(doc, "metrics", problems)
        .field("k_nn", s.eval.report.k_nn)
        .field("attributions", s.eval.attributions)
        .finish();
    Section(doc, "service", problems)
        .field("host", s.service.host)
        .field("port", s.service.port)
        .field("cors_origin", s.service.cors_origin)
        .finish();
    if (problems.empty()) return;
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
}

void apply_config_file(Settings& s, const std::string& path) {
    json doc;
    try {
        doc = json::parse(bench::read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    apply_config(s, doc);
}

json settings_to_json(const Settings& s) {
    const auto& sy = s.synth;
    const auto& t = s.train;
    const auto& ex = s.eval.explainer;
    return {{"version", kConfigVersion},
            {"seed", s.seed},
            {"synth",
             {{"n_pairs", sy.n_pairs},
              {"spurious_strength", sy.spurious_strength},
              {"p_sink", sy.p_sink},
              {"p_second_site", sy.p_second_site},
              {"p_partial_guard", sy.p_partial_guard},
              {"p_distractor_guard", sy.p_distractor_guard},
              {"p_constant_sink", sy.p_constant_sink},
              {"min_filler", sy.min_filler},
              {"max_filler", sy.max_filler},
              {"decoy", sy.decoy}}},
            {"bench", {{"total_train_size", s.train_size}, {"total_val_size", s.val_size}, {"ratios", s.ratios}}},
            {"augment", {{"max_edit_tokens", s.max_edit_tokens}}},
            {"skipgram",
             {{"dim", t.skipgram.dim},
              {"window", t.skipgram.window},
              {"negatives", t.skipgram.negatives},
              {"epochs", t.skipgram.epochs},
              {"lr", t.skipgram.lr},
              {"min_count", t.min_count}}},
            {"model", {{"d_h", t.model.d_h}, {"steps", t.model.steps}, {"c1", t.model.c1}, {"c2", t.model.c2}}},
            {"train",
             {{"epochs", t.train.epochs}, {"batch_size", t.train.batch_size}, {"lr", t.train.lr}, {"clip_norm", t.train.clip_norm}}},
            {"explainer", {{"iterations", ex.iterations}, {"lambda", ex.lambda}, {"beta", ex.beta}, {"lr", ex.lr}}},
            {"metrics", {{"k_nn", s.eval.report.k_nn}, {"attributions", s.eval.attributions}}},
            {"service", {{"host", s.service.host}, {"port", s.service.port}, {"cors_origin", s.service.cors_origin}}}};
}

}  // namespace vision::cli
