// vision: command-line driver for the counterfactual robustness pipeline.
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <json.hpp>

#include "settings.hpp"
#include "vision/bench/augment.hpp"
#include "vision/bench/benchmark.hpp"
#include "vision/bench/dataset.hpp"
#include "vision/bench/synth.hpp"
#include "vision/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vision;
using vision::cli::Settings;

namespace {

/// Flags are stored apart from Settings and applied after the config
/// file, so a flag always wins.
class Overrides {
public:
    template <typename T, typename Ref>
    CLI::Option* add(CLI::App* app, const std::string& name, Ref ref, const std::string& help) {
        auto value = std::make_shared<T>();
        auto* opt = app->add_option(name, *value, help);
        appliers_.push_back([value, opt, ref](Settings& s) {
            if (opt->count() > 0) ref(s) = *value;
        });
        return opt;
    }
    void apply(Settings& s) const {
        for (const auto& f : appliers_) f(s);
    }

private:
    std::vector<std::function<void(Settings&)>> appliers_;
};

void common_flags(CLI::App* app, Overrides& o, std::string& config) {
    app->add_option("--config", config, "JSON config file (all stages)")->check(CLI::ExistingFile);
    o.add<std::uint64_t>(app, "--seed", [](Settings& s) -> std::uint64_t& { return s.seed; }, "Master seed");
}

/// One master seed drives every stage; each gets its own stream.
void derive_seeds(Settings& s) {
    s.synth.seed = s.seed;
    s.train.skipgram.seed = mix_seed(s.seed, fnv1a64("skipgram"));
    s.train.model.seed = mix_seed(s.seed, fnv1a64("model"));
    s.train.train.seed = mix_seed(s.seed, fnv1a64("train"));
    s.eval.explainer.seed = mix_seed(s.seed, fnv1a64("explainer"));
    s.eval.report.seed = mix_seed(s.seed, fnv1a64("kmeans"));
}

std::string file_stem(const SourceFunction& f) {
    std::string safe;
    for (char c : f.id) safe += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_';
    if (safe != f.id) safe += "-" + hex64(fnv1a64(f.id)).substr(0, 8);
    return safe + "." + std::string(to_string(f.provenance));
}

std::string tag_file(const std::string& tag) {
    std::string out = tag;
    std::replace(out.begin(), out.end(), '/', '_');
    return out;
}

void write_pairs(const fs::path& dir, const bench::AugmentResult& r, const std::vector<SourceFunction>& originals) {
    std::vector<SourceFunction> cfs;
    for (const auto& p : r.pairs) cfs.push_back(p.counterfactual);
    bench::write_dataset(dir / "originals.jsonl", originals);
    bench::write_dataset(dir / "counterfactuals.jsonl", cfs);
    bench::write_dataset(dir / "dataset.jsonl", bench::flatten(r.pairs));
    bench::write_file_atomic(dir / "augment.jsonl", bench::augment_manifest_jsonl(r, "originals.jsonl", "counterfactuals.jsonl"));
    std::cerr << r.pairs.size() << " pairs accepted, " << r.rejected_count() << " rejected\n";
}

std::vector<metrics::MetricsReport> read_reports(const fs::path& path) {
    std::vector<metrics::MetricsReport> out;
    std::istringstream in(bench::read_file(path));
    for (std::string line; std::getline(in, line);)
        if (line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(metrics::report_from_json(line));
    return out;
}

std::string markdown_report(const std::vector<metrics::MetricsReport>& reports) {
    auto table = [&](std::size_t from, std::size_t to) {
        const auto& cols = metrics::report_columns();
        std::string out = "| Split |";
        std::string rule = "|---|";
        for (std::size_t c = from; c < to; ++c) {
            out += " " + cols[c] + " |";
            rule += "---|";
        }
        out += "\n" + rule + "\n";
        for (const auto& r : reports) {
            const auto v = metrics::report_values(r);
            out += "| " + r.split + " |";
            for (std::size_t c = from; c < to; ++c) {
                char buf[32];
                // Percent columns with two decimals, the rest with three.
                std::snprintf(buf, sizeof buf, c >= 4 && c < 8 ? " %.2f |" : " %.3f |", v[c]);
                out += buf;
            }
            out += "\n";
        }
        return out;
    };
    return "Standard metrics\n\n" + table(0, 4) + "\nRobustness metrics\n\n" + table(4, metrics::report_columns().size());
}

struct RunOutputs {
    std::vector<metrics::MetricsReport> reports;
};

RunOutputs run_all(const Settings& s, const fs::path& out) {
    fs::create_directories(out / "bench");
    fs::create_directories(out / "models");
    bench::write_file_atomic(out / "config.json", cli::settings_to_json(s).dump(2) + "\n");
    const auto corpus = bench::gen_synthetic_corpus(s.synth);
    write_pairs(out, corpus.augmentation, bench::gen_synthetic_originals(s.synth));
    const auto split = bench::split_by_id(corpus.pairs, {0.8, 0.1, 0.1}, s.seed);
    const auto test = bench::build_paired_test_set(split);
    bench::write_dataset(out / "bench" / "test.jsonl", test);
    RunOutputs r;
    std::string rows;
    for (int ratio : s.ratios) {
        const auto b = bench::build_benchmark(split, {ratio, s.train_size, s.val_size, s.seed});
        bench::write_benchmark(out / "bench" / bench::benchmark_file_name(ratio), b);
        std::cerr << "training " << b.spec.tag() << "\n";
        const auto model = pipeline::train_benchmark(b, s.train);
        const auto stem = tag_file(b.spec.tag());
        bench::write_file_atomic(out / "models" / (stem + ".ckpt"), ggnn::serialize_checkpoint(model));
        bench::write_file_atomic(out / "models" / (stem + ".log.csv"), ggnn::log_csv(model.log));
        const auto ev = pipeline::evaluate(model, test, b.spec.tag(), s.eval);
        bench::write_file_atomic(out / ("projection_" + stem + ".csv"), metrics::projection_csv(test, ev.projection));
        r.reports.push_back(ev.report);
        rows += metrics::report_to_json(ev.report) + "\n";
    }
    bench::write_file_atomic(out / "metrics.jsonl", rows);
    bench::write_file_atomic(out / "report.csv", metrics::reports_to_csv(r.reports));
    return r;
}

int fail(const char* kind, const std::string& message, int code) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Counterfactual augmentation and robustness analysis for vulnerability detectors"};
    app.require_subcommand(1);
    Overrides o;
    std::string config;
    fs::path out, manifest, dataset, bench_file, checkpoint, metrics_file, test_file;

    auto* parse = app.add_subcommand("parse", "Write the code property graph of every function in a manifest");
    common_flags(parse, o, config);
    parse->add_option("--manifest", manifest, "Dataset manifest (JSON Lines)")->required()->check(CLI::ExistingFile);
    parse->add_option("--out", out, "Output directory")->required();

    auto* synth = app.add_subcommand("gen-synth", "Generate the synthetic corpus with counterfactual pairs");
    common_flags(synth, o, config);
    synth->add_option("--out", out, "Output directory")->required();
    o.add<std::size_t>(synth, "--n-pairs", [](Settings& s) -> std::size_t& { return s.synth.n_pairs; }, "Originals to generate");
    o.add<double>(synth, "--spurious-strength", [](Settings& s) -> double& { return s.synth.spurious_strength; },
                  "Probability that the decoy tracks the Benign label");

    auto* augment = app.add_subcommand("augment", "Generate and validate counterfactuals for Original functions");
    common_flags(augment, o, config);
    std::string llm_endpoint, llm_model = "gpt-4o-mini";
    double llm_timeout = 30;
    augment->add_option("--manifest", manifest, "Dataset manifest with Original functions")->required()->check(CLI::ExistingFile);
    augment->add_option("--out", out, "Output directory")->required();
    augment->add_option("--llm-endpoint", llm_endpoint, "Chat-completions URL; rules are used when absent");
    augment->add_option("--llm-model", llm_model, "Model tag sent to the endpoint");
    augment->add_option("--llm-timeout", llm_timeout, "Seconds per request");
    o.add<int>(augment, "--max-edit-tokens", [](Settings& s) -> int& { return s.max_edit_tokens; }, "Token edit budget");

    auto* build = app.add_subcommand("build-bench", "Split a paired dataset and compose the ratio benchmarks");
    common_flags(build, o, config);
    build->add_option("--dataset", dataset, "Paired dataset manifest")->required()->check(CLI::ExistingFile);
    build->add_option("--out", out, "Output directory")->required();
    o.add<std::size_t>(build, "--train-size", [](Settings& s) -> std::size_t& { return s.train_size; }, "Training examples per benchmark");
    o.add<std::size_t>(build, "--val-size", [](Settings& s) -> std::size_t& { return s.val_size; }, "Validation examples per benchmark");
    o.add<std::vector<int>>(build, "--ratios", [](Settings& s) -> std::vector<int>& { return s.ratios; }, "Original percentages");

    auto* train = app.add_subcommand("train", "Train the detector on one benchmark");
    common_flags(train, o, config);
    fs::path log_file;
    train->add_option("--bench", bench_file, "Benchmark file")->required()->check(CLI::ExistingFile);
    train->add_option("--out", out, "Checkpoint path")->required();
    train->add_option("--log", log_file, "Per-epoch CSV log");
    o.add<int>(train, "--epochs", [](Settings& s) -> int& { return s.train.train.epochs; }, "Training epochs (0 keeps the initialisation)");
    o.add<double>(train, "--lr", [](Settings& s) -> double& { return s.train.train.lr; }, "Adam learning rate");
    o.add<int>(train, "--batch-size", [](Settings& s) -> int& { return s.train.train.batch_size; }, "Mini-batch size");
    o.add<int>(train, "--hidden", [](Settings& s) -> int& { return s.train.model.d_h; }, "GGNN state width");
    o.add<int>(train, "--steps", [](Settings& s) -> int& { return s.train.model.steps; }, "Propagation steps");
    o.add<int>(train, "--embed-dim", [](Settings& s) -> int& { return s.train.skipgram.dim; }, "Token embedding width");
    o.add<int>(train, "--embed-epochs", [](Settings& s) -> int& { return s.train.skipgram.epochs; }, "Skip-gram epochs");

    auto* explain = app.add_subcommand("explain", "Node attributions and dependency matrices");
    common_flags(explain, o, config);
    std::vector<std::string> dep_ids;
    std::string policy_text = "remove-node";
    explain->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    explain->add_option("--manifest", manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    explain->add_option("--out", out, "Output directory")->required();
    explain->add_option("--dependency", dep_ids, "Ids whose dependency matrices to compute (costly)");
    explain->add_option("--policy", policy_text, "Masking policy")->check(CLI::IsMember({"remove-node", "feature-zero"}));
    o.add<int>(explain, "--iterations", [](Settings& s) -> int& { return s.eval.explainer.iterations; }, "Mask optimisation steps");
    o.add<double>(explain, "--lambda", [](Settings& s) -> double& { return s.eval.explainer.lambda; }, "Sparsity weight");

    auto* metrics_cmd = app.add_subcommand("metrics", "Evaluate checkpoints on a paired test set");
    common_flags(metrics_cmd, o, config);
    std::vector<std::string> models;
    fs::path projection_dir;
    metrics_cmd->add_option("--model", models, "TAG=CHECKPOINT, e.g. 50/50=models/50_50.ckpt")->required();
    metrics_cmd->add_option("--test", test_file, "Paired test manifest")->required()->check(CLI::ExistingFile);
    metrics_cmd->add_option("--out", out, "MetricsReport rows (JSON Lines)")->required();
    metrics_cmd->add_option("--projection-dir", projection_dir, "Also write projection_<tag>.csv here");
    o.add<bool>(metrics_cmd, "--attributions", [](Settings& s) -> bool& { return s.eval.attributions; },
                "Compute attribution columns (slow)");

    auto* report = app.add_subcommand("report", "Render MetricsReport rows as tables");
    std::string format = "markdown";
    report->add_option("--metrics", metrics_file, "MetricsReport rows")->required()->check(CLI::ExistingFile);
    report->add_option("--format", format, "markdown or csv")->check(CLI::IsMember({"markdown", "csv"}));
    report->add_option("--out", out, "Output file (stdout when absent)");

    auto* serve = app.add_subcommand("serve", "Start the inspection HTTP service");
    common_flags(serve, o, config);
    std::vector<std::string> manifests;
    fs::path cache_dir;
    serve->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    serve->add_option("--manifest", manifests, "[SPLIT=]PATH dataset manifest; split defaults to test")->required();
    serve->add_option("--metrics", metrics_file, "MetricsReport rows")->check(CLI::ExistingFile);
    serve->add_option("--cache-dir", cache_dir, "Attribution and dependency cache");
    o.add<std::string>(serve, "--host", [](Settings& s) -> std::string& { return s.service.host; }, "Bind address");
    o.add<int>(serve, "--port", [](Settings& s) -> int& { return s.service.port; }, "Bind port");
    o.add<std::string>(serve, "--cors-origin", [](Settings& s) -> std::string& { return s.service.cors_origin; },
                       "Allowed browser origin");

    auto* run = app.add_subcommand("run", "All stages on the synthetic corpus from one config");
    common_flags(run, o, config);
    run->add_option("--out", out, "Output directory")->required();

    auto* show = app.add_subcommand("show-config", "Print the effective settings");
    common_flags(show, o, config);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        return fail("UsageError", e.what(), 2);
    }

    try {
        Settings s;
        if (!config.empty()) cli::apply_config_file(s, config);
        o.apply(s);
        s.validate();
        derive_seeds(s);

        if (*parse) {
            fs::create_directories(out);
            const auto fns = bench::read_dataset(manifest);
            for (const auto& f : fns) bench::write_file_atomic(out / (file_stem(f) + ".cpg"), cpg::serialize_cpg(cpg::assemble_cpg(f)));
            std::cerr << fns.size() << " graphs written\n";
        } else if (*synth) {
            fs::create_directories(out);
            write_pairs(out, bench::gen_synthetic_corpus(s.synth).augmentation, bench::gen_synthetic_originals(s.synth));
        } else if (*augment) {
            fs::create_directories(out);
            std::vector<SourceFunction> originals;
            for (auto& f : bench::read_dataset(manifest))
                if (f.provenance == Provenance::Original) originals.push_back(std::move(f));
            bench::AugmentConfig ac;
            ac.seed = s.seed;
            ac.policy.max_edit_tokens = s.max_edit_tokens;
            // Imported data has no planted rule; the rule engine's own
            // predicate confirms the flip.
            ac.policy.oracle = cf::OracleMode::RuleMatch;
            if (!llm_endpoint.empty()) {
                cf::LlmClientConfig llm;
                llm.endpoint_url = llm_endpoint;
                llm.model_tag = llm_model;
                llm.timeout_s = llm_timeout;
                ac.llm = llm;
            }
            write_pairs(out, bench::augment(originals, ac), originals);
        } else if (*build) {
            fs::create_directories(out);
            const auto pairs = bench::pair_up(bench::read_dataset(dataset));
            const auto split = bench::split_by_id(pairs, {0.8, 0.1, 0.1}, s.seed);
            bench::write_dataset(out / "test.jsonl", bench::build_paired_test_set(split));
            for (int r : s.ratios)
                bench::write_benchmark(out / bench::benchmark_file_name(r),
                                       bench::build_benchmark(split, {r, s.train_size, s.val_size, s.seed}));
            std::cerr << s.ratios.size() << " benchmarks, " << split.test.size() << " test pairs\n";
        } else if (*train) {
            const auto b = bench::read_benchmark(bench_file);
            const auto m = pipeline::train_benchmark(b, s.train, [](const ggnn::EpochLog& l) {
                std::cerr << "epoch " << l.epoch << " loss " << l.train_loss << " val_acc " << l.val_acc << "\n";
            });
            if (out.has_parent_path()) fs::create_directories(out.parent_path());
            bench::write_file_atomic(out, ggnn::serialize_checkpoint(m));
            if (!log_file.empty()) bench::write_file_atomic(log_file, ggnn::log_csv(m.log));
        } else if (*explain) {
            fs::create_directories(out);
            const auto m = ggnn::deserialize_checkpoint(bench::read_file(checkpoint));
            const auto policy = explain::parse_masking_policy(policy_text);
            std::string rows;
            for (const auto& f : bench::read_dataset(manifest)) {
                const auto input = m.input(cpg::assemble_cpg(f));
                rows += explain::attribution_to_json(explain::attribute(m.params, input, s.eval.explainer, f.id)) + "\n";
                if (std::find(dep_ids.begin(), dep_ids.end(), f.id) != dep_ids.end())
                    bench::write_file_atomic(out / ("dependency_" + file_stem(f) + ".json"),
                                             explain::dependency_to_json(explain::dependency_matrix(
                                                 m.params, input, policy, s.eval.explainer, f.id)));
            }
            bench::write_file_atomic(out / "attributions.jsonl", rows);
        } else if (*metrics_cmd) {
            const auto test = bench::read_dataset(test_file);
            std::string rows;
            for (const auto& spec : models) {
                const auto eq = spec.find('=');
                if (eq == std::string::npos) throw ConfigError("--model expects TAG=CHECKPOINT, got '" + spec + "'");
                const auto tag = spec.substr(0, eq);
                const auto m = ggnn::deserialize_checkpoint(bench::read_file(spec.substr(eq + 1)));
                const auto ev = pipeline::evaluate(m, test, tag, s.eval);
                rows += metrics::report_to_json(ev.report) + "\n";
                if (!projection_dir.empty()) {
                    fs::create_directories(projection_dir);
                    bench::write_file_atomic(projection_dir / ("projection_" + tag_file(tag) + ".csv"),
                                             metrics::projection_csv(test, ev.projection));
                }
            }
            bench::write_file_atomic(out, rows);
        } else if (*report) {
            const auto reports = read_reports(metrics_file);
            const auto text = format == "csv" ? metrics::reports_to_csv(reports) : markdown_report(reports);
            if (out.empty())
                std::cout << text;
            else
                bench::write_file_atomic(out, text);
        } else if (*serve) {
            auto cfg = s.service;
            cfg.checkpoint = checkpoint;
            for (const auto& m : manifests) {
                const auto eq = m.find('=');
                cfg.manifests.push_back(eq == std::string::npos ? service::ManifestSource{"test", m}
                                                                : service::ManifestSource{m.substr(0, eq), m.substr(eq + 1)});
            }
            cfg.metrics = metrics_file;
            cfg.cache_dir = cache_dir;
            cfg.explainer = s.eval.explainer;
            service::serve(cfg);
        } else if (*run) {
            run_all(s, out);
        } else if (*show) {
            std::cout << cli::settings_to_json(s).dump(2) << "\n";
        }
    } catch (const ConfigError& e) {
        return fail("ConfigError", e.what(), 2);
    } catch (const FormatError& e) {
        return fail("FormatError", e.what(), 1);
    } catch (const std::exception& e) {
        return fail("Error", e.what(), 1);
    }
    return 0;
}
