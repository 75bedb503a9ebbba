#include "vision/bench/benchmark.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "vision/rng.hpp"

namespace vision::bench {

using nlohmann::json;

DatasetSplit split_by_id(const std::vector<FunctionPair>& pairs, std::array<double, 3> ratios, std::uint64_t seed) {
    const double sum = ratios[0] + ratios[1] + ratios[2];
    if (ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0 || std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("split ratios must be non-negative and sum to 1");
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    // Shuffle a sorted id order so the result does not depend on input order.
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return pairs[a].id() < pairs[b].id(); });
    for (std::size_t i = 1; i < order.size(); ++i)
        if (pairs[order[i]].id() == pairs[order[i - 1]].id())
            throw FormatError(0, "id", "duplicate pair id '" + pairs[order[i]].id() + "'");
    Rng rng(mix_seed(seed, fnv1a64("split")));
    rng.shuffle(order);

    const auto n = pairs.size();
    const auto n_train = static_cast<std::size_t>(std::floor(ratios[0] * static_cast<double>(n) + 1e-9));
    const auto n_val = static_cast<std::size_t>(std::floor(ratios[1] * static_cast<double>(n) + 1e-9));
    if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
        throw InsufficientData(std::to_string(n) + " pairs cannot fill train/val/test");
    DatasetSplit out;
    for (std::size_t i = 0; i < n; ++i) {
        auto& dst = i < n_train ? out.train : i < n_train + n_val ? out.val : out.test;
        dst.push_back(pairs[order[i]]);
    }
    return out;
}

void BenchmarkSpec::validate() const {
    std::string problems;
    if (ratio_original < 0 || ratio_original > 100 || ratio_original % 10 != 0)
        problems += " ratio_original must be one of 0, 10, ..., 100;";
    if (total_train_size == 0 || total_train_size % 2 != 0) problems += " total_train_size must be even and > 0;";
    if (total_val_size % 2 != 0) problems += " total_val_size must be even;";
    if (!problems.empty()) throw ConfigError("invalid benchmark spec:" + problems);
}

std::string BenchmarkSpec::tag() const {
    return std::to_string(ratio_original) + "/" + std::to_string(100 - ratio_original);
}

std::vector<int> standard_ratios() {
    std::vector<int> out;
    for (int r = 100; r >= 0; r -= 10) out.push_back(r);
    return out;
}

CellCounts target_counts(int ratio_original, std::size_t total) {
    CellCounts c;
    const std::size_t half = total / 2;
    const std::size_t orig = half * static_cast<std::size_t>(ratio_original) / 100;
    for (int l = 0; l < 2; ++l) {
        c.total[l][0] = orig;
        c.total[l][1] = half - orig;
    }
    return c;
}

CellCounts count_cells(const std::vector<Example>& examples) {
    CellCounts c;
    for (const auto& e : examples) {
        const int l = e.fn.label == Label::Vulnerable ? 1 : 0;
        const int s = e.cell == Provenance::Counterfactual ? 1 : 0;
        ++c.total[l][s];
        if (e.fn.provenance == Provenance::Upsampled) ++c.upsampled[l][s];
    }
    return c;
}

std::vector<Example> compose_ratio_benchmark(const std::vector<SourceFunction>& pool, int ratio_original,
                                             std::size_t total, std::uint64_t seed) {
    if (total == 0) return {};
    BenchmarkSpec{ratio_original, total, 0, seed}.validate();
    const auto target = target_counts(ratio_original, total);
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(ratio_original)));
    std::vector<Example> out;
    out.reserve(total);
    for (int l = 0; l < 2; ++l)
        for (int s = 0; s < 2; ++s) {
            const Label label = l ? Label::Vulnerable : Label::Benign;
            const Provenance src = s ? Provenance::Counterfactual : Provenance::Original;
            std::vector<const SourceFunction*> cell;
            for (const auto& f : pool)
                if (f.label == label && f.provenance == src) cell.push_back(&f);
            const std::size_t need = target.total[l][s];
            if (need == 0) continue;
            if (cell.empty()) throw EmptyCell(label, src);
            if (cell.size() >= need) {
                rng.shuffle(cell);
                for (std::size_t i = 0; i < need; ++i) out.push_back({*cell[i], src});
            } else {
                for (const auto* f : cell) out.push_back({*f, src});
                for (std::size_t i = cell.size(); i < need; ++i) {
                    Example e{*cell[rng.below(cell.size())], src};
                    e.fn.provenance = Provenance::Upsampled;
                    out.push_back(std::move(e));
                }
            }
        }
    rng.shuffle(out);
    return out;
}

std::vector<SourceFunction> build_paired_test_set(const DatasetSplit& split) {
    std::vector<const FunctionPair*> pairs;
    for (const auto& p : split.test) pairs.push_back(&p);
    std::sort(pairs.begin(), pairs.end(), [](auto* a, auto* b) { return a->id() < b->id(); });
    std::vector<SourceFunction> out;
    out.reserve(2 * pairs.size());
    for (const auto* p : pairs) {
        out.push_back(p->original);
        out.push_back(p->counterfactual);
    }
    return out;
}

Benchmark build_benchmark(const DatasetSplit& split, const BenchmarkSpec& spec) {
    spec.validate();
    Benchmark b;
    b.spec = spec;
    b.train = compose_ratio_benchmark(flatten(split.train), spec.ratio_original, spec.total_train_size,
                                      mix_seed(spec.seed, fnv1a64("train")));
    if (spec.total_val_size > 0)
        b.val = compose_ratio_benchmark(flatten(split.val), spec.ratio_original, spec.total_val_size,
                                        mix_seed(spec.seed, fnv1a64("val")));
    return b;
}

namespace {

json counts_json(const CellCounts& c) {
    json out = json::object();
    for (int l = 0; l < 2; ++l) {
        const auto label = std::string(to_string(l ? Label::Vulnerable : Label::Benign));
        out[label] = {{"Original", c.total[l][0]},
                      {"Counterfactual", c.total[l][1]},
                      {"Upsampled", {{"Original", c.upsampled[l][0]}, {"Counterfactual", c.upsampled[l][1]}}}};
    }
    return out;
}

}  // namespace

std::string benchmark_to_jsonl(const Benchmark& b) {
    const auto train_counts = count_cells(b.train);
    json header{{"ratio", b.spec.tag()},
                {"ratio_original", b.spec.ratio_original},
                {"seed", b.spec.seed},
                {"total_train_size", b.spec.total_train_size},
                {"total_val_size", b.spec.total_val_size},
                {"counts", counts_json(train_counts)},
                {"val_counts", counts_json(count_cells(b.val))}};
    std::string out = header.dump() + "\n";
    auto emit = [&](const std::vector<Example>& xs, const char* split) {
        for (const auto& e : xs) {
            json rec{{"split", split},
                     {"id", e.fn.id},
                     {"label", to_string(e.fn.label)},
                     {"provenance", to_string(e.fn.provenance)},
                     {"cell", to_string(e.cell)},
                     {"cwe", e.fn.cwe},
                     {"source", e.fn.source}};
            out += rec.dump();
            out += '\n';
        }
    };
    emit(b.train, "train");
    emit(b.val, "val");
    return out;
}

Benchmark parse_benchmark(std::string_view text) {
    Benchmark b;
    std::size_t pos = 0, line_no = 0;
    bool have_header = false;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const auto line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError(line_no, "record", e.what());
        }
        try {
            if (!have_header) {
                b.spec.ratio_original = rec.at("ratio_original").get<int>();
                b.spec.seed = rec.at("seed").get<std::uint64_t>();
                b.spec.total_train_size = rec.at("total_train_size").get<std::size_t>();
                b.spec.total_val_size = rec.at("total_val_size").get<std::size_t>();
                have_header = true;
                continue;
            }
            Example e;
            e.fn.id = rec.at("id").get<std::string>();
            e.fn.label = parse_label(rec.at("label").get<std::string>());
            e.fn.provenance = parse_provenance(rec.at("provenance").get<std::string>());
            e.cell = parse_provenance(rec.at("cell").get<std::string>());
            e.fn.cwe = rec.value("cwe", "CWE-20");
            e.fn.source = rec.at("source").get<std::string>();
            const auto split = rec.at("split").get<std::string>();
            if (split == "train")
                b.train.push_back(std::move(e));
            else if (split == "val")
                b.val.push_back(std::move(e));
            else
                throw FormatError(line_no, "split", "unknown split '" + split + "'");
        } catch (const json::exception& e) {
            throw FormatError(line_no, have_header ? "record" : "header", e.what());
        } catch (const FormatError&) {
            throw;
        } catch (const Error& e) {
            throw FormatError(line_no, "record", e.what());
        }
    }
    if (!have_header) throw FormatError(1, "header", "missing benchmark header");
    return b;
}

void write_benchmark(const std::filesystem::path& path, const Benchmark& b) {
    write_file_atomic(path, benchmark_to_jsonl(b));
}

Benchmark read_benchmark(const std::filesystem::path& path) { return parse_benchmark(read_file(path)); }

std::string benchmark_file_name(int ratio_original) {
    return "bench_" + std::to_string(ratio_original) + "_" + std::to_string(100 - ratio_original) + ".jsonl";
}

BenchmarkSuite build_benchmark_suite(const std::vector<FunctionPair>& pairs, std::size_t total_train_size,
                                     std::size_t total_val_size, std::uint64_t seed) {
    BenchmarkSuite s;
    s.split = split_by_id(pairs, {0.8, 0.1, 0.1}, seed);
    s.test = build_paired_test_set(s.split);
    for (int r : standard_ratios())
        s.benchmarks.push_back(build_benchmark(s.split, BenchmarkSpec{r, total_train_size, total_val_size, seed}));
    return s;
}

void write_benchmark_suite(const std::filesystem::path& dir, const BenchmarkSuite& suite) {
    for (const auto& b : suite.benchmarks) write_benchmark(dir / benchmark_file_name(b.spec.ratio_original), b);
    write_dataset(dir / "test.jsonl", suite.test);
}

}  // namespace vision::bench
