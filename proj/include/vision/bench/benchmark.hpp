#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vision/bench/dataset.hpp"

namespace vision::bench {

class InsufficientData : public Error {
public:
    using Error::Error;
};

class EmptyCell : public Error {
public:
    EmptyCell(Label label, Provenance source)
        : Error("no " + std::string(to_string(source)) + " " + std::string(to_string(label)) +
                " examples to draw from") {}
};

struct DatasetSplit {
    std::vector<FunctionPair> train, val, test;
};

/// Shuffles ids under `seed` and cuts them by `ratios` (floor for train and
/// val, remainder to test). Both members follow their id.
DatasetSplit split_by_id(const std::vector<FunctionPair>& pairs, std::array<double, 3> ratios = {0.8, 0.1, 0.1},
                         std::uint64_t seed = 0);

struct BenchmarkSpec {
    int ratio_original = 100;  // percent of each class drawn from Originals
    std::size_t total_train_size = 2000;
    std::size_t total_val_size = 200;
    std::uint64_t seed = 0;

    void validate() const;
    /// "100/0", "90/10", ...
    std::string tag() const;
};

/// The eleven ratios 100, 90, ..., 0.
std::vector<int> standard_ratios();

/// A drawn example. `cell` is the source it was drawn from; `fn.provenance`
/// is Upsampled for draws beyond the cell's size.
struct Example {
    SourceFunction fn;
    Provenance cell = Provenance::Original;

    bool operator==(const Example&) const = default;
};

/// counts[label][source] with label 0 = Benign, source 0 = Original,
/// 1 = Counterfactual.
struct CellCounts {
    std::array<std::array<std::size_t, 2>, 2> total{};
    std::array<std::array<std::size_t, 2>, 2> upsampled{};

    bool operator==(const CellCounts&) const = default;
};

/// Closed-form targets: total/2 per class; floor(half * ratio / 100) from
/// Originals and the rest from Counterfactuals.
CellCounts target_counts(int ratio_original, std::size_t total);
CellCounts count_cells(const std::vector<Example>& examples);

/// Draws exact per-cell quotas from `pool` (Upsampled records in the pool
/// are ignored). A cell with enough examples is subsampled without
/// replacement; a short cell contributes everything it has plus uniform
/// draws with replacement. Output order is shuffled under the seed.
std::vector<Example> compose_ratio_benchmark(const std::vector<SourceFunction>& pool, int ratio_original,
                                             std::size_t total, std::uint64_t seed);

/// Both members of every test id, sorted by id, Original first.
std::vector<SourceFunction> build_paired_test_set(const DatasetSplit& split);

struct Benchmark {
    BenchmarkSpec spec;
    std::vector<Example> train, val;
};

Benchmark build_benchmark(const DatasetSplit& split, const BenchmarkSpec& spec);

/// JSON Lines: a header {"ratio", "ratio_original", "seed", "total_train_size",
/// "total_val_size", "counts"} then one record per example with "split"
/// ("train"/"val") and "cell" next to the dataset fields.
std::string benchmark_to_jsonl(const Benchmark& b);
Benchmark parse_benchmark(std::string_view text);
void write_benchmark(const std::filesystem::path& path, const Benchmark& b);
Benchmark read_benchmark(const std::filesystem::path& path);

/// File name used for a ratio, e.g. "bench_100_0.jsonl".
std::string benchmark_file_name(int ratio_original);

struct BenchmarkSuite {
    DatasetSplit split;
    std::vector<SourceFunction> test;
    std::vector<Benchmark> benchmarks;  // standard_ratios() order
};

BenchmarkSuite build_benchmark_suite(const std::vector<FunctionPair>& pairs, std::size_t total_train_size,
                                     std::size_t total_val_size, std::uint64_t seed);

/// Writes every benchmark file plus test.jsonl into `dir`.
void write_benchmark_suite(const std::filesystem::path& dir, const BenchmarkSuite& suite);

}  // namespace vision::bench
