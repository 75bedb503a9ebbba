#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vision/common.hpp"

namespace vision::bench {

/// An Original and its Counterfactual, sharing `id`.
struct FunctionPair {
    SourceFunction original;
    SourceFunction counterfactual;

    const std::string& id() const { return original.id; }
    bool operator==(const FunctionPair&) const = default;
};

/// Dataset manifest: JSON Lines, one record per function:
///   {"id", "label", "provenance", "cwe", "source"} or "source_path" instead
/// of "source" (relative paths resolve against `base_dir`).
std::vector<SourceFunction> parse_dataset(std::string_view text, const std::filesystem::path& base_dir = {});
std::vector<SourceFunction> read_dataset(const std::filesystem::path& path);
std::string dataset_to_jsonl(const std::vector<SourceFunction>& functions);
void write_dataset(const std::filesystem::path& path, const std::vector<SourceFunction>& functions);

/// Groups Original/Counterfactual records by id. Throws FormatError when an
/// id lacks a member, has duplicates, or the labels do not flip. Upsampled
/// records are ignored. Order follows the first occurrence of each id.
std::vector<FunctionPair> pair_up(const std::vector<SourceFunction>& functions);
std::vector<SourceFunction> flatten(const std::vector<FunctionPair>& pairs);

/// Writes `content` to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace vision::bench
