#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vision/bench/dataset.hpp"
#include "vision/cf/llm.hpp"
#include "vision/cf/rules.hpp"

namespace vision::bench {

/// One line of the augmentation manifest.
struct AugmentRecord {
    std::string id;
    std::string generator;  // "rule:<name>" or "llm:<model>"
    int edit_distance = 0;
    bool accepted = false;
    std::string reason;  // RejectReason name, "NoApplicableRule" or an LLM error
    std::string detail;
};

struct AugmentResult {
    std::vector<FunctionPair> pairs;  // accepted only, input order
    std::vector<AugmentRecord> records;
    std::vector<cf::CounterfactualCandidate> rejected;  // kept for inspection

    std::size_t rejected_count() const { return records.size() - pairs.size(); }
};

struct AugmentConfig {
    std::uint64_t seed = 0;
    cf::ValidationPolicy policy;
    // When set, candidates come from the LLM client instead of the rules.
    std::optional<cf::LlmClientConfig> llm;
};

/// Generates and validates one counterfactual per Original. Rejected
/// candidates drop the whole pair. The per-function seed is
/// mix_seed(seed, fnv1a64(id)), so results do not depend on input order.
AugmentResult augment(const std::vector<SourceFunction>& originals, const AugmentConfig& cfg);

/// `{id, original_path, counterfactual_path, generator, edit_distance, validation}`
/// per record, JSON Lines.
std::string augment_manifest_jsonl(const AugmentResult& result, const std::string& original_path,
                                   const std::string& counterfactual_path);

}  // namespace vision::bench
