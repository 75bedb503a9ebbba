#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vision/bench/augment.hpp"

namespace vision::bench {

/// Knobs of the synthetic CWE-20 corpus. Ground truth is the planted rule
/// (see cf::oracle_label); `spurious_strength` controls how strongly the
/// decoy statement `int mode = <decoy>;` tracks the Benign label.
struct SynthConfig {
    std::size_t n_pairs = 1000;
    double spurious_strength = 0.95;
    std::uint64_t seed = 0;
    double p_sink = 0.4;               // site is a sink call rather than an index
    double p_second_site = 0.3;        // function has two sensitive sites
    double p_partial_guard = 0.5;      // unsafe site still carries a non-validating guard
    double p_distractor_guard = 0.2;   // guard on a non-sensitive parameter
    double p_constant_sink = 0.3;      // safe sink site passes a constant instead
    int min_filler = 1;
    int max_filler = 4;
    std::string decoy = "EPERM";

    void validate() const;
};

/// Originals only, ids "synth-00000"..., labels alternate Benign/Vulnerable
/// and agree with the planted-rule oracle (checked; a mismatch throws).
std::vector<SourceFunction> gen_synthetic_originals(const SynthConfig& cfg);

/// Whether the decoy statement occurs in `source`.
bool has_decoy(const std::string& source, const std::string& decoy = "EPERM");

struct SynthCorpus {
    std::vector<FunctionPair> pairs;
    AugmentResult augmentation;
};

/// Originals plus rule-based counterfactuals validated against the planted
/// rule; rejected pairs are dropped whole.
SynthCorpus gen_synthetic_corpus(const SynthConfig& cfg);

}  // namespace vision::bench
