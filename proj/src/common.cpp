#include "vision/common.hpp"

#include <cstdio>

namespace vision {

std::string_view to_string(Label label) {
    return label == Label::Benign ? "Benign" : "Vulnerable";
}

std::string_view to_string(Provenance provenance) {
    switch (provenance) {
        case Provenance::Original: return "Original";
        case Provenance::Counterfactual: return "Counterfactual";
        case Provenance::Upsampled: return "Upsampled";
    }
    return "Original";
}

Label parse_label(std::string_view text) {
    if (text == "Benign") return Label::Benign;
    if (text == "Vulnerable") return Label::Vulnerable;
    throw Error("unknown label '" + std::string(text) + "'");
}

Provenance parse_provenance(std::string_view text) {
    if (text == "Original") return Provenance::Original;
    if (text == "Counterfactual") return Provenance::Counterfactual;
    if (text == "Upsampled") return Provenance::Upsampled;
    throw Error("unknown provenance '" + std::string(text) + "'");
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

}  // namespace vision
