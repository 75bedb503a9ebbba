#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vision {

enum class Label : std::uint8_t { Benign = 0, Vulnerable = 1 };
enum class Provenance : std::uint8_t { Original = 0, Counterfactual = 1, Upsampled = 2 };

std::string_view to_string(Label label);
std::string_view to_string(Provenance provenance);
Label parse_label(std::string_view text);
Provenance parse_provenance(std::string_view text);

inline Label flip(Label label) {
    return label == Label::Benign ? Label::Vulnerable : Label::Benign;
}

/// A labeled mini-C function. An Original and its Counterfactual share `id`.
struct SourceFunction {
    std::string id;
    std::string source;
    Label label = Label::Benign;
    Provenance provenance = Provenance::Original;
    std::string cwe = "CWE-20";

    bool operator==(const SourceFunction&) const = default;
};

/// Base of every domain error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed structured input (CPG files, manifests, checkpoints, tables).
class FormatError : public Error {
public:
    FormatError(std::size_t line, std::string field, const std::string& what)
        : Error("format error at line " + std::to_string(line) + " (" + field + "): " + what),
          line_(line),
          field_(std::move(field)) {}

    std::size_t line() const { return line_; }
    const std::string& field() const { return field_; }

private:
    std::size_t line_;
    std::string field_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// 64-bit FNV-1a, used for content hashes written into files.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 1469598103934665603ull);
std::string hex64(std::uint64_t value);

}  // namespace vision
