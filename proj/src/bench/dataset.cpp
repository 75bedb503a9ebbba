#include "vision/bench/dataset.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace vision::bench {

using nlohmann::json;

namespace {

std::string field_string(const json& rec, const char* key, std::size_t line) {
    auto it = rec.find(key);
    if (it == rec.end()) throw FormatError(line, key, "missing field");
    if (!it->is_string()) throw FormatError(line, key, "expected a string");
    return it->get<std::string>();
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error("short write to '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

std::vector<SourceFunction> parse_dataset(std::string_view text, const std::filesystem::path& base_dir) {
    std::vector<SourceFunction> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
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
        if (!rec.is_object()) throw FormatError(line_no, "record", "expected an object");
        SourceFunction f;
        f.id = field_string(rec, "id", line_no);
        if (f.id.empty()) throw FormatError(line_no, "id", "empty id");
        try {
            f.label = parse_label(field_string(rec, "label", line_no));
        } catch (const FormatError&) {
            throw;
        } catch (const Error& e) {
            throw FormatError(line_no, "label", e.what());
        }
        if (rec.contains("provenance")) {
            try {
                f.provenance = parse_provenance(field_string(rec, "provenance", line_no));
            } catch (const FormatError&) {
                throw;
            } catch (const Error& e) {
                throw FormatError(line_no, "provenance", e.what());
            }
        }
        if (rec.contains("cwe")) f.cwe = field_string(rec, "cwe", line_no);
        if (rec.contains("source")) {
            f.source = field_string(rec, "source", line_no);
        } else if (rec.contains("source_path")) {
            std::filesystem::path p = field_string(rec, "source_path", line_no);
            if (p.is_relative()) p = base_dir / p;
            try {
                f.source = read_file(p);
            } catch (const Error& e) {
                throw FormatError(line_no, "source_path", e.what());
            }
        } else {
            throw FormatError(line_no, "source", "missing source or source_path");
        }
        out.push_back(std::move(f));
    }
    return out;
}

std::vector<SourceFunction> read_dataset(const std::filesystem::path& path) {
    return parse_dataset(read_file(path), path.parent_path());
}

std::string dataset_to_jsonl(const std::vector<SourceFunction>& functions) {
    std::string out;
    for (const auto& f : functions) {
        json rec{{"id", f.id},
                 {"label", to_string(f.label)},
                 {"provenance", to_string(f.provenance)},
                 {"cwe", f.cwe},
                 {"source", f.source}};
        out += rec.dump();
        out += '\n';
    }
    return out;
}

void write_dataset(const std::filesystem::path& path, const std::vector<SourceFunction>& functions) {
    write_file_atomic(path, dataset_to_jsonl(functions));
}

std::vector<FunctionPair> pair_up(const std::vector<SourceFunction>& functions) {
    struct Slot {
        const SourceFunction* orig = nullptr;
        const SourceFunction* cf = nullptr;
        std::size_t line = 0;
    };
    std::map<std::string, Slot> slots;
    std::vector<std::string> order;
    for (std::size_t i = 0; i < functions.size(); ++i) {
        const auto& f = functions[i];
        if (f.provenance == Provenance::Upsampled) continue;
        auto [it, fresh] = slots.try_emplace(f.id);
        if (fresh) {
            order.push_back(f.id);
            it->second.line = i + 1;
        }
        auto& member = f.provenance == Provenance::Original ? it->second.orig : it->second.cf;
        if (member) throw FormatError(i + 1, "id", "duplicate " + std::string(to_string(f.provenance)) + " for '" + f.id + "'");
        member = &f;
    }
    std::vector<FunctionPair> out;
    out.reserve(order.size());
    for (const auto& id : order) {
        const auto& s = slots.at(id);
        if (!s.orig || !s.cf) throw FormatError(s.line, "id", "'" + id + "' lacks a pair member");
        if (s.orig->label == s.cf->label) throw FormatError(s.line, "label", "'" + id + "' members share a label");
        out.push_back({*s.orig, *s.cf});
    }
    return out;
}

std::vector<SourceFunction> flatten(const std::vector<FunctionPair>& pairs) {
    std::vector<SourceFunction> out;
    out.reserve(2 * pairs.size());
    for (const auto& p : pairs) {
        out.push_back(p.original);
        out.push_back(p.counterfactual);
    }
    return out;
}

}  // namespace vision::bench
