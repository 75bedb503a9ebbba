#include "vision/cf/llm.hpp"

#include <chrono>
#include <cstdlib>
#include <regex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace vision::cf {

namespace {

constexpr std::string_view kTemplate =
    "You are a security engineer who edits C code with surgical precision.\n"
    "Vulnerability class: {cwe} ({cwe_name}).\n"
    "Current label: {label}.\n"
    "Task: minimally modify the function below so that it flips its vulnerability label "
    "from {label} to {target} with respect to {cwe}.\n"
    "Constraints:\n"
    "- Change as few tokens as possible; keep every other line, name and statement unchanged.\n"
    "- Output only the complete modified function as C code, with no explanation.\n"
    "\n"
    "Function:\n"
    "{source}";

void replace_all(std::string& s, std::string_view key, std::string_view value) {
    for (std::size_t pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size()))
        s.replace(pos, key.size(), value);
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::uint64_t prompt_template_hash() { return fnv1a64(kTemplate); }

std::string cwe_name(std::string_view cwe) {
    if (cwe == "CWE-20") return "Improper Input Validation";
    if (cwe == "CWE-119") return "Improper Restriction of Operations within the Bounds of a Memory Buffer";
    if (cwe == "CWE-787") return "Out-of-bounds Write";
    if (cwe == "CWE-125") return "Out-of-bounds Read";
    return "unnamed weakness";
}

std::string build_llm_prompt(const SourceFunction& fn, std::string_view cwe) {
    std::string out(kTemplate);
    // Source last so placeholders inside it are never expanded.
    replace_all(out, "{cwe_name}", cwe_name(cwe));
    replace_all(out, "{cwe}", cwe);
    replace_all(out, "{label}", to_string(fn.label));
    replace_all(out, "{target}", to_string(flip(fn.label)));
    const auto at = out.find("{source}");
    out.replace(at, 8, fn.source);
    return out;
}

void LlmClientConfig::validate() const {
    std::string problems;
    if (endpoint_url.rfind("http://", 0) != 0 && endpoint_url.rfind("https://", 0) != 0)
        problems += " endpoint_url must start with http:// or https://;";
    if (model_tag.empty()) problems += " model_tag must be non-empty;";
    if (!(timeout_s > 0)) problems += " timeout_s must be > 0;";
    if (max_retries < 0) problems += " max_retries must be >= 0;";
    if (!problems.empty()) throw ConfigError("invalid LLM client config:" + problems);
}

std::string extract_code(std::string_view completion) {
    const auto open = completion.find("```");
    if (open == std::string_view::npos) return trim(completion);
    auto start = completion.find('\n', open);
    if (start == std::string_view::npos) return "";
    ++start;
    const auto close = completion.find("```", start);
    return trim(completion.substr(start, close == std::string_view::npos ? std::string_view::npos : close - start));
}

std::string request_llm(const std::string& prompt, const LlmClientConfig& cfg, std::string* raw) {
    cfg.validate();
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(cfg.endpoint_url, m, url_re)) throw ConfigError("bad endpoint_url: " + cfg.endpoint_url);
    const std::string base = m[1];
    const std::string path = m[2].matched ? std::string(m[2]) : "/";

    httplib::Client client(base);
    const auto secs = static_cast<time_t>(cfg.timeout_s);
    const auto usecs = static_cast<time_t>((cfg.timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key)
        headers.emplace("Authorization", std::string("Bearer ") + key);

    nlohmann::json body{{"model", cfg.model_tag},
                        {"temperature", cfg.temperature},
                        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
    const std::string payload = body.dump();

    for (int attempt = 0;; ++attempt) {
        const bool last = attempt >= cfg.max_retries;
        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            if (last) {
                const auto err = res.error();
                if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) throw LlmTimeout();
                throw LlmError("LLM request failed: " + httplib::to_string(err));
            }
        } else {
            if (raw) *raw = res->body;
            if (res->status == 200) {
                std::string content;
                try {
                    auto j = nlohmann::json::parse(res->body);
                    const auto& c = j.at("choices").at(0).at("message").at("content");
                    if (c.is_string()) content = c.get<std::string>();
                } catch (const nlohmann::json::exception&) {
                    throw EmptyCompletion();
                }
                auto code = extract_code(content);
                if (code.empty()) throw EmptyCompletion();
                return code;
            }
            const bool retryable = res->status == 429 || res->status >= 500;
            if (!retryable || last) throw LlmHttpError(res->status);
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(50 * (attempt + 1)));
    }
}

}  // namespace vision::cf
