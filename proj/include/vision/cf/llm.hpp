#pragma once

#include <string>
#include <string_view>

#include "vision/common.hpp"

namespace vision::cf {

/// Version of the prompt template; bump whenever the wording changes so
/// results can cite the template they were produced with.
inline constexpr int kPromptTemplateVersion = 1;
std::uint64_t prompt_template_hash();

std::string cwe_name(std::string_view cwe);

std::string build_llm_prompt(const SourceFunction& fn, std::string_view cwe);

struct LlmClientConfig {
    std::string endpoint_url = "https://api.openai.com/v1/chat/completions";
    std::string model_tag = "gpt-4o-mini";
    double timeout_s = 30.0;
    int max_retries = 2;
    std::string api_key_env = "OPENAI_API_KEY";
    double temperature = 0.0;

    void validate() const;
};

class LlmError : public Error {
public:
    using Error::Error;
};

class LlmTimeout : public LlmError {
public:
    LlmTimeout() : LlmError("LLM request timed out") {}
};

class LlmHttpError : public LlmError {
public:
    explicit LlmHttpError(int status)
        : LlmError("LLM endpoint returned HTTP " + std::to_string(status)), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

class EmptyCompletion : public LlmError {
public:
    EmptyCompletion() : LlmError("LLM returned an empty completion") {}
};

/// Code inside the first fenced block, or the whole trimmed text when
/// there is no fence.
std::string extract_code(std::string_view completion);

/// One chat completion against an OpenAI-compatible endpoint. Retries on
/// transport errors, 429 and 5xx. `raw` receives the last response body.
std::string request_llm(const std::string& prompt, const LlmClientConfig& cfg, std::string* raw = nullptr);

}  // namespace vision::cf
