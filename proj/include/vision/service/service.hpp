#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vision/explain/explainer.hpp"
#include "vision/ggnn/train.hpp"
#include "vision/metrics/metrics.hpp"

namespace httplib {
class Server;
}

namespace vision::service {

/// An error with the HTTP status it maps to. `code` is a stable
/// machine-readable name such as "UnknownFunction".
class HttpError : public Error {
public:
    HttpError(int status, std::string code, const std::string& message)
        : Error(message), status_(status), code_(std::move(code)) {}
    int status() const { return status_; }
    const std::string& code() const { return code_; }

private:
    int status_;
    std::string code_;
};

struct ManifestSource {
    std::string split;  // "test", "train", ...
    std::filesystem::path path;
};

struct ServiceConfig {
    std::filesystem::path checkpoint;
    std::vector<ManifestSource> manifests;
    std::filesystem::path metrics;  // MetricsReport JSON Lines; optional
    std::filesystem::path cache_dir;  // empty: memory only
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string cors_origin = "*";
    explain::ExplainerConfig explainer;
    explain::MaskingPolicy policy = explain::MaskingPolicy::RemoveNode;
    int default_page_size = 50;
    int max_page_size = 500;

    void validate() const;
};

/// Read-only view of one model and its datasets. Every method is safe to
/// call concurrently. Results of attribution and dependency runs are cached
/// in memory and, when a cache dir is set, on disk; a cached payload is
/// returned byte for byte.
class Inspector {
public:
    explicit Inspector(const ServiceConfig& cfg);
    /// For tests: everything already in memory.
    Inspector(ggnn::TrainedModel model, std::vector<std::pair<std::string, SourceFunction>> functions,
              std::vector<metrics::MetricsReport> reports, ServiceConfig cfg);
    ~Inspector();

    const std::string& checkpoint_id() const { return checkpoint_id_; }
    const std::string& manifest_id() const { return manifest_id_; }

    nlohmann::json health() const;
    /// Query keys: label, provenance, split, page (0-based), page_size.
    nlohmann::json list_functions(const std::map<std::string, std::string>& query) const;
    std::string explanation(const std::string& id, const std::string& provenance);
    nlohmann::json subgraph(const std::string& id, const std::string& provenance, const std::string& mode);
    nlohmann::json what_if(const std::string& id, const nlohmann::json& body);
    std::string dependency(const std::string& id, const std::string& provenance, const std::string& policy);
    nlohmann::json metrics_list() const;
    nlohmann::json metrics(const std::string& ratio) const;
    nlohmann::json projection();

private:
    struct Entry;
    const Entry& find(const std::string& id, const std::string& provenance) const;
    void index();
    const explain::AttributionResult& attribution(const Entry& e);
    std::optional<std::string> cache_read(const std::string& name) const;
    void cache_write(const std::string& name, const std::string& payload) const;

    ServiceConfig cfg_;
    ggnn::TrainedModel model_;
    std::string checkpoint_id_, manifest_id_;
    std::vector<std::unique_ptr<Entry>> entries_;  // sorted by (id, provenance)
    std::vector<metrics::MetricsReport> reports_;

    mutable std::mutex mu_;
    std::map<std::string, std::string> payloads_;
    std::map<std::string, std::shared_ptr<explain::AttributionResult>> attributions_;
    std::optional<nlohmann::json> projection_;
};

/// Registers every /api/v1 route plus CORS handling on `server`.
void install_routes(httplib::Server& server, Inspector& inspector, const std::string& cors_origin);

/// Blocks serving until the process is stopped.
void serve(const ServiceConfig& cfg);

}  // namespace vision::service
