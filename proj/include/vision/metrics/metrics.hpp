#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "vision/common.hpp"
#include "vision/cpg/cpg.hpp"

namespace vision::metrics {

class InvalidInput : public Error {
public:
    using Error::Error;
};

class MissingPair : public Error {
public:
    explicit MissingPair(const std::string& id) : Error("pair '" + id + "' lacks an original or a counterfactual") {}
};

class NoValidGroups : public Error {
public:
    NoValidGroups() : Error("every group is at or below 1% of the data") {}
};

/// Positive class is Vulnerable. An undefined precision or recall is 0 with
/// its flag set; f1 is 0 whenever precision + recall is 0.
struct StandardMetrics {
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
    bool precision_undefined = false, recall_undefined = false;
};

StandardMetrics standard_metrics(std::span<const Label> preds, std::span<const Label> labels);

struct PairPrediction {
    std::string id;
    Label pred_orig = Label::Benign;
    Label pred_cf = Label::Benign;
    Label label_orig = Label::Benign;  // the counterfactual has the other label
};

enum class PairBucket { Correct, BothVulnerable, BothBenign, Reversed };
PairBucket classify_pair(const PairPrediction& p);

/// Percentages of pairs per bucket.
struct PairwiseMetrics {
    double pc = 0, pv = 0, pb = 0, pr = 0;
};

PairwiseMetrics pairwise_metrics(std::span<const PairPrediction> pairs);

/// Groups per-function predictions by id. Every id needs exactly one
/// Original and one Counterfactual member. Output is sorted by id.
std::vector<PairPrediction> collect_pairs(std::span<const SourceFunction> fns, std::span<const Label> preds);

struct KMeansResult {
    std::vector<int> assignments;
    Eigen::MatrixXd centroids;  // k x d
    double inertia = 0;
    int iterations = 0;
};

/// k-means++ seeding under `seed`, then Lloyd steps until every centroid
/// moves less than 1e-8 or 300 steps. Rows of `x` are points. Ties go to
/// the lower cluster index; an emptied cluster keeps its centroid.
KMeansResult kmeans(const Eigen::MatrixXd& x, int k, std::uint64_t seed);

/// min accuracy over (cluster, true label) groups larger than 1% of N.
double group_min_accuracy(std::span<const int> clusters, std::span<const Label> labels, std::span<const Label> preds);
double worst_group_accuracy(const Eigen::MatrixXd& embeddings, std::span<const Label> labels,
                            std::span<const Label> preds, int k, std::uint64_t seed);

/// Mean fraction of each point's k nearest neighbours (self excluded,
/// distance ties by index) that share its label.
double neighborhood_purity(const Eigen::MatrixXd& embeddings, std::span<const Label> labels, int k_nn = 10);

inline constexpr int kSignatureDims = static_cast<int>(cpg::kNodeKindCount);
using Signature = std::array<double, kSignatureDims>;

/// Mean score per node kind, 0 for kinds the graph lacks.
Signature attribution_signature(std::span<const double> scores, const cpg::CodePropertyGraph& g);

struct IntraClass {
    double benign = 0, vulnerable = 0;
};

/// Per class, the mean over coordinates of the population variance.
IntraClass intra_class_variance(std::span<const Signature> sigs, std::span<const Label> labels);
/// Euclidean distance between the class-mean signatures.
double inter_class_distance(std::span<const Signature> sigs, std::span<const Label> labels);

struct Projection {
    Eigen::MatrixXd coords;      // N x 2
    Eigen::MatrixXd components;  // d x 2, unit columns
    double explained_variance_ratio = 0;
};

/// PCA by power iteration with deflation on the centred covariance. Each
/// component's largest-magnitude coordinate is made positive.
Projection project_2d(const Eigen::MatrixXd& x);

/// `function_id,x,y,label`
std::string projection_csv(std::span<const SourceFunction> fns, const Projection& p);

struct MetricsReport {
    std::string split;  // "50/50"
    StandardMetrics standard;
    PairwiseMetrics pairwise;
    std::array<double, 6> wga{};  // k = 2..7
    double purity = 0;
    IntraClass intra;
    double inter = 0;

    bool operator==(const MetricsReport& o) const;
};

/// Column names: standard metrics, then robustness metrics.
const std::vector<std::string>& report_columns();
std::vector<double> report_values(const MetricsReport& r);

std::string report_to_json(const MetricsReport& r);
MetricsReport report_from_json(std::string_view text);
/// Header plus one row per report; values with 17 significant digits.
std::string reports_to_csv(std::span<const MetricsReport> reports);

struct ReportConfig {
    std::uint64_t seed = 0;  // k-means
    int k_nn = 10;
};

/// Everything measured on one test set. `signatures` may be empty, in which
/// case the attribution columns stay 0.
struct ReportInputs {
    std::vector<SourceFunction> fns;
    std::vector<Label> preds;
    Eigen::MatrixXd embeddings;  // one row per function
    std::vector<Signature> signatures;
};

MetricsReport compute_report(std::string split, const ReportInputs& in, const ReportConfig& cfg = {});

}  // namespace vision::metrics
