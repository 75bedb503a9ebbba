#include "vision/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>

#include <json.hpp>

#include "vision/rng.hpp"

namespace vision::metrics {

using nlohmann::json;

namespace {

void check_same_size(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw InvalidInput(std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b) + " entries");
}

double pct(std::size_t n, std::size_t total) { return 100.0 * static_cast<double>(n) / static_cast<double>(total); }

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

StandardMetrics standard_metrics(std::span<const Label> preds, std::span<const Label> labels) {
    check_same_size(preds.size(), labels.size(), "predictions vs labels");
    if (preds.empty()) throw InvalidInput("no predictions");
    std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool p = preds[i] == Label::Vulnerable, y = labels[i] == Label::Vulnerable;
        correct += p == y;
        tp += p && y;
        fp += p && !y;
        fn += !p && y;
    }
    StandardMetrics m;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
    if (tp + fp == 0)
        m.precision_undefined = true;
    else
        m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (tp + fn == 0)
        m.recall_undefined = true;
    else
        m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (m.precision + m.recall > 0) m.f1 = 2 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

PairBucket classify_pair(const PairPrediction& p) {
    const Label label_cf = p.label_orig == Label::Vulnerable ? Label::Benign : Label::Vulnerable;
    if (p.pred_orig == p.label_orig && p.pred_cf == label_cf) return PairBucket::Correct;
    if (p.pred_orig == p.pred_cf) return p.pred_orig == Label::Vulnerable ? PairBucket::BothVulnerable : PairBucket::BothBenign;
    return PairBucket::Reversed;
}

PairwiseMetrics pairwise_metrics(std::span<const PairPrediction> pairs) {
    if (pairs.empty()) throw InvalidInput("no pairs");
    std::array<std::size_t, 4> n{};
    for (const auto& p : pairs) ++n[static_cast<std::size_t>(classify_pair(p))];
    return {pct(n[0], pairs.size()), pct(n[1], pairs.size()), pct(n[2], pairs.size()), pct(n[3], pairs.size())};
}

std::vector<PairPrediction> collect_pairs(std::span<const SourceFunction> fns, std::span<const Label> preds) {
    check_same_size(fns.size(), preds.size(), "functions vs predictions");
    struct Slot {
        int orig = -1, cf = -1;
    };
    std::map<std::string, Slot> by_id;
    for (std::size_t i = 0; i < fns.size(); ++i) {
        auto& s = by_id[fns[i].id];
        int& dst = fns[i].provenance == Provenance::Counterfactual ? s.cf : s.orig;
        if (fns[i].provenance == Provenance::Upsampled)
            throw InvalidInput("upsampled record '" + fns[i].id + "' in a paired test set");
        if (dst >= 0) throw InvalidInput("duplicate " + std::string(to_string(fns[i].provenance)) + " for '" + fns[i].id + "'");
        dst = static_cast<int>(i);
    }
    std::vector<PairPrediction> out;
    for (const auto& [id, s] : by_id) {
        if (s.orig < 0 || s.cf < 0) throw MissingPair(id);
        const auto o = static_cast<std::size_t>(s.orig), c = static_cast<std::size_t>(s.cf);
        if (fns[o].label == fns[c].label) throw InvalidInput("pair '" + id + "' has equal labels");
        out.push_back({id, preds[o], preds[c], fns[o].label});
    }
    return out;
}

KMeansResult kmeans(const Eigen::MatrixXd& x, int k, std::uint64_t seed) {
    const auto n = x.rows();
    if (k < 1 || k > n) throw InvalidInput("k=" + std::to_string(k) + " with " + std::to_string(n) + " points");
    Rng rng(seed);
    KMeansResult r;
    r.centroids.resize(k, x.cols());
    std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    auto index = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    for (int c = 0; c < k; ++c) {
        if (c > 0) {
            double total = 0;
            for (double d : d2) total += d;
            index = -1;
            if (total > 0) {
                double target = rng.uniform() * total;
                for (Eigen::Index i = 0; i < n; ++i) {
                    target -= d2[static_cast<std::size_t>(i)];
                    if (target < 0 && d2[static_cast<std::size_t>(i)] > 0) {
                        index = i;
                        break;
                    }
                }
                // Rounding can leave the target just above zero.
                for (Eigen::Index i = n - 1; index < 0 && i >= 0; --i)
                    if (d2[static_cast<std::size_t>(i)] > 0) index = i;
            } else {
                index = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
            }
        }
        r.centroids.row(c) = x.row(index);
        for (Eigen::Index i = 0; i < n; ++i)
            d2[static_cast<std::size_t>(i)] =
                std::min(d2[static_cast<std::size_t>(i)], (x.row(i) - r.centroids.row(c)).squaredNorm());
    }

    r.assignments.assign(static_cast<std::size_t>(n), 0);
    auto assign = [&] {
        r.inertia = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = (x.row(i) - r.centroids.row(0)).squaredNorm();
            for (int c = 1; c < k; ++c) {
                const double d = (x.row(i) - r.centroids.row(c)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            r.assignments[static_cast<std::size_t>(i)] = best;
            r.inertia += best_d;
        }
    };
    assign();
    for (r.iterations = 1; r.iterations <= 300; ++r.iterations) {
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(r.assignments[static_cast<std::size_t>(i)]) += x.row(i);
            ++counts[static_cast<std::size_t>(r.assignments[static_cast<std::size_t>(i)])];
        }
        double shift = 0;
        for (int c = 0; c < k; ++c) {
            if (!counts[static_cast<std::size_t>(c)]) continue;
            const Eigen::RowVectorXd next = sums.row(c) / counts[static_cast<std::size_t>(c)];
            shift = std::max(shift, (next - r.centroids.row(c)).norm());
            r.centroids.row(c) = next;
        }
        assign();
        if (shift < 1e-8) break;
    }
    r.iterations = std::min(r.iterations, 300);
    return r;
}

double group_min_accuracy(std::span<const int> clusters, std::span<const Label> labels, std::span<const Label> preds) {
    check_same_size(clusters.size(), labels.size(), "clusters vs labels");
    check_same_size(preds.size(), labels.size(), "predictions vs labels");
    std::map<std::pair<int, int>, std::pair<std::size_t, std::size_t>> groups;  // size, correct
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto& g = groups[{clusters[i], labels[i] == Label::Vulnerable}];
        ++g.first;
        g.second += preds[i] == labels[i];
    }
    const double floor = 0.01 * static_cast<double>(labels.size());
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [key, g] : groups)
        if (static_cast<double>(g.first) > floor)
            best = std::min(best, static_cast<double>(g.second) / static_cast<double>(g.first));
    if (!std::isfinite(best)) throw NoValidGroups();
    return best;
}

double worst_group_accuracy(const Eigen::MatrixXd& embeddings, std::span<const Label> labels,
                            std::span<const Label> preds, int k, std::uint64_t seed) {
    check_same_size(static_cast<std::size_t>(embeddings.rows()), labels.size(), "embeddings vs labels");
    const auto km = kmeans(embeddings, k, seed);
    return group_min_accuracy(km.assignments, labels, preds);
}

double neighborhood_purity(const Eigen::MatrixXd& embeddings, std::span<const Label> labels, int k_nn) {
    const auto n = embeddings.rows();
    check_same_size(static_cast<std::size_t>(n), labels.size(), "embeddings vs labels");
    if (k_nn < 1 || k_nn >= n) throw InvalidInput("k_nn=" + std::to_string(k_nn) + " with " + std::to_string(n) + " points");
    double total = 0;
    std::vector<std::pair<double, Eigen::Index>> dist;
    for (Eigen::Index i = 0; i < n; ++i) {
        dist.clear();
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) dist.emplace_back((embeddings.row(i) - embeddings.row(j)).squaredNorm(), j);
        std::partial_sort(dist.begin(), dist.begin() + k_nn, dist.end());
        int same = 0;
        for (int t = 0; t < k_nn; ++t) same += labels[static_cast<std::size_t>(dist[static_cast<std::size_t>(t)].second)] ==
                                               labels[static_cast<std::size_t>(i)];
        total += static_cast<double>(same) / k_nn;
    }
    return total / static_cast<double>(n);
}

Signature attribution_signature(std::span<const double> scores, const cpg::CodePropertyGraph& g) {
    check_same_size(scores.size(), g.nodes.size(), "scores vs nodes");
    Signature sum{}, count{};
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const auto k = static_cast<std::size_t>(g.nodes[i].kind);
        sum[k] += scores[i];
        count[k] += 1;
    }
    Signature out{};
    for (std::size_t k = 0; k < out.size(); ++k)
        if (count[k] > 0) out[k] = sum[k] / count[k];
    return out;
}

namespace {

Eigen::VectorXd class_mean(std::span<const Signature> sigs, std::span<const Label> labels, Label cls, std::size_t* n) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(kSignatureDims);
    *n = 0;
    for (std::size_t i = 0; i < sigs.size(); ++i) {
        if (labels[i] != cls) continue;
        mean += Eigen::Map<const Eigen::VectorXd>(sigs[i].data(), kSignatureDims);
        ++*n;
    }
    if (*n) mean /= static_cast<double>(*n);
    return mean;
}

double class_variance(std::span<const Signature> sigs, std::span<const Label> labels, Label cls) {
    std::size_t n = 0;
    const Eigen::VectorXd mean = class_mean(sigs, labels, cls, &n);
    if (!n) return 0;
    double ss = 0;
    for (std::size_t i = 0; i < sigs.size(); ++i)
        if (labels[i] == cls) ss += (Eigen::Map<const Eigen::VectorXd>(sigs[i].data(), kSignatureDims) - mean).squaredNorm();
    return ss / static_cast<double>(n) / kSignatureDims;
}

}  // namespace

IntraClass intra_class_variance(std::span<const Signature> sigs, std::span<const Label> labels) {
    check_same_size(sigs.size(), labels.size(), "signatures vs labels");
    return {class_variance(sigs, labels, Label::Benign), class_variance(sigs, labels, Label::Vulnerable)};
}

double inter_class_distance(std::span<const Signature> sigs, std::span<const Label> labels) {
    check_same_size(sigs.size(), labels.size(), "signatures vs labels");
    std::size_t nb = 0, nv = 0;
    const auto mb = class_mean(sigs, labels, Label::Benign, &nb);
    const auto mv = class_mean(sigs, labels, Label::Vulnerable, &nv);
    if (!nb || !nv) throw InvalidInput("inter-class distance needs both classes");
    return (mb - mv).norm();
}

Projection project_2d(const Eigen::MatrixXd& x) {
    const auto n = x.rows(), d = x.cols();
    if (n < 1 || d < 2) throw InvalidInput("projection needs at least one point in two or more dimensions");
    const Eigen::MatrixXd centred = x.rowwise() - x.colwise().mean();
    Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(n);
    const double trace = cov.trace();
    Projection p;
    p.components.resize(d, 2);
    double captured = 0;
    for (int c = 0; c < 2; ++c) {
        // Fixed, non-symmetric start so no eigenvector is orthogonal to it
        // except by construction.
        Eigen::VectorXd v(d);
        for (Eigen::Index j = 0; j < d; ++j) v[j] = 1.0 + 0.1 * static_cast<double>(j) + 0.01 * static_cast<double>(j * j);
        v.normalize();
        for (int it = 0; it < 10000; ++it) {
            Eigen::VectorXd w = cov * v;
            const double norm = w.norm();
            if (norm < 1e-300) break;  // remaining spectrum is zero
            w /= norm;
            const double change = std::min((w - v).norm(), (w + v).norm());
            v = w;
            if (change < 1e-13) break;
        }
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0) v = -v;
        const double lambda = v.dot(cov * v);
        captured += lambda;
        p.components.col(c) = v;
        cov -= lambda * v * v.transpose();
    }
    p.coords = centred * p.components;
    p.explained_variance_ratio = trace > 0 ? captured / trace : 0.0;
    return p;
}

std::string projection_csv(std::span<const SourceFunction> fns, const Projection& p) {
    check_same_size(fns.size(), static_cast<std::size_t>(p.coords.rows()), "functions vs projected points");
    std::string out = "function_id,x,y,label\n";
    for (std::size_t i = 0; i < fns.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        out += fns[i].id + "," + fmt(p.coords(r, 0)) + "," + fmt(p.coords(r, 1)) + "," + std::string(to_string(fns[i].label)) + "\n";
    }
    return out;
}

const std::vector<std::string>& report_columns() {
    static const std::vector<std::string> cols{"Accuracy", "Precision", "Recall", "F1-score", "P-C",   "P-V",
                                               "P-B",      "P-R",       "WGA2",   "WGA3",     "WGA4",  "WGA5",
                                               "WGA6",     "WGA7",      "Purity", "Intra-B",  "Intra-V", "Inter-D"};
    return cols;
}

std::vector<double> report_values(const MetricsReport& r) {
    std::vector<double> v{r.standard.accuracy, r.standard.precision, r.standard.recall, r.standard.f1,
                          r.pairwise.pc,       r.pairwise.pv,        r.pairwise.pb,     r.pairwise.pr};
    v.insert(v.end(), r.wga.begin(), r.wga.end());
    v.insert(v.end(), {r.purity, r.intra.benign, r.intra.vulnerable, r.inter});
    return v;
}

bool MetricsReport::operator==(const MetricsReport& o) const {
    return split == o.split && report_values(*this) == report_values(o) &&
           standard.precision_undefined == o.standard.precision_undefined &&
           standard.recall_undefined == o.standard.recall_undefined;
}

std::string report_to_json(const MetricsReport& r) {
    json j = json::object();
    j["split"] = r.split;
    const auto& cols = report_columns();
    const auto vals = report_values(r);
    for (std::size_t i = 0; i < cols.size(); ++i) j[cols[i]] = vals[i];
    j["precision_undefined"] = r.standard.precision_undefined;
    j["recall_undefined"] = r.standard.recall_undefined;
    return j.dump();
}

MetricsReport report_from_json(std::string_view text) {
    try {
        const auto j = json::parse(text);
        MetricsReport r;
        r.split = j.at("split").get<std::string>();
        std::vector<double> v;
        for (const auto& c : report_columns()) v.push_back(j.at(c).get<double>());
        r.standard = {v[0], v[1], v[2], v[3], j.value("precision_undefined", false), j.value("recall_undefined", false)};
        r.pairwise = {v[4], v[5], v[6], v[7]};
        std::copy(v.begin() + 8, v.begin() + 14, r.wga.begin());
        r.purity = v[14];
        r.intra = {v[15], v[16]};
        r.inter = v[17];
        return r;
    } catch (const json::exception& e) {
        throw FormatError(1, "report", e.what());
    }
}

std::string reports_to_csv(std::span<const MetricsReport> reports) {
    std::string out = "Split";
    for (const auto& c : report_columns()) out += "," + c;
    out += "\n";
    for (const auto& r : reports) {
        out += r.split;
        for (double v : report_values(r)) out += "," + fmt(v);
        out += "\n";
    }
    return out;
}

MetricsReport compute_report(std::string split, const ReportInputs& in, const ReportConfig& cfg) {
    const auto n = in.fns.size();
    check_same_size(in.preds.size(), n, "predictions vs functions");
    check_same_size(static_cast<std::size_t>(in.embeddings.rows()), n, "embeddings vs functions");
    std::vector<Label> labels;
    for (const auto& f : in.fns) labels.push_back(f.label);
    MetricsReport r;
    r.split = std::move(split);
    r.standard = standard_metrics(in.preds, labels);
    const auto pairs = collect_pairs(in.fns, in.preds);
    r.pairwise = pairwise_metrics(pairs);
    for (int k = 2; k <= 7; ++k)
        r.wga[static_cast<std::size_t>(k - 2)] = worst_group_accuracy(in.embeddings, labels, in.preds, k, cfg.seed);
    r.purity = neighborhood_purity(in.embeddings, labels, cfg.k_nn);
    if (!in.signatures.empty()) {
        r.intra = intra_class_variance(in.signatures, labels);
        r.inter = inter_class_distance(in.signatures, labels);
    }
    return r;
}

}  // namespace vision::metrics
