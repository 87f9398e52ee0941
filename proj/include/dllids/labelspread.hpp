#pragma once

// Graph label spreading over a Gaussian affinity graph of labelled anchors.
// Queries are appended to the graph as unlabelled nodes (transductive).

#include "dllids/ingest.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dllids {

inline constexpr double kDegreeFloor = 1e-12;

struct LsOptions {
    std::size_t anchors = 2000;
    std::optional<double> sigma;    // derived from the anchors by sigma_rule when unset
    std::string sigma_rule = "knn";  // knn: median distance to the sigma_k-th nearest anchor; pairwise: median pairwise
    std::size_t sigma_k = 1;
    double alpha = 0.9;
    double tolerance = 1e-6;
    std::size_t max_iterations = 1000;
    std::size_t query_batch = 500;
    std::uint64_t seed = 9;

    void validate() const;
};

/// A dense graph: affinity W (zero diagonal), degrees, L = D^-1/2 W D^-1/2 and
/// initial label rows (one-hot for labelled nodes, zero for unlabelled).
struct SpreadGraph {
    Matrix W;
    Vector degree;
    Matrix L;
    Matrix Y0;
};

/// Gaussian kernel exp(-||xi - xj||^2 / (2 sigma^2)) with w_ii = 0.
Matrix gaussian_affinity(const Matrix& rows, double sigma);
/// `labels[i]` is a class index or -1 for unlabelled nodes.
SpreadGraph make_graph(const Matrix& W, const std::vector<int>& labels, std::size_t classes = 2);

struct Propagation {
    Matrix scores;
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<double> deltas;  // max-abs change per iteration
};

/// Y <- alpha L Y + (1 - alpha) Y0 from Y0 until the max-abs change drops below tol.
Propagation spread_iterative(const SpreadGraph& g, double alpha, double tol, std::size_t max_iterations);
/// (1 - alpha) (I - alpha L)^-1 Y0.
Matrix spread_closed_form(const SpreadGraph& g, double alpha);

/// Degree-weighted Rayleigh quotient sum_{u<v} w_uv (f_u - f_v)^2 / sum_v f_v^2 d_v.
double rayleigh_quotient(const SpreadGraph& g, const Vector& f);
/// ||Y - Y0||^2 + mu tr(Y^T (I - L) Y) with mu = alpha / (1 - alpha); its minimiser is the closed form.
double spread_cost(const SpreadGraph& g, const Matrix& Y, double alpha);

struct LabelSpreadModel {
    Matrix anchors;
    std::vector<int> anchor_labels;
    std::vector<std::size_t> anchor_ids;  // rows of the training set the anchors came from
    double sigma = 1.0;
    double alpha = 0.9;
    double tolerance = 1e-6;
    std::size_t max_iterations = 1000;
    std::size_t query_batch = 500;
    Matrix anchor_W;  // cached anchor-anchor block

    std::size_t size() const { return static_cast<std::size_t>(anchors.rows()); }
};

/// Median of the pairwise distances between distinct rows.
double median_pairwise_distance(const Matrix& rows);
/// Median over rows of the distance to the k-th nearest other row.
double median_knn_distance(const Matrix& rows, std::size_t k);
/// Up to n/2 seeded anchors per class.
std::vector<std::size_t> select_anchors(const std::vector<int>& labels, std::size_t n, std::uint64_t seed);

LabelSpreadModel fit_ls(const Matrix& anchors, const std::vector<int>& labels, const LsOptions& options);
LabelSpreadModel fit_ls(const Dataset& train, const LsOptions& options);

/// Anchors plus queries as one graph; query rows are the last ones.
SpreadGraph extended_graph(const LabelSpreadModel& model, const Matrix& queries);

struct LsResult {
    Matrix scores;  // one row per query
    bool converged = true;
    std::size_t max_iterations_used = 0;
};

LsResult propagate_iterative(const LabelSpreadModel& model, const Matrix& queries);
Matrix propagate_closed_form(const LabelSpreadModel& model, const Matrix& queries);
/// Argmax per score row; ties (including all-zero rows) go to class 1.
std::vector<int> argmax_rows(const Matrix& scores);
std::vector<int> predict_ls(const LabelSpreadModel& model, const Matrix& queries);

/// Anchors are stored by value alongside the hyperparameters.
void save_ls(const LabelSpreadModel& model, const std::string& path, const Meta& meta = {});
LabelSpreadModel load_ls(const std::string& path);

}  // namespace dllids
