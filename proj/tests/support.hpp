#pragma once

// Generators and fixtures shared by the unit tests.

#include "dllids/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <random>

namespace testing {

using dllids::Matrix;
using dllids::Rng;
using dllids::Vector;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline Vector random_vector(Rng& rng, std::size_t n, double lo = 0.0, double hi = 1.0) {
    Vector v(static_cast<Eigen::Index>(n));
    for (auto& x : v) x = uniform(rng, lo, hi);
    return v;
}

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = 0.0, double hi = 1.0) {
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, lo, hi);
    return m;
}

inline dllids::Mask random_mask(Rng& rng, std::size_t n) {
    dllids::Mask m(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = uniform(rng, 0, 1) < 0.5;
    return m;
}

// Small random architectures: 1-4 hidden layers of width 1-12.
inline dllids::MlpSpec random_spec(Rng& rng, std::size_t input_width) {
    dllids::MlpSpec s;
    s.input_width = input_width;
    s.hidden.clear();
    const auto depth = 1 + dllids::uniform_index(rng, 4);
    for (std::size_t l = 0; l < depth; ++l) s.hidden.push_back(1 + dllids::uniform_index(rng, 12));
    return s;
}

// One identity hidden layer followed by the given output weights: on
// non-negative inputs the logits are exactly W x + b.
inline dllids::MlpModel linear_model(const Matrix& W, const Vector& b) {
    dllids::MlpSpec s;
    s.input_width = static_cast<std::size_t>(W.cols());
    s.hidden = {s.input_width};
    s.output_width = static_cast<std::size_t>(W.rows());
    auto m = dllids::init_model(s, 1);
    m.layers[0].weights = Matrix::Identity(W.cols(), W.cols());
    m.layers[0].bias = Vector::Zero(W.cols());
    m.layers[1].weights = W;
    m.layers[1].bias = b;
    return m;
}

inline dllids::EncodedSample sample_of(const Vector& x, int label, dllids::Mask mask = {}) {
    dllids::EncodedSample s;
    s.features = x;
    s.label = label;
    s.mask = mask.empty() ? dllids::Mask(static_cast<std::size_t>(x.size()), true) : std::move(mask);
    return s;
}

// Two Gaussian blobs centred at 0.3 and 0.7 along every axis.
inline std::pair<Matrix, std::vector<int>> blobs(Rng& rng, std::size_t per_class, std::size_t dims, double spread = 0.05) {
    Matrix X(static_cast<Eigen::Index>(2 * per_class), static_cast<Eigen::Index>(dims));
    std::vector<int> y;
    std::normal_distribution<double> noise(0.0, spread);
    for (std::size_t i = 0; i < 2 * per_class; ++i) {
        const int c = i < per_class ? 0 : 1;
        for (std::size_t d = 0; d < dims; ++d)
            X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = (c ? 0.7 : 0.3) + noise(rng);
        y.push_back(c);
    }
    return {X, y};
}

// Worst relative error of the analytic loss gradient against central
// differences, measured as ||g - g_fd||_inf / max(||g||_inf, ||g_fd||_inf).
inline double gradient_error(const dllids::MlpModel& model, const Vector& x, int y, double h = 1e-6) {
    const Vector g = dllids::input_gradient(model, x, y);
    Vector fd(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vector up = x, down = x;
        up[i] += h;
        down[i] -= h;
        fd[i] = (dllids::loss(dllids::forward(model, up).probs, y) - dllids::loss(dllids::forward(model, down).probs, y)) /
                (2 * h);
    }
    const double scale = std::max({g.lpNorm<Eigen::Infinity>(), fd.lpNorm<Eigen::Infinity>(), 1e-12});
    return (g - fd).lpNorm<Eigen::Infinity>() / scale;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::current_path() / ("scratch-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// A pipeline config small enough for unit tests (a few seconds end to end).
inline nlohmann::json tiny_config_json(const std::string& out) {
    return {{"output_dir", out},
            {"verbose", false},
            {"data",
             {{"source", "synthetic"}, {"synthetic_records", 2400}, {"train_n", 1500}, {"test_n", 600}}},
            {"train", {{"epochs", 4}}},
            {"attack", {{"eval_samples", 120}, {"budgets", {0.05, 0.1}}, {"cw_steps", 20}}},
            {"detector", {{"pairs", 400}, {"bank_size", 600}, {"batch_size", 100}, {"k", 10}}},
            {"ls", {{"anchors", 200}}},
            {"eval", {{"detection_budgets", {0.1}}, {"db_probes", 5}}}};
}

}  // namespace testing
