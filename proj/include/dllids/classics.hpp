#pragma once

// Classical classifiers: k-nearest neighbours, logistic regression, linear
// hinge-loss SVM and a Gini decision tree. Labels are 0/1; a score at or
// above the kind's threshold classifies as 1.

#include "dllids/util.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace dllids {

enum class ClassicKind { Knn, Lgr, LinSvm, Dtc };

std::string to_string(ClassicKind k);
ClassicKind parse_classic_kind(const std::string& name);

struct ClassicParams {
    std::size_t knn_k = 5;
    std::size_t epochs = 50;
    double learning_rate = 0.05;
    double l2 = 1e-4;
    std::size_t max_depth = 12;
    std::size_t min_leaf = 5;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;  // x[feature] <= threshold goes left
    int left = -1;
    int right = -1;
    double positive_fraction = 0.0;
};

struct ClassicModel {
    ClassicKind kind = ClassicKind::LinSvm;
    ClassicParams params;
    // KNN
    Matrix store;
    std::vector<int> store_labels;
    // LGR / LINSVM
    Vector weights;
    double bias = 0.0;
    std::vector<double> loss_history;  // mean training loss per epoch
    // DTC
    std::vector<TreeNode> tree;

    /// Decision threshold on the raw score: 0 for the linear kinds, 0.5 for vote/leaf fractions.
    double threshold() const;
    std::size_t input_width() const;
};

struct ClassicPrediction {
    int label = 0;
    double score = 0.0;
};

ClassicModel train_classic(ClassicKind kind, const Matrix& features, const std::vector<int>& labels,
                           const ClassicParams& params = {}, std::uint64_t seed = 1);
ClassicPrediction predict_classic(const ClassicModel& model, const Vector& x);
std::vector<ClassicPrediction> predict_classic_batch(const ClassicModel& model, const Matrix& rows);
std::vector<int> predict_labels(const ClassicModel& model, const Matrix& rows);

void write_classic(const ClassicModel& model, std::ostream& out, const Meta& meta = {});
/// `path` only labels error messages.
ClassicModel read_classic(std::istream& in, const std::string& path);
void save_classic(const ClassicModel& model, const std::string& path, const Meta& meta = {});
ClassicModel load_classic(const std::string& path);

}  // namespace dllids
