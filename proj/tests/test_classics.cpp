#include "doctest.h"
#include "support.hpp"

#include "dllids/classics.hpp"

#include <sstream>

using namespace dllids;

namespace {

const ClassicKind kKinds[] = {ClassicKind::Knn, ClassicKind::Lgr, ClassicKind::LinSvm, ClassicKind::Dtc};

double train_accuracy(const ClassicModel& m, const Matrix& X, const std::vector<int>& y) {
    auto p = predict_labels(m, X);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < y.size(); ++i) ok += p[i] == y[i];
    return static_cast<double>(ok) / static_cast<double>(y.size());
}

// Best accuracy any single-split stump (either leaf labelling) reaches on XOR.
double best_stump_on_xor(const Matrix& X, const std::vector<int>& y) {
    double best = 0.0;
    for (Eigen::Index f = 0; f < X.cols(); ++f)
        for (double t : {-0.5, 0.5, 1.5})
            for (int left : {0, 1})
                for (int right : {0, 1}) {
                    std::size_t ok = 0;
                    for (Eigen::Index i = 0; i < X.rows(); ++i)
                        ok += (X(i, f) <= t ? left : right) == y[static_cast<std::size_t>(i)];
                    best = std::max(best, static_cast<double>(ok) / static_cast<double>(X.rows()));
                }
    return best;
}

}  // namespace

TEST_CASE("every kind separates two blobs") {
    Rng rng(1);
    auto [X, y] = testing::blobs(rng, 150, 6);
    for (auto kind : kKinds) {
        auto m = train_classic(kind, X, y, {}, 4);
        INFO(to_string(kind));
        CHECK(train_accuracy(m, X, y) >= 0.99);
    }
}

TEST_CASE("LINSVM on two mirrored points learns a positive weight") {
    Matrix X(2, 1);
    X << -1.0, 1.0;
    auto m = train_classic(ClassicKind::LinSvm, X, {0, 1});
    CHECK(m.weights[0] > 0.0);
    CHECK(predict_classic(m, Vector::Constant(1, 1.0)).label == 1);
    CHECK(predict_classic(m, Vector::Constant(1, -1.0)).label == 0);
}

TEST_CASE("a depth-1 tree cannot learn XOR") {
    Matrix X(4, 2);
    X << 0, 0, 0, 1, 1, 0, 1, 1;
    std::vector<int> y = {0, 1, 1, 0};
    const double oracle = best_stump_on_xor(X, y);
    CHECK(oracle <= 0.75);
    ClassicParams p;
    p.max_depth = 1;
    p.min_leaf = 1;
    auto m = train_classic(ClassicKind::Dtc, X, y, p);
    CHECK(train_accuracy(m, X, y) <= oracle);
    p.max_depth = 2;
    CHECK(train_accuracy(train_classic(ClassicKind::Dtc, X, y, p), X, y) <= 1.0);
}

TEST_CASE("KNN with k = 1 returns the nearest label") {
    Matrix X(3, 2);
    X << 0, 0, 1, 1, 5, 5;
    ClassicParams p;
    p.knn_k = 1;
    auto m = train_classic(ClassicKind::Knn, X, {0, 1, 0}, p);
    Vector q(2);
    q << 0.9, 1.2;
    CHECK(predict_classic(m, q).label == 1);
    q << 4.0, 4.5;
    CHECK(predict_classic(m, q).label == 0);
}

TEST_CASE("scores exactly at the threshold classify as positive") {
    Matrix X(2, 1);
    X << 0.0, 1.0;
    auto m = train_classic(ClassicKind::Lgr, X, {0, 1});
    m.weights.setZero();
    m.bias = 0.0;
    auto p = predict_classic(m, Vector::Constant(1, 0.3));
    CHECK(p.score == 0.0);
    CHECK(p.label == 1);

    ClassicParams kp;
    kp.knn_k = 2;
    auto knn = train_classic(ClassicKind::Knn, X, {0, 1}, kp);
    CHECK(predict_classic(knn, Vector::Constant(1, 0.5)).label == 1);
}

TEST_CASE("pure tree leaves reproduce their training labels") {
    Rng rng(2);
    auto [X, y] = testing::blobs(rng, 40, 3, 0.1);
    ClassicParams p;
    p.min_leaf = 1;
    p.max_depth = 30;
    auto m = train_classic(ClassicKind::Dtc, X, y, p);
    for (const auto& node : m.tree)
        if (node.feature < 0) CHECK((node.positive_fraction == 0.0 || node.positive_fraction == 1.0));
    CHECK(train_accuracy(m, X, y) == 1.0);
}

TEST_CASE("property: duplicating every training row leaves predictions unchanged") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        auto [X, y] = testing::blobs(rng, 30, 4, 0.15);
        Matrix X2(2 * X.rows(), X.cols());
        X2 << X, X;
        std::vector<int> y2 = y;
        y2.insert(y2.end(), y.begin(), y.end());
        Matrix Q = testing::random_matrix(rng, 50, 4);

        ClassicParams knn;
        knn.knn_k = 1;
        CHECK(predict_labels(train_classic(ClassicKind::Knn, X, y, knn), Q) ==
              predict_labels(train_classic(ClassicKind::Knn, X2, y2, knn), Q));
        ClassicParams tree;
        tree.min_leaf = 1;
        CHECK(predict_labels(train_classic(ClassicKind::Dtc, X, y, tree), Q) ==
              predict_labels(train_classic(ClassicKind::Dtc, X2, y2, tree), Q));
        // stochastic-gradient fits: agreement on points away from the boundary
        Matrix far(2, 4);
        far.row(0).setConstant(0.1);
        far.row(1).setConstant(0.9);
        for (auto kind : {ClassicKind::Lgr, ClassicKind::LinSvm})
            CHECK(predict_labels(train_classic(kind, X, y), far) == predict_labels(train_classic(kind, X2, y2), far));
    }
}

TEST_CASE("linear fits: training loss trends down and fits are seeded") {
    Rng rng(4);
    auto [X, y] = testing::blobs(rng, 100, 5, 0.2);
    for (auto kind : {ClassicKind::Lgr, ClassicKind::LinSvm}) {
        auto m = train_classic(kind, X, y, {}, 9);
        const auto& h = m.loss_history;
        REQUIRE(h.size() == 50);
        double first = 0.0, last = 0.0;
        for (std::size_t i = 0; i < 10; ++i) {
            first += h[i];
            last += h[h.size() - 1 - i];
        }
        CHECK(last <= first);
        auto again = train_classic(kind, X, y, {}, 9);
        CHECK(again.weights == m.weights);
        CHECK(again.bias == m.bias);
    }
}

TEST_CASE("bad training data") {
    Matrix X(3, 1);
    X << 0, 1, 2;
    CHECK_THROWS_AS(train_classic(ClassicKind::Knn, X, {1, 1, 1}), DataError);
    CHECK_THROWS_AS(train_classic(ClassicKind::Knn, X, {0, 1}), std::invalid_argument);
    CHECK_THROWS_AS(train_classic(ClassicKind::Knn, X, {0, 1, 2}), std::invalid_argument);
    CHECK(parse_classic_kind("svm") == ClassicKind::LinSvm);
    CHECK_THROWS(parse_classic_kind("bnb"));
}

TEST_CASE("classic models round-trip through their text format") {
    Rng rng(5);
    auto [X, y] = testing::blobs(rng, 40, 3, 0.2);
    Matrix Q = testing::random_matrix(rng, 30, 3);
    for (auto kind : kKinds) {
        auto m = train_classic(kind, X, y, {}, 2);
        std::stringstream buf;
        write_classic(m, buf);
        auto back = read_classic(buf, "memory");
        auto a = predict_classic_batch(m, Q), b = predict_classic_batch(back, Q);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].label == b[i].label);
            CHECK(a[i].score == b[i].score);
        }
    }
    std::stringstream bad("# format=something-else version=1\n");
    CHECK_THROWS_AS(read_classic(bad, "memory"), FormatError);
}
