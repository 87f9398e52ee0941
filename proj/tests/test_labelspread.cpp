#include "doctest.h"
#include "support.hpp"

#include "dllids/labelspread.hpp"

#include <cmath>

using namespace dllids;

namespace {

struct RandomGraph {
    SpreadGraph graph;
    double alpha;
};

RandomGraph random_graph(Rng& rng, std::size_t max_nodes) {
    const auto n = 2 + uniform_index(rng, max_nodes - 1);
    const auto dims = 1 + uniform_index(rng, 8);
    Matrix pts = testing::random_matrix(rng, n, dims);
    std::vector<int> labels(n, -1);
    labels[0] = 0;
    labels[1] = 1;
    for (std::size_t i = 2; i < n; ++i) {
        const double u = testing::uniform(rng, 0, 1);
        labels[i] = u < 0.3 ? 0 : u < 0.6 ? 1 : -1;
    }
    const double sigma = testing::uniform(rng, 0.05, 1.0);
    return {make_graph(gaussian_affinity(pts, sigma), labels), testing::uniform(rng, 0.05, 0.95)};
}

SpreadGraph two_nodes(double w) {
    Matrix W(2, 2);
    W << 0, w, w, 0;
    return make_graph(W, {0, -1});
}

}  // namespace

TEST_CASE("Gaussian affinity") {
    Matrix pts(3, 2);
    const double d = 0.8;
    pts << 0, 0, d, 0, d, 0;
    auto W = gaussian_affinity(pts, d / std::sqrt(2.0));
    CHECK(W(0, 1) == doctest::Approx(std::exp(-1.0)));
    CHECK(W(0, 1) == doctest::Approx(0.3679).epsilon(1e-4));
    CHECK(W(1, 2) == 1.0);
    CHECK(W.diagonal().isZero());
    CHECK_THROWS(gaussian_affinity(pts, 0.0));

    Rng rng(1);
    Matrix R = testing::random_matrix(rng, 30, 4);
    Matrix WR = gaussian_affinity(R, 0.3);
    CHECK(WR == WR.transpose());
    CHECK(WR.diagonal().isZero());
}

TEST_CASE("graph construction: degrees, normalized L and zero-degree nodes") {
    Matrix W(3, 3);
    W << 0, 1, 0, 1, 0, 0, 0, 0, 0;
    auto g = make_graph(W, {0, 1, -1});
    CHECK(g.degree[0] == 1.0);
    CHECK(g.degree[2] == 0.0);
    CHECK(g.L(0, 1) == 1.0);
    CHECK(g.L.row(2).isZero());
    CHECK(g.Y0.row(2).isZero());
    CHECK(g.Y0(1, 1) == 1.0);
    auto p = spread_iterative(g, 0.9, 1e-12, 1000);
    CHECK(p.converged);
    CHECK(p.scores.row(2).isZero());
}

TEST_CASE("two-node graph converges to (2/3, 1/3)") {
    for (double w : {0.01, 1.0, 5.0}) {
        auto g = two_nodes(w);
        auto exact = spread_closed_form(g, 0.5);
        CHECK(exact(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
        CHECK(exact(1, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
        auto it = spread_iterative(g, 0.5, 1e-12, 1000);
        CHECK(it.converged);
        CHECK(std::abs(it.scores(0, 0) - 2.0 / 3.0) < 1e-6);
        CHECK(std::abs(it.scores(1, 0) - 1.0 / 3.0) < 1e-6);
        CHECK(argmax_rows(it.scores)[1] == 0);
    }
}

TEST_CASE("property: iterative propagation matches the closed form") {
    Rng rng(50);
    for (int trial = 0; trial < 50; ++trial) {
        auto [g, alpha] = random_graph(rng, 500);
        auto exact = spread_closed_form(g, alpha);
        auto it = spread_iterative(g, alpha, 1e-12, 100000);
        CHECK(it.converged);
        CHECK((it.scores - exact).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("property: propagation contracts geometrically") {
    Rng rng(51);
    for (int trial = 0; trial < 30; ++trial) {
        auto [g, alpha] = random_graph(rng, 120);
        auto p = spread_iterative(g, alpha, 1e-14, 5000);
        // ||dY_t||_F <= alpha^(t-1) ||dY_1||_F and max-abs sits within sqrt(size) of Frobenius
        const double slack = std::sqrt(static_cast<double>(g.Y0.size()));
        for (std::size_t t = 0; t < p.deltas.size(); ++t)
            CHECK(p.deltas[t] <= slack * std::pow(alpha, static_cast<double>(t)) * p.deltas[0] * (1 + 1e-9) + 1e-15);
    }
}

TEST_CASE("small alpha keeps labels at their initial values") {
    Rng rng(52);
    auto [g, alpha] = random_graph(rng, 60);
    (void)alpha;
    auto y = spread_closed_form(g, 1e-9);
    CHECK((y - g.Y0).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("the closed form minimises the spreading cost") {
    Rng rng(53);
    for (int trial = 0; trial < 10; ++trial) {
        auto [g, alpha] = random_graph(rng, 60);
        auto best = spread_closed_form(g, alpha);
        const double at_best = spread_cost(g, best, alpha);
        for (int k = 0; k < 5; ++k) {
            Matrix nudged = best + 1e-3 * testing::random_matrix(rng, static_cast<std::size_t>(best.rows()), 2, -1, 1);
            CHECK(spread_cost(g, nudged, alpha) >= at_best);
        }
    }
}

TEST_CASE("Rayleigh quotient") {
    Matrix W(2, 2);
    W << 0, 1, 1, 0;
    auto g = make_graph(W, {-1, -1});
    Vector f(2);
    f << 1, -1;
    CHECK(rayleigh_quotient(g, f) == doctest::Approx(2.0));
    f << 3, 3;
    CHECK(rayleigh_quotient(g, f) == 0.0);

    Rng rng(54);
    for (int trial = 0; trial < 200; ++trial) {
        auto [rg, alpha] = random_graph(rng, 40);
        (void)alpha;
        Vector v = testing::random_vector(rng, static_cast<std::size_t>(rg.W.rows()), -1, 1);
        const double q = rayleigh_quotient(rg, v);
        CHECK(q >= 0.0);
        CHECK(q <= 2.0 + 1e-12);
    }
}

TEST_CASE("argmax ties go to class 1") {
    Matrix s(3, 2);
    s << 0.4, 0.1, 0.3, 0.3, 0.0, 0.0;
    CHECK(argmax_rows(s) == std::vector<int>{0, 1, 1});
}

TEST_CASE("anchor selection is class balanced and seeded") {
    std::vector<int> labels(1000, 0);
    for (std::size_t i = 0; i < 300; ++i) labels[i * 3] = 1;
    auto a = select_anchors(labels, 200, 4);
    CHECK(a.size() == 200);
    CHECK(std::count_if(a.begin(), a.end(), [&](std::size_t i) { return labels[i] == 1; }) == 100);
    CHECK(select_anchors(labels, 200, 4) == a);
    CHECK(select_anchors(labels, 200, 5) != a);
    CHECK(std::is_sorted(a.begin(), a.end()));
}

TEST_CASE("fitted model: queries on an anchor take its class; permuting anchors changes nothing") {
    Rng rng(55);
    auto [X, y] = testing::blobs(rng, 40, 3, 0.05);
    LsOptions o;
    o.sigma = 0.1;
    auto m = fit_ls(X, y, o);
    Matrix q(2, 3);
    q.row(0) = X.row(3);
    q.row(1) = X.row(70);
    CHECK(predict_ls(m, q) == std::vector<int>{0, 1});

    std::vector<std::size_t> perm(static_cast<std::size_t>(X.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix Xp(X.rows(), X.cols());
    std::vector<int> yp;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        Xp.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(perm[i]));
        yp.push_back(y[perm[i]]);
    }
    auto mp = fit_ls(Xp, yp, o);
    Matrix queries = testing::random_matrix(rng, 25, 3);
    auto a = propagate_iterative(m, queries).scores, b = propagate_iterative(mp, queries).scores;
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((propagate_closed_form(m, queries) - a).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("sigma rules and option validation") {
    Matrix pts(4, 1);
    pts << 0, 1, 3, 7;
    // pairwise distances 1,3,7,2,6,4 -> median 3.5
    CHECK(median_pairwise_distance(pts) == doctest::Approx(3.5));
    // nearest-neighbour distances 1,1,2,4 -> median 1.5
    CHECK(median_knn_distance(pts, 1) == doctest::Approx(1.5));
    CHECK_THROWS(median_knn_distance(pts, 4));

    LsOptions o;
    o.alpha = 1.0;
    CHECK_THROWS_AS(o.validate(), std::invalid_argument);
    o.alpha = 0.9;
    o.sigma = -1.0;
    CHECK_THROWS_AS(o.validate(), std::invalid_argument);
    o.sigma.reset();
    o.sigma_rule = "silverman";
    CHECK_THROWS_AS(o.validate(), std::invalid_argument);
    CHECK_THROWS_AS(fit_ls(pts, {0, 0, 0, 0}, LsOptions{}), DataError);
}

TEST_CASE("LS models persist with their anchors") {
    Rng rng(56);
    auto [X, y] = testing::blobs(rng, 30, 4, 0.1);
    auto m = fit_ls(X, y, LsOptions{});
    auto dir = testing::scratch_dir("ls");
    save_ls(m, (dir / "ls.txt").string());
    auto back = load_ls((dir / "ls.txt").string());
    CHECK(back.sigma == m.sigma);
    CHECK(back.anchors == m.anchors);
    CHECK(back.anchor_labels == m.anchor_labels);
    Matrix q = testing::random_matrix(rng, 10, 4);
    CHECK(propagate_iterative(back, q).scores == propagate_iterative(m, q).scores);
}
