#include "doctest.h"
#include "support.hpp"

#include "dllids/aedetect.hpp"

using namespace dllids;

namespace {

// Clean LIDs around 5, adversarial around 15, per layer.
LidTrainingSet separable_set(Rng& rng, std::size_t pairs, std::size_t layers) {
    LidTrainingSet set;
    set.features.resize(static_cast<Eigen::Index>(2 * pairs), static_cast<Eigen::Index>(layers));
    for (std::size_t i = 0; i < 2 * pairs; ++i) {
        const int label = static_cast<int>(i % 2);
        for (std::size_t l = 0; l < layers; ++l)
            set.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) =
                (label ? 15.0 : 5.0) + testing::uniform(rng, -2, 2);
        set.labels.push_back(label);
    }
    set.meta = {{"k", "12"}, {"batch", "150"}, {"attacks", "BIM+CW"}, {"budgets", "0.1"}};
    return set;
}

}  // namespace

TEST_CASE("standardizer centres and scales; constant columns are centred only") {
    Matrix X(4, 2);
    X << 1, 3, 2, 3, 3, 3, 4, 3;
    auto s = Standardizer::fit(X);
    auto Z = s.apply(X);
    CHECK(Z.col(0).mean() == doctest::Approx(0.0));
    CHECK((Z.col(0).array().square().mean()) == doctest::Approx(1.0));
    CHECK(Z.col(1).isZero());
    CHECK(s.apply(Vector(X.row(2).transpose())) == Z.row(2).transpose());
}

TEST_CASE("a separable LID set gives a perfect held-out score") {
    Rng rng(1);
    auto set = separable_set(rng, 300, 5);
    for (auto kind : {ClassicKind::LinSvm, ClassicKind::Lgr, ClassicKind::Dtc}) {
        DetectorTrainOptions o;
        o.kind = kind;
        auto d = train_ae_detector(set, o);
        CHECK(d.heldout_size == 120);
        CHECK(d.heldout_accuracy == 1.0);
        CHECK(d.layer_count == 5);
        CHECK(d.lid.k == 12);
        CHECK(d.lid.batch_size == 150);
        CHECK(d.attacks == std::vector<std::string>{"BIM", "CW"});
    }
}

TEST_CASE("detect thresholds the centred inner score") {
    Rng rng(2);
    auto d = train_ae_detector(separable_set(rng, 100, 3), {});
    Vector high = Vector::Constant(3, 15.0), low = Vector::Constant(3, 5.0);
    auto h = detect(d, high), l = detect(d, low);
    CHECK(h.adversarial);
    CHECK(h.score > 0.0);
    CHECK(!l.adversarial);
    CHECK(l.score < 0.0);
    // pure: same input, same output
    CHECK(detect(d, high).score == h.score);
    d.threshold = h.score + 1.0;
    CHECK(!detect(d, high).adversarial);
    d.threshold = h.score;
    CHECK(detect(d, high).adversarial);
    CHECK_THROWS_AS(detect(d, Vector::Constant(4, 1.0)), std::invalid_argument);
}

TEST_CASE("property: raising the threshold never raises the false-positive rate") {
    Rng rng(3);
    auto set = separable_set(rng, 200, 4);
    for (Eigen::Index i = 0; i < set.features.rows(); ++i) set.features(i, 0) += testing::uniform(rng, -8, 8);
    auto d = train_ae_detector(set, {});
    Matrix clean = testing::random_matrix(rng, 400, 4, 2.0, 14.0);
    double last_fpr = 1.0;
    for (double t = -4.0; t <= 4.0; t += 0.25) {
        d.threshold = t;
        std::size_t fp = 0;
        for (const auto& r : detect_batch(d, clean)) fp += r.adversarial;
        const double fpr = static_cast<double>(fp) / 400.0;
        CHECK(fpr <= last_fpr);
        last_fpr = fpr;
    }
}

TEST_CASE("degenerate detector training sets are rejected") {
    LidTrainingSet empty;
    CHECK_THROWS_AS(train_ae_detector(empty, {}), DataError);
    Rng rng(4);
    auto one_class = separable_set(rng, 20, 2);
    for (auto& y : one_class.labels) y = 0;
    CHECK_THROWS_AS(train_ae_detector(one_class, {}), DataError);
    auto bad = separable_set(rng, 20, 2);
    bad.features(0, 0) = std::nan("");
    CHECK_THROWS_AS(train_ae_detector(bad, {}), DataError);
}

TEST_CASE("detectors persist with their LID settings") {
    Rng rng(5);
    auto d = train_ae_detector(separable_set(rng, 100, 5), {});
    d.threshold = 0.25;
    auto dir = testing::scratch_dir("aedetect");
    save_detector(d, (dir / "det.json").string());
    auto back = load_detector((dir / "det.json").string());
    CHECK(back.lid.k == d.lid.k);
    CHECK(back.lid.batch_size == d.lid.batch_size);
    CHECK(back.layer_count == 5);
    CHECK(back.threshold == 0.25);
    Matrix probe = testing::random_matrix(rng, 50, 5, 0.0, 20.0);
    auto a = detect_batch(d, probe), b = detect_batch(back, probe);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].score == b[i].score);
}

TEST_CASE("noise-probe baseline") {
    // z1 - z0 = x1 + x2 - 1: the point (0.05, 0.05) sits 0.9 / sqrt(2) from the boundary
    Matrix W(2, 2);
    W << 0, 0, 1, 1;
    Vector b(2);
    b << 0, -1;
    auto m = testing::linear_model(W, b);
    Mask mask(2, true);
    Vector deep = Vector::Constant(2, 0.05), edge = Vector::Constant(2, 0.5);
    DbBaseline db;
    CHECK(!db_detect(m, deep, mask, db, 1));
    db.tau = 0.0;
    CHECK(db_detect(m, deep, mask, db, 1));
    // on the boundary about half of the probes flip
    db.tau = 0.2;
    db.probes = 200;
    CHECK(db_detect(m, edge, mask, db, 1));
    CHECK(db_detect(m, edge, mask, db, 7) == db_detect(m, edge, mask, db, 7));
    db.tau = 1.5;
    CHECK_THROWS(db_detect(m, deep, mask, db, 1));
}
