#include "doctest.h"
#include "support.hpp"

#include "dllids/fusion.hpp"

#include "json.hpp"

#include <fstream>

using namespace dllids;

namespace {

struct Fixture {
    Matrix X;
    std::vector<int> y;
    Pipeline p;
};

// Two blobs, a DL model trained on them and an LS model anchored on the same rows.
Fixture fixture(std::uint64_t seed) {
    Rng rng(seed);
    auto [X, y] = testing::blobs(rng, 60, 4, 0.1);
    MlpSpec spec;
    spec.input_width = 4;
    spec.hidden = {8, 8};
    TrainConfig tc;
    tc.epochs = 20;
    tc.batch_size = 16;
    Dataset d;
    for (std::size_t i = 0; i < y.size(); ++i)
        d.samples.push_back(testing::sample_of(X.row(static_cast<Eigen::Index>(i)).transpose(), y[i]));
    auto model = std::make_shared<MlpModel>(init_model(spec, seed));
    train(*model, d, tc);
    LsOptions o;
    o.sigma = 0.2;
    Fixture f{X, y, {}};
    f.p.model = model;
    f.p.ls = std::make_shared<LabelSpreadModel>(fit_ls(X, y, o));
    return f;
}

DetectorFn constant(bool flag) {
    return [flag](const Vector&, const ActivationTrace&) { return Detection{flag, flag ? 1.0 : -1.0}; };
}

}  // namespace

TEST_CASE("a detector that never fires reproduces the DL model") {
    auto f = fixture(1);
    f.p.detector_override = constant(false);
    FusionStats stats;
    auto v = classify_batch(f.p, f.X, &stats);
    REQUIRE(v.size() == static_cast<std::size_t>(f.X.rows()));
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        CHECK(v[i].source == VerdictSource::DL);
        CHECK(!v[i].is_adversarial);
        CHECK(v[i].is_malicious == (predict(*f.p.model, f.X.row(r).transpose()) == 1));
        CHECK(!v[i].ls_scores);
    }
    CHECK(stats.ls_invocations == 0);
}

TEST_CASE("a detector that always fires reproduces the LS model") {
    auto f = fixture(2);
    f.p.detector_override = constant(true);
    FusionStats stats;
    auto v = classify_batch(f.p, f.X, &stats);
    auto ls = predict_ls(*f.p.ls, f.X);
    for (std::size_t i = 0; i < v.size(); ++i) {
        CHECK(v[i].source == VerdictSource::ML);
        CHECK(v[i].is_adversarial);
        CHECK(v[i].is_malicious == (ls[i] == 1));
        CHECK(v[i].ls_scores);
    }
    CHECK(stats.ls_invocations == 1);
    CHECK(stats.ls_queries == v.size());
}

TEST_CASE("property: routing follows the detector flag") {
    for (std::uint64_t seed = 3; seed < 8; ++seed) {
        auto f = fixture(seed);
        Rng rng(seed);
        Matrix rows = testing::random_matrix(rng, 40, 4);
        std::vector<bool> flags;
        for (int i = 0; i < 40; ++i) flags.push_back(uniform_index(rng, 2) == 1);
        // the stub recognises rows by their first feature
        f.p.detector_override = [&](const Vector& x, const ActivationTrace&) {
            for (Eigen::Index i = 0; i < rows.rows(); ++i)
                if (rows(i, 0) == x[0]) return Detection{flags[static_cast<std::size_t>(i)], 0.0};
            FAIL("unknown row");
            return Detection{};
        };
        auto v = classify_batch(f.p, rows);
        REQUIRE(v.size() == 40);
        std::vector<std::size_t> flagged;
        for (std::size_t i = 0; i < 40; ++i) {
            CHECK(v[i].is_adversarial == flags[i]);
            CHECK((v[i].source == VerdictSource::ML) == flags[i]);
            if (flags[i]) flagged.push_back(i);
            else CHECK(v[i].is_malicious == (argmax_class(v[i].dl_probs) == 1));
        }
        if (flagged.empty()) continue;
        Matrix q(static_cast<Eigen::Index>(flagged.size()), 4);
        for (std::size_t j = 0; j < flagged.size(); ++j)
            q.row(static_cast<Eigen::Index>(j)) = rows.row(static_cast<Eigen::Index>(flagged[j]));
        auto ls = predict_ls(*f.p.ls, q);
        for (std::size_t j = 0; j < flagged.size(); ++j) CHECK(v[flagged[j]].is_malicious == (ls[j] == 1));
    }
}

TEST_CASE("flagged inputs without an LS model are reported malicious") {
    auto f = fixture(9);
    f.p.ls.reset();
    f.p.detector_override = constant(true);
    for (const auto& v : classify_batch(f.p, f.X)) {
        CHECK(v.is_malicious);
        CHECK(v.source == VerdictSource::ML);
    }
}

TEST_CASE("classify matches the batch path when nothing is flagged, and threads do not matter") {
    auto f = fixture(10);
    f.p.detector_override = constant(false);
    auto batch = classify_batch(f.p, f.X, nullptr, 1);
    auto threaded = classify_batch(f.p, f.X, nullptr, 3);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto one = classify(f.p, f.X.row(static_cast<Eigen::Index>(i)).transpose());
        CHECK(one.is_malicious == batch[i].is_malicious);
        CHECK((one.dl_probs - batch[i].dl_probs).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(threaded[i].dl_probs == batch[i].dl_probs);
    }
}

TEST_CASE("missing artefacts are reported by the command that makes them") {
    Pipeline empty;
    Matrix rows = Matrix::Zero(1, 4);
    try {
        classify_batch(empty, rows);
        FAIL("expected ArtifactMissing");
    } catch (const ArtifactMissing& e) {
        CHECK(e.producer() == "train-dl");
    }
    auto f = fixture(11);
    try {
        classify_batch(f.p, rows);
        FAIL("expected ArtifactMissing");
    } catch (const ArtifactMissing& e) {
        CHECK(e.producer() == "train-detector");
    }
}

TEST_CASE("verdicts serialise one object per line") {
    auto f = fixture(12);
    bool flip = false;
    f.p.detector_override = [&](const Vector&, const ActivationTrace&) { return Detection{flip = !flip, 0.5}; };
    auto v = classify_batch(f.p, f.X.topRows(6));
    auto dir = testing::scratch_dir("fusion");
    write_verdicts_jsonl(v, (dir / "v.jsonl").string());
    std::ifstream in(dir / "v.jsonl");
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        CHECK(j.at("index") == n);
        CHECK(j.at("isAdversarial") == v[n].is_adversarial);
        CHECK(j.at("isMalicious") == v[n].is_malicious);
        CHECK(j.at("source") == to_string(v[n].source));
        CHECK(j.contains("ls_scores") == v[n].is_adversarial);
        ++n;
    }
    CHECK(n == 6);
}
