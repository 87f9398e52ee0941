#include "doctest.h"
#include "support.hpp"

#include "dllids/attacks.hpp"

using namespace dllids;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

void check_feasible(const Vector& x, const Vector& adv, const Mask& mask, const Budget& p) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        CHECK(adv[i] >= 0.0);
        CHECK(adv[i] <= 1.0);
        if (!mask[static_cast<std::size_t>(i)]) CHECK(adv[i] == x[i]);
        else if (p) CHECK(std::abs(adv[i] - x[i]) <= *p + 1e-12);
    }
}

// A random 128-wide victim and a dataset it partly gets right.
Dataset random_dataset(Rng& rng, const MlpModel& m, std::size_t n) {
    Dataset d;
    for (std::size_t i = 0; i < n; ++i) {
        Vector x = testing::random_vector(rng, 128);
        const int y = i % 4 == 0 ? 1 - predict(m, x) : predict(m, x);
        d.samples.push_back(testing::sample_of(x, y, testing::random_mask(rng, 128)));
    }
    return d;
}

}  // namespace

TEST_CASE("project") {
    Mask all(1, true), none(1, false);
    CHECK(project(vec({0.95}), vec({1.2}), all, 0.2)[0] == 1.0);
    CHECK(project(vec({0.5}), vec({0.9}), all, 0.2)[0] == doctest::Approx(0.7));
    CHECK(project(vec({0.5}), vec({0.1}), all, 0.2)[0] == doctest::Approx(0.3));
    CHECK(project(vec({0.5}), vec({0.55}), all, 0.2)[0] == 0.55);
    CHECK(project(vec({0.5}), vec({0.9}), none, 0.2)[0] == 0.5);
    CHECK(project(vec({0.5}), vec({1.7}), all, std::nullopt)[0] == 1.0);
    CHECK(project(vec({0.5}), vec({0.95}), all, std::nullopt)[0] == 0.95);
}

TEST_CASE("budget labels") {
    CHECK(budget_label(0.1) == "0.1");
    CHECK(budget_label(std::nullopt) == "none");
    CHECK(parse_budget("none") == std::nullopt);
    CHECK(parse_budget("0.05") == Budget(0.05));
    CHECK(parse_attack_method("deepfool") == AttackMethod::DeepFool);
    CHECK_THROWS(parse_attack_method("jsma"));
}

TEST_CASE("FGSM follows the gradient sign") {
    // loss gradient for y = 0 is p1 * (w1 - w0) = p1 * (0.3, -0.2)
    Matrix W(2, 2);
    W << 0.0, 0.0, 0.3, -0.2;
    auto m = testing::linear_model(W, Vector::Zero(2));
    AttackConfig c;
    c.method = AttackMethod::Fgsm;
    c.budget = 0.1;
    auto out = fgsm(m, testing::sample_of(vec({0.5, 0.5}), 0), c);
    CHECK(out.adversarial[0] == doctest::Approx(0.6));
    CHECK(out.adversarial[1] == doctest::Approx(0.4));
}

TEST_CASE("FGSM with a zero gradient leaves x in place") {
    auto m = testing::linear_model(Matrix::Zero(2, 3), Vector::Zero(2));
    AttackConfig c;
    auto x = vec({0.2, 0.4, 0.6});
    CHECK(fgsm(m, testing::sample_of(x, 0), c).adversarial == x);
}

TEST_CASE("property: BIM with one step of size p equals FGSM") {
    Rng rng(14);
    for (int trial = 0; trial < 50; ++trial) {
        auto spec = testing::random_spec(rng, 10);
        auto m = init_model(spec, rng());
        auto s = testing::sample_of(testing::random_vector(rng, 10), static_cast<int>(uniform_index(rng, 2)),
                                    testing::random_mask(rng, 10));
        AttackConfig c;
        c.budget = testing::uniform(rng, 0.01, 0.3);
        c.bim_iterations = 1;
        c.bim_step = *c.budget;
        CHECK(bim(m, s, c).adversarial == fgsm(m, s, c).adversarial);
    }
}

TEST_CASE("DeepFool step on an exactly linear score") {
    // f(x) = 3 x1 + 4 x2 at x0 = (1, 1): f = 7, r* = -7/25 (3, 4)
    auto r = deepfool_step(7.0, vec({3.0, 4.0}));
    CHECK(r[0] == doctest::Approx(-0.84));
    CHECK(r[1] == doctest::Approx(-1.12));
    Vector landed = vec({1.0, 1.0}) + r;
    CHECK(3.0 * landed[0] + 4.0 * landed[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK_THROWS_AS(deepfool_step(1.0, Vector::Zero(2)), std::invalid_argument);
}

TEST_CASE("DeepFool crosses a linear boundary and stops at once when already wrong") {
    // z1 - z0 = 3 x1 + 4 x2 - 3.5
    Matrix W(2, 2);
    W << 0.0, 0.0, 3.0, 4.0;
    Vector b(2);
    b << 0.0, -3.5;
    auto m = testing::linear_model(W, b);
    AttackConfig c;
    c.method = AttackMethod::DeepFool;
    c.budget = std::nullopt;
    auto s = testing::sample_of(vec({0.5, 0.5}), 1);  // f = 0, predicted 1 (tie)
    s.features = vec({0.6, 0.6});                      // f = 0.7
    auto out = deepfool(m, s, c);
    CHECK(out.success);
    CHECK(predict(m, out.adversarial) == 0);
    // one linear step with 2% overshoot lands just past f = 0
    const double f = 3 * out.adversarial[0] + 4 * out.adversarial[1] - 3.5;
    CHECK(f == doctest::Approx(-0.02 * 0.7).epsilon(1e-9));

    auto wrong = testing::sample_of(vec({0.6, 0.6}), 0);
    auto stay = deepfool(m, wrong, c);
    CHECK(stay.iterations == 0);
    CHECK(stay.adversarial == wrong.features);
}

TEST_CASE("CW with c = 0 has no reason to move") {
    Rng rng(5);
    auto m = init_model(testing::random_spec(rng, 12), 3);
    auto s = testing::sample_of(testing::random_vector(rng, 12), predict(m, testing::random_vector(rng, 12)));
    s.label = predict(m, s.features);
    AttackConfig c;
    c.method = AttackMethod::Cw;
    c.cw_c = 0.0;
    c.cw_steps = 30;
    for (bool each_step : {false, true}) {
        c.cw_project_each_step = each_step;
        auto out = cw(m, s, c);
        CHECK(!out.success);
        CHECK((out.adversarial - s.features).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("property: every attack respects the mask, the band and the box") {
    Rng rng(99);
    for (int trial = 0; trial < 40; ++trial) {
        auto m = init_model(testing::random_spec(rng, 16), rng());
        Vector x = testing::random_vector(rng, 16);
        auto s = testing::sample_of(x, predict(m, x), testing::random_mask(rng, 16));
        const Budget p = trial % 5 == 0 ? Budget() : Budget(testing::uniform(rng, 0.01, 0.4));
        for (auto method : all_attack_methods()) {
            AttackConfig c;
            c.method = method;
            c.budget = p;
            c.cw_steps = 40;
            c.cw_project_each_step = trial % 2 == 0;
            check_feasible(x, run_attack(m, s, c).adversarial, s.mask, p);
        }
    }
}

TEST_CASE("generate_batch filters to correct samples and keeps its bookkeeping") {
    Rng rng(7);
    auto m = init_model(MlpSpec{}, 4);
    auto data = random_dataset(rng, m, 40);
    AttackConfig c;
    c.method = AttackMethod::Bim;
    c.budget = 0.2;
    auto batch = generate_batch(m, data, c, 2);
    CHECK(batch.source_size == 40);
    CHECK(batch.clean_correct == 30);
    CHECK(batch.size() == 30);
    std::size_t flipped = 0;
    for (const auto& e : batch.examples) {
        CHECK(predict(m, e.original.features) == e.original.label);
        CHECK(e.success == (predict(m, e.adversarial) != e.original.label));
        check_feasible(e.original.features, e.adversarial, e.original.mask, c.budget);
        flipped += e.success;
    }
    CHECK(batch.success_rate() == doctest::Approx(static_cast<double>(flipped) / 30.0));
    CHECK(batch.victim_accuracy() == doctest::Approx(1.0 - batch.success_rate()));
    CHECK(batch.victim_accuracy_overall() == doctest::Approx(static_cast<double>(30 - flipped) / 40.0));

    auto single = generate_batch(m, data, c, 1);
    CHECK(single.adversarial_matrix() == batch.adversarial_matrix());

    auto dir = testing::scratch_dir("attacks");
    save_batch_csv(batch, (dir / "bim.csv").string());
    auto back = load_batch_csv((dir / "bim.csv").string(), data);
    CHECK(back.method == batch.method);
    CHECK(back.budget == batch.budget);
    CHECK(back.adversarial_matrix() == batch.adversarial_matrix());
    CHECK(back.labels() == batch.labels());
    CHECK(back.success_rate() == batch.success_rate());
}

TEST_CASE("generate_batch on a victim that gets nothing right is an error") {
    Matrix W = Matrix::Zero(2, 128);
    Vector b(2);
    b << 0.0, 1.0;
    auto m = testing::linear_model(W, b);
    Dataset d;
    Rng rng(1);
    for (int i = 0; i < 5; ++i) d.samples.push_back(testing::sample_of(testing::random_vector(rng, 128), 0));
    AttackConfig c;
    CHECK_THROWS_AS(generate_batch(m, d, c), DataError);
}
