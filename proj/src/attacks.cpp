#include "dllids/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace dllids {

namespace {

const char* const kBatchFormat = "dllids-adversarial";
const char* const kBatchVersion = "1";

Vector masked(const Vector& v, const Mask& mask) {
    Vector out = v;
    for (Eigen::Index i = 0; i < out.size(); ++i)
        if (!mask[static_cast<std::size_t>(i)]) out[i] = 0.0;
    return out;
}

void check_sample(const EncodedSample& s) {
    if (s.mask.size() != static_cast<std::size_t>(s.features.size()))
        throw std::invalid_argument("attack: mask width does not match the features");
}

AttackOutcome finish(const MlpModel& model, const EncodedSample& s, Vector adv, std::size_t iterations) {
    AttackOutcome out;
    out.success = predict(model, adv) != s.label;
    out.adversarial = std::move(adv);
    out.iterations = iterations;
    return out;
}

// Zeroes the coordinates sitting on a band edge whose step of sign(-f * g_i)
// would push further out: a linearised step cannot spend length there.
Vector free_directions(Vector g, double f, const Vector& x, const EncodedSample& s, const Budget& p) {
    const double dir = f > 0.0 ? -1.0 : 1.0;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
        const double lo = p ? std::max(0.0, s.features[i] - *p) : 0.0;
        const double hi = p ? std::min(1.0, s.features[i] + *p) : 1.0;
        const double move = dir * g[i];
        if ((move > 0.0 && x[i] >= hi) || (move < 0.0 && x[i] <= lo)) g[i] = 0.0;
    }
    return g;
}

// Difference logit z_1 - z_0 and its gradient.
std::pair<double, Vector> binary_score(const MlpModel& model, const Vector& x) {
    Vector up = Vector::Zero(static_cast<Eigen::Index>(model.spec.output_width));
    up[0] = -1.0;
    up[1] = 1.0;
    Vector z = logits(model, x);
    return {z[1] - z[0], backprop_to_input(model, x, up)};
}

}  // namespace

std::string to_string(AttackMethod m) {
    switch (m) {
        case AttackMethod::Fgsm: return "FGSM";
        case AttackMethod::Bim: return "BIM";
        case AttackMethod::DeepFool: return "DEEPFOOL";
        case AttackMethod::Cw: return "CW";
    }
    return "?";
}

AttackMethod parse_attack_method(const std::string& name) {
    std::string up;
    for (char c : name) up += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (up == "FGSM") return AttackMethod::Fgsm;
    if (up == "BIM") return AttackMethod::Bim;
    if (up == "DEEPFOOL") return AttackMethod::DeepFool;
    if (up == "CW") return AttackMethod::Cw;
    throw std::invalid_argument("unknown attack method '" + name + "'");
}

const std::vector<AttackMethod>& all_attack_methods() {
    static const std::vector<AttackMethod> all = {AttackMethod::Fgsm, AttackMethod::Bim, AttackMethod::DeepFool,
                                                  AttackMethod::Cw};
    return all;
}

std::string budget_label(const Budget& b) { return b ? format_double(*b) : "none"; }

Budget parse_budget(const std::string& text) {
    std::string t = trim(text);
    if (t == "none" || t == "None" || t == "null") return std::nullopt;
    return parse_double(t);
}

void AttackConfig::validate() const {
    if (budget && !(*budget > 0.0 && *budget <= 1.0))
        throw std::invalid_argument("AttackConfig: budget must lie in (0, 1] or be unbounded");
    if (bim_iterations == 0 || deepfool_max_iterations == 0 || cw_steps == 0)
        throw std::invalid_argument("AttackConfig: iteration counts must be positive");
    if (bim_step && !(*bim_step > 0.0)) throw std::invalid_argument("AttackConfig: BIM step must be positive");
    if (cw_c < 0.0 || !(cw_learning_rate > 0.0)) throw std::invalid_argument("AttackConfig: bad CW parameters");
}

Vector project(const Vector& x_orig, const Vector& x_cand, const Mask& mask, const Budget& p) {
    if (x_orig.size() != x_cand.size() || mask.size() != static_cast<std::size_t>(x_orig.size()))
        throw std::invalid_argument("project: length mismatch");
    Vector out = x_orig;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        double lo = 0.0, hi = 1.0;
        if (p) {
            lo = std::max(0.0, x_orig[i] - *p);
            hi = std::min(1.0, x_orig[i] + *p);
        }
        out[i] = std::clamp(x_cand[i], lo, hi);
    }
    return out;
}

Vector deepfool_step(double f, const Vector& grad) {
    const double norm2 = grad.squaredNorm();
    if (norm2 == 0.0) throw std::invalid_argument("deepfool_step: zero gradient");
    return (-f / norm2) * grad;
}

AttackOutcome fgsm(const MlpModel& model, const EncodedSample& s, const AttackConfig& config) {
    config.validate();
    check_sample(s);
    Vector g = input_gradient(model, s.features, s.label);
    Vector step = g.unaryExpr([](double v) { return sign(v); });
    return finish(model, s, project(s.features, s.features + config.epsilon() * step, s.mask, config.budget), 1);
}

AttackOutcome bim(const MlpModel& model, const EncodedSample& s, const AttackConfig& config) {
    config.validate();
    check_sample(s);
    const double alpha = config.bim_step_size();
    Vector x = s.features;
    for (std::size_t it = 0; it < config.bim_iterations; ++it) {
        Vector g = input_gradient(model, x, s.label);
        Vector step = g.unaryExpr([](double v) { return sign(v); });
        x = project(s.features, x + alpha * step, s.mask, config.budget);
    }
    return finish(model, s, std::move(x), config.bim_iterations);
}

AttackOutcome deepfool(const MlpModel& model, const EncodedSample& s, const AttackConfig& config) {
    config.validate();
    check_sample(s);
    if (model.spec.output_width != 2) throw std::invalid_argument("deepfool: binary classifier required");
    const int start_class = predict(model, s.features);
    Vector x = s.features;
    if (start_class != s.label) return {x, true, 0};
    for (std::size_t it = 0; it < config.deepfool_max_iterations; ++it) {
        auto [f, grad] = binary_score(model, x);
        if (argmax_class(logits(model, x)) != start_class) return {x, true, it};
        Vector g = free_directions(masked(grad, s.mask), f, x, s, config.budget);
        if (g.squaredNorm() == 0.0) return {x, false, it};
        Vector r = deepfool_step(f, g);
        Vector next = project(s.features, x + (1.0 + config.deepfool_overshoot) * r, s.mask, config.budget);
        if (next == x) return {x, false, it + 1};  // pinned against the band
        x = std::move(next);
    }
    return finish(model, s, std::move(x), config.deepfool_max_iterations);
}

AttackOutcome cw(const MlpModel& model, const EncodedSample& s, const AttackConfig& config) {
    config.validate();
    check_sample(s);
    const Eigen::Index n = s.features.size();
    const int y = s.label;
    const auto classes = static_cast<Eigen::Index>(model.spec.output_width);

    // Change of variables on the masked coordinates: x' = x + (1/2)(tanh(w)+1) - s0,
    // where s0 is the tanh image of the starting point, so w0 maps exactly onto x.
    constexpr double kEdge = 1e-6;
    Vector w = Vector::Zero(n), s0 = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!s.mask[static_cast<std::size_t>(i)]) continue;
        w[i] = std::atanh(std::clamp(2.0 * s.features[i] - 1.0, -1.0 + kEdge, 1.0 - kEdge));
        s0[i] = 0.5 * (std::tanh(w[i]) + 1.0);
    }
    auto image = [&](const Vector& wv) {
        Vector x = s.features;
        for (Eigen::Index i = 0; i < n; ++i)
            if (s.mask[static_cast<std::size_t>(i)]) x[i] += 0.5 * (std::tanh(wv[i]) + 1.0) - s0[i];
        return x;
    };

    std::optional<Vector> best;
    double best_dist = std::numeric_limits<double>::infinity();
    auto consider = [&](const Vector& xprime) {
        Vector feasible = project(s.features, xprime, s.mask, config.budget);
        if (predict(model, feasible) == y) return;
        double d = (feasible - s.features).squaredNorm();
        if (d < best_dist) {
            best_dist = d;
            best = std::move(feasible);
        }
    };

    auto margin_gradient = [&](const Vector& xprime) {
        Vector z = logits(model, xprime);
        Eigen::Index other = y == 0 ? 1 : 0;
        for (Eigen::Index c = 0; c < classes; ++c)
            if (c != y && z[c] > z[other]) other = c;
        Vector grad_x = 2.0 * (xprime - s.features);
        if (config.cw_c > 0.0 && z[y] - z[other] > -config.cw_kappa) {
            Vector up = Vector::Zero(classes);
            up[y] = 1.0;
            up[other] = -1.0;
            grad_x += config.cw_c * backprop_to_input(model, xprime, up);
        }
        return grad_x;
    };

    Vector m = Vector::Zero(n), v = Vector::Zero(n);
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    auto adam = [&](Vector& param, const Vector& grad, std::size_t step) {
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        param.array() -= config.cw_learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };

    if (config.cw_project_each_step) {
        // Same objective, optimized directly on x and projected into the band after
        // every step. The tanh box is redundant here and its saturation would pin
        // features that sit exactly on 0 or 1.
        Vector x = s.features;
        for (std::size_t step = 1; step <= config.cw_steps; ++step) {
            consider(x);
            adam(x, masked(margin_gradient(x), s.mask), step);
            x = project(s.features, x, s.mask, config.budget);
        }
        consider(x);
        if (best) return {*best, true, config.cw_steps};
        return finish(model, s, std::move(x), config.cw_steps);
    }

    for (std::size_t step = 1; step <= config.cw_steps; ++step) {
        Vector xprime = image(w);
        consider(xprime);
        Vector grad_x = margin_gradient(xprime);
        Vector grad_w = Vector::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!s.mask[static_cast<std::size_t>(i)]) continue;
            const double t = std::tanh(w[i]);
            grad_w[i] = grad_x[i] * 0.5 * (1.0 - t * t);
        }
        adam(w, grad_w, step);
    }
    Vector last = image(w);
    consider(last);
    if (best) return {*best, true, config.cw_steps};
    return finish(model, s, project(s.features, last, s.mask, config.budget), config.cw_steps);
}

AttackOutcome run_attack(const MlpModel& model, const EncodedSample& sample, const AttackConfig& config) {
    switch (config.method) {
        case AttackMethod::Fgsm: return fgsm(model, sample, config);
        case AttackMethod::Bim: return bim(model, sample, config);
        case AttackMethod::DeepFool: return deepfool(model, sample, config);
        case AttackMethod::Cw: return cw(model, sample, config);
    }
    throw std::invalid_argument("run_attack: unknown method");
}

double AdversarialBatch::success_rate() const {
    if (examples.empty()) return 0.0;
    std::size_t ok = 0;
    for (const auto& e : examples) ok += e.success;
    return static_cast<double>(ok) / static_cast<double>(examples.size());
}

double AdversarialBatch::victim_accuracy() const { return 1.0 - success_rate(); }

double AdversarialBatch::victim_accuracy_overall() const {
    if (source_size == 0) return 0.0;
    std::size_t still_correct = 0;
    for (const auto& e : examples) still_correct += !e.success;
    return static_cast<double>(still_correct) / static_cast<double>(source_size);
}

Matrix AdversarialBatch::adversarial_matrix() const {
    if (examples.empty()) return Matrix(0, static_cast<Eigen::Index>(kEncodedWidth));
    Matrix m(static_cast<Eigen::Index>(examples.size()), examples.front().adversarial.size());
    for (std::size_t i = 0; i < examples.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = examples[i].adversarial.transpose();
    return m;
}

Matrix AdversarialBatch::original_matrix() const {
    if (examples.empty()) return Matrix(0, static_cast<Eigen::Index>(kEncodedWidth));
    Matrix m(static_cast<Eigen::Index>(examples.size()), examples.front().original.features.size());
    for (std::size_t i = 0; i < examples.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = examples[i].original.features.transpose();
    return m;
}

std::vector<int> AdversarialBatch::labels() const {
    std::vector<int> out;
    for (const auto& e : examples) out.push_back(e.original.label);
    return out;
}

AdversarialBatch generate_batch(const MlpModel& model, const Dataset& data, const AttackConfig& config,
                                unsigned threads) {
    config.validate();
    AdversarialBatch batch;
    batch.method = config.method;
    batch.budget = config.budget;
    batch.source_size = data.size();
    if (data.empty()) throw DataError("generate_batch: empty dataset");
    auto pred = predict_batch(model, data.feature_matrix());
    std::vector<std::size_t> correct;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (pred[i] == data.samples[i].label) correct.push_back(i);
    batch.clean_correct = correct.size();
    if (correct.empty()) throw DataError("generate_batch: the victim classifies no sample correctly");

    batch.examples.resize(correct.size());
    parallel_for(correct.size(), threads, [&](std::size_t k) {
        const auto& s = data.samples[correct[k]];
        auto outcome = run_attack(model, s, config);
        batch.examples[k] = {correct[k], s, std::move(outcome.adversarial), outcome.success};
    });
    return batch;
}

void save_batch_csv(const AdversarialBatch& batch, const std::string& path, const Meta& meta) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    Meta m = meta;
    m["format"] = kBatchFormat;
    m["version"] = kBatchVersion;
    m["method"] = to_string(batch.method);
    m["budget"] = budget_label(batch.budget);
    m["source_size"] = std::to_string(batch.source_size);
    m["clean_correct"] = std::to_string(batch.clean_correct);
    m["rows"] = std::to_string(batch.size());
    out << meta_line(m) << '\n';
    out << "id,method,budget,success";
    for (std::size_t i = 0; i < kEncodedWidth; ++i) out << ",a" << i;
    out << '\n';
    for (const auto& e : batch.examples) {
        out << e.original_id << ',' << to_string(batch.method) << ',' << budget_label(batch.budget) << ','
            << (e.success ? 1 : 0);
        for (Eigen::Index i = 0; i < e.adversarial.size(); ++i) out << ',' << format_double(e.adversarial[i]);
        out << '\n';
    }
}

AdversarialBatch load_batch_csv(const std::string& path, const Dataset& source) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": empty file");
    Meta meta = parse_meta_line(line);
    require_format(meta, kBatchFormat, kBatchVersion, path);
    AdversarialBatch batch;
    batch.method = parse_attack_method(meta["method"]);
    batch.budget = parse_budget(meta["budget"]);
    batch.source_size = static_cast<std::size_t>(parse_double(meta["source_size"]));
    batch.clean_correct = static_cast<std::size_t>(parse_double(meta["clean_correct"]));
    std::getline(in, line);
    std::size_t line_no = 2;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = split_line(line, ',');
        if (f.size() != kEncodedWidth + 4) throw FormatError(path + ": line " + std::to_string(line_no) + " malformed");
        AdversarialExample e;
        e.original_id = static_cast<std::size_t>(parse_double(f[0]));
        if (e.original_id >= source.size()) throw FormatError(path + ": sample id out of range for the source dataset");
        e.original = source.samples[e.original_id];
        e.success = f[3] == "1";
        e.adversarial.resize(kEncodedWidth);
        for (std::size_t i = 0; i < kEncodedWidth; ++i) e.adversarial[static_cast<Eigen::Index>(i)] = parse_double(f[4 + i]);
        batch.examples.push_back(std::move(e));
    }
    if (meta.count("rows") && std::to_string(batch.size()) != meta["rows"]) throw FormatError(path + ": truncated batch");
    return batch;
}

}  // namespace dllids
