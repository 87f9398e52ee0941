#include "dllids/aedetect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dllids {

namespace {

const char* const kDetectorFormat = "dllids-detector";
const int kDetectorVersion = 1;

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_std(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

Standardizer Standardizer::fit(const Matrix& rows) {
    if (rows.rows() == 0) throw std::invalid_argument("Standardizer: no rows");
    Standardizer s;
    s.mean = rows.colwise().mean().transpose();
    s.scale = Vector::Ones(rows.cols());
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
        const double var = (rows.col(c).array() - s.mean[c]).square().mean();
        if (var > 0.0) s.scale[c] = std::sqrt(var);
    }
    return s;
}

Vector Standardizer::apply(const Vector& x) const { return (x - mean).cwiseQuotient(scale); }

Matrix Standardizer::apply(const Matrix& rows) const {
    Matrix out = rows.rowwise() - mean.transpose();
    return out.array().rowwise() / scale.transpose().array();
}

AeDetector train_ae_detector(const LidTrainingSet& set, const DetectorTrainOptions& options) {
    if (set.size() == 0 || static_cast<std::size_t>(set.features.rows()) != set.size())
        throw DataError("train_ae_detector: empty or misaligned LID training set");
    if (!(options.holdout_fraction >= 0.0 && options.holdout_fraction < 1.0))
        throw std::invalid_argument("train_ae_detector: holdout fraction must lie in [0, 1)");
    if (!set.features.allFinite()) throw DataError("train_ae_detector: non-finite LID values");

    Rng rng(options.seed);
    auto order = permutation(set.size(), rng);
    const auto held = static_cast<std::size_t>(std::floor(options.holdout_fraction * static_cast<double>(set.size())));
    const std::size_t fit_n = set.size() - held;
    auto gather = [&](std::size_t from, std::size_t to, Matrix& X, std::vector<int>& y) {
        X.resize(static_cast<Eigen::Index>(to - from), set.features.cols());
        y.clear();
        for (std::size_t i = from; i < to; ++i) {
            X.row(static_cast<Eigen::Index>(i - from)) = set.features.row(static_cast<Eigen::Index>(order[i]));
            y.push_back(set.labels[order[i]]);
        }
    };
    Matrix Xfit, Xheld;
    std::vector<int> yfit, yheld;
    gather(0, fit_n, Xfit, yfit);
    gather(fit_n, set.size(), Xheld, yheld);

    AeDetector d;
    d.scaler = Standardizer::fit(Xfit);
    d.inner = train_classic(options.kind, d.scaler.apply(Xfit), yfit, options.params, options.seed);
    d.threshold = options.threshold;
    d.layer_count = static_cast<std::size_t>(set.features.cols());
    auto get = [&](const char* key) { return set.meta.count(key) ? set.meta.at(key) : std::string(); };
    if (!get("k").empty()) d.lid.k = static_cast<std::size_t>(parse_double(get("k")));
    if (!get("batch").empty()) d.lid.batch_size = static_cast<std::size_t>(parse_double(get("batch")));
    for (auto& a : split_line(get("attacks"), '+'))
        if (!a.empty()) d.attacks.push_back(a);
    for (auto& b : split_line(get("budgets"), '+'))
        if (!b.empty()) d.budgets.push_back(b);

    d.heldout_size = held;
    if (held > 0) {
        auto det = detect_batch(d, Xheld);
        std::size_t ok = 0;
        for (std::size_t i = 0; i < held; ++i) ok += (det[i].adversarial ? 1 : 0) == yheld[i];
        d.heldout_accuracy = static_cast<double>(ok) / static_cast<double>(held);
    }
    return d;
}

Detection detect(const AeDetector& d, const Vector& lid) {
    if (static_cast<std::size_t>(lid.size()) != d.layer_count)
        throw std::invalid_argument("detect: LID vector length does not match the detector");
    auto p = predict_classic(d.inner, d.scaler.apply(lid));
    const double score = p.score - d.inner.threshold();
    return {score >= d.threshold, score};
}

std::vector<Detection> detect_batch(const AeDetector& d, const Matrix& lids) {
    if (static_cast<std::size_t>(lids.cols()) != d.layer_count)
        throw std::invalid_argument("detect_batch: LID width does not match the detector");
    std::vector<Detection> out;
    for (const auto& p : predict_classic_batch(d.inner, d.scaler.apply(lids))) {
        const double score = p.score - d.inner.threshold();
        out.push_back({score >= d.threshold, score});
    }
    return out;
}

void save_detector(const AeDetector& d, const std::string& path, const Meta& meta) {
    std::ostringstream inner;
    write_classic(d.inner, inner);
    nlohmann::json j;
    j["format"] = kDetectorFormat;
    j["version"] = kDetectorVersion;
    j["meta"] = meta;
    j["threshold"] = format_double(d.threshold);
    j["scaler_mean"] = to_std(d.scaler.mean);
    j["scaler_scale"] = to_std(d.scaler.scale);
    j["lid"] = {{"k", d.lid.k},
                {"batch_size", d.lid.batch_size},
                {"seed", d.lid.seed},
                {"exclude_origin", d.lid.exclude_origin}};
    j["layer_count"] = d.layer_count;
    j["attacks"] = d.attacks;
    j["budgets"] = d.budgets;
    j["heldout_accuracy"] = format_double(d.heldout_accuracy);
    j["heldout_size"] = d.heldout_size;
    j["inner"] = inner.str();
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(1) << '\n';
}

AeDetector load_detector(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    try {
        nlohmann::json j = nlohmann::json::parse(in);
        if (j.at("format") != kDetectorFormat || j.at("version") != kDetectorVersion)
            throw FormatError(path + ": not a version-" + std::to_string(kDetectorVersion) + " detector file");
        AeDetector d;
        d.threshold = parse_double(j.at("threshold").get<std::string>());
        d.scaler.mean = from_std(j.at("scaler_mean").get<std::vector<double>>());
        d.scaler.scale = from_std(j.at("scaler_scale").get<std::vector<double>>());
        const auto& lid = j.at("lid");
        d.lid.k = lid.at("k").get<std::size_t>();
        d.lid.batch_size = lid.at("batch_size").get<std::size_t>();
        d.lid.seed = lid.at("seed").get<std::uint64_t>();
        d.lid.exclude_origin = lid.at("exclude_origin").get<bool>();
        d.layer_count = j.at("layer_count").get<std::size_t>();
        d.attacks = j.at("attacks").get<std::vector<std::string>>();
        d.budgets = j.at("budgets").get<std::vector<std::string>>();
        d.heldout_accuracy = parse_double(j.at("heldout_accuracy").get<std::string>());
        d.heldout_size = j.at("heldout_size").get<std::size_t>();
        std::istringstream inner(j.at("inner").get<std::string>());
        d.inner = read_classic(inner, path);
        if (static_cast<std::size_t>(d.scaler.mean.size()) != d.layer_count ||
            static_cast<std::size_t>(d.scaler.scale.size()) != d.layer_count)
            throw FormatError(path + ": scaler width does not match the layer count");
        return d;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
}

void DbBaseline::validate() const {
    if (probes == 0) throw std::invalid_argument("DbBaseline: probe count must be positive");
    if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("DbBaseline: tau must lie in [0, 1]");
    if (!(sigma >= 0.0)) throw std::invalid_argument("DbBaseline: sigma must be non-negative");
}

bool db_detect(const MlpModel& model, const Vector& x, const Mask& mask, const DbBaseline& b, std::uint64_t seed) {
    b.validate();
    if (mask.size() != static_cast<std::size_t>(x.size())) throw std::invalid_argument("db_detect: mask width mismatch");
    const int base = predict(model, x);
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, b.sigma);
    std::size_t flips = 0;
    for (std::size_t p = 0; p < b.probes; ++p) {
        Vector probe = x;
        for (Eigen::Index i = 0; i < probe.size(); ++i)
            if (mask[static_cast<std::size_t>(i)]) probe[i] = std::clamp(probe[i] + noise(rng), 0.0, 1.0);
        flips += predict(model, probe) != base;
    }
    return static_cast<double>(flips) >= b.tau * static_cast<double>(b.probes);
}

}  // namespace dllids
