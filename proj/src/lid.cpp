#include "dllids/lid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace dllids {

namespace {

const char* const kLidFormat = "dllids-lid";
const char* const kLidVersion = "1";

// k smallest of `d` (unsorted input), ascending.
std::vector<double> smallest(std::vector<double> d, std::size_t k) {
    if (d.size() < k) throw std::invalid_argument("LID: fewer candidate neighbours than k");
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
    d.resize(k);
    std::sort(d.begin(), d.end());
    return d;
}

std::vector<double> distances_to(const Vector& q, const Matrix& ref) {
    std::vector<double> d(static_cast<std::size_t>(ref.rows()));
    for (Eigen::Index r = 0; r < ref.rows(); ++r) d[static_cast<std::size_t>(r)] = (ref.row(r).transpose() - q).norm();
    return d;
}

}  // namespace

void LidConfig::validate() const {
    if (k < 2) throw std::invalid_argument("LidConfig: k must be at least 2");
    if (batch_size <= k) throw std::invalid_argument("LidConfig: batch size must exceed k");
}

double lid_mle(std::vector<double> distances) {
    if (distances.size() < 2) throw std::invalid_argument("lid_mle: need at least two distances");
    for (double& d : distances) {
        if (!std::isfinite(d) || d < 0.0) throw std::invalid_argument("lid_mle: distances must be finite and non-negative");
        d = std::max(d, kLidDistanceFloor);
    }
    std::sort(distances.begin(), distances.end());
    const double r_max = distances.back();
    double sum = 0.0;
    for (double d : distances) sum += std::log(d / r_max);
    if (sum == 0.0) return kLidCap;
    return std::min(kLidCap, -static_cast<double>(distances.size()) / sum);
}

ReferenceBank build_reference_bank(const MlpModel& model, const Matrix& clean_rows, const std::string& tag) {
    if (clean_rows.rows() == 0) throw DataError("build_reference_bank: no clean samples");
    ReferenceBank bank;
    bank.layers = forward_batch(model, clean_rows).hidden;
    bank.tag = tag;
    return bank;
}

ReferenceSample draw_reference(const ReferenceBank& bank, std::size_t batch_size, std::uint64_t seed) {
    if (batch_size == 0 || batch_size > bank.rows())
        throw std::invalid_argument("draw_reference: batch size must lie in [1, bank rows]");
    Rng rng(seed);
    auto perm = permutation(bank.rows(), rng);
    ReferenceSample out;
    out.rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(batch_size));
    for (const Matrix& layer : bank.layers) {
        Matrix m(static_cast<Eigen::Index>(batch_size), layer.cols());
        for (std::size_t i = 0; i < batch_size; ++i) m.row(static_cast<Eigen::Index>(i)) = layer.row(static_cast<Eigen::Index>(out.rows[i]));
        out.layers.push_back(std::move(m));
    }
    return out;
}

double lid_against(const Vector& query, const Matrix& reference, std::size_t k) {
    auto d = distances_to(query, reference);
    // the query itself, up to rounding between single-row and batched forward passes
    auto self = std::min_element(d.begin(), d.end());
    if (self != d.end() && *self <= 1e-9 * (1.0 + query.norm())) d.erase(self);
    return lid_mle(smallest(std::move(d), k));
}

Vector lid_vector(const ActivationTrace& trace, const ReferenceSample& reference, std::size_t k) {
    if (trace.hidden.size() != reference.layers.size())
        throw std::invalid_argument("lid_vector: layer count differs from the reference");
    Vector out(static_cast<Eigen::Index>(trace.hidden.size()));
    for (std::size_t l = 0; l < trace.hidden.size(); ++l)
        out[static_cast<Eigen::Index>(l)] = lid_against(trace.hidden[l], reference.layers[l], k);
    return out;
}

Vector lid_vector(const ActivationTrace& trace, const ReferenceBank& bank, std::size_t k, std::size_t ref_batch_size,
                  std::uint64_t seed) {
    if (k >= ref_batch_size) throw std::invalid_argument("lid_vector: k must be below the reference batch size");
    return lid_vector(trace, draw_reference(bank, ref_batch_size, seed), k);
}

Matrix lid_matrix(const MlpModel& model, const Matrix& rows, const ReferenceSample& reference, std::size_t k,
                  unsigned threads) {
    const auto layers = reference.layers.size();
    BatchForward fw = forward_batch(model, rows);
    if (fw.hidden.size() != layers) throw std::invalid_argument("lid_matrix: layer count differs from the reference");
    Matrix out(rows.rows(), static_cast<Eigen::Index>(layers));
    parallel_for(static_cast<std::size_t>(rows.rows()), threads, [&](std::size_t i) {
        const auto r = static_cast<Eigen::Index>(i);
        for (std::size_t l = 0; l < layers; ++l)
            out(r, static_cast<Eigen::Index>(l)) = lid_against(fw.hidden[l].row(r).transpose(), reference.layers[l], k);
    });
    return out;
}

LidTrainingSet build_training_set(const MlpModel& model, const std::vector<Matrix>& clean_batches,
                                  const std::vector<Matrix>& adversarial_batches, const LidConfig& config,
                                  unsigned threads, const std::vector<std::vector<bool>>& keep_adversarial) {
    if (config.k < 2) throw std::invalid_argument("build_training_set: k must be at least 2");
    if (clean_batches.size() != adversarial_batches.size())
        throw std::invalid_argument("build_training_set: clean and adversarial batch counts differ");
    if (!keep_adversarial.empty() && keep_adversarial.size() != clean_batches.size())
        throw std::invalid_argument("build_training_set: keep mask does not cover every batch");
    std::size_t total = 0;
    for (std::size_t b = 0; b < clean_batches.size(); ++b) {
        if (clean_batches[b].rows() != adversarial_batches[b].rows())
            throw std::invalid_argument("build_training_set: misaligned minibatch");
        if (static_cast<std::size_t>(clean_batches[b].rows()) < config.k + 1 + (config.exclude_origin ? 1 : 0))
            throw std::invalid_argument("build_training_set: minibatch smaller than k + 1");
        if (!keep_adversarial.empty() && keep_adversarial[b].size() != static_cast<std::size_t>(clean_batches[b].rows()))
            throw std::invalid_argument("build_training_set: keep mask misaligned with its minibatch");
        total += static_cast<std::size_t>(clean_batches[b].rows());
    }
    const std::size_t layers = model.hidden_count();
    LidTrainingSet set;
    set.features.resize(static_cast<Eigen::Index>(2 * total), static_cast<Eigen::Index>(layers));
    set.labels.resize(2 * total);

    std::size_t offset = 0;
    for (std::size_t b = 0; b < clean_batches.size(); ++b) {
        BatchForward clean = forward_batch(model, clean_batches[b]);
        BatchForward adv = forward_batch(model, adversarial_batches[b]);
        const auto m = static_cast<std::size_t>(clean_batches[b].rows());
        parallel_for(m, threads, [&](std::size_t j) {
            const auto row_clean = static_cast<Eigen::Index>(offset + 2 * j);
            const auto row_adv = row_clean + 1;
            for (std::size_t l = 0; l < layers; ++l) {
                const Matrix& ref = clean.hidden[l];
                std::vector<double> dc = distances_to(ref.row(static_cast<Eigen::Index>(j)).transpose(), ref);
                std::vector<double> da = distances_to(adv.hidden[l].row(static_cast<Eigen::Index>(j)).transpose(), ref);
                dc.erase(dc.begin() + static_cast<std::ptrdiff_t>(j));
                if (config.exclude_origin) da.erase(da.begin() + static_cast<std::ptrdiff_t>(j));
                set.features(row_clean, static_cast<Eigen::Index>(l)) = lid_mle(smallest(std::move(dc), config.k));
                set.features(row_adv, static_cast<Eigen::Index>(l)) = lid_mle(smallest(std::move(da), config.k));
            }
            set.labels[offset + 2 * j] = 0;
            set.labels[offset + 2 * j + 1] = 1;
        });
        offset += 2 * m;
    }
    if (!keep_adversarial.empty()) {
        // Drop the adversarial rows that were not kept, preserving order.
        std::size_t w = 0, r = 0;
        for (const auto& keep : keep_adversarial)
            for (bool k : keep) {
                for (std::size_t part = 0; part < 2; ++part, ++r) {
                    if (part == 1 && !k) continue;
                    set.features.row(static_cast<Eigen::Index>(w)) = set.features.row(static_cast<Eigen::Index>(r));
                    set.labels[w++] = set.labels[r];
                }
            }
        set.features.conservativeResize(static_cast<Eigen::Index>(w), Eigen::NoChange);
        set.labels.resize(w);
    }
    set.meta["k"] = std::to_string(config.k);
    set.meta["batch"] = std::to_string(config.batch_size);
    set.meta["exclude_origin"] = config.exclude_origin ? "1" : "0";
    return set;
}

void save_lid_csv(const LidTrainingSet& set, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    Meta m = set.meta;
    m["format"] = kLidFormat;
    m["version"] = kLidVersion;
    m["rows"] = std::to_string(set.size());
    out << meta_line(m) << '\n';
    for (Eigen::Index l = 0; l < set.features.cols(); ++l) out << "lid" << (l + 1) << ',';
    out << "label\n";
    for (std::size_t i = 0; i < set.size(); ++i) {
        for (Eigen::Index l = 0; l < set.features.cols(); ++l)
            out << format_double(set.features(static_cast<Eigen::Index>(i), l)) << ',';
        out << set.labels[i] << '\n';
    }
}

LidTrainingSet load_lid_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": empty file");
    LidTrainingSet set;
    set.meta = parse_meta_line(line);
    require_format(set.meta, kLidFormat, kLidVersion, path);
    set.meta.erase("format");
    set.meta.erase("version");
    set.meta.erase("rows");
    if (!std::getline(in, line)) throw FormatError(path + ": missing header");
    const std::size_t cols = split_line(line, ',').size() - 1;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_line(line, ',');
        if (f.size() != cols + 1) throw FormatError(path + ": malformed row");
        std::vector<double> r;
        for (std::size_t c = 0; c < cols; ++c) r.push_back(parse_double(f[c]));
        rows.push_back(std::move(r));
        set.labels.push_back(f[cols] == "1" ? 1 : 0);
    }
    set.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t c = 0; c < cols; ++c) set.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    return set;
}

}  // namespace dllids
