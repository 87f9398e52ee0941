#include "dllids/classics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace dllids {

namespace {

const char* const kClassicFormat = "dllids-classic";
const char* const kClassicVersion = "1";

double gini(double pos, double n) {
    if (n <= 0.0) return 0.0;
    const double p = pos / n;
    return 2.0 * p * (1.0 - p);
}

void fit_linear(ClassicModel& m, const Matrix& X, const std::vector<int>& y, std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(X.rows());
    m.weights = Vector::Zero(X.cols());
    m.bias = 0.0;
    Rng rng(seed);
    const bool logistic = m.kind == ClassicKind::Lgr;
    const double lr = m.params.learning_rate, l2 = m.params.l2;
    for (std::size_t epoch = 0; epoch < m.params.epochs; ++epoch) {
        double total = 0.0;
        for (std::size_t idx : permutation(n, rng)) {
            const auto r = static_cast<Eigen::Index>(idx);
            const double s = y[idx] == 1 ? 1.0 : -1.0;
            const double margin = s * (X.row(r).dot(m.weights) + m.bias);
            double g;  // d loss / d score, times s
            if (logistic) {
                // log(1 + exp(-margin)), computed stably
                total += margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
                g = -1.0 / (1.0 + std::exp(margin));
            } else {
                total += std::max(0.0, 1.0 - margin);
                g = margin < 1.0 ? -1.0 : 0.0;
            }
            m.weights *= (1.0 - lr * l2);
            if (g != 0.0) {
                m.weights -= lr * g * s * X.row(r).transpose();
                m.bias -= lr * g * s;
            }
        }
        m.loss_history.push_back(total / static_cast<double>(n));
    }
}

struct TreeBuilder {
    const Matrix& X;
    const std::vector<int>& y;
    const ClassicParams& params;
    std::vector<TreeNode>& nodes;

    int build(std::vector<std::size_t>& idx, std::size_t depth) {
        const double n = static_cast<double>(idx.size());
        double pos = 0.0;
        for (auto i : idx) pos += y[i];
        const int id = static_cast<int>(nodes.size());
        nodes.push_back({});
        nodes[static_cast<std::size_t>(id)].positive_fraction = pos / n;
        if (depth >= params.max_depth || pos == 0.0 || pos == n || idx.size() < 2 * params.min_leaf) return id;

        const double parent = gini(pos, n) * n;
        double best_gain = 1e-12;
        int best_feature = -1;
        double best_threshold = 0.0;
        std::vector<std::pair<double, int>> column(idx.size());
        for (Eigen::Index f = 0; f < X.cols(); ++f) {
            for (std::size_t i = 0; i < idx.size(); ++i) column[i] = {X(static_cast<Eigen::Index>(idx[i]), f), y[idx[i]]};
            std::sort(column.begin(), column.end());
            if (column.front().first == column.back().first) continue;
            double left_pos = 0.0;
            for (std::size_t i = 0; i + 1 < column.size(); ++i) {
                left_pos += column[i].second;
                if (column[i].first == column[i + 1].first) continue;
                const std::size_t nl = i + 1, nr = column.size() - nl;
                if (nl < params.min_leaf || nr < params.min_leaf) continue;
                const double child = gini(left_pos, static_cast<double>(nl)) * static_cast<double>(nl) +
                                     gini(pos - left_pos, static_cast<double>(nr)) * static_cast<double>(nr);
                const double gain = parent - child;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = static_cast<int>(f);
                    best_threshold = 0.5 * (column[i].first + column[i + 1].first);
                }
            }
        }
        if (best_feature < 0) return id;
        std::vector<std::size_t> left, right;
        for (auto i : idx) (X(static_cast<Eigen::Index>(i), best_feature) <= best_threshold ? left : right).push_back(i);
        idx.clear();
        idx.shrink_to_fit();
        const int l = build(left, depth + 1);
        const int r = build(right, depth + 1);
        TreeNode& node = nodes[static_cast<std::size_t>(id)];
        node.feature = best_feature;
        node.threshold = best_threshold;
        node.left = l;
        node.right = r;
        return id;
    }
};

double knn_score(const ClassicModel& m, const std::vector<double>& d2) {
    const std::size_t k = std::min(m.params.knn_k, d2.size());
    std::vector<std::size_t> order(d2.size());
    std::iota(order.begin(), order.end(), 0);
    auto closer = [&](std::size_t a, std::size_t b) { return d2[a] < d2[b] || (d2[a] == d2[b] && a < b); };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), closer);
    double votes = 0.0;
    for (std::size_t i = 0; i < k; ++i) votes += m.store_labels[order[i]];
    return votes / static_cast<double>(k);
}

double tree_score(const ClassicModel& m, const Vector& x) {
    std::size_t id = 0;
    while (m.tree[id].feature >= 0) {
        const TreeNode& node = m.tree[id];
        id = static_cast<std::size_t>(x[node.feature] <= node.threshold ? node.left : node.right);
    }
    return m.tree[id].positive_fraction;
}

ClassicPrediction decide(const ClassicModel& m, double score) {
    return {score >= m.threshold() ? 1 : 0, score};
}

}  // namespace

std::string to_string(ClassicKind k) {
    switch (k) {
        case ClassicKind::Knn: return "KNN";
        case ClassicKind::Lgr: return "LGR";
        case ClassicKind::LinSvm: return "LINSVM";
        case ClassicKind::Dtc: return "DTC";
    }
    return "?";
}

ClassicKind parse_classic_kind(const std::string& name) {
    std::string up;
    for (char c : name) up += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (up == "KNN") return ClassicKind::Knn;
    if (up == "LGR") return ClassicKind::Lgr;
    if (up == "LINSVM" || up == "SVM") return ClassicKind::LinSvm;
    if (up == "DTC") return ClassicKind::Dtc;
    throw std::invalid_argument("unknown classifier kind '" + name + "'");
}

double ClassicModel::threshold() const {
    return kind == ClassicKind::Knn || kind == ClassicKind::Dtc ? 0.5 : 0.0;
}

std::size_t ClassicModel::input_width() const {
    switch (kind) {
        case ClassicKind::Knn: return static_cast<std::size_t>(store.cols());
        case ClassicKind::Lgr:
        case ClassicKind::LinSvm: return static_cast<std::size_t>(weights.size());
        case ClassicKind::Dtc: break;
    }
    return 0;  // trees accept any width covering their split features
}

ClassicModel train_classic(ClassicKind kind, const Matrix& X, const std::vector<int>& y, const ClassicParams& params,
                           std::uint64_t seed) {
    if (static_cast<std::size_t>(X.rows()) != y.size() || y.empty())
        throw std::invalid_argument("train_classic: feature rows and labels differ or are empty");
    if (!X.allFinite()) throw std::invalid_argument("train_classic: non-finite features");
    bool has0 = false, has1 = false;
    for (int v : y) {
        if (v != 0 && v != 1) throw std::invalid_argument("train_classic: labels must be 0 or 1");
        (v ? has1 : has0) = true;
    }
    if (!has0 || !has1) throw DataError("train_classic: training data holds a single class");
    if (params.knn_k == 0 || params.epochs == 0 || params.min_leaf == 0 || !(params.learning_rate > 0.0))
        throw std::invalid_argument("train_classic: bad hyperparameters");

    ClassicModel m;
    m.kind = kind;
    m.params = params;
    switch (kind) {
        case ClassicKind::Knn:
            m.store = X;
            m.store_labels = y;
            break;
        case ClassicKind::Lgr:
        case ClassicKind::LinSvm: fit_linear(m, X, y, seed); break;
        case ClassicKind::Dtc: {
            std::vector<std::size_t> idx(y.size());
            std::iota(idx.begin(), idx.end(), 0);
            TreeBuilder{X, y, params, m.tree}.build(idx, 0);
            break;
        }
    }
    return m;
}

ClassicPrediction predict_classic(const ClassicModel& m, const Vector& x) {
    switch (m.kind) {
        case ClassicKind::Knn: {
            std::vector<double> d2(static_cast<std::size_t>(m.store.rows()));
            for (Eigen::Index r = 0; r < m.store.rows(); ++r)
                d2[static_cast<std::size_t>(r)] = (m.store.row(r).transpose() - x).squaredNorm();
            return decide(m, knn_score(m, d2));
        }
        case ClassicKind::Lgr:
        case ClassicKind::LinSvm: return decide(m, x.dot(m.weights) + m.bias);
        case ClassicKind::Dtc: return decide(m, tree_score(m, x));
    }
    throw std::invalid_argument("predict_classic: unknown kind");
}

std::vector<ClassicPrediction> predict_classic_batch(const ClassicModel& m, const Matrix& rows) {
    std::vector<ClassicPrediction> out(static_cast<std::size_t>(rows.rows()));
    if (m.kind != ClassicKind::Knn) {
        for (Eigen::Index r = 0; r < rows.rows(); ++r) out[static_cast<std::size_t>(r)] = predict_classic(m, rows.row(r).transpose());
        return out;
    }
    // Squared distances through one matrix product per block of queries.
    const Vector store_norms = m.store.rowwise().squaredNorm();
    constexpr Eigen::Index kBlock = 256;
    std::vector<double> d2(static_cast<std::size_t>(m.store.rows()));
    for (Eigen::Index start = 0; start < rows.rows(); start += kBlock) {
        const Eigen::Index len = std::min(kBlock, rows.rows() - start);
        const Matrix q = rows.middleRows(start, len);
        const Matrix cross = q * m.store.transpose();
        const Vector qn = q.rowwise().squaredNorm();
        for (Eigen::Index i = 0; i < len; ++i) {
            for (Eigen::Index j = 0; j < m.store.rows(); ++j)
                d2[static_cast<std::size_t>(j)] = std::max(0.0, qn[i] + store_norms[j] - 2.0 * cross(i, j));
            out[static_cast<std::size_t>(start + i)] = decide(m, knn_score(m, d2));
        }
    }
    return out;
}

std::vector<int> predict_labels(const ClassicModel& model, const Matrix& rows) {
    std::vector<int> out;
    for (const auto& p : predict_classic_batch(model, rows)) out.push_back(p.label);
    return out;
}

void write_classic(const ClassicModel& m, std::ostream& out, const Meta& meta) {
    Meta mm = meta;
    mm["format"] = kClassicFormat;
    mm["version"] = kClassicVersion;
    mm["kind"] = to_string(m.kind);
    out << meta_line(mm) << '\n';
    const auto& p = m.params;
    out << "params " << p.knn_k << ' ' << p.epochs << ' ' << format_double(p.learning_rate) << ' '
        << format_double(p.l2) << ' ' << p.max_depth << ' ' << p.min_leaf << '\n';
    switch (m.kind) {
        case ClassicKind::Knn:
            out << "store " << m.store.rows() << ' ' << m.store.cols() << '\n';
            for (Eigen::Index r = 0; r < m.store.rows(); ++r) {
                for (Eigen::Index c = 0; c < m.store.cols(); ++c) out << format_double(m.store(r, c)) << ' ';
                out << m.store_labels[static_cast<std::size_t>(r)] << '\n';
            }
            break;
        case ClassicKind::Lgr:
        case ClassicKind::LinSvm:
            out << "linear " << m.weights.size();
            for (Eigen::Index i = 0; i < m.weights.size(); ++i) out << ' ' << format_double(m.weights[i]);
            out << ' ' << format_double(m.bias) << '\n';
            break;
        case ClassicKind::Dtc:
            out << "tree " << m.tree.size() << '\n';
            for (const auto& n : m.tree)
                out << n.feature << ' ' << format_double(n.threshold) << ' ' << n.left << ' ' << n.right << ' '
                    << format_double(n.positive_fraction) << '\n';
            break;
    }
    out << "end\n";
}

ClassicModel read_classic(std::istream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": empty file");
    Meta meta = parse_meta_line(line);
    require_format(meta, kClassicFormat, kClassicVersion, path);
    ClassicModel m;
    m.kind = parse_classic_kind(meta["kind"]);
    auto fail = [&](const std::string& why) { return FormatError(path + ": " + why); };
    auto next_tokens = [&]() {
        if (!std::getline(in, line)) throw fail("truncated file");
        auto t = split_line(trim(line), ' ');
        t.erase(std::remove(t.begin(), t.end(), std::string()), t.end());
        return t;
    };
    auto count = [&](const std::string& s) { return static_cast<std::size_t>(parse_double(s)); };
    auto t = next_tokens();
    if (t.size() != 7 || t[0] != "params") throw fail("bad params line");
    m.params = {count(t[1]), count(t[2]), parse_double(t[3]), parse_double(t[4]), count(t[5]), count(t[6])};
    switch (m.kind) {
        case ClassicKind::Knn: {
            t = next_tokens();
            if (t.size() != 3 || t[0] != "store") throw fail("bad store header");
            const std::size_t rows = count(t[1]), cols = count(t[2]);
            m.store.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
            for (std::size_t r = 0; r < rows; ++r) {
                t = next_tokens();
                if (t.size() != cols + 1) throw fail("bad store row");
                for (std::size_t c = 0; c < cols; ++c) m.store(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = parse_double(t[c]);
                m.store_labels.push_back(t[cols] == "1" ? 1 : 0);
            }
            break;
        }
        case ClassicKind::Lgr:
        case ClassicKind::LinSvm: {
            t = next_tokens();
            if (t.size() < 2 || t[0] != "linear" || t.size() != count(t[1]) + 3) throw fail("bad linear line");
            const std::size_t n = count(t[1]);
            m.weights.resize(static_cast<Eigen::Index>(n));
            for (std::size_t i = 0; i < n; ++i) m.weights[static_cast<Eigen::Index>(i)] = parse_double(t[2 + i]);
            m.bias = parse_double(t.back());
            break;
        }
        case ClassicKind::Dtc: {
            t = next_tokens();
            if (t.size() != 2 || t[0] != "tree") throw fail("bad tree header");
            const std::size_t n = count(t[1]);
            for (std::size_t i = 0; i < n; ++i) {
                t = next_tokens();
                if (t.size() != 5) throw fail("bad tree node");
                TreeNode node{static_cast<int>(std::stol(t[0])), parse_double(t[1]), static_cast<int>(std::stol(t[2])),
                              static_cast<int>(std::stol(t[3])), parse_double(t[4])};
                const int limit = static_cast<int>(n);
                if (node.feature >= 0 && (node.left <= static_cast<int>(i) || node.right <= static_cast<int>(i) ||
                                          node.left >= limit || node.right >= limit))
                    throw fail("tree child index out of range");
                m.tree.push_back(node);
            }
            if (m.tree.empty()) throw fail("empty tree");
            break;
        }
    }
    t = next_tokens();
    if (t.size() != 1 || t[0] != "end") throw fail("missing end marker");
    return m;
}

void save_classic(const ClassicModel& model, const std::string& path, const Meta& meta) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    write_classic(model, out, meta);
}

ClassicModel load_classic(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    return read_classic(in, path);
}

}  // namespace dllids
