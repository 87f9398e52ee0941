#include "dllids/labelspread.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace dllids {

namespace {

const char* const kLsFormat = "dllids-labelspread";
const char* const kLsVersion = "1";

// Squared distances between the columns of A and the columns of B, computed
// coordinate-wise so identical points give exactly zero.
Matrix squared_distances(const Matrix& A, const Matrix& B) {
    Matrix out(A.cols(), B.cols());
    for (Eigen::Index j = 0; j < B.cols(); ++j)
        for (Eigen::Index i = 0; i < A.cols(); ++i) out(i, j) = (A.col(i) - B.col(j)).squaredNorm();
    return out;
}

Matrix kernel(const Matrix& d2, double sigma) {
    const double denom = 2.0 * sigma * sigma;
    return (-d2.array() / denom).exp().matrix();
}

}  // namespace

void LsOptions::validate() const {
    if (sigma && !(*sigma > 0.0)) throw std::invalid_argument("LsOptions: sigma must be positive");
    if (sigma_rule != "knn" && sigma_rule != "pairwise") throw std::invalid_argument("LsOptions: sigma_rule must be knn or pairwise");
    if (sigma_rule == "knn" && sigma_k == 0) throw std::invalid_argument("LsOptions: sigma_k must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("LsOptions: alpha must lie strictly inside (0, 1)");
    if (!(tolerance > 0.0) || max_iterations == 0 || query_batch == 0 || anchors < 2)
        throw std::invalid_argument("LsOptions: bad tolerance, iteration, batch or anchor count");
}

Matrix gaussian_affinity(const Matrix& rows, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_affinity: sigma must be positive");
    const Matrix t = rows.transpose();
    Matrix W = kernel(squared_distances(t, t), sigma);
    W.diagonal().setZero();
    return W;
}

SpreadGraph make_graph(const Matrix& W, const std::vector<int>& labels, std::size_t classes) {
    const Eigen::Index n = W.rows();
    if (W.cols() != n || labels.size() != static_cast<std::size_t>(n))
        throw std::invalid_argument("make_graph: affinity must be square and match the label count");
    SpreadGraph g;
    g.W = W;
    g.degree = W.rowwise().sum();
    Vector inv_sqrt(n);
    for (Eigen::Index i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(std::max(g.degree[i], kDegreeFloor));
    g.L = inv_sqrt.asDiagonal() * W * inv_sqrt.asDiagonal();
    g.Y0 = Matrix::Zero(n, static_cast<Eigen::Index>(classes));
    for (Eigen::Index i = 0; i < n; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y >= static_cast<int>(classes)) throw std::invalid_argument("make_graph: label out of range");
        if (y >= 0) g.Y0(i, y) = 1.0;
    }
    return g;
}

Propagation spread_iterative(const SpreadGraph& g, double alpha, double tol, std::size_t max_iterations) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("spread_iterative: alpha must lie in (0, 1)");
    Propagation p;
    Matrix Y = g.Y0;
    const Matrix base = (1.0 - alpha) * g.Y0;
    for (std::size_t it = 1; it <= max_iterations; ++it) {
        Matrix next = alpha * (g.L * Y) + base;
        const double delta = (next - Y).cwiseAbs().maxCoeff();
        Y = std::move(next);
        p.deltas.push_back(delta);
        p.iterations = it;
        if (delta < tol) {
            p.converged = true;
            break;
        }
    }
    p.scores = std::move(Y);
    return p;
}

Matrix spread_closed_form(const SpreadGraph& g, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("spread_closed_form: alpha must lie in (0, 1)");
    const Eigen::Index n = g.L.rows();
    const Matrix A = Matrix::Identity(n, n) - alpha * g.L;
    Eigen::LLT<Matrix> llt(A);
    if (llt.info() != Eigen::Success) throw std::runtime_error("spread_closed_form: system is not positive definite");
    return (1.0 - alpha) * llt.solve(g.Y0);
}

double rayleigh_quotient(const SpreadGraph& g, const Vector& f) {
    double num = 0.0;
    for (Eigen::Index v = 0; v < g.W.cols(); ++v)
        for (Eigen::Index u = 0; u < v; ++u) {
            const double diff = f[u] - f[v];
            num += g.W(u, v) * diff * diff;
        }
    const double den = f.cwiseProduct(f).dot(g.degree);
    return den == 0.0 ? 0.0 : num / den;
}

double spread_cost(const SpreadGraph& g, const Matrix& Y, double alpha) {
    const double mu = alpha / (1.0 - alpha);
    const Matrix IL = Matrix::Identity(g.L.rows(), g.L.cols()) - g.L;
    return (Y - g.Y0).squaredNorm() + mu * (Y.transpose() * IL * Y).trace();
}

double median_pairwise_distance(const Matrix& rows) {
    if (rows.rows() < 2) throw std::invalid_argument("median_pairwise_distance: need two rows");
    const Matrix t = rows.transpose();
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(rows.rows() * (rows.rows() - 1) / 2));
    for (Eigen::Index j = 1; j < t.cols(); ++j)
        for (Eigen::Index i = 0; i < j; ++i) d.push_back((t.col(i) - t.col(j)).norm());
    auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    double med = *mid;
    if (d.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), mid));
    return med;
}

double median_knn_distance(const Matrix& rows, std::size_t k) {
    const auto n = static_cast<std::size_t>(rows.rows());
    if (k == 0 || k >= n) throw std::invalid_argument("median_knn_distance: need 0 < k < rows");
    const Matrix t = rows.transpose();
    const Matrix d2 = squared_distances(t, t);
    std::vector<double> kth(n), d(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t w = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) d[w++] = d2(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
        std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
        kth[i] = std::sqrt(d[k - 1]);
    }
    auto mid = kth.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(kth.begin(), mid, kth.end());
    double med = *mid;
    if (n % 2 == 0) med = 0.5 * (med + *std::max_element(kth.begin(), mid));
    return med;
}

std::vector<std::size_t> select_anchors(const std::vector<int>& labels, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::size_t> by_class[2];
    for (std::size_t i : permutation(labels.size(), rng)) {
        if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("select_anchors: labels must be 0 or 1");
        by_class[labels[i]].push_back(i);
    }
    const std::size_t per_class = n / 2;
    std::vector<std::size_t> out;
    for (auto& ids : by_class) {
        ids.resize(std::min(ids.size(), per_class));
        out.insert(out.end(), ids.begin(), ids.end());
    }
    std::sort(out.begin(), out.end());
    return out;
}

LabelSpreadModel fit_ls(const Matrix& anchors, const std::vector<int>& labels, const LsOptions& options) {
    options.validate();
    if (anchors.rows() == 0 || labels.size() != static_cast<std::size_t>(anchors.rows()))
        throw std::invalid_argument("fit_ls: anchors empty or misaligned with labels");
    bool has0 = false, has1 = false;
    for (int y : labels) {
        if (y != 0 && y != 1) throw std::invalid_argument("fit_ls: anchor labels must be 0 or 1");
        (y ? has1 : has0) = true;
    }
    if (!has0 || !has1) throw DataError("fit_ls: both classes must be labelled");
    LabelSpreadModel m;
    m.anchors = anchors;
    m.anchor_labels = labels;
    if (options.sigma) m.sigma = *options.sigma;
    else if (options.sigma_rule == "pairwise") m.sigma = median_pairwise_distance(anchors);
    else m.sigma = median_knn_distance(anchors, std::min(options.sigma_k, static_cast<std::size_t>(anchors.rows()) - 1));
    if (!(m.sigma > 0.0)) throw DataError("fit_ls: anchors are all identical; sigma would be zero");
    m.alpha = options.alpha;
    m.tolerance = options.tolerance;
    m.max_iterations = options.max_iterations;
    m.query_batch = options.query_batch;
    m.anchor_W = gaussian_affinity(anchors, m.sigma);
    return m;
}

LabelSpreadModel fit_ls(const Dataset& train, const LsOptions& options) {
    options.validate();
    auto ids = select_anchors(train.labels(), options.anchors, options.seed);
    Matrix anchors(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(kEncodedWidth));
    std::vector<int> labels;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        anchors.row(static_cast<Eigen::Index>(i)) = train.samples[ids[i]].features.transpose();
        labels.push_back(train.samples[ids[i]].label);
    }
    auto m = fit_ls(anchors, labels, options);
    m.anchor_ids = std::move(ids);
    return m;
}

SpreadGraph extended_graph(const LabelSpreadModel& m, const Matrix& queries) {
    if (queries.cols() != m.anchors.cols()) throw std::invalid_argument("extended_graph: query width mismatch");
    const Eigen::Index a = m.anchors.rows(), q = queries.rows();
    const Matrix at = m.anchors.transpose(), qt = queries.transpose();
    Matrix W(a + q, a + q);
    W.topLeftCorner(a, a) = m.anchor_W;
    const Matrix aq = kernel(squared_distances(at, qt), m.sigma);
    W.topRightCorner(a, q) = aq;
    W.bottomLeftCorner(q, a) = aq.transpose();
    Matrix qq = kernel(squared_distances(qt, qt), m.sigma);
    qq.diagonal().setZero();
    W.bottomRightCorner(q, q) = qq;
    std::vector<int> labels = m.anchor_labels;
    labels.resize(static_cast<std::size_t>(a + q), -1);
    return make_graph(W, labels);
}

LsResult propagate_iterative(const LabelSpreadModel& m, const Matrix& queries) {
    LsResult r;
    r.scores.resize(queries.rows(), 2);
    const auto batch = static_cast<Eigen::Index>(m.query_batch);
    for (Eigen::Index start = 0; start < queries.rows(); start += batch) {
        const Eigen::Index len = std::min(batch, queries.rows() - start);
        SpreadGraph g = extended_graph(m, queries.middleRows(start, len));
        Propagation p = spread_iterative(g, m.alpha, m.tolerance, m.max_iterations);
        r.converged = r.converged && p.converged;
        r.max_iterations_used = std::max(r.max_iterations_used, p.iterations);
        r.scores.middleRows(start, len) = p.scores.bottomRows(len);
    }
    return r;
}

Matrix propagate_closed_form(const LabelSpreadModel& m, const Matrix& queries) {
    Matrix out(queries.rows(), 2);
    const auto batch = static_cast<Eigen::Index>(m.query_batch);
    for (Eigen::Index start = 0; start < queries.rows(); start += batch) {
        const Eigen::Index len = std::min(batch, queries.rows() - start);
        SpreadGraph g = extended_graph(m, queries.middleRows(start, len));
        out.middleRows(start, len) = spread_closed_form(g, m.alpha).bottomRows(len);
    }
    return out;
}

std::vector<int> argmax_rows(const Matrix& scores) {
    std::vector<int> out;
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        Eigen::Index best = scores.cols() - 1;
        for (Eigen::Index c = scores.cols() - 1; c >= 0; --c)
            if (scores(r, c) > scores(r, best)) best = c;
        out.push_back(static_cast<int>(best));
    }
    return out;
}

std::vector<int> predict_ls(const LabelSpreadModel& model, const Matrix& queries) {
    return argmax_rows(propagate_iterative(model, queries).scores);
}

void save_ls(const LabelSpreadModel& m, const std::string& path, const Meta& meta) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    Meta mm = meta;
    mm["format"] = kLsFormat;
    mm["version"] = kLsVersion;
    out << meta_line(mm) << '\n';
    out << "params " << format_double(m.sigma) << ' ' << format_double(m.alpha) << ' ' << format_double(m.tolerance)
        << ' ' << m.max_iterations << ' ' << m.query_batch << '\n';
    out << "anchors " << m.anchors.rows() << ' ' << m.anchors.cols() << '\n';
    for (Eigen::Index r = 0; r < m.anchors.rows(); ++r) {
        const auto i = static_cast<std::size_t>(r);
        out << (m.anchor_ids.empty() ? i : m.anchor_ids[i]) << ' ' << m.anchor_labels[i];
        for (Eigen::Index c = 0; c < m.anchors.cols(); ++c) out << ' ' << format_double(m.anchors(r, c));
        out << '\n';
    }
    out << "end\n";
}

LabelSpreadModel load_ls(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    auto fail = [&](const std::string& why) { return FormatError(path + ": " + why); };
    std::string line;
    if (!std::getline(in, line)) throw fail("empty file");
    require_format(parse_meta_line(line), kLsFormat, kLsVersion, path);
    auto tokens = [&]() {
        if (!std::getline(in, line)) throw fail("truncated file");
        return split_line(line, ' ');
    };
    auto t = tokens();
    if (t.size() != 6 || t[0] != "params") throw fail("bad params line");
    LsOptions opt;
    opt.sigma = parse_double(t[1]);
    opt.alpha = parse_double(t[2]);
    opt.tolerance = parse_double(t[3]);
    opt.max_iterations = static_cast<std::size_t>(parse_double(t[4]));
    opt.query_batch = static_cast<std::size_t>(parse_double(t[5]));
    t = tokens();
    if (t.size() != 3 || t[0] != "anchors") throw fail("bad anchors header");
    const auto rows = static_cast<std::size_t>(parse_double(t[1])), cols = static_cast<std::size_t>(parse_double(t[2]));
    Matrix anchors(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::vector<int> labels;
    std::vector<std::size_t> ids;
    for (std::size_t r = 0; r < rows; ++r) {
        t = tokens();
        if (t.size() != cols + 2) throw fail("bad anchor row");
        ids.push_back(static_cast<std::size_t>(parse_double(t[0])));
        labels.push_back(t[1] == "1" ? 1 : 0);
        for (std::size_t c = 0; c < cols; ++c) anchors(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = parse_double(t[2 + c]);
    }
    t = tokens();
    if (t.size() != 1 || t[0] != "end") throw fail("missing end marker");
    opt.anchors = std::max<std::size_t>(rows, 2);
    try {
        auto m = fit_ls(anchors, labels, opt);
        m.anchor_ids = std::move(ids);
        return m;
    } catch (const std::invalid_argument& e) {
        throw fail(e.what());
    }
}

}  // namespace dllids
