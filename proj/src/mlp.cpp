#include "dllids/mlp.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace dllids {

namespace {

const char* const kModelFormat = "dllids-mlp";
const char* const kModelVersion = "1";

Vector softmax(const Vector& z) {
    Vector e = (z.array() - z.maxCoeff()).exp();
    return e / e.sum();
}

Matrix softmax_rows(const Matrix& z) {
    Matrix out(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        Eigen::RowVectorXd e = (z.row(i).array() - z.row(i).maxCoeff()).exp();
        out.row(i) = e / e.sum();
    }
    return out;
}

void check_input(const MlpModel& model, const Vector& x) {
    if (static_cast<std::size_t>(x.size()) != model.spec.input_width)
        throw std::invalid_argument("mlp: input has width " + std::to_string(x.size()) + ", expected " +
                                    std::to_string(model.spec.input_width));
    if (!x.allFinite()) throw std::invalid_argument("mlp: non-finite input");
}

// Pre-activations of every layer for one input.
std::vector<Vector> preactivations(const MlpModel& model, const Vector& x) {
    std::vector<Vector> z;
    z.reserve(model.layers.size());
    Vector a = x;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& layer = model.layers[l];
        z.push_back(layer.weights * a + layer.bias);
        if (l + 1 < model.layers.size()) a = z.back().cwiseMax(0.0);
    }
    return z;
}

}  // namespace

void MlpSpec::validate() const {
    if (input_width == 0 || output_width < 2) throw std::invalid_argument("MlpSpec: bad input/output width");
    if (hidden.empty()) throw std::invalid_argument("MlpSpec: at least one hidden layer is required");
    for (auto w : hidden)
        if (w == 0) throw std::invalid_argument("MlpSpec: hidden widths must be >= 1");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be positive");
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch size must be positive");
}

MlpModel init_model(const MlpSpec& spec, std::uint64_t seed) {
    spec.validate();
    MlpModel model;
    model.spec = spec;
    Rng rng(seed);
    std::vector<std::size_t> widths{spec.input_width};
    widths.insert(widths.end(), spec.hidden.begin(), spec.hidden.end());
    widths.push_back(spec.output_width);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const auto fan_in = widths[l], fan_out = widths[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        DenseLayer layer;
        layer.weights.resize(static_cast<Eigen::Index>(fan_out), static_cast<Eigen::Index>(fan_in));
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = dist(rng);
        layer.bias = Vector::Zero(static_cast<Eigen::Index>(fan_out));
        model.layers.push_back(std::move(layer));
    }
    return model;
}

ForwardResult forward(const MlpModel& model, const Vector& x) {
    check_input(model, x);
    ForwardResult out;
    Vector a = x;
    for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
        a = (model.layers[l].weights * a + model.layers[l].bias).cwiseMax(0.0);
        out.trace.hidden.push_back(a);
    }
    out.logits = model.output_layer().weights * a + model.output_layer().bias;
    out.probs = softmax(out.logits);
    return out;
}

Vector logits(const MlpModel& model, const Vector& x) {
    check_input(model, x);
    Vector a = x;
    for (std::size_t l = 0; l + 1 < model.layers.size(); ++l)
        a = (model.layers[l].weights * a + model.layers[l].bias).cwiseMax(0.0);
    return model.output_layer().weights * a + model.output_layer().bias;
}

BatchForward forward_batch(const MlpModel& model, const Matrix& rows) {
    if (static_cast<std::size_t>(rows.cols()) != model.spec.input_width)
        throw std::invalid_argument("forward_batch: width mismatch");
    BatchForward out;
    Matrix a = rows;
    for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
        const auto& layer = model.layers[l];
        a = ((a * layer.weights.transpose()).rowwise() + layer.bias.transpose()).cwiseMax(0.0);
        out.hidden.push_back(a);
    }
    Matrix z = (a * model.output_layer().weights.transpose()).rowwise() + model.output_layer().bias.transpose();
    out.probs = softmax_rows(z);
    return out;
}

double loss(const Vector& probs, int y) {
    return -std::log(std::max(probs[y], kLossFloor));
}

std::vector<EpochStats> train(MlpModel& model, const Dataset& data, const TrainConfig& config) {
    config.validate();
    if (data.empty()) throw std::invalid_argument("train: empty dataset");
    for (const auto& s : data.samples)
        if (static_cast<std::size_t>(s.features.size()) != model.spec.input_width)
            throw std::invalid_argument("train: sample width does not match the model input");

    const std::size_t n = data.size();
    const std::size_t layers = model.layers.size();
    Rng rng(config.seed);

    // Adam moments
    std::vector<Matrix> mw(layers), vw(layers);
    std::vector<Vector> mb(layers), vb(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        mw[l] = Matrix::Zero(model.layers[l].weights.rows(), model.layers[l].weights.cols());
        vw[l] = mw[l];
        mb[l] = Vector::Zero(model.layers[l].bias.size());
        vb[l] = mb[l];
    }
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t step = 0;

    std::vector<EpochStats> history;
    const auto in_w = static_cast<Eigen::Index>(model.spec.input_width);
    const auto classes = static_cast<Eigen::Index>(model.spec.output_width);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        auto order = permutation(n, rng);
        double loss_sum = 0.0;
        std::size_t correct = 0, batches = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t end = std::min(n, start + config.batch_size);
            const auto bsz = static_cast<Eigen::Index>(end - start);
            Matrix x(in_w, bsz);
            Matrix y = Matrix::Zero(classes, bsz);
            for (Eigen::Index j = 0; j < bsz; ++j) {
                const auto& s = data.samples[order[start + static_cast<std::size_t>(j)]];
                x.col(j) = s.features;
                y(s.label, j) = 1.0;
            }
            // forward, keeping activations (columns are samples)
            std::vector<Matrix> acts{x};
            std::vector<Matrix> pre;
            for (std::size_t l = 0; l < layers; ++l) {
                Matrix z = (model.layers[l].weights * acts.back()).colwise() + model.layers[l].bias;
                pre.push_back(z);
                if (l + 1 < layers) acts.push_back(z.cwiseMax(0.0));
            }
            Matrix p = softmax_rows(pre.back().transpose()).transpose();
            for (Eigen::Index j = 0; j < bsz; ++j) {
                Eigen::Index label;
                y.col(j).maxCoeff(&label);
                loss_sum += -std::log(std::max(p(label, j), kLossFloor)) / static_cast<double>(bsz);
                if (argmax_class(p.col(j)) == label) ++correct;
            }
            ++batches;

            Matrix delta = (p - y) / static_cast<double>(bsz);
            ++step;
            for (std::size_t li = layers; li-- > 0;) {
                Matrix gw = delta * acts[li].transpose();
                Vector gb = delta.rowwise().sum();
                if (li > 0) {
                    Matrix back = model.layers[li].weights.transpose() * delta;
                    delta = back.cwiseProduct((pre[li - 1].array() > 0.0).cast<double>().matrix());
                }
                auto& layer = model.layers[li];
                if (config.optimizer == OptimizerKind::Sgd) {
                    layer.weights -= config.learning_rate * gw;
                    layer.bias -= config.learning_rate * gb;
                } else {
                    mw[li] = beta1 * mw[li] + (1 - beta1) * gw;
                    vw[li] = beta2 * vw[li] + (1 - beta2) * gw.cwiseProduct(gw);
                    mb[li] = beta1 * mb[li] + (1 - beta1) * gb;
                    vb[li] = beta2 * vb[li] + (1 - beta2) * gb.cwiseProduct(gb);
                    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
                    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
                    const double lr = config.learning_rate;
                    layer.weights.array() -=
                        lr * (mw[li].array() / c1) / ((vw[li].array() / c2).sqrt() + eps);
                    layer.bias.array() -= lr * (mb[li].array() / c1) / ((vb[li].array() / c2).sqrt() + eps);
                }
            }
        }
        history.push_back({epoch + 1, loss_sum / static_cast<double>(batches),
                           static_cast<double>(correct) / static_cast<double>(n)});
    }
    return history;
}

Vector backprop_to_input(const MlpModel& model, const Vector& x, const Vector& upstream) {
    check_input(model, x);
    auto z = preactivations(model, x);
    Vector delta = upstream;
    for (std::size_t l = model.layers.size(); l-- > 0;) {
        Vector back = model.layers[l].weights.transpose() * delta;
        if (l == 0) return back;
        delta = back.cwiseProduct((z[l - 1].array() > 0.0).cast<double>().matrix());
    }
    return delta;  // unreachable: at least one layer exists
}

Vector input_gradient(const MlpModel& model, const Vector& x, int y) {
    Vector p = softmax(logits(model, x));
    p[y] -= 1.0;
    return backprop_to_input(model, x, p);
}

std::pair<double, Vector> logit_gradient(const MlpModel& model, const Vector& x, std::size_t class_index) {
    if (class_index >= model.spec.output_width) throw std::invalid_argument("logit_gradient: bad class");
    Vector e = Vector::Zero(static_cast<Eigen::Index>(model.spec.output_width));
    e[static_cast<Eigen::Index>(class_index)] = 1.0;
    return {logits(model, x)[static_cast<Eigen::Index>(class_index)], backprop_to_input(model, x, e)};
}

int argmax_class(const Vector& scores) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < scores.size(); ++i)
        if (scores[i] >= scores[best]) best = i;
    return static_cast<int>(best);
}

int predict(const MlpModel& model, const Vector& x) { return argmax_class(logits(model, x)); }

std::vector<int> predict_batch(const MlpModel& model, const Matrix& rows) {
    auto fw = forward_batch(model, rows);
    std::vector<int> out(static_cast<std::size_t>(rows.rows()));
    for (Eigen::Index i = 0; i < rows.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax_class(fw.probs.row(i).transpose());
    return out;
}

double accuracy(const MlpModel& model, const Dataset& data) {
    if (data.empty()) return 0.0;
    auto pred = predict_batch(model, data.feature_matrix());
    std::size_t ok = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == data.samples[i].label;
    return static_cast<double>(ok) / static_cast<double>(data.size());
}

void save_model(const MlpModel& model, const std::string& path, const Meta& meta) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    Meta m = meta;
    m["format"] = kModelFormat;
    m["version"] = kModelVersion;
    out << meta_line(m) << '\n';
    out << "spec " << model.spec.input_width << ' ' << model.spec.hidden.size();
    for (auto w : model.spec.hidden) out << ' ' << w;
    out << ' ' << model.spec.output_width << '\n';
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& layer = model.layers[l];
        out << "layer " << l << ' ' << layer.weights.rows() << ' ' << layer.weights.cols() << '\n';
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                out << (c ? " " : "") << format_double(layer.weights(r, c));
            out << '\n';
        }
        out << "bias";
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) out << ' ' << format_double(layer.bias[r]);
        out << '\n';
    }
    out << "end\n";
}

MlpModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": empty model file");
    require_format(parse_meta_line(line), kModelFormat, kModelVersion, path);

    auto fail = [&](const std::string& why) { return FormatError(path + ": " + why); };
    auto next_tokens = [&](const char* what) {
        if (!std::getline(in, line)) throw fail(std::string("truncated before ") + what);
        auto toks = split_line(trim(line), ' ');
        if (toks.empty() || toks[0].empty()) throw fail(std::string("missing ") + what);
        return toks;
    };
    auto to_size = [&](const std::string& s) {
        double v = parse_double(s);
        if (v < 0 || v != std::floor(v)) throw fail("bad integer '" + s + "'");
        return static_cast<std::size_t>(v);
    };

    MlpModel model;
    try {
        auto spec = next_tokens("spec");
        if (spec[0] != "spec" || spec.size() < 4) throw fail("bad spec line");
        model.spec.input_width = to_size(spec[1]);
        const std::size_t h = to_size(spec[2]);
        if (spec.size() != h + 4) throw fail("spec line has wrong arity");
        model.spec.hidden.clear();
        for (std::size_t i = 0; i < h; ++i) model.spec.hidden.push_back(to_size(spec[3 + i]));
        model.spec.output_width = to_size(spec[3 + h]);
        model.spec.validate();

        std::vector<std::size_t> widths{model.spec.input_width};
        widths.insert(widths.end(), model.spec.hidden.begin(), model.spec.hidden.end());
        widths.push_back(model.spec.output_width);
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            auto hdr = next_tokens("layer header");
            if (hdr.size() != 4 || hdr[0] != "layer" || to_size(hdr[1]) != l || to_size(hdr[2]) != widths[l + 1] ||
                to_size(hdr[3]) != widths[l])
                throw fail("layer " + std::to_string(l) + " header does not match spec");
            DenseLayer layer;
            layer.weights.resize(static_cast<Eigen::Index>(widths[l + 1]), static_cast<Eigen::Index>(widths[l]));
            for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
                auto row = next_tokens("weight row");
                if (row.size() != widths[l]) throw fail("weight row has wrong length");
                for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                    layer.weights(r, c) = parse_double(row[static_cast<std::size_t>(c)]);
            }
            auto bias = next_tokens("bias");
            if (bias[0] != "bias" || bias.size() != widths[l + 1] + 1) throw fail("bad bias line");
            layer.bias.resize(static_cast<Eigen::Index>(widths[l + 1]));
            for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = parse_double(bias[static_cast<std::size_t>(r) + 1]);
            if (!layer.weights.allFinite() || !layer.bias.allFinite()) throw fail("non-finite parameter");
            model.layers.push_back(std::move(layer));
        }
        auto end = next_tokens("end marker");
        if (end[0] != "end") throw fail("missing end marker");
    } catch (const std::invalid_argument& e) {
        throw fail(e.what());
    }
    return model;
}

}  // namespace dllids
