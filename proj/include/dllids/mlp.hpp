#pragma once

// Fully-connected ReLU classifier with softmax output, exact input gradients
// and per-hidden-layer activation capture.

#include "dllids/ingest.hpp"
#include "dllids/util.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dllids {

struct MlpSpec {
    std::size_t input_width = kEncodedWidth;
    std::vector<std::size_t> hidden = {128, 96, 64, 48, 32};
    std::size_t output_width = 2;

    void validate() const;
};

struct DenseLayer {
    Matrix weights;  // out x in
    Vector bias;
};

struct MlpModel {
    MlpSpec spec;
    std::vector<DenseLayer> layers;  // hidden layers then the output layer

    std::size_t hidden_count() const { return spec.hidden.size(); }
    const DenseLayer& output_layer() const { return layers.back(); }
};

/// Post-ReLU activations h_1..h_L of one input.
struct ActivationTrace {
    std::vector<Vector> hidden;
};

struct ForwardResult {
    Vector logits;
    Vector probs;
    ActivationTrace trace;
};

/// Row-per-sample batch forward pass.
struct BatchForward {
    Matrix probs;                // n x classes
    std::vector<Matrix> hidden;  // per layer: n x width
};

enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t epochs = 30;
    std::size_t batch_size = 128;
    OptimizerKind optimizer = OptimizerKind::Adam;
    std::uint64_t seed = 7;

    void validate() const;
};

struct EpochStats {
    std::size_t epoch = 0;
    double loss = 0.0;      // mean minibatch cross-entropy
    double accuracy = 0.0;  // running training accuracy over the epoch
};

inline constexpr double kLossFloor = 1e-12;

MlpModel init_model(const MlpSpec& spec, std::uint64_t seed);

ForwardResult forward(const MlpModel& model, const Vector& x);
BatchForward forward_batch(const MlpModel& model, const Matrix& rows);
Vector logits(const MlpModel& model, const Vector& x);

/// Cross-entropy -ln(max(probs[y], 1e-12)).
double loss(const Vector& probs, int y);

/// Minibatch training. Mutates `model`; returns per-epoch history.
std::vector<EpochStats> train(MlpModel& model, const Dataset& data, const TrainConfig& config);

/// Gradient of sum_c upstream[c] * z_c(x) with respect to x (z = pre-softmax logits).
Vector backprop_to_input(const MlpModel& model, const Vector& x, const Vector& upstream);

/// d/dx of the cross-entropy loss J(theta, x) for true class y.
Vector input_gradient(const MlpModel& model, const Vector& x, int y);

/// (z_c(x), d z_c / dx)
std::pair<double, Vector> logit_gradient(const MlpModel& model, const Vector& x, std::size_t class_index);

/// argmax of the output; ties resolve to the higher class index (malicious).
int predict(const MlpModel& model, const Vector& x);
int argmax_class(const Vector& scores);
std::vector<int> predict_batch(const MlpModel& model, const Matrix& rows);
double accuracy(const MlpModel& model, const Dataset& data);

/// Versioned text format: '#' metadata line, spec line, then each layer's
/// weights row by row and its bias, numbers in shortest round-trip form.
void save_model(const MlpModel& model, const std::string& path, const Meta& meta = {});
MlpModel load_model(const std::string& path);

}  // namespace dllids
