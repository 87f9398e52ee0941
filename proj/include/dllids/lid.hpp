#pragma once

// Local Intrinsic Dimensionality of hidden-layer activations.

#include "dllids/attacks.hpp"
#include "dllids/mlp.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dllids {

inline constexpr double kLidDistanceFloor = 1e-12;
inline constexpr double kLidCap = 1e6;

struct LidConfig {
    std::size_t k = 10;
    std::size_t batch_size = 100;  // minibatch / reference sample size
    std::uint64_t seed = 1234;     // fixes the inference-time reference rows
    bool exclude_origin = true;    // drop an AE's own clean origin from its training neighbourhood

    void validate() const;
};

/// MLE estimate -1 / mean(ln(r_i / r_max)) over the k nearest-neighbour
/// distances. Input order does not matter; distances are floored at 1e-12.
/// Returns kLidCap when all distances are equal.
double lid_mle(std::vector<double> distances);

/// Hidden activations of clean samples, one matrix (rows = samples) per layer.
struct ReferenceBank {
    std::vector<Matrix> layers;
    std::string tag;

    std::size_t rows() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().rows()); }
    std::size_t layer_count() const { return layers.size(); }
};

ReferenceBank build_reference_bank(const MlpModel& model, const Matrix& clean_rows, const std::string& tag = "");

/// The seeded subset of bank rows every inference-time query is compared against.
struct ReferenceSample {
    std::vector<std::size_t> rows;  // bank row indices
    std::vector<Matrix> layers;
};

ReferenceSample draw_reference(const ReferenceBank& bank, std::size_t batch_size, std::uint64_t seed);

/// LID of `query` against the rows of `reference`: the k smallest Euclidean
/// distances, skipping at most one exact-zero self-match.
double lid_against(const Vector& query, const Matrix& reference, std::size_t k);

/// One LID value per hidden layer.
Vector lid_vector(const ActivationTrace& trace, const ReferenceSample& reference, std::size_t k);
Vector lid_vector(const ActivationTrace& trace, const ReferenceBank& bank, std::size_t k,
                  std::size_t ref_batch_size, std::uint64_t seed);
/// Batched form: row i holds the LID vector of input row i.
Matrix lid_matrix(const MlpModel& model, const Matrix& rows, const ReferenceSample& reference, std::size_t k,
                  unsigned threads = 1);

/// Labelled LID features: label 0 = clean, 1 = adversarial.
struct LidTrainingSet {
    Matrix features;  // n x L
    std::vector<int> labels;
    Meta meta;  // k, batch, attacks, budgets

    std::size_t size() const { return labels.size(); }
};

/// Aligned minibatches: adversarial row i was generated from clean row i.
/// Clean LIDs use the clean minibatch minus the sample itself; adversarial
/// LIDs use the clean minibatch (minus the origin when exclude_origin is set).
LidTrainingSet build_training_set(const MlpModel& model, const std::vector<Matrix>& clean_batches,
                                  const std::vector<Matrix>& adversarial_batches, const LidConfig& config,
                                  unsigned threads = 1, const std::vector<std::vector<bool>>& keep_adversarial = {});

void save_lid_csv(const LidTrainingSet& set, const std::string& path);
LidTrainingSet load_lid_csv(const std::string& path);

}  // namespace dllids
