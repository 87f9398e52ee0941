#pragma once

// Adversarial-example detectors: a classifier over standardized LID vectors,
// and the noise-probe baseline that counts label flips under Gaussian jitter.

#include "dllids/classics.hpp"
#include "dllids/lid.hpp"
#include "dllids/mlp.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dllids {

/// Per-column z-scoring; zero-variance columns are centred only.
struct Standardizer {
    Vector mean;
    Vector scale;

    static Standardizer fit(const Matrix& rows);
    Vector apply(const Vector& x) const;
    Matrix apply(const Matrix& rows) const;
};

struct AeDetector {
    ClassicModel inner;
    Standardizer scaler;
    double threshold = 0.0;  // offset applied to the inner model's centred score
    LidConfig lid;
    std::size_t layer_count = 0;
    std::vector<std::string> attacks;
    std::vector<std::string> budgets;
    double heldout_accuracy = 0.0;
    std::size_t heldout_size = 0;
};

struct DetectorTrainOptions {
    ClassicKind kind = ClassicKind::LinSvm;
    ClassicParams params;
    double holdout_fraction = 0.2;
    double threshold = 0.0;
    std::uint64_t seed = 3;
};

struct Detection {
    bool adversarial = false;
    double score = 0.0;  // inner score minus the inner model's own threshold
};

/// Fits on a seeded (1 - holdout) share and reports accuracy on the rest.
AeDetector train_ae_detector(const LidTrainingSet& set, const DetectorTrainOptions& options);
Detection detect(const AeDetector& detector, const Vector& lid);
std::vector<Detection> detect_batch(const AeDetector& detector, const Matrix& lids);

void save_detector(const AeDetector& detector, const std::string& path, const Meta& meta = {});
AeDetector load_detector(const std::string& path);

struct DbBaseline {
    std::size_t probes = 20;
    double sigma = 0.02;
    double tau = 0.5;

    void validate() const;
};

/// Adversarial when at least tau of m jittered copies (masked dims only,
/// clamped to [0,1]) change the model's prediction.
bool db_detect(const MlpModel& model, const Vector& x, const Mask& mask, const DbBaseline& baseline,
               std::uint64_t seed);

}  // namespace dllids
