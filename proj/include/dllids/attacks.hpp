#pragma once

// White-box evasion attacks (FGSM, BIM, DeepFool, Carlini-Wagner L2) against
// the MLP, restricted to the perturbable feature mask and an l-infinity band
// of width `budget` around the original sample in normalized feature space.

#include "dllids/ingest.hpp"
#include "dllids/mlp.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dllids {

enum class AttackMethod { Fgsm, Bim, DeepFool, Cw };

std::string to_string(AttackMethod m);
AttackMethod parse_attack_method(const std::string& name);
const std::vector<AttackMethod>& all_attack_methods();

/// nullopt means no band (only the [0,1] box applies).
using Budget = std::optional<double>;
std::string budget_label(const Budget& b);  // "0.1" or "none"
Budget parse_budget(const std::string& text);

struct AttackConfig {
    AttackMethod method = AttackMethod::Fgsm;
    Budget budget = 0.10;

    std::size_t bim_iterations = 10;
    std::optional<double> bim_step;  // defaults to budget / 5

    double deepfool_overshoot = 0.02;
    std::size_t deepfool_max_iterations = 50;

    double cw_c = 1.0;
    std::size_t cw_steps = 200;
    double cw_learning_rate = 0.01;
    double cw_kappa = 0.0;
    bool cw_project_each_step = false;

    void validate() const;
    /// Step size used by FGSM (and the BIM default) when the budget is unbounded.
    double epsilon() const { return budget.value_or(1.0); }
    double bim_step_size() const { return bim_step.value_or(epsilon() / 5.0); }
};

struct AttackOutcome {
    Vector adversarial;
    bool success = false;
    std::size_t iterations = 0;
};

/// Keeps non-masked coordinates at x_orig; clamps masked ones into
/// [max(0, x_orig - p), min(1, x_orig + p)] (just [0,1] when p is unbounded).
Vector project(const Vector& x_orig, const Vector& x_cand, const Mask& mask, const Budget& p);

/// Closed-form DeepFool step for a locally linear binary score:
/// r = -f / ||grad||^2 * grad.
Vector deepfool_step(double f, const Vector& grad);

AttackOutcome fgsm(const MlpModel& model, const EncodedSample& sample, const AttackConfig& config);
AttackOutcome bim(const MlpModel& model, const EncodedSample& sample, const AttackConfig& config);
AttackOutcome deepfool(const MlpModel& model, const EncodedSample& sample, const AttackConfig& config);
AttackOutcome cw(const MlpModel& model, const EncodedSample& sample, const AttackConfig& config);
AttackOutcome run_attack(const MlpModel& model, const EncodedSample& sample, const AttackConfig& config);

struct AdversarialExample {
    std::size_t original_id = 0;  // index into the source dataset
    EncodedSample original;
    Vector adversarial;
    bool success = false;
};

struct AdversarialBatch {
    AttackMethod method = AttackMethod::Fgsm;
    Budget budget;
    std::vector<AdversarialExample> examples;
    std::size_t source_size = 0;    // samples offered to generate_batch
    std::size_t clean_correct = 0;  // of which the victim classified correctly

    std::size_t size() const { return examples.size(); }
    double success_rate() const;
    /// Victim accuracy on the attacked (initially correct) samples: 1 - success_rate.
    double victim_accuracy() const;
    /// Victim accuracy over all offered samples; misclassified originals count as errors.
    double victim_accuracy_overall() const;
    Matrix adversarial_matrix() const;
    Matrix original_matrix() const;
    std::vector<int> labels() const;
};

/// Attacks every sample of `data` the model classifies correctly.
AdversarialBatch generate_batch(const MlpModel& model, const Dataset& data, const AttackConfig& config,
                                unsigned threads = 1);

void save_batch_csv(const AdversarialBatch& batch, const std::string& path, const Meta& meta = {});
/// `source` must be the dataset the batch was generated from.
AdversarialBatch load_batch_csv(const std::string& path, const Dataset& source);

}  // namespace dllids
