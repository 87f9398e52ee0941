#pragma once

// Confusion-count metrics and the experiment tables (attack damage, detector
// accuracy, transferability, DLL-IDS versus bare DL).

#include "dllids/attacks.hpp"
#include "dllids/fusion.hpp"
#include "dllids/mlp.hpp"

#include "json.hpp"

#include <functional>
#include <string>
#include <vector>

namespace dllids {

struct MetricsReport {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0, accuracy = 0.0;
    bool precision_degenerate = false;  // no positive predictions
    bool recall_degenerate = false;     // no positive ground truth
    bool f1_degenerate = false;

    std::size_t total() const { return tp + fp + tn + fn; }
    static MetricsReport from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);
};

MetricsReport metrics(const std::vector<int>& predictions, const std::vector<int>& truth, int positive_class = 1);

/// A rectangular table of strings with a header row, rendered as CSV.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string csv() const;
    void write_csv(const std::string& path) const;
};

/// Victim accuracy per (budget, attack) over the offered evaluation set.
/// Samples the victim already misclassifies count as errors, so the
/// budget-0 row is the clean accuracy.
struct AttackTable {
    std::vector<AttackMethod> methods;
    std::vector<Budget> budgets;  // a budget of 0 means no attack
    Matrix accuracy;              // budgets x methods
    double clean_accuracy = 0.0;
    std::size_t samples = 0;

    Table table() const;
};

/// Builds the grid from pre-generated batches (one per method and non-zero budget).
AttackTable attack_table_from(const std::vector<AdversarialBatch>& batches, const std::vector<Budget>& budgets,
                              double clean_accuracy, std::size_t samples);
AttackTable attack_table(const MlpModel& model, const Dataset& data, const std::vector<AttackMethod>& methods,
                         const std::vector<Budget>& budgets, const AttackConfig& base, unsigned threads = 1,
                         std::vector<AdversarialBatch>* batches_out = nullptr);

/// Anything mapping feature rows to 0/1 predictions.
struct NamedPredictor {
    std::string name;
    std::function<std::vector<int>(const Matrix&)> predict;
};

/// Per-model accuracy on clean data and on each attack's AEs (labelled by
/// their origin), plus the pooled-by-sample accuracy over all attacks.
struct TransferTable {
    std::vector<std::string> models;
    std::vector<std::string> columns;  // CLEAN, one per attack, Overall
    Matrix accuracy;                   // models x columns

    Table table() const;
    double at(const std::string& model, const std::string& column) const;
};

TransferTable transferability_matrix(const std::vector<NamedPredictor>& models, const Matrix& clean_rows,
                                     const std::vector<int>& clean_labels,
                                     const std::vector<AdversarialBatch>& batches);

/// One evaluation set of the DLL-IDS comparison.
struct TestSet {
    std::string name;
    Matrix rows;
    std::vector<int> labels;
    std::vector<int> adversarial;  // ground truth for the isAdversarial flag
};

struct ComparisonRow {
    std::string system;
    std::string test_set;
    MetricsReport malicious;
    MetricsReport adversarial;  // only meaningful for DLL-IDS
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;

    const ComparisonRow& find(const std::string& system, const std::string& test_set) const;
    Table table() const;
    nlohmann::json json() const;
};

ComparisonReport comparison_report(const Pipeline& fusion, const MlpModel& bare, const std::vector<TestSet>& sets,
                                   unsigned threads = 1, FusionStats* stats = nullptr,
                                   std::vector<std::vector<FusionVerdict>>* verdicts_out = nullptr);

nlohmann::json to_json(const MetricsReport& m);

/// Detection accuracy per (attack, budget) for the LID detector and the
/// noise-probe baseline; the CLEAN row holds 1 - false-positive rate.
struct DetectionCell {
    std::string attack;  // CLEAN for the clean row
    Budget budget;
    double lid = 0.0;
    double db = 0.0;
    std::size_t samples = 0;
};

struct DetectionTable {
    std::vector<DetectionCell> cells;

    const DetectionCell& find(const std::string& attack, const Budget& budget) const;
    Table table() const;
};

}  // namespace dllids
