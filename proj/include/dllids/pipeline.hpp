#pragma once

// Config-driven experiment stages. Each stage writes into
// <output_dir>/<stage>-<key>, where key is a digest of the stage's own
// settings and the keys of the stages it reads, and records itself in
// <output_dir>/manifest.json.

#include "dllids/aedetect.hpp"
#include "dllids/attacks.hpp"
#include "dllids/classics.hpp"
#include "dllids/evalkit.hpp"
#include "dllids/fusion.hpp"
#include "dllids/ingest.hpp"
#include "dllids/labelspread.hpp"
#include "dllids/lid.hpp"
#include "dllids/mlp.hpp"
#include "dllids/synth.hpp"

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dllids {

inline constexpr const char* kDataRootEnv = "DLLIDS_DATA_ROOT";

struct DataOptions {
    std::string source = "auto";  // auto | nslkdd | synthetic
    std::vector<std::string> files = {"KDDTrain+.txt"};
    std::string root;  // empty: $DLLIDS_DATA_ROOT, then ./data
    SynthConfig synth{26000, 1, 0.47, 0.08, 0.04};
    std::size_t train_n = 20000;
    std::size_t test_n = 5000;
    std::uint64_t split_seed = 11;
    std::vector<std::string> persistent = default_persistent_set();
};

struct AttackGrid {
    std::vector<AttackMethod> methods = all_attack_methods();
    std::vector<Budget> budgets = {0.02, 0.05, 0.10, 0.20, std::nullopt};
    std::size_t eval_samples = 1000;
    std::uint64_t eval_seed = 5;
    AttackConfig params = projected_cw();  // method and budget are overridden per cell

    static AttackConfig projected_cw() {
        AttackConfig c;
        c.cw_project_each_step = true;
        return c;
    }
};

inline LidConfig pipeline_lid() {
    LidConfig c;
    c.k = 20;
    c.batch_size = 200;
    return c;
}

inline DetectorTrainOptions pipeline_detector_fit() {
    DetectorTrainOptions o;
    o.kind = ClassicKind::Dtc;
    return o;
}

struct DetectorOptions {
    LidConfig lid = pipeline_lid();
    std::size_t bank_size = 5000;
    std::vector<AttackMethod> attacks = all_attack_methods();
    std::vector<Budget> budgets = {0.10};
    std::size_t pairs = 10000;  // clean training samples attacked for the LID training set
    bool successful_only = true;  // positives are the perturbations that flipped the victim
    std::uint64_t sample_seed = 21;
    DetectorTrainOptions train = pipeline_detector_fit();
};

struct EvalOptions {
    Budget budget = 0.10;  // budget of the transferability and comparison studies
    std::vector<Budget> detection_budgets = {0.05, 0.10, 0.20};
    bool detector_per_budget = true;  // detection table: a detector trained at each budget, else the deployed one
    DbBaseline db;
    std::uint64_t db_seed = 31;
    ClassicParams classics;
    std::uint64_t classics_seed = 41;
};

struct RunConfig {
    DataOptions data;
    MlpSpec mlp;
    TrainConfig train;
    AttackGrid attack;
    DetectorOptions detector;
    LsOptions ls;
    EvalOptions eval;
    std::string output_dir = "out";
    unsigned threads = 1;  // not part of any stage key: results do not depend on it
    bool compare_kinds = false;
    bool verbose = true;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::string& path);
    void validate() const;
};

/// The same config with the detector trained at a single budget.
RunConfig detector_config_for(const RunConfig& config, const Budget& budget);

/// Applies "a.b.c=value" overrides to a config document. Values parse as JSON
/// when possible and as plain strings otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

struct StageInfo {
    std::string name;
    std::string key;
    std::string dir;
};

/// Where a stage with the given config would live (it may not exist yet).
StageInfo stage_info(const RunConfig& config, const std::string& stage);

struct IngestOutput {
    StageInfo stage;
    Dataset train;
    Dataset test;
};

struct DlOutput {
    StageInfo stage;
    MlpModel model;
    std::vector<EpochStats> history;
    double test_accuracy = 0.0;
};

struct AttackOutput {
    StageInfo stage;
    Dataset eval;  // seeded subset of the test split
    std::vector<AdversarialBatch> batches;
    AttackTable table;
};

struct DetectorOutput {
    StageInfo stage;
    AeDetector detector;
    std::vector<std::size_t> reference_ids;  // train rows forming the LID reference sample
    ReferenceSample reference;
    LidTrainingSet training_set;
    std::optional<Table> kind_comparison;
};

struct LsOutput {
    StageInfo stage;
    LabelSpreadModel model;
};

struct RunOutput {
    StageInfo stage;
    ComparisonReport report;
    FusionStats stats;
};

struct EvalOutput {
    StageInfo stage;
    AttackTable table1;
    DetectionTable table3;
    TransferTable table4;
};

IngestOutput cmd_ingest(const RunConfig& config);
DlOutput cmd_train_dl(const RunConfig& config);
AttackOutput cmd_attack(const RunConfig& config);
DetectorOutput cmd_train_detector(const RunConfig& config);
LsOutput cmd_train_ml(const RunConfig& config);
RunOutput cmd_run(const RunConfig& config);
EvalOutput cmd_eval(const RunConfig& config);

/// Loaders for existing stage output; throw ArtifactMissing naming the producing command.
IngestOutput load_ingest(const RunConfig& config);
DlOutput load_dl(const RunConfig& config);
AttackOutput load_attack(const RunConfig& config);
DetectorOutput load_detector_stage(const RunConfig& config);
LsOutput load_ls_stage(const RunConfig& config);

/// Report files (CSV and JSON) written by `run` and `eval`, relative to output_dir.
std::vector<std::string> report_files(const RunConfig& config);

}  // namespace dllids
