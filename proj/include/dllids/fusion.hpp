#pragma once

// Dual-verdict routing: the DL model answers unless the LID detector flags
// the input, in which case the label-spreading model decides.

#include "dllids/aedetect.hpp"
#include "dllids/labelspread.hpp"
#include "dllids/lid.hpp"
#include "dllids/mlp.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace dllids {

enum class VerdictSource { DL, ML };

std::string to_string(VerdictSource s);

struct FusionVerdict {
    bool is_adversarial = false;
    bool is_malicious = false;
    VerdictSource source = VerdictSource::DL;
    Vector dl_probs;
    double detector_score = 0.0;
    std::optional<Vector> ls_scores;
};

/// Replaces the LID detector, e.g. with a stub in tests: (features, trace) -> detection.
using DetectorFn = std::function<Detection(const Vector& features, const ActivationTrace& trace)>;

struct Pipeline {
    std::shared_ptr<const MlpModel> model;
    std::shared_ptr<const ReferenceSample> reference;
    std::shared_ptr<const AeDetector> detector;
    std::shared_ptr<const LabelSpreadModel> ls;  // absent: flagged inputs are reported malicious
    DetectorFn detector_override;
};

struct FusionStats {
    std::size_t ls_invocations = 0;  // propagate calls
    std::size_t ls_queries = 0;      // rows sent to the LS model
};

FusionVerdict classify(const Pipeline& pipeline, const Vector& x, FusionStats* stats = nullptr);

/// Flagged rows are sent to the LS model as one transductive query batch.
std::vector<FusionVerdict> classify_batch(const Pipeline& pipeline, const Matrix& rows, FusionStats* stats = nullptr,
                                          unsigned threads = 1);

/// One JSON object per line.
void write_verdicts_jsonl(const std::vector<FusionVerdict>& verdicts, const std::string& path);

}  // namespace dllids
