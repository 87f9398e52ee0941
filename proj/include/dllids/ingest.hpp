#pragma once

// NSL-KDD record parsing and the 41 -> 128 feature encoding.
//
// Encoded layout (width 128):
//   [0, 35)     dynamic numeric features, min-max normalized (perturbable)
//   [35, 38)    protocol_type one-hot
//   [38, 108)   service one-hot
//   [108, 119)  flag one-hot
//   [119, 122)  scalar persistent features, min-max normalized
//   [122, 128)  zero padding

#include "dllids/util.hpp"

#include "json.hpp"

#include <array>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace dllids {

inline constexpr std::size_t kRawFeatureCount = 41;
inline constexpr std::size_t kNumericFeatureCount = 38;
inline constexpr std::size_t kEncodedWidth = 128;
inline constexpr std::size_t kDynamicCount = 35;
inline constexpr std::size_t kProtocolSlots = 3;
inline constexpr std::size_t kServiceSlots = 70;
inline constexpr std::size_t kFlagSlots = 11;

/// NSL-KDD column names in file order (41 features).
const std::array<std::string, kRawFeatureCount>& feature_names();
/// Names of the 38 numeric features in file order.
const std::array<std::string, kNumericFeatureCount>& numeric_feature_names();
/// Position of a numeric feature within FlowRecord::numeric; throws for unknown names.
std::size_t numeric_feature_index(const std::string& name);
/// protocol_type, service, flag, land, is_host_login, su_attempted
std::vector<std::string> default_persistent_set();

struct FlowRecord {
    std::string protocol_type;
    std::string service;
    std::string flag;
    std::array<double, kNumericFeatureCount> numeric{};  // file order, categoricals removed
    std::string label;
    int difficulty = 0;

    double value(const std::string& numeric_name) const;
};

/// Parses one 43-column line. `line_no` is only used in error messages.
FlowRecord parse_record(std::string_view line, std::size_t line_no);
/// Reads an NSL-KDD text file (KDDTrain+.txt layout). Blank lines are skipped.
std::vector<FlowRecord> parse_nslkdd(const std::string& path);
std::string format_record(const FlowRecord& r);

struct LayoutEntry {
    std::string feature;  // raw feature name, or "padding"
    std::string kind;     // dynamic | onehot | scalar | padding
    std::size_t offset = 0;
    std::size_t width = 0;
};

class FeatureEncoder {
public:
    std::vector<std::string> protocol_vocab;
    std::vector<std::string> service_vocab;
    std::vector<std::string> flag_vocab;
    std::array<double, kNumericFeatureCount> min{};
    std::array<double, kNumericFeatureCount> max{};
    std::vector<std::string> persistent;
    std::vector<LayoutEntry> layout;
    std::vector<std::size_t> dynamic_dims;  // encoded positions of the dynamic features

    std::size_t width() const { return kEncodedWidth; }
    Mask mask() const;
    std::string mask_digest() const;

    nlohmann::json to_json() const;
    static FeatureEncoder from_json(const nlohmann::json& j);
    std::string digest() const { return digest_hex(to_json().dump()); }
};

enum class Label : int { Benign = 0, Malicious = 1 };

struct EncodedSample {
    Vector features;
    int label = 0;  // 0 benign, 1 malicious
    Mask mask;
};

struct Dataset {
    std::vector<EncodedSample> samples;
    std::shared_ptr<const FeatureEncoder> encoder;
    std::string tag;     // train | test | ...
    std::string source;  // originating file(s)

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    /// Features as rows.
    Matrix feature_matrix() const;
    std::vector<int> labels() const;
};

FeatureEncoder fit_encoder(const std::vector<FlowRecord>& records,
                           const std::vector<std::string>& persistent_set = default_persistent_set());
EncodedSample encode(const FeatureEncoder& encoder, const FlowRecord& record);
int label_of(const std::string& attack_name);

/// Disjoint seeded draw of train_n and test_n indices out of n.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_indices(std::size_t n, std::size_t train_n, std::size_t test_n, std::uint64_t seed);

std::pair<Dataset, Dataset> split(const std::vector<EncodedSample>& samples,
                                  std::shared_ptr<const FeatureEncoder> encoder, std::size_t train_n,
                                  std::size_t test_n, std::uint64_t seed);

void save_encoder(const FeatureEncoder& enc, const std::string& path, const Meta& meta = {});
FeatureEncoder load_encoder(const std::string& path);

/// CSV with a `#` metadata line (tag, source, mask digest), a column header,
/// then 128 feature columns + label per row.
void save_dataset_csv(const Dataset& ds, const std::string& path, const Meta& meta = {});
Dataset load_dataset_csv(const std::string& path, std::shared_ptr<const FeatureEncoder> encoder);

}  // namespace dllids
