#pragma once

// Synthetic NSL-KDD-format corpus for offline runs and tests.
//
// Records follow the 43-column KDDTrain+ layout and mimic the per-attack
// feature signatures of the real corpus (SYN floods with S0 flags and high
// serror rates, ICMP sweeps, REJ-heavy port scans, login-based R2L/U2R
// traffic, and benign HTTP/SMTP/FTP/DNS sessions). A configurable share of
// "low-and-slow" attacks and noisy benign sessions overlaps the two classes so
// a good classifier lands in the mid-90s rather than at 100%. Lines are
// unique, matching NSL-KDD's de-duplicated records.

#include "dllids/ingest.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dllids {

struct SynthConfig {
    std::size_t records = 25000;
    std::uint64_t seed = 1;
    double malicious_share = 0.47;
    double camouflage_share = 0.08;  // attacks drawn close to benign profiles
    double noisy_benign_share = 0.04;
};

std::vector<FlowRecord> synthesize_nslkdd(const SynthConfig& config);
void write_nslkdd(const std::vector<FlowRecord>& records, const std::string& path);

}  // namespace dllids
