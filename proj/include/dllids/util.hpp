#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dllids {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Mask = std::vector<bool>;
using Rng = std::mt19937_64;
/// Provenance fields embedded in persisted artifacts (config digest, seed, ...).
using Meta = std::map<std::string, std::string>;

/// Malformed or unusable input data (CLI exit code 2).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A persisted artifact could not be parsed or has an incompatible version.
class FormatError : public DataError {
public:
    using DataError::DataError;
};

/// An upstream stage artifact is absent (CLI exit code 3).
class ArtifactMissing : public std::runtime_error {
public:
    ArtifactMissing(const std::string& what, std::string producer)
        : std::runtime_error(what), producer_(std::move(producer)) {}
    const std::string& producer() const { return producer_; }

private:
    std::string producer_;
};

// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);
std::string digest_hex(std::string_view bytes);
std::string file_digest(const std::string& path);

/// Shortest text that parses back to the identical double.
std::string format_double(double v);
double parse_double(std::string_view text);

/// "# key=value key=value" header line used by the CSV artifacts. Values must not contain spaces.
std::string meta_line(const Meta& meta);
Meta parse_meta_line(std::string_view line);
/// Throws FormatError unless meta["format"] == format and meta["version"] == version.
void require_format(const Meta& meta, const std::string& format, const std::string& version,
                    const std::string& path);

std::vector<std::string> split_line(std::string_view line, char sep);
std::string trim(std::string_view s);

/// Uniform integer in [0, n) independent of the standard library's distribution code.
std::size_t uniform_index(Rng& rng, std::size_t n);
/// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

/// Runs fn(i) for i in [0, n). Each index is processed exactly once; callers
/// write results into pre-sized slots so output order never depends on scheduling.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

inline double sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace dllids
