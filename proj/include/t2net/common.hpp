#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace t2net {

// ----------------------------------------------------------------------------
// Error taxonomy. Everything user-facing maps onto one of these; the CLI
// translates them to stable exit codes.
// ----------------------------------------------------------------------------

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shape/geometry violations (mismatched dims, non-power-of-two grids, ...).
struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

/// Out-of-range index access (reports where and what).
struct BoundsError : Error {
    explicit BoundsError(const std::string& msg) : Error(msg) {}
};

/// API contract violations (non-scalar loss, missing gradient, zero target).
struct ContractError : Error {
    explicit ContractError(const std::string& msg) : Error(msg) {}
};

/// Invalid scalar parameters (infeasible mask budget, bad scale, ...).
struct ParameterError : Error {
    explicit ParameterError(const std::string& msg) : Error(msg) {}
};

/// Corrupt or unreadable artifact files (checkpoints, datasets).
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

/// Numeric failure during iterative computation; carries the failing step.
struct NumericError : Error {
    int step = -1;
    NumericError(const std::string& msg, int step_) : Error(msg), step(step_) {}
};

// ----------------------------------------------------------------------------
// Shape helpers
// ----------------------------------------------------------------------------

inline std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

// ----------------------------------------------------------------------------
// Deterministic RNG. splitmix64: identical streams on every platform and
// compiler, unlike the distributions in <random>.
// ----------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

private:
    std::uint64_t state_;
};

/// FNV-1a, used to derive per-name parameter seeds.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Stateless mix of a base seed with a stream index (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace t2net
