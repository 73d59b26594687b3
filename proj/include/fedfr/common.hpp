#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace fedfr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Norms below this are treated as degenerate rather than normalized.
inline constexpr double kNormEpsilon = 1e-12;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape/precondition violations on numeric inputs.
struct DimensionError : Error {
    using Error::Error;
};

// Inputs that cannot be normalized (norm <= kNormEpsilon) or labels out of range.
struct DegenerateInputError : Error {
    using Error::Error;
};

// Non-finite values encountered during training; carries round/client context.
struct NumericError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct CheckpointError : Error {
    using Error::Error;
};
struct MalformedHeaderError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct TruncatedPayloadError : CheckpointError {
    using CheckpointError::CheckpointError;
};
// Header dims disagree with the destination structure (config or payload).
struct ShapeMismatchError : CheckpointError {
    using CheckpointError::CheckpointError;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& key_path, const std::string& what)
        : Error(key_path + ": " + what), key(key_path) {}
    std::string key;
};

// splitmix64; used to derive independent per-(round, client, epoch) streams
// so results do not depend on thread scheduling.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t h = splitmix64(base ^ 0x5851f42d4c957f2dULL);
    for (std::uint64_t t : tags) h = splitmix64(h ^ t);
    return h;
}

// Deterministic RNG with self-contained uniform/gaussian transforms; the
// stream depends only on the seed, never on libstdc++ distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : s_(seed == 0 ? 0x9e3779b97f4a7c15ULL : seed) {
        // warm up splitmix state
        for (int i = 0; i < 4; ++i) next_u64();
    }

    std::uint64_t next_u64() {
        s_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = s_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_index(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

    // Box-Muller with one cached value.
    double gaussian();

    Vector gaussian_vector(int dim);

    // Uniform on the unit sphere in R^dim.
    Vector unit_vector(int dim);

private:
    std::uint64_t s_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace fedfr
