#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace thz {

using cd = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

inline constexpr double kPi = std::numbers::pi;

struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct SingularError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct PolicyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DependencyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TrainingFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Seeded mt19937_64 source. Uniform and normal draws are computed in-library
/// (53-bit mantissa, Box-Muller) so sequences are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), eng_(splitmix64(seed)) {}

    std::uint64_t seed() const { return seed_; }
    static constexpr const char* algorithm() { return "mt19937_64+splitmix64"; }

    /// Independent stream keyed by label; does not advance this stream.
    Rng child(std::string_view label) const { return Rng(splitmix64(seed_ ^ fnv1a(label))); }
    Rng child(std::uint64_t index) const { return Rng(splitmix64(seed_ + 0x632BE59BD9B4E019ULL * (index + 1))); }

    std::uint64_t next_u64() { return eng_(); }

    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t below(std::uint64_t n) { return n ? eng_() % n : 0; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * kPi * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * kPi * u2);
    }
    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Circularly symmetric complex Gaussian with E|z|^2 = variance.
    cd cgauss(double variance) {
        const double s = std::sqrt(variance / 2.0);
        const double re = normal();
        const double im = normal();
        return {s * re, s * im};
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

struct SystemConfig {
    int n_t = 256;
    int n_r = 256;
    int l_t = 4;
    int l_r = 4;
    int n_s = 4;
    int block_len = 256;  ///< symbols per block (AQNM statistics, power normalization)
    double bandwidth_hz = 10e9;
    double transmit_power_dbm = 15.0;
    double noise_psd_mw_per_hz = 0.0;  ///< <= 0 selects calibration against the SNR anchor
    double snr_anchor_power_dbm = 5.0;
    double snr_anchor_db = 7.95;
    std::uint64_t rng_seed = 1;

    void validate() const {
        if (n_s < 1 || l_t < n_s || l_r < n_s || l_t >= n_t || l_r >= n_r)
            throw ArgumentError("SystemConfig requires N_s <= L_t < N_t and N_s <= L_r < N_r");
        if (block_len < 1) throw ArgumentError("block_len must be positive");
        if (!(bandwidth_hz > 0.0)) throw ArgumentError("bandwidth_hz must be positive");
    }
};

inline CMat cgauss_matrix(Eigen::Index rows, Eigen::Index cols, double variance, Rng& rng) {
    if (variance < 0.0) throw ArgumentError("cgauss_matrix: negative variance");
    CMat m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.cgauss(variance);
    return m;
}

template <typename Derived>
double frobenius_norm_sq(const Eigen::MatrixBase<Derived>& a) {
    return a.squaredNorm();
}

/// Minimum-norm least-squares solution of A x = b.
inline CMat least_squares(const CMat& a, const CMat& b) {
    return a.completeOrthogonalDecomposition().solve(b);
}

inline double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }
inline double lin_to_db(double x) { return 10.0 * std::log10(x); }
inline double deg2rad(double d) { return d * kPi / 180.0; }

/// Scales z in place so that its mean column energy equals target; returns the scale.
inline double normalize_block(CMat& z, double target) {
    const double e = z.squaredNorm();
    if (e <= 0.0) return 1.0;
    const double c = std::sqrt(target * static_cast<double>(z.cols()) / e);
    z *= c;
    return c;
}

}  // namespace thz
