#pragma once

#include "thz/core.hpp"

#include <limits>
#include <vector>

namespace thz {

enum class BetaFormula { exponential, literal_inverse_square };

struct AqnmParams {
    int bits = 4;
    double alpha = 1.0;
    double beta = 0.0;

    /// beta = (pi*sqrt(3)/2) * 2^(-2b) by default; the literal variant uses b^(-2).
    /// bits <= 0 stands for an ideal converter.
    static AqnmParams from_bits(int b, BetaFormula f = BetaFormula::exponential) {
        AqnmParams p;
        p.bits = b;
        if (b <= 0) return p;
        const double c = kPi * std::sqrt(3.0) / 2.0;
        p.beta = f == BetaFormula::exponential ? c * std::ldexp(1.0, -2 * b) : c / (double(b) * b);
        p.alpha = 1.0 - p.beta;
        return p;
    }
};

/// alpha*x + q, q ~ CN(0, alpha*beta*rowpower) with row power averaged over the block.
/// With stochastic=false only the deterministic gain alpha is applied.
inline CMat aqnm_quantize(const CMat& x, const AqnmParams& p, Rng& rng, bool stochastic = true) {
    CMat out = p.alpha * x;
    if (!stochastic || p.beta == 0.0 || x.cols() == 0) return out;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double v = p.alpha * p.beta * x.row(i).squaredNorm() / static_cast<double>(x.cols());
        for (Eigen::Index j = 0; j < x.cols(); ++j) out(i, j) += rng.cgauss(v);
    }
    return out;
}

struct IqImbalanceParams {
    RVec g;    ///< amplitude mismatch per chain
    RVec phi;  ///< phase mismatch per chain (rad)

    static IqImbalanceParams ideal(int lanes) { return {RVec::Ones(lanes), RVec::Zero(lanes)}; }
    static IqImbalanceParams draw(int lanes, Rng& rng, double g_lo, double g_hi, double phi_max_deg) {
        IqImbalanceParams p{RVec(lanes), RVec(lanes)};
        for (int l = 0; l < lanes; ++l) p.g(l) = rng.uniform(g_lo, g_hi);
        for (int l = 0; l < lanes; ++l) p.phi(l) = deg2rad(rng.uniform(-phi_max_deg, phi_max_deg));
        return p;
    }
    CVec gamma1() const {
        CVec r(g.size());
        for (Eigen::Index l = 0; l < g.size(); ++l) r(l) = (1.0 + std::polar(g(l), phi(l))) / 2.0;
        return r;
    }
    CVec gamma2() const {
        CVec r(g.size());
        for (Eigen::Index l = 0; l < g.size(); ++l) r(l) = (1.0 - std::polar(g(l), phi(l))) / 2.0;
        return r;
    }
};

inline CMat iq_imbalance(const CMat& x, const IqImbalanceParams& p) {
    if (x.rows() != p.g.size()) throw ArgumentError("iq_imbalance: row count does not match chain count");
    const CVec g1 = p.gamma1(), g2 = p.gamma2();
    return g1.asDiagonal() * x + g2.asDiagonal() * x.conjugate();
}

struct PhaseNoiseParams {
    double var_rad2 = 0.0;
};

inline CMat phase_noise_apply(const CMat& x, const PhaseNoiseParams& p, Rng& rng) {
    if (p.var_rad2 == 0.0) return x;
    CMat out(x.rows(), x.cols());
    const double sd = std::sqrt(p.var_rad2);
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        for (Eigen::Index i = 0; i < x.rows(); ++i) out(i, j) = x(i, j) * std::polar(1.0, sd * rng.normal());
    return out;
}

struct ShifterErrorParams {
    double amp_spread_db = 1.2;       ///< variance (dB^2) unless amp_spread_is_std
    bool amp_spread_is_std = false;
    double phase_spread_deg = 10.2;   ///< standard deviation unless phase_spread_is_var
    bool phase_spread_is_var = false;
    double amp_db_divisor = 10.0;     ///< 10^(E_a/divisor); 20 gives the amplitude-dB convention
    CMat e_f;                         ///< N_t x L_t, frozen
    CMat e_w;                         ///< N_r x L_r, frozen

    double amp_sd_db() const { return amp_spread_is_std ? amp_spread_db : std::sqrt(amp_spread_db); }
    double phase_sd_deg() const { return phase_spread_is_var ? std::sqrt(phase_spread_deg) : phase_spread_deg; }

    CMat draw_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) const {
        CMat e(rows, cols);
        const double sa = amp_sd_db(), sp = deg2rad(phase_sd_deg());
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) {
                const double ea = sa * rng.normal();
                const double ep = sp * rng.normal();
                e(i, j) = std::polar(std::pow(10.0, ea / amp_db_divisor), ep);
            }
        return e;
    }
    /// Draws E_F and E_W once; they stay fixed for the device instance.
    void freeze(int n_t, int l_t, int n_r, int l_r, Rng& rng) {
        e_f = draw_matrix(n_t, l_t, rng);
        e_w = draw_matrix(n_r, l_r, rng);
    }
};

inline CMat inject_shifter_errors(const CMat& w, const CMat& e) {
    if (w.rows() != e.rows() || w.cols() != e.cols()) throw ArgumentError("inject_shifter_errors: shape mismatch");
    return w.cwiseProduct(e);
}

struct RappPaParams {
    double alpha_a = 4.708;
    double x_sat = 0.663;
    double sigma_a = 1.603;
    double alpha_phi = -740.2;
    double beta_phi = 0.298;
    double q1 = 1.945;
    double q2 = 1.797;
    bool am_pm_degrees = true;
    /// Input power (mW) that maps to unit amplitude in the normalized Rapp curves.
    double drive_ref_mw = 0.5;

    double small_signal_gain_db() const { return 20.0 * std::log10(alpha_a); }
    double ref_amplitude() const { return std::sqrt(drive_ref_mw); }

    /// Normalized AM-AM curve.
    double am_am(double a) const {
        return alpha_a * a / std::pow(1.0 + std::pow(alpha_a * a / x_sat, 2.0 * sigma_a), 1.0 / (2.0 * sigma_a));
    }
    /// Normalized AM-PM curve in radians.
    double am_pm(double a) const {
        const double v = alpha_phi * std::pow(a, q1) / (1.0 + std::pow(a / beta_phi, q2));
        return am_pm_degrees ? deg2rad(v) : v;
    }
    cd apply(cd x) const {
        const double r = ref_amplitude();
        const double a = std::abs(x) / r;
        if (a == 0.0) return {0.0, 0.0};
        return std::polar(r * am_am(a), std::arg(x) + am_pm(a));
    }
};

inline CMat rapp_pa(const CMat& x, const RappPaParams& p) {
    return x.unaryExpr([&](cd v) { return p.apply(v); });
}

inline CMat linear_pa(const CMat& x, double gain_db) { return std::pow(10.0, gain_db / 20.0) * x; }

struct ImpairmentParams {
    AqnmParams dac = AqnmParams::from_bits(4);
    AqnmParams adc = AqnmParams::from_bits(4);
    IqImbalanceParams iq_tx, iq_rx;
    double iq_gain_lo = 0.9, iq_gain_hi = 1.1, iq_phase_max_deg = 20.0;
    PhaseNoiseParams pn_tx{1e-2}, pn_rx{1e-2};
    ShifterErrorParams shifter;
    int phase_bits = 6;
    RappPaParams pa;
};

}  // namespace thz
