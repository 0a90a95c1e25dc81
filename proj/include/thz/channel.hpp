#pragma once

#include "thz/core.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace thz {

enum class GainKind { unit_modulus, complex_gaussian };
enum class ChannelNorm { unit_frobenius, none };

struct ChannelModel {
    int n_paths = 4;
    GainKind gain_kind = GainKind::unit_modulus;
    ChannelNorm normalization = ChannelNorm::unit_frobenius;
    double max_angle_rad = kPi / 3.0;
    /// Minimum spacing of sin(angle) between paths, in units of 1/N.
    double min_separation = 8.0;
    // Filled by build_channel; may be preset to pin a realization.
    std::vector<cd> gains;
    std::vector<double> aod;
    std::vector<double> aoa;
};

/// ULA steering vector with half-wavelength spacing, unit norm.
inline CVec steering(int n, double angle) {
    CVec a(n);
    const double k = kPi * std::sin(angle);
    const double s = 1.0 / std::sqrt(static_cast<double>(n));
    for (int i = 0; i < n; ++i) a(i) = std::polar(s, k * i);
    return a;
}

/// Steering vector with every phase rounded onto the 2^bits grid.
inline CVec quantized_steering(int n, double angle, int bits) {
    CVec a(n);
    const double k = kPi * std::sin(angle);
    const double s = 1.0 / std::sqrt(static_cast<double>(n));
    const double step = 2.0 * kPi / std::ldexp(1.0, bits);
    for (int i = 0; i < n; ++i) {
        double ph = std::fmod(k * i, 2.0 * kPi);
        if (ph < 0) ph += 2.0 * kPi;
        ph = std::round(ph / step) * step;
        a(i) = std::polar(s, ph);
    }
    return a;
}

/// Sparse geometric channel H = A_r diag(g) A_t^H, kept in factored form.
struct Channel {
    CMat a_t;  ///< N_t x P
    CMat a_r;  ///< N_r x P
    CVec g;    ///< P path gains (normalization folded in)
    std::vector<double> aod, aoa;

    int n_t() const { return static_cast<int>(a_t.rows()); }
    int n_r() const { return static_cast<int>(a_r.rows()); }
    int n_paths() const { return static_cast<int>(g.size()); }

    CMat apply(const CMat& x) const { return a_r * (g.asDiagonal() * (a_t.adjoint() * x)); }
    CMat dense() const { return a_r * g.asDiagonal() * a_t.adjoint(); }
};

namespace detail {
inline std::vector<double> draw_angles(Rng& rng, int p, double max_angle, double min_sep) {
    for (int attempt = 0; attempt < 100000; ++attempt) {
        std::vector<double> a(p);
        for (auto& v : a) v = rng.uniform(-max_angle, max_angle);
        std::vector<double> s(p);
        std::transform(a.begin(), a.end(), s.begin(), [](double v) { return std::sin(v); });
        std::sort(s.begin(), s.end());
        bool ok = true;
        for (int i = 1; i < p; ++i) ok = ok && (s[i] - s[i - 1] > min_sep);
        if (ok) return a;
    }
    throw ArgumentError("build_channel: cannot place paths with the requested separation");
}
}  // namespace detail

inline Channel build_channel(const SystemConfig& cfg, ChannelModel& model, Rng& rng) {
    const int p = model.n_paths;
    if (p < 1) throw ArgumentError("build_channel: n_paths must be >= 1");
    if (static_cast<int>(model.aod.size()) != p)
        model.aod = detail::draw_angles(rng, p, model.max_angle_rad, model.min_separation / cfg.n_t);
    if (static_cast<int>(model.aoa.size()) != p)
        model.aoa = detail::draw_angles(rng, p, model.max_angle_rad, model.min_separation / cfg.n_r);
    if (static_cast<int>(model.gains.size()) != p) {
        model.gains.resize(p);
        for (auto& g : model.gains) {
            g = rng.cgauss(1.0);
            if (model.gain_kind == GainKind::unit_modulus) g /= std::abs(g);
        }
    }
    Channel ch;
    ch.aod = model.aod;
    ch.aoa = model.aoa;
    ch.a_t.resize(cfg.n_t, p);
    ch.a_r.resize(cfg.n_r, p);
    ch.g.resize(p);
    for (int l = 0; l < p; ++l) {
        ch.a_t.col(l) = steering(cfg.n_t, model.aod[l]);
        ch.a_r.col(l) = steering(cfg.n_r, model.aoa[l]);
        ch.g(l) = model.gains[l];
    }
    if (model.normalization == ChannelNorm::unit_frobenius) {
        const CMat gram = (ch.a_r.adjoint() * ch.a_r).cwiseProduct((ch.a_t.adjoint() * ch.a_t).conjugate());
        const double fro2 = std::real(ch.g.dot(gram * ch.g));
        ch.g *= std::sqrt(static_cast<double>(cfg.n_t) * cfg.n_r / fro2);
    }
    return ch;
}

struct BeamformerSet {
    CMat f_bb;  ///< L_t x N_s
    CMat f_rf;  ///< N_t x L_t
    RVec p_in;  ///< diagonal of P_in (amplitude), L_t
    CMat w_rf;  ///< N_r x L_r
    CMat w_bb;  ///< L_r x N_s
    double g_pa = 1.0;  ///< linear PA amplitude gain

    CMat p_in_mat() const { return p_in.cast<cd>().asDiagonal(); }
    /// W_BB^H W_RF^H H F_RF F_BB (no P_in, no G_PA).
    CMat effective(const Channel& h) const {
        return w_bb.adjoint() * (w_rf.adjoint() * h.apply(f_rf * f_bb));
    }
};

/// Analog beams toward the strongest paths, digital stages from the SVD of the effective channel.
inline BeamformerSet design_beamformers(const Channel& h, const SystemConfig& cfg, int phase_bits) {
    const int p = h.n_paths();
    std::vector<int> order(p);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return std::abs(h.g(a)) > std::abs(h.g(b)); });
    auto pick = [&](int l, const std::vector<double>& ang, int lanes) {
        if (l < p) return ang[order[l]];
        // Fewer paths than chains: fill with evenly spaced beams.
        return std::asin(-1.0 + (2.0 * l + 1.0) / lanes);
    };
    BeamformerSet b;
    b.f_rf.resize(cfg.n_t, cfg.l_t);
    b.w_rf.resize(cfg.n_r, cfg.l_r);
    for (int l = 0; l < cfg.l_t; ++l) b.f_rf.col(l) = quantized_steering(cfg.n_t, pick(l, h.aod, cfg.l_t), phase_bits);
    for (int l = 0; l < cfg.l_r; ++l) b.w_rf.col(l) = quantized_steering(cfg.n_r, pick(l, h.aoa, cfg.l_r), phase_bits);

    const CMat heff = b.w_rf.adjoint() * h.apply(b.f_rf);
    Eigen::JacobiSVD<CMat> svd(heff, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const RVec sv = svd.singularValues();
    if (sv.size() < cfg.n_s || sv(cfg.n_s - 1) <= 1e-10 * sv(0))
        throw SingularError("design_beamformers: effective channel rank below N_s");
    const CMat v = svd.matrixV().leftCols(cfg.n_s);
    const CMat u = svd.matrixU().leftCols(cfg.n_s);
    b.f_bb = v * std::sqrt(cfg.n_s / (b.f_rf * v).squaredNorm());
    b.w_bb = u * std::sqrt(cfg.n_s / (b.w_rf * u).squaredNorm());
    b.p_in = RVec::Ones(cfg.l_t);
    return b;
}

/// Uniform P_in so the ideal-linear radiated power equals p_dbm milliwatts.
inline BeamformerSet set_transmit_power(BeamformerSet b, double p_dbm, double pa_linear_gain_db) {
    if (!std::isfinite(p_dbm)) throw ArgumentError("set_transmit_power: non-finite power");
    b.g_pa = std::pow(10.0, pa_linear_gain_db / 20.0);
    const double target_mw = std::pow(10.0, p_dbm / 10.0);
    const double amp = std::sqrt(target_mw / (b.g_pa * b.g_pa * (b.f_rf * b.f_bb).squaredNorm()));
    b.p_in = RVec::Constant(b.f_bb.rows(), amp);
    return b;
}

}  // namespace thz
