#pragma once

#include "thz/channel.hpp"
#include "thz/impairments.hpp"

#include <string>

namespace thz {

struct ChainSpec {
    bool dac = false, adc = false;
    bool iq_tx = false, iq_rx = false;
    bool pn_tx = false, pn_rx = false;
    bool shifter_tx = false, shifter_rx = false;
    bool pa_nonlinear = false;
    bool thermal_noise = true;
    /// false drops every random draw (thermal, quantization and phase noise), keeping deterministic gains.
    bool stochastic = true;

    static ChainSpec ideal() { return {}; }
    static ChainSpec all() {
        ChainSpec c;
        c.dac = c.adc = c.iq_tx = c.iq_rx = c.pn_tx = c.pn_rx = c.shifter_tx = c.shifter_rx = c.pa_nonlinear = true;
        return c;
    }
    /// Scenario labels: ideal, dac+adc, iq, pn, shifters, pa, all.
    static ChainSpec scenario(const std::string& name) {
        ChainSpec c;
        if (name == "ideal") return c;
        if (name == "all") return all();
        if (name == "dac+adc") c.dac = c.adc = true;
        else if (name == "iq") c.iq_tx = c.iq_rx = true;
        else if (name == "pn") c.pn_tx = c.pn_rx = true;
        else if (name == "shifters") c.shifter_tx = c.shifter_rx = true;
        else if (name == "pa") c.pa_nonlinear = true;
        else throw ArgumentError("unknown scenario: " + name);
        return c;
    }
    bool any_impairment() const {
        return dac || adc || iq_tx || iq_rx || pn_tx || pn_rx || shifter_tx || shifter_rx || pa_nonlinear;
    }
};

/// Fixed channel, beamformers, frozen device errors and noise level of one simulated link.
struct LinkRealization {
    SystemConfig cfg;
    Channel channel;
    BeamformerSet bf;
    ImpairmentParams imp;
    double sigma2 = 0.0;  ///< noise power per receive antenna (mW), B times PSD
    double power_dbm = 0.0;
    std::uint64_t seed = 0;

    double pin_scalar() const { return bf.p_in(0); }
    /// G_PA W_BB^H W_RF^H H F_RF P_in F_BB.
    CMat effective() const {
        return bf.g_pa * (bf.w_bb.adjoint() * (bf.w_rf.adjoint() * channel.apply(bf.f_rf * (bf.p_in.cast<cd>().asDiagonal() * bf.f_bb))));
    }
    /// Expected per-symbol received energy after digital combining.
    double nominal_rx_energy(bool with_noise) const {
        double e = effective().squaredNorm();
        if (with_noise) e += sigma2 * (bf.w_rf * bf.w_bb).squaredNorm();
        return e;
    }
    LinkRealization with_power(double p_dbm) const {
        LinkRealization l = *this;
        l.bf = set_transmit_power(bf, p_dbm, imp.pa.small_signal_gain_db());
        l.power_dbm = p_dbm;
        return l;
    }
};

/// Builds a link from seed: channel, beamformers, IQ parameters, frozen shifter errors, noise level.
inline LinkRealization make_link(const SystemConfig& cfg, ChannelModel model, ImpairmentParams imp) {
    cfg.validate();
    Rng root(cfg.rng_seed);
    Rng ch_rng = root.child("channel");
    Rng dev_rng = root.child("device");
    LinkRealization l;
    l.cfg = cfg;
    l.seed = cfg.rng_seed;
    l.channel = build_channel(cfg, model, ch_rng);
    l.bf = design_beamformers(l.channel, cfg, imp.phase_bits);
    if (imp.iq_tx.g.size() != cfg.l_t)
        imp.iq_tx = IqImbalanceParams::draw(cfg.l_t, dev_rng, imp.iq_gain_lo, imp.iq_gain_hi, imp.iq_phase_max_deg);
    if (imp.iq_rx.g.size() != cfg.l_r)
        imp.iq_rx = IqImbalanceParams::draw(cfg.l_r, dev_rng, imp.iq_gain_lo, imp.iq_gain_hi, imp.iq_phase_max_deg);
    if (imp.shifter.e_f.rows() != cfg.n_t || imp.shifter.e_w.rows() != cfg.n_r)
        imp.shifter.freeze(cfg.n_t, cfg.l_t, cfg.n_r, cfg.l_r, dev_rng);
    l.imp = imp;
    if (cfg.noise_psd_mw_per_hz > 0.0) {
        l.sigma2 = cfg.noise_psd_mw_per_hz * cfg.bandwidth_hz;
    } else {
        const BeamformerSet a = set_transmit_power(l.bf, cfg.snr_anchor_power_dbm, imp.pa.small_signal_gain_db());
        const CMat hx = a.g_pa * l.channel.apply(a.f_rf * (a.p_in.cast<cd>().asDiagonal() * a.f_bb));
        l.sigma2 = hx.squaredNorm() / (cfg.n_s * db_to_lin(cfg.snr_anchor_db));
    }
    return l.with_power(cfg.transmit_power_dbm);
}

/// Independent random streams per stochastic subsystem.
struct ChainStreams {
    Rng dac, pn_tx, thermal, pn_rx, adc;
    explicit ChainStreams(const Rng& base)
        : dac(base.child("dac")), pn_tx(base.child("pn_tx")), thermal(base.child("thermal")),
          pn_rx(base.child("pn_rx")), adc(base.child("adc")) {}
};

/// Transmit chain from the digitally precoded block s1 = F_BB s (L_t x T) to the antenna signal (N_t x T).
inline CMat tx_chain_precoded(const CMat& s1, const ChainSpec& spec, const LinkRealization& link, ChainStreams& st) {
    CMat x = spec.dac ? aqnm_quantize(s1, link.imp.dac, st.dac, spec.stochastic) : s1;
    x = link.bf.p_in.cast<cd>().asDiagonal() * x;
    if (spec.iq_tx) x = iq_imbalance(x, link.imp.iq_tx);
    if (spec.pn_tx && spec.stochastic) x = phase_noise_apply(x, link.imp.pn_tx, st.pn_tx);
    x = spec.shifter_tx ? CMat(inject_shifter_errors(link.bf.f_rf, link.imp.shifter.e_f) * x) : CMat(link.bf.f_rf * x);
    return spec.pa_nonlinear ? rapp_pa(x, link.imp.pa) : CMat(link.bf.g_pa * x);
}

inline CMat tx_chain(const CMat& s, const ChainSpec& spec, const LinkRealization& link, ChainStreams& st) {
    if (s.rows() != link.cfg.n_s) throw ArgumentError("tx_chain: s must have N_s rows");
    return tx_chain_precoded(link.bf.f_bb * s, spec, link, st);
}

/// Receive chain up to the ADC output (L_r x T), before digital combining.
inline CMat rx_front(const CMat& x, const ChainSpec& spec, const LinkRealization& link, ChainStreams& st) {
    if (x.rows() != link.cfg.n_t) throw ArgumentError("rx_chain: x must have N_t rows");
    const CMat w = spec.shifter_rx ? inject_shifter_errors(link.bf.w_rf, link.imp.shifter.e_w) : link.bf.w_rf;
    CMat y = w.adjoint() * link.channel.apply(x);
    if (spec.thermal_noise && spec.stochastic && link.sigma2 > 0.0) {
        // W^H n with n ~ CN(0, sigma2 I) has covariance sigma2 W^H W; draw it via its Cholesky factor.
        const CMat cov = link.sigma2 * (w.adjoint() * w);
        const CMat lchol = cov.llt().matrixL();
        y += lchol * cgauss_matrix(y.rows(), y.cols(), 1.0, st.thermal);
    }
    if (spec.iq_rx) y = iq_imbalance(y, link.imp.iq_rx);
    if (spec.pn_rx && spec.stochastic) y = phase_noise_apply(y, link.imp.pn_rx, st.pn_rx);
    if (spec.adc) y = aqnm_quantize(y, link.imp.adc, st.adc, spec.stochastic);
    return y;
}

inline CMat rx_chain(const CMat& x, const ChainSpec& spec, const LinkRealization& link, ChainStreams& st) {
    return link.bf.w_bb.adjoint() * rx_front(x, spec, link, st);
}

/// Noise-free ideal reception G_PA W_BB^H W_RF^H H F_RF P_in F_BB s.
inline CMat ideal_rx(const CMat& s, const LinkRealization& link) { return link.effective() * s; }

/// Block AGC: scales each block of columns to the nominal received energy.
inline CMat receiver_agc(CMat y, const LinkRealization& link, bool with_noise = true) {
    const double target = link.nominal_rx_energy(with_noise);
    const Eigen::Index t = link.cfg.block_len;
    for (Eigen::Index j = 0; j < y.cols(); j += t) {
        CMat b = y.middleCols(j, std::min(t, y.cols() - j));
        normalize_block(b, target);
        y.middleCols(j, b.cols()) = b;
    }
    return y;
}

/// Left-multiplies by the inverse of the nominal effective matrix (pseudo-inverse if ill-conditioned).
inline CMat equalize(const CMat& y, const CMat& effective) {
    if (effective.rows() != effective.cols()) throw ArgumentError("equalize: effective matrix must be square");
    Eigen::JacobiSVD<CMat> svd(effective, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const RVec sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) == 0.0 || sv(sv.size() - 1) <= 1e-14 * sv(0))
        throw SingularError("equalize: effective channel is numerically singular");
    if (sv(0) / sv(sv.size() - 1) > 1e8) return effective.completeOrthogonalDecomposition().pseudoInverse() * y;
    return effective.partialPivLu().solve(y);
}

inline CMat equalize(const CMat& y, const LinkRealization& link) { return equalize(y, link.effective()); }

/// Per-stream SNR in dB: ||Hx||^2 / (T N_s sigma2).
inline double measure_snr(const LinkRealization& link, const CMat& x) {
    if (!(link.sigma2 > 0.0)) throw ArgumentError("measure_snr: noise variance must be positive");
    const double p = link.channel.apply(x).squaredNorm();
    return lin_to_db(p / (static_cast<double>(x.cols()) * link.cfg.n_s * link.sigma2));
}

}  // namespace thz
