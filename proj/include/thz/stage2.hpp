#pragma once

#include "thz/stage1.hpp"

namespace thz {

/// Rescales z to mean column energy target; the cache keeps what backward needs.
struct BlockNorm {
    CMat z;
    double c = 1.0;
    double e = 0.0;

    CMat forward(const CMat& in, double target) {
        z = in;
        e = in.squaredNorm();
        c = e > 0.0 ? std::sqrt(target * static_cast<double>(in.cols()) / e) : 1.0;
        return c * in;
    }
    CMat backward(const CMat& g) const {
        if (e <= 0.0) return g;
        double dot = 0.0;
        for (Eigen::Index k = 0; k < z.size(); ++k) dot += std::real(std::conj(g(k)) * z(k));
        return c * g - (c * dot / e) * z;
    }
};

/// Bank of L_t sub-NNs acting on F_BB s; the output block always has mean column energy N_s.
class TxCompensator {
public:
    TxCompensator() = default;
    TxCompensator(const LinkMaps& maps, int nh) : bank_(static_cast<int>(maps.f_rf_pin.cols()), nh), a1_(maps.a1),
                                                  target_(maps.n_s), power_dbm_(maps.power_dbm) {}

    struct Cache {
        CMat u;
        std::vector<double> h;
        BlockNorm norm;
    };

    void init(Rng& rng) { bank_.init(rng); }
    SubNNBank& bank() { return bank_; }
    const SubNNBank& bank() const { return bank_; }
    double power_dbm() const { return power_dbm_; }
    double target_energy() const { return target_; }
    std::size_t param_count() const { return bank_.param_count(); }

    CMat forward(const CMat& s1, Cache* c = nullptr) const {
        CMat u = s1 / a1_;
        const CMat z = a1_ * bank_.forward(u, c ? &c->h : nullptr);
        BlockNorm local;
        BlockNorm& n = c ? c->norm : local;
        CMat out = n.forward(z, target_);
        if (c) c->u = std::move(u);
        return out;
    }
    CMat backward(const Cache& c, const CMat& g_out) {
        return bank_.backward(c.u, c.h, a1_ * c.norm.backward(g_out)) / a1_;
    }

private:
    SubNNBank bank_;
    double a1_ = 1.0;
    double target_ = 1.0;
    double power_dbm_ = 0.0;
};

/// Bank of L_r sub-NNs acting on the RF-chain outputs; the combined output is held at the nominal energy.
class RxCompensator {
public:
    RxCompensator() = default;
    RxCompensator(const LinkMaps& maps, int nh) : bank_(static_cast<int>(maps.w_h.rows()), nh), w_bb_h_(maps.w_bb_h),
                                                  a3_(maps.a3), target_(maps.nominal_energy()), power_dbm_(maps.power_dbm) {}

    struct Cache {
        CMat u;
        std::vector<double> h;
        BlockNorm norm;
    };

    void init(Rng& rng) { bank_.init(rng); }
    SubNNBank& bank() { return bank_; }
    const SubNNBank& bank() const { return bank_; }
    double power_dbm() const { return power_dbm_; }
    double target_energy() const { return target_; }
    std::size_t param_count() const { return bank_.param_count(); }

    /// Input: L_r x B pre-combiner block; output: N_s x B combined block.
    CMat forward(const CMat& z, Cache* c = nullptr) const {
        CMat u = z / a3_;
        const CMat y = w_bb_h_ * (a3_ * bank_.forward(u, c ? &c->h : nullptr));
        BlockNorm local;
        BlockNorm& n = c ? c->norm : local;
        CMat out = n.forward(y, target_);
        if (c) c->u = std::move(u);
        return out;
    }
    void backward(const Cache& c, const CMat& g_out) {
        bank_.backward(c.u, c.h, a3_ * (w_bb_h_.adjoint() * c.norm.backward(g_out)));
    }

private:
    SubNNBank bank_;
    CMat w_bb_h_;
    double a3_ = 1.0;
    double target_ = 1.0;
    double power_dbm_ = 0.0;
};

/// Fully connected 8-10-10-10-8 baseline over stacked (re, im) of the four streams.
class DDnnBaseline {
public:
    DDnnBaseline() = default;
    explicit DDnnBaseline(const LinkMaps& maps, std::vector<int> hidden = {10, 10, 10})
        : kappa_(maps.kappa), n_s_(maps.n_s), power_dbm_(maps.power_dbm) {
        std::vector<int> sizes{2 * n_s_};
        sizes.insert(sizes.end(), hidden.begin(), hidden.end());
        sizes.push_back(2 * n_s_);
        mlp_ = Mlp(sizes);
    }

    void init(Rng& rng) { mlp_.init(rng); }
    Mlp& mlp() { return mlp_; }
    const Mlp& mlp() const { return mlp_; }
    std::size_t param_count() const { return mlp_.param_count(); }
    double power_dbm() const { return power_dbm_; }

    RMat stack(const CMat& y) const {
        RMat x(2 * n_s_, y.cols());
        x.topRows(n_s_) = y.real() / kappa_;
        x.bottomRows(n_s_) = y.imag() / kappa_;
        return x;
    }
    CMat unstack(const RMat& o) const {
        CMat y(n_s_, o.cols());
        y.real() = o.topRows(n_s_) * kappa_;
        y.imag() = o.bottomRows(n_s_) * kappa_;
        return y;
    }
    CMat forward(const CMat& y) const { return unstack(mlp_.forward(stack(y))); }

private:
    Mlp mlp_;
    double kappa_ = 1.0;
    int n_s_ = 4;
    double power_dbm_ = 0.0;
};

inline void require_same_power(double a, double b, const char* what) {
    if (std::abs(a - b) > 1e-9) throw PolicyError(std::string(what) + ": compensator and frozen model were built for different powers");
}

/// Trains NN_ct through the frozen surrogate toward the ideal receptions.
/// Surrogate outputs pass through the same block AGC the receiver applies.
inline TrainingReport train_tx_comp(TxCompensator& comp, StructuredDNN& frozen, const CMat& s1, const CMat& y_i,
                                    const TrainingConfig& tc) {
    require_same_power(comp.power_dbm(), frozen.power_dbm(), "train_tx_comp");
    const std::uint64_t before = params_checksum(frozen.params());
    const double kappa = frozen.maps().kappa, nominal = frozen.maps().nominal_energy();
    Optimizer opt({&comp.bank().params()}, tc.optimizer, tc.learning_rate);
    BlockNorm agc;
    const double baseline = normalized_mse(agc.forward(frozen.forward(s1), nominal), y_i, kappa);
    auto rep = minibatch_train(s1.cols(), tc, opt, [&](const std::vector<Eigen::Index>& cols) {
        const CMat x = gather_cols(s1, cols), t = gather_cols(y_i, cols);
        TxCompensator::Cache cc;
        StructuredDNN::Cache mc;
        BlockNorm an;
        const CMat y = an.forward(frozen.forward(comp.forward(x, &cc), &mc), nominal);
        const double scale = 1.0 / (static_cast<double>(y.size()) * kappa * kappa);
        comp.backward(cc, frozen.backward(mc, an.backward(2.0 * scale * (y - t))));
        return (y - t).squaredNorm() * scale;
    });
    for (auto* p : frozen.params()) p->zero_grad();
    if (params_checksum(frozen.params()) != before) throw TrainingFailure("train_tx_comp: frozen model changed");
    rep.baseline_loss = baseline;
    rep.param_count = comp.param_count();
    return rep;
}

/// Trains NN_cr on frozen-surrogate RF-chain outputs toward the ideal receptions.
inline TrainingReport train_rx_comp(RxCompensator& comp, StructuredDNN& frozen, const CMat& s1, const CMat& y_i,
                                    const TrainingConfig& tc) {
    require_same_power(comp.power_dbm(), frozen.power_dbm(), "train_rx_comp");
    const std::uint64_t before = params_checksum(frozen.params());
    const double kappa = frozen.maps().kappa;
    const CMat s6 = frozen.forward_inner(s1);
    BlockNorm agc;
    const double baseline = normalized_mse(agc.forward(frozen.maps().w_bb_h * s6, frozen.maps().nominal_energy()), y_i, kappa);
    Optimizer opt({&comp.bank().params()}, tc.optimizer, tc.learning_rate);
    auto rep = minibatch_train(s1.cols(), tc, opt, [&](const std::vector<Eigen::Index>& cols) {
        const CMat x = gather_cols(s6, cols), t = gather_cols(y_i, cols);
        RxCompensator::Cache cc;
        const CMat y = comp.forward(x, &cc);
        const double scale = 1.0 / (static_cast<double>(y.size()) * kappa * kappa);
        comp.backward(cc, 2.0 * scale * (y - t));
        return (y - t).squaredNorm() * scale;
    });
    if (params_checksum(frozen.params()) != before) throw TrainingFailure("train_rx_comp: frozen model changed");
    rep.baseline_loss = baseline;
    rep.param_count = comp.param_count();
    return rep;
}

/// Trains the D-DNN baseline directly on (AGC-normalized) impaired receptions.
inline TrainingReport train_ddnn(DDnnBaseline& net, const CMat& y_in, const CMat& y_i, double kappa, const TrainingConfig& tc) {
    Optimizer opt({&net.mlp().params()}, tc.optimizer, tc.learning_rate);
    const double baseline = normalized_mse(y_in, y_i, kappa);
    auto rep = minibatch_train(y_in.cols(), tc, opt, [&](const std::vector<Eigen::Index>& cols) {
        const CMat x = gather_cols(y_in, cols), t = gather_cols(y_i, cols);
        std::vector<RMat> acts;
        const RMat o = net.mlp().forward(net.stack(x), &acts);
        const CMat y = net.unstack(o);
        const double scale = 1.0 / (static_cast<double>(y.size()) * kappa * kappa);
        const CMat g = 2.0 * scale * (y - t);
        // y = kappa * o, so dL/do = kappa * dL/dy per real component.
        RMat go(o.rows(), o.cols());
        go.topRows(y.rows()) = kappa * g.real();
        go.bottomRows(y.rows()) = kappa * g.imag();
        net.mlp().backward(acts, go);
        return (y - t).squaredNorm() * scale;
    });
    rep.baseline_loss = baseline;
    rep.param_count = net.param_count();
    return rep;
}

enum class Side { none, tx, rx, ddnn };

inline const char* to_string(Side s) {
    switch (s) {
        case Side::none: return "none";
        case Side::tx: return "tx";
        case Side::rx: return "rx";
        case Side::ddnn: return "ddnn";
    }
    return "?";
}

inline Side side_from_string(const std::string& s) {
    if (s == "none") return Side::none;
    if (s == "tx") return Side::tx;
    if (s == "rx") return Side::rx;
    if (s == "ddnn") return Side::ddnn;
    throw ArgumentError("unknown side: " + s);
}

struct Compensators {
    const TxCompensator* tx = nullptr;
    const RxCompensator* rx = nullptr;
    const DDnnBaseline* ddnn = nullptr;
};

struct EvalResult {
    std::size_t errors = 0;
    std::size_t symbols = 0;
    double snr_db = 0.0;
    CMat constellation;           ///< equalized samples of the first blocks
    Eigen::MatrixXi constellation_idx;

    double ser() const { return symbols ? static_cast<double>(errors) / static_cast<double>(symbols) : 0.0; }
};

/// One block through the real chain with the chosen compensator, block AGC and equalization.
inline CMat receive_equalized(Side side, const Compensators& comps, const LinkRealization& link, const ChainSpec& spec,
                              const CMat& eff, const CMat& s, ChainStreams& st, double* rx_energy = nullptr) {
    if (side == Side::tx && !comps.tx) throw DependencyError("deploy: missing Tx compensator");
    if (side == Side::rx && !comps.rx) throw DependencyError("deploy: missing Rx compensator");
    if (side == Side::ddnn && !comps.ddnn) throw DependencyError("deploy: missing D-DNN");
    CMat s1 = link.bf.f_bb * s;
    if (side == Side::tx) s1 = comps.tx->forward(s1);
    const CMat x = tx_chain_precoded(s1, spec, link, st);
    if (rx_energy) *rx_energy += link.channel.apply(x).squaredNorm();
    const CMat z = rx_front(x, spec, link, st);
    CMat y;
    if (side == Side::rx) {
        y = receiver_agc(comps.rx->forward(z), link);
    } else {
        y = receiver_agc(link.bf.w_bb.adjoint() * z, link);
        if (side == Side::ddnn) y = comps.ddnn->forward(y);
    }
    return equalize(y, eff);
}

/// Runs the real chain with the chosen compensator and counts hard-decision symbol errors.
inline EvalResult deploy_and_evaluate(Side side, const Compensators& comps, const LinkRealization& link, const ChainSpec& spec,
                                      Eigen::Index n_vectors, std::uint64_t seed, Eigen::Index keep = 0) {
    const CMat eff = link.effective();
    Rng root(seed);
    Rng sym = root.child("symbols");
    const Rng chain_rng = root.child("chain");
    EvalResult r;
    const Eigen::Index t = link.cfg.block_len;
    keep = std::min(keep, n_vectors);
    r.constellation.resize(link.cfg.n_s, keep);
    r.constellation_idx.resize(link.cfg.n_s, keep);
    double sig = 0.0;
    for (Eigen::Index j = 0, k = 0; j < n_vectors; j += t, ++k) {
        const Eigen::Index n = std::min(t, n_vectors - j);
        const auto blk = random_symbols(link.cfg.n_s, n, sym);
        ChainStreams st(chain_rng.child(static_cast<std::uint64_t>(k)));
        const CMat sh = receive_equalized(side, comps, link, spec, eff, blk.s, st, &sig);
        r.errors += count_symbol_errors(blk.idx, sh);
        r.symbols += static_cast<std::size_t>(blk.idx.size());
        if (j < keep) {
            const Eigen::Index m = std::min(n, keep - j);
            r.constellation.middleCols(j, m) = sh.leftCols(m);
            r.constellation_idx.middleCols(j, m) = blk.idx.leftCols(m);
        }
    }
    if (link.sigma2 > 0.0 && n_vectors > 0)
        r.snr_db = lin_to_db(sig / (static_cast<double>(n_vectors) * link.cfg.n_s * link.sigma2));
    return r;
}

struct LinearPrecoderFit {
    CMat f_bb_c;      ///< L_t x N_s
    double residual;  ///< ||F s - s_bar||_F / ||s_bar||_F
};

/// Least-squares linear map F = s_bar s^H (s s^H)^{-1} from pilots s to the block s_bar.
inline LinearPrecoderFit fit_linear_precoder(const CMat& sbar, const CMat& s) {
    const CMat gram = s * s.adjoint();
    Eigen::JacobiSVD<CMat> svd(gram);
    const RVec sv = svd.singularValues();
    if (sv.size() == 0 || !(sv(0) > 0.0) || sv(sv.size() - 1) <= 1e-10 * sv(0))
        throw ArgumentError("extract_linear_precoder: pilot block is rank deficient");
    LinearPrecoderFit fit;
    fit.f_bb_c = sbar * s.adjoint() * gram.inverse();
    fit.residual = (fit.f_bb_c * s - sbar).norm() / sbar.norm();
    return fit;
}

/// Linear digital precoder equivalent of a trained Tx compensator, with its nonlinearity residual.
inline LinearPrecoderFit extract_linear_precoder(const TxCompensator& comp, const CMat& f_bb, const CMat& s) {
    return fit_linear_precoder(comp.forward(f_bb * s), s);
}

}  // namespace thz
