#pragma once

#include "thz/chain.hpp"
#include "thz/modem.hpp"
#include "thz/neural.hpp"

#include <chrono>
#include <numeric>
#include <optional>

namespace thz {

enum class SlimMode { full, shared, removed };

inline const char* to_string(SlimMode m) {
    switch (m) {
        case SlimMode::full: return "full";
        case SlimMode::shared: return "share";
        case SlimMode::removed: return "remove";
    }
    return "?";
}

inline std::size_t structured_param_count(SlimMode mode, int nh, int l_t, int n_t, int l_r) {
    const std::size_t per = subnn_param_count(nh);
    switch (mode) {
        case SlimMode::full: return static_cast<std::size_t>(l_t + n_t + l_r) * per;
        case SlimMode::shared: return static_cast<std::size_t>(l_t + 1 + l_r) * per;
        case SlimMode::removed: return static_cast<std::size_t>(l_t + l_r) * per;
    }
    return 0;
}

/// Fixed linear maps and per-bank input scales taken from a link at one transmit power.
struct LinkMaps {
    CMat f_rf_pin;  ///< F_RF P_in, N_t x L_t
    CMat w_h;       ///< W_RF^H H, L_r x N_t
    CMat w_bb_h;    ///< W_BB^H, N_s x L_r
    double g_pa = 1.0;
    double a1 = 1.0, a2 = 1.0, a3 = 1.0;  ///< nominal rms per lane at the inputs of NN1, NN2, NN3
    double kappa = 1.0;                   ///< rms effective gain per stream, normalizes losses
    double power_dbm = 0.0;
    int n_s = 0;

    static LinkMaps from_link(const LinkRealization& link) {
        LinkMaps m;
        const auto& b = link.bf;
        m.f_rf_pin = b.f_rf * b.p_in.cast<cd>().asDiagonal();
        m.w_h = b.w_rf.adjoint() * link.channel.dense();
        m.w_bb_h = b.w_bb.adjoint();
        m.g_pa = b.g_pa;
        const int l_t = static_cast<int>(b.f_bb.rows()), l_r = static_cast<int>(b.w_bb.rows());
        const int n_t = static_cast<int>(b.f_rf.rows());
        m.a1 = std::sqrt(b.f_bb.squaredNorm() / l_t);
        m.a2 = std::sqrt((m.f_rf_pin * b.f_bb).squaredNorm() / n_t);
        m.a3 = std::sqrt((m.w_h * (m.g_pa * m.f_rf_pin * b.f_bb)).squaredNorm() / l_r);
        m.n_s = static_cast<int>(b.f_bb.cols());
        m.kappa = std::sqrt(link.effective().squaredNorm() / m.n_s);
        m.power_dbm = link.power_dbm;
        return m;
    }
    /// Noise-free nominal per-symbol energy after digital combining.
    double nominal_energy() const { return kappa * kappa * n_s; }
};

/// Three sub-NN banks interleaved with the nominal linear maps of the link.
class StructuredDNN {
public:
    StructuredDNN() = default;
    StructuredDNN(const LinkMaps& maps, int nh, SlimMode mode)
        : maps_(maps), nh_(nh), mode_(mode),
          nn1_(static_cast<int>(maps.f_rf_pin.cols()), nh),
          nn3_(static_cast<int>(maps.w_h.rows()), nh) {
        if (mode != SlimMode::removed) nn2_ = SubNNBank(static_cast<int>(maps.f_rf_pin.rows()), nh, mode == SlimMode::shared);
    }

    struct Cache {
        CMat u1, u2, u3;
        std::vector<double> h1, h2, h3;
    };

    const LinkMaps& maps() const { return maps_; }
    int nh() const { return nh_; }
    SlimMode mode() const { return mode_; }
    double power_dbm() const { return maps_.power_dbm; }
    SubNNBank& bank1() { return nn1_; }
    SubNNBank& bank2() { return nn2_; }
    SubNNBank& bank3() { return nn3_; }

    void init(Rng& rng) {
        Rng r1 = rng.child("nn1"), r2 = rng.child("nn2"), r3 = rng.child("nn3");
        nn1_.init(r1);
        if (mode_ != SlimMode::removed) nn2_.init(r2);
        nn3_.init(r3);
    }

    std::size_t param_count() const {
        return nn1_.param_count() + (mode_ != SlimMode::removed ? nn2_.param_count() : 0) + nn3_.param_count();
    }

    std::vector<ParamBlock*> params() {
        std::vector<ParamBlock*> v{&nn1_.params()};
        if (mode_ != SlimMode::removed) v.push_back(&nn2_.params());
        v.push_back(&nn3_.params());
        return v;
    }
    std::vector<const ParamBlock*> params() const {
        std::vector<const ParamBlock*> v{&nn1_.params()};
        if (mode_ != SlimMode::removed) v.push_back(&nn2_.params());
        v.push_back(&nn3_.params());
        return v;
    }

    /// Output of NN3 scaled back to signal units (L_r x B), before W_BB^H.
    CMat forward_inner(const CMat& s1, Cache* c = nullptr) const {
        if (s1.rows() != nn1_.lanes()) throw ArgumentError("StructuredDNN: s1 must have L_t rows");
        CMat u1 = s1 / maps_.a1;
        const CMat s3 = maps_.f_rf_pin * (maps_.a1 * nn1_.forward(u1, c ? &c->h1 : nullptr));
        CMat s4;
        CMat u2;
        if (mode_ == SlimMode::removed) {
            s4 = maps_.g_pa * s3;
        } else {
            u2 = s3 / maps_.a2;
            s4 = (maps_.g_pa * maps_.a2) * nn2_.forward(u2, c ? &c->h2 : nullptr);
        }
        CMat u3 = (maps_.w_h * s4) / maps_.a3;
        CMat s6 = maps_.a3 * nn3_.forward(u3, c ? &c->h3 : nullptr);
        if (c) {
            c->u1 = std::move(u1);
            c->u2 = std::move(u2);
            c->u3 = std::move(u3);
        }
        return s6;
    }

    CMat forward(const CMat& s1, Cache* c = nullptr) const { return maps_.w_bb_h * forward_inner(s1, c); }

    /// Backpropagates dL/dy (N_s x B); accumulates parameter gradients and returns dL/ds1.
    CMat backward(const Cache& c, const CMat& g_y) { return backward_inner(c, maps_.w_bb_h.adjoint() * g_y); }

    /// Same as backward, starting from dL/d(NN3 output in signal units).
    CMat backward_inner(const Cache& c, const CMat& g_s6) {
        const CMat g_u3 = nn3_.backward(c.u3, c.h3, maps_.a3 * g_s6);
        const CMat g_s4 = maps_.w_h.adjoint() * (g_u3 / maps_.a3);
        CMat g_s3;
        if (mode_ == SlimMode::removed) {
            g_s3 = maps_.g_pa * g_s4;
        } else {
            g_s3 = nn2_.backward(c.u2, c.h2, (maps_.g_pa * maps_.a2) * g_s4) / maps_.a2;
        }
        const CMat g_o1 = maps_.a1 * (maps_.f_rf_pin.adjoint() * g_s3);
        return nn1_.backward(c.u1, c.h1, g_o1) / maps_.a1;
    }

private:
    LinkMaps maps_;
    int nh_ = 10;
    SlimMode mode_ = SlimMode::full;
    SubNNBank nn1_, nn2_, nn3_;
};

struct Stage1Dataset {
    CMat s;   ///< N_s x M symbols
    CMat s1;  ///< L_t x M, F_BB s
    CMat ye;  ///< N_s x M impaired receptions
    Eigen::MatrixXi idx;
    double power_dbm = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t link_seed = 0;

    Eigen::Index size() const { return s.cols(); }
    std::uint64_t hash() const {
        std::uint64_t h = splitmix64(seed ^ link_seed);
        for (Eigen::Index j = 0; j < ye.cols(); ++j)
            for (Eigen::Index i = 0; i < ye.rows(); ++i) {
                std::uint64_t a, b;
                const double re = ye(i, j).real(), im = ye(i, j).imag();
                std::memcpy(&a, &re, 8);
                std::memcpy(&b, &im, 8);
                h = splitmix64(h ^ a) ^ b;
            }
        return h;
    }
};

/// Runs the chain block by block; each block draws from its own child stream.
inline CMat run_chain_blocks(const CMat& s1, const ChainSpec& spec, const LinkRealization& link, const Rng& rng) {
    CMat y(link.cfg.n_s, s1.cols());
    const Eigen::Index t = link.cfg.block_len;
    for (Eigen::Index j = 0, k = 0; j < s1.cols(); j += t, ++k) {
        const Eigen::Index n = std::min(t, s1.cols() - j);
        ChainStreams st(rng.child(static_cast<std::uint64_t>(k)));
        y.middleCols(j, n) = rx_chain(tx_chain_precoded(s1.middleCols(j, n), spec, link, st), spec, link, st);
    }
    return y;
}

inline Stage1Dataset make_stage1_dataset(const LinkRealization& link, const ChainSpec& spec, Eigen::Index m, std::uint64_t seed) {
    Stage1Dataset d;
    Rng rng(seed);
    Rng sym = rng.child("symbols");
    auto blk = random_symbols(link.cfg.n_s, m, sym);
    d.s = std::move(blk.s);
    d.idx = std::move(blk.idx);
    d.s1 = link.bf.f_bb * d.s;
    d.ye = run_chain_blocks(d.s1, spec, link, rng.child("chain"));
    d.power_dbm = link.power_dbm;
    d.seed = seed;
    d.link_seed = link.seed;
    return d;
}

struct TrainingReport {
    std::vector<double> loss_curve;  ///< mean loss per epoch
    double final_loss = 0.0;
    double baseline_loss = 0.0;      ///< loss before training (or of the uncompensated path for compensators)
    double wall_seconds = 0.0;
    std::size_t param_count = 0;
};

/// Mean of |a - b|^2 over entries, divided by kappa^2.
inline double normalized_mse(const CMat& a, const CMat& b, double kappa) {
    return (a - b).squaredNorm() / (static_cast<double>(a.size()) * kappa * kappa);
}

/// Generic minibatch loop: step(cols) must zero nothing, accumulate gradients and return the batch loss.
template <typename StepFn>
TrainingReport minibatch_train(Eigen::Index n, const TrainingConfig& tc, Optimizer& opt, StepFn&& step) {
    TrainingReport rep;
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle(tc.shuffle_seed);
    std::vector<Eigen::Index> perm(n);
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    for (int ep = 0; ep < tc.epochs; ++ep) {
        for (Eigen::Index i = n - 1; i > 0; --i) std::swap(perm[i], perm[shuffle.below(static_cast<std::uint64_t>(i + 1))]);
        double total = 0.0;
        for (Eigen::Index i = 0; i < n; i += tc.batch_size) {
            const Eigen::Index bs = std::min<Eigen::Index>(tc.batch_size, n - i);
            std::vector<Eigen::Index> cols(perm.begin() + i, perm.begin() + i + bs);
            opt.zero_grad();
            const double loss = step(cols);
            if (!std::isfinite(loss)) throw TrainingFailure("training diverged at epoch " + std::to_string(ep + 1));
            opt.step();
            total += loss * static_cast<double>(bs);
        }
        rep.loss_curve.push_back(total / static_cast<double>(n));
    }
    rep.final_loss = rep.loss_curve.empty() ? 0.0 : rep.loss_curve.back();
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

inline CMat gather_cols(const CMat& m, const std::vector<Eigen::Index>& cols) {
    CMat out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(cols[k]);
    return out;
}

/// Minimizes the mean squared error between the model output and y_e.
inline TrainingReport train_stage1(StructuredDNN& model, const Stage1Dataset& data, const TrainingConfig& tc) {
    if (std::abs(data.power_dbm - model.power_dbm()) > 1e-9)
        throw PolicyError("train_stage1: dataset power differs from the model operating power");
    const double kappa = model.maps().kappa;
    Optimizer opt(model.params(), tc.optimizer, tc.learning_rate);
    const double baseline = normalized_mse(model.forward(data.s1), data.ye, kappa);
    auto rep = minibatch_train(data.size(), tc, opt, [&](const std::vector<Eigen::Index>& cols) {
        const CMat x = gather_cols(data.s1, cols);
        const CMat y = gather_cols(data.ye, cols);
        StructuredDNN::Cache c;
        const CMat yh = model.forward(x, &c);
        const double scale = 1.0 / (static_cast<double>(yh.size()) * kappa * kappa);
        model.backward(c, 2.0 * scale * (yh - y));
        return (yh - y).squaredNorm() * scale;
    });
    rep.baseline_loss = baseline;
    rep.param_count = model.param_count();
    return rep;
}

enum class SlimKind { prune, share_nn2, remove_nn2 };

struct SlimRequest {
    SlimKind kind = SlimKind::prune;
    int nh = 0;                      ///< target hidden width for prune (and kept width otherwise, 0 = same)
    double power_threshold_dbm = 5.0;
    bool override_policy = false;
};

/// Returns a freshly initialized model with the slimmed architecture.
inline StructuredDNN slim(const StructuredDNN& model, const SlimRequest& req, Rng& rng) {
    StructuredDNN out;
    switch (req.kind) {
        case SlimKind::prune:
            if (req.nh <= 0 || req.nh >= model.nh()) throw ArgumentError("slim: prune requires a smaller N_h");
            out = StructuredDNN(model.maps(), req.nh, model.mode());
            break;
        case SlimKind::share_nn2:
            out = StructuredDNN(model.maps(), req.nh > 0 ? req.nh : model.nh(), SlimMode::shared);
            break;
        case SlimKind::remove_nn2:
            if (model.power_dbm() >= req.power_threshold_dbm && !req.override_policy)
                throw PolicyError("slim: NN2 removal is only allowed below the power threshold");
            out = StructuredDNN(model.maps(), req.nh > 0 ? req.nh : model.nh(), SlimMode::removed);
            break;
    }
    out.init(rng);
    return out;
}

inline nlohmann::json model_manifest(const StructuredDNN& m, std::uint64_t link_seed, std::uint64_t dataset_hash) {
    return {{"kind", "stage1"},
            {"mode", to_string(m.mode())},
            {"n_hidden", m.nh()},
            {"param_count", m.param_count()},
            {"power_dbm", m.power_dbm()},
            {"link_seed", link_seed},
            {"dataset_hash", dataset_hash}};
}

}  // namespace thz
