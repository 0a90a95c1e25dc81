#pragma once

#include "thz/core.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <span>
#include <vector>

namespace thz {

/// Numerically stable tanh (1 - e^{-2x}) / (1 + e^{-2x}).
inline double tanh_act(double x) {
    if (x > 20.0) return 1.0;
    if (x < -20.0) return -1.0;
    const double e = std::exp(-2.0 * std::fabs(x));
    const double t = (1.0 - e) / (1.0 + e);
    return x < 0 ? -t : t;
}

/// Trainable values with matching gradient storage.
struct ParamBlock {
    std::vector<double> value;
    std::vector<double> grad;

    void resize(std::size_t n) {
        value.assign(n, 0.0);
        grad.assign(n, 0.0);
    }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
    std::size_t size() const { return value.size(); }
};

inline std::size_t subnn_param_count(int nh) { return static_cast<std::size_t>(5 * nh + 2); }

/// View of one 2-N_h-2 sub-network laid out as [W1 (nh x 2, row-major), b1 (nh), W2 (nh x 2), b2 (2)].
struct SubNNView {
    int nh;
    double* p;

    double& w1(int h, int i) const { return p[2 * h + i]; }
    double& b1(int h) const { return p[2 * nh + h]; }
    double& w2(int h, int k) const { return p[3 * nh + 2 * h + k]; }
    double& b2(int k) const { return p[5 * nh + k]; }
};

/// Standalone sub-NN: h = tanh(W1 c + b1), out = W2^T h + b2.
struct SubNN {
    int nh = 0;
    std::vector<double> params;

    explicit SubNN(int n_hidden = 10) : nh(n_hidden), params(subnn_param_count(n_hidden), 0.0) {}
    std::size_t param_count() const { return params.size(); }
    SubNNView view() { return {nh, params.data()}; }

    std::array<double, 2> forward(std::array<double, 2> c, std::vector<double>* hidden = nullptr) const {
        const SubNNView v{nh, const_cast<double*>(params.data())};
        std::array<double, 2> o{v.b2(0), v.b2(1)};
        if (hidden) hidden->resize(nh);
        for (int h = 0; h < nh; ++h) {
            const double a = tanh_act(v.w1(h, 0) * c[0] + v.w1(h, 1) * c[1] + v.b1(h));
            if (hidden) (*hidden)[h] = a;
            o[0] += v.w2(h, 0) * a;
            o[1] += v.w2(h, 1) * a;
        }
        return o;
    }

    /// Returns the input gradient; parameter gradients are written to grad (size 5nh+2).
    std::array<double, 2> backward(std::array<double, 2> c, std::array<double, 2> g_out, std::vector<double>& grad) const {
        std::vector<double> hid;
        forward(c, &hid);
        const SubNNView v{nh, const_cast<double*>(params.data())};
        grad.assign(params.size(), 0.0);
        const SubNNView g{nh, grad.data()};
        std::array<double, 2> g_in{0.0, 0.0};
        for (int h = 0; h < nh; ++h) {
            g.w2(h, 0) = hid[h] * g_out[0];
            g.w2(h, 1) = hid[h] * g_out[1];
            const double gp = (v.w2(h, 0) * g_out[0] + v.w2(h, 1) * g_out[1]) * (1.0 - hid[h] * hid[h]);
            g.w1(h, 0) = gp * c[0];
            g.w1(h, 1) = gp * c[1];
            g.b1(h) = gp;
            g_in[0] += v.w1(h, 0) * gp;
            g_in[1] += v.w1(h, 1) * gp;
        }
        g.b2(0) = g_out[0];
        g.b2(1) = g_out[1];
        return g_in;
    }
};

inline void glorot_init(std::span<double> p, int nh, Rng& rng) {
    const SubNNView v{nh, p.data()};
    const double lim = std::sqrt(6.0 / (2.0 + nh));
    for (int h = 0; h < nh; ++h) {
        v.w1(h, 0) = rng.uniform(-lim, lim);
        v.w1(h, 1) = rng.uniform(-lim, lim);
        v.b1(h) = 0.0;
    }
    for (int h = 0; h < nh; ++h) {
        v.w2(h, 0) = rng.uniform(-lim, lim);
        v.w2(h, 1) = rng.uniform(-lim, lim);
    }
    v.b2(0) = v.b2(1) = 0.0;
}

/// A lane-parallel bank of sub-NNs acting on the (re, im) pairs of a complex block;
/// row i uses sub-NN i, or sub-NN 0 for every row when shared.
class SubNNBank {
public:
    SubNNBank() = default;
    SubNNBank(int lanes, int nh, bool shared = false) : lanes_(lanes), nh_(nh), shared_(shared) {
        p_.resize(static_cast<std::size_t>(shared ? 1 : lanes) * subnn_param_count(nh));
    }

    int lanes() const { return lanes_; }
    int nh() const { return nh_; }
    bool shared() const { return shared_; }
    int n_subnn() const { return shared_ ? 1 : lanes_; }
    std::size_t param_count() const { return p_.size(); }
    ParamBlock& params() { return p_; }
    const ParamBlock& params() const { return p_; }
    SubNNView subnn(int i) { return {nh_, p_.value.data() + offset(i)}; }

    void init(Rng& rng) {
        for (int i = 0; i < n_subnn(); ++i)
            glorot_init(std::span<double>(p_.value.data() + offset(i), subnn_param_count(nh_)), nh_, rng);
    }

    /// Forward pass; hidden activations are kept in cache when non-null (lane-major, then column, then unit).
    CMat forward(const CMat& z, std::vector<double>* cache = nullptr) const {
        if (z.rows() != lanes_) throw ArgumentError("SubNNBank: row count does not match lane count");
        const Eigen::Index b = z.cols();
        CMat out(lanes_, b);
        if (cache) cache->resize(static_cast<std::size_t>(lanes_) * b * nh_);
        for (int l = 0; l < lanes_; ++l) {
            const double* p = p_.value.data() + offset(shared_ ? 0 : l);
            const double* w1 = p;
            const double* b1 = p + 2 * nh_;
            const double* w2 = p + 3 * nh_;
            const double* b2 = p + 5 * nh_;
            for (Eigen::Index j = 0; j < b; ++j) {
                const double x0 = z(l, j).real(), x1 = z(l, j).imag();
                double o0 = b2[0], o1 = b2[1];
                double* hc = cache ? cache->data() + (static_cast<std::size_t>(l) * b + j) * nh_ : nullptr;
                for (int h = 0; h < nh_; ++h) {
                    const double a = std::tanh(w1[2 * h] * x0 + w1[2 * h + 1] * x1 + b1[h]);
                    if (hc) hc[h] = a;
                    o0 += w2[2 * h] * a;
                    o1 += w2[2 * h + 1] * a;
                }
                out(l, j) = {o0, o1};
            }
        }
        return out;
    }

    /// Accumulates parameter gradients and returns the input gradient. Gradients of
    /// complex quantities use the convention dL/dRe + i dL/dIm.
    CMat backward(const CMat& z, const std::vector<double>& cache, const CMat& g_out) {
        const Eigen::Index b = z.cols();
        CMat g_in(lanes_, b);
        for (int l = 0; l < lanes_; ++l) {
            const std::size_t off = offset(shared_ ? 0 : l);
            const double* p = p_.value.data() + off;
            double* g = p_.grad.data() + off;
            const double* w1 = p;
            const double* w2 = p + 3 * nh_;
            double* gw1 = g;
            double* gb1 = g + 2 * nh_;
            double* gw2 = g + 3 * nh_;
            double* gb2 = g + 5 * nh_;
            for (Eigen::Index j = 0; j < b; ++j) {
                const double x0 = z(l, j).real(), x1 = z(l, j).imag();
                const double go0 = g_out(l, j).real(), go1 = g_out(l, j).imag();
                const double* hc = cache.data() + (static_cast<std::size_t>(l) * b + j) * nh_;
                double gi0 = 0.0, gi1 = 0.0;
                for (int h = 0; h < nh_; ++h) {
                    gw2[2 * h] += hc[h] * go0;
                    gw2[2 * h + 1] += hc[h] * go1;
                    const double gp = (w2[2 * h] * go0 + w2[2 * h + 1] * go1) * (1.0 - hc[h] * hc[h]);
                    gw1[2 * h] += gp * x0;
                    gw1[2 * h + 1] += gp * x1;
                    gb1[h] += gp;
                    gi0 += w1[2 * h] * gp;
                    gi1 += w1[2 * h + 1] * gp;
                }
                gb2[0] += go0;
                gb2[1] += go1;
                g_in(l, j) = {gi0, gi1};
            }
        }
        return g_in;
    }

private:
    std::size_t offset(int i) const { return static_cast<std::size_t>(i) * subnn_param_count(nh_); }

    int lanes_ = 0;
    int nh_ = 0;
    bool shared_ = false;
    ParamBlock p_;
};

enum class OptimizerKind { adam, sgd };

struct TrainingConfig {
    int epochs = 60;
    int batch_size = 64;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    std::uint64_t shuffle_seed = 7;
};

/// Adam (beta1 0.9, beta2 0.999, eps 1e-8) or plain gradient descent over a set of parameter blocks.
class Optimizer {
public:
    Optimizer(std::vector<ParamBlock*> blocks, OptimizerKind kind, double lr) : blocks_(std::move(blocks)), kind_(kind), lr_(lr) {
        for (auto* b : blocks_) {
            m_.emplace_back(b->size(), 0.0);
            v_.emplace_back(b->size(), 0.0);
        }
    }

    void zero_grad() {
        for (auto* b : blocks_) b->zero_grad();
    }

    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1, t_), c2 = 1.0 - std::pow(beta2, t_);
        for (std::size_t k = 0; k < blocks_.size(); ++k) {
            auto& val = blocks_[k]->value;
            const auto& g = blocks_[k]->grad;
            if (kind_ == OptimizerKind::sgd) {
                for (std::size_t i = 0; i < val.size(); ++i) val[i] -= lr_ * g[i];
                continue;
            }
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < val.size(); ++i) {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                val[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
            }
        }
    }

    static constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

private:
    std::vector<ParamBlock*> blocks_;
    OptimizerKind kind_;
    double lr_;
    int t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// Fully connected tanh network with a linear output layer; columns are samples.
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
        std::size_t n = 0;
        for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) n += static_cast<std::size_t>(sizes_[i + 1]) * (sizes_[i] + 1);
        p_.resize(n);
    }

    const std::vector<int>& sizes() const { return sizes_; }
    std::size_t param_count() const { return p_.size(); }
    ParamBlock& params() { return p_; }
    const ParamBlock& params() const { return p_; }

    void init(Rng& rng) {
        std::size_t off = 0;
        for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
            const int in = sizes_[i], out = sizes_[i + 1];
            const double lim = std::sqrt(6.0 / (in + out));
            for (int k = 0; k < out * in; ++k) p_.value[off + k] = rng.uniform(-lim, lim);
            for (int k = 0; k < out; ++k) p_.value[off + out * in + k] = 0.0;
            off += static_cast<std::size_t>(out) * (in + 1);
        }
    }

    RMat forward(const RMat& x, std::vector<RMat>* acts = nullptr) const {
        RMat a = x;
        if (acts) acts->assign(1, a);
        std::size_t off = 0;
        for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
            const int in = sizes_[i], out = sizes_[i + 1];
            Eigen::Map<const RMat> w(p_.value.data() + off, out, in);
            Eigen::Map<const RVec> bias(p_.value.data() + off + out * in, out);
            RMat z = (w * a).colwise() + bias;
            if (i + 2 < sizes_.size()) z = z.array().tanh().matrix();
            a = std::move(z);
            if (acts) acts->push_back(a);
            off += static_cast<std::size_t>(out) * (in + 1);
        }
        return a;
    }

    /// Accumulates gradients given activations from forward and dL/d(output); returns dL/d(input).
    RMat backward(const std::vector<RMat>& acts, const RMat& g_out) {
        std::vector<std::size_t> offs;
        std::size_t off = 0;
        for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
            offs.push_back(off);
            off += static_cast<std::size_t>(sizes_[i + 1]) * (sizes_[i] + 1);
        }
        RMat g = g_out;
        for (std::size_t i = sizes_.size() - 1; i-- > 0;) {
            const int in = sizes_[i], out = sizes_[i + 1];
            if (i + 2 < sizes_.size()) g = g.cwiseProduct((1.0 - acts[i + 1].array().square()).matrix());
            Eigen::Map<const RMat> w(p_.value.data() + offs[i], out, in);
            Eigen::Map<RMat> gw(p_.grad.data() + offs[i], out, in);
            Eigen::Map<RVec> gb(p_.grad.data() + offs[i] + out * in, out);
            gw += g * acts[i].transpose();
            gb += g.rowwise().sum();
            g = w.transpose() * g;
        }
        return g;
    }

private:
    std::vector<int> sizes_;
    ParamBlock p_;
};

// Checkpoints: 8-byte magic, u32 version, u32 block count, then per block a u64 length and
// that many little-endian doubles. A JSON sidecar (<path>.json) carries shapes and metadata.
inline constexpr char kCheckpointMagic[8] = {'T', 'H', 'Z', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const std::vector<const ParamBlock*>& blocks, const nlohmann::json& meta) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ArgumentError("cannot write checkpoint " + path);
    f.write(kCheckpointMagic, 8);
    const std::uint32_t n = static_cast<std::uint32_t>(blocks.size());
    f.write(reinterpret_cast<const char*>(&kCheckpointVersion), 4);
    f.write(reinterpret_cast<const char*>(&n), 4);
    nlohmann::json shapes = nlohmann::json::array();
    for (const auto* b : blocks) {
        const std::uint64_t len = b->size();
        f.write(reinterpret_cast<const char*>(&len), 8);
        f.write(reinterpret_cast<const char*>(b->value.data()), static_cast<std::streamsize>(len * sizeof(double)));
        shapes.push_back(len);
    }
    nlohmann::json side = meta;
    side["format_version"] = kCheckpointVersion;
    side["block_lengths"] = shapes;
    std::ofstream(path + ".json") << side.dump(2) << "\n";
}

inline nlohmann::json load_checkpoint(const std::string& path, const std::vector<ParamBlock*>& blocks) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DependencyError("missing checkpoint " + path);
    char magic[8];
    std::uint32_t ver = 0, n = 0;
    f.read(magic, 8);
    f.read(reinterpret_cast<char*>(&ver), 4);
    f.read(reinterpret_cast<char*>(&n), 4);
    if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0 || ver != kCheckpointVersion)
        throw ArgumentError("bad checkpoint header: " + path);
    if (n != blocks.size()) throw ArgumentError("checkpoint block count mismatch: " + path);
    for (auto* b : blocks) {
        std::uint64_t len = 0;
        f.read(reinterpret_cast<char*>(&len), 8);
        if (len != b->size()) throw ArgumentError("checkpoint block size mismatch: " + path);
        f.read(reinterpret_cast<char*>(b->value.data()), static_cast<std::streamsize>(len * sizeof(double)));
    }
    if (!f) throw ArgumentError("truncated checkpoint: " + path);
    std::ifstream js(path + ".json");
    return js ? nlohmann::json::parse(js) : nlohmann::json::object();
}

inline std::uint64_t params_checksum(const std::vector<const ParamBlock*>& blocks) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto* b : blocks)
        for (double v : b->value) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            h = splitmix64(h ^ bits);
        }
    return h;
}

inline std::uint64_t params_checksum(const std::vector<ParamBlock*>& blocks) {
    return params_checksum(std::vector<const ParamBlock*>(blocks.begin(), blocks.end()));
}

}  // namespace thz
