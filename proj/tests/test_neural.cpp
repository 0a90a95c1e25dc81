#include "test_util.hpp"

using namespace thz;
using namespace thz::testing;

TEST(Neural, StableTanhMatchesLibrary) {
    for (double x : {-50.0, -20.5, -3.0, -1e-9, 0.0, 0.3, 5.0, 19.9, 40.0}) EXPECT_NEAR(tanh_act(x), std::tanh(x), 1e-15);
}

TEST(Neural, SubNNGradientsMatchFiniteDifferences) {
    Rng r(1);
    SubNN net(7);
    glorot_init(net.params, 7, r);
    for (auto& v : net.params) v += 0.1 * r.normal();
    const std::array<double, 2> c{0.4, -0.9}, w{1.3, -0.6};
    auto loss = [&] {
        const auto o = net.forward(c);
        return w[0] * o[0] + w[1] * o[1] + 0.5 * o[0] * o[0];
    };
    const auto o = net.forward(c);
    std::vector<double> grad;
    const auto g_in = net.backward(c, {w[0] + o[0], w[1]}, grad);
    std::vector<std::size_t> all(net.param_count());
    std::iota(all.begin(), all.end(), 0);
    EXPECT_LT(check_param_gradient(net.params, grad, loss, all).max_rel_error, 1e-6);
    for (int i = 0; i < 2; ++i) {
        auto cp = c, cm = c;
        cp[i] += 1e-6;
        cm[i] -= 1e-6;
        auto f = [&](std::array<double, 2> x) {
            const auto y = net.forward(x);
            return w[0] * y[0] + w[1] * y[1] + 0.5 * y[0] * y[0];
        };
        EXPECT_NEAR(g_in[i], (f(cp) - f(cm)) / 2e-6, 1e-6);
    }
}

TEST(Neural, BankMatchesPerLaneSubNN) {
    Rng r(2);
    SubNNBank bank(3, 5);
    bank.init(r);
    const CMat z = cgauss_matrix(3, 4, 1.0, r);
    const CMat out = bank.forward(z);
    for (int l = 0; l < 3; ++l) {
        SubNN s(5);
        std::copy_n(bank.params().value.begin() + l * subnn_param_count(5), subnn_param_count(5), s.params.begin());
        for (int j = 0; j < 4; ++j) {
            const auto o = s.forward({z(l, j).real(), z(l, j).imag()});
            EXPECT_NEAR(out(l, j).real(), o[0], 1e-14);
            EXPECT_NEAR(out(l, j).imag(), o[1], 1e-14);
        }
    }
    EXPECT_THROW(bank.forward(CMat(2, 4)), ArgumentError);
}

TEST(Neural, SharedBankGradientIsSumOfTiedCopies) {
    Rng r(3);
    const int lanes = 4, nh = 6;
    SubNNBank shared(lanes, nh, true), untied(lanes, nh, false);
    shared.init(r);
    for (int l = 0; l < lanes; ++l)
        std::copy_n(shared.params().value.begin(), subnn_param_count(nh), untied.params().value.begin() + l * subnn_param_count(nh));
    const CMat z = cgauss_matrix(lanes, 9, 1.0, r), g = cgauss_matrix(lanes, 9, 1.0, r);
    EXPECT_LT((shared.forward(z) - untied.forward(z)).norm(), 1e-14);
    std::vector<double> hs, hu;
    shared.forward(z, &hs);
    untied.forward(z, &hu);
    const CMat gs = shared.backward(z, hs, g);
    const CMat gu = untied.backward(z, hu, g);
    EXPECT_LT((gs - gu).norm(), 1e-13);
    for (std::size_t k = 0; k < subnn_param_count(nh); ++k) {
        double sum = 0;
        for (int l = 0; l < lanes; ++l) sum += untied.params().grad[l * subnn_param_count(nh) + k];
        EXPECT_NEAR(shared.params().grad[k], sum, 1e-12);
    }
    EXPECT_EQ(shared.param_count(), subnn_param_count(nh));
}

TEST(Neural, BankGradientsMatchFiniteDifferences) {
    Rng r(4);
    SubNNBank bank(3, 4);
    bank.init(r);
    const CMat z = cgauss_matrix(3, 5, 1.0, r), t = cgauss_matrix(3, 5, 1.0, r);
    auto loss = [&] { return (bank.forward(z) - t).squaredNorm(); };
    std::vector<double> h;
    const CMat y = bank.forward(z, &h);
    bank.params().zero_grad();
    const CMat gin = bank.backward(z, h, 2.0 * (y - t));
    std::vector<std::size_t> all(bank.param_count());
    std::iota(all.begin(), all.end(), 0);
    EXPECT_LT(check_param_gradient(bank.params().value, bank.params().grad, loss, all).max_rel_error, 1e-5);
    CMat zp = z;
    const double eps = 1e-6;
    zp(1, 2) += cd(0, eps);
    const double lp = (bank.forward(zp) - t).squaredNorm();
    zp(1, 2) -= cd(0, 2 * eps);
    const double lm = (bank.forward(zp) - t).squaredNorm();
    EXPECT_NEAR(gin(1, 2).imag(), (lp - lm) / (2 * eps), 1e-6);
}

TEST(Neural, GlorotLimits) {
    Rng r(5);
    SubNNBank bank(50, 10);
    bank.init(r);
    const double lim = std::sqrt(6.0 / 12.0);
    for (int l = 0; l < 50; ++l) {
        const SubNNView v = bank.subnn(l);
        for (int h = 0; h < 10; ++h) {
            EXPECT_LE(std::abs(v.w1(h, 0)), lim);
            EXPECT_EQ(v.b1(h), 0.0);
        }
    }
}

TEST(Neural, MlpCountAndGradients) {
    Mlp m({8, 10, 10, 10, 8});
    EXPECT_EQ(m.param_count(), 398u);
    Rng r(6);
    m.init(r);
    RMat x = RMat::Random(8, 7), t = RMat::Random(8, 7);
    auto loss = [&] { return (m.forward(x) - t).squaredNorm(); };
    std::vector<RMat> acts;
    const RMat y = m.forward(x, &acts);
    m.params().zero_grad();
    const RMat gx = m.backward(acts, 2.0 * (y - t));
    Rng pr(7);
    EXPECT_LT(check_param_gradient(m.params().value, m.params().grad, loss, probe_indices(m.param_count(), 150, pr)).max_rel_error, 1e-5);
    const double eps = 1e-6;
    x(3, 2) += eps;
    const double lp = loss();
    x(3, 2) -= 2 * eps;
    const double lm = loss();
    EXPECT_NEAR(gx(3, 2), (lp - lm) / (2 * eps), 1e-6);
}

TEST(Neural, OptimizerSteps) {
    ParamBlock p;
    p.resize(3);
    p.grad = {2.0, -0.5, 0.0};
    Optimizer sgd({&p}, OptimizerKind::sgd, 0.1);
    sgd.step();
    EXPECT_NEAR(p.value[0], -0.2, 1e-15);
    EXPECT_NEAR(p.value[1], 0.05, 1e-15);
    ParamBlock q;
    q.resize(2);
    q.grad = {3.0, -1e-3};
    Optimizer adam({&q}, OptimizerKind::adam, 0.01);
    adam.step();
    EXPECT_NEAR(q.value[0], -0.01, 1e-8);
    EXPECT_NEAR(q.value[1], 0.01, 1e-6);
    adam.zero_grad();
    EXPECT_EQ(q.grad[0], 0.0);
}

TEST(Neural, CheckpointRoundTrip) {
    Rng r(8);
    SubNNBank a(4, 3), b(4, 3);
    a.init(r);
    const auto path = (std::filesystem::temp_directory_path() / "thz_test.ckpt").string();
    save_checkpoint(path, {&a.params()}, {{"kind", "test"}});
    const auto meta = load_checkpoint(path, {&b.params()});
    EXPECT_EQ(a.params().value, b.params().value);
    EXPECT_EQ(meta.at("kind"), "test");
    EXPECT_EQ(params_checksum(std::vector<const ParamBlock*>{&a.params()}), params_checksum(std::vector<const ParamBlock*>{&b.params()}));
    b.params().value[0] += 1e-12;
    EXPECT_NE(params_checksum(std::vector<const ParamBlock*>{&a.params()}), params_checksum(std::vector<const ParamBlock*>{&b.params()}));
    SubNNBank wrong(5, 3);
    EXPECT_THROW(load_checkpoint(path, {&wrong.params()}), ArgumentError);
    EXPECT_THROW(load_checkpoint(path + ".missing", {&b.params()}), DependencyError);
    std::ofstream(path + ".bad") << "garbage-bytes-here";
    EXPECT_THROW(load_checkpoint(path + ".bad", {&b.params()}), ArgumentError);
}
