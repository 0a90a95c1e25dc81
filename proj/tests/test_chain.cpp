#include "test_util.hpp"

using namespace thz;
using namespace thz::testing;

TEST(Chain, IdealCollapse) {
    const auto link = small_link();
    Rng r(1);
    const auto blk = random_symbols(4, 1000, r);
    ChainSpec spec = ChainSpec::ideal();
    spec.thermal_noise = false;
    ChainStreams st(r.child("chain"));
    const CMat y = rx_chain(tx_chain(blk.s, spec, link, st), spec, link, st);
    const CMat yi = ideal_rx(blk.s, link);
    EXPECT_LE((y - yi).norm(), 1e-12 * yi.norm());
}

TEST(Chain, ZeroDegreeImpairmentsCollapseToIdeal) {
    SystemConfig s = small_system();
    ImpairmentParams imp;
    imp.dac = AqnmParams::from_bits(0);
    imp.adc = AqnmParams::from_bits(0);
    imp.iq_tx = IqImbalanceParams::ideal(s.l_t);
    imp.iq_rx = IqImbalanceParams::ideal(s.l_r);
    imp.pn_tx.var_rad2 = imp.pn_rx.var_rad2 = 0.0;
    imp.shifter.e_f = CMat::Ones(s.n_t, s.l_t);
    imp.shifter.e_w = CMat::Ones(s.n_r, s.l_r);
    const auto link = make_link(s, ChannelModel{}, imp);
    ChainSpec spec = ChainSpec::all();
    spec.pa_nonlinear = false;
    spec.thermal_noise = false;
    Rng r(2);
    const auto blk = random_symbols(4, 1000, r);
    ChainStreams st(r);
    const CMat y = rx_chain(tx_chain(blk.s, spec, link, st), spec, link, st);
    EXPECT_LE((y - ideal_rx(blk.s, link)).norm(), 1e-12 * y.norm());
}

TEST(Chain, SnrCalibratedAtAnchorAndScalesWithPower) {
    const auto link5 = small_link(5.0);
    Rng r(3);
    const auto blk = random_symbols(4, 20000, r);
    ChainStreams st(r);
    const ChainSpec ideal = ChainSpec::ideal();
    EXPECT_NEAR(measure_snr(link5, tx_chain(blk.s, ideal, link5, st)), 7.95, 0.1);
    const auto link15 = link5.with_power(15.0);
    EXPECT_DOUBLE_EQ(link15.sigma2, link5.sigma2);
    const double d = measure_snr(link15, tx_chain(blk.s, ideal, link15, st)) - measure_snr(link5, tx_chain(blk.s, ideal, link5, st));
    EXPECT_NEAR(d, 10.0, 1e-9);
}

TEST(Chain, FixedNoisePsdSetsVariance) {
    SystemConfig s = small_system();
    s.noise_psd_mw_per_hz = 1e-12;
    const auto link = make_link(s, ChannelModel{}, ImpairmentParams{});
    EXPECT_DOUBLE_EQ(link.sigma2, 1e-12 * s.bandwidth_hz);
}

TEST(Chain, ReceiverNoiseCovariance) {
    const auto link = small_link();
    ChainSpec spec = ChainSpec::ideal();
    Rng r(4);
    ChainStreams st(r);
    const CMat z = rx_front(CMat::Zero(link.cfg.n_t, 40000), spec, link, st);
    const CMat cov = z * z.adjoint() / static_cast<double>(z.cols());
    const CMat expected = link.sigma2 * link.bf.w_rf.adjoint() * link.bf.w_rf;
    EXPECT_LT((cov - expected).norm(), 0.03 * expected.norm());
}

TEST(Chain, StreamsMakeRunsReproducible) {
    const auto link = small_link();
    Rng r(5);
    const auto blk = random_symbols(4, 300, r);
    ChainStreams a(Rng(9)), b(Rng(9)), c(Rng(10));
    const auto spec = ChainSpec::all();
    const CMat ya = rx_chain(tx_chain(blk.s, spec, link, a), spec, link, a);
    EXPECT_EQ(ya, rx_chain(tx_chain(blk.s, spec, link, b), spec, link, b));
    EXPECT_NE(ya, rx_chain(tx_chain(blk.s, spec, link, c), spec, link, c));
}

TEST(Chain, EqualizeRecoversAndRejectsSingular) {
    Rng r(6);
    const CMat e = cgauss_matrix(4, 4, 1.0, r);
    const CMat s = cgauss_matrix(4, 10, 1.0, r);
    EXPECT_LT((equalize(e * s, e) - s).norm(), 1e-10);
    CMat sing = e;
    sing.col(3) = sing.col(2);
    EXPECT_THROW(equalize(e * s, sing), SingularError);
    EXPECT_THROW(equalize(s, CMat(4, 3)), ArgumentError);
}

TEST(Chain, EqualizeUsesPseudoInverseWhenIllConditioned) {
    Rng r(7);
    Eigen::JacobiSVD<CMat> svd(cgauss_matrix(4, 4, 1.0, r), Eigen::ComputeFullU | Eigen::ComputeFullV);
    RVec sv(4);
    sv << 1.0, 1e-3, 1e-6, 1e-10;
    const CMat e = svd.matrixU() * sv.cast<cd>().asDiagonal() * svd.matrixV().adjoint();
    const CMat s = cgauss_matrix(4, 6, 1.0, r);
    const CMat out = equalize(e * s, e);
    EXPECT_LT((e * out - e * s).norm(), 1e-6 * (e * s).norm());
    EXPECT_LT(out.norm(), 1e3 * s.norm());
}

TEST(Chain, AgcNormalizesEveryBlock) {
    const auto link = small_link();
    Rng r(8);
    CMat y = cgauss_matrix(4, 600, 5.0, r);
    y.rightCols(88) *= 3.0;
    const CMat a = receiver_agc(y, link);
    const double target = link.nominal_rx_energy(true);
    for (Eigen::Index j = 0; j < 600; j += 256) {
        const Eigen::Index n = std::min<Eigen::Index>(256, 600 - j);
        EXPECT_NEAR(a.middleCols(j, n).squaredNorm() / n, target, 1e-9 * target);
    }
}

TEST(Chain, ScenarioLabels) {
    EXPECT_FALSE(ChainSpec::scenario("ideal").any_impairment());
    EXPECT_TRUE(ChainSpec::scenario("pa").pa_nonlinear);
    EXPECT_TRUE(ChainSpec::scenario("dac+adc").dac);
    EXPECT_TRUE(ChainSpec::scenario("dac+adc").adc);
    EXPECT_TRUE(ChainSpec::scenario("shifters").shifter_rx);
    EXPECT_THROW(ChainSpec::scenario("bogus"), ArgumentError);
}

TEST(Chain, IdealLinkHasNoErrorsAtHighSnr) {
    SystemConfig s = small_system();
    s.snr_anchor_db = 30.0;
    s.transmit_power_dbm = 15.0;
    const auto link = make_link(s, ChannelModel{}, ImpairmentParams{});
    const auto r = deploy_and_evaluate(Side::none, {}, link, ChainSpec::ideal(), 2000, 3);
    EXPECT_EQ(r.errors, 0u);
    EXPECT_EQ(r.symbols, 8000u);
}
