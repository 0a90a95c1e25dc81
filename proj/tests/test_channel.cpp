#include "test_util.hpp"

using namespace thz;
using namespace thz::testing;

TEST(Channel, SteeringVectorIsUnitNormWithLinearPhase) {
    const CVec a = steering(64, 0.3);
    EXPECT_NEAR(a.norm(), 1.0, 1e-12);
    for (int i = 1; i < 64; ++i) EXPECT_NEAR(std::arg(a(i) / a(i - 1)), kPi * std::sin(0.3), 1e-12);
}

TEST(Channel, QuantizedSteeringPhasesLieOnGrid) {
    const int bits = 6;
    const CVec a = quantized_steering(128, -0.7, bits);
    const double step = 2.0 * kPi / 64.0;
    for (int i = 0; i < 128; ++i) {
        EXPECT_NEAR(std::abs(a(i)), 1.0 / std::sqrt(128.0), 1e-14);
        const double k = std::arg(a(i)) / step;
        EXPECT_NEAR(k, std::round(k), 1e-9);
        EXPECT_LE(std::abs(std::arg(a(i) / steering(128, -0.7)(i))), step / 2 + 1e-12);
    }
}

TEST(Channel, UnitFrobeniusNormalizationAndLowRank) {
    SystemConfig s = small_system();
    ChannelModel m;
    Rng r(1);
    const Channel h = build_channel(s, m, r);
    const CMat d = h.dense();
    EXPECT_NEAR(d.squaredNorm(), double(s.n_t) * s.n_r, 1e-8 * s.n_t * s.n_r);
    Eigen::JacobiSVD<CMat> svd(d);
    const RVec sv = svd.singularValues();
    EXPECT_GT(sv(m.n_paths - 1), 1e-6 * sv(0));
    EXPECT_LT(sv(m.n_paths), 1e-9 * sv(0));
    for (int l = 1; l < m.n_paths; ++l) EXPECT_NEAR(std::abs(h.g(l)), std::abs(h.g(0)), 1e-12);
}

TEST(Channel, PathsRespectMinimumSeparation) {
    SystemConfig s = small_system();
    for (std::uint64_t seed = 1; seed < 20; ++seed) {
        ChannelModel m;
        Rng r(seed);
        const Channel h = build_channel(s, m, r);
        std::vector<double> v;
        for (double a : h.aod) v.push_back(std::sin(a));
        std::sort(v.begin(), v.end());
        for (std::size_t i = 1; i < v.size(); ++i) EXPECT_GT(v[i] - v[i - 1], 8.0 / s.n_t);
        for (double a : h.aod) EXPECT_LE(std::abs(a), kPi / 3.0);
    }
}

TEST(Channel, ApplyMatchesDense) {
    SystemConfig s = small_system();
    ChannelModel m;
    Rng r(2);
    const Channel h = build_channel(s, m, r);
    const CMat x = cgauss_matrix(s.n_t, 5, 1.0, r);
    EXPECT_LT((h.apply(x) - h.dense() * x).norm(), 1e-10 * x.norm());
}

TEST(Channel, PresetRealizationIsRespected) {
    SystemConfig s = small_system();
    ChannelModel m;
    m.aod = {-0.5, -0.1, 0.3, 0.8};
    m.aoa = {0.6, 0.2, -0.2, -0.7};
    m.gains = {1.0, cd(0, 1), -1.0, cd(0, -1)};
    Rng r(3);
    const Channel h = build_channel(s, m, r);
    EXPECT_EQ(h.aod, m.aod);
    EXPECT_EQ(h.aoa, m.aoa);
    EXPECT_NEAR(std::arg(h.g(1) / h.g(0)), kPi / 2, 1e-12);
}

TEST(Channel, BeamformersMeetPowerConstraintsAndDiagonalize) {
    const auto link = small_link();
    const auto& b = link.bf;
    EXPECT_NEAR((b.f_rf * b.f_bb).squaredNorm(), link.cfg.n_s, 1e-9);
    EXPECT_NEAR((b.w_rf * b.w_bb).squaredNorm(), link.cfg.n_s, 1e-9);
    for (Eigen::Index k = 0; k < b.f_rf.size(); ++k) EXPECT_NEAR(std::abs(b.f_rf(k)), 1.0 / std::sqrt(32.0), 1e-14);
    const CMat e = b.effective(link.channel);
    const CMat off = e - CMat(e.diagonal().asDiagonal());
    EXPECT_LT(off.norm(), 1e-9 * e.norm());
}

TEST(Channel, TransmitPowerAudit) {
    const auto link = small_link();
    for (double p : {-10.0, 0.0, 7.5, 15.0}) {
        const auto b = set_transmit_power(link.bf, p, 13.0);
        const double radiated = (b.g_pa * b.f_rf * b.p_in_mat() * b.f_bb).squaredNorm();
        EXPECT_NEAR(lin_to_db(radiated), p, 1e-9);
        EXPECT_NEAR(b.g_pa, std::pow(10.0, 13.0 / 20.0), 1e-12);
    }
    EXPECT_THROW(set_transmit_power(link.bf, std::nan(""), 13.0), ArgumentError);
}

TEST(Channel, RankDeficientChannelIsRejected) {
    SystemConfig s = small_system();
    ChannelModel m;
    m.n_paths = 2;
    Rng r(4);
    const Channel h = build_channel(s, m, r);
    EXPECT_THROW(design_beamformers(h, s, 6), SingularError);
}
