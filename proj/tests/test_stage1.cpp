#include "test_util.hpp"

using namespace thz;
using namespace thz::testing;

TEST(Stage1, ParameterCountTable) {
    const int lt = 4, nt = 256, lr = 4;
    EXPECT_EQ(structured_param_count(SlimMode::full, 10, lt, nt, lr), 13728u);
    EXPECT_EQ(structured_param_count(SlimMode::full, 8, lt, nt, lr), 11088u);
    EXPECT_EQ(structured_param_count(SlimMode::full, 6, lt, nt, lr), 8448u);
    EXPECT_EQ(structured_param_count(SlimMode::full, 4, lt, nt, lr), 5808u);
    EXPECT_EQ(structured_param_count(SlimMode::full, 2, lt, nt, lr), 3168u);
    EXPECT_EQ(structured_param_count(SlimMode::shared, 10, lt, nt, lr), 468u);
    EXPECT_EQ(structured_param_count(SlimMode::removed, 10, lt, nt, lr), 416u);
    EXPECT_EQ(structured_param_count(SlimMode::shared, 8, lt, nt, lr), 378u);
    EXPECT_EQ(structured_param_count(SlimMode::removed, 8, lt, nt, lr), 336u);
}

TEST(Stage1, ModelCountMatchesFormula) {
    const auto link = small_link();
    const auto maps = LinkMaps::from_link(link);
    for (SlimMode m : {SlimMode::full, SlimMode::shared, SlimMode::removed})
        for (int nh : {2, 10}) EXPECT_EQ(StructuredDNN(maps, nh, m).param_count(), structured_param_count(m, nh, 4, 32, 4));
}

TEST(Stage1, LinkMapsReproduceEffectiveMatrix) {
    const auto link = small_link();
    const auto maps = LinkMaps::from_link(link);
    const CMat eff = maps.w_bb_h * maps.w_h * (maps.g_pa * maps.f_rf_pin) * link.bf.f_bb;
    EXPECT_LT((eff - link.effective()).norm(), 1e-10 * eff.norm());
    EXPECT_NEAR(maps.kappa * maps.kappa * maps.n_s, link.effective().squaredNorm(), 1e-9 * link.effective().squaredNorm());
}

class Stage1Gradient : public ::testing::TestWithParam<SlimMode> {};

TEST_P(Stage1Gradient, EndToEndMatchesFiniteDifferences) {
    const auto link = small_link();
    const auto maps = LinkMaps::from_link(link);
    StructuredDNN model(maps, 5, GetParam());
    Rng r(21);
    model.init(r);
    const auto blk = random_symbols(4, 6, r);
    const CMat s1 = link.bf.f_bb * blk.s;
    const CMat t = ideal_rx(blk.s, link) + 0.1 * maps.kappa * cgauss_matrix(4, 6, 1.0, r);
    const double k2 = maps.kappa * maps.kappa;
    auto loss = [&] { return (model.forward(s1) - t).squaredNorm() / k2; };
    StructuredDNN::Cache c;
    const CMat y = model.forward(s1, &c);
    for (auto* p : model.params()) p->zero_grad();
    const CMat g_s1 = model.backward(c, 2.0 * (y - t) / k2);
    double worst = 0;
    int probes = 0;
    Rng pr(22);
    for (auto* p : model.params()) {
        const auto res = check_param_gradient(p->value, p->grad, loss, probe_indices(p->size(), 40, pr));
        worst = std::max(worst, res.max_rel_error);
        probes += res.probes;
    }
    EXPECT_GE(probes, 80);
    EXPECT_LT(worst, 1e-4);
    CMat sp = s1;
    const double eps = 1e-7 * maps.a1;
    sp(2, 3) += eps;
    const double lp = (model.forward(sp) - t).squaredNorm() / k2;
    sp(2, 3) -= 2 * eps;
    const double lm = (model.forward(sp) - t).squaredNorm() / k2;
    EXPECT_NEAR(g_s1(2, 3).real(), (lp - lm) / (2 * eps), 1e-4 * std::max(1.0, std::abs(g_s1(2, 3).real())));
}

INSTANTIATE_TEST_SUITE_P(AllModes, Stage1Gradient, ::testing::Values(SlimMode::full, SlimMode::shared, SlimMode::removed));

TEST(Stage1, DatasetIsDeterministic) {
    const auto link = small_link();
    const auto a = make_stage1_dataset(link, ChainSpec::all(), 300, 5);
    const auto b = make_stage1_dataset(link, ChainSpec::all(), 300, 5);
    const auto c = make_stage1_dataset(link, ChainSpec::all(), 300, 6);
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_NE(a.hash(), c.hash());
    EXPECT_EQ(a.s1, link.bf.f_bb * a.s);
}

TEST(Stage1, TrainingReducesLossAndChecksPower) {
    const auto link = small_link();
    const auto maps = LinkMaps::from_link(link);
    const auto data = make_stage1_dataset(link, ChainSpec::all(), 1024, 8);
    StructuredDNN model(maps, 6, SlimMode::full);
    Rng r(9);
    model.init(r);
    TrainingConfig tc;
    tc.epochs = 8;
    tc.learning_rate = 3e-3;
    const auto rep = train_stage1(model, data, tc);
    ASSERT_EQ(rep.loss_curve.size(), 8u);
    EXPECT_LT(rep.final_loss, 0.5 * rep.baseline_loss);
    EXPECT_EQ(rep.param_count, model.param_count());
    const auto other = make_stage1_dataset(link.with_power(0.0), ChainSpec::all(), 64, 8);
    EXPECT_THROW(train_stage1(model, other, tc), PolicyError);
}

TEST(Stage1, TrainingIsReproducible) {
    const auto link = small_link();
    const auto maps = LinkMaps::from_link(link);
    const auto data = make_stage1_dataset(link, ChainSpec::all(), 256, 8);
    TrainingConfig tc;
    tc.epochs = 2;
    std::vector<double> first;
    for (int run = 0; run < 2; ++run) {
        StructuredDNN model(maps, 4, SlimMode::shared);
        Rng r(10);
        model.init(r);
        train_stage1(model, data, tc);
        if (run == 0) first = model.params()[1]->value;
        else EXPECT_EQ(first, model.params()[1]->value);
    }
}

TEST(Stage1, SlimmingPolicy) {
    const auto maps_hi = LinkMaps::from_link(small_link(15.0));
    const auto maps_lo = LinkMaps::from_link(small_link(0.0));
    StructuredDNN hi(maps_hi, 10, SlimMode::full), lo(maps_lo, 10, SlimMode::full);
    Rng r(11);
    EXPECT_THROW(slim(hi, {SlimKind::remove_nn2, 0, 5.0, false}, r), PolicyError);
    EXPECT_EQ(slim(hi, {SlimKind::remove_nn2, 0, 5.0, true}, r).mode(), SlimMode::removed);
    EXPECT_EQ(slim(lo, {SlimKind::remove_nn2, 8, 5.0, false}, r).param_count(), structured_param_count(SlimMode::removed, 8, 4, 32, 4));
    EXPECT_EQ(slim(hi, {SlimKind::share_nn2, 8, 5.0, false}, r).param_count(), structured_param_count(SlimMode::shared, 8, 4, 32, 4));
    EXPECT_EQ(slim(hi, {SlimKind::prune, 4, 5.0, false}, r).nh(), 4);
    EXPECT_THROW(slim(hi, {SlimKind::prune, 12, 5.0, false}, r), ArgumentError);
}

TEST(Stage1, RejectsWrongInputShape) {
    const auto maps = LinkMaps::from_link(small_link());
    StructuredDNN model(maps, 3, SlimMode::full);
    EXPECT_THROW(model.forward(CMat::Zero(3, 2)), ArgumentError);
}

TEST(Stage1, ManifestDescribesModel) {
    const auto maps = LinkMaps::from_link(small_link());
    StructuredDNN model(maps, 8, SlimMode::shared);
    const auto j = model_manifest(model, 3, 4);
    EXPECT_EQ(j.at("mode"), "share");
    EXPECT_EQ(j.at("n_hidden"), 8);
    EXPECT_EQ(j.at("param_count"), model.param_count());
}
