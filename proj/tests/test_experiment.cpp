#include "test_util.hpp"

using namespace thz;
using namespace thz::testing;

namespace {
std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}
std::string temp_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}
}  // namespace

TEST(Config, RoundTripIsLossless) {
    ExperimentConfig c = small_experiment();
    c.impairments.pa.drive_ref_mw = 0.7;
    c.impairments.dac = AqnmParams::from_bits(3);
    c.impairments.adc = AqnmParams::from_bits(3);
    c.pipeline.optimizer = OptimizerKind::sgd;
    c.channel.gain_kind = GainKind::complex_gaussian;
    c.seed = 99;
    const json j = to_json(c);
    const ExperimentConfig back = config_from_json(j);
    EXPECT_EQ(to_json(back), j);
    EXPECT_EQ(back.seed, 99u);
    EXPECT_EQ(back.impairments.dac.bits, 3);
    EXPECT_DOUBLE_EQ(back.impairments.pa.drive_ref_mw, 0.7);
    EXPECT_EQ(config_from_json(json::parse(j.dump())).sweep.scenarios, c.sweep.scenarios);
}

TEST(Config, PartialConfigKeepsDefaults) {
    const auto c = config_from_json(json::parse(R"({"seed": 5, "system": {"transmit_power_dbm": 3.0}})"));
    EXPECT_EQ(c.seed, 5u);
    EXPECT_DOUBLE_EQ(c.system.transmit_power_dbm, 3.0);
    EXPECT_EQ(c.system.n_t, 256);
}

TEST(Config, UnknownKeysAreReportedWithPaths) {
    try {
        config_from_json(json::parse(R"({"sed": 1, "system": {"n_tx": 3}, "impairments": {"pa": {"gain": 1}}})"));
        FAIL() << "expected SchemaError";
    } catch (const SchemaError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("sed"), std::string::npos);
        EXPECT_NE(msg.find("system.n_tx"), std::string::npos);
        EXPECT_NE(msg.find("impairments.pa.gain"), std::string::npos);
    }
}

TEST(Config, BadTypesAndValuesAreRejected) {
    EXPECT_THROW(config_from_json(json::parse(R"({"system": {"n_t": "many"}})")), SchemaError);
    EXPECT_THROW(config_from_json(json::parse(R"({"pipeline": {"optimizer": "lbfgs"}})")), SchemaError);
    EXPECT_THROW(config_from_json(json::parse(R"({"system": {"n_s": 9}})")), SchemaError);
    EXPECT_THROW(load_config("/nonexistent/config.json"), SchemaError);
}

TEST(Config, DerivedSeedsAreDistinct) {
    EXPECT_NE(derive_seed(1, "link"), derive_seed(1, "sweep"));
    EXPECT_NE(derive_seed(1, "sweep", 5.0), derive_seed(1, "sweep", 10.0));
    EXPECT_NE(derive_seed(1, "link"), derive_seed(2, "link"));
    EXPECT_EQ(derive_seed(3, "x", 1.5), derive_seed(3, "x", 1.5));
}

TEST(Stats, WilsonIntervalKnownValues) {
    const auto a = wilson_interval(5, 10);
    EXPECT_NEAR(a.lo, 0.2366, 1e-4);
    EXPECT_NEAR(a.hi, 0.7634, 1e-4);
    const auto b = wilson_interval(0, 10);
    EXPECT_EQ(b.lo, 0.0);
    EXPECT_NEAR(b.hi, 0.2775, 1e-4);
    EXPECT_TRUE(intervals_overlap(a, b));
    EXPECT_FALSE(intervals_overlap({0.1, 0.2}, {0.3, 0.4}));
}

TEST(Stats, OneSidedProportionTest) {
    EXPECT_LT(one_sided_less_pvalue(100, 10000, 200, 10000), 1e-6);
    EXPECT_NEAR(one_sided_less_pvalue(150, 10000, 150, 10000), 0.5, 1e-12);
    EXPECT_GT(one_sided_less_pvalue(200, 10000, 100, 10000), 0.99);
    EXPECT_NEAR(one_sided_less_pvalue(0, 10, 0, 10), 1.0, 0.0);
}

TEST(Experiment, ParamsReport) {
    const auto rows = params_report(SystemConfig{});
    std::map<std::string, std::size_t> m;
    for (const auto& r : rows) m[r.config] = r.params;
    EXPECT_EQ(m["full_nh10"], 13728u);
    EXPECT_EQ(m["full_nh8"], 11088u);
    EXPECT_EQ(m["full_nh4"], 5808u);
    EXPECT_EQ(m["full_nh2"], 3168u);
    EXPECT_EQ(m["share_nh10"], 468u);
    EXPECT_EQ(m["remove_nh10"], 416u);
    EXPECT_EQ(m["share_nh8"], 378u);
    EXPECT_EQ(m["remove_nh8"], 336u);
    EXPECT_EQ(m["ddnn"], 398u);
}

TEST(Experiment, SweepCsvIsByteReproducible) {
    const auto c = small_experiment();
    const std::string d = temp_dir("thz_sweep");
    write_sweep_csv(d + "/a.csv", run_sweep(c));
    write_sweep_csv(d + "/b.csv", run_sweep(c));
    const std::string a = slurp(d + "/a.csv");
    EXPECT_EQ(a, slurp(d + "/b.csv"));
    EXPECT_EQ(a.substr(0, a.find('\n')), "power_dbm,snr_db,scenario,ser,errors,samples,ci_half_width");
    EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 5);
}

TEST(Experiment, PipelineSaveLoadEvaluate) {
    const auto c = small_experiment();
    const std::string d = temp_dir("thz_models");
    EXPECT_THROW(load_pipeline(c, 15.0, d), DependencyError);
    Pipeline p = make_pipeline(c, 15.0);
    EXPECT_THROW(run_tx(p, c, 4), DependencyError);
    EXPECT_THROW(run_stage1(p, c, SlimMode::removed, 4), PolicyError);
    run_stage1(p, c, SlimMode::full, 4);
    run_tx(p, c, 4);
    run_rx(p, c, 4);
    run_ddnn(p, c);
    save_pipeline(p, c, d);
    const Pipeline q = load_pipeline(c, 15.0, d);
    ASSERT_TRUE(q.has_tx && q.has_rx && q.has_ddnn);
    EXPECT_EQ(params_checksum(q.model.params()), params_checksum(p.model.params()));
    for (Side s : {Side::none, Side::tx, Side::rx, Side::ddnn}) {
        const auto a = evaluate_side(p, c, s, 300);
        const auto b = evaluate_side(q, c, s, 300);
        EXPECT_EQ(a.errors, b.errors) << to_string(s);
    }
    const auto coded = run_coded(q, c, Side::tx);
    EXPECT_EQ(coded.coded_symbols, 2u * 100u);
    EXPECT_GT(coded.uncoded_symbols, 0u);
    EXPECT_TRUE(std::filesystem::exists(d + "/stage1_loss_" + power_tag(15.0) + ".csv"));
}

TEST(Experiment, ConstellationCsvLayout) {
    const std::string d = temp_dir("thz_const");
    CMat z(2, 3);
    z << cd(1, 2), cd(3, 4), cd(5, 6), cd(7, 8), cd(9, 10), cd(11, 12);
    write_constellation_csv(d + "/c.csv", z, 2);
    EXPECT_EQ(slurp(d + "/c.csv"), "block,stream,re,im\n0,0,1,2\n0,1,7,8\n0,0,3,4\n0,1,9,10\n1,0,5,6\n1,1,11,12\n");
}

TEST(Experiment, SlimFlagParsing) {
    EXPECT_EQ(slim_mode_from_string("none"), SlimMode::full);
    EXPECT_EQ(slim_mode_from_string("prune:4"), SlimMode::full);
    EXPECT_EQ(slim_hidden("prune:4", 10), 4);
    EXPECT_EQ(slim_mode_from_string("share"), SlimMode::shared);
    EXPECT_EQ(slim_mode_from_string("remove"), SlimMode::removed);
    EXPECT_THROW(slim_mode_from_string("halve"), ArgumentError);
}
