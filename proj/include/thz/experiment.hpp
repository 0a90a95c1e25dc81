#pragma once

#include "thz/coding.hpp"
#include "thz/stage2.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace thz {

using nlohmann::json;

struct PipelineConfig {
    int n_hidden = 10;
    int train_samples = 8000;
    int stage1_epochs = 60;
    int stage2_epochs = 30;
    int ddnn_epochs = 30;
    int batch_size = 64;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    double slim_power_threshold_dbm = 5.0;
};

struct SweepConfig {
    std::vector<double> powers_dbm{-10, -5, 0, 5, 10, 15};
    std::vector<std::string> scenarios{"ideal", "dac+adc", "iq", "pn", "shifters", "pa", "all"};
    long long symbol_vectors = 25000;  ///< per point; each vector carries N_s symbols
    int constellation_points = 2000;
};

struct CodedConfig {
    int info_bits_per_frame = 2400;
    int frames = 40;
};

/// Everything an experiment needs; every random quantity derives from seed.
struct ExperimentConfig {
    SystemConfig system;
    ChannelModel channel;
    ImpairmentParams impairments;
    PipelineConfig pipeline;
    SweepConfig sweep;
    CodedConfig coded;
    std::string out_dir = "out";
    std::uint64_t seed = 1;
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, double power_dbm = 0.0) {
    const auto p = static_cast<std::int64_t>(std::llround(power_dbm * 1000.0));
    return splitmix64(splitmix64(seed ^ fnv1a(label)) + static_cast<std::uint64_t>(p));
}

// ---------- configuration file (JSON, units in key names) ----------

namespace detail {
inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where, std::vector<std::string>& bad) {
    if (!j.is_object()) {
        bad.push_back(where + " (expected object)");
        return;
    }
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) bad.push_back(where.empty() ? k : where + "." + k);
}
template <typename T>
void get_if(const json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}
}  // namespace detail

inline json to_json(const ExperimentConfig& c) {
    const auto& s = c.system;
    const auto& ch = c.channel;
    const auto& im = c.impairments;
    const auto& pa = im.pa;
    const auto& sh = im.shifter;
    json j;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    j["system"] = {{"n_t", s.n_t}, {"n_r", s.n_r}, {"l_t", s.l_t}, {"l_r", s.l_r}, {"n_s", s.n_s},
                   {"block_len_symbols", s.block_len}, {"bandwidth_hz", s.bandwidth_hz},
                   {"transmit_power_dbm", s.transmit_power_dbm}, {"noise_psd_mw_per_hz", s.noise_psd_mw_per_hz},
                   {"snr_anchor_power_dbm", s.snr_anchor_power_dbm}, {"snr_anchor_db", s.snr_anchor_db}};
    j["channel"] = {{"n_paths", ch.n_paths},
                    {"gain_kind", ch.gain_kind == GainKind::unit_modulus ? "unit_modulus" : "complex_gaussian"},
                    {"normalization", ch.normalization == ChannelNorm::unit_frobenius ? "unit_frobenius" : "none"},
                    {"max_angle_rad", ch.max_angle_rad}, {"min_separation_over_n", ch.min_separation}};
    j["impairments"] = {
        {"dac_bits", im.dac.bits}, {"adc_bits", im.adc.bits},
        {"beta_formula", "exponential"},
        {"iq_gain_min", im.iq_gain_lo}, {"iq_gain_max", im.iq_gain_hi}, {"iq_phase_max_deg", im.iq_phase_max_deg},
        {"phase_noise_tx_var_rad2", im.pn_tx.var_rad2}, {"phase_noise_rx_var_rad2", im.pn_rx.var_rad2},
        {"shifter_amp_spread_db", sh.amp_spread_db}, {"shifter_amp_spread_is_std", sh.amp_spread_is_std},
        {"shifter_phase_spread_deg", sh.phase_spread_deg}, {"shifter_phase_spread_is_var", sh.phase_spread_is_var},
        {"shifter_amp_db_divisor", sh.amp_db_divisor}, {"phase_shifter_bits", im.phase_bits},
        {"pa", {{"alpha_a", pa.alpha_a}, {"x_sat", pa.x_sat}, {"sigma_a", pa.sigma_a}, {"alpha_phi", pa.alpha_phi},
                {"beta_phi", pa.beta_phi}, {"q1", pa.q1}, {"q2", pa.q2}, {"am_pm_degrees", pa.am_pm_degrees},
                {"drive_ref_mw", pa.drive_ref_mw}}}};
    if (im.dac.bits > 0 && std::abs(im.dac.beta - AqnmParams::from_bits(im.dac.bits).beta) > 1e-15)
        j["impairments"]["beta_formula"] = "literal_inverse_square";
    const auto& p = c.pipeline;
    j["pipeline"] = {{"n_hidden", p.n_hidden}, {"train_samples", p.train_samples}, {"stage1_epochs", p.stage1_epochs},
                     {"stage2_epochs", p.stage2_epochs}, {"ddnn_epochs", p.ddnn_epochs}, {"batch_size", p.batch_size},
                     {"learning_rate", p.learning_rate},
                     {"optimizer", p.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
                     {"slim_power_threshold_dbm", p.slim_power_threshold_dbm}};
    j["sweep"] = {{"powers_dbm", c.sweep.powers_dbm}, {"scenarios", c.sweep.scenarios},
                  {"symbol_vectors_per_point", c.sweep.symbol_vectors}, {"constellation_points", c.sweep.constellation_points}};
    j["coded"] = {{"info_bits_per_frame", c.coded.info_bits_per_frame}, {"frames", c.coded.frames}};
    return j;
}

/// Parses a config; unknown keys and type errors raise SchemaError listing the offending keys.
inline ExperimentConfig config_from_json(const json& j) {
    std::vector<std::string> bad;
    detail::check_keys(j, {"seed", "out_dir", "system", "channel", "impairments", "pipeline", "sweep", "coded"}, "", bad);
    ExperimentConfig c;
    try {
        detail::get_if(j, "seed", c.seed);
        detail::get_if(j, "out_dir", c.out_dir);
        if (j.contains("system")) {
            const json& s = j["system"];
            detail::check_keys(s, {"n_t", "n_r", "l_t", "l_r", "n_s", "block_len_symbols", "bandwidth_hz", "transmit_power_dbm",
                                   "noise_psd_mw_per_hz", "snr_anchor_power_dbm", "snr_anchor_db"}, "system", bad);
            auto& y = c.system;
            detail::get_if(s, "n_t", y.n_t);
            detail::get_if(s, "n_r", y.n_r);
            detail::get_if(s, "l_t", y.l_t);
            detail::get_if(s, "l_r", y.l_r);
            detail::get_if(s, "n_s", y.n_s);
            detail::get_if(s, "block_len_symbols", y.block_len);
            detail::get_if(s, "bandwidth_hz", y.bandwidth_hz);
            detail::get_if(s, "transmit_power_dbm", y.transmit_power_dbm);
            detail::get_if(s, "noise_psd_mw_per_hz", y.noise_psd_mw_per_hz);
            detail::get_if(s, "snr_anchor_power_dbm", y.snr_anchor_power_dbm);
            detail::get_if(s, "snr_anchor_db", y.snr_anchor_db);
        }
        if (j.contains("channel")) {
            const json& s = j["channel"];
            detail::check_keys(s, {"n_paths", "gain_kind", "normalization", "max_angle_rad", "min_separation_over_n"}, "channel", bad);
            detail::get_if(s, "n_paths", c.channel.n_paths);
            detail::get_if(s, "max_angle_rad", c.channel.max_angle_rad);
            detail::get_if(s, "min_separation_over_n", c.channel.min_separation);
            if (s.contains("gain_kind")) {
                const auto g = s["gain_kind"].get<std::string>();
                if (g == "unit_modulus") c.channel.gain_kind = GainKind::unit_modulus;
                else if (g == "complex_gaussian") c.channel.gain_kind = GainKind::complex_gaussian;
                else bad.push_back("channel.gain_kind");
            }
            if (s.contains("normalization")) {
                const auto g = s["normalization"].get<std::string>();
                if (g == "unit_frobenius") c.channel.normalization = ChannelNorm::unit_frobenius;
                else if (g == "none") c.channel.normalization = ChannelNorm::none;
                else bad.push_back("channel.normalization");
            }
        }
        if (j.contains("impairments")) {
            const json& s = j["impairments"];
            detail::check_keys(s, {"dac_bits", "adc_bits", "beta_formula", "iq_gain_min", "iq_gain_max", "iq_phase_max_deg",
                                   "phase_noise_tx_var_rad2", "phase_noise_rx_var_rad2", "shifter_amp_spread_db",
                                   "shifter_amp_spread_is_std", "shifter_phase_spread_deg", "shifter_phase_spread_is_var",
                                   "shifter_amp_db_divisor", "phase_shifter_bits", "pa"}, "impairments", bad);
            auto& im = c.impairments;
            int dac = im.dac.bits, adc = im.adc.bits;
            std::string formula = "exponential";
            detail::get_if(s, "dac_bits", dac);
            detail::get_if(s, "adc_bits", adc);
            detail::get_if(s, "beta_formula", formula);
            BetaFormula bf = BetaFormula::exponential;
            if (formula == "literal_inverse_square") bf = BetaFormula::literal_inverse_square;
            else if (formula != "exponential") bad.push_back("impairments.beta_formula");
            im.dac = AqnmParams::from_bits(dac, bf);
            im.adc = AqnmParams::from_bits(adc, bf);
            detail::get_if(s, "iq_gain_min", im.iq_gain_lo);
            detail::get_if(s, "iq_gain_max", im.iq_gain_hi);
            detail::get_if(s, "iq_phase_max_deg", im.iq_phase_max_deg);
            detail::get_if(s, "phase_noise_tx_var_rad2", im.pn_tx.var_rad2);
            detail::get_if(s, "phase_noise_rx_var_rad2", im.pn_rx.var_rad2);
            detail::get_if(s, "shifter_amp_spread_db", im.shifter.amp_spread_db);
            detail::get_if(s, "shifter_amp_spread_is_std", im.shifter.amp_spread_is_std);
            detail::get_if(s, "shifter_phase_spread_deg", im.shifter.phase_spread_deg);
            detail::get_if(s, "shifter_phase_spread_is_var", im.shifter.phase_spread_is_var);
            detail::get_if(s, "shifter_amp_db_divisor", im.shifter.amp_db_divisor);
            detail::get_if(s, "phase_shifter_bits", im.phase_bits);
            if (s.contains("pa")) {
                const json& p = s["pa"];
                detail::check_keys(p, {"alpha_a", "x_sat", "sigma_a", "alpha_phi", "beta_phi", "q1", "q2", "am_pm_degrees", "drive_ref_mw"},
                                   "impairments.pa", bad);
                auto& r = im.pa;
                detail::get_if(p, "alpha_a", r.alpha_a);
                detail::get_if(p, "x_sat", r.x_sat);
                detail::get_if(p, "sigma_a", r.sigma_a);
                detail::get_if(p, "alpha_phi", r.alpha_phi);
                detail::get_if(p, "beta_phi", r.beta_phi);
                detail::get_if(p, "q1", r.q1);
                detail::get_if(p, "q2", r.q2);
                detail::get_if(p, "am_pm_degrees", r.am_pm_degrees);
                detail::get_if(p, "drive_ref_mw", r.drive_ref_mw);
            }
        }
        if (j.contains("pipeline")) {
            const json& s = j["pipeline"];
            detail::check_keys(s, {"n_hidden", "train_samples", "stage1_epochs", "stage2_epochs", "ddnn_epochs", "batch_size",
                                   "learning_rate", "optimizer", "slim_power_threshold_dbm"}, "pipeline", bad);
            auto& p = c.pipeline;
            detail::get_if(s, "n_hidden", p.n_hidden);
            detail::get_if(s, "train_samples", p.train_samples);
            detail::get_if(s, "stage1_epochs", p.stage1_epochs);
            detail::get_if(s, "stage2_epochs", p.stage2_epochs);
            detail::get_if(s, "ddnn_epochs", p.ddnn_epochs);
            detail::get_if(s, "batch_size", p.batch_size);
            detail::get_if(s, "learning_rate", p.learning_rate);
            detail::get_if(s, "slim_power_threshold_dbm", p.slim_power_threshold_dbm);
            if (s.contains("optimizer")) {
                const auto o = s["optimizer"].get<std::string>();
                if (o == "adam") p.optimizer = OptimizerKind::adam;
                else if (o == "sgd") p.optimizer = OptimizerKind::sgd;
                else bad.push_back("pipeline.optimizer");
            }
        }
        if (j.contains("sweep")) {
            const json& s = j["sweep"];
            detail::check_keys(s, {"powers_dbm", "scenarios", "symbol_vectors_per_point", "constellation_points"}, "sweep", bad);
            detail::get_if(s, "powers_dbm", c.sweep.powers_dbm);
            detail::get_if(s, "scenarios", c.sweep.scenarios);
            detail::get_if(s, "symbol_vectors_per_point", c.sweep.symbol_vectors);
            detail::get_if(s, "constellation_points", c.sweep.constellation_points);
        }
        if (j.contains("coded")) {
            const json& s = j["coded"];
            detail::check_keys(s, {"info_bits_per_frame", "frames"}, "coded", bad);
            detail::get_if(s, "info_bits_per_frame", c.coded.info_bits_per_frame);
            detail::get_if(s, "frames", c.coded.frames);
        }
    } catch (const json::exception& e) {
        bad.push_back(std::string("type error: ") + e.what());
    }
    if (!bad.empty()) {
        std::string msg = "invalid config keys:";
        for (const auto& b : bad) msg += " " + b;
        throw SchemaError(msg);
    }
    try {
        c.system.validate();
    } catch (const ArgumentError& e) {
        throw SchemaError(std::string("invalid config values: ") + e.what());
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw SchemaError("cannot open config " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("config parse error: ") + e.what());
    }
    return config_from_json(j);
}

inline void save_config(const ExperimentConfig& c, const std::string& path) { std::ofstream(path) << to_json(c).dump(2) << "\n"; }

// ---------- statistics ----------

struct Interval {
    double lo, hi;
};

/// Wilson score interval for k successes in n trials at normal quantile z (1.96 for 95%).
inline Interval wilson_interval(std::size_t k, std::size_t n, double z = 1.959963984540054) {
    if (n == 0) return {0.0, 1.0};
    const double p = static_cast<double>(k) / n, nn = static_cast<double>(n);
    const double den = 1.0 + z * z / nn;
    const double mid = (p + z * z / (2.0 * nn)) / den;
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn)) / den;
    return {std::max(0.0, mid - half), std::min(1.0, mid + half)};
}

inline double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

/// One-sided pooled two-proportion test of H1: rate1 < rate2; returns the p-value.
inline double one_sided_less_pvalue(std::size_t k1, std::size_t n1, std::size_t k2, std::size_t n2) {
    const double p1 = static_cast<double>(k1) / n1, p2 = static_cast<double>(k2) / n2;
    const double p = static_cast<double>(k1 + k2) / static_cast<double>(n1 + n2);
    const double se = std::sqrt(p * (1.0 - p) * (1.0 / n1 + 1.0 / n2));
    if (se == 0.0) return p1 < p2 ? 0.0 : 1.0;
    return normal_upper_tail((p2 - p1) / se);
}

inline bool intervals_overlap(const Interval& a, const Interval& b) { return a.lo <= b.hi && b.lo <= a.hi; }

// ---------- CSV ----------

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

struct SweepRow {
    double power_dbm;
    double snr_db;
    std::string scenario;
    double ser;
    std::size_t errors;
    std::size_t samples;
    double ci_half;
};

inline void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    std::ofstream f(path);
    f << "power_dbm,snr_db,scenario,ser,errors,samples,ci_half_width\n";
    for (const auto& r : rows)
        f << fmt_double(r.power_dbm) << ',' << fmt_double(r.snr_db) << ',' << r.scenario << ',' << fmt_double(r.ser) << ','
          << r.errors << ',' << r.samples << ',' << fmt_double(r.ci_half) << '\n';
}

inline void write_constellation_csv(const std::string& path, const CMat& z, int block_len) {
    std::ofstream f(path);
    f << "block,stream,re,im\n";
    for (Eigen::Index j = 0; j < z.cols(); ++j)
        for (Eigen::Index i = 0; i < z.rows(); ++i)
            f << j / block_len << ',' << i << ',' << fmt_double(z(i, j).real()) << ',' << fmt_double(z(i, j).imag()) << '\n';
}

inline void write_loss_csv(const std::string& path, const TrainingReport& rep) {
    std::ofstream f(path);
    f << "epoch,loss\n";
    for (std::size_t i = 0; i < rep.loss_curve.size(); ++i) f << i + 1 << ',' << fmt_double(rep.loss_curve[i]) << '\n';
}

// ---------- link and sweeps ----------

inline LinkRealization build_link(const ExperimentConfig& c, double power_dbm) {
    SystemConfig s = c.system;
    s.rng_seed = derive_seed(c.seed, "link");
    s.transmit_power_dbm = power_dbm;
    return make_link(s, c.channel, c.impairments);
}

inline SweepRow sweep_point(const LinkRealization& link, const std::string& scenario, long long vectors, std::uint64_t seed) {
    const auto r = deploy_and_evaluate(Side::none, {}, link, ChainSpec::scenario(scenario), vectors, seed);
    const auto ci = wilson_interval(r.errors, r.symbols);
    return {link.power_dbm, r.snr_db, scenario, r.ser(), r.errors, r.symbols, (ci.hi - ci.lo) / 2.0};
}

/// Ablation SER curves over the configured power grid and scenarios; rows sorted by (power, scenario order).
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& c) {
    std::vector<SweepRow> rows;
    const LinkRealization base = build_link(c, c.system.transmit_power_dbm);
    for (double p : c.sweep.powers_dbm) {
        const LinkRealization link = base.with_power(p);
        for (const auto& sc : c.sweep.scenarios)
            rows.push_back(sweep_point(link, sc, c.sweep.symbol_vectors, derive_seed(c.seed, "sweep", p)));
    }
    return rows;
}

// ---------- training pipeline ----------

inline TrainingConfig training_config(const PipelineConfig& p, int epochs, std::uint64_t shuffle_seed) {
    TrainingConfig t;
    t.epochs = epochs;
    t.batch_size = p.batch_size;
    t.learning_rate = p.learning_rate;
    t.optimizer = p.optimizer;
    t.shuffle_seed = shuffle_seed;
    return t;
}

inline SlimMode slim_mode_from_string(const std::string& s) {
    if (s == "none" || s == "full" || s.rfind("prune:", 0) == 0) return SlimMode::full;
    if (s == "share") return SlimMode::shared;
    if (s == "remove") return SlimMode::removed;
    throw ArgumentError("unknown slim mode: " + s);
}

/// Hidden width implied by a slim flag ("prune:N" sets N, everything else keeps the default).
inline int slim_hidden(const std::string& s, int default_nh) {
    if (s.rfind("prune:", 0) == 0) return std::stoi(s.substr(6));
    return default_nh;
}

/// Trained artifacts for one link and power.
struct Pipeline {
    LinkRealization link;
    LinkMaps maps;
    Stage1Dataset data;
    CMat y_ideal;
    StructuredDNN model;
    TxCompensator tx;
    RxCompensator rx;
    DDnnBaseline ddnn;
    TrainingReport stage1_report, tx_report, rx_report, ddnn_report;
    bool has_stage1 = false, has_tx = false, has_rx = false, has_ddnn = false;
};

inline Pipeline make_pipeline(const ExperimentConfig& c, double power_dbm) {
    Pipeline p;
    p.link = build_link(c, power_dbm);
    p.maps = LinkMaps::from_link(p.link);
    p.data = make_stage1_dataset(p.link, ChainSpec::all(), c.pipeline.train_samples, derive_seed(c.seed, "stage1-data", power_dbm));
    p.y_ideal = ideal_rx(p.data.s, p.link);
    return p;
}

inline void run_stage1(Pipeline& p, const ExperimentConfig& c, SlimMode mode, int nh) {
    if (mode == SlimMode::removed && p.link.power_dbm >= c.pipeline.slim_power_threshold_dbm)
        throw PolicyError("NN2 removal is only allowed below the power threshold");
    p.model = StructuredDNN(p.maps, nh, mode);
    Rng init(derive_seed(c.seed, "stage1-init", p.link.power_dbm));
    p.model.init(init);
    p.stage1_report = train_stage1(p.model, p.data, training_config(c.pipeline, c.pipeline.stage1_epochs, derive_seed(c.seed, "stage1-shuffle", p.link.power_dbm)));
    p.has_stage1 = true;
}

inline void run_tx(Pipeline& p, const ExperimentConfig& c, int nh) {
    if (!p.has_stage1) throw DependencyError("Tx compensation needs a trained stage-1 model");
    p.tx = TxCompensator(p.maps, nh);
    Rng init(derive_seed(c.seed, "tx-init", p.link.power_dbm));
    p.tx.init(init);
    p.tx_report = train_tx_comp(p.tx, p.model, p.data.s1, p.y_ideal, training_config(c.pipeline, c.pipeline.stage2_epochs, derive_seed(c.seed, "tx-shuffle", p.link.power_dbm)));
    p.has_tx = true;
}

inline void run_rx(Pipeline& p, const ExperimentConfig& c, int nh) {
    if (!p.has_stage1) throw DependencyError("Rx compensation needs a trained stage-1 model");
    p.rx = RxCompensator(p.maps, nh);
    Rng init(derive_seed(c.seed, "rx-init", p.link.power_dbm));
    p.rx.init(init);
    p.rx_report = train_rx_comp(p.rx, p.model, p.data.s1, p.y_ideal, training_config(c.pipeline, c.pipeline.stage2_epochs, derive_seed(c.seed, "rx-shuffle", p.link.power_dbm)));
    p.has_rx = true;
}

inline void run_ddnn(Pipeline& p, const ExperimentConfig& c) {
    p.ddnn = DDnnBaseline(p.maps);
    Rng init(derive_seed(c.seed, "ddnn-init", p.link.power_dbm));
    p.ddnn.init(init);
    const CMat y_in = receiver_agc(p.data.ye, p.link);
    p.ddnn_report = train_ddnn(p.ddnn, y_in, p.y_ideal, p.maps.kappa, training_config(c.pipeline, c.pipeline.ddnn_epochs, derive_seed(c.seed, "ddnn-shuffle", p.link.power_dbm)));
    p.has_ddnn = true;
}

inline Compensators compensators(const Pipeline& p) {
    return {p.has_tx ? &p.tx : nullptr, p.has_rx ? &p.rx : nullptr, p.has_ddnn ? &p.ddnn : nullptr};
}

inline EvalResult evaluate_side(const Pipeline& p, const ExperimentConfig& c, Side side, long long vectors, Eigen::Index keep = 0) {
    return deploy_and_evaluate(side, compensators(p), p.link, ChainSpec::all(), vectors, derive_seed(c.seed, "evaluate", p.link.power_dbm), keep);
}

// ---------- persistence ----------

inline std::string power_tag(double p_dbm) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "p%+.1f", p_dbm);
    return buf;
}

inline std::string checkpoint_path(const std::string& dir, const char* what, double p_dbm) {
    return (std::filesystem::path(dir) / (std::string(what) + "_" + power_tag(p_dbm) + ".ckpt")).string();
}

inline void save_pipeline(const Pipeline& p, const ExperimentConfig& c, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const double pw = p.link.power_dbm;
    const std::uint64_t link_seed = derive_seed(c.seed, "link");
    if (p.has_stage1) {
        save_checkpoint(checkpoint_path(dir, "stage1", pw), p.model.params(), model_manifest(p.model, link_seed, p.data.hash()));
        write_loss_csv((std::filesystem::path(dir) / ("stage1_loss_" + power_tag(pw) + ".csv")).string(), p.stage1_report);
    }
    auto meta = [&](const char* kind, std::size_t n, int nh) {
        return json{{"kind", kind}, {"n_hidden", nh}, {"param_count", n}, {"power_dbm", pw}, {"link_seed", link_seed}};
    };
    if (p.has_tx) {
        save_checkpoint(checkpoint_path(dir, "tx", pw), {&p.tx.bank().params()}, meta("tx", p.tx.param_count(), p.tx.bank().nh()));
        write_loss_csv((std::filesystem::path(dir) / ("tx_loss_" + power_tag(pw) + ".csv")).string(), p.tx_report);
    }
    if (p.has_rx) {
        save_checkpoint(checkpoint_path(dir, "rx", pw), {&p.rx.bank().params()}, meta("rx", p.rx.param_count(), p.rx.bank().nh()));
        write_loss_csv((std::filesystem::path(dir) / ("rx_loss_" + power_tag(pw) + ".csv")).string(), p.rx_report);
    }
    if (p.has_ddnn) {
        save_checkpoint(checkpoint_path(dir, "ddnn", pw), {&p.ddnn.mlp().params()}, meta("ddnn", p.ddnn.param_count(), 10));
        write_loss_csv((std::filesystem::path(dir) / ("ddnn_loss_" + power_tag(pw) + ".csv")).string(), p.ddnn_report);
    }
}

/// Rebuilds the link from the seed and loads the trained networks; a missing stage-1 checkpoint raises DependencyError.
inline Pipeline load_pipeline(const ExperimentConfig& c, double power_dbm, const std::string& dir) {
    Pipeline p;
    p.link = build_link(c, power_dbm);
    p.maps = LinkMaps::from_link(p.link);
    const std::string s1 = checkpoint_path(dir, "stage1", power_dbm);
    if (!std::filesystem::exists(s1)) throw DependencyError("no trained stage-1 model at " + s1);
    std::ifstream js(s1 + ".json");
    if (!js) throw DependencyError("missing manifest " + s1 + ".json");
    const json man = json::parse(js);
    const std::string mode = man.at("mode").get<std::string>();
    const SlimMode m = slim_mode_from_string(mode);
    p.model = StructuredDNN(p.maps, man.at("n_hidden").get<int>(), m);
    load_checkpoint(s1, p.model.params());
    p.has_stage1 = true;
    auto nh_of = [](const std::string& path) {
        std::ifstream f(path + ".json");
        return f ? json::parse(f).at("n_hidden").get<int>() : 10;
    };
    if (const auto t = checkpoint_path(dir, "tx", power_dbm); std::filesystem::exists(t)) {
        p.tx = TxCompensator(p.maps, nh_of(t));
        load_checkpoint(t, {&p.tx.bank().params()});
        p.has_tx = true;
    }
    if (const auto t = checkpoint_path(dir, "rx", power_dbm); std::filesystem::exists(t)) {
        p.rx = RxCompensator(p.maps, nh_of(t));
        load_checkpoint(t, {&p.rx.bank().params()});
        p.has_rx = true;
    }
    if (const auto t = checkpoint_path(dir, "ddnn", power_dbm); std::filesystem::exists(t)) {
        p.ddnn = DDnnBaseline(p.maps);
        load_checkpoint(t, {&p.ddnn.mlp().params()});
        p.has_ddnn = true;
    }
    return p;
}

// ---------- parameter report ----------

struct ParamRow {
    std::string config;
    std::size_t params;
};

inline std::vector<ParamRow> params_report(const SystemConfig& s) {
    std::vector<ParamRow> rows;
    for (int nh : {10, 8, 4, 2})
        rows.push_back({"full_nh" + std::to_string(nh), structured_param_count(SlimMode::full, nh, s.l_t, s.n_t, s.l_r)});
    for (int nh : {10, 8}) {
        rows.push_back({"share_nh" + std::to_string(nh), structured_param_count(SlimMode::shared, nh, s.l_t, s.n_t, s.l_r)});
        rows.push_back({"remove_nh" + std::to_string(nh), structured_param_count(SlimMode::removed, nh, s.l_t, s.n_t, s.l_r)});
    }
    rows.push_back({"ddnn", Mlp({2 * s.n_s, 10, 10, 10, 2 * s.n_s}).param_count()});
    return rows;
}

inline void write_params_csv(const std::string& path, const std::vector<ParamRow>& rows) {
    std::ofstream f(path);
    f << "config,params\n";
    for (const auto& r : rows) f << r.config << ',' << r.params << '\n';
}

// ---------- coded system ----------

struct CodedResult {
    std::size_t coded_symbol_errors = 0, coded_symbols = 0;
    std::size_t uncoded_symbol_errors = 0, uncoded_symbols = 0;
    double coded_ser() const { return coded_symbols ? double(coded_symbol_errors) / coded_symbols : 0.0; }
    double uncoded_ser() const { return uncoded_symbols ? double(uncoded_symbol_errors) / uncoded_symbols : 0.0; }
};

/// Rate-2/3 coded 16-QAM through the real chain; coded SER counts wrong 4-bit groups of decoded information bits.
inline CodedResult run_coded(const Pipeline& p, const ExperimentConfig& c, Side side) {
    CodedResult res;
    const auto& link = p.link;
    const int ns = link.cfg.n_s;
    const CMat eff = link.effective();
    Rng root(derive_seed(c.seed, "coded", link.power_dbm));
    Rng bits_rng = root.child("bits");
    const Rng chain_rng = root.child("chain");
    std::uint64_t block_id = 0;
    for (int fr = 0; fr < c.coded.frames; ++fr) {
        Bits info(static_cast<std::size_t>(c.coded.info_bits_per_frame));
        for (auto& b : info) b = static_cast<std::uint8_t>(bits_rng.below(2));
        Bits coded = conv_encode(info);
        const std::size_t coded_len = coded.size();
        const std::size_t per_vec = static_cast<std::size_t>(4 * ns);
        coded.resize((coded.size() + per_vec - 1) / per_vec * per_vec, 0);
        const std::vector<cd> syms = modulate(coded);
        const Eigen::Index nvec = static_cast<Eigen::Index>(syms.size()) / ns;
        CMat s(ns, nvec);
        for (Eigen::Index j = 0; j < nvec; ++j)
            for (int i = 0; i < ns; ++i) s(i, j) = syms[static_cast<std::size_t>(j * ns + i)];
        CMat sh(ns, nvec);
        const Eigen::Index t = link.cfg.block_len;
        for (Eigen::Index j = 0; j < nvec; j += t) {
            const Eigen::Index n = std::min(t, nvec - j);
            ChainStreams st(chain_rng.child(block_id++));
            sh.middleCols(j, n) = receive_equalized(side, compensators(p), link, ChainSpec::all(), eff, s.middleCols(j, n), st);
        }
        std::vector<cd> rx(syms.size());
        for (Eigen::Index j = 0; j < nvec; ++j)
            for (int i = 0; i < ns; ++i) rx[static_cast<std::size_t>(j * ns + i)] = sh(i, j);
        for (std::size_t k = 0; k < syms.size(); ++k) res.uncoded_symbol_errors += Qam16::decide(syms[k]) != Qam16::decide(rx[k]);
        res.uncoded_symbols += syms.size();
        Bits hard = demodulate_hard(rx);
        hard.resize(coded_len);
        const Bits dec = viterbi_decode(hard, info.size());
        for (std::size_t k = 0; k + 4 <= info.size(); k += 4) {
            bool err = false;
            for (int b = 0; b < 4; ++b) err = err || dec[k + b] != info[k + b];
            res.coded_symbol_errors += err;
            ++res.coded_symbols;
        }
    }
    return res;
}

}  // namespace thz
