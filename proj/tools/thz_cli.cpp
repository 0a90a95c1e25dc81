#include "thz/thz.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace thz;

namespace {

struct Common {
    std::string config;
    std::string out;
    std::vector<double> powers;
    long long seed = -1;
    std::string slim = "none";
    long long vectors = 0;
};

ExperimentConfig resolve(const Common& o) {
    ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
    if (!o.out.empty()) c.out_dir = o.out;
    if (o.seed >= 0) c.seed = static_cast<std::uint64_t>(o.seed);
    if (!o.powers.empty()) c.sweep.powers_dbm = o.powers;
    if (o.vectors > 0) c.sweep.symbol_vectors = o.vectors;
    std::filesystem::create_directories(c.out_dir);
    return c;
}

std::string models_dir(const ExperimentConfig& c, const std::string& slim) {
    std::string tag = slim;
    for (char& ch : tag)
        if (ch == ':') ch = '_';
    return (std::filesystem::path(c.out_dir) / ("models_" + tag)).string();
}

std::string out_file(const ExperimentConfig& c, const std::string& name) {
    return (std::filesystem::path(c.out_dir) / name).string();
}

int cmd_sweep(const Common& o) {
    const auto c = resolve(o);
    const auto rows = run_sweep(c);
    write_sweep_csv(out_file(c, "sweep.csv"), rows);
    for (const auto& r : rows)
        std::printf("%6.1f dBm  %-9s SER %.5f (+/- %.5f)  SNR %.2f dB\n", r.power_dbm, r.scenario.c_str(), r.ser, r.ci_half, r.snr_db);
    return 0;
}

int cmd_train(const Common& o) {
    const auto c = resolve(o);
    const SlimMode mode = slim_mode_from_string(o.slim);
    const int nh = slim_hidden(o.slim, c.pipeline.n_hidden);
    const std::string dir = models_dir(c, o.slim);
    for (double p : c.sweep.powers_dbm) {
        Pipeline pl = make_pipeline(c, p);
        run_stage1(pl, c, mode, nh);
        run_tx(pl, c, c.pipeline.n_hidden);
        run_rx(pl, c, c.pipeline.n_hidden);
        run_ddnn(pl, c);
        save_pipeline(pl, c, dir);
        std::printf("%6.1f dBm  stage1 %.5f  tx %.5f  rx %.5f  ddnn %.5f  (%zu stage-1 params)\n", p, pl.stage1_report.final_loss,
                    pl.tx_report.final_loss, pl.rx_report.final_loss, pl.ddnn_report.final_loss, pl.model.param_count());
    }
    save_config(c, out_file(c, "config.json"));
    return 0;
}

int cmd_evaluate(const Common& o) {
    const auto c = resolve(o);
    const std::string dir = models_dir(c, o.slim);
    std::ofstream f(out_file(c, "compensation.csv"));
    f << "power_dbm,side,ser,errors,samples,ci_half_width,snr_db\n";
    for (double p : c.sweep.powers_dbm) {
        const Pipeline pl = load_pipeline(c, p, dir);
        for (Side s : {Side::none, Side::tx, Side::rx, Side::ddnn}) {
            if ((s == Side::tx && !pl.has_tx) || (s == Side::rx && !pl.has_rx) || (s == Side::ddnn && !pl.has_ddnn)) continue;
            const auto r = evaluate_side(pl, c, s, c.sweep.symbol_vectors);
            const auto ci = wilson_interval(r.errors, r.symbols);
            f << fmt_double(p) << ',' << to_string(s) << ',' << fmt_double(r.ser()) << ',' << r.errors << ',' << r.symbols << ','
              << fmt_double((ci.hi - ci.lo) / 2.0) << ',' << fmt_double(r.snr_db) << '\n';
            std::printf("%6.1f dBm  %-5s SER %.5f\n", p, to_string(s), r.ser());
        }
    }
    return 0;
}

int cmd_constellation(const Common& o, const std::string& side) {
    const auto c = resolve(o);
    const Side s = side_from_string(side);
    for (double p : c.sweep.powers_dbm) {
        const Pipeline pl = load_pipeline(c, p, models_dir(c, o.slim));
        const auto n = static_cast<Eigen::Index>(c.sweep.constellation_points);
        const auto r = evaluate_side(pl, c, s, n, n);
        write_constellation_csv(out_file(c, "constellation_" + side + "_" + power_tag(p) + ".csv"), r.constellation, c.system.block_len);
    }
    return 0;
}

int cmd_coded(const Common& o) {
    const auto c = resolve(o);
    std::ofstream f(out_file(c, "coded.csv"));
    f << "power_dbm,coded_ser,coded_symbols,uncoded_ser,uncoded_symbols\n";
    for (double p : c.sweep.powers_dbm) {
        const Pipeline pl = load_pipeline(c, p, models_dir(c, o.slim));
        const auto r = run_coded(pl, c, Side::tx);
        f << fmt_double(p) << ',' << fmt_double(r.coded_ser()) << ',' << r.coded_symbols << ',' << fmt_double(r.uncoded_ser()) << ','
          << r.uncoded_symbols << '\n';
        std::printf("%6.1f dBm  coded SER %.5f  uncoded SER %.5f\n", p, r.coded_ser(), r.uncoded_ser());
    }
    return 0;
}

int cmd_params(const Common& o) {
    const auto c = resolve(o);
    const auto rows = params_report(c.system);
    write_params_csv(out_file(c, "params.csv"), rows);
    for (const auto& r : rows) std::printf("%-12s %zu\n", r.config.c_str(), r.params);
    return 0;
}

int cmd_selftest() {
    int failures = 0;
    auto check = [&](bool ok, const char* what) {
        std::printf("%s %s\n", ok ? "ok  " : "FAIL", what);
        failures += !ok;
    };
    SystemConfig s;
    check(structured_param_count(SlimMode::full, 10, s.l_t, s.n_t, s.l_r) == 13728, "stage-1 parameter count");
    Rng rng(5);
    Bits info(200);
    for (auto& b : info) b = static_cast<std::uint8_t>(rng.below(2));
    check(viterbi_decode(conv_encode(info), info.size()) == info, "convolutional code round trip");
    ExperimentConfig c;
    const auto link = build_link(c, 15.0);
    const auto blk = random_symbols(s.n_s, 64, rng);
    ChainStreams st(rng.child("chain"));
    ChainSpec spec = ChainSpec::ideal();
    spec.thermal_noise = false;
    const CMat y = rx_chain(tx_chain(blk.s, spec, link, st), spec, link, st);
    check((y - ideal_rx(blk.s, link)).norm() <= 1e-12 * y.norm(), "ideal chain collapse");
    check(to_json(config_from_json(to_json(c))) == to_json(c), "config round trip");
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"THz hybrid-beamforming link simulator with learned impairment compensation"};
    app.require_subcommand(1);
    Common o;
    std::string side = "tx";
    std::string dump;
    auto add_common = [&](CLI::App* sc) {
        sc->add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
        sc->add_option("--out", o.out, "output directory");
        sc->add_option("--seed", o.seed, "top-level seed");
        sc->add_option("--power-dbm", o.powers, "transmit powers in dBm")->delimiter(',');
        sc->add_option("--slim", o.slim, "stage-1 size: none, prune:N, share, remove");
        sc->add_option("--symbols", o.vectors, "symbol vectors per evaluation point");
    };
    auto* sweep = app.add_subcommand("sweep", "ablation SER versus transmit power");
    auto* train = app.add_subcommand("train", "train stage-1 model, compensators and D-DNN");
    auto* evaluate = app.add_subcommand("evaluate", "SER of trained compensators on the real chain");
    auto* constel = app.add_subcommand("constellation", "equalized constellation samples");
    auto* coded = app.add_subcommand("coded", "rate-2/3 convolutionally coded link");
    auto* params = app.add_subcommand("params", "parameter-count report");
    auto* selftest = app.add_subcommand("selftest", "quick internal consistency checks");
    auto* cfg = app.add_subcommand("config", "write the default config");
    for (auto* sc : {sweep, train, evaluate, constel, coded, params}) add_common(sc);
    constel->add_option("--side", side, "none, tx, rx or ddnn");
    cfg->add_option("path", dump, "output path")->required();
    CLI11_PARSE(app, argc, argv);
    try {
        if (*sweep) return cmd_sweep(o);
        if (*train) return cmd_train(o);
        if (*evaluate) return cmd_evaluate(o);
        if (*constel) return cmd_constellation(o, side);
        if (*coded) return cmd_coded(o);
        if (*params) return cmd_params(o);
        if (*selftest) return cmd_selftest();
        if (*cfg) {
            save_config(ExperimentConfig{}, dump);
            return 0;
        }
    } catch (const SchemaError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DependencyError& e) {
        std::cerr << "missing prerequisite: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
