// Acceptance suite: one PASS/FAIL line per criterion, full-size arrays, default seed.

#include "thz/thz.hpp"

#include <bit>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>

using namespace thz;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Reporter {
    int failed = 0;
    void line(int id, bool pass, const std::string& title, const std::string& detail) {
        std::printf("%s  C%-2d %s | %s\n", pass ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
        std::fflush(stdout);
        failed += !pass;
    }
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---- pinned tolerances and budgets ----
constexpr double kGradRelTol = 1e-4;
constexpr int kGradProbesPerNet = 100;
constexpr double kAqnmRelTol = 0.03;
constexpr std::size_t kAqnmSamples = 100000;
constexpr double kRappGainDb = 13.46, kRappGainTolDb = 0.1;
constexpr double kRappSatRelTol = 1e-3;
constexpr int kRappGrid = 10000;
constexpr double kCollapseRelTol = 1e-12;
constexpr long long kVectorsPerPoint = 25000;  // 4 streams -> 1e5 symbols
constexpr double kAlpha = 0.05;
constexpr double kTxSerCeiling = 1e-2;
constexpr double kSlimRatio = 3.0;
constexpr double kLowPowerDbm = 0.0;

/// Max relative error of analytic vs central-difference gradients over random probes spread across blocks.
double gradient_error(std::vector<ParamBlock*> blocks, const std::function<double()>& loss, int total, Rng& r) {
    double worst = 0.0;
    std::size_t n = 0;
    for (auto* b : blocks) n += b->size();
    for (int k = 0; k < total; ++k) {
        std::size_t i = static_cast<std::size_t>(r.below(n));
        ParamBlock* b = blocks.front();
        for (auto* c : blocks) {
            if (i < c->size()) {
                b = c;
                break;
            }
            i -= c->size();
        }
        const double h = 1e-6, keep = b->value[i];
        b->value[i] = keep + h;
        const double lp = loss();
        b->value[i] = keep - h;
        const double lm = loss();
        b->value[i] = keep;
        const double num = (lp - lm) / (2 * h), ana = b->grad[i];
        worst = std::max(worst, std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-6}));
    }
    return worst;
}

void criterion1(Reporter& rep) {
    const auto t0 = Clock::now();
    const SystemConfig s;
    const std::map<std::string, std::size_t> expected{{"full_nh10", 13728}, {"full_nh8", 11088}, {"full_nh4", 5808},
                                                      {"full_nh2", 3168},   {"share_nh10", 468}, {"remove_nh10", 416},
                                                      {"share_nh8", 378},   {"remove_nh8", 336}, {"ddnn", 398}};
    bool ok = true;
    std::string detail;
    for (const auto& r : params_report(s)) {
        const auto it = expected.find(r.config);
        ok = ok && it != expected.end() && it->second == r.params;
        detail += r.config + "=" + std::to_string(r.params) + " ";
    }
    const std::size_t nh6 = structured_param_count(SlimMode::full, 6, s.l_t, s.n_t, s.l_r);
    ok = ok && nh6 == 8448;
    const double t = seconds_since(t0);
    rep.line(1, ok && t < 1.0, "parameter-count table", detail + fmt("full_nh6=%zu (%.3fs)", nh6, t));
}

void criterion2(Reporter& rep, const ExperimentConfig& c) {
    const auto t0 = Clock::now();
    const LinkRealization link = build_link(c, 15.0);
    const LinkMaps maps = LinkMaps::from_link(link);
    Rng r(derive_seed(c.seed, "acceptance-grad"));
    const auto blk = random_symbols(link.cfg.n_s, 8, r);
    const CMat s1 = link.bf.f_bb * blk.s, t = ideal_rx(blk.s, link);
    const double k2 = maps.kappa * maps.kappa, nominal = maps.nominal_energy();

    StructuredDNN model(maps, c.pipeline.n_hidden, SlimMode::full);
    Rng ri = r.child("init");
    model.init(ri);
    for (auto* p : model.params())
        for (auto& v : p->value) v += 0.05 * r.normal();
    auto l_model = [&] { return (model.forward(s1) - t).squaredNorm() / k2; };
    StructuredDNN::Cache mc;
    CMat y = model.forward(s1, &mc);
    for (auto* p : model.params()) p->zero_grad();
    model.backward(mc, 2.0 * (y - t) / k2);
    const double e_model = gradient_error(model.params(), l_model, kGradProbesPerNet, r);

    TxCompensator tx(maps, c.pipeline.n_hidden);
    tx.init(ri);
    auto l_tx = [&] {
        BlockNorm agc;
        return (agc.forward(model.forward(tx.forward(s1)), nominal) - t).squaredNorm() / k2;
    };
    TxCompensator::Cache tc;
    BlockNorm agc;
    y = agc.forward(model.forward(tx.forward(s1, &tc), &mc), nominal);
    tx.bank().params().zero_grad();
    tx.backward(tc, model.backward(mc, agc.backward(2.0 * (y - t) / k2)));
    const double e_tx = gradient_error({&tx.bank().params()}, l_tx, kGradProbesPerNet, r);

    RxCompensator rx(maps, c.pipeline.n_hidden);
    rx.init(ri);
    const CMat s6 = model.forward_inner(s1);
    auto l_rx = [&] { return (rx.forward(s6) - t).squaredNorm() / k2; };
    RxCompensator::Cache rc;
    y = rx.forward(s6, &rc);
    rx.bank().params().zero_grad();
    rx.backward(rc, 2.0 * (y - t) / k2);
    const double e_rx = gradient_error({&rx.bank().params()}, l_rx, kGradProbesPerNet, r);

    const double worst = std::max({e_model, e_tx, e_rx}), secs = seconds_since(t0);
    rep.line(2, worst < kGradRelTol && secs < 30.0, "gradient correctness",
             fmt("max rel err stage1 %.2e, tx %.2e, rx %.2e over %d probes (%.1fs)", e_model, e_tx, e_rx, 3 * kGradProbesPerNet, secs));
}

void criterion3(Reporter& rep) {
    const auto t0 = Clock::now();
    bool ok = true;
    std::string detail;
    for (int b : {2, 4, 8}) {
        const AqnmParams p = AqnmParams::from_bits(b);
        Rng r(1000 + b);
        CMat x(1, static_cast<Eigen::Index>(kAqnmSamples));
        for (Eigen::Index j = 0; j < x.cols(); ++j) x(0, j) = Qam16::point(static_cast<int>(r.below(16)));
        const CMat q = aqnm_quantize(x, p, r) - p.alpha * x;
        const double ratio = (q.squaredNorm() / x.size()) / (p.alpha * p.beta * x.squaredNorm() / x.size());
        ok = ok && std::abs(ratio - 1.0) < kAqnmRelTol;
        detail += fmt("b=%d ratio %.4f; ", b, ratio);
    }
    const double t = seconds_since(t0);
    rep.line(3, ok && t < 10.0, "AQNM statistics", detail + fmt("(%.2fs)", t));
}

void criterion4(Reporter& rep) {
    const auto t0 = Clock::now();
    const RappPaParams p;
    const double g = 20.0 * std::log10(p.am_am(1e-7) / 1e-7);
    const double sat = p.am_am(1e7);
    bool mono = true;
    double prev = -1.0;
    for (int i = 0; i <= kRappGrid; ++i) {
        const double v = p.am_am(5.0 * i / kRappGrid);
        mono = mono && v > prev;
        prev = v;
    }
    const double t = seconds_since(t0);
    const bool ok = std::abs(g - kRappGainDb) <= kRappGainTolDb && std::abs(sat / 0.663 - 1.0) <= kRappSatRelTol && mono && t < 5.0;
    rep.line(4, ok, "Rapp oracle", fmt("gain %.4f dB, asymptote %.6f, monotone %s (%.3fs)", g, sat, mono ? "yes" : "no", t));
}

void criterion5(Reporter& rep, const ExperimentConfig& c) {
    const auto t0 = Clock::now();
    const LinkRealization link = build_link(c, 15.0);
    Rng r(derive_seed(c.seed, "acceptance-collapse"));
    const auto blk = random_symbols(link.cfg.n_s, 250, r);
    ChainSpec spec = ChainSpec::ideal();
    spec.thermal_noise = false;
    ChainStreams st(r);
    const CMat y = rx_chain(tx_chain(blk.s, spec, link, st), spec, link, st);
    const CMat yi = ideal_rx(blk.s, link);
    const double rel = (y - yi).norm() / yi.norm(), t = seconds_since(t0);
    rep.line(5, rel <= kCollapseRelTol && t < 5.0, "identity collapse", fmt("relative difference %.2e on %ld symbols (%.2fs)", rel, long(blk.s.size()), t));
}

void criterion6(Reporter& rep, const ExperimentConfig& base) {
    const auto t0 = Clock::now();
    ExperimentConfig c = base;
    c.sweep.powers_dbm = {-10.0, -5.0, 10.0, 15.0};
    c.sweep.symbol_vectors = kVectorsPerPoint;
    const auto rows = run_sweep(c);
    std::map<std::pair<double, std::string>, SweepRow> at;
    for (const auto& r : rows) at[{r.power_dbm, r.scenario}] = r;
    const std::vector<std::string> singles{"dac+adc", "iq", "pn", "shifters", "pa"};
    const bool pa_rises = at[{15.0, "pa"}].ser > at[{10.0, "pa"}].ser;
    bool low_overlap = true;
    std::string worst_pair;
    double worst_gap = 0.0;
    for (double p : {-10.0, -5.0})
        for (const auto& a : c.sweep.scenarios)
            for (const auto& b : c.sweep.scenarios) {
                const auto& ra = at[{p, a}];
                const auto& rb = at[{p, b}];
                const auto ia = wilson_interval(ra.errors, ra.samples), ib = wilson_interval(rb.errors, rb.samples);
                if (!intervals_overlap(ia, ib)) {
                    low_overlap = false;
                    const double gap = std::abs(ra.ser - rb.ser);
                    if (gap > worst_gap) {
                        worst_gap = gap;
                        worst_pair = fmt("%s vs %s at %.0f dBm", a.c_str(), b.c_str(), p);
                    }
                }
            }
    bool all_dominates = true;
    for (const auto& s : singles) all_dominates = all_dominates && at[{15.0, "all"}].ser >= at[{15.0, s}].ser;
    std::string detail = fmt("PA %.4f->%.4f (%s); low-power CI overlap %s", at[{10.0, "pa"}].ser, at[{15.0, "pa"}].ser,
                             pa_rises ? "rises" : "does not rise", low_overlap ? "yes" : "no");
    if (!low_overlap) detail += fmt(" (widest: %s, |dSER| %.4f)", worst_pair.c_str(), worst_gap);
    detail += fmt("; all %.4f >= singles %s", at[{15.0, "all"}].ser, all_dominates ? "yes" : "no");
    detail += fmt(" (%.0fs)", seconds_since(t0));
    rep.line(6, pa_rises && low_overlap && all_dominates, "ablation trends", detail);
    for (const auto& r : rows)
        std::printf("      %6.1f dBm %-9s SER %.5f +/- %.5f\n", r.power_dbm, r.scenario.c_str(), r.ser, r.ci_half);
}

struct Trained {
    Pipeline full15;
    EvalResult tx, rx, ddnn, none;
};

void criterion7(Reporter& rep, const ExperimentConfig& c, Trained& tr) {
    const auto t0 = Clock::now();
    tr.full15 = make_pipeline(c, 15.0);
    run_stage1(tr.full15, c, SlimMode::full, c.pipeline.n_hidden);
    run_tx(tr.full15, c, c.pipeline.n_hidden);
    run_rx(tr.full15, c, c.pipeline.n_hidden);
    run_ddnn(tr.full15, c);
    tr.none = evaluate_side(tr.full15, c, Side::none, kVectorsPerPoint);
    tr.tx = evaluate_side(tr.full15, c, Side::tx, kVectorsPerPoint);
    tr.rx = evaluate_side(tr.full15, c, Side::rx, kVectorsPerPoint);
    tr.ddnn = evaluate_side(tr.full15, c, Side::ddnn, kVectorsPerPoint);
    const double p1 = one_sided_less_pvalue(tr.tx.errors, tr.tx.symbols, tr.rx.errors, tr.rx.symbols);
    const double p2 = one_sided_less_pvalue(tr.rx.errors, tr.rx.symbols, tr.ddnn.errors, tr.ddnn.symbols);
    const double p3 = one_sided_less_pvalue(tr.ddnn.errors, tr.ddnn.symbols, tr.none.errors, tr.none.symbols);
    const double secs = seconds_since(t0);
    const bool ceiling = tr.tx.ser() <= kTxSerCeiling;
    const bool ok = p1 < kAlpha && p2 < kAlpha && p3 < kAlpha && ceiling && secs <= 1800.0;
    rep.line(7, ok, "compensation efficacy",
             fmt("SER tx %.5f, rx %.5f, ddnn %.5f, none %.5f; p(tx<rx) %.3g, p(rx<ddnn) %.3g, p(ddnn<none) %.3g; tx<=%.0e %s; "
                 "losses stage1 %.4f tx %.4f rx %.4f ddnn %.4f (%.0fs)",
                 tr.tx.ser(), tr.rx.ser(), tr.ddnn.ser(), tr.none.ser(), p1, p2, p3, kTxSerCeiling, ceiling ? "yes" : "no",
                 tr.full15.stage1_report.final_loss, tr.full15.tx_report.final_loss, tr.full15.rx_report.final_loss,
                 tr.full15.ddnn_report.final_loss, secs));
}

double tx_ser_for(const ExperimentConfig& c, double power, SlimMode mode, int nh, Pipeline* keep = nullptr) {
    Pipeline p = make_pipeline(c, power);
    run_stage1(p, c, mode, nh);
    run_tx(p, c, c.pipeline.n_hidden);
    const double ser = evaluate_side(p, c, Side::tx, kVectorsPerPoint).ser();
    if (keep) *keep = std::move(p);
    return ser;
}

void criterion8(Reporter& rep, const ExperimentConfig& c, const Pipeline& low) {
    const auto t0 = Clock::now();
    const auto& link = low.link;
    const std::uint64_t seed = derive_seed(c.seed, "acceptance-heldout");
    Rng rng(seed);
    Rng sym = rng.child("symbols");
    const auto blk = random_symbols(link.cfg.n_s, 4096, sym);
    const CMat s1 = link.bf.f_bb * blk.s;
    ChainSpec noisy = ChainSpec::all(), clean = ChainSpec::all();
    clean.thermal_noise = false;
    const CMat ye = run_chain_blocks(s1, noisy, link, rng.child("chain"));
    const CMat ys = run_chain_blocks(s1, clean, link, rng.child("chain"));
    const CMat yh = low.model.forward(s1);
    const double to_clean = (yh - ys).norm() / ys.norm(), to_noisy = (yh - ye).norm() / ye.norm();
    const double t = seconds_since(t0);
    rep.line(8, to_clean < to_noisy, "stage-1 representation",
             fmt("at %.0f dBm: ||yhat-ys||/||ys|| %.4f vs ||yhat-ye||/||ye|| %.4f (%.1fs)", link.power_dbm, to_clean, to_noisy, t));
}

void criterion9(Reporter& rep, const ExperimentConfig& c, const Trained& tr, const Pipeline& low_full) {
    const auto t0 = Clock::now();
    Pipeline share15, remove_low;
    const double share = tx_ser_for(c, 15.0, SlimMode::shared, 8, &share15);
    const double full_low = evaluate_side(low_full, c, Side::tx, kVectorsPerPoint).ser();
    const double remove = tx_ser_for(c, kLowPowerDbm, SlimMode::removed, 8, &remove_low);
    const double full15 = tr.tx.ser();
    const bool counts = share15.model.param_count() == 378 && remove_low.model.param_count() == 336 && low_full.model.param_count() == 13728;
    const bool ok_share = share <= kSlimRatio * full15 && full15 <= kSlimRatio * share;
    const bool ok_remove = remove <= kSlimRatio * full_low && full_low <= kSlimRatio * remove;
    const double secs = seconds_since(t0);
    rep.line(9, ok_share && ok_remove && counts && secs <= 3600.0, "slimming preservation",
             fmt("15 dBm tx SER share(N_h=8,%zu params) %.5f vs full %.5f; %.0f dBm remove(N_h=8,%zu params) %.5f vs full %.5f (%.0fs)",
                 share15.model.param_count(), share, full15, kLowPowerDbm, remove_low.model.param_count(), remove, full_low, secs));
}

bool viterbi_matches_ml() {
    Rng r(77);
    for (int n = 1; n <= 12; ++n) {
        const std::uint32_t count = 1u << n;
        auto msg = [n](std::uint32_t m) {
            Bits b(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) b[i] = static_cast<std::uint8_t>((m >> i) & 1);
            return b;
        };
        auto pack = [](const Bits& b) {
            std::uint64_t v = 0;
            for (std::size_t i = 0; i < b.size(); ++i) v |= static_cast<std::uint64_t>(b[i]) << i;
            return v;
        };
        std::vector<std::uint64_t> words(count);
        for (std::uint32_t m = 0; m < count; ++m) words[m] = pack(conv_encode(msg(m)));
        const std::size_t len = ConvCode::coded_length(static_cast<std::size_t>(n) + 6);
        for (std::uint32_t m = 0; m < count; ++m) {
            Bits rx = conv_encode(msg(m));
            for (int f = static_cast<int>(r.below(4)); f > 0; --f) rx[r.below(len)] ^= 1;
            const std::uint64_t w = pack(rx);
            int best = 1 << 30, ties = 0;
            std::uint32_t arg = 0;
            for (std::uint32_t c = 0; c < count; ++c) {
                const int d = std::popcount(words[c] ^ w);
                if (d < best) {
                    best = d;
                    arg = c;
                    ties = 1;
                } else if (d == best) {
                    ++ties;
                }
            }
            const Bits dec = viterbi_decode(rx, static_cast<std::size_t>(n));
            if (std::popcount(pack(conv_encode(dec)) ^ w) != best) return false;
            if (ties == 1 && dec != msg(arg)) return false;
        }
    }
    return true;
}

void criterion10(Reporter& rep, const ExperimentConfig& c, const Trained& tr) {
    const auto t0 = Clock::now();
    const auto res = run_coded(tr.full15, c, Side::tx);
    const bool ml = viterbi_matches_ml();
    const double secs = seconds_since(t0);
    const bool ok = res.coded_ser() < tr.tx.ser() && ml && secs < 900.0;
    rep.line(10, ok, "coded system",
             fmt("coded SER %.5f (%zu groups) vs uncoded tx-compensated %.5f (channel SER in coded run %.5f); exhaustive ML %s (%.1fs)",
                 res.coded_ser(), res.coded_symbols, tr.tx.ser(), res.uncoded_ser(), ml ? "match" : "MISMATCH", secs));
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

/// One reduced experiment end to end; every artifact lands in dir.
void determinism_run(const ExperimentConfig& c, const std::string& dir) {
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    write_sweep_csv(dir + "/sweep.csv", run_sweep(c));
    Pipeline p = make_pipeline(c, 15.0);
    run_stage1(p, c, SlimMode::full, c.pipeline.n_hidden);
    run_tx(p, c, c.pipeline.n_hidden);
    run_rx(p, c, c.pipeline.n_hidden);
    run_ddnn(p, c);
    save_pipeline(p, c, dir);
    std::ofstream f(dir + "/compensation.csv");
    f << "side,ser,errors,samples\n";
    for (Side s : {Side::none, Side::tx, Side::rx, Side::ddnn}) {
        const auto r = evaluate_side(p, c, s, c.sweep.symbol_vectors, c.sweep.constellation_points);
        f << to_string(s) << ',' << fmt_double(r.ser()) << ',' << r.errors << ',' << r.symbols << '\n';
        if (s == Side::tx) write_constellation_csv(dir + "/constellation_tx.csv", r.constellation, c.system.block_len);
    }
    const auto cr = run_coded(p, c, Side::tx);
    std::ofstream(dir + "/coded.csv") << "coded_ser,uncoded_ser\n" << fmt_double(cr.coded_ser()) << ',' << fmt_double(cr.uncoded_ser()) << '\n';
    write_params_csv(dir + "/params.csv", params_report(c.system));
}

void criterion11(Reporter& rep, const ExperimentConfig& base) {
    const auto t0 = Clock::now();
    ExperimentConfig c = base;
    c.sweep.powers_dbm = {-5.0, 15.0};
    c.sweep.symbol_vectors = 2000;
    c.sweep.constellation_points = 500;
    c.pipeline.train_samples = 1024;
    c.pipeline.stage1_epochs = 2;
    c.pipeline.stage2_epochs = 2;
    c.pipeline.ddnn_epochs = 2;
    c.coded.frames = 2;
    const auto root = std::filesystem::temp_directory_path() / "thz_acceptance_determinism";
    determinism_run(c, (root / "a").string());
    determinism_run(c, (root / "b").string());
    std::size_t files = 0, same = 0;
    for (const auto& e : std::filesystem::directory_iterator(root / "a")) {
        ++files;
        same += slurp(e.path()) == slurp(root / "b" / e.path().filename());
    }
    const double secs = seconds_since(t0);
    rep.line(11, files > 0 && same == files && secs < 300.0, "determinism",
             fmt("%zu of %zu artifacts byte-identical across reruns (%.0fs)", same, files, secs));
}

}  // namespace

int main() {
    const auto t0 = Clock::now();
    const ExperimentConfig c;
    Reporter rep;
    criterion1(rep);
    criterion2(rep, c);
    criterion3(rep);
    criterion4(rep);
    criterion5(rep, c);
    criterion6(rep, c);
    Trained tr;
    criterion7(rep, c, tr);
    Pipeline low_full = make_pipeline(c, kLowPowerDbm);
    run_stage1(low_full, c, SlimMode::full, c.pipeline.n_hidden);
    criterion8(rep, c, low_full);
    run_tx(low_full, c, c.pipeline.n_hidden);
    criterion9(rep, c, tr, low_full);
    criterion10(rep, c, tr);
    criterion11(rep, c);
    std::printf("acceptance: %d of 11 criteria failed (%.0fs)\n", rep.failed, seconds_since(t0));
    return rep.failed == 0 ? 0 : 1;
}
