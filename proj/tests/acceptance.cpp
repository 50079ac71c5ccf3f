// One PASS/FAIL line per acceptance criterion. Tolerances and runtime
// budgets are pinned below; the process exits nonzero if any line fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "cli_runner.hpp"
#include "oracles.hpp"
#include "vtunet/artefacts.hpp"
#include "vtunet/attention.hpp"
#include "vtunet/checkpoint.hpp"
#include "vtunet/commands.hpp"
#include "vtunet/fft.hpp"
#include "vtunet/metrics.hpp"
#include "vtunet/network.hpp"
#include "vtunet/phantom.hpp"
#include "vtunet/profile.hpp"
#include "vtunet/text_manifest.hpp"

using namespace vtunet;

namespace {

constexpr double kAttentionTol = 1e-10;
constexpr double kGradTol = 1e-4;
constexpr double kOverfitRatio = 0.10;
constexpr double kHd95Tol = 1e-9;
constexpr double kFftRoundTripTol = 1e-6;
constexpr double kDftTol = 1e-8;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, double budget_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = budget_s <= 0 || secs < budget_s;
    const bool ok = o.pass && in_time;
    if (!ok) ++failures;
    char timing[96];
    if (budget_s > 0) std::snprintf(timing, sizeof timing, "%.2fs < %.0fs", secs, budget_s);
    else std::snprintf(timing, sizeof timing, "%.2fs", secs);
    std::cout << (ok ? "PASS" : "FAIL") << "  " << id << ". " << name << ": " << o.detail << " [" << timing
              << (in_time ? "" : ", over budget") << "]" << std::endl;
}

std::string num(double v) {
    std::ostringstream os;
    os.precision(3);
    os << v;
    return os.str();
}

Outcome window_arithmetic() {
    const Dims3 grid{8, 8, 8};
    const std::size_t regular = count_windows(grid, make_window_config(4, 4, false), WindowCountMode::regular);
    const std::size_t naive = count_windows(grid, make_window_config(4, 4, true), WindowCountMode::shifted_naive);
    return {regular == 8 && naive == 27, "regular " + std::to_string(regular) + " (want 8), shifted naive " +
                                             std::to_string(naive) + " (want 27)"};
}

Outcome shift_mask_oracle() {
    Rng rng(2024);
    const std::size_t choices[] = {2, 4};
    double worst = 0.0;
    std::size_t cases = 0, masked_cases = 0;
    while (cases < 24) {
        Dims3 win{choices[rng.below(2)], choices[rng.below(2)], choices[rng.below(2)]};
        Dims3 dims{win.d * (1 + rng.below(3)), win.h * (1 + rng.below(3)), win.w * (1 + rng.below(3))};
        const std::size_t heads = 1 + rng.below(3);
        const std::size_t c = heads * (1 + rng.below(3));
        WindowConfig cfg;
        cfg.window = win;
        cfg.shift = {win.d / 2, win.h / 2, win.w / 2};
        cfg = clamp_to_grid(cfg, dims);
        if (!cfg.shifted()) continue;
        const Tensor q = oracle::random_tensor({dims.volume(), c}, rng, -2, 2);
        const Tensor k = oracle::random_tensor({dims.volume(), c}, rng, -2, 2);
        const Tensor v = oracle::random_tensor({dims.volume(), c}, rng);
        BiasParams bias;
        bias.table_window = win;
        bias.table = oracle::random_tensor({relative_table_rows(win), heads}, rng, -2, 2);
        const Tensor got = attend_windows(q, k, v, bias, heads, dims, cfg);
        const auto want = oracle::naive_window_attention(dims, cfg.window, cfg.shift, win, heads, c, q.values(),
                                                         k.values(), v.values(), bias.table.values());
        worst = std::max(worst, oracle::max_abs_diff(want, got.values()));
        ++cases;
        masked_cases += count_windows(dims, cfg, WindowCountMode::shifted_naive) >
                        count_windows(dims, cfg, WindowCountMode::regular);
    }
    return {worst < kAttentionTol && masked_cases == cases,
            std::to_string(cases) + " shifted cases, max |diff| " + num(worst) + " < " + num(kAttentionTol)};
}

Outcome shape_theorem() {
    const ModelConfig cfg = ModelConfig::base();
    const VTUNet model(cfg, 0);
    Rng rng(3);
    const Tensor x = oracle::random_tensor({16, 64, 64, 4}, rng);
    std::vector<StageTrace> trace;
    const Tensor y = model.forward(x, &trace);
    bool finite = true;
    for (double v : y.values()) finite = finite && std::isfinite(v);
    StageTrace bn;
    for (const auto& t : trace)
        if (t.name == "bottleneck") bn = t;
    const bool shape_ok = y.shape() == Shape{16, 64, 64, 4};
    const bool bn_ok = bn.dims == Dims3{16 / 4, 64 / 32, 64 / 32} && bn.channels == 8 * 72;
    return {shape_ok && finite && bn_ok, "logits " + shape_str(y.shape()) + (finite ? " finite" : " NON-FINITE") +
                                             ", bottleneck " + dims_str(bn.dims) + " x " +
                                             std::to_string(bn.channels)};
}

Outcome merge_expand() {
    Rng rng(4);
    const std::size_t c = 4;
    const TokenGrid g{{3, 8, 6}, oracle::random_tensor({3 * 8 * 6, c}, rng)};
    const TokenGrid m = patch_merging(g, oracle::random_tensor({4 * c, 2 * c}, rng));
    const bool merge_ok = m.dims == Dims3{3, 4, 3} && m.channels() == 2 * c;

    const Dims3 bottleneck{16 / 4, 64 / 32, 64 / 32};
    const TokenGrid b{bottleneck, oracle::random_tensor({bottleneck.volume(), 8 * c}, rng)};
    const TokenGrid up = patch_expanding(b, oracle::random_tensor({8 * c, 16 * c}, rng), {1, 2, 2});
    const bool expand_ok = up.dims == Dims3{16 / 4, 64 / 16, 64 / 16} && up.channels() == 4 * c;

    const TokenGrid round = patch_expanding(patch_merging(up, oracle::random_tensor({16 * c, 8 * c}, rng)),
                                            oracle::random_tensor({8 * c, 16 * c}, rng), {1, 2, 2});
    const bool round_ok = round.dims == up.dims && round.channels() == up.channels();
    return {merge_ok && expand_ok && round_ok,
            "merge " + dims_str(m.dims) + "x" + std::to_string(m.channels()) + ", expand " + dims_str(up.dims) +
                "x" + std::to_string(up.channels()) + ", round trip " + (round_ok ? "exact" : "mismatch")};
}

Outcome complexity() {
    struct Point {
        Dims3 dims, window;
        std::size_t c, heads;
    };
    const Point sweep[] = {
        {{2, 4, 4}, {2, 4, 4}, 6, 2},  {{4, 4, 4}, {2, 2, 2}, 8, 2},   {{2, 8, 8}, {2, 4, 4}, 12, 3},
        {{4, 8, 8}, {4, 4, 4}, 4, 1},  {{4, 16, 16}, {4, 4, 4}, 6, 3},
    };
    std::size_t exact = 0, total = 0;
    for (const auto& p : sweep) {
        const std::uint64_t tau = p.dims.volume(), t = p.window.volume(), kappa = tau / t;
        // Global: one window spanning the grid.
        WindowConfig global;
        global.window = p.dims;
        const FlopsRecord g = count_attention_layer(p.dims, p.c, p.heads, global);
        exact += g.proj_macs + g.attn_macs == 3 * tau * p.c * p.c + 2 * tau * tau * p.c;
        WindowConfig win;
        win.window = p.window;
        const FlopsRecord w = count_attention_layer(p.dims, p.c, p.heads, win);
        exact += w.proj_macs + w.attn_macs == 3 * tau * p.c * p.c + 2 * kappa * t * t * p.c;
        total += 2;
    }
    const FlopsReport r = count_flops_instrumented(ModelConfig::base(), {16, 64, 64});
    bool ratio_ok = !r.merges.empty();
    std::string ratio;
    for (const auto& m : r.merges) {
        ratio = ratio_str(m.quad_after_same_c, m.quad_before);
        ratio_ok = ratio_ok && ratio == "1/16";
    }
    return {exact == total && ratio_ok, std::to_string(exact) + "/" + std::to_string(total) +
                                            " exact (global + windowed), merge quadratic ratio " + ratio};
}

Outcome gradient_check() {
    GradcheckOptions opt;
    opt.tolerance = kGradTol;
    const GradcheckReport r = run_gradcheck(opt);
    // Tensors smaller than the sample count are checked exhaustively.
    const VTUNet model(load_config(opt.config), opt.seed);
    const auto& entries = model.params().entries();
    bool coverage = r.rows.size() == entries.size();
    for (std::size_t i = 0; coverage && i < entries.size(); ++i) {
        coverage = r.rows[i].group == entries[i].first &&
                   r.rows[i].coordinates == std::min<std::size_t>(20, entries[i].second.numel());
    }
    const bool ok = r.max_rel_error < kGradTol && coverage;
    return {ok, std::to_string(r.rows.size()) + " parameter tensors, min(20, size) coordinates each " +
                    (coverage ? "" : "(COVERAGE MISSING) ") + "max rel error " + num(r.max_rel_error) + " < " +
                    num(kGradTol)};
}

Outcome fusion_symmetry() {
    Rng rng(7);
    const Dims3 dims{2, 4, 4};
    const std::size_t c = 12;
    const TokenGrid a{dims, oracle::random_tensor({32, c}, rng)};
    const TokenGrid b{dims, oracle::random_tensor({32, c}, rng)};
    const TokenGrid ab = fuse(a, b, 0.5, nullptr), ba = fuse(b, a, 0.5, nullptr);
    const bool sym = std::equal(ab.tokens.values().begin(), ab.tokens.values().end(), ba.tokens.values().begin());
    ParamStore store;
    FpeParams fpe;
    fpe.ln_gamma = store.add_constant("g", {c}, 1.0);
    fpe.ln_beta = store.add_constant("b", {c}, 0.0);
    fpe.mlp = init_mlp(store, "mlp", c, c, rng);
    const TokenGrid fab = fuse(a, b, 0.5, &fpe), fba = fuse(b, a, 0.5, &fpe);
    double norm = 0.0;
    for (std::size_t i = 0; i < fab.tokens.numel(); ++i) {
        const double d = fab.tokens.values()[i] - fba.tokens.values()[i];
        norm += d * d;
    }
    norm = std::sqrt(norm);
    return {sym && norm > 0.0, std::string("FPE off ") + (sym ? "exactly symmetric" : "ASYMMETRIC") +
                                   ", FPE on ||fuse(a,b) - fuse(b,a)|| = " + num(norm)};
}

Outcome overfit() {
    OverfitOptions opt;
    std::ostringstream log;
    const OverfitReport r = cmd_overfit(opt, "acceptance_overfit.csv", log);
    if (r.diverged) return {false, "diverged at step " + std::to_string(r.diverged_step)};
    const double first = r.curve.front().loss, last = r.curve.back().loss;
    const double ratio = last / first;
    return {ratio <= kOverfitRatio && r.curve.size() == opt.steps + 1,
            "loss " + num(first) + " -> " + num(last) + " in " + std::to_string(opt.steps) + " steps, ratio " +
                num(ratio) + " <= " + num(kOverfitRatio) + ", curve in acceptance_overfit.csv"};
}

Outcome metrics_oracle() {
    Rng rng(9);
    double worst = 0.0;
    std::size_t dsc_mismatch = 0;
    for (int i = 0; i < 200; ++i) {
        const Dims3 d{1 + rng.below(12), 1 + rng.below(12), 1 + rng.below(12)};
        const BinaryMask a{d, oracle::random_blob(d, rng)}, b{d, oracle::random_blob(d, rng)};
        const Spacing sp{rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)};
        dsc_mismatch += dsc(a, b) != oracle::dsc_count(a.voxels, b.voxels);
        worst = std::max(worst, std::abs(hd95(a, b, sp) - oracle::brute_hd95(d, a.voxels, b.voxels, sp)));
    }
    const BinaryMask p{{1, 3, 2}, {1, 1, 1, 1, 0, 0}}, g{{1, 3, 2}, {0, 0, 1, 1, 1, 1}};
    const double half = dsc(p, g);
    bool nested = true;
    for (int trial = 0; trial < 50; ++trial) {
        LabelVolume lv{{6, 6, 6}, std::vector<std::int32_t>(216)};
        for (auto& l : lv.labels) l = static_cast<std::int32_t>(rng.below(4));
        const RegionMasks r = compose_regions(lv);
        for (std::size_t i = 0; i < 216; ++i) {
            nested = nested && r.et.voxels[i] <= r.tc.voxels[i] && r.tc.voxels[i] <= r.wt.voxels[i];
        }
    }
    return {dsc_mismatch == 0 && worst < kHd95Tol && half == 0.5 && nested,
            "200 cases: DSC mismatches " + std::to_string(dsc_mismatch) + ", HD95 max |diff| " + num(worst) +
                " < " + num(kHd95Tol) + ", half overlap DSC " + num(half) + ", ET<=TC<=WT " +
                (nested ? "holds" : "VIOLATED")};
}

Outcome artefact_identities() {
    const Dims3 d{8, 16, 16};
    const Phantom ph = make_phantom(d, 1, 4, 11);
    const std::vector<double> v(ph.image.values().begin(), ph.image.values().end());
    bool identity = true, monotone = true;
    std::string sweep;
    for (auto kind : {ArtefactKind::motion, ArtefactKind::ghosting, ArtefactKind::spike}) {
        ArtefactSpec s;
        s.kind = kind;
        s.seed = 5;
        identity = identity && apply_artefact(d, v, s) == v;
        double prev = 0.0;
        sweep += std::string(" ") + artefact_name(kind);
        for (double t : {0.25, 0.5, 1.0}) {
            s.intensity = t;
            const auto out = apply_artefact(d, v, s);
            double m = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) m += (out[i] - v[i]) * (out[i] - v[i]);
            m /= static_cast<double>(v.size());
            monotone = monotone && m >= prev;
            sweep += (t == 0.25 ? " " : "<=") + num(m);
            prev = m;
        }
    }
    Rng rng(12);
    std::vector<Complex> x(512);
    for (auto& c : x) c = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const ComplexVolume k = fft3({{8, 8, 8}, x});
    const auto naive = oracle::naive_dft3({8, 8, 8}, x, false);
    double dft = 0.0, num2 = 0.0, den2 = 0.0;
    const ComplexVolume back = ifft3(k);
    for (std::size_t i = 0; i < x.size(); ++i) {
        dft = std::max(dft, std::abs(k.values[i] - naive[i]));
        num2 += std::norm(back.values[i] - x[i]);
        den2 += std::norm(x[i]);
    }
    const double round = std::sqrt(num2 / den2);
    return {identity && monotone && dft < kDftTol && round < kFftRoundTripTol,
            std::string("intensity 0 ") + (identity ? "exact" : "NOT exact") + ", FFT round trip " + num(round) +
                ", vs DFT " + num(dft) + ", MSE sweep" + sweep};
}

Outcome determinism() {
    cli::Scratch s("vtunet_accept");
    auto ok = [&](const std::string& args, int threads) {
        const auto r = cli::run(args, s.path, threads);
        if (r.status != 0) throw std::runtime_error("'" + args + "' failed: " + r.err);
    };
    ok("phantom --dims 16x64x64 --channels 4 --seed 1 --out " + s / "img.vol", 1);
    const int threads[] = {1, 4};
    for (int run = 0; run < 2; ++run) {
        const std::string n = std::to_string(run);
        ok("init --config base --seed 42 --out " + s / ("m" + n + ".ckpt"), threads[run]);
        ok("infer --checkpoint " + s / "m0.ckpt" + " --in " + s / "img.vol" + " --out " + s / ("p" + n + ".vol") +
               " --logits " + s / ("l" + n + ".vol"),
           threads[run]);
        ok("corrupt --in " + s / "img.vol" + " --artefact motion --intensity 0.5 --seed 3 --out " +
               s / ("c" + n + ".vol"),
           threads[run]);
    }
    std::size_t same = 0, total = 0;
    std::string mismatched;
    for (const std::string& f : {"m%.ckpt", "m%.ckpt.bin", "p%.vol", "p%.vol.raw", "l%.vol.raw", "c%.vol",
                                 "c%.vol.raw", "c%.vol.run"}) {
        std::string a = f, b = f;
        a.replace(a.find('%'), 1, "0");
        b.replace(b.find('%'), 1, "1");
        std::string ta = cli::slurp(s.file(a)), tb = cli::slurp(s.file(b));
        // Manifests name their own output paths; compare with those normalised.
        auto norm = [&](std::string t, const std::string& self) {
            for (std::size_t at; (at = t.find(self)) != std::string::npos;) t.replace(at, self.size(), "@");
            return t;
        };
        const std::string stem_a = a.substr(0, a.find('.')), stem_b = b.substr(0, b.find('.'));
        const bool binary = f.ends_with(".bin") || f.ends_with(".raw");
        const bool equal = !ta.empty() && (binary ? ta == tb : norm(ta, stem_a + ".") == norm(tb, stem_b + "."));
        same += equal;
        if (!equal) mismatched += " " + a;
        ++total;
    }
    return {same == total, std::to_string(same) + "/" + std::to_string(total) +
                               " artefacts byte-identical (init, infer, corrupt; 1 vs 4 threads)" +
                               (mismatched.empty() ? "" : ", differing:" + mismatched)};
}

}  // namespace

int main() {
    std::cout << "acceptance: VT-UNet desk-scale criteria" << std::endl;
    criterion(1, "window arithmetic", 1, window_arithmetic);
    criterion(2, "shift-mask oracle", 30, shift_mask_oracle);
    criterion(3, "shape theorem (VT-UNet-B, 16x64x64x4)", 120, shape_theorem);
    criterion(4, "patch merge/expand algebra", 0, merge_expand);
    criterion(5, "complexity cross-check", 0, complexity);
    criterion(6, "gradient check (tiny)", 600, gradient_check);
    criterion(7, "fusion symmetry breaking", 0, fusion_symmetry);
    criterion(8, "overfit demo (tiny, 200 steps)", 900, overfit);
    criterion(9, "metrics oracle", 0, metrics_oracle);
    criterion(10, "artefact identities", 0, artefact_identities);
    criterion(11, "determinism", 0, determinism);
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
