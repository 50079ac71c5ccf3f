#include "vtunet/commands.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "vtunet/checkpoint.hpp"
#include "vtunet/error.hpp"
#include "vtunet/gradcheck.hpp"
#include "vtunet/loss.hpp"
#include "vtunet/phantom.hpp"
#include "vtunet/rng.hpp"
#include "vtunet/text_manifest.hpp"
#include "vtunet/volume_io.hpp"

namespace vtunet {

namespace {

TextManifest run_header(const std::string& command) {
    TextManifest m;
    m.set("command", command);
    m.set("tool_version", kToolVersion);
    return m;
}

std::string dims_text(const Dims3& d) { return format_extents({d.d, d.h, d.w}); }

std::vector<std::int32_t> argmax_labels(const Tensor& logits) {
    const std::size_t k = logits.shape().back();
    const auto v = logits.values();
    std::vector<std::int32_t> out(v.size() / k);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c) {
            if (v[i * k + c] > v[i * k + best]) best = c;
        }
        out[i] = static_cast<std::int32_t>(best);
    }
    return out;
}

double loss_value(const VTUNet& model, const Tensor& input, const std::vector<std::int32_t>& labels) {
    TapePause pause;
    return dice_ce_loss(model.forward(input), labels).loss.item();
}

}  // namespace

std::string run_manifest_path(const std::string& out) { return out + ".run"; }

void cmd_phantom(const Dims3& dims, std::size_t channels, std::size_t classes, std::uint64_t seed,
                 const std::string& out, const std::string& labels_out, std::ostream& log) {
    const Phantom p = make_phantom(dims, channels, classes, seed);
    write_volume(VolumeFile::from_tensor(p.image), out);
    if (!labels_out.empty()) write_volume(VolumeFile::from_labels(p.labels), labels_out);
    TextManifest m = run_header("phantom");
    m.set("dims", dims_text(dims));
    m.set("channels", channels);
    m.set("classes", classes);
    m.set("seed", seed);
    m.set("out", out);
    m.set("labels_out", labels_out);
    m.write_file(run_manifest_path(out));
    log << "phantom: " << dims_text(dims) << " x " << channels << " channels, " << classes << " classes\n";
}

InitResult cmd_init(const std::string& config_name, std::uint64_t seed, const std::string& out, std::ostream& log) {
    const ModelConfig config = load_config(config_name);
    const VTUNet model(config, seed);
    save_checkpoint(model, out);
    TextManifest m = run_header("init");
    m.set("config_source", config_name);
    write_config(m, config, "config.");
    m.set("seed", seed);
    m.set("out", out);
    m.write_file(run_manifest_path(out));
    const std::size_t n = model.params().value_count();
    log << "parameters: " << n << '\n';
    return {n};
}

void cmd_infer(const std::string& checkpoint, const std::string& in, const std::string& out,
               const std::string& logits_out, std::ostream& log) {
    const VTUNet model = load_checkpoint(checkpoint);
    const VolumeFile volume = read_volume(in);
    if (volume.kind != VolumeKind::intensity) throw FormatError(in + ": field 'kind' must be intensity for inference");
    const Shape shape{volume.dims.d, volume.dims.h, volume.dims.w, volume.channels};
    try {
        model.validate_input(shape);
    } catch (const Error& e) {
        const auto& c = model.config();
        throw DimensionError("input " + shape_str(shape) + " does not fit the model (P=" +
                             std::to_string(c.patch_depth) + ", M=" + std::to_string(c.patch_size) +
                             ", in_channels=" + std::to_string(c.in_channels) + "): " + e.what());
    }
    const Tensor logits = model.forward(volume.to_tensor());
    LabelVolume labels{volume.dims, argmax_labels(logits), volume.spacing};
    write_volume(VolumeFile::from_labels(labels), out);
    if (!logits_out.empty()) {
        VolumeFile lf = VolumeFile::from_tensor(logits);
        lf.spacing = volume.spacing;
        write_volume(lf, logits_out);
    }
    TextManifest m = run_header("infer");
    m.set("checkpoint", checkpoint);
    m.set("seed", model.seed());
    write_config(m, model.config(), "config.");
    m.set("in", in);
    m.set("out", out);
    m.set("logits_out", logits_out);
    m.write_file(run_manifest_path(out));
    log << "labels: " << dims_text(volume.dims) << " with " << model.config().classes << " classes\n";
}

FlopsReport cmd_profile(const std::string& config_name, const Dims3& volume, const std::string& out,
                        std::ostream& log) {
    const ModelConfig config = load_config(config_name);
    const FlopsReport report = count_flops_instrumented(config, volume);
    const ParamReport params = count_params(config);
    write_bytes(out, flops_csv(report));
    write_bytes(out + ".merges.csv", merges_csv(report));
    write_bytes(out + ".params.csv", params_csv(params));
    TextManifest m = run_header("profile");
    m.set("config_source", config_name);
    write_config(m, config, "config.");
    m.set("dims", dims_text(volume));
    m.set("out", out);
    m.write_file(run_manifest_path(out));
    log << flops_table(report);
    log << "parameters: " << params.total << '\n';
    return report;
}

void cmd_corrupt(const std::string& in, const ArtefactSpec& spec, const std::string& out, std::ostream& log) {
    spec.validate();
    const VolumeFile src = read_volume(in);
    if (src.kind != VolumeKind::intensity) throw FormatError(in + ": field 'kind' must be intensity to corrupt");
    VolumeFile dst = src;
    dst.precision = Precision::f64;
    const std::size_t n = src.dims.volume();
    std::vector<double> channel(n);
    for (std::size_t c = 0; c < src.channels; ++c) {
        for (std::size_t i = 0; i < n; ++i) channel[i] = src.values[i * src.channels + c];
        const auto corrupted = apply_artefact(src.dims, channel, spec);
        for (std::size_t i = 0; i < n; ++i) dst.values[i * src.channels + c] = corrupted[i];
    }
    write_volume(dst, out);
    TextManifest m = run_header("corrupt");
    m.set("in", in);
    m.set("out", out);
    spec.write(m, "artefact.");
    m.write_file(run_manifest_path(out));
    double mse = 0.0;
    for (std::size_t i = 0; i < src.values.size(); ++i) {
        const double d = dst.values[i] - src.values[i];
        mse += d * d;
    }
    log << artefact_name(spec.kind) << " intensity " << format_real(spec.intensity) << ": mse "
        << format_real(mse / static_cast<double>(std::max<std::size_t>(1, src.values.size()))) << '\n';
}

std::vector<RegionScore> cmd_evaluate(const std::string& pred, const std::string& gt, const std::string& out,
                                      std::ostream& log) {
    const LabelVolume p = read_volume(pred).to_labels();
    const LabelVolume g = read_volume(gt).to_labels();
    const auto scores = evaluate_regions(p, g);
    const std::string csv = evaluation_csv(pred, scores);
    write_bytes(out, csv);
    TextManifest m = run_header("evaluate");
    m.set("pred", pred);
    m.set("gt", gt);
    m.set("out", out);
    m.write_file(run_manifest_path(out));
    log << csv;
    return scores;
}

GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
    const ModelConfig config = load_config(opt.config);
    VTUNet model(config, opt.seed);
    Phantom ph = make_phantom(opt.volume, config.in_channels, config.classes, opt.seed);
    const Tensor input = opt.zero_input
                             ? Tensor::zeros({opt.volume.d, opt.volume.h, opt.volume.w, config.in_channels})
                             : ph.image;
    const auto& labels = ph.labels.labels;

    GradcheckReport report;
    Gradients grads;
    {
        GradTape tape;
        const DiceCeLoss l = dice_ce_loss(model.forward(input), labels);
        report.loss = l.loss.item();
        grads = tape.backward(l.loss);
    }
    Rng rng(opt.seed ^ 0x5851f42d4c957f2dULL);
    auto f = [&] { return loss_value(model, input, labels); };
    for (auto& [name, leaf] : model.params().entries()) {
        GradcheckRow row;
        row.group = name;
        if (!grads.contains(leaf)) throw TapeError("no gradient reached parameter " + name);
        const Tensor g = grads.get(leaf);
        std::vector<std::size_t> coords(leaf.numel());
        for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        if (coords.size() > opt.samples) {
            // Partial Fisher-Yates: the first `samples` slots become a uniform subset.
            for (std::size_t i = 0; i < opt.samples; ++i) {
                std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
            }
            coords.resize(opt.samples);
        }
        for (std::size_t idx : coords) {
            const double analytic = g.values()[idx];
            const double numeric = finite_diff_at(f, leaf, idx, opt.step);
            row.max_rel_error = std::max(row.max_rel_error, relative_error(analytic, numeric));
            row.max_abs_grad = std::max(row.max_abs_grad, std::abs(analytic));
        }
        row.coordinates = coords.size();
        report.max_rel_error = std::max(report.max_rel_error, row.max_rel_error);
        report.rows.push_back(row);
    }
    report.pass = report.max_rel_error < opt.tolerance;
    return report;
}

std::string gradcheck_csv(const GradcheckReport& r) {
    std::ostringstream os;
    os << "group,coordinates,max_rel_error,max_abs_grad\n";
    for (const auto& row : r.rows) {
        os << row.group << ',' << row.coordinates << ',' << format_real(row.max_rel_error) << ','
           << format_real(row.max_abs_grad) << '\n';
    }
    return os.str();
}

GradcheckReport cmd_gradcheck(const GradcheckOptions& opt, const std::string& out, std::ostream& log) {
    const GradcheckReport r = run_gradcheck(opt);
    if (!out.empty()) {
        write_bytes(out, gradcheck_csv(r));
        TextManifest m = run_header("gradcheck");
        m.set("config_source", opt.config);
        m.set("seed", opt.seed);
        m.set("dims", dims_text(opt.volume));
        m.set("samples", opt.samples);
        m.set_real("step", opt.step);
        m.set_real("tolerance", opt.tolerance);
        m.set("zero_input", opt.zero_input ? "true" : "false");
        m.set("out", out);
        m.write_file(run_manifest_path(out));
    }
    log << "groups: " << r.rows.size() << ", max relative error " << format_real(r.max_rel_error) << " (tolerance "
        << format_real(opt.tolerance) << "): " << (r.pass ? "pass" : "FAIL") << '\n';
    return r;
}

OverfitReport run_overfit(const OverfitOptions& opt) {
    if (!(opt.lr > 0.0) || !std::isfinite(opt.lr)) throw ConfigError("learning rate must be positive");
    const ModelConfig config = load_config(opt.config);
    VTUNet model(config, opt.seed);
    const Phantom ph = make_phantom(opt.volume, config.in_channels, config.classes, opt.seed);
    OverfitReport report;
    for (std::size_t step = 0; step <= opt.steps; ++step) {
        GradTape tape;
        DiceCeLoss l;
        try {
            l = dice_ce_loss(model.forward(ph.image), ph.labels.labels);
        } catch (const NumericError&) {
            report.diverged = true;
            report.diverged_step = step;
            return report;
        }
        report.curve.push_back({step, l.loss.item(), l.dice, l.ce});
        if (step == opt.steps) break;
        const Gradients grads = tape.backward(l.loss);
        for (auto& [name, leaf] : model.params().entries()) {
            const Tensor g = grads.get(leaf);
            auto v = leaf.mutable_values();
            const auto gv = g.values();
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= opt.lr * gv[i];
        }
    }
    return report;
}

std::string overfit_csv(const OverfitReport& r) {
    std::ostringstream os;
    os << "step,loss,dice_loss,ce_loss\n";
    for (const auto& s : r.curve) {
        os << s.step << ',' << format_real(s.loss) << ',' << format_real(s.dice) << ',' << format_real(s.ce) << '\n';
    }
    return os.str();
}

OverfitReport cmd_overfit(const OverfitOptions& opt, const std::string& out, std::ostream& log) {
    const OverfitReport r = run_overfit(opt);
    write_bytes(out, overfit_csv(r));
    TextManifest m = run_header("overfit");
    m.set("config_source", opt.config);
    m.set("seed", opt.seed);
    m.set("dims", dims_text(opt.volume));
    m.set("steps", opt.steps);
    m.set_real("lr", opt.lr);
    m.set("optimizer", "gradient_descent");
    m.set("out", out);
    m.write_file(run_manifest_path(out));
    if (r.diverged) throw NumericError("loss diverged at step " + std::to_string(r.diverged_step));
    const double first = r.curve.front().loss, last = r.curve.back().loss;
    log << "loss " << format_real(first) << " -> " << format_real(last) << " after " << opt.steps
        << " steps (ratio " << format_real(last / first) << ")\n";
    return r;
}

}  // namespace vtunet
