#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <string>

#include "vtunet/commands.hpp"
#include "vtunet/error.hpp"
#include "vtunet/text_manifest.hpp"

namespace {

vtunet::Dims3 parse_dims(const std::string& text) {
    const auto e = vtunet::parse_extents(text, "--dims");
    if (e.size() != 3) throw vtunet::ConfigError("--dims needs three extents, e.g. 16x64x64");
    return {e[0], e[1], e[2]};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"VT-UNet volumetric transformer toolkit"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Print help for every subcommand");

    std::string config = "base", checkpoint, in, out, logits, gt, dims = "16x64x64", artefact = "motion";
    std::uint64_t seed = 0;
    double intensity = 0.0, lr = 0.8, step = 1e-4;
    std::size_t steps = 200, samples = 20;
    bool zero_input = false;
    vtunet::ArtefactSpec spec;

    std::string labels_out;
    std::size_t channels = 4, classes = 4;
    auto* phantom = app.add_subcommand("phantom", "write a seeded synthetic volume and its labels");
    phantom->add_option("--dims", dims, "extents DxHxW")->capture_default_str();
    phantom->add_option("--channels", channels)->capture_default_str();
    phantom->add_option("--classes", classes)->capture_default_str();
    phantom->add_option("--seed", seed)->capture_default_str();
    phantom->add_option("--out", out, "intensity volume")->required();
    phantom->add_option("--labels", labels_out, "label volume");

    auto* init = app.add_subcommand("init", "write a seeded random checkpoint");
    init->add_option("--config", config, "preset (tiny, small, base) or config file")->capture_default_str();
    init->add_option("--seed", seed)->capture_default_str();
    init->add_option("--out", out, "checkpoint path")->required();

    auto* infer = app.add_subcommand("infer", "segment a volume");
    infer->add_option("--checkpoint", checkpoint)->required();
    infer->add_option("--in", in, "intensity volume")->required();
    infer->add_option("--out", out, "label volume")->required();
    infer->add_option("--logits", logits, "optional logits volume");

    auto* profile = app.add_subcommand("profile", "count parameters and multiply-adds");
    profile->add_option("--config", config)->capture_default_str();
    profile->add_option("--dims", dims, "input extents DxHxW")->capture_default_str();
    profile->add_option("--out", out, "FLOPs CSV")->required();

    auto* corrupt = app.add_subcommand("corrupt", "inject a k-space artefact");
    corrupt->add_option("--in", in)->required();
    corrupt->add_option("--out", out)->required();
    corrupt->add_option("--artefact", artefact, "motion, ghosting or spike")->capture_default_str();
    corrupt->add_option("--intensity", intensity)->capture_default_str();
    corrupt->add_option("--seed", seed)->capture_default_str();
    corrupt->add_option("--movements", spec.movements)->capture_default_str();
    corrupt->add_option("--max-translation", spec.max_translation)->capture_default_str();
    corrupt->add_option("--ghosts", spec.ghosts)->capture_default_str();
    corrupt->add_option("--axis", spec.axis)->capture_default_str();
    corrupt->add_option("--spikes", spec.spikes)->capture_default_str();

    auto* evaluate = app.add_subcommand("evaluate", "DSC and HD95 per region");
    evaluate->add_option("--in", in, "predicted label volume")->required();
    evaluate->add_option("--gt", gt, "ground-truth label volume")->required();
    evaluate->add_option("--out", out, "metrics CSV")->required();

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the loss gradient");
    gradcheck->add_option("--config", config)->capture_default_str();
    gradcheck->add_option("--seed", seed)->capture_default_str();
    gradcheck->add_option("--dims", dims)->capture_default_str();
    gradcheck->add_option("--samples", samples, "coordinates per parameter tensor")->capture_default_str();
    gradcheck->add_option("--step", step, "central-difference step")->capture_default_str();
    gradcheck->add_flag("--zero-input", zero_input);
    gradcheck->add_option("--out", out, "report CSV");

    auto* overfit = app.add_subcommand("overfit", "gradient descent on one phantom");
    overfit->add_option("--config", config)->capture_default_str();
    overfit->add_option("--seed", seed)->capture_default_str();
    overfit->add_option("--dims", dims)->capture_default_str();
    overfit->add_option("--steps", steps)->capture_default_str();
    overfit->add_option("--lr", lr)->capture_default_str();
    overfit->add_option("--out", out, "loss curve CSV")->required();

    // Defaults that differ per command are applied only when not given.
    for (auto* sub : {gradcheck, overfit}) {
        sub->preparse_callback([&](std::size_t) {
            config = "tiny";
            dims = "8x16x16";
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << '\n';
        return 64;
    }

    try {
        if (phantom->parsed()) {
            vtunet::cmd_phantom(parse_dims(dims), channels, classes, seed, out, labels_out, std::cout);
        } else if (init->parsed()) {
            vtunet::cmd_init(config, seed, out, std::cout);
        } else if (infer->parsed()) {
            vtunet::cmd_infer(checkpoint, in, out, logits, std::cout);
        } else if (profile->parsed()) {
            vtunet::cmd_profile(config, parse_dims(dims), out, std::cout);
        } else if (corrupt->parsed()) {
            spec.kind = vtunet::parse_artefact(artefact);
            spec.intensity = intensity;
            spec.seed = seed;
            vtunet::cmd_corrupt(in, spec, out, std::cout);
        } else if (evaluate->parsed()) {
            vtunet::cmd_evaluate(in, gt, out, std::cout);
        } else if (gradcheck->parsed()) {
            vtunet::GradcheckOptions opt;
            opt.config = config;
            opt.seed = seed;
            opt.volume = parse_dims(dims);
            opt.samples = samples;
            opt.step = step;
            opt.zero_input = zero_input;
            const auto r = vtunet::cmd_gradcheck(opt, out, std::cout);
            return r.pass ? 0 : 1;
        } else if (overfit->parsed()) {
            vtunet::OverfitOptions opt;
            opt.config = config;
            opt.seed = seed;
            opt.volume = parse_dims(dims);
            opt.steps = steps;
            opt.lr = lr;
            vtunet::cmd_overfit(opt, out, std::cout);
        }
    } catch (const vtunet::Error& e) {
        std::cerr << "error: " << e.category() << ": " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
