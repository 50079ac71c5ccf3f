#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "vtunet/artefacts.hpp"
#include "vtunet/metrics.hpp"
#include "vtunet/network.hpp"
#include "vtunet/profile.hpp"

namespace vtunet {

inline constexpr const char* kToolVersion = "0.1.0";

/// Path of the run manifest written next to a command's main output.
std::string run_manifest_path(const std::string& out);

/// Seeded synthetic volume (f64 intensities) and its ground-truth labels.
void cmd_phantom(const Dims3& dims, std::size_t channels, std::size_t classes, std::uint64_t seed,
                 const std::string& out, const std::string& labels_out, std::ostream& log);

struct InitResult {
    std::size_t params = 0;
};
InitResult cmd_init(const std::string& config, std::uint64_t seed, const std::string& out, std::ostream& log);

/// Writes the argmax label volume to `out` and, when `logits_out` is
/// non-empty, the raw logits as an f64 volume.
void cmd_infer(const std::string& checkpoint, const std::string& in, const std::string& out,
               const std::string& logits_out, std::ostream& log);

FlopsReport cmd_profile(const std::string& config, const Dims3& volume, const std::string& out, std::ostream& log);

void cmd_corrupt(const std::string& in, const ArtefactSpec& spec, const std::string& out, std::ostream& log);

std::vector<RegionScore> cmd_evaluate(const std::string& pred, const std::string& gt, const std::string& out,
                                      std::ostream& log);

struct GradcheckOptions {
    std::string config = "tiny";
    std::uint64_t seed = 0;
    Dims3 volume{8, 16, 16};
    std::size_t samples = 20;  // coordinates per parameter tensor
    double step = 1e-4;
    double tolerance = 1e-4;
    bool zero_input = false;
};

struct GradcheckRow {
    std::string group;
    std::size_t coordinates = 0;
    double max_rel_error = 0.0;
    double max_abs_grad = 0.0;
};

struct GradcheckReport {
    std::vector<GradcheckRow> rows;
    double max_rel_error = 0.0;
    double loss = 0.0;
    bool pass = false;
};

/// Central differences on sampled coordinates of every parameter tensor,
/// through dice_ce_loss on a seeded phantom.
GradcheckReport run_gradcheck(const GradcheckOptions& options);
GradcheckReport cmd_gradcheck(const GradcheckOptions& options, const std::string& out, std::ostream& log);

struct OverfitOptions {
    std::string config = "tiny";
    std::uint64_t seed = 0;
    Dims3 volume{8, 16, 16};
    std::size_t steps = 200;
    double lr = 0.8;
};

struct OverfitStep {
    std::size_t step = 0;
    double loss = 0.0, dice = 0.0, ce = 0.0;
};

struct OverfitReport {
    std::vector<OverfitStep> curve;  // steps + 1 entries unless diverged
    bool diverged = false;
    std::size_t diverged_step = 0;
};

/// Plain gradient descent on one phantom sample.
OverfitReport run_overfit(const OverfitOptions& options);
OverfitReport cmd_overfit(const OverfitOptions& options, const std::string& out, std::ostream& log);

std::string overfit_csv(const OverfitReport& report);
std::string gradcheck_csv(const GradcheckReport& report);

}  // namespace vtunet
