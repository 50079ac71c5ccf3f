#include "vtunet/profile.hpp"

#include <iomanip>
#include <numeric>
#include <sstream>

#include "vtunet/error.hpp"
#include "vtunet/mac_counter.hpp"

namespace vtunet {

std::uint64_t sa_flops_global(std::uint64_t tau, std::uint64_t c) {
    if (tau == 0 || c == 0) throw ConfigError("sa_flops_global needs tau, C >= 1");
    return 3 * tau * c * c + 2 * tau * tau * c;
}

std::uint64_t sa_flops_windowed(std::uint64_t tau, std::uint64_t c, std::uint64_t t) {
    if (tau == 0 || c == 0 || t == 0) throw ConfigError("sa_flops_windowed needs tau, C, T >= 1");
    if (tau % t != 0) {
        throw ConfigError("window tokens " + std::to_string(t) + " do not divide tau = " + std::to_string(tau));
    }
    const std::uint64_t kappa = tau / t;
    return 3 * tau * c * c + 2 * kappa * t * t * c;
}

std::uint64_t sa_flops_windowed_literal(std::uint64_t tau, std::uint64_t c, std::uint64_t t) {
    if (tau == 0 || c == 0 || t == 0 || tau % t != 0) {
        throw ConfigError("window tokens " + std::to_string(t) + " do not divide tau = " + std::to_string(tau));
    }
    return 3 * tau * c * c + 2 * tau * (tau / t) * c;
}

ParamReport count_params(const ParamStore& store) {
    ParamReport r;
    for (const auto& [name, t] : store.entries()) {
        r.tensors.emplace_back(name, t.numel());
        r.total += t.numel();
        std::string group = name.substr(0, name.find('.'));
        if (group == "enc" || group == "dec") {
            const auto second = name.find('.', group.size() + 1);
            group = name.substr(0, second);
        }
        if (r.groups.empty() || r.groups.back().name != group) r.groups.push_back({group, 0});
        r.groups.back().count += t.numel();
    }
    return r;
}

ParamReport count_params(const ModelConfig& config) { return count_params(VTUNet(config, 0).params()); }

std::uint64_t FlopsReport::total() const {
    std::uint64_t sum = 0;
    for (const auto& r : records) sum += r.total();
    return sum;
}

namespace {

FlopsRecord to_record(const MacSection& s) {
    FlopsRecord r;
    r.layer = s.name;
    r.proj_macs = s.tally[MacKind::qkv_projection];
    r.attn_macs = s.tally[MacKind::attention];
    r.out_proj_macs = s.tally[MacKind::out_projection];
    r.mlp_macs = s.tally[MacKind::mlp];
    r.other_macs = s.tally[MacKind::other];
    if (s.has_attention) {
        const auto& a = s.attention;
        r.attention = true;
        r.tau = a.tokens;
        r.channels = a.channels;
        r.windows = a.windows;
        r.window_tokens = a.window_tokens;
        r.branches = a.branches;
        const std::uint64_t proj = 3 * a.tokens * a.channels * a.channels;
        r.closed_form_macs = proj + a.branches * 2 * a.windows * a.window_tokens * a.window_tokens * a.channels;
        r.literal_macs = proj + a.branches * 2 * a.tokens * a.windows * a.channels;
    }
    return r;
}

}  // namespace

FlopsRecord count_attention_layer(const Dims3& dims, std::size_t channels, std::size_t heads,
                                  const WindowConfig& cfg) {
    ParamStore store;
    Rng rng(0);
    AttentionSpec spec;
    spec.channels = channels;
    spec.heads = heads;
    spec.table_window = cfg.window;
    const MsaParams p = init_msa(store, "layer", spec, rng);
    MacCounter counter(true);
    {
        MacSectionScope section("layer");
        window_msa(TokenGrid{dims, Tensor::zeros({dims.volume(), channels})}, p, cfg);
    }
    return to_record(counter.sections().back());
}

FlopsReport count_flops_instrumented(const ModelConfig& config, const Dims3& volume) {
    const VTUNet model(config, 0);
    model.validate_input({volume.d, volume.h, volume.w, config.in_channels});
    FlopsReport report;
    MacCounter counter(true);
    model.forward(Tensor::zeros({volume.d, volume.h, volume.w, config.in_channels}));
    for (const auto& s : counter.sections()) {
        if (s.tally.total() > 0 || s.has_attention) report.records.push_back(to_record(s));
    }
    for (std::size_t s = 0; s < kStages - 1; ++s) {
        const Dims3 before = stage_dims(config, volume, s);
        const Dims3 after = stage_dims(config, volume, s + 1);
        MergeRatio m;
        m.layer = "enc." + std::to_string(s) + ".merge";
        m.tau_before = before.volume();
        m.tau_after = after.volume();
        m.c_before = config.stage_channels(s);
        m.c_after = config.stage_channels(s + 1);
        m.quad_before = 2 * m.tau_before * m.tau_before * m.c_before;
        m.quad_after_same_c = 2 * m.tau_after * m.tau_after * m.c_before;
        m.quad_after_doubled_c = 2 * m.tau_after * m.tau_after * m.c_after;
        report.merges.push_back(m);
    }
    return report;
}

std::string ratio_str(std::uint64_t num, std::uint64_t den) {
    const std::uint64_t g = std::gcd(num, den);
    if (g == 0) return "0/0";
    return std::to_string(num / g) + "/" + std::to_string(den / g);
}

std::string flops_csv(const FlopsReport& report) {
    std::ostringstream os;
    os << "layer,tau,C,kappa,proj_macs,attn_macs,closed_form_macs,window_tokens,branches,out_proj_macs,mlp_macs,"
          "other_macs,literal_macs,total_macs\n";
    for (const auto& r : report.records) {
        os << r.layer << ',';
        if (r.attention) {
            os << r.tau << ',' << r.channels << ',' << r.windows << ',' << r.proj_macs << ',' << r.attn_macs << ','
               << r.closed_form_macs << ',' << r.window_tokens << ',' << r.branches << ',';
        } else {
            os << ",,,0,0,,,,";
        }
        os << r.out_proj_macs << ',' << r.mlp_macs << ',' << r.other_macs << ',';
        if (r.attention) os << r.literal_macs;
        os << ',' << r.total() << '\n';
    }
    os << "total,,,,,,,,,,,,," << report.total() << '\n';
    return os.str();
}

std::string merges_csv(const FlopsReport& report) {
    std::ostringstream os;
    os << "layer,tau_before,tau_after,C_before,C_after,quad_before,quad_after,ratio,quad_after_doubled_C,"
          "ratio_doubled_C\n";
    for (const auto& m : report.merges) {
        os << m.layer << ',' << m.tau_before << ',' << m.tau_after << ',' << m.c_before << ',' << m.c_after << ','
           << m.quad_before << ',' << m.quad_after_same_c << ',' << ratio_str(m.quad_after_same_c, m.quad_before)
           << ',' << m.quad_after_doubled_c << ',' << ratio_str(m.quad_after_doubled_c, m.quad_before) << '\n';
    }
    return os.str();
}

std::string params_csv(const ParamReport& report) {
    std::ostringstream os;
    os << "group,params\n";
    for (const auto& g : report.groups) os << g.name << ',' << g.count << '\n';
    os << "total," << report.total << '\n';
    return os.str();
}

std::string flops_table(const FlopsReport& report) {
    std::ostringstream os;
    os << std::left << std::setw(28) << "layer" << std::right << std::setw(8) << "tau" << std::setw(6) << "C"
       << std::setw(7) << "kappa" << std::setw(14) << "proj" << std::setw(14) << "attn" << std::setw(14)
       << "closed_form" << std::setw(16) << "total" << '\n';
    for (const auto& r : report.records) {
        os << std::left << std::setw(28) << r.layer << std::right;
        if (r.attention) {
            os << std::setw(8) << r.tau << std::setw(6) << r.channels << std::setw(7) << r.windows << std::setw(14)
               << r.proj_macs << std::setw(14) << r.attn_macs << std::setw(14) << r.closed_form_macs;
        } else {
            os << std::setw(8) << "" << std::setw(6) << "" << std::setw(7) << "" << std::setw(14) << ""
               << std::setw(14) << "" << std::setw(14) << "";
        }
        os << std::setw(16) << r.total() << '\n';
    }
    os << std::left << std::setw(28) << "total" << std::right << std::setw(79) << report.total() << '\n';
    for (const auto& m : report.merges) {
        os << m.layer << ": tau " << m.tau_before << " -> " << m.tau_after << ", quadratic term 2*tau^2*C ratio "
           << ratio_str(m.quad_after_same_c, m.quad_before) << " at fixed C ("
           << ratio_str(m.quad_after_doubled_c, m.quad_before) << " with C doubled)\n";
    }
    return os.str();
}

}  // namespace vtunet
