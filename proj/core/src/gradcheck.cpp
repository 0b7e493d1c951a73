#include "trg/gradcheck.hpp"

#include <cmath>
#include <cstdio>

#include "trg/trg_layer.hpp"

namespace trg {

namespace {

std::string group_of(const std::string& param_name) {
    if (param_name == "input") return "input";
    if (param_name.find(".sim_kernel") != std::string::npos) return "similarity_kernels";
    if (param_name.find(".spatial_kernel") != std::string::npos) return "spatial_kernels";
    if (param_name.find(".agg_weight") != std::string::npos) return "aggregator_weight";
    if (param_name.find(".sim_v") != std::string::npos) return "sum_vector";
    if (param_name.find(".sim_w1") != std::string::npos) return "bilinear_matrix";
    return "other";
}

double rel_err(double a, double n) {
    return std::abs(a - n) / std::max(1e-8, std::abs(a) + std::abs(n));
}

}  // namespace

GradCheckReport run_gradcheck(const GradCheckOptions& opt) {
    GradCheckReport report;
    report.tolerance = opt.tolerance;
    report.passed = true;

    for (auto kind : {SimilarityKind::DotProduct, SimilarityKind::Sum, SimilarityKind::Bilinear}) {
        TrgLayerOptions lo;
        lo.heads = opt.heads;
        lo.channels = opt.channels;
        lo.height = opt.height;
        lo.width = opt.width;
        lo.similarity = kind;
        lo.batchnorm = false;  // batch statistics make finite differences ill-conditioned
        TrgLayerParams<double> params(lo, "trg0", rng::derive(opt.seed, to_string(kind)),
                                      /*zero_spatial=*/false);

        const long n_in = static_cast<long>(opt.frames) * opt.channels * opt.height * opt.width;
        Parameter<double> input("input", Shape{opt.frames, opt.channels, opt.height, opt.width});
        rng::Stream data(rng::derive(opt.seed, "gradcheck_data"));
        for (auto& v : input.value) v = data.uniform(-1.0, 1.0);
        std::vector<double> probe(n_in);
        for (auto& v : probe) v = data.uniform(-1.0, 1.0);

        std::vector<Parameter<double>*> checked = params.parameters();
        checked.push_back(&input);

        auto forward_loss = [&](bool with_grads) {
            Tape<double> t;
            ParamBinder<double> bind(t, with_grads);
            auto y = trg_layer_forward(bind, bind(input), params, BnMode::Eval);
            auto loss = t.weighted_sum(y, probe);
            if (with_grads) t.backward(loss);
            return loss.item();
        };

        for (auto* p : checked) p->zero_grad();
        forward_loss(true);

        if (!opt.corrupt_group.empty())
            for (auto* p : checked)
                if (group_of(p->name) == opt.corrupt_group)
                    for (auto& g : p->grad) g *= opt.corrupt_factor;

        std::vector<GradCheckGroup> groups;
        auto group_for = [&](const std::string& name) -> GradCheckGroup& {
            for (auto& g : groups)
                if (g.name == name) return g;
            groups.push_back({name, 0.0, 0, true, ""});
            return groups.back();
        };

        for (auto* p : checked) {
            GradCheckGroup& g = group_for(group_of(p->name));
            for (size_t i = 0; i < p->value.size(); ++i) {
                const double analytic = p->grad[i];
                if (!std::isfinite(analytic)) {
                    g.finite = false;
                    g.worst_param = p->name;
                    continue;
                }
                const double keep = p->value[i];
                p->value[i] = keep + opt.step;
                const double lp = forward_loss(false);
                p->value[i] = keep - opt.step;
                const double lm = forward_loss(false);
                p->value[i] = keep;
                const double numeric = (lp - lm) / (2.0 * opt.step);
                const double err = rel_err(analytic, numeric);
                if (err > g.max_rel_err) {
                    g.max_rel_err = err;
                    g.worst_param = p->name;
                }
                ++g.params;
            }
        }

        for (const auto& g : groups) {
            report.worst = std::max(report.worst, g.max_rel_err);
            if (!g.finite || g.max_rel_err >= opt.tolerance) report.passed = false;
        }
        report.kinds.push_back({to_string(kind), std::move(groups)});
    }
    return report;
}

std::string GradCheckReport::to_string() const {
    std::string out;
    char buf[160];
    for (const auto& k : kinds) {
        out += "similarity=" + k.kind + "\n";
        for (const auto& g : k.groups) {
            if (!g.finite) {
                std::snprintf(buf, sizeof(buf), "  %-20s NON-FINITE gradient (%s)\n",
                              g.name.c_str(), g.worst_param.c_str());
            } else {
                std::snprintf(buf, sizeof(buf), "  %-20s max_rel_err %.3e over %ld params (%s)%s\n",
                              g.name.c_str(), g.max_rel_err, g.params, g.worst_param.c_str(),
                              g.max_rel_err < tolerance ? "" : "  <-- FAIL");
            }
            out += buf;
        }
    }
    std::snprintf(buf, sizeof(buf), "gradcheck %s (worst %.3e, tolerance %.1e)\n",
                  passed ? "PASS" : "FAIL", worst, tolerance);
    out += buf;
    return out;
}

}  // namespace trg
