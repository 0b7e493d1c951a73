#pragma once

// Central finite-difference verification of the full temporal-reasoning
// layer, run in 64-bit with batchnorm disabled. Exposed as a CLI command so
// a build can self-verify its backward pass.

#include <optional>
#include <string>
#include <vector>

namespace trg {

struct GradCheckOptions {
    int frames = 4;
    int channels = 3;
    int height = 2;
    int width = 2;
    int heads = 2;
    double tolerance = 1e-4;
    double step = 1e-5;  // finite-difference h
    uint64_t seed = 7;
    // Test fixture: scales the analytic gradients of one parameter group so
    // the comparison must fail there.
    std::string corrupt_group;
    double corrupt_factor = 1.25;
};

struct GradCheckGroup {
    std::string name;
    double max_rel_err = 0.0;
    long params = 0;
    bool finite = true;
    std::string worst_param;
};

struct GradCheckReport {
    struct PerKind {
        std::string kind;
        std::vector<GradCheckGroup> groups;
    };
    std::vector<PerKind> kinds;
    double tolerance = 0.0;
    bool passed = false;
    double worst = 0.0;

    std::string to_string() const;
};

GradCheckReport run_gradcheck(const GradCheckOptions& opt = {});

}  // namespace trg
