#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "eretinex/model.hpp"
#include "eretinex/tensor.hpp"

namespace eretinex::gradcheck {

struct Report {
    std::string name;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    std::size_t checked = 0;   // number of perturbed elements
    std::size_t nonzero = 0;   // analytic entries with |g| > 1e-12 among them

    bool passed() const { return checked > 0 && max_rel_error < tolerance; }
    std::string to_line() const;
};

struct Options {
    double step = 1e-5;
    double tolerance = 1e-3;
    // Elements perturbed per input tensor; all of them when the tensor is smaller.
    std::size_t max_per_tensor = 200;
    std::uint64_t seed = 0;
};

// |a - n| / max(1e-8, |a| + |n|)
double relative_error(double analytic, double numeric);

// Compares the reverse-mode gradient of loss() with respect to every tensor
// in `wrt` against central differences. loss() must rebuild the graph from
// the current values of `wrt` on each call.
Report check(std::string name, const std::function<TensorF64()>& loss, std::vector<TensorF64> wrt,
             const Options& options = {});

// Registered single-op checks (ops, layers, attention, light-up, SSIM loss,
// guided block).
std::vector<std::string> op_names();
Report check_op(std::string_view name, const Options& options = {});

// d MAE(out, target) / d(every parameter) on a 3x8x8 instance.
Report check_full_model(const ModelConfig& config, const Options& options);

}  // namespace eretinex::gradcheck
