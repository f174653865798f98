#pragma once

// Test-support module: independent finite-difference oracle for gradients.
// Lives outside the product code paths; only test binaries and the self-test
// harness include it.

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "tsit/tensor.hpp"

namespace tsit::testing {

struct GradCheckReport {
    bool ok = true;
    std::size_t checked = 0;      // elements compared against the oracle
    std::size_t significant = 0;  // elements with gradient magnitude above the floor
    double worst_rel = 0.0;
    std::string detail;           // first failure, empty when ok
};

// Central-difference check of d(loss)/d(params) in double precision.
//
// make_loss must rebuild the computation from the current param values on
// every call (a fresh forward pass). Comparison: relative error
// |ad - fd| / max(|ad|, |fd|) <= tol wherever max(|ad|, |fd|) > floor;
// elements below the floor are accepted as zero-gradient agreement.
inline GradCheckReport check_gradients(const std::function<Tensor<double>()>& make_loss,
                                       const std::vector<Tensor<double>>& params,
                                       double h = 1e-4, double tol = 1e-4,
                                       const std::string& label = "", double floor = 1e-8) {
    GradCheckReport report;
    auto& tape = Tape<double>::active();

    tape.clear();
    for (const auto& p : params) {
        if (!p.requires_grad()) {
            report.ok = false;
            report.detail = label + ": parameter without requires_grad handed to check_gradients";
            return report;
        }
        const_cast<Tensor<double>&>(p).zero_grad();
    }
    Tensor<double> loss = make_loss();
    if (loss.numel() != 1) {
        report.ok = false;
        report.detail = label + ": loss is not scalar";
        return report;
    }
    loss.backward();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        analytic.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.numel(), 0.0));
    }
    tape.clear();

    auto eval = [&]() {
        NoGradGuard<double> ng;
        return make_loss().item();
    };

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<double>& p = const_cast<Tensor<double>&>(params[pi]);
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double orig = p.data()[i];
            p.data()[i] = orig + h;
            const double fp = eval();
            p.data()[i] = orig - h;
            const double fm = eval();
            p.data()[i] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double ad = analytic[pi][i];
            const double denom = std::max(std::abs(ad), std::abs(fd));
            ++report.checked;
            if (denom <= floor) continue;  // both effectively zero
            ++report.significant;
            const double rel = std::abs(ad - fd) / denom;
            report.worst_rel = std::max(report.worst_rel, rel);
            if (rel > tol && report.ok) {
                report.ok = false;
                std::ostringstream os;
                os << label << ": param " << pi << " elem " << i << " analytic " << ad
                   << " vs finite-diff " << fd << " (rel " << rel << ")";
                report.detail = os.str();
            }
        }
    }
    return report;
}

}  // namespace tsit::testing
