#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "saemvs/errors.hpp"

namespace saemvs {

/// Ragged longitudinal observations: one response/time vector per individual.
struct ObservationSet {
    std::vector<Eigen::VectorXd> y;
    std::vector<Eigen::VectorXd> t;

    int n() const { return static_cast<int>(y.size()); }
    int n_i(int i) const { return static_cast<int>(y[static_cast<std::size_t>(i)].size()); }
    long n_tot() const {
        long total = 0;
        for (const auto& yi : y) total += yi.size();
        return total;
    }

    void validate() const {
        if (y.size() != t.size()) throw ShapeMismatch("observation y/t individual counts differ");
        if (n() < 2) throw Precondition("at least 2 individuals required");
        for (int i = 0; i < n(); ++i) {
            const auto& yi = y[static_cast<std::size_t>(i)];
            const auto& ti = t[static_cast<std::size_t>(i)];
            if (yi.size() != ti.size())
                throw ShapeMismatch("individual " + std::to_string(i) + ": y and t lengths differ");
            if (yi.size() < 1) throw Precondition("individual " + std::to_string(i) + " has no observations");
            if (!yi.allFinite() || !ti.allFinite())
                throw Precondition("individual " + std::to_string(i) + " has non-finite values");
        }
    }
};

} // namespace saemvs
