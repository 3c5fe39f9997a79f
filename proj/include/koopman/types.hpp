#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "koopman/error.hpp"

namespace koopman {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;

inline bool all_finite(const Eigen::Ref<const Matrix>& m) {
    return m.allFinite();
}

inline void require_finite(const Eigen::Ref<const Matrix>& m, const char* what) {
    if (!m.allFinite()) {
        throw ValidationError(std::string(what) + ": non-finite entry");
    }
}

/// Parse a comma-separated list of numbers ("2.748,0").
inline Vector parse_vector(const std::string& text) {
    std::vector<double> values;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t next = text.find(',', pos);
        if (next == std::string::npos) next = text.size();
        std::string item = text.substr(pos, next - pos);
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            throw ValidationError("cannot parse number '" + item + "' in '" + text + "'");
        }
        for (std::size_t i = used; i < item.size(); ++i) {
            if (!std::isspace(static_cast<unsigned char>(item[i]))) {
                throw ValidationError("cannot parse number '" + item + "' in '" + text + "'");
            }
        }
        values.push_back(v);
        pos = next + 1;
    }
    return Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

} // namespace koopman
