#pragma once

#include <string>
#include <string_view>

#include "koopman/error.hpp"

namespace koopman {

enum class SystemTag { Pendulum, Duffing, Golf, Identity, Polynomial };

inline std::string to_string(SystemTag tag) {
    switch (tag) {
    case SystemTag::Pendulum: return "pendulum";
    case SystemTag::Duffing: return "duffing";
    case SystemTag::Golf: return "golf";
    case SystemTag::Identity: return "identity";
    case SystemTag::Polynomial: return "polynomial";
    }
    return "unknown";
}

inline SystemTag parse_system_tag(std::string_view name) {
    if (name == "pendulum") return SystemTag::Pendulum;
    if (name == "duffing") return SystemTag::Duffing;
    if (name == "golf") return SystemTag::Golf;
    if (name == "identity") return SystemTag::Identity;
    if (name == "polynomial") return SystemTag::Polynomial;
    throw ValidationError("unknown system tag '" + std::string(name) + "'");
}

/// Viscous damping d of the pendulum.
inline constexpr double kPendulumDamping = 0.05;
/// Damping delta of the Duffing oscillator.
inline constexpr double kDuffingDamping = 0.1;

/// Physical parameters of the golf robot's stroke mechanism (SI units).
struct GolfParameters {
    double m = 0.5241;  ///< mass of the club [kg]
    double J = 0.1445;  ///< inertia [kg m^2]
    double g = 9.81;    ///< gravity [m/s^2]
    double a = 0.4702;  ///< axis to center of mass [m]
    double d = 0.0132;  ///< dynamic friction [kg m^2/s]
    double r = 0.0245;  ///< axis to friction point [m]
    double mu = 1.5136; ///< static friction [-]

    void validate() const {
        for (double v : {m, J, g, a, d, r, mu}) {
            if (!(v > 0.0)) throw ValidationError("golf parameters must all be strictly positive");
        }
    }
};

} // namespace koopman
