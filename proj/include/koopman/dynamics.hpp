#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "koopman/parallel.hpp"
#include "koopman/rng.hpp"
#include "koopman/systems.hpp"
#include "koopman/types.hpp"

namespace koopman {

// ---------------------------------------------------------------------------
// Benchmark systems. All three are control affine: xdot = f(x) + B u.

inline Vector pendulum_rhs(const Vector& x, double u, double d = kPendulumDamping) {
    Vector dx(2);
    dx << x[1], -std::sin(x[0]) - d * x[1] + u;
    return dx;
}

inline Vector duffing_rhs(const Vector& x, double u, double delta = kDuffingDamping) {
    Vector dx(2);
    dx << x[1], x[0] - x[0] * x[0] * x[0] - delta * x[1] + u;
    return dx;
}

/// Friction torque M_d(x) = d x2 + r mu sgn(x2) |m x2^2 a + m g cos x1|, sgn(0) = 0.
inline double golf_damping(const Vector& x, const GolfParameters& p = {}) {
    double v = x[1];
    double sgn = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    return p.d * v + p.r * p.mu * sgn * std::fabs(p.m * v * v * p.a + p.m * p.g * std::cos(x[0]));
}

inline Vector golf_rhs(const Vector& x, double u, const GolfParameters& p = {}) {
    Vector dx(2);
    dx << x[1], (-p.m * p.g * p.a * std::sin(x[0]) - golf_damping(x, p) + 4.0 * u) / p.J;
    return dx;
}

struct SystemModel {
    std::string name;
    int state_dim = 0;
    int input_dim = 0;
    std::function<Vector(const Vector&, const Vector&)> rhs;
};

namespace detail {
inline double scalar_input(const Vector& u) { return u.size() == 0 ? 0.0 : u[0]; }
} // namespace detail

inline SystemModel pendulum_model(double d = kPendulumDamping) {
    return {"pendulum", 2, 1, [d](const Vector& x, const Vector& u) { return pendulum_rhs(x, detail::scalar_input(u), d); }};
}

inline SystemModel duffing_model(double delta = kDuffingDamping) {
    return {"duffing", 2, 1,
            [delta](const Vector& x, const Vector& u) { return duffing_rhs(x, detail::scalar_input(u), delta); }};
}

inline SystemModel golf_model(GolfParameters p = {}) {
    p.validate();
    return {"golf", 2, 1, [p](const Vector& x, const Vector& u) { return golf_rhs(x, detail::scalar_input(u), p); }};
}

/// xdot = A x + B u; used by tests and as a generic linear plant.
inline SystemModel linear_model(Matrix A, Matrix B) {
    if (A.rows() != A.cols() || B.rows() != A.rows()) throw ValidationError("linear model: inconsistent A, B");
    int n = static_cast<int>(A.rows());
    int p = static_cast<int>(B.cols());
    return {"linear", n, p, [A = std::move(A), B = std::move(B)](const Vector& x, const Vector& u) -> Vector {
                if (u.size() == 0) return A * x;
                return A * x + B * u;
            }};
}

inline SystemModel model_for(SystemTag tag) {
    switch (tag) {
    case SystemTag::Pendulum: return pendulum_model();
    case SystemTag::Duffing: return duffing_model();
    case SystemTag::Golf: return golf_model();
    default: throw ValidationError("no simulation model for system '" + to_string(tag) + "'");
    }
}

/// Classical RK4 step with u held constant over the step.
inline Vector rk4_step(const SystemModel& model, const Vector& x, const Vector& u, double dt) {
    if (!(dt > 0.0)) throw ValidationError("rk4 step size must be positive");
    const Vector k1 = model.rhs(x, u);
    const Vector k2 = model.rhs(x + 0.5 * dt * k1, u);
    const Vector k3 = model.rhs(x + 0.5 * dt * k2, u);
    const Vector k4 = model.rhs(x + dt * k3, u);
    Vector next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!next.allFinite()) throw DivergenceError(0, "integration diverged");
    return next;
}

// ---------------------------------------------------------------------------
// Excitation signals

struct ZeroSignal {};
/// Fresh uniform draw per sample, held over the step.
struct RandomSignal {
    double lo = -1.0;
    double hi = 1.0;
};
struct SineSignal {
    double amplitude = 1.0;
    double frequency = 1.0; ///< Hz
};
struct StepSignal {
    double amplitude = 1.0;
    double step_time = 0.0;
};
/// Linear sweep u(t) = A sin(2 pi (f0 + (f1 - f0) t / (2T)) t).
struct ChirpSignal {
    double amplitude = 1.0;
    double f0 = 0.1;
    double f1 = 2.0;
    double duration = 10.0;
};

class InputSignal {
public:
    using Variant = std::variant<ZeroSignal, RandomSignal, SineSignal, StepSignal, ChirpSignal>;

    InputSignal() = default;
    template <typename S>
        requires std::is_constructible_v<Variant, S>
    InputSignal(S s) : v_(std::move(s)) {} // NOLINT: implicit by intent

    const Variant& variant() const noexcept { return v_; }
    bool is_zero() const noexcept { return std::holds_alternative<ZeroSignal>(v_); }

    /// u at sample k (time t) of a trajectory with the given seed.
    double value(double t, std::size_t k, std::uint64_t seed) const {
        return std::visit(
            [&](const auto& s) -> double {
                using S = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<S, ZeroSignal>) {
                    return 0.0;
                } else if constexpr (std::is_same_v<S, RandomSignal>) {
                    return s.lo + (s.hi - s.lo) * rng::to_unit(rng::derive(seed, static_cast<std::uint64_t>(k)));
                } else if constexpr (std::is_same_v<S, SineSignal>) {
                    return s.amplitude * std::sin(2.0 * std::numbers::pi * s.frequency * t);
                } else if constexpr (std::is_same_v<S, StepSignal>) {
                    return t >= s.step_time ? s.amplitude : 0.0;
                } else {
                    double f = s.f0 + (s.f1 - s.f0) * t / (2.0 * s.duration);
                    return s.amplitude * std::sin(2.0 * std::numbers::pi * f * t);
                }
            },
            v_);
    }

    nlohmann::json to_json() const {
        return std::visit(
            [](const auto& s) -> nlohmann::json {
                using S = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<S, ZeroSignal>) {
                    return {{"kind", "zero"}};
                } else if constexpr (std::is_same_v<S, RandomSignal>) {
                    return {{"kind", "random"}, {"lo", s.lo}, {"hi", s.hi}};
                } else if constexpr (std::is_same_v<S, SineSignal>) {
                    return {{"kind", "sine"}, {"amplitude", s.amplitude}, {"frequency", s.frequency}};
                } else if constexpr (std::is_same_v<S, StepSignal>) {
                    return {{"kind", "step"}, {"amplitude", s.amplitude}, {"step_time", s.step_time}};
                } else {
                    return {{"kind", "chirp"}, {"amplitude", s.amplitude}, {"f0", s.f0}, {"f1", s.f1},
                            {"duration", s.duration}};
                }
            },
            v_);
    }

    static InputSignal from_json(const nlohmann::json& j) {
        if (!j.is_object() || !j.contains("kind")) throw ValidationError("input signal needs a 'kind'");
        const std::string kind = j.at("kind").get<std::string>();
        auto num = [&](const char* key, double def) { return j.contains(key) ? j.at(key).get<double>() : def; };
        if (kind == "zero") return ZeroSignal{};
        if (kind == "random") {
            RandomSignal s{num("lo", -1.0), num("hi", 1.0)};
            if (!(s.hi >= s.lo)) throw ValidationError("random signal needs lo <= hi");
            return s;
        }
        if (kind == "sine") return SineSignal{num("amplitude", 1.0), num("frequency", 1.0)};
        if (kind == "step") return StepSignal{num("amplitude", 1.0), num("step_time", 0.0)};
        if (kind == "chirp") {
            ChirpSignal s{num("amplitude", 1.0), num("f0", 0.1), num("f1", 2.0), num("duration", 10.0)};
            if (!(s.duration > 0.0)) throw ValidationError("chirp duration must be positive");
            return s;
        }
        throw ValidationError("unknown input signal kind '" + kind + "'");
    }

private:
    Variant v_{ZeroSignal{}};
};

// ---------------------------------------------------------------------------

/// Uniformly sampled trajectory. `inputs` has zero rows for autonomous runs.
struct Trajectory {
    double dt = 0.0;
    Vector times;
    Matrix states; ///< n x M
    Matrix inputs; ///< p x M, or 0 x M
    std::uint64_t seed = 0;
    std::string system;
    nlohmann::json signal = nlohmann::json::object();

    Eigen::Index samples() const noexcept { return states.cols(); }
    Eigen::Index state_dim() const noexcept { return states.rows(); }
    Eigen::Index input_dim() const noexcept { return inputs.rows(); }
    bool has_inputs() const noexcept { return inputs.rows() > 0; }
};

/// Integrates `model` from x0 for `duration` seconds with M = round(duration/dt) + 1
/// samples. Zero signals produce an autonomous trajectory (no input rows).
inline Trajectory simulate(const SystemModel& model, const Vector& x0, const InputSignal& signal, double duration,
                           double dt, std::uint64_t seed) {
    if (!(duration > 0.0)) throw ValidationError("simulation duration must be positive");
    if (!(dt > 0.0)) throw ValidationError("simulation step size must be positive");
    if (x0.size() != model.state_dim) throw ValidationError("initial state has wrong dimension for " + model.name);
    if (!x0.allFinite()) throw ValidationError("initial state contains non-finite values");
    const auto M = static_cast<Eigen::Index>(std::llround(duration / dt)) + 1;
    const bool record = !signal.is_zero();
    Trajectory traj;
    traj.dt = dt;
    traj.seed = seed;
    traj.system = model.name;
    traj.signal = signal.to_json();
    traj.times.resize(M);
    traj.states.resize(model.state_dim, M);
    traj.inputs.resize(record ? model.input_dim : 0, M);
    traj.states.col(0) = x0;
    Vector u = Vector::Zero(model.input_dim);
    for (Eigen::Index k = 0; k < M; ++k) {
        const double t = static_cast<double>(k) * dt;
        traj.times[k] = t;
        u.setConstant(signal.value(t, static_cast<std::size_t>(k), seed));
        if (record) traj.inputs.col(k) = u;
        if (k + 1 < M) {
            try {
                traj.states.col(k + 1) = rk4_step(model, traj.states.col(k), u, dt);
            } catch (const DivergenceError&) {
                throw DivergenceError(static_cast<std::size_t>(k), model.name + " integration diverged");
            }
        }
    }
    return traj;
}

/// Random initial states for a benchmark system.
///  - pendulum: uniform on (-pi, pi) x (-2, 2), accepted when the undamped energy
///    (1 - cos x1) + x2^2 / 2 is below the separatrix level 2;
///  - duffing: uniform on [-2, 2]^2;
///  - golf: uniform on (-pi/2, pi/2) x (-5, 5).
inline std::vector<Vector> sample_initial_conditions(SystemTag system, std::size_t count, std::uint64_t seed) {
    if (count < 1) throw ValidationError("need at least one initial condition");
    rng::Stream stream(seed);
    std::vector<Vector> out;
    out.reserve(count);
    const std::size_t cap = 1000 * count + 1000;
    std::size_t attempts = 0;
    while (out.size() < count) {
        if (++attempts > cap) throw SamplingError("initial-condition sampler exceeded its retry cap");
        Vector x(2);
        switch (system) {
        case SystemTag::Pendulum: {
            x << stream.uniform(-std::numbers::pi, std::numbers::pi), stream.uniform(-2.0, 2.0);
            if ((1.0 - std::cos(x[0])) + 0.5 * x[1] * x[1] >= 2.0) continue;
            break;
        }
        case SystemTag::Duffing: x << stream.uniform(-2.0, 2.0), stream.uniform(-2.0, 2.0); break;
        case SystemTag::Golf:
            x << stream.uniform(-std::numbers::pi / 2, std::numbers::pi / 2), stream.uniform(-5.0, 5.0);
            break;
        default: throw ValidationError("no initial-condition sampler for system '" + to_string(system) + "'");
        }
        out.push_back(std::move(x));
    }
    return out;
}

inline double pendulum_energy(const Vector& x) {
    return (1.0 - std::cos(x[0])) + 0.5 * x[1] * x[1];
}

struct TrainingProtocol {
    SystemTag system = SystemTag::Pendulum;
    std::size_t n_traj = 100;
    double duration = 3.0;
    double dt = 0.01;
    /// Trajectory i uses signals[i % signals.size()].
    std::vector<InputSignal> signals{InputSignal{}};
    std::uint64_t seed = 0;
    /// Redraw the initial state when |x1| leaves this bound along the trajectory.
    std::optional<double> workspace_limit;

    nlohmann::json to_json() const {
        nlohmann::json sigs = nlohmann::json::array();
        for (const auto& s : signals) sigs.push_back(s.to_json());
        nlohmann::json j = {{"system", to_string(system)}, {"n_traj", n_traj}, {"duration", duration},
                            {"dt", dt}, {"signals", sigs}, {"seed", seed}};
        if (workspace_limit) j["workspace_limit"] = *workspace_limit;
        return j;
    }
};

/// Independent trajectories; trajectory i draws everything from the substream
/// derive(seed, i), so the result does not depend on the worker count.
inline std::vector<Trajectory> generate_training_set(const TrainingProtocol& protocol) {
    if (protocol.n_traj < 1) throw ValidationError("need at least one trajectory");
    if (protocol.signals.empty()) throw ValidationError("need at least one input signal");
    const SystemModel model = model_for(protocol.system);
    std::vector<Trajectory> out(protocol.n_traj);
    parallel_for(protocol.n_traj, [&](std::size_t i) {
        const std::uint64_t traj_seed = rng::derive(protocol.seed, static_cast<std::uint64_t>(i));
        const InputSignal& signal = protocol.signals[i % protocol.signals.size()];
        for (std::uint64_t attempt = 0;; ++attempt) {
            if (attempt > 1000) throw SamplingError("no initial state kept the trajectory inside the workspace");
            const Vector x0 = sample_initial_conditions(protocol.system, 1, rng::derive(traj_seed, attempt)).front();
            Trajectory t = simulate(model, x0, signal, protocol.duration, protocol.dt, traj_seed);
            if (protocol.workspace_limit && t.states.row(0).cwiseAbs().maxCoeff() > *protocol.workspace_limit) continue;
            out[i] = std::move(t);
            break;
        }
    });
    return out;
}

inline std::vector<Trajectory> generate_training_set(SystemTag system, std::size_t n_traj, double duration, double dt,
                                                     const InputSignal& signal, std::uint64_t seed) {
    TrainingProtocol p;
    p.system = system;
    p.n_traj = n_traj;
    p.duration = duration;
    p.dt = dt;
    p.signals = {signal};
    p.seed = seed;
    return generate_training_set(p);
}

} // namespace koopman
