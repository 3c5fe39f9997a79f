// Fits a pendulum model, prints its spectrum and compares both prediction schemes.

#include <cmath>
#include <iostream>
#include <numbers>

#include "koopman/koopman.hpp"

using namespace koopman;

int main() {
    const auto training = generate_training_set(SystemTag::Pendulum, 100, 3.0, 0.01, InputSignal{}, 42);
    const Dictionary dict = build_dictionary({.system = SystemTag::Pendulum, .size = 6});
    const KoopmanModel model = fit(assemble(training), dict);

    std::cout << "observables:";
    for (const auto& o : dict.observables()) std::cout << ' ' << o.label;
    std::cout << "\ncontinuous eigenvalues:\n";
    for (const auto& l : spectrum(model).continuous) std::cout << "  " << l.real() << (l.imag() < 0 ? " - " : " + ") << std::abs(l.imag()) << "i\n";

    const Vector x0 = (Vector(2) << 7.0 * std::numbers::pi / 8.0, 0.0).finished();
    const Trajectory ref = simulate(pendulum_model(), x0, InputSignal{}, 10.0, 0.01, 0);
    const auto steps = static_cast<std::size_t>(ref.samples() - 1);
    const Vector meas = ref.states.row(0).transpose();
    const Vector straight = predict_straight(model, x0, steps).states.row(0).transpose();
    const Vector corrected = predict_corrected(model, x0, steps).row(0).transpose();
    std::cout << "cumulative x1 error over 10 s: straight " << cumulative_error(meas, straight).tail(1)[0]
              << ", corrected " << cumulative_error(meas, corrected).tail(1)[0] << '\n';
}
