// Command-line front end: generate, fit, predict, analyze, ingest, reproduce.
//
// Exit codes: 0 success, 1 validation error or bad usage, 2 numerical failure
// (including failed reproduction checks).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "koopman/koopman.hpp"

namespace fs = std::filesystem;
using namespace koopman;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string format = "csv";
};

std::optional<nlohmann::json> load_config(const Globals& g) {
    if (g.config.empty()) return std::nullopt;
    if (!fs::exists(g.config)) throw ValidationError("config file '" + g.config + "' does not exist");
    return read_json_file(g.config);
}

ExperimentConfig experiment_config(const Globals& g) {
    ExperimentConfig c;
    if (auto j = load_config(g)) c = ExperimentConfig::from_json(*j, c);
    if (g.seed) c.seed = *g.seed;
    return c;
}

void emit_json(const Globals& g, const fs::path& default_name, const nlohmann::json& j) {
    if (g.out.empty()) {
        std::cout << j.dump(2) << '\n';
    } else {
        write_json_file(fs::path(g.out) / default_name, j);
    }
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
    std::string system;
    std::optional<std::size_t> n_traj;
    std::optional<double> duration;
    std::optional<double> dt;
    std::string signal;
};

int run_generate(const Globals& g, const GenerateArgs& a) {
    ExperimentConfig c = experiment_config(g);
    if (!a.system.empty()) c.system = parse_system_tag(a.system);
    if (a.n_traj) c.training.n_traj = *a.n_traj;
    if (a.duration) c.training.duration = *a.duration;
    if (a.dt) c.training.dt = *a.dt;
    if (!a.signal.empty()) {
        try {
            c.training.signals = {InputSignal::from_json(nlohmann::json::parse(a.signal))};
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(std::string("--signal is not valid JSON: ") + e.what());
        }
    }
    c.validate();
    const auto set = generate_training(c);
    const fs::path out = g.out.empty() ? fs::path("trajectories") : fs::path(g.out);
    if (g.format == "json") {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& t : set) {
            nlohmann::json tj = trajectory_metadata(t, "");
            tj.erase("file");
            tj["times"] = std::vector<double>(t.times.data(), t.times.data() + t.times.size());
            nlohmann::json states = nlohmann::json::array();
            for (Eigen::Index i = 0; i < t.state_dim(); ++i) {
                Vector r = t.states.row(i).transpose();
                states.push_back(std::vector<double>(r.data(), r.data() + r.size()));
            }
            tj["states"] = states;
            nlohmann::json inputs = nlohmann::json::array();
            for (Eigen::Index i = 0; i < t.input_dim(); ++i) {
                Vector r = t.inputs.row(i).transpose();
                inputs.push_back(std::vector<double>(r.data(), r.data() + r.size()));
            }
            tj["inputs"] = inputs;
            arr.push_back(std::move(tj));
        }
        write_json_file(out / "trajectories.json", {{"config", c.to_json()}, {"trajectories", arr}});
    } else {
        write_trajectory_set(out, set, {{"config", c.to_json()}});
    }
    std::cerr << "wrote " << set.size() << " trajectories to " << out.string() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct FitArgs {
    std::string data;
    std::string dictionary;
    std::optional<int> size;
    std::optional<double> rtol;
};

int run_fit(const Globals& g, const FitArgs& a) {
    ExperimentConfig c = experiment_config(g);
    if (a.size) c.dictionary_size = *a.size;
    DictionarySpec spec = c.dictionary_spec(c.dictionary_size);
    if (!a.dictionary.empty()) spec.system = parse_system_tag(a.dictionary);
    std::vector<Trajectory> set;
    if (!a.data.empty()) {
        if (!fs::exists(a.data)) throw ValidationError("data path '" + a.data + "' does not exist");
        set = read_trajectory_set(a.data);
    } else {
        set = generate_training(c);
    }
    FitOptions opt;
    if (a.rtol) opt.rtol = *a.rtol;
    const SnapshotSet snaps = assemble(set);
    KoopmanModel m = fit_auto(snaps, build_dictionary(spec), opt);
    for (const auto& w : m.warnings) std::cerr << "warning: " << w << '\n';
    const fs::path out = g.out.empty() ? fs::path(".") : fs::path(g.out);
    write_json_file(out / "model.json", model_to_json(m));
    std::cerr << "fitted N=" << m.N() << " (" << snaps.cols() << " pairs, residual " << m.fit_residual << ") -> "
              << (out / "model.json").string() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct PredictArgs {
    std::string model;
    std::string x0;
    std::size_t steps = 0;
    std::string scheme = "corrected";
    std::string inputs;
    std::string signal;
};

int run_predict(const Globals& g, const PredictArgs& a) {
    if (!fs::exists(a.model)) throw ValidationError("model file '" + a.model + "' does not exist");
    const KoopmanModel m = model_from_json(read_json_file(a.model));
    const Vector x0 = parse_vector(a.x0);
    if (x0.size() != m.n()) {
        throw ValidationError("--x0 has " + std::to_string(x0.size()) + " entries, model state has " + std::to_string(m.n()));
    }
    Matrix u;
    if (m.controlled()) {
        if (!a.inputs.empty()) {
            Trajectory ut = read_trajectory_csv(fs::path(a.inputs));
            u = ut.inputs;
            if (u.cols() == static_cast<Eigen::Index>(a.steps) && u.cols() > 0) {
                // The final sample's input is never applied; repeat the last one for the output file.
                u.conservativeResize(Eigen::NoChange, u.cols() + 1);
                u.col(u.cols() - 1) = u.col(u.cols() - 2);
            }
        } else {
            InputSignal sig;
            if (!a.signal.empty()) {
                try {
                    sig = InputSignal::from_json(nlohmann::json::parse(a.signal));
                } catch (const nlohmann::json::exception& e) {
                    throw ValidationError(std::string("--signal is not valid JSON: ") + e.what());
                }
            }
            const std::uint64_t seed = g.seed.value_or(0);
            u.resize(m.p(), static_cast<Eigen::Index>(a.steps) + 1);
            for (Eigen::Index k = 0; k < u.cols(); ++k) {
                u.col(k).setConstant(sig.value(static_cast<double>(k) * m.dt, static_cast<std::size_t>(k), seed));
            }
        }
    }
    const Matrix* useq = m.controlled() ? &u : nullptr;
    Matrix states;
    if (a.scheme == "straight") {
        states = predict_straight(m, x0, useq, a.steps).states;
    } else if (a.scheme == "corrected") {
        states = predict_corrected(m, x0, useq, a.steps);
    } else {
        throw ValidationError("--scheme must be 'straight' or 'corrected'");
    }
    Trajectory t;
    t.dt = m.dt;
    t.times.resize(states.cols());
    for (Eigen::Index k = 0; k < states.cols(); ++k) t.times[k] = static_cast<double>(k) * m.dt;
    t.states = states;
    t.inputs = m.controlled() ? Matrix(u.leftCols(states.cols())) : Matrix(0, states.cols());
    if (g.format == "json") {
        nlohmann::json j = {{"scheme", a.scheme}, {"dt", m.dt}};
        j["t"] = std::vector<double>(t.times.data(), t.times.data() + t.times.size());
        for (Eigen::Index i = 0; i < states.rows(); ++i) {
            Vector r = states.row(i).transpose();
            j["x" + std::to_string(i + 1)] = std::vector<double>(r.data(), r.data() + r.size());
        }
        emit_json(g, "prediction.json", j);
    } else if (g.out.empty()) {
        write_trajectory_csv(std::cout, t);
    } else {
        fs::create_directories(g.out);
        write_trajectory_csv(fs::path(g.out) / "prediction.csv", t);
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
    std::string model;
    bool discrete = false;
    std::optional<double> rank_rtol;
};

int run_analyze(const Globals& g, const AnalyzeArgs& a) {
    if (!fs::exists(a.model)) throw ValidationError("model file '" + a.model + "' does not exist");
    const KoopmanModel m = model_from_json(read_json_file(a.model));
    AnalysisOptions opt;
    opt.use_continuous = !a.discrete;
    if (a.rank_rtol) opt.rank_rtol = *a.rank_rtol;
    const AnalysisReport r = analyze(m, opt);
    if (g.format == "json") {
        emit_json(g, "analysis.json", report_to_json(r));
        return kExitOk;
    }
    std::ostringstream os;
    os << "index,mu_re,mu_im,lambda_re,lambda_im\n";
    for (std::size_t i = 0; i < r.spectrum.discrete.size(); ++i) {
        os << i << ',' << detail::format_double(r.spectrum.discrete[i].real()) << ','
           << detail::format_double(r.spectrum.discrete[i].imag()) << ','
           << detail::format_double(r.spectrum.continuous[i].real()) << ','
           << detail::format_double(r.spectrum.continuous[i].imag()) << '\n';
    }
    if (g.out.empty()) {
        std::cout << os.str();
    } else {
        fs::create_directories(g.out);
        std::ofstream(fs::path(g.out) / "spectrum.csv") << os.str();
        write_json_file(fs::path(g.out) / "analysis.json", report_to_json(r));
    }
    std::cerr << "stable_continuous=" << r.stable_continuous << " ctrb_rank="
              << (r.ctrb_rank ? std::to_string(*r.ctrb_rank) : "n/a") << " obsv_rank="
              << (r.obsv_rank ? std::to_string(*r.obsv_rank) : "n/a") << " (" << r.rank_domain
              << ", rtol " << r.rank_rtol << ")\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct IngestArgs {
    std::vector<std::string> files;
    int window = 21;
    std::string time_column = "t";
    std::string angle_column = "x1";
    std::string velocity_column = "x2";
    std::string scheme = "savgol-central";
};

int run_ingest(const Globals& g, const IngestArgs& a) {
    IngestSpec spec;
    for (const auto& f : a.files) spec.files.emplace_back(f);
    spec.window = a.window;
    spec.time_column = a.time_column;
    spec.angle_column = a.angle_column;
    spec.velocity_column = a.velocity_column;
    spec.scheme = a.scheme;
    const IngestResult res = ingest_measurements(spec);
    const fs::path out = g.out.empty() ? fs::path("ingested") : fs::path(g.out);
    write_trajectory_set(out, res.trajectories, {{"ingest", res.manifest}});
    std::cerr << "ingested " << res.trajectories.size() << " file(s) into " << out.string() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------

int run_reproduce(const Globals& g, const std::string& target_name) {
    const Target target = parse_target(target_name);
    const fs::path out = g.out.empty() ? fs::path("reproduce") / target_name : fs::path(g.out);
    const ReproductionResult res = run_reproduction(target, g.seed.value_or(0), out, load_config(g));
    if (g.format == "json") {
        std::cout << res.report.dump(2) << '\n';
    } else {
        for (const auto& c : res.checks) {
            std::cout << (c.passed ? "PASS " : "FAIL ") << res.target << ' ' << c.name;
            if (!c.detail.empty()) std::cout << " (" << c.detail << ')';
            std::cout << '\n';
        }
    }
    return res.passed() ? kExitOk : kExitNumerical;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learn lifted linear (Koopman) models of nonlinear systems with EDMD/EDMDc"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "Experiment config (JSON)");
    app.add_option("--seed", g.seed, "Root random seed");
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"csv", "json"}));

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "Simulate a training set");
    gen->add_option("--system", ga.system, "pendulum, duffing or golf");
    gen->add_option("--n-traj", ga.n_traj, "Number of trajectories");
    gen->add_option("--duration", ga.duration, "Seconds per trajectory");
    gen->add_option("--dt", ga.dt, "Step size [s]");
    gen->add_option("--signal", ga.signal, R"(Input signal as JSON, e.g. {"kind":"random","lo":-1,"hi":1})");

    FitArgs fa;
    auto* fitc = app.add_subcommand("fit", "Fit K_t (and B_t when the data carries inputs)");
    fitc->add_option("--data", fa.data, "Trajectory directory (with manifest.json) or CSV file");
    fitc->add_option("--dictionary", fa.dictionary, "Dictionary family (defaults to the config system)");
    fitc->add_option("--size", fa.size, "Number of observables N");
    fitc->add_option("--rtol", fa.rtol, "Pseudoinverse relative tolerance");

    PredictArgs pa;
    auto* pred = app.add_subcommand("predict", "Predict from an initial state");
    pred->add_option("--model", pa.model, "Model file")->required();
    pred->add_option("--x0", pa.x0, "Initial state, comma separated")->required();
    pred->add_option("--steps", pa.steps, "Number of steps")->required();
    pred->add_option("--scheme", pa.scheme, "straight or corrected")->check(CLI::IsMember({"straight", "corrected"}));
    pred->add_option("--inputs", pa.inputs, "CSV with u columns for controlled models");
    pred->add_option("--signal", pa.signal, "Input signal as JSON for controlled models");

    AnalyzeArgs aa;
    auto* ana = app.add_subcommand("analyze", "Spectrum, stability and rank tests");
    ana->add_option("--model", aa.model, "Model file")->required();
    ana->add_flag("--discrete", aa.discrete, "Rank tests on (K_t, B_t) instead of the generator");
    ana->add_option("--rank-rtol", aa.rank_rtol, "Relative rank tolerance");

    IngestArgs ia;
    auto* ing = app.add_subcommand("ingest", "Read measured CSVs, estimating velocity when absent");
    ing->add_option("files", ia.files, "CSV files")->required();
    ing->add_option("--window", ia.window, "Savitzky-Golay window (odd, >= 3)");
    ing->add_option("--time-column", ia.time_column, "Time column name");
    ing->add_option("--angle-column", ia.angle_column, "Angle column name");
    ing->add_option("--velocity-column", ia.velocity_column, "Velocity column name, used when present");
    ing->add_option("--scheme", ia.scheme, "Differentiation scheme");

    std::string target;
    auto* rep = app.add_subcommand("reproduce", "Run a reproduction target end to end");
    std::string targets;
    for (const auto& [tag, name] : kTargets) targets += std::string(targets.empty() ? "" : ", ") + name;
    rep->add_option("target", target, "One of: " + targets)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        if (*gen) return run_generate(g, ga);
        if (*fitc) return run_fit(g, fa);
        if (*pred) return run_predict(g, pa);
        if (*ana) return run_analyze(g, aa);
        if (*ing) return run_ingest(g, ia);
        if (*rep) return run_reproduce(g, target);
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    return kExitValidation;
}
