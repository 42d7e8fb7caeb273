// Command line front end for the experiment runner. Each subcommand builds a
// StudyConfig (defaults, then JSON config file, then explicit flags), runs the
// study, writes records.csv / records.json and summary.json into the output
// directory, and exits 0 only when every asserted invariant passed.

#include <eiglab/study.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    int jobs = 1;
    std::optional<std::uint64_t> seed;
    std::string format = "csv";
};

void add_common_flags(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file overriding the defaults")
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", args.out_dir, "Output directory for records and summary");
    cmd->add_option("--jobs", args.jobs, "Concurrent rows (default 1)")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", args.seed, "Override the config seed");
    cmd->add_option("--format", args.format, "Records format: csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
}

eiglab::StudyConfig load_config(const CommonArgs& args, eiglab::StudyKind kind) {
    eiglab::StudyConfig config = eiglab::default_config(kind);
    if (!args.config_path.empty()) {
        std::ifstream in(args.config_path);
        if (!in) throw std::runtime_error("cannot open config file " + args.config_path);
        nlohmann::json j;
        in >> j;
        config = eiglab::config_from_json(j, kind);
        if (config.kind != kind)
            throw std::runtime_error("config file requests study kind \"" +
                                     std::string(eiglab::kind_name(config.kind)) +
                                     "\" but the subcommand runs \"" +
                                     std::string(eiglab::kind_name(kind)) + "\"");
    }
    if (args.seed) config.seed = *args.seed;
    if (!args.out_dir.empty()) config.out_dir = args.out_dir;
    return config;
}

int run_command(const CommonArgs& args, eiglab::StudyKind kind) {
    const eiglab::StudyConfig config = load_config(args, kind);
    const eiglab::StudyReport report = eiglab::run_study(config, args.jobs);
    eiglab::write_report(report, config.out_dir, args.format);
    std::printf("%s: %zu rows, %zu failures -> %s\n", eiglab::kind_name(kind), report.rows.size(),
                report.failures.size(), config.out_dir.c_str());
    for (const auto& [name, state] : report.checks)
        std::printf("  %-24s %s\n", name.c_str(), state.c_str());
    for (const std::string& f : report.failures) std::printf("  failure: %s\n", f.c_str());
    return report.pass ? 0 : 1;
}

// Fast invariant sweep over every module; independent of the study configs.
int run_selftest() {
    using namespace eiglab;
    int failures = 0;
    auto check = [&](const char* what, bool ok) {
        std::printf("  [%s] %s\n", ok ? "ok" : "FAIL", what);
        if (!ok) ++failures;
    };

    {
        std::vector<double> hs = {0.5, 0.25, 0.125, 0.0625};
        std::vector<double> quad, flat;
        for (double h : hs) {
            quad.push_back(h * h);
            flat.push_back(3.0);
        }
        const RateFit f2 = fit_rate(hs, quad, "h2");
        const RateFit f0 = fit_rate(hs, flat, "flat");
        check("rate fit recovers an exact square law",
              f2.valid && std::abs(f2.slope - 2.0) <= 1e-12);
        check("rate fit reports zero slope for constants", f0.valid && std::abs(f0.slope) <= 1e-12);
    }
    {
        Rng rng(11);
        const Matrix A = rng.gaussian_matrix(8, 8);
        const Matrix raw = rng.gaussian_matrix(8, 3);
        const GramPtr g = Gram::identity(8);
        const Subspace s = orthonormalize(raw, g);
        const Matrix gram = s.frame.adjoint() * s.frame;
        check("orthonormalized frame has identity Gram",
              (gram - Matrix::Identity(3, 3)).norm() <= 1e-12);
        const Matrix Z = oblique_projector(s, s);
        check("projector onto a subspace is idempotent", (Z * Z - Z).norm() <= 1e-10);
    }
    {
        const Testbed tb = nonnormal_testbed(12, 0.3, 5);
        const Matrix& A = tb.reference->A_ref;
        Rng rng(6);
        const KrylovRun run = bilanczos(A, rng.gaussian_vector(12), rng.gaussian_vector(12), 8);
        const double scale = std::max(1.0, spectral_norm(A));
        bool identity = run.steps >= 4;
        for (Index l = 1; l <= run.steps; ++l) {
            const StepDiagnostics d = step_diagnostics(run, l, tb.values(0), tb.right_vectors.col(0));
            if (std::abs(d.middleDirect - d.middleClosed) > 1e-9 * scale) identity = false;
        }
        check("projected-residual identity along a two-sided run", identity);
    }
    {
        Rng rng(7);
        const Matrix G1 = rng.gaussian_matrix(5, 5);
        const Matrix G2 = rng.gaussian_matrix(4, 4);
        const Matrix L1 = 2.0 * Matrix::Identity(5, 5) + 0.25 * G1;
        const Matrix L2 = -2.0 * Matrix::Identity(4, 4) + 0.25 * G2;
        const Contour contour(Complex(-2.0, 0.0), 0.25 * spectral_norm(G2) + 0.3, 32);
        const SepReport sr = sep_report(L1, L2, contour);
        check("pseudospectral bound stays below the certified sep",
              sr.bound_pseudo <= sr.sep_exact + 1e-12);
        Rng mrng(8);
        const Matrix M = mrng.gaussian_matrix(5, 4);
        const Matrix S = sylvester_contour(L1, L2, M, contour);
        const Matrix S0 = sylvester_oracle(L1, L2, M);
        check("contour Sylvester solve matches the Kronecker oracle",
              (S - S0).norm() <= 1e-7 * std::max(1.0, S0.norm()));
    }
    {
        StudyConfig c = default_config(StudyKind::sep);
        c.trials = 5;
        const StudyReport a = run_study(c, 1);
        const StudyReport b = run_study(c, 2);
        const std::vector<std::string> la = csv_lines(a), lb = csv_lines(b);
        check("sep bench rows are deterministic across thread counts", la == lb && a.pass);
    }
    std::printf("selftest: %d failure(s)\n", failures);
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Galerkin eigenvector asymptotics laboratory"};
    app.require_subcommand(1);

    CommonArgs spectral_args, bounded_args, krylov_args, sep_args;
    CLI::App* spectral =
        app.add_subcommand("spectral-study", "Mesh-family convergence study on the model operator");
    add_common_flags(spectral, spectral_args);
    CLI::App* bounded =
        app.add_subcommand("bounded-study", "Nested random subspaces on a bounded testbed operator");
    add_common_flags(bounded, bounded_args);
    CLI::App* krylov =
        app.add_subcommand("krylov-study", "Two-sided Krylov diagnostics on seeded testbeds");
    add_common_flags(krylov, krylov_args);
    CLI::App* sep =
        app.add_subcommand("sep-bench", "Separation bounds versus certified sep on seeded pairs");
    add_common_flags(sep, sep_args);
    CLI::App* selftest = app.add_subcommand("selftest", "Run the fast invariant suites");

    CLI11_PARSE(app, argc, argv);

    try {
        if (spectral->parsed()) return run_command(spectral_args, eiglab::StudyKind::spectral);
        if (bounded->parsed()) return run_command(bounded_args, eiglab::StudyKind::bounded);
        if (krylov->parsed()) return run_command(krylov_args, eiglab::StudyKind::krylov);
        if (sep->parsed()) return run_command(sep_args, eiglab::StudyKind::sep);
        if (selftest->parsed()) return run_selftest();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
