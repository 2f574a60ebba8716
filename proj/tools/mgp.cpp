#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "mgp/error.hpp"
#include "mgp/experiment.hpp"
#include "mgp/version.hpp"
#include "mgp/wire.hpp"

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

struct CommonOptions {
    std::string config;
    std::optional<std::size_t> workers;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--workers", o.workers, "Worker threads");
    cmd->add_option("--seed-override", o.seed_override, "Replace the master seed");
    cmd->add_option("--out", o.out, "Output directory (replaces output_dir)");
}

mgp::ExperimentConfig load(const CommonOptions& o) {
    mgp::RunOptions run;
    run.workers = o.workers;
    run.seed_override = o.seed_override;
    if (o.out) run.output_dir = *o.out;
    return mgp::apply_overrides(mgp::load_config(o.config), run);
}

int cmd_run(const CommonOptions& o) {
    const auto config = load(o);
    const auto result = mgp::run_experiment(config);
    std::ifstream table(result.run_dir / "table.txt");
    std::cout << table.rdbuf();
    std::cout << "artifacts: " << result.run_dir.string() << '\n';
    std::size_t invalid = 0;
    for (const auto& row : result.rows) invalid += row.invalid_repetitions;
    if (invalid > 0) std::cerr << "warning: " << invalid << " repetitions had no valid credible set (see manifest.json)\n";
    return 0;
}

int cmd_diag(const CommonOptions& o) {
    const auto config = load(o);
    const auto result = mgp::run_diagnostics(config);
    for (const auto& [key, s] : result.traces) {
        std::cout << "trace " << key << ": first-quarter slope " << s.first_slope << ", last-quarter slope "
                  << s.last_slope << (s.stabilized ? " (stabilized)" : " (not stabilized)") << '\n';
    }
    for (const auto& [key, v] : result.acid_final) std::cout << "acid " << key << ": final cumulative " << v << '\n';
    std::cout << "artifacts: " << (result.run_dir / "diagnostics").string() << '\n';
    return 0;
}

int cmd_theta0(const CommonOptions& o) {
    std::cout << mgp::theta0_report(load(o)).dump(2) << '\n';
    return 0;
}

struct MockOptions {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;
    std::string mode = "constant";
    std::vector<double> probs{0.3, 0.7};
    std::size_t max_context = 10000;
    std::size_t bins = 64;
    bool reverse = false;
};

int cmd_serve_mock(const MockOptions& o) {
    mgp::MockServerOptions opts;
    opts.mode = mgp::parse_mock_mode(o.mode);
    opts.probs = o.probs;
    opts.num_classes = o.probs.size();
    opts.max_context = o.max_context;
    opts.bins = o.bins;
    opts.reverse_batches = o.reverse;
    mgp::MockServer server(opts, mgp::Endpoint{o.host, o.port});
    std::cout << "listening on " << server.endpoint().str() << std::endl;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_interrupted.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Martingale-posterior predictive resampling"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(mgp::version()));

    CommonOptions run_opts, diag_opts, theta_opts;
    auto* run = app.add_subcommand("run", "Coverage study over every setup x rule pair");
    add_common(run, run_opts);
    auto* diag = app.add_subcommand("diag", "Convergence trace, a.c.i.d. and concentration diagnostics");
    add_common(diag, diag_opts);
    auto* theta0 = app.add_subcommand("theta0", "Population risk minimizer of every setup");
    add_common(theta0, theta_opts);

    MockOptions mock;
    auto* serve = app.add_subcommand("serve-mock", "Deterministic mock predictive service");
    serve->add_option("--host", mock.host, "Bind address");
    serve->add_option("--port", mock.port, "Port (0 picks a free one)");
    serve->add_option("--mode", mock.mode, "constant | empirical | gaussian | bad_sum | bad_edges | error");
    serve->add_option("--probs", mock.probs, "Class probabilities for constant mode")->delimiter(',');
    serve->add_option("--max-context", mock.max_context, "Advertised context limit");
    serve->add_option("--bins", mock.bins, "Grid bins for regression answers");
    serve->add_flag("--reverse-batches", mock.reverse, "Answer pipelined requests in reverse order");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*run) return cmd_run(run_opts);
        if (*diag) return cmd_diag(diag_opts);
        if (*theta0) return cmd_theta0(theta_opts);
        if (*serve) return cmd_serve_mock(mock);
    } catch (const mgp::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const mgp::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
