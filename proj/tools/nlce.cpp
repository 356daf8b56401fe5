#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "nlce/config.hpp"
#include "nlce/errors.hpp"
#include "nlce/metrics.hpp"
#include "nlce/pipeline.hpp"
#include "nlce/trace_io.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::size_t jobs = 1;
};

nlce::RunConfig load(const CommonOpts& opts) {
    nlce::RunConfig c = nlce::load_config(opts.config_path);
    if (!opts.out_dir.empty()) c.out_dir = opts.out_dir;
    return c;
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_jobs = false) {
    cmd->add_option("--config", opts.config_path, "Run configuration (JSON)")
        ->required();
    cmd->add_option("--out", opts.out_dir, "Output directory (overrides config out_dir)");
    if (with_jobs) cmd->add_option("--jobs", opts.jobs, "Parallel prompt workers");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neighbor-aware localized concept erasure engine"};
    app.require_subcommand(1);

    CommonOpts mine_opts, build_opts, run_opts, eval_opts;
    CLI::App* mine = app.add_subcommand("mine", "Mine neighbor concepts for each target");
    CLI::App* build = app.add_subcommand("build", "Build and persist erasure operators");
    CLI::App* run = app.add_subcommand("run", "Run erasure generations and export traces");
    CLI::App* eval = app.add_subcommand("eval", "Evaluate traces into a metrics report");
    add_common(mine, mine_opts);
    add_common(build, build_opts);
    add_common(run, run_opts, true);
    add_common(eval, eval_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // usage problems are config errors
    }

    try {
        if (mine->parsed()) {
            const auto files = nlce::cmd_mine(load(mine_opts));
            for (const auto& f : files) std::cout << f.string() << "\n";
        } else if (build->parsed()) {
            const auto files = nlce::cmd_build(load(build_opts));
            for (const auto& f : files) std::cout << f.string() << "\n";
        } else if (run->parsed()) {
            const nlce::RunConfig c = load(run_opts);
            const auto results = nlce::cmd_run(c, run_opts.jobs);
            for (const auto& r : results) {
                std::cout << r.edited_dir.string() << "  active:[";
                for (std::size_t i = 0; i < r.active_concepts.size(); ++i)
                    std::cout << (i ? "," : "") << r.active_concepts[i];
                std::cout << "]\n";
            }
        } else if (eval->parsed()) {
            const nlce::RunConfig c = load(eval_opts);
            const nlce::EvaluationReport report = nlce::cmd_eval(c);
            const auto j = nlce::report_to_json(report);
            nlce::write_json_file(std::filesystem::path(c.out_dir) / "report.json", j);
            std::cout << j.dump(2) << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return nlce::exit_code_for(e);
    }
    return 0;
}
