// Command-line harness: scenario solving, day simulation, controller
// comparison and fixture generation for the feeder decision system.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridmdp/cli.hpp"

namespace {

// Exit codes: 0 ok, 1 usage, 2 data/config, 3 checksum mismatch,
// 4 infeasible scenario, 5 internal.
enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kChecksum = 3, kInfeasible = 4, kInternal = 5 };

int guarded(const std::function<void()>& body) {
    try {
        body();
        return kOk;
    } catch (const gridmdp::ChecksumError& e) {
        std::cerr << "checksum error: " << e.what() << "\n";
        return kChecksum;
    } catch (const gridmdp::InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return kInfeasible;
    } catch (const gridmdp::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kInternal;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Day-ahead and real-time dispatch for a radial feeder with PV and storage"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".", controller = "mdp", table_path, oracle_summary;
    std::vector<std::string> summaries;
    int case_override = 0;
    int workers = -1;
    bool dry_run = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "scenario config (JSON)")->required();
        cmd->add_option("--case", case_override, "override the config's case id (1..5)");
        cmd->add_option("--workers", workers, "worker threads (default: config / all cores)");
    };
    auto load_scenario = [&]() {
        gridmdp::ScenarioConfig cfg = gridmdp::load_config(config_path);
        if (workers >= 0) cfg.workers = workers;
        return gridmdp::build_scenario(cfg, case_override);
    };

    auto* gen = app.add_subcommand("gen-fixtures", "write the synthetic feeder and profile fixture set");
    gen->add_option("--config", config_path, "scenario config (JSON)")->required();
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->callback([&] {
        std::exit(guarded([&] {
            gridmdp::cli::cmd_gen_fixtures(gridmdp::load_config(config_path), out_dir);
        }));
    });

    auto* est = app.add_subcommand("estimate-matrix", "estimate the PV error transition kernel from history");
    est->add_option("--config", config_path, "scenario config (JSON)")->required();
    est->add_option("--out", out_dir, "output CSV path")->required();
    est->callback([&] {
        std::exit(guarded([&] {
            gridmdp::cli::cmd_estimate_matrix(gridmdp::load_config(config_path), out_dir);
        }));
    });

    auto* solve = app.add_subcommand("solve-offline", "compute the expected-utility table by backward induction");
    add_common(solve);
    solve->add_option("--out", out_dir, "output directory")->required();
    solve->add_flag("--dry-run", dry_run, "validate and report dimensions without solving");
    solve->callback([&] {
        std::exit(guarded([&] {
            gridmdp::cli::cmd_solve_offline(load_scenario(), out_dir, dry_run);
        }));
    });

    auto* run = app.add_subcommand("run", "simulate one day under a controller");
    add_common(run);
    run->add_option("--controller", controller, "mdp | deterministic | oracle")->required();
    run->add_option("--table", table_path, "utility table from solve-offline (mdp controller)");
    run->add_option("--oracle-summary", oracle_summary, "oracle summary.json for excessive-cost reporting");
    run->add_option("--out", out_dir, "output directory")->required();
    run->callback([&] {
        std::exit(guarded([&] {
            std::optional<double> oracle_total;
            if (!oracle_summary.empty())
                oracle_total = gridmdp::cli::read_json(oracle_summary).at("costs").at("total").get<double>();
            gridmdp::cli::cmd_run(load_scenario(), controller, table_path, out_dir, oracle_total);
        }));
    });

    auto* cmp = app.add_subcommand("compare", "align several run summaries into comparison tables");
    cmp->add_option("--config", config_path, "scenario config (JSON)")->required();
    cmp->add_option("--out", out_dir, "output directory")->required();
    cmp->add_option("summaries", summaries, "summary.json files from runs")->required();
    cmp->callback([&] {
        std::exit(guarded([&] {
            gridmdp::cli::cmd_compare(gridmdp::build_scenario_from_file(config_path), summaries, out_dir);
        }));
    });

    CLI11_PARSE(app, argc, argv);
    return kOk;
}
