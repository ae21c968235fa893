#include "desknav/clustering.hpp"
#include "desknav/config.hpp"
#include "desknav/errors.hpp"
#include "desknav/io.hpp"
#include "desknav/sim.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace desknav;

namespace {

enum Exit : int {
    kOk = 0,
    kIo = 1,
    kConfig = 2,
    kCollision = 3,
    kSolver = 4,
    kInsufficientPoints = 5,
};

/// DESKNAV_CONFIG replaces the config path given on the command line.
fs::path config_path(const std::string& given) {
    if (const char* env = std::getenv("DESKNAV_CONFIG"); env != nullptr && *env != '\0') return env;
    return given;
}

template <typename F>
int guarded(F&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kIo;
    } catch (const InsufficientPointsError& e) {
        std::cerr << "insufficient points: " << e.what() << '\n';
        return kInsufficientPoints;
    } catch (const EmptyInputError& e) {
        std::cerr << "insufficient points: " << e.what() << '\n';
        return kInsufficientPoints;
    } catch (const ConvergenceError& e) {
        std::cerr << "solver failure: " << e.what() << " (residual " << e.residual() << ")\n";
        return kSolver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kSolver;
    }
}

int cmd_run(const std::string& scenario, const fs::path& out_dir, std::optional<std::uint64_t> seed,
            const std::string& mode) {
    ScenarioConfig config = load_scenario(config_path(scenario));
    if (seed) config.seed = *seed;
    if (!mode.empty()) config.mode = parse_controller_mode(mode);

    const RunTrace trace = run_scenario(config);
    const Metrics metrics = compute_metrics(trace, config.environment, config.sim.collision_distance);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());

    std::ostringstream trace_csv;
    write_trace_csv(trace, trace_csv);
    write_text_file(out_dir / "trace.csv", trace_csv.str());

    auto summary = metrics_to_json(metrics);
    summary["scenario"] = config.environment.name;
    summary["mode"] = to_string(config.mode);
    summary["seed"] = config.seed;
    write_text_file(out_dir / "metrics.json", summary.dump(2) + "\n");

    std::ostringstream plot_csv;
    write_plot_csv(trace, plot_csv);
    write_text_file(out_dir / "plot.csv", plot_csv.str());

    write_text_file(out_dir / "planes.json", snapshots_to_json(trace).dump() + "\n");
    write_text_file(out_dir / "timing.json", timing_to_json(trace).dump(2) + "\n");

    std::cout << config.environment.name << " mode=" << to_string(config.mode) << " seed=" << config.seed
              << " mae=" << metrics.waypoint_mae << " min_distance=" << metrics.min_distance
              << " collision=" << (metrics.collision ? "yes" : "no")
              << " reached_goal=" << (metrics.reached_goal ? "yes" : "no") << '\n';
    return metrics.collision ? kCollision : kOk;
}

int cmd_segment(const fs::path& cloud_path, const std::string& config, const fs::path& out) {
    const ClusteringConfig clustering =
        config.empty() && std::getenv("DESKNAV_CONFIG") == nullptr ? ClusteringConfig{}
                                                                   : load_clustering_config(config_path(config));
    const PointCloud cloud = read_cloud_csv(cloud_path);
    if (cloud.empty()) throw InsufficientPointsError("'" + cloud_path.string() + "' contains no points");

    const auto start = std::chrono::steady_clock::now();
    const SegmentationResult result = segment_planes(cloud, clustering);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;

    const auto doc = segmentation_to_json(result, {elapsed.count(), cloud.size()});
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_text_file(out, doc.dump(2) + "\n");
    std::cout << result.planes.size() << " planes from " << cloud.size() << " points in " << elapsed.count()
              << " s\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Plane segmentation and NMPC navigation for a simulated quadrotor"};
    app.require_subcommand(1);

    std::string scenario;
    std::string run_out;
    std::optional<std::uint64_t> seed;
    std::string mode;
    auto* run = app.add_subcommand("run", "Run a closed-loop scenario");
    run->add_option("scenario", scenario, "Scenario JSON file")->required();
    run->add_option("--out", run_out, "Output directory")->required();
    run->add_option("--seed", seed, "Override the scenario seed");
    run->add_option("--mode", mode, "Controller: adaptive, fixed or apf")
        ->check(CLI::IsMember({"adaptive", "fixed", "apf", "fixed-weights", "potential-field"}));

    std::string cloud;
    std::string seg_config;
    std::string seg_out;
    auto* segment = app.add_subcommand("segment", "Segment a point cloud into planes");
    segment->add_option("cloud", cloud, "Point cloud CSV (x,y,z)")->required();
    segment->add_option("--config", seg_config, "Clustering or scenario JSON");
    segment->add_option("--out", seg_out, "Output JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    if (run->parsed()) return guarded([&] { return cmd_run(scenario, run_out, seed, mode); });
    return guarded([&] { return cmd_segment(cloud, seg_config, seg_out); });
}
