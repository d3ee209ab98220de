// mpfsim — multi-agent CBF safety-filter simulator with proprioceptive
// fast-loop variants. Subcommands: run, mc, fastloop, classify-delta, replay.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mpf/config.hpp"
#include "mpf/fastloop.hpp"
#include "mpf/impairment.hpp"
#include "mpf/io.hpp"
#include "mpf/scenario.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRun = 3;

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> controller;
    std::optional<int> impairment_case;
    bool trajectory = false;
};

std::string default_out_dir() {
    const char* env = std::getenv("MPFSIM_OUT");
    return env != nullptr && *env != '\0' ? env : "out";
}

void apply_overrides(mpf::LoadedConfig& cfg, const CommonOpts& o) {
    if (o.seed) cfg.scenario.seed = *o.seed;
    if (o.controller) cfg.scenario.controller = mpf::detail::controller_from_string(*o.controller);
    if (o.impairment_case) {
        if (*o.impairment_case < 0 || *o.impairment_case > 3) {
            throw mpf::ConfigError("--case must be 0..3");
        }
        cfg.scenario.impairment_case = *o.impairment_case;
    }
    if (o.trajectory) cfg.output.trajectory = true;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
    return f;
}

int cmd_run(const CommonOpts& opts, bool from_world, const std::string& world_path) {
    mpf::LoadedConfig cfg;
    mpf::World world;
    try {
        if (from_world) {
            world = mpf::load_world(world_path);
            cfg.scenario = world.cfg;
            CommonOpts o = opts;
            o.seed.reset();  // the world is already sampled
            apply_overrides(cfg, o);
            world.cfg = cfg.scenario;
        } else {
            cfg = mpf::load_config(opts.config_path);
            apply_overrides(cfg, opts);
        }
    } catch (const mpf::ConfigError& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return kExitConfig;
    }

    try {
        if (!from_world) world = mpf::generate(cfg.scenario);
        const mpf::RunResult res = mpf::run(world, cfg.scenario.controller);

        fs::create_directories(opts.out_dir);
        mpf::McRow row;
        row.run = 0;
        row.seed = cfg.scenario.seed;
        row.controller = cfg.scenario.controller;
        row.m = res.metrics;
        {
            auto f = open_out(fs::path(opts.out_dir) / "metrics.csv");
            mpf::write_metrics_csv(f, {row}, cfg.scenario.impairment_case);
        }
        if (!from_world) {
            mpf::save_world(world, (fs::path(opts.out_dir) / "world.json").string());
        }
        if (cfg.output.trajectory) {
            auto f = open_out(fs::path(opts.out_dir) / "trajectory.jsonl");
            mpf::write_trajectory_jsonl(f, res.log, 0);
        }
        std::cout << mpf::metrics_csv_header() << "\n"
                  << mpf::metrics_csv_row(row, cfg.scenario.impairment_case) << "\n";
        std::cerr << "loop time: mean " << res.metrics.loop_ms_mean << " ms, max "
                  << res.metrics.loop_ms_max << " ms\n";
        return kExitOk;
    } catch (const std::exception& ex) {
        std::cerr << "run error: " << ex.what() << "\n";
        return kExitRun;
    }
}

int cmd_mc(const CommonOpts& opts, int n_runs, int jobs) {
    mpf::LoadedConfig cfg;
    try {
        cfg = mpf::load_config(opts.config_path);
        apply_overrides(cfg, opts);
        if (n_runs < 1) throw mpf::ConfigError("--runs must be >= 1");
    } catch (const mpf::ConfigError& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return kExitConfig;
    }

    std::vector<mpf::ControllerKind> controllers;
    if (opts.controller) {
        controllers = {cfg.scenario.controller};
    } else {
        controllers = {mpf::ControllerKind::NoMpf, mpf::ControllerKind::FullMpf,
                       mpf::ControllerKind::SplitMpf};
    }

    try {
        const mpf::McResult res = mpf::monte_carlo(cfg.scenario, n_runs, controllers, jobs);
        fs::create_directories(opts.out_dir);
        {
            auto f = open_out(fs::path(opts.out_dir) / "mc_runs.csv");
            mpf::write_metrics_csv(f, res.rows, cfg.scenario.impairment_case);
        }
        {
            auto f = open_out(fs::path(opts.out_dir) / "summary.csv");
            mpf::write_summary_csv(f, res.summaries, cfg.scenario.impairment_case);
        }
        {
            auto f = open_out(fs::path(opts.out_dir) / "summary.txt");
            mpf::write_summary_text(f, res.summaries, cfg.scenario.impairment_case);
        }
        mpf::write_summary_text(std::cout, res.summaries, cfg.scenario.impairment_case);

        int all_failed = 0;
        for (const mpf::McSummary& s : res.summaries) {
            if (s.failed_runs == s.n_runs) ++all_failed;
        }
        return all_failed == static_cast<int>(res.summaries.size()) ? kExitRun : kExitOk;
    } catch (const std::exception& ex) {
        std::cerr << "run error: " << ex.what() << "\n";
        return kExitRun;
    }
}

int cmd_fastloop(const std::string& out_dir, const std::string& mode,
                 std::vector<double> k_list, std::vector<double> eps_list,
                 std::vector<double> delay_list) {
    if (k_list.empty() || eps_list.empty() || delay_list.empty()) {
        std::cerr << "config error: empty sweep list\n";
        return kExitConfig;
    }
    std::vector<mpf::DdeMode> modes;
    if (mode == "full-mpf") {
        modes = {mpf::DdeMode::FullMpf};
    } else if (mode == "split-mpf") {
        modes = {mpf::DdeMode::SplitMpf};
    } else if (mode == "both") {
        modes = {mpf::DdeMode::FullMpf, mpf::DdeMode::SplitMpf};
    } else {
        std::cerr << "config error: --mode must be full-mpf | split-mpf | both\n";
        return kExitConfig;
    }

    try {
        std::vector<mpf::FastloopCsvRow> rows;
        for (mpf::DdeMode m : modes) {
            const std::vector<double> ks =
                (m == mpf::DdeMode::FullMpf) ? std::vector<double>{1.0} : k_list;
            for (double eps : eps_list) {
                for (double k : ks) {
                    for (double ratio : delay_list) {
                        mpf::ScalarDde dde{eps, ratio * eps, k, 0.0, m};
                        const double horizon = std::max(100.0 * eps, 10.0 * (ratio + 1.0) * eps);
                        const mpf::StabilityReport rep = mpf::simulate_dde(dde, horizon);
                        rows.push_back({"sweep", m, k, eps, ratio, to_string(rep.verdict),
                                        rep.decay_rate});
                    }
                    const auto boundary = mpf::find_stability_boundary(m, k, eps);
                    if (boundary) {
                        rows.push_back({"boundary", m, k, eps, *boundary, "diverges-above", 0.0});
                    } else {
                        rows.push_back({"boundary", m, k, eps, 0.0,
                                        "none-in-bracket (delay-independent within tested range)",
                                        0.0});
                    }
                }
            }
        }
        fs::create_directories(out_dir);
        auto f = open_out(fs::path(out_dir) / "fastloop.csv");
        mpf::write_fastloop_csv(f, rows);
        mpf::write_fastloop_csv(std::cout, rows);
        return kExitOk;
    } catch (const std::exception& ex) {
        std::cerr << "run error: " << ex.what() << "\n";
        return kExitRun;
    }
}

struct ChannelArg {
    std::string label;
    mpf::ChannelSpec spec;
};

std::optional<ChannelArg> parse_channel(const std::string& s) {
    ChannelArg out;
    out.label = s;
    const auto colon = s.find(':');
    const std::string kind = s.substr(0, colon);
    const double value = colon == std::string::npos ? 0.0 : std::stod(s.substr(colon + 1));
    if (kind == "identity") {
        out.spec.kind = mpf::ChannelKind::Identity;
    } else if (kind == "gain") {
        out.spec.kind = mpf::ChannelKind::Gain;
        out.spec.gain = value;
    } else if (kind == "first-order") {
        out.spec.kind = mpf::ChannelKind::FirstOrder;
        out.spec.tau = value;
    } else if (kind == "pure-delay") {
        out.spec.kind = mpf::ChannelKind::PureDelay;
        out.spec.tau = value;
    } else {
        return std::nullopt;
    }
    return out;
}

int cmd_classify(const std::string& out_dir, const std::vector<std::string>& channel_args,
                 const std::string& config_path) {
    std::vector<ChannelArg> channels;
    for (const std::string& s : channel_args) {
        auto parsed = parse_channel(s);
        if (!parsed) {
            std::cerr << "config error: bad channel '" << s
                      << "' (identity | gain:K | first-order:TAU | pure-delay:TAU)\n";
            return kExitConfig;
        }
        channels.push_back(*parsed);
    }
    if (!config_path.empty()) {
        try {
            const mpf::LoadedConfig cfg = mpf::load_config(config_path);
            const mpf::ImpairmentParams& imp = cfg.scenario.imp;
            switch (cfg.scenario.impairment_case) {
                case 1:
                    channels.push_back({"case1-accel-clip",
                                        {mpf::ChannelKind::Clip, 1.0, imp.clip_lo, imp.clip_hi, 0.0}});
                    break;
                case 2:
                    channels.push_back(
                        {"case2-accel-gain", {mpf::ChannelKind::Gain, imp.gain, 0, 0, 0}});
                    break;
                case 3:
                    channels.push_back({"case3-steer-filter",
                                        {mpf::ChannelKind::FirstOrder, 1.0, 0, 0, imp.tau_steer}});
                    channels.push_back({"case3-accel-filter",
                                        {mpf::ChannelKind::FirstOrder, 1.0, 0, 0, imp.tau_accel}});
                    break;
                default:
                    break;
            }
        } catch (const mpf::ConfigError& ex) {
            std::cerr << "config error: " << ex.what() << "\n";
            return kExitConfig;
        }
    }
    if (channels.empty()) {
        std::cerr << "config error: nothing to classify (pass --channel or --config)\n";
        return kExitConfig;
    }

    std::ostringstream csv;
    csv << "schema_version,channel,classification,nu\n";
    for (const ChannelArg& c : channels) {
        const auto lti = mpf::LtiChannel::from_spec(c.spec);
        std::string cls;
        double nu = 0.0;
        if (!lti) {
            cls = "not-lti";
        } else {
            const mpf::PassivityReport rep = mpf::classify_passivity(*lti);
            cls = to_string(rep.cls);
            nu = rep.nu;
        }
        csv << mpf::kCsvSchemaVersion << ',' << c.label << ',' << cls << ','
            << mpf::detail::fmt_g17(nu) << "\n";
    }
    std::cout << csv.str();
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        auto f = open_out(fs::path(out_dir) / "classify.csv");
        f << csv.str();
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-agent CBF-QP safety filter with proprioceptive fast loops"};
    app.require_subcommand(1);

    CommonOpts opts;
    opts.out_dir = default_out_dir();

    auto add_common = [&](CLI::App* cmd, bool needs_config) {
        auto* c = cmd->add_option("--config", opts.config_path, "scenario config (JSON)");
        if (needs_config) c->required();
        cmd->add_option("--out", opts.out_dir, "output directory (env MPFSIM_OUT)");
        cmd->add_option("--seed", opts.seed, "master seed override");
        cmd->add_option("--controller", opts.controller,
                        "controller override: no-mpf | full-mpf | split-mpf");
        cmd->add_option("--case", opts.impairment_case, "impairment case override: 0..3");
        cmd->add_flag("--traj", opts.trajectory, "write trajectory.jsonl");
    };

    CLI::App* run_cmd = app.add_subcommand("run", "single closed-loop run");
    add_common(run_cmd, true);

    CLI::App* mc_cmd = app.add_subcommand("mc", "Monte Carlo batch (shared worlds)");
    add_common(mc_cmd, true);
    int n_runs = 100;
    int jobs = 1;
    mc_cmd->add_option("--runs", n_runs, "number of Monte Carlo runs");
    mc_cmd->add_option("--jobs", jobs, "worker threads");

    CLI::App* fast_cmd = app.add_subcommand("fastloop", "fast-loop stability sweeps");
    std::string fl_mode = "both";
    std::vector<double> fl_k{0.1, 0.25, 0.5};
    std::vector<double> fl_eps{0.05, 0.2, 1.0};
    std::vector<double> fl_delays{0.5, 1.0, 1.5, 1.6, 2.0, 5.0, 20.0, 100.0};
    std::string fl_out = default_out_dir();
    fast_cmd->add_option("--mode", fl_mode, "full-mpf | split-mpf | both");
    fast_cmd->add_option("--k", fl_k, "split-MPF gain list")->expected(0, -1);
    fast_cmd->add_option("--eps", fl_eps, "filter time constants, s")->expected(0, -1);
    fast_cmd->add_option("--delays", fl_delays, "delay/eps ratios")->expected(0, -1);
    fast_cmd->add_option("--out", fl_out, "output directory");

    CLI::App* cls_cmd = app.add_subcommand("classify-delta", "passivity of actuator channels");
    std::vector<std::string> cls_channels;
    std::string cls_config;
    std::string cls_out = default_out_dir();
    cls_cmd->add_option("--channel", cls_channels,
                        "channel spec: identity | gain:K | first-order:TAU | pure-delay:TAU");
    cls_cmd->add_option("--config", cls_config, "classify the config's impairment channels");
    cls_cmd->add_option("--out", cls_out, "output directory");

    CLI::App* replay_cmd = app.add_subcommand("replay", "re-run a serialized world");
    std::string world_path;
    add_common(replay_cmd, false);
    replay_cmd->add_option("--world", world_path, "world.json from a previous run")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    if (run_cmd->parsed()) return cmd_run(opts, false, "");
    if (mc_cmd->parsed()) return cmd_mc(opts, n_runs, jobs);
    if (fast_cmd->parsed()) return cmd_fastloop(fl_out, fl_mode, fl_k, fl_eps, fl_delays);
    if (cls_cmd->parsed()) return cmd_classify(cls_out, cls_channels, cls_config);
    if (replay_cmd->parsed()) return cmd_run(opts, true, world_path);
    return kExitConfig;
}
