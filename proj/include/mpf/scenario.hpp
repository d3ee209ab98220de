#ifndef MPF_SCENARIO_HPP
#define MPF_SCENARIO_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mpf/barrier.hpp"
#include "mpf/controllers.hpp"
#include "mpf/impairment.hpp"
#include "mpf/qp.hpp"
#include "mpf/rng.hpp"
#include "mpf/vehicle.hpp"

namespace mpf {

inline constexpr double kMpsToMph = 2.2369362920544;

struct ImpairmentParams {
    double clip_lo = -8.0;    // m/s^2, braking stays available
    double clip_hi = -0.2;    // m/s^2, coast-down deceleration
    double onset_x = -20.0;   // m, trigger for the loss-of-propulsion case
    double gain = 0.7;        // acceleration attenuation (case 2)
    double tau_steer = 0.2;   // s (case 3)
    double tau_accel = 0.4;   // s (case 3)
    double prob = 0.5;        // per-vehicle selection probability (cases 2, 3)
};

struct ScenarioConfig {
    int n_agents = 16;
    double v_min = 20.0;          // m/s
    double v_max = 24.0;          // m/s
    double straight_prob = 0.15;
    double density_vph = 3400.0;  // veh/h per lane
    double swap_x_start = 0.0;    // m
    double swap_x_end = 120.0;    // m
    std::uint64_t seed = 1;
    double sim_dt = 0.01;         // s
    double ctrl_dt = 0.1;         // s
    double horizon = 30.0;        // s
    int impairment_case = 0;      // 0 = none, 1..3
    ImpairmentParams imp;
    RoadGeometry road;
    VehicleParams vehicle;
    EllipseParams ellipse;
    CbfGains gains;
    double lookahead_gain = 0.5;  // s
    double kp_speed = 0.5;        // 1/s
    double zipper_runway = 150.0; // m before the zone where slotting engages
    double zipper_window = 12.0;  // m, alignment that triggers slotting
    double zipper_gain = 0.4;     // 1/s, pull toward the slot midpoint
    double zipper_bias = 3.0;     // m/s, setpoint nudge limit
    double slot_pitch = 23.3;     // m, assumed gap when one side is open
    double gate_clearance = 7.5;  // m, alignment gap required to start a swap
    SafetyFilterOptions filter;
    ControllerKind controller = ControllerKind::FullMpf;
};

struct AgentInit {
    VehicleState state;
    double v_des = 22.0;
    int lane_from = 0;  // 0 = right, 1 = left
    bool straight = false;
    DeltaSpec impairment;
};

struct World {
    ScenarioConfig cfg;
    std::vector<AgentInit> agents;
};

// Random interchange world: 8 vehicles per lane with headways matching the
// configured traffic density, independent initial and desired speeds, 15%
// straight-goers, impairments assigned per case. Placement is rejection
// sampled until every reference barrier exceeds 0.5 m.
inline World generate(const ScenarioConfig& cfg) {
    Rng rng(cfg.seed);
    World world;
    world.cfg = cfg;

    const int lanes = static_cast<int>(cfg.road.lane_centers.size());
    const int per_lane = cfg.n_agents / lanes;
    const double v_mean = 0.5 * (cfg.v_min + cfg.v_max);
    const double mean_headway = v_mean * 3600.0 / cfg.density_vph;

    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
        world.agents.clear();
        for (int lane = 0; lane < lanes; ++lane) {
            // lead vehicle spawns upstream of the zone so even the front of
            // the column has a few seconds to pre-arrange before swapping
            double x = -rng.uniform(55.0, 70.0);
            for (int k = 0; k < per_lane; ++k) {
                AgentInit a;
                a.lane_from = lane;
                a.state = {x, cfg.road.lane_centers[lane], 0.0, rng.uniform(cfg.v_min, cfg.v_max)};
                a.v_des = rng.uniform(cfg.v_min, cfg.v_max);
                a.straight = rng.bernoulli(cfg.straight_prob);
                world.agents.push_back(a);
                x -= mean_headway * rng.uniform(0.6, 1.4);
            }
        }
        placed = true;
        for (std::size_t i = 0; i < world.agents.size() && placed; ++i) {
            for (std::size_t j = 0; j < world.agents.size(); ++j) {
                if (i == j) continue;
                if (ellipse_h(world.agents[i].state, world.agents[j].state, cfg.ellipse) <= 0.5) {
                    placed = false;
                    break;
                }
            }
        }
    }
    if (!placed) {
        throw std::runtime_error("generate: no collision-free placement found (config too dense)");
    }

    switch (cfg.impairment_case) {
        case 0:
            break;
        case 1: {
            const auto idx = rng.next_below(static_cast<std::uint64_t>(cfg.n_agents));
            DeltaSpec d;
            d.accel = {ChannelKind::Clip, 1.0, cfg.imp.clip_lo, cfg.imp.clip_hi, 0.0};
            d.onset = {OnsetTrigger::Kind::PositionX, cfg.imp.onset_x};
            world.agents[idx].impairment = d;
            break;
        }
        case 2: {
            for (AgentInit& a : world.agents) {
                if (!rng.bernoulli(cfg.imp.prob)) continue;
                a.impairment.steer = {ChannelKind::OnRails, 1.0, 0.0, 0.0, 0.0};
                a.impairment.accel = {ChannelKind::Gain, cfg.imp.gain, 0.0, 0.0, 0.0};
            }
            break;
        }
        case 3: {
            for (AgentInit& a : world.agents) {
                if (!rng.bernoulli(cfg.imp.prob)) continue;
                a.impairment.steer = {ChannelKind::FirstOrder, 1.0, 0.0, 0.0, cfg.imp.tau_steer};
                a.impairment.accel = {ChannelKind::FirstOrder, 1.0, 0.0, 0.0, cfg.imp.tau_accel};
            }
            break;
        }
        default:
            throw std::invalid_argument("generate: unknown impairment case");
    }
    return world;
}

struct AgentRecord {
    VehicleState state;  // at the start of the period
    ControlInput u0;
    ControlInput u_star;  // implemented command
    ControlInput u_act;   // actuation measured at the end of the period
    double h0_min = std::numeric_limits<double>::infinity();  // over the period
};

struct StepRecord {
    double t = 0.0;  // period start
    std::vector<AgentRecord> agents;
    std::vector<double> w;  // flat filter snapshot
    std::vector<ConstraintTag> active;
    double oob = 0.0;      // max off-road excursion during the period
    double loop_ms = 0.0;  // controller compute time (not serialized)
};

struct AgentMeta {
    double v_des = 0.0;
    bool straight = false;
    int lane_from = 0;
    double lat_target = 0.0;  // assigned target lane center
};

struct TrajectoryLog {
    ControllerKind controller = ControllerKind::NoMpf;
    double ctrl_dt = 0.1;
    RoadGeometry road;
    double swap_x_start = 0.0;
    double swap_x_end = 120.0;
    EllipseParams ellipse_ref;
    std::vector<AgentMeta> meta;
    std::vector<StepRecord> steps;
    // signed lateral distance past the lane boundary when crossing the zone
    // end (NaN for straight-goers)
    std::vector<double> completion;
    int solver_fallbacks = 0;
};

struct RunMetrics {
    double min_h0 = std::numeric_limits<double>::infinity();  // m, reference ellipse
    int incomplete_lane_changes = 0;
    double completion_worst = std::numeric_limits<double>::infinity();  // m
    double oob = 0.0;           // m
    double max_delta_ac = 0.0;  // m/s^2 per 100 ms sample
    int count_delta_ac_gt2 = 0;
    double avg_speed_drop_mph = 0.0;
    double loop_ms_mean = 0.0;
    double loop_ms_max = 0.0;
    int solver_fallbacks = 0;
    int steps = 0;
};

// Closed-loop simulation: controller at ctrl_dt with zero-order hold, plant
// and impairment operators at sim_dt. Ends when every vehicle is 30 m past
// the swap zone or the horizon expires.
inline TrajectoryLog run_log(const World& world, ControllerKind kind) {
    const ScenarioConfig& cfg = world.cfg;
    const int n = static_cast<int>(world.agents.size());
    const double lane_boundary = cfg.road.centerline();

    TrajectoryLog log;
    log.controller = kind;
    log.ctrl_dt = cfg.ctrl_dt;
    log.road = cfg.road;
    log.swap_x_start = cfg.swap_x_start;
    log.swap_x_end = cfg.swap_x_end;
    log.ellipse_ref = {cfg.ellipse.r, cfg.ellipse.alpha, 0.0};
    log.completion.assign(n, std::numeric_limits<double>::quiet_NaN());

    std::vector<VehicleState> states(n);
    std::vector<double> targets(n);
    std::vector<bool> commanded(n, false);
    std::vector<bool> crossed(n, false);
    std::vector<DeltaModel> deltas;
    deltas.reserve(n);
    for (int i = 0; i < n; ++i) {
        const AgentInit& a = world.agents[i];
        states[i] = a.state;
        targets[i] = cfg.road.lane_centers[a.lane_from];
        deltas.emplace_back(a.impairment, cfg.sim_dt);
        const int target_lane = a.straight ? a.lane_from : 1 - a.lane_from;
        log.meta.push_back({a.v_des, a.straight, a.lane_from,
                            cfg.road.lane_centers[target_lane]});
    }

    SafetyFilterOptions opts = cfg.filter;
    opts.period = cfg.ctrl_dt;
    SafetyFilter controller(kind, n, cfg.vehicle, opts);

    const EllipseParams e_ctrl = cfg.ellipse.control();
    const EllipseParams e_ref = log.ellipse_ref;
    const int sub_steps = std::max(1, static_cast<int>(std::llround(cfg.ctrl_dt / cfg.sim_dt)));

    std::vector<double> u_act_prev(2 * n, 0.0);
    std::vector<ControlInput> u0(n);
    double t = 0.0;

    while (t < cfg.horizon - 1e-9) {
        bool all_done = true;
        for (int i = 0; i < n; ++i) {
            if (states[i].x <= cfg.swap_x_end + 30.0) {
                all_done = false;
                break;
            }
        }
        if (all_done) break;

        for (int i = 0; i < n; ++i) {
            if (!commanded[i] && !log.meta[i].straight && states[i].x >= cfg.swap_x_start) {
                // gap acceptance: hold the swap while longitudinally aligned
                // with any vehicle outside this lateral region, so nobody
                // (the on-rails vehicles included, which track u0) steers
                // into an occupied slot
                double nearest = std::numeric_limits<double>::infinity();
                for (int j = 0; j < n; ++j) {
                    if (j == i || std::abs(states[i].y - states[j].y) < 1.0) continue;
                    nearest = std::min(nearest, std::abs(states[i].x - states[j].x));
                }
                if (nearest >= cfg.gate_clearance) {
                    commanded[i] = true;
                    targets[i] = log.meta[i].lat_target;
                }
            }
            BaselineParams bp;
            bp.lookahead_gain = cfg.lookahead_gain;
            bp.kp_speed = cfg.kp_speed;
            bp.v_des = log.meta[i].v_des;
            bp.lat_target = targets[i];
            // zipper slotting: a swap has no room to thread through when it
            // is longitudinally aligned with an other-lane vehicle, so pull
            // the setpoint toward the midpoint of the nearest other-lane gap
            // while approaching and traversing the zone
            if (states[i].x >= cfg.swap_x_start - cfg.zipper_runway &&
                states[i].x <= cfg.swap_x_end) {
                // nearest other-lane neighbors ahead of and behind this agent
                double front = std::numeric_limits<double>::infinity();
                double back = -std::numeric_limits<double>::infinity();
                double nearest = cfg.zipper_window;
                bool aligned = false;
                for (int j = 0; j < n; ++j) {
                    if (j == i || std::abs(states[i].y - states[j].y) < 1.0) continue;
                    const double dx = states[j].x - states[i].x;
                    // exact ties split by index so an aligned pair separates
                    if (dx > 0.0 || (dx == 0.0 && j < i)) {
                        front = std::min(front, dx);
                    } else {
                        back = std::max(back, dx);
                    }
                    if (std::abs(dx) < nearest) {
                        nearest = std::abs(dx);
                        aligned = true;
                    }
                }
                if (aligned) {
                    double target;
                    if (std::isinf(front)) {
                        target = back + 0.5 * cfg.slot_pitch;
                    } else if (std::isinf(back)) {
                        target = front - 0.5 * cfg.slot_pitch;
                    } else {
                        target = 0.5 * (front + back);
                    }
                    bp.v_des += std::clamp(cfg.zipper_gain * target, -cfg.zipper_bias,
                                           cfg.zipper_bias);
                }
            }
            u0[i] = baseline(states[i], bp, cfg.vehicle);
        }

        std::vector<ConstraintRow> rows =
            assemble_rows(states, e_ctrl, cfg.road, cfg.gains, cfg.vehicle);

        const auto t0 = std::chrono::steady_clock::now();
        const std::vector<double> u_star_flat =
            controller.step(flatten(u0), rows, u_act_prev);
        const auto t1 = std::chrono::steady_clock::now();
        const std::vector<ControlInput> u_star = unflatten(u_star_flat);

        StepRecord rec;
        rec.t = t;
        rec.loop_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        rec.w = controller.w_snapshot();
        rec.active = controller.active_tags();
        rec.agents.resize(n);
        for (int i = 0; i < n; ++i) {
            rec.agents[i].state = states[i];
            rec.agents[i].u0 = u0[i];
            rec.agents[i].u_star = u_star[i];
        }

        std::vector<ControlInput> u_act(n);
        for (int sub = 0; sub < sub_steps; ++sub) {
            for (int i = 0; i < n; ++i) {
                u_act[i] = deltas[i].apply(u_star[i], t, states[i], u0[i]);
            }
            for (int i = 0; i < n; ++i) {
                states[i] = step(states[i], u_act[i], cfg.vehicle, cfg.sim_dt);
            }
            t += cfg.sim_dt;
            for (int i = 0; i < n; ++i) {
                double hmin = std::numeric_limits<double>::infinity();
                for (int j = 0; j < n; ++j) {
                    if (j == i) continue;
                    hmin = std::min(hmin, ellipse_h(states[i], states[j], e_ref));
                }
                rec.agents[i].h0_min = std::min(rec.agents[i].h0_min, hmin);
                rec.oob = std::max({rec.oob, states[i].y - cfg.road.rb_l,
                                    cfg.road.rb_r - states[i].y});
                if (!crossed[i] && states[i].x >= cfg.swap_x_end) {
                    crossed[i] = true;
                    if (!log.meta[i].straight) {
                        const double dir =
                            log.meta[i].lat_target > lane_boundary ? 1.0 : -1.0;
                        log.completion[i] = dir * (states[i].y - lane_boundary);
                    }
                }
            }
        }
        for (int i = 0; i < n; ++i) {
            rec.agents[i].u_act = u_act[i];
            u_act_prev[2 * i] = u_act[i].delta;
            u_act_prev[2 * i + 1] = u_act[i].ac;
        }
        log.steps.push_back(std::move(rec));
    }

    // vehicles that never reached the zone end: score at the final state
    for (int i = 0; i < n; ++i) {
        if (!crossed[i] && !log.meta[i].straight) {
            const double dir = log.meta[i].lat_target > lane_boundary ? 1.0 : -1.0;
            log.completion[i] = dir * (states[i].y - lane_boundary);
        }
    }
    log.solver_fallbacks = controller.fallback_count();
    return log;
}

// Run metrics per the interchange tables: worst reference barrier, lane
// completion, off-road excursion, command harshness, speed drop.
inline RunMetrics metrics(const TrajectoryLog& log) {
    RunMetrics m;
    m.steps = static_cast<int>(log.steps.size());
    m.solver_fallbacks = log.solver_fallbacks;

    const int n = static_cast<int>(log.meta.size());
    double loop_sum = 0.0;
    for (const StepRecord& rec : log.steps) {
        loop_sum += rec.loop_ms;
        m.loop_ms_max = std::max(m.loop_ms_max, rec.loop_ms);
        m.oob = std::max(m.oob, rec.oob);
        for (const AgentRecord& a : rec.agents) {
            m.min_h0 = std::min(m.min_h0, a.h0_min);
        }
    }
    if (!log.steps.empty()) loop_sum /= static_cast<double>(log.steps.size());
    m.loop_ms_mean = loop_sum;

    for (std::size_t k = 1; k < log.steps.size(); ++k) {
        for (int i = 0; i < n; ++i) {
            const double jump = std::abs(log.steps[k].agents[i].u_star.ac -
                                         log.steps[k - 1].agents[i].u_star.ac);
            m.max_delta_ac = std::max(m.max_delta_ac, jump);
            if (jump > 2.0) ++m.count_delta_ac_gt2;
        }
    }

    for (int i = 0; i < n; ++i) {
        const double c = log.completion[i];
        if (std::isnan(c)) continue;
        m.completion_worst = std::min(m.completion_worst, c);
        if (c < 0.0) ++m.incomplete_lane_changes;
    }
    if (std::isinf(m.completion_worst)) m.completion_worst = 0.0;

    double drop_sum = 0.0;
    int drop_count = 0;
    for (int i = 0; i < n; ++i) {
        double v_sum = 0.0;
        int v_count = 0;
        for (const StepRecord& rec : log.steps) {
            const double x = rec.agents[i].state.x;
            if (x >= log.swap_x_start && x <= log.swap_x_end) {
                v_sum += rec.agents[i].state.v;
                ++v_count;
            }
        }
        if (v_count > 0) {
            drop_sum += (log.meta[i].v_des - v_sum / v_count) * kMpsToMph;
            ++drop_count;
        }
    }
    if (drop_count > 0) m.avg_speed_drop_mph = drop_sum / drop_count;

    if (log.steps.empty()) m.min_h0 = 0.0;
    return m;
}

struct RunResult {
    RunMetrics metrics;
    TrajectoryLog log;
};

inline RunResult run(const World& world, ControllerKind kind) {
    RunResult r;
    r.log = run_log(world, kind);
    r.metrics = metrics(r.log);
    return r;
}

struct McRow {
    int run = 0;
    std::uint64_t seed = 0;
    ControllerKind controller = ControllerKind::NoMpf;
    RunMetrics m;
    std::string error;  // empty on success
};

struct McSummary {
    ControllerKind controller = ControllerKind::NoMpf;
    int n_runs = 0;
    int failed_runs = 0;
    double worst_min_h0 = std::numeric_limits<double>::infinity();
    int runs_h0_neg = 0;
    int total_incomplete = 0;
    int runs_incomplete = 0;
    double worst_oob = 0.0;
    double max_delta_ac = 0.0;
    double mean_max_delta_ac = 0.0;
    double mean_count_gt2 = 0.0;
    double mean_speed_drop_mph = 0.0;
    double mean_loop_ms = 0.0;
    double max_loop_ms = 0.0;
};

struct McResult {
    std::vector<McRow> rows;  // run-major, controller-minor
    std::vector<McSummary> summaries;
};

// Shared-world Monte Carlo: run k draws seed_k = run_seed(master, k), builds
// one world, and replays it under every requested controller. Runs execute
// on a small worker pool; aggregation is keyed by run index so the schedule
// cannot affect results.
inline McResult monte_carlo(const ScenarioConfig& cfg, int n_runs,
                            const std::vector<ControllerKind>& controllers, int jobs = 1) {
    const int nc = static_cast<int>(controllers.size());
    McResult result;
    result.rows.assign(static_cast<std::size_t>(n_runs) * nc, McRow{});

    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            const int k = next.fetch_add(1);
            if (k >= n_runs) return;
            const std::uint64_t seed_k = run_seed(cfg.seed, static_cast<std::uint64_t>(k));
            ScenarioConfig run_cfg = cfg;
            run_cfg.seed = seed_k;
            World world;
            std::string gen_error;
            try {
                world = generate(run_cfg);
            } catch (const std::exception& ex) {
                gen_error = ex.what();
            }
            for (int c = 0; c < nc; ++c) {
                McRow& row = result.rows[static_cast<std::size_t>(k) * nc + c];
                row.run = k;
                row.seed = seed_k;
                row.controller = controllers[c];
                if (!gen_error.empty()) {
                    row.error = gen_error;
                    continue;
                }
                try {
                    row.m = run(world, controllers[c]).metrics;
                } catch (const std::exception& ex) {
                    row.error = ex.what();
                }
            }
        }
    };

    const int n_threads = std::max(1, std::min(jobs, n_runs));
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();

    for (int c = 0; c < nc; ++c) {
        McSummary s;
        s.controller = controllers[c];
        double sum_max_dac = 0.0, sum_gt2 = 0.0, sum_drop = 0.0, sum_loop = 0.0;
        int ok = 0;
        for (int k = 0; k < n_runs; ++k) {
            const McRow& row = result.rows[static_cast<std::size_t>(k) * nc + c];
            if (!row.error.empty()) {
                ++s.failed_runs;
                continue;
            }
            ++ok;
            s.worst_min_h0 = std::min(s.worst_min_h0, row.m.min_h0);
            if (row.m.min_h0 < 0.0) ++s.runs_h0_neg;
            s.total_incomplete += row.m.incomplete_lane_changes;
            if (row.m.incomplete_lane_changes > 0) ++s.runs_incomplete;
            s.worst_oob = std::max(s.worst_oob, row.m.oob);
            s.max_delta_ac = std::max(s.max_delta_ac, row.m.max_delta_ac);
            s.max_loop_ms = std::max(s.max_loop_ms, row.m.loop_ms_max);
            sum_max_dac += row.m.max_delta_ac;
            sum_gt2 += row.m.count_delta_ac_gt2;
            sum_drop += row.m.avg_speed_drop_mph;
            sum_loop += row.m.loop_ms_mean;
        }
        s.n_runs = n_runs;
        if (ok > 0) {
            s.mean_max_delta_ac = sum_max_dac / ok;
            s.mean_count_gt2 = sum_gt2 / ok;
            s.mean_speed_drop_mph = sum_drop / ok;
            s.mean_loop_ms = sum_loop / ok;
        }
        result.summaries.push_back(s);
    }
    return result;
}

}  // namespace mpf

#endif  // MPF_SCENARIO_HPP
