#ifndef MPF_CONFIG_HPP
#define MPF_CONFIG_HPP

#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "mpf/scenario.hpp"

namespace mpf {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OutputOptions {
    bool trajectory = false;
};

struct LoadedConfig {
    ScenarioConfig scenario;
    OutputOptions output;
};

namespace detail {

using json = nlohmann::json;

// Wraps one JSON object; every key must be consumed or finish() reports it
// with its JSON-pointer location. Holds a copy so it can wrap child()
// temporaries.
class StrictObject {
public:
    StrictObject(json j, std::string path) : j_(std::move(j)), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("expected object at '" + path_ + "'");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    template <typename T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& ex) {
            throw ConfigError("bad value at '" + path_ + "/" + key + "': " + ex.what());
        }
    }

    json child(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) ? j_.at(key) : json::object();
    }

    const std::string& path() const { return path_; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) {
                throw ConfigError("unknown key '" + path_ + "/" + it.key() + "'");
            }
        }
    }

private:
    json j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline ControllerKind controller_from_string(const std::string& s) {
    if (s == "no-mpf") return ControllerKind::NoMpf;
    if (s == "full-mpf") return ControllerKind::FullMpf;
    if (s == "split-mpf") return ControllerKind::SplitMpf;
    throw ConfigError("unknown controller '" + s + "' (no-mpf | full-mpf | split-mpf)");
}

}  // namespace detail

// Strict config reader: every key is optional (defaults apply), unknown keys
// are rejected with their location. The grammar is documented in README.md.
inline LoadedConfig parse_config(const nlohmann::json& root) {
    using detail::StrictObject;
    LoadedConfig out;
    ScenarioConfig& cfg = out.scenario;

    StrictObject top(root, "");

    {
        StrictObject sc(top.child("scenario"), "/scenario");
        sc.get("n_agents", cfg.n_agents);
        sc.get("v_min", cfg.v_min);
        sc.get("v_max", cfg.v_max);
        sc.get("straight_prob", cfg.straight_prob);
        sc.get("density_vph", cfg.density_vph);
        if (sc.has("swap_zone")) {
            std::vector<double> zone;
            sc.get("swap_zone", zone);
            if (zone.size() != 2 || zone[0] >= zone[1]) {
                throw ConfigError("bad value at '/scenario/swap_zone': expected [start, end]");
            }
            cfg.swap_x_start = zone[0];
            cfg.swap_x_end = zone[1];
        }
        sc.get("seed", cfg.seed);
        sc.get("sim_dt", cfg.sim_dt);
        sc.get("ctrl_dt", cfg.ctrl_dt);
        sc.get("horizon", cfg.horizon);
        double lane_width = cfg.road.lane_width;
        sc.get("lane_width", lane_width);
        cfg.road.lane_width = lane_width;
        cfg.road.rb_r = -lane_width;
        cfg.road.rb_l = lane_width;
        cfg.road.lane_centers = {-0.5 * lane_width, 0.5 * lane_width};
        sc.finish();
    }

    {
        StrictObject ct(top.child("controller"), "/controller");
        if (ct.has("kind")) {
            std::string kind;
            ct.get("kind", kind);
            cfg.controller = detail::controller_from_string(kind);
        }
        ct.get("eps", cfg.filter.eps);
        ct.get("slack_weight", cfg.filter.slack_weight);
        ct.get("qp_tol", cfg.filter.qp_tol);
        ct.get("qp_max_iter", cfg.filter.qp_max_iter);
        ct.get("warm_start", cfg.filter.warm_start);
        ct.get("wheelbase", cfg.vehicle.wheelbase);
        {
            StrictObject el(ct.child("ellipse"), "/controller/ellipse");
            el.get("r", cfg.ellipse.r);
            el.get("alpha", cfg.ellipse.alpha);
            el.get("margin", cfg.ellipse.margin);
            el.finish();
        }
        {
            StrictObject g(ct.child("gains"), "/controller/gains");
            g.get("l0", cfg.gains.l0);
            g.get("l1", cfg.gains.l1);
            g.get("lambda", cfg.gains.lambda);
            g.finish();
        }
        {
            StrictObject b(ct.child("baseline"), "/controller/baseline");
            b.get("lookahead_gain", cfg.lookahead_gain);
            b.get("kp_speed", cfg.kp_speed);
            b.finish();
        }
        ct.finish();
    }

    {
        StrictObject im(top.child("impairment"), "/impairment");
        im.get("case", cfg.impairment_case);
        im.get("clip_lo", cfg.imp.clip_lo);
        im.get("clip_hi", cfg.imp.clip_hi);
        im.get("onset_x", cfg.imp.onset_x);
        im.get("gain", cfg.imp.gain);
        im.get("tau_steer", cfg.imp.tau_steer);
        im.get("tau_accel", cfg.imp.tau_accel);
        im.get("prob", cfg.imp.prob);
        im.finish();
    }

    {
        StrictObject op(top.child("output"), "/output");
        op.get("trajectory", out.output.trajectory);
        op.finish();
    }

    top.finish();

    if (cfg.impairment_case < 0 || cfg.impairment_case > 3) {
        throw ConfigError("bad value at '/impairment/case': expected 0..3");
    }
    if (cfg.n_agents < 2 || cfg.n_agents % 2 != 0) {
        throw ConfigError("bad value at '/scenario/n_agents': expected even, >= 2");
    }
    if (!(cfg.v_min <= cfg.v_max) || cfg.v_min < 0.0) {
        throw ConfigError("bad value at '/scenario': need 0 <= v_min <= v_max");
    }
    if (cfg.sim_dt <= 0.0 || cfg.ctrl_dt < cfg.sim_dt) {
        throw ConfigError("bad value at '/scenario': need 0 < sim_dt <= ctrl_dt");
    }
    return out;
}

inline LoadedConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError("cannot parse '" + path + "': " + ex.what());
    }
    return parse_config(root);
}

// ---------------------------------------------------------------------------
// World serialization (for replay)
// ---------------------------------------------------------------------------

namespace detail {

inline json channel_to_json(const ChannelSpec& c) {
    json j;
    j["kind"] = to_string(c.kind);
    switch (c.kind) {
        case ChannelKind::Gain: j["gain"] = c.gain; break;
        case ChannelKind::Clip:
            j["lo"] = c.lo;
            j["hi"] = c.hi;
            break;
        case ChannelKind::FirstOrder:
        case ChannelKind::PureDelay: j["tau"] = c.tau; break;
        default: break;
    }
    return j;
}

inline ChannelSpec channel_from_json(const json& j, const std::string& path) {
    StrictObject o(j, path);
    std::string kind;
    o.get("kind", kind);
    ChannelSpec c;
    if (kind == "identity") {
        c.kind = ChannelKind::Identity;
    } else if (kind == "gain") {
        c.kind = ChannelKind::Gain;
        o.get("gain", c.gain);
    } else if (kind == "clip") {
        c.kind = ChannelKind::Clip;
        o.get("lo", c.lo);
        o.get("hi", c.hi);
    } else if (kind == "first-order") {
        c.kind = ChannelKind::FirstOrder;
        o.get("tau", c.tau);
    } else if (kind == "pure-delay") {
        c.kind = ChannelKind::PureDelay;
        o.get("tau", c.tau);
    } else if (kind == "on-rails") {
        c.kind = ChannelKind::OnRails;
    } else {
        throw ConfigError("unknown channel kind '" + kind + "' at '" + path + "'");
    }
    o.finish();
    return c;
}

inline json config_to_json(const ScenarioConfig& cfg, const OutputOptions& out) {
    json j;
    j["scenario"] = {{"n_agents", cfg.n_agents},
                     {"v_min", cfg.v_min},
                     {"v_max", cfg.v_max},
                     {"straight_prob", cfg.straight_prob},
                     {"density_vph", cfg.density_vph},
                     {"swap_zone", {cfg.swap_x_start, cfg.swap_x_end}},
                     {"seed", cfg.seed},
                     {"sim_dt", cfg.sim_dt},
                     {"ctrl_dt", cfg.ctrl_dt},
                     {"horizon", cfg.horizon},
                     {"lane_width", cfg.road.lane_width}};
    j["controller"] = {{"kind", to_string(cfg.controller)},
                       {"eps", cfg.filter.eps},
                       {"slack_weight", cfg.filter.slack_weight},
                       {"qp_tol", cfg.filter.qp_tol},
                       {"qp_max_iter", cfg.filter.qp_max_iter},
                       {"warm_start", cfg.filter.warm_start},
                       {"wheelbase", cfg.vehicle.wheelbase},
                       {"ellipse",
                        {{"r", cfg.ellipse.r},
                         {"alpha", cfg.ellipse.alpha},
                         {"margin", cfg.ellipse.margin}}},
                       {"gains",
                        {{"l0", cfg.gains.l0}, {"l1", cfg.gains.l1}, {"lambda", cfg.gains.lambda}}},
                       {"baseline",
                        {{"lookahead_gain", cfg.lookahead_gain}, {"kp_speed", cfg.kp_speed}}}};
    j["impairment"] = {{"case", cfg.impairment_case}, {"clip_lo", cfg.imp.clip_lo},
                       {"clip_hi", cfg.imp.clip_hi},  {"onset_x", cfg.imp.onset_x},
                       {"gain", cfg.imp.gain},        {"tau_steer", cfg.imp.tau_steer},
                       {"tau_accel", cfg.imp.tau_accel}, {"prob", cfg.imp.prob}};
    j["output"] = {{"trajectory", out.trajectory}};
    return j;
}

}  // namespace detail

inline nlohmann::json world_to_json(const World& world) {
    using detail::channel_to_json;
    nlohmann::json j;
    j["schema_version"] = 1;
    j["config"] = detail::config_to_json(world.cfg, {});
    nlohmann::json agents = nlohmann::json::array();
    for (const AgentInit& a : world.agents) {
        nlohmann::json ja;
        ja["x"] = a.state.x;
        ja["y"] = a.state.y;
        ja["theta"] = a.state.theta;
        ja["v"] = a.state.v;
        ja["v_des"] = a.v_des;
        ja["lane_from"] = a.lane_from;
        ja["straight"] = a.straight;
        nlohmann::json imp;
        imp["steer"] = channel_to_json(a.impairment.steer);
        imp["accel"] = channel_to_json(a.impairment.accel);
        switch (a.impairment.onset.kind) {
            case OnsetTrigger::Kind::None: imp["onset"] = {{"kind", "none"}}; break;
            case OnsetTrigger::Kind::Time:
                imp["onset"] = {{"kind", "time"}, {"threshold", a.impairment.onset.threshold}};
                break;
            case OnsetTrigger::Kind::PositionX:
                imp["onset"] = {{"kind", "position-x"},
                                {"threshold", a.impairment.onset.threshold}};
                break;
        }
        ja["impairment"] = imp;
        agents.push_back(ja);
    }
    j["agents"] = agents;
    return j;
}

inline World world_from_json(const nlohmann::json& j) {
    using detail::StrictObject;
    World world;
    StrictObject top(j, "");
    int version = 1;
    top.get("schema_version", version);
    if (version != 1) throw ConfigError("unsupported world schema_version");
    world.cfg = parse_config(top.child("config")).scenario;
    const nlohmann::json agents = top.child("agents");
    top.finish();
    if (!agents.is_array()) throw ConfigError("expected array at '/agents'");
    int idx = 0;
    for (const auto& ja : agents) {
        const std::string path = "/agents/" + std::to_string(idx++);
        StrictObject o(ja, path);
        AgentInit a;
        o.get("x", a.state.x);
        o.get("y", a.state.y);
        o.get("theta", a.state.theta);
        o.get("v", a.state.v);
        o.get("v_des", a.v_des);
        o.get("lane_from", a.lane_from);
        o.get("straight", a.straight);
        if (o.has("impairment")) {
            StrictObject imp(o.child("impairment"), path + "/impairment");
            a.impairment.steer =
                detail::channel_from_json(imp.child("steer"), path + "/impairment/steer");
            a.impairment.accel =
                detail::channel_from_json(imp.child("accel"), path + "/impairment/accel");
            StrictObject onset(imp.child("onset"), path + "/impairment/onset");
            std::string kind = "none";
            onset.get("kind", kind);
            if (kind == "none") {
                a.impairment.onset.kind = OnsetTrigger::Kind::None;
            } else if (kind == "time") {
                a.impairment.onset.kind = OnsetTrigger::Kind::Time;
                onset.get("threshold", a.impairment.onset.threshold);
            } else if (kind == "position-x") {
                a.impairment.onset.kind = OnsetTrigger::Kind::PositionX;
                onset.get("threshold", a.impairment.onset.threshold);
            } else {
                throw ConfigError("unknown onset kind at '" + path + "/impairment/onset'");
            }
            onset.finish();
            imp.finish();
        }
        o.finish();
        world.agents.push_back(a);
    }
    return world;
}

inline void save_world(const World& world, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << world_to_json(world).dump(2) << "\n";
}

inline World load_world(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open world file '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError("cannot parse '" + path + "': " + ex.what());
    }
    return world_from_json(j);
}

}  // namespace mpf

#endif  // MPF_CONFIG_HPP
