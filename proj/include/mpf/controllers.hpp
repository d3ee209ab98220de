#ifndef MPF_CONTROLLERS_HPP
#define MPF_CONTROLLERS_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mpf/barrier.hpp"
#include "mpf/qp.hpp"
#include "mpf/vehicle.hpp"

namespace mpf {

enum class ControllerKind { NoMpf, FullMpf, SplitMpf };

inline std::string to_string(ControllerKind k) {
    switch (k) {
        case ControllerKind::NoMpf: return "no-mpf";
        case ControllerKind::FullMpf: return "full-mpf";
        case ControllerKind::SplitMpf: return "split-mpf";
    }
    return "?";
}

// Pure-pursuit lateral tracking of a lane center plus a proportional speed
// loop. The goal point sits on the target line one lookahead ahead of the
// vehicle; lookahead scales with speed and is floored at 1 m.
struct BaselineParams {
    double lookahead_gain = 0.5;  // s
    double min_lookahead = 1.0;   // m
    double v_des = 22.0;          // m/s
    double lat_target = 0.0;      // m, desired lane center
    double kp_speed = 0.5;        // 1/s
};

inline ControlInput baseline(const VehicleState& s, const BaselineParams& b,
                             const VehicleParams& p) {
    const double look = std::max(b.min_lookahead, b.lookahead_gain * s.v);
    const double dx = look;
    const double dy = b.lat_target - s.y;
    const double lateral_body = -dx * std::sin(s.theta) + dy * std::cos(s.theta);
    const double kappa = 2.0 * lateral_body / (dx * dx + dy * dy);
    return saturate({p.wheelbase * kappa, b.kp_speed * (b.v_des - s.v)}, p);
}

// Fast proprioceptive filter state. Full-MPF keeps a single vector over all
// 2N actuators; split-MPF keeps one vector per (agent, actuator)
// sub-controller with that sub-controller's own entry pinned to zero.
struct WFilterBank {
    double eps = 0.2;  // s
    std::vector<std::vector<double>> w;
};

// Exact zero-order-hold discretization of eps*wd = -w + (u_act - u_ref) over
// one controller period.
inline void advance_w_filter(std::vector<double>& w, const std::vector<double>& u_act,
                             const std::vector<double>& u_ref, double period, double eps) {
    const double phi = std::exp(-period / eps);
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = phi * w[i] + (1.0 - phi) * (u_act[i] - u_ref[i]);
    }
}

inline std::vector<double> flatten(const std::vector<ControlInput>& u) {
    std::vector<double> out(2 * u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        out[2 * i] = u[i].delta;
        out[2 * i + 1] = u[i].ac;
    }
    return out;
}

inline std::vector<ControlInput> unflatten(const std::vector<double>& u) {
    std::vector<ControlInput> out(u.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {u[2 * i], u[2 * i + 1]};
    return out;
}

struct SafetyFilterOptions {
    double eps = 0.2;          // s, fast filter time constant
    double period = 0.1;       // s, controller update period
    double slack_weight = 1e6;
    // objective weight on steering deviations relative to acceleration ones;
    // large enough that a conflict is absorbed longitudinally instead of by
    // cancelling a lane change
    double steer_weight = 5000.0;
    double qp_tol = 1e-8;
    int qp_max_iter = 200;
    bool warm_start = true;
};

// One step of whichever safety-filter architecture was selected. Operates on
// flat input vectors [delta_0, ac_0, delta_1, ac_1, ...]. The QP box keeps
// every returned control saturated. A QP that hits its iteration cap falls
// back to the previous solution for the affected (sub-)controller.
class SafetyFilter {
public:
    SafetyFilter(ControllerKind kind, int n_agents, const VehicleParams& params,
                 const SafetyFilterOptions& opts = {})
        : kind_(kind), n_agents_(n_agents), nu_(2 * n_agents), params_(params), opts_(opts) {
        bank_.eps = opts.eps;
        if (kind_ == ControllerKind::FullMpf) {
            bank_.w.assign(1, std::vector<double>(nu_, 0.0));
            prev_solution_.assign(1, std::vector<double>(nu_, 0.0));
        } else if (kind_ == ControllerKind::SplitMpf) {
            bank_.w.assign(nu_, std::vector<double>(nu_, 0.0));
            prev_solution_.assign(nu_, std::vector<double>(nu_, 0.0));
        } else {
            prev_solution_.assign(1, std::vector<double>(nu_, 0.0));
        }
        warm_tags_.resize(prev_solution_.size());
        lb_.resize(nu_);
        ub_.resize(nu_);
        weights_.resize(nu_);
        for (int i = 0; i < n_agents_; ++i) {
            lb_[2 * i] = params.u_min.delta;
            ub_[2 * i] = params.u_max.delta;
            lb_[2 * i + 1] = params.u_min.ac;
            ub_[2 * i + 1] = params.u_max.ac;
            weights_[2 * i] = opts.steer_weight;
            weights_[2 * i + 1] = 1.0;
        }
    }

    ControllerKind kind() const { return kind_; }
    const WFilterBank& bank() const { return bank_; }
    int fallback_count() const { return fallback_count_; }
    const std::vector<ConstraintTag>& active_tags() const { return active_tags_; }

    // Flat snapshot of all filter states (empty for no-MPF).
    std::vector<double> w_snapshot() const {
        std::vector<double> out;
        for (const auto& w : bank_.w) out.insert(out.end(), w.begin(), w.end());
        return out;
    }

    // u_act_prev: actuation measured from the plant over the last period.
    std::vector<double> step(const std::vector<double>& u0,
                             const std::vector<ConstraintRow>& rows,
                             const std::vector<double>& u_act_prev) {
        active_tags_.clear();
        switch (kind_) {
            case ControllerKind::NoMpf: {
                std::vector<double> u = solve_one(0, u0, rows, nullptr);
                prev_solution_[0] = u;
                return u;
            }
            case ControllerKind::FullMpf: {
                advance_w_filter(bank_.w[0], u_act_prev, prev_solution_[0], opts_.period,
                                 bank_.eps);
                std::vector<double> u = solve_one(0, u0, rows, &bank_.w[0]);
                prev_solution_[0] = u;
                return u;
            }
            case ControllerKind::SplitMpf: {
                std::vector<double> implemented(nu_, 0.0);
                for (int sub = 0; sub < nu_; ++sub) {
                    advance_w_filter(bank_.w[sub], u_act_prev, prev_solution_[sub],
                                     opts_.period, bank_.eps);
                    bank_.w[sub][sub] = 0.0;  // own actuator never fed back
                    std::vector<double> local = solve_one(sub, u0, rows, &bank_.w[sub]);
                    implemented[sub] = local[sub];
                    prev_solution_[sub] = std::move(local);
                }
                return implemented;
            }
        }
        return u0;
    }

private:
    ControllerKind kind_;
    int n_agents_;
    int nu_;
    VehicleParams params_;
    SafetyFilterOptions opts_;
    WFilterBank bank_;
    std::vector<std::vector<double>> prev_solution_;
    std::vector<std::vector<ConstraintTag>> warm_tags_;
    std::vector<double> lb_, ub_, weights_;
    std::vector<ConstraintTag> active_tags_;
    int fallback_count_ = 0;
    QpSolver solver_;

    std::vector<double> solve_one(int slot, const std::vector<double>& u0,
                                  const std::vector<ConstraintRow>& rows,
                                  const std::vector<double>* w) {
        QpProblem prob;
        prob.n = nu_;
        prob.u0 = u0;
        prob.lb = lb_;
        prob.ub = ub_;
        prob.weights = weights_;
        prob.slack_weight = opts_.slack_weight;
        prob.rows = rows;
        if (w != nullptr) {
            // b.(u + w) >= -a  folded into the row constant
            for (ConstraintRow& r : prob.rows) {
                for (int c = 0; c < r.n_coeffs; ++c) {
                    r.a += r.coeffs[c].b_delta * (*w)[2 * r.coeffs[c].agent] +
                           r.coeffs[c].b_ac * (*w)[2 * r.coeffs[c].agent + 1];
                }
            }
        }

        std::vector<int> warm;
        if (opts_.warm_start) {
            for (const ConstraintTag& t : warm_tags_[slot]) {
                for (std::size_t k = 0; k < rows.size(); ++k) {
                    if (rows[k].tag == t) {
                        warm.push_back(static_cast<int>(k));
                        break;
                    }
                }
            }
        }

        QpSolution sol = solver_.solve(prob, opts_.qp_tol, opts_.qp_max_iter,
                                       warm.empty() ? nullptr : &warm);
        warm_tags_[slot].clear();
        for (int k : sol.active_rows) warm_tags_[slot].push_back(rows[k].tag);
        if (sol.status != QpSolution::Status::optimal) {
            ++fallback_count_;
            return prev_solution_[slot];
        }
        for (int k : sol.active_rows) {
            const ConstraintTag& t = rows[k].tag;
            bool seen = false;
            for (const ConstraintTag& have : active_tags_) {
                if (have == t) {
                    seen = true;
                    break;
                }
            }
            if (!seen) active_tags_.push_back(t);
        }
        return sol.u_star;
    }
};

}  // namespace mpf

#endif  // MPF_CONTROLLERS_HPP
