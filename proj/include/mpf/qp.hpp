#ifndef MPF_QP_HPP
#define MPF_QP_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "mpf/barrier.hpp"

namespace mpf {

// Softened safety-filter QP:
//   min |u - u0|^2 + slack_weight * sum_k s_k^2
//   s.t. a_k + b_k.u + s_k >= 0,  s_k >= 0,  lb <= u <= ub
// Always feasible; the large slack weight makes violations expensive.
struct QpProblem {
    int n = 0;                       // decision variables, 2 per agent
    std::vector<double> u0;          // reference input, size n
    std::vector<ConstraintRow> rows;
    std::vector<double> lb, ub;      // box, size n
    double slack_weight = 1e6;
    // per-variable objective weights, sum w_i (u_i - u0_i)^2; empty = all 1.
    // Steering and acceleration spans differ by an order of magnitude, so the
    // caller can rebalance which channel absorbs a conflict.
    std::vector<double> weights;
    bool trace_objective = false;    // fill QpSolution::objective_trace
};

struct QpSolution {
    enum class Status { optimal, max_iter };

    std::vector<double> u_star;
    std::vector<double> slacks;
    Status status = Status::optimal;
    double kkt_residual = 0.0;
    int iterations = 0;
    std::vector<int> active_rows;          // constraint rows tight at the end
    std::vector<double> objective_trace;
};

// Closed-form minimizer of |u - u0|^2 subject to a + b.(u + w) >= 0 with no
// box:  u* = u0 - min{0, a + b.u0 + b.w} / |b|^2 * b.  Serves as the test
// oracle for the iterative solver.
inline std::vector<double> explicit_single_constraint(const std::vector<double>& u0,
                                                      double a,
                                                      const std::vector<double>& b,
                                                      const std::vector<double>& w) {
    double r = a;
    for (std::size_t i = 0; i < u0.size(); ++i) r += b[i] * (u0[i] + w[i]);
    if (r >= 0.0) return u0;
    double bb = 0.0;
    for (double bi : b) bb += bi * bi;
    if (bb == 0.0) {
        throw std::domain_error("explicit_single_constraint: b = 0 with violated constraint");
    }
    std::vector<double> u = u0;
    for (std::size_t i = 0; i < u.size(); ++i) u[i] -= r / bb * b[i];
    return u;
}

namespace detail {

// Dense Cholesky, lower triangular in place. Returns false on a non-positive
// pivot (dependent working set).
inline bool cholesky(std::vector<double>& a, int n) {
    for (int j = 0; j < n; ++j) {
        double d = a[j * n + j];
        for (int k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
        if (d <= 1e-14) return false;
        const double lj = std::sqrt(d);
        a[j * n + j] = lj;
        for (int i = j + 1; i < n; ++i) {
            double s = a[i * n + j];
            for (int k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            a[i * n + j] = s / lj;
        }
    }
    return true;
}

inline void cholesky_solve(const std::vector<double>& l, int n, std::vector<double>& x) {
    for (int i = 0; i < n; ++i) {
        double s = x[i];
        for (int k = 0; k < i; ++k) s -= l[i * n + k] * x[k];
        x[i] = s / l[i * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = x[i];
        for (int k = i + 1; k < n; ++k) s -= l[k * n + i] * x[k];
        x[i] = s / l[i * n + i];
    }
}

}  // namespace detail

// Primal active-set solver for the softened QP. Decision vector z = (u, s);
// every constraint is one of: general row (sparse in u plus its slack),
// u bound, or s >= 0. Ties on constraint entry/removal break toward the
// lowest constraint id, which makes the iteration path deterministic.
class QpSolver {
public:
    QpSolution solve(const QpProblem& p, double tol = 1e-8, int max_iter = 200,
                     const std::vector<int>* warm_rows = nullptr) {
        build(p);
        QpSolution sol;
        if (!warm_start(p, warm_rows)) cold_start(p);

        int iter = 0;
        bool optimal = false;
        bool at_ws_optimum = false;  // the last step was a full, unblocked one
        while (iter < max_iter) {
            ++iter;
            if (p.trace_objective) sol.objective_trace.push_back(objective(p));
            if (!eqp_direction()) {
                // dependent working set; drop the most recent addition
                if (ws_.empty()) break;
                remove_ws(static_cast<int>(ws_.size()) - 1);
                at_ws_optimum = false;
                continue;
            }
            // the slack weight makes H ill-conditioned, so the EQP direction
            // carries noise ~ eps * cond(H) * |z|; a full unblocked step also
            // lands exactly on the working-set optimum
            if (at_ws_optimum || pnorm_ < 1e-9 * std::max(1.0, znorm_)) {
                int drop = most_negative_multiplier(tol);
                if (drop < 0) {
                    optimal = true;
                    break;
                }
                remove_ws(drop);
                at_ws_optimum = false;
                continue;
            }
            at_ws_optimum = take_step();
        }

        sol.status = optimal ? QpSolution::Status::optimal : QpSolution::Status::max_iter;
        sol.iterations = iter;
        sol.u_star.assign(z_.begin(), z_.begin() + p.n);
        sol.slacks.assign(z_.begin() + p.n, z_.end());
        for (int id : ws_) {
            if (id < m_) sol.active_rows.push_back(id);
        }
        sol.kkt_residual = kkt_residual(p);
        return sol;
    }

private:
    struct Entry {
        int var;
        double coef;
    };

    int n_ = 0, m_ = 0, nz_ = 0, nc_ = 0;
    std::vector<Entry> entries_;
    std::vector<int> centry_off_;      // nc_+1 offsets into entries_
    std::vector<double> crhs_;         // c.z >= crhs_
    std::vector<double> hinv_;         // 1 / H diagonal
    std::vector<double> z_, grad_, p_, lambda_, mwork_, rhs_;
    std::vector<int> ws_;
    std::vector<char> in_ws_;
    double pnorm_ = 0.0, znorm_ = 0.0;
    const QpProblem* prob_ = nullptr;

    void build(const QpProblem& p) {
        prob_ = &p;
        n_ = p.n;
        m_ = static_cast<int>(p.rows.size());
        nz_ = n_ + m_;
        nc_ = m_ + 2 * n_ + m_;
        entries_.clear();
        centry_off_.assign(nc_ + 1, 0);
        crhs_.assign(nc_, 0.0);

        // rows first (ids 0..m-1), then lb, ub, slack bounds
        for (int k = 0; k < m_; ++k) {
            const ConstraintRow& r = p.rows[k];
            for (int c = 0; c < r.n_coeffs; ++c) {
                entries_.push_back({2 * r.coeffs[c].agent, r.coeffs[c].b_delta});
                entries_.push_back({2 * r.coeffs[c].agent + 1, r.coeffs[c].b_ac});
            }
            entries_.push_back({n_ + k, 1.0});
            centry_off_[k + 1] = static_cast<int>(entries_.size());
            crhs_[k] = -r.a;
        }
        for (int i = 0; i < n_; ++i) {
            entries_.push_back({i, 1.0});
            centry_off_[m_ + i + 1] = static_cast<int>(entries_.size());
            crhs_[m_ + i] = p.lb[i];
        }
        for (int i = 0; i < n_; ++i) {
            entries_.push_back({i, -1.0});
            centry_off_[m_ + n_ + i + 1] = static_cast<int>(entries_.size());
            crhs_[m_ + n_ + i] = -p.ub[i];
        }
        for (int k = 0; k < m_; ++k) {
            entries_.push_back({n_ + k, 1.0});
            centry_off_[m_ + 2 * n_ + k + 1] = static_cast<int>(entries_.size());
            crhs_[m_ + 2 * n_ + k] = 0.0;
        }

        hinv_.assign(nz_, 0.5);
        if (!p.weights.empty()) {
            for (int i = 0; i < n_; ++i) hinv_[i] = 0.5 / p.weights[i];
        }
        for (int k = 0; k < m_; ++k) hinv_[n_ + k] = 0.5 / p.slack_weight;

        z_.assign(nz_, 0.0);
        grad_.assign(nz_, 0.0);
        p_.assign(nz_, 0.0);
        ws_.clear();
        in_ws_.assign(nc_, 0);
    }

    double cdotz(int id) const {
        double s = 0.0;
        for (int e = centry_off_[id]; e < centry_off_[id + 1]; ++e) {
            s += entries_[e].coef * z_[entries_[e].var];
        }
        return s;
    }

    double cdotp(int id) const {
        double s = 0.0;
        for (int e = centry_off_[id]; e < centry_off_[id + 1]; ++e) {
            s += entries_[e].coef * p_[entries_[e].var];
        }
        return s;
    }

    void cold_start(const QpProblem& p) {
        for (int i = 0; i < n_; ++i) z_[i] = std::clamp(p.u0[i], p.lb[i], p.ub[i]);
        for (int k = 0; k < m_; ++k) {
            z_[n_ + k] = std::max(0.0, crhs_[k] - cdotz(k) + z_[n_ + k]);
        }
    }

    // Pins the given rows to equality and solves for z directly; falls back
    // to the cold start unless the resulting point is feasible everywhere.
    bool warm_start(const QpProblem& p, const std::vector<int>* warm_rows) {
        if (warm_rows == nullptr || warm_rows->empty()) return false;
        for (int id : *warm_rows) {
            if (id < 0 || id >= m_ || in_ws_[id]) {
                for (int u : ws_) in_ws_[u] = 0;
                ws_.clear();
                return false;
            }
            ws_.push_back(id);
            in_ws_[id] = 1;
        }
        // solve min 1/2 z'Hz + g'z  s.t.  C z = d
        const int nw = static_cast<int>(ws_.size());
        std::vector<double> gfull(nz_);
        for (int i = 0; i < n_; ++i) {
            const double w = p.weights.empty() ? 1.0 : p.weights[i];
            gfull[i] = -2.0 * w * p.u0[i];
        }
        for (int k = 0; k < m_; ++k) gfull[n_ + k] = 0.0;
        mwork_.assign(static_cast<std::size_t>(nw) * nw, 0.0);
        rhs_.assign(nw, 0.0);
        for (int a = 0; a < nw; ++a) {
            for (int b = 0; b <= a; ++b) {
                mwork_[a * nw + b] = mwork_[b * nw + a] = schur_entry(ws_[a], ws_[b]);
            }
            double s = crhs_[ws_[a]];
            for (int e = centry_off_[ws_[a]]; e < centry_off_[ws_[a] + 1]; ++e) {
                s += entries_[e].coef * hinv_[entries_[e].var] * gfull[entries_[e].var];
            }
            rhs_[a] = s;
        }
        if (!detail::cholesky(mwork_, nw)) {
            for (int u : ws_) in_ws_[u] = 0;
            ws_.clear();
            return false;
        }
        detail::cholesky_solve(mwork_, nw, rhs_);
        for (int v = 0; v < nz_; ++v) z_[v] = -hinv_[v] * gfull[v];
        for (int a = 0; a < nw; ++a) {
            for (int e = centry_off_[ws_[a]]; e < centry_off_[ws_[a] + 1]; ++e) {
                z_[entries_[e].var] += hinv_[entries_[e].var] * entries_[e].coef * rhs_[a];
            }
        }
        for (int id = 0; id < nc_; ++id) {
            if (cdotz(id) < crhs_[id] - 1e-10) {
                for (int u : ws_) in_ws_[u] = 0;
                ws_.clear();
                cold_start(p);
                return true;  // cold-started, but initialized
            }
        }
        return true;
    }

    double schur_entry(int ida, int idb) const {
        // constraints have at most 5 entries; entry order is arbitrary
        double s = 0.0;
        for (int ea = centry_off_[ida]; ea < centry_off_[ida + 1]; ++ea) {
            for (int eb = centry_off_[idb]; eb < centry_off_[idb + 1]; ++eb) {
                if (entries_[ea].var == entries_[eb].var) {
                    s += entries_[ea].coef * entries_[eb].coef * hinv_[entries_[ea].var];
                }
            }
        }
        return s;
    }

    void compute_grad() {
        const QpProblem& p = *prob_;
        for (int i = 0; i < n_; ++i) {
            const double w = p.weights.empty() ? 1.0 : p.weights[i];
            grad_[i] = 2.0 * w * (z_[i] - p.u0[i]);
        }
        for (int k = 0; k < m_; ++k) grad_[n_ + k] = 2.0 * p.slack_weight * z_[n_ + k];
    }

    // Solves the equality-constrained subproblem for the step direction p and
    // multipliers lambda. Returns false when the working set went dependent.
    bool eqp_direction() {
        compute_grad();
        const int nw = static_cast<int>(ws_.size());
        lambda_.assign(nw, 0.0);
        if (nw > 0) {
            mwork_.assign(static_cast<std::size_t>(nw) * nw, 0.0);
            rhs_.assign(nw, 0.0);
            for (int a = 0; a < nw; ++a) {
                for (int b = 0; b <= a; ++b) {
                    mwork_[a * nw + b] = mwork_[b * nw + a] = schur_entry(ws_[a], ws_[b]);
                }
                double s = 0.0;
                for (int e = centry_off_[ws_[a]]; e < centry_off_[ws_[a] + 1]; ++e) {
                    s += entries_[e].coef * hinv_[entries_[e].var] * grad_[entries_[e].var];
                }
                rhs_[a] = s;
            }
            if (!detail::cholesky(mwork_, nw)) return false;
            detail::cholesky_solve(mwork_, nw, rhs_);
            lambda_ = rhs_;
        }
        pnorm_ = 0.0;
        znorm_ = 0.0;
        for (int v = 0; v < nz_; ++v) {
            p_[v] = -hinv_[v] * grad_[v];
            znorm_ = std::max(znorm_, std::abs(z_[v]));
        }
        for (int a = 0; a < static_cast<int>(ws_.size()); ++a) {
            for (int e = centry_off_[ws_[a]]; e < centry_off_[ws_[a] + 1]; ++e) {
                p_[entries_[e].var] += hinv_[entries_[e].var] * entries_[e].coef * lambda_[a];
            }
        }
        for (int v = 0; v < nz_; ++v) pnorm_ = std::max(pnorm_, std::abs(p_[v]));
        return true;
    }

    int most_negative_multiplier(double tol) const {
        int drop = -1;
        double worst = -std::max(tol, 1e-9);
        for (int a = 0; a < static_cast<int>(ws_.size()); ++a) {
            if (lambda_[a] < worst) {
                worst = lambda_[a];
                drop = a;
            }
        }
        return drop;
    }

    void remove_ws(int pos) {
        in_ws_[ws_[pos]] = 0;
        ws_.erase(ws_.begin() + pos);
    }

    // Returns true when the step was a full, unblocked one.
    bool take_step() {
        double alpha = 1.0;
        int blocking = -1;
        for (int id = 0; id < nc_; ++id) {
            if (in_ws_[id]) continue;
            const double proj = cdotp(id);
            if (proj >= -1e-13) continue;
            const double gap = std::max(0.0, cdotz(id) - crhs_[id]);
            const double a = gap / (-proj);
            if (a < alpha) {
                alpha = a;
                blocking = id;
            }
        }
        for (int v = 0; v < nz_; ++v) z_[v] += alpha * p_[v];
        if (blocking >= 0) {
            ws_.push_back(blocking);
            in_ws_[blocking] = 1;
            return false;
        }
        return true;
    }

    double objective(const QpProblem& p) const {
        double j = 0.0;
        for (int i = 0; i < n_; ++i) {
            const double w = p.weights.empty() ? 1.0 : p.weights[i];
            j += w * (z_[i] - p.u0[i]) * (z_[i] - p.u0[i]);
        }
        for (int k = 0; k < m_; ++k) j += p.slack_weight * z_[n_ + k] * z_[n_ + k];
        return j;
    }

    double kkt_residual(const QpProblem& p) {
        compute_grad();
        lambda_.resize(ws_.size(), 0.0);  // constraints added after the last EQP solve
        std::vector<double> stat = grad_;
        for (int a = 0; a < static_cast<int>(ws_.size()); ++a) {
            for (int e = centry_off_[ws_[a]]; e < centry_off_[ws_[a] + 1]; ++e) {
                stat[entries_[e].var] -= entries_[e].coef * lambda_[a];
            }
        }
        double gscale = 1.0;
        for (int v = 0; v < nz_; ++v) gscale = std::max(gscale, std::abs(grad_[v]));
        double r = 0.0;
        for (int v = 0; v < nz_; ++v) r = std::max(r, std::abs(stat[v]) / gscale);
        for (int id = 0; id < nc_; ++id) {
            r = std::max(r, crhs_[id] - cdotz(id));
        }
        for (double l : lambda_) r = std::max(r, -l);
        return r;
    }
};

inline QpSolution solve(const QpProblem& p, double tol = 1e-8, int max_iter = 200,
                        const std::vector<int>* warm_rows = nullptr) {
    QpSolver solver;
    return solver.solve(p, tol, max_iter, warm_rows);
}

}  // namespace mpf

#endif  // MPF_QP_HPP
