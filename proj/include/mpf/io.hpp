#ifndef MPF_IO_HPP
#define MPF_IO_HPP

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpf/fastloop.hpp"
#include "mpf/scenario.hpp"

namespace mpf {

inline constexpr int kCsvSchemaVersion = 1;

namespace detail {

// exact round-trip formatting for CSV fields
inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string fmt_f3(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

}  // namespace detail

inline const char* metrics_csv_header() {
    return "schema_version,run,seed,controller,case,min_h0,incomplete_ls,completion_worst,"
           "oob,max_delta_ac,delta_ac_gt2,avg_speed_drop_mph,solver_fallbacks,steps,error";
}

inline std::string metrics_csv_row(const McRow& row, int case_id) {
    using detail::fmt_g17;
    std::ostringstream os;
    os << kCsvSchemaVersion << ',' << row.run << ',' << row.seed << ','
       << to_string(row.controller) << ',' << case_id << ',';
    if (row.error.empty()) {
        os << fmt_g17(row.m.min_h0) << ',' << row.m.incomplete_lane_changes << ','
           << fmt_g17(row.m.completion_worst) << ',' << fmt_g17(row.m.oob) << ','
           << fmt_g17(row.m.max_delta_ac) << ',' << row.m.count_delta_ac_gt2 << ','
           << fmt_g17(row.m.avg_speed_drop_mph) << ',' << row.m.solver_fallbacks << ','
           << row.m.steps << ',';
    } else {
        os << ",,,,,,,,," << row.error;
    }
    return os.str();
}

inline void write_metrics_csv(std::ostream& out, const std::vector<McRow>& rows, int case_id) {
    out << metrics_csv_header() << "\n";
    for (const McRow& row : rows) out << metrics_csv_row(row, case_id) << "\n";
}

inline const char* summary_csv_header() {
    return "schema_version,controller,case,n_runs,failed_runs,worst_min_h0,runs_h0_neg,"
           "incomplete_total,runs_incomplete,worst_oob,max_delta_ac,mean_max_delta_ac,"
           "mean_delta_ac_gt2,mean_speed_drop_mph";
}

inline void write_summary_csv(std::ostream& out, const std::vector<McSummary>& summaries,
                              int case_id) {
    using detail::fmt_g17;
    out << summary_csv_header() << "\n";
    for (const McSummary& s : summaries) {
        out << kCsvSchemaVersion << ',' << to_string(s.controller) << ',' << case_id << ','
            << s.n_runs << ',' << s.failed_runs << ',' << fmt_g17(s.worst_min_h0) << ','
            << s.runs_h0_neg << ',' << s.total_incomplete << ',' << s.runs_incomplete << ','
            << fmt_g17(s.worst_oob) << ',' << fmt_g17(s.max_delta_ac) << ','
            << fmt_g17(s.mean_max_delta_ac) << ',' << fmt_g17(s.mean_count_gt2) << ','
            << fmt_g17(s.mean_speed_drop_mph) << "\n";
    }
}

// Table in the shape of the interchange result tables.
inline void write_summary_text(std::ostream& out, const std::vector<McSummary>& summaries,
                               int case_id) {
    using detail::fmt_f3;
    out << "case " << case_id << ", " << (summaries.empty() ? 0 : summaries.front().n_runs)
        << " runs per controller\n";
    out << "algorithm   min h0 [m]  h0<0 #  incompl LS #  OOB [m]  max dAc  dAc>2 (avg)\n";
    for (const McSummary& s : summaries) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-11s %10s %7d %13d %8s %8s %12.1f\n",
                      to_string(s.controller).c_str(), fmt_f3(s.worst_min_h0).c_str(),
                      s.runs_h0_neg, s.total_incomplete,
                      s.worst_oob > 0.0 ? fmt_f3(s.worst_oob).c_str() : "-",
                      fmt_f3(s.max_delta_ac).c_str(), s.mean_count_gt2);
        out << line;
        if (s.failed_runs > 0) {
            out << "  (" << s.failed_runs << " failed runs excluded)\n";
        }
    }
}

// One JSON record per control step.
inline void write_trajectory_jsonl(std::ostream& out, const TrajectoryLog& log, int run_id) {
    using nlohmann::json;
    for (std::size_t k = 0; k < log.steps.size(); ++k) {
        const StepRecord& rec = log.steps[k];
        json j;
        j["run_id"] = run_id;
        j["step"] = k;
        j["t"] = rec.t;
        j["controller"] = to_string(log.controller);
        json agents = json::array();
        for (std::size_t i = 0; i < rec.agents.size(); ++i) {
            const AgentRecord& a = rec.agents[i];
            agents.push_back({{"id", i},
                              {"x", a.state.x},
                              {"y", a.state.y},
                              {"theta", a.state.theta},
                              {"v", a.state.v},
                              {"u0", {a.u0.delta, a.u0.ac}},
                              {"u_star", {a.u_star.delta, a.u_star.ac}},
                              {"u_act", {a.u_act.delta, a.u_act.ac}},
                              {"h0_min", a.h0_min}});
        }
        j["agents"] = agents;
        json active = json::array();
        for (const ConstraintTag& tag : rec.active) active.push_back(tag.str());
        j["active"] = active;
        j["w"] = rec.w;
        j["oob"] = rec.oob;
        out << j.dump() << "\n";
    }
}

inline std::string trajectory_jsonl_string(const TrajectoryLog& log, int run_id) {
    std::ostringstream os;
    write_trajectory_jsonl(os, log, run_id);
    return os.str();
}

// (mode, k, tau_d/eps, verdict, decay_rate) rows plus one boundary row per
// boundary search.
inline const char* fastloop_csv_header() {
    return "schema_version,record,mode,k,eps,delay_over_eps,verdict,decay_rate";
}

struct FastloopCsvRow {
    std::string record;  // "sweep" or "boundary"
    DdeMode mode = DdeMode::FullMpf;
    double k = 1.0;
    double eps = 0.2;
    double delay_over_eps = 0.0;
    std::string verdict;
    double decay_rate = 0.0;
};

inline void write_fastloop_csv(std::ostream& out, const std::vector<FastloopCsvRow>& rows) {
    using detail::fmt_g17;
    out << fastloop_csv_header() << "\n";
    for (const FastloopCsvRow& r : rows) {
        out << kCsvSchemaVersion << ',' << r.record << ',' << to_string(r.mode) << ','
            << fmt_g17(r.k) << ',' << fmt_g17(r.eps) << ',' << fmt_g17(r.delay_over_eps) << ','
            << r.verdict << ',' << fmt_g17(r.decay_rate) << "\n";
    }
}

}  // namespace mpf

#endif  // MPF_IO_HPP
