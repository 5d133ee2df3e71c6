#pragma once
// JSON report builders and the plot-data CSV emitter. Every report carries a
// schema_version field so downstream tooling can detect format drift. Key
// order is fixed at build time, so a seeded pipeline writes bitwise identical
// report files on every run regardless of worker count.

#include "voltscope/cluster.hpp"
#include "voltscope/cpa.hpp"
#include "voltscope/metrics.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace voltscope {

using Json = nlohmann::ordered_json;

inline constexpr int kReportSchemaVersion = 1;

// Renders a disclosure count, or ">N" with N the largest schedule entry when
// the key never fully resolved within the schedule.
std::string render_mtd(const MtdReport &mtd);

// Full CPA report: per-byte ranking, peak correlations, PGE when a known key
// was supplied, and the MTD block when a schedule was run.
Json cpa_report(const std::vector<AttackResult> &bytes,
                const std::optional<MtdReport> &mtd);

// Clustering-assisted attack report. Per-cluster detail is reduced to the top
// guess per byte; the fused ranking is kept in full.
Json cluster_report(const FusedAttackResult &result);

// One K-sweep table for a single island configuration.
Json sweep_entry(const std::vector<SweepRow> &rows, const IslandConfig &cfg);

// Wraps one or more sweep entries (different island configs) into a report.
Json sweep_report(const std::vector<Json> &entries);

// Leakage assessment report with both split halves' t-score arrays so the
// curves can be plotted directly.
Json tvla_report(const TvlaReport &report);

// Analytic SNR figures for the supply-sharing variants, plus the empirical
// estimate when one was measured.
Json snr_report(const SnrParams &params, const SnrTriple &analytic,
                std::optional<double> empirical);

// Long-format CSV (k,mtd,avg_pge,n,m) from a sweep report, one row per
// (k, island-config) pair. Undisclosed MTD cells render as ">N".
std::string emit_plot_data(const Json &sweep);

// Serializes a report to a file with a trailing newline.
void write_report(const Json &report, const std::string &path);

} // namespace voltscope
