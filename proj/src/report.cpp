#include "voltscope/report.hpp"

#include <fstream>
#include <stdexcept>

namespace voltscope {

namespace {

Json mtd_block(const MtdReport &mtd) {
    Json block;
    block["schedule"] = mtd.schedule;
    if (mtd.disclosed_at)
        block["disclosed_at"] = *mtd.disclosed_at;
    else
        block["disclosed_at"] = nullptr;
    block["display"] = render_mtd(mtd);
    Json per_count = Json::array();
    for (const auto &pges : mtd.per_count_pge)
        per_count.push_back(pges);
    block["per_count_pge"] = per_count;
    return block;
}

} // namespace

std::string render_mtd(const MtdReport &mtd) {
    if (mtd.disclosed_at)
        return std::to_string(*mtd.disclosed_at);
    if (mtd.schedule.empty())
        return "n/a";
    return ">" + std::to_string(mtd.schedule.back());
}

Json cpa_report(const std::vector<AttackResult> &bytes,
                const std::optional<MtdReport> &mtd) {
    Json report;
    report["schema_version"] = kReportSchemaVersion;
    report["kind"] = "cpa";

    Json byte_list = Json::array();
    bool all_pge = bytes.size() == 16;
    double pge_sum = 0.0;
    for (const auto &r : bytes) {
        Json b;
        b["byte_index"] = r.byte_index;
        b["best_guess"] = r.ranking.empty() ? -1 : r.ranking.front();
        if (r.pge) {
            b["pge"] = *r.pge;
            pge_sum += *r.pge;
        } else {
            b["pge"] = nullptr;
            all_pge = false;
        }
        b["peak_correlation"] = r.peak_correlation;
        b["ranking"] = r.ranking;
        byte_list.push_back(std::move(b));
    }
    report["bytes"] = std::move(byte_list);
    if (all_pge)
        report["avg_pge"] = pge_sum / 16.0;
    else
        report["avg_pge"] = nullptr;
    if (mtd)
        report["mtd"] = mtd_block(*mtd);
    else
        report["mtd"] = nullptr;
    return report;
}

Json cluster_report(const FusedAttackResult &result) {
    Json report;
    report["schema_version"] = kReportSchemaVersion;
    report["kind"] = "cluster";
    report["k"] = result.k;
    report["skipped_clusters"] = result.skipped_clusters;

    Json per_cluster = Json::array();
    for (const auto &cluster : result.per_cluster) {
        if (cluster.empty() || cluster.front().ranking.empty()) {
            per_cluster.push_back(nullptr);
            continue;
        }
        Json best = Json::array();
        for (const auto &r : cluster)
            best.push_back(r.ranking.front());
        per_cluster.push_back(std::move(best));
    }
    report["per_cluster_best_guess"] = std::move(per_cluster);

    Json fused = Json::array();
    for (const auto &ranking : result.fused_ranking)
        fused.push_back(ranking);
    report["fused_ranking"] = std::move(fused);

    if (result.fused_pge) {
        report["fused_pge"] = *result.fused_pge;
        double sum = 0.0;
        for (int p : *result.fused_pge)
            sum += p;
        report["avg_fused_pge"] = sum / 16.0;
    } else {
        report["fused_pge"] = nullptr;
        report["avg_fused_pge"] = nullptr;
    }
    if (result.mtd)
        report["mtd"] = mtd_block(*result.mtd);
    else
        report["mtd"] = nullptr;
    return report;
}

Json sweep_entry(const std::vector<SweepRow> &rows, const IslandConfig &cfg) {
    Json entry;
    entry["n"] = cfg.n_islands;
    entry["m"] = cfg.n_supplies;
    Json table = Json::array();
    for (const auto &row : rows) {
        Json r;
        r["k"] = row.k;
        if (row.mtd.disclosed_at)
            r["mtd"] = *row.mtd.disclosed_at;
        else
            r["mtd"] = nullptr;
        r["mtd_display"] = render_mtd(row.mtd);
        r["avg_pge"] = row.avg_fused_pge;
        table.push_back(std::move(r));
    }
    entry["rows"] = std::move(table);
    return entry;
}

Json sweep_report(const std::vector<Json> &entries) {
    Json report;
    report["schema_version"] = kReportSchemaVersion;
    report["kind"] = "k_sweep";
    report["sweeps"] = entries;
    return report;
}

Json tvla_report(const TvlaReport &report) {
    Json out;
    out["schema_version"] = kReportSchemaVersion;
    out["kind"] = "tvla";
    out["threshold"] = report.threshold;
    out["normalized_length"] = report.normalized_length;
    out["fail_sample_count"] = report.fail_sample_count;
    out["pass"] = report.pass;
    out["t_scores_group1"] = report.t_scores_group1;
    out["t_scores_group2"] = report.t_scores_group2;
    return out;
}

Json snr_report(const SnrParams &params, const SnrTriple &analytic,
                std::optional<double> empirical) {
    Json out;
    out["schema_version"] = kReportSchemaVersion;
    out["kind"] = "snr";
    Json p;
    p["n"] = params.n;
    p["m"] = params.m;
    p["sigma2_T"] = params.sigma2_T;
    p["mu_T"] = params.mu_T;
    p["sigma2_va"] = params.sigma2_va;
    p["mu_va"] = params.mu_va;
    out["params"] = std::move(p);
    Json a;
    a["m_eq_n"] = analytic.m_eq_n;
    if (analytic.m_eq_2)
        a["m_eq_2"] = *analytic.m_eq_2;
    else
        a["m_eq_2"] = nullptr;
    a["m_eq_1"] = analytic.m_eq_1;
    out["analytic"] = std::move(a);
    if (empirical)
        out["empirical"] = *empirical;
    else
        out["empirical"] = nullptr;
    return out;
}

std::string emit_plot_data(const Json &sweep) {
    if (!sweep.is_object() || sweep.value("kind", "") != "k_sweep" ||
        !sweep.contains("sweeps") || !sweep["sweeps"].is_array())
        throw std::runtime_error("plot data: report is not a k_sweep");

    std::string csv = "k,mtd,avg_pge,n,m\n";
    for (const auto &entry : sweep["sweeps"]) {
        if (!entry.contains("n") || !entry.contains("m") ||
            !entry.contains("rows"))
            throw std::runtime_error("plot data: malformed sweep entry");
        const std::string n = entry["n"].dump();
        const std::string m = entry["m"].dump();
        for (const auto &row : entry["rows"]) {
            csv += row["k"].dump();
            csv += ',';
            if (row["mtd"].is_null())
                csv += row["mtd_display"].get<std::string>();
            else
                csv += row["mtd"].dump();
            csv += ',';
            csv += row["avg_pge"].dump();
            csv += ',';
            csv += n;
            csv += ',';
            csv += m;
            csv += '\n';
        }
    }
    return csv;
}

void write_report(const Json &report, const std::string &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open " + path + " for writing");
    out << report.dump(2) << '\n';
    if (!out)
        throw std::runtime_error("failed writing " + path);
}

} // namespace voltscope
