#include "voltscope/experiment.hpp"

#include "voltscope/aes_model.hpp"
#include "voltscope/align.hpp"
#include "voltscope/synth.hpp"
#include "voltscope/trace_io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <utility>

namespace fs = std::filesystem;

namespace voltscope {

StageError::StageError(std::string stage, const std::string &message)
    : std::runtime_error(stage + ": " + message), stage_(std::move(stage)) {}

namespace {

std::uint64_t fnv1a64(const void *data, std::size_t n) {
    const auto *p = static_cast<const unsigned char *>(data);
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(v));
    return buf;
}

// Collects every artifact written under out_dir so the manifest can list
// them all with checksums.
class ArtifactLog {
  public:
    explicit ArtifactLog(fs::path dir) : dir_(std::move(dir)) {}

    void add_text(const std::string &name, const std::string &content) {
        std::ofstream out(dir_ / name, std::ios::binary);
        if (!out)
            throw StageError("io", "cannot open " + name + " for writing");
        out << content;
        if (!out)
            throw StageError("io", "failed writing " + name);
        records_.push_back(
            {name, content.size(), fnv1a64(content.data(), content.size())});
    }

    // For files emitted by other writers, e.g. trace containers.
    void record_existing(const std::string &name) {
        std::ifstream in(dir_ / name, std::ios::binary);
        if (!in)
            throw StageError("io", "cannot read back " + name);
        std::string content((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
        records_.push_back(
            {name, content.size(), fnv1a64(content.data(), content.size())});
    }

    fs::path path_of(const std::string &name) const { return dir_ / name; }

    Json entries() const {
        auto sorted = records_;
        std::sort(sorted.begin(), sorted.end(),
                  [](const Record &a, const Record &b) {
                      return a.file < b.file;
                  });
        Json arr = Json::array();
        for (const auto &r : sorted) {
            Json e;
            e["file"] = r.file;
            e["bytes"] = r.bytes;
            e["fnv1a"] = hex64(r.hash);
            arr.push_back(std::move(e));
        }
        return arr;
    }

  private:
    struct Record {
        std::string file;
        std::uint64_t bytes;
        std::uint64_t hash;
    };

    fs::path dir_;
    std::vector<Record> records_;
};

const Json &need(const Json &j, const char *field) {
    if (!j.contains(field))
        throw StageError("config", std::string("missing field: ") + field);
    return j.at(field);
}

LeakModel model_from(const Json &j) {
    const std::string name = j.value("model", "hw");
    if (name == "hw")
        return LeakModel::HammingWeight;
    if (name == "hd")
        return LeakModel::HammingDistance;
    throw StageError("config", "unknown leak model: " + name);
}

SynthPlan plan_from_json(const Json &j, std::uint64_t seed) {
    SynthPlan plan;
    const int islands = j.value("islands", 1);
    const int supplies = j.value("supplies", islands);
    const auto levels = j.value("levels", std::vector<double>{1.0});
    try {
        plan.island_config =
            IslandConfig::make(islands, supplies, levels,
                               j.value("alpha", 2.0),
                               j.value("v_threshold", 0.3));
    } catch (const std::exception &e) {
        throw StageError("config", e.what());
    }
    plan.n_traces = j.value("traces", std::uint64_t{0});
    plan.rng_seed = seed;
    if (j.contains("key"))
        plan.signal_key = parse_hex_block(j.at("key").get<std::string>());
    plan.pulse.pulse_width = j.value("pulse_width", std::uint64_t{32});
    const std::string shape = j.value("pulse_shape", "half_sine");
    if (shape == "half_sine")
        plan.pulse.pulse_shape = PulseShape::HalfSine;
    else if (shape == "rectangular")
        plan.pulse.pulse_shape = PulseShape::Rectangular;
    else
        throw StageError("config", "unknown pulse shape: " + shape);
    plan.pulse.baseline = j.value("baseline", 0.0);
    plan.pulse.noise_sigma = j.value("noise_sigma", 0.0);
    plan.scale_time = j.value("scale_time", true);
    plan.pinned_voltages = j.value("pinned_voltages", std::vector<double>{});
    try {
        plan.validate();
    } catch (const std::exception &e) {
        throw StageError("config", e.what());
    }
    return plan;
}

std::optional<Block16> key_from(const Json &j) {
    if (!j.contains("key"))
        return std::nullopt;
    try {
        return parse_hex_block(j.at("key").get<std::string>());
    } catch (const std::exception &e) {
        throw StageError("config", e.what());
    }
}

std::optional<std::vector<std::size_t>> schedule_from(const Json &j,
                                                      std::size_t n_traces) {
    if (j.contains("mtd_schedule"))
        return j.at("mtd_schedule").get<std::vector<std::size_t>>();
    if (j.value("mtd", false))
        return default_mtd_schedule(n_traces);
    return std::nullopt;
}

std::vector<AttackResult> run_cpa_all_bytes(const TraceSet &set,
                                            LeakModel model,
                                            const std::optional<Block16> &key) {
    std::vector<AttackResult> out;
    out.reserve(16);
    for (int b = 0; b < 16; ++b)
        out.push_back(cpa_attack(set, b, model, key));
    return out;
}

void run_attack_kind(const ExperimentConfig &cfg, ArtifactLog &log) {
    const Json &raw = cfg.raw;
    const Json outputs = raw.value("outputs", Json::object());
    const bool want_snr =
        raw.contains("metrics") && raw.at("metrics").value("snr", false);

    TraceSet set;
    ComposeParts parts;
    std::optional<SynthPlan> plan;
    if (raw.contains("input")) {
        if (want_snr)
            throw StageError("config",
                             "snr metric requires synthesized traces");
        const std::string in = raw.at("input").get<std::string>();
        if (!fs::exists(in))
            throw StageError("config", "input file not found: " + in);
        try {
            set = read_trace_file(in);
        } catch (const std::exception &e) {
            throw StageError("io", e.what());
        }
    } else {
        plan = plan_from_json(need(raw, "synth"), cfg.seed);
        try {
            set = synth_pipeline(*plan, want_snr ? &parts : nullptr);
        } catch (const std::exception &e) {
            throw StageError("synth", e.what());
        }
    }

    if (outputs.contains("traces")) {
        const std::string name = outputs.at("traces").get<std::string>();
        try {
            write_trace_file(set, log.path_of(name).string());
        } catch (const std::exception &e) {
            throw StageError("io", e.what());
        }
        log.record_existing(name);
    }

    // The signal decomposition is only meaningful on the composed set, so
    // the SNR metric runs before any ROI cropping.
    if (want_snr) {
        try {
            const auto &ic = plan->island_config;
            const auto va = va_moments(ic.voltage_levels, ic.alpha);
            double mu_T = 0.0, s2_T = 0.0;
            model_power_moments(mu_T, s2_T);
            const double emp = snr_empirical(set, parts);
            Json rep;
            if (ic.n_islands >= 2) {
                SnrParams p;
                p.n = ic.n_islands;
                p.m = ic.n_supplies;
                p.sigma2_T = s2_T;
                p.mu_T = mu_T;
                p.sigma2_va = va.sigma2;
                p.mu_va = va.mu;
                rep = snr_report(p, snr_analytic(p), emp);
            } else {
                rep["schema_version"] = kReportSchemaVersion;
                rep["kind"] = "snr";
                rep["single_island_dvs"] =
                    snr_single_island_dvs(va.mu, va.sigma2, mu_T, s2_T);
                rep["empirical"] = emp;
            }
            log.add_text(outputs.value("snr", "snr.json"),
                         rep.dump(2) + "\n");
        } catch (const StageError &) {
            throw;
        } catch (const std::exception &e) {
            throw StageError("metrics", e.what());
        }
    }

    TraceSet roi = set;
    const std::size_t window = raw.value("roi_window", std::uint64_t{0});
    if (window > 0) {
        try {
            roi = extract_roi(set, window);
        } catch (const std::exception &e) {
            throw StageError("synth", e.what());
        }
    }

    const Json &attack = need(raw, "attack");
    const std::string type = need(attack, "type").get<std::string>();
    const LeakModel model = model_from(attack);
    const std::optional<Block16> key = key_from(attack);
    const std::string report_name = outputs.value("report", "report.json");

    if (type == "cpa") {
        const auto schedule = schedule_from(attack, roi.size());
        if (schedule && !key)
            throw StageError("config", "mtd requires a known key");
        std::vector<AttackResult> bytes;
        std::optional<MtdReport> mtd;
        try {
            bytes = run_cpa_all_bytes(roi, model, key);
            if (schedule)
                mtd = compute_mtd(roi, model, *key, *schedule);
        } catch (const std::exception &e) {
            throw StageError("attack", e.what());
        }
        log.add_text(report_name, cpa_report(bytes, mtd).dump(2) + "\n");
    } else if (type == "cluster") {
        const auto schedule = schedule_from(attack, roi.size());
        if (attack.contains("k_values")) {
            if (!key)
                throw StageError("config", "a k sweep requires a known key");
            const auto ks = attack.at("k_values").get<std::vector<int>>();
            std::vector<SweepRow> rows;
            try {
                rows = sweep_k(roi, ks, model, *key, cfg.seed, schedule);
            } catch (const std::exception &e) {
                throw StageError("attack", e.what());
            }
            const Json rep = sweep_report({sweep_entry(rows, roi.config())});
            log.add_text(report_name, rep.dump(2) + "\n");
            if (outputs.contains("plot"))
                log.add_text(outputs.at("plot").get<std::string>(),
                             emit_plot_data(rep));
        } else {
            const int k = need(attack, "k").get<int>();
            FusedAttackResult res;
            try {
                res = cluster_attack(roi, k, model, key, cfg.seed, schedule);
            } catch (const std::exception &e) {
                throw StageError("attack", e.what());
            }
            log.add_text(report_name, cluster_report(res).dump(2) + "\n");
        }
    } else {
        throw StageError("config", "unknown attack type: " + type);
    }
}

void run_sweep_kind(const ExperimentConfig &cfg, ArtifactLog &log) {
    const Json &raw = cfg.raw;
    const Json outputs = raw.value("outputs", Json::object());
    const Json &configs = need(raw, "configs");
    if (!configs.is_array() || configs.empty())
        throw StageError("config", "configs must be a non-empty array");
    const auto k_values = need(raw, "k_values").get<std::vector<int>>();
    const Block16 key = parse_hex_block(need(raw, "key").get<std::string>());
    const LeakModel model = model_from(raw);
    std::optional<std::vector<std::size_t>> schedule;
    if (raw.contains("mtd_schedule"))
        schedule = raw.at("mtd_schedule").get<std::vector<std::size_t>>();
    const std::size_t window = raw.value("roi_window", std::uint64_t{0});

    std::vector<Json> entries;
    std::uint64_t index = 0;
    for (const auto &c : configs) {
        Json merged = raw;
        merged.update(c);
        const SynthPlan plan = plan_from_json(merged, cfg.seed + index);
        TraceSet set;
        try {
            set = synth_pipeline(plan);
            if (window > 0)
                set = extract_roi(set, window);
        } catch (const std::exception &e) {
            throw StageError("synth", e.what());
        }
        std::vector<SweepRow> rows;
        try {
            rows = sweep_k(set, k_values, model, key, cfg.seed + index,
                           schedule);
        } catch (const std::exception &e) {
            throw StageError("attack", e.what());
        }
        entries.push_back(sweep_entry(rows, plan.island_config));
        ++index;
    }

    const Json rep = sweep_report(entries);
    log.add_text(outputs.value("report", "report.json"), rep.dump(2) + "\n");
    if (outputs.contains("plot"))
        log.add_text(outputs.at("plot").get<std::string>(),
                     emit_plot_data(rep));
}

void run_tvla_kind(const ExperimentConfig &cfg, ArtifactLog &log) {
    const Json &raw = cfg.raw;
    const Json outputs = raw.value("outputs", Json::object());
    const double threshold = raw.value("threshold", 4.5);
    const Block16 fixed_pt =
        parse_hex_block(need(raw, "fixed_plaintext").get<std::string>());
    const int batch_size = raw.value("batch_size", 32);
    const auto batches = need(raw, "batches_per_class").get<std::uint64_t>();
    const Json &variants = need(raw, "variants");
    if (!variants.is_array() || variants.empty())
        throw StageError("config", "variants must be a non-empty array");

    Json out_variants = Json::array();
    std::uint64_t index = 0;
    for (const auto &v : variants) {
        const std::string name = need(v, "name").get<std::string>();
        Json merged = raw;
        merged.update(v);
        merged["traces"] = batches;
        const SynthPlan plan = plan_from_json(merged, cfg.seed + index);
        std::pair<TraceSet, TraceSet> classes;
        try {
            classes = make_tvla_batches(plan, fixed_pt, batch_size);
        } catch (const std::exception &e) {
            throw StageError("synth", e.what());
        }
        for (const auto &[suffix, cls] :
             {std::pair<const char *, const TraceSet *>{"_fixed.itrc",
                                                        &classes.first},
              {"_random.itrc", &classes.second}}) {
            const std::string file = name + suffix;
            try {
                write_trace_file(*cls, log.path_of(file).string());
            } catch (const std::exception &e) {
                throw StageError("io", e.what());
            }
            log.record_existing(file);
        }
        TvlaReport result;
        try {
            result = tvla_fixed_vs_random(classes.first, classes.second,
                                          threshold, cfg.seed + index);
        } catch (const std::exception &e) {
            throw StageError("metrics", e.what());
        }
        Json entry;
        entry["name"] = name;
        entry["result"] = tvla_report(result);
        out_variants.push_back(std::move(entry));
        ++index;
    }

    Json rep;
    rep["schema_version"] = kReportSchemaVersion;
    rep["kind"] = "tvla_suite";
    rep["variants"] = std::move(out_variants);
    log.add_text(outputs.value("report", "report.json"), rep.dump(2) + "\n");
}

void run_align_kind(const ExperimentConfig &cfg, ArtifactLog &log) {
    const Json &raw = cfg.raw;
    const Json outputs = raw.value("outputs", Json::object());
    const SynthPlan plan = plan_from_json(raw, cfg.seed);
    if (!raw.contains("key"))
        throw StageError("config", "missing field: key");
    const std::size_t window = raw.value("roi_window", std::uint64_t{0});
    const LeakModel model = model_from(raw);
    std::optional<int> radius;
    if (raw.contains("radius") && !raw.at("radius").is_null())
        radius = raw.at("radius").get<int>();

    TraceSet set;
    try {
        set = synth_pipeline(plan);
    } catch (const std::exception &e) {
        throw StageError("synth", e.what());
    }

    const auto attack_avg = [&](const TraceSet &s) {
        const TraceSet roi = window > 0 ? extract_roi(s, window) : s;
        return avg_pge(run_cpa_all_bytes(roi, model, plan.signal_key));
    };

    double before = 0.0, after = 0.0;
    try {
        before = attack_avg(set);
    } catch (const std::exception &e) {
        throw StageError("attack", e.what());
    }
    TraceSet aligned;
    try {
        aligned = align_set(set, 0, radius);
    } catch (const std::exception &e) {
        throw StageError("align", e.what());
    }
    try {
        after = attack_avg(aligned);
    } catch (const std::exception &e) {
        throw StageError("attack", e.what());
    }

    Json rep;
    rep["schema_version"] = kReportSchemaVersion;
    rep["kind"] = "align_study";
    if (radius)
        rep["radius"] = *radius;
    else
        rep["radius"] = nullptr;
    rep["avg_pge_before"] = before;
    rep["avg_pge_after"] = after;
    rep["improved"] = after < before;
    log.add_text(outputs.value("report", "report.json"), rep.dump(2) + "\n");
}

} // namespace

ExperimentConfig ExperimentConfig::from_json(const Json &config) {
    if (!config.is_object())
        throw StageError("config", "config root must be an object");
    if (config.value("schema_version", 1) != kReportSchemaVersion)
        throw StageError("config", "unsupported config schema_version");
    ExperimentConfig out;
    out.kind = need(config, "kind").get<std::string>();
    if (out.kind != "attack" && out.kind != "sweep" && out.kind != "tvla" &&
        out.kind != "align")
        throw StageError("config", "unknown experiment kind: " + out.kind);
    if (!config.contains("seed"))
        throw StageError("config", "seed is mandatory");
    out.seed = config.at("seed").get<std::uint64_t>();
    out.out_dir = config.value("out_dir", ".");
    out.raw = config;
    return out;
}

ExperimentConfig ExperimentConfig::load(const std::string &path) {
    if (!fs::exists(path))
        throw StageError("config", "config file not found: " + path);
    std::ifstream in(path);
    if (!in)
        throw StageError("config", "cannot read " + path);
    Json parsed;
    try {
        parsed = Json::parse(in);
    } catch (const std::exception &e) {
        throw StageError("config", e.what());
    }
    return from_json(parsed);
}

Json preset_config(const std::string &name) {
    // Trace counts here are sized so each preset finishes in minutes on one
    // core; pass a config file instead to run at publication scale.
    if (name == "figure2")
        return Json::parse(R"({
  "schema_version": 1,
  "kind": "sweep",
  "seed": 20001,
  "out_dir": "figure2_out",
  "levels": [0.6, 0.7, 0.8, 0.9, 1.0],
  "traces": 6000,
  "noise_sigma": 0.0,
  "roi_window": 64,
  "key": "000102030405060708090a0b0c0d0e0f",
  "configs": [
    {"islands": 1, "supplies": 1},
    {"islands": 2, "supplies": 2},
    {"islands": 3, "supplies": 3},
    {"islands": 4, "supplies": 4}
  ],
  "k_values": [1, 5, 15, 35, 70],
  "mtd_schedule": [1000, 2000, 4000, 6000],
  "outputs": {"report": "ksweep.json", "plot": "ksweep.csv"}
})");
    // The fixed plaintext below drives every S-box output to 0xff under the
    // preset key, putting the fixed class as far as possible from the random
    // class mean so the unprotected variant has a detectable difference.
    if (name == "table1-sim")
        return Json::parse(R"({
  "schema_version": 1,
  "kind": "tvla",
  "seed": 30001,
  "out_dir": "table1_out",
  "threshold": 4.5,
  "fixed_plaintext": "72737071767774757a7b78797e7f7c7d",
  "batch_size": 32,
  "batches_per_class": 64,
  "pulse_width": 96,
  "noise_sigma": 0.25,
  "key": "0f0e0d0c0b0a09080706050403020100",
  "variants": [
    {"name": "constant_voltage", "islands": 4, "supplies": 4, "levels": [0.8]},
    {"name": "irdvs_4supply", "islands": 4, "supplies": 4,
     "levels": [0.6, 0.7, 0.8]}
  ],
  "outputs": {"report": "tvla.json"}
})");
    if (name == "elastic-negative")
        return Json::parse(R"({
  "schema_version": 1,
  "kind": "align",
  "seed": 40001,
  "out_dir": "elastic_out",
  "islands": 2,
  "supplies": 2,
  "levels": [0.6, 0.7, 0.8, 0.9, 1.0],
  "traces": 3000,
  "noise_sigma": 8.0,
  "roi_window": 64,
  "key": "000102030405060708090a0b0c0d0e0f",
  "radius": 8,
  "outputs": {"report": "align.json"}
})");
    throw std::invalid_argument("unknown preset: " + name);
}

void run_experiment(const ExperimentConfig &config) {
    std::error_code ec;
    fs::create_directories(config.out_dir, ec);
    if (ec)
        throw StageError("io", "cannot create " + config.out_dir);

    ArtifactLog log{fs::path(config.out_dir)};
    if (config.kind == "attack")
        run_attack_kind(config, log);
    else if (config.kind == "sweep")
        run_sweep_kind(config, log);
    else if (config.kind == "tvla")
        run_tvla_kind(config, log);
    else if (config.kind == "align")
        run_align_kind(config, log);
    else
        throw StageError("config", "unknown experiment kind: " + config.kind);

    // Canonical hash: key order must not depend on how the config was
    // written, so hash the sorted-key serialization.
    const std::string canonical =
        nlohmann::json::parse(config.raw.dump()).dump();
    Json manifest;
    manifest["schema_version"] = kReportSchemaVersion;
    manifest["kind"] = config.kind;
    manifest["seed"] = config.seed;
    manifest["config_hash"] =
        hex64(fnv1a64(canonical.data(), canonical.size()));
    manifest["artifacts"] = log.entries();

    std::ofstream out(fs::path(config.out_dir) / "manifest.json",
                      std::ios::binary);
    if (!out)
        throw StageError("io", "cannot write manifest.json");
    out << manifest.dump(2) << '\n';
    if (!out)
        throw StageError("io", "failed writing manifest.json");
}

} // namespace voltscope
