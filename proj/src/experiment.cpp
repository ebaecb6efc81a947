// Copyright (c) 2026, The mmcl Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmcl/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace mmcl {

using nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were read so that unknown
// keys can be reported.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* get(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end() || it->is_null()) return nullptr;
        return &*it;
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        const json* v = get(key);
        if (!v) return;
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v->is_boolean()) throw ConfigError(field(key), "expected true or false");
                out = v->get<bool>();
            } else if constexpr (std::is_integral_v<T>) {
                if (!v->is_number_integer() || (std::is_unsigned_v<T> && v->get<long long>() < 0)) {
                    throw ConfigError(field(key), "expected a nonnegative integer");
                }
                out = v->get<T>();
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v->is_number()) throw ConfigError(field(key), "expected a number");
                out = v->get<T>();
            } else {
                if (!v->is_string()) throw ConfigError(field(key), "expected a string");
                out = v->get<T>();
            }
        } catch (const json::exception& e) {
            throw ConfigError(field(key), e.what());
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError(field(it.key()), "unknown key");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

double read_snr(const json& v, const std::string& field) {
    if (v.is_string() && (v.get<std::string>() == "inf" || v.get<std::string>() == "infinity")) {
        return std::numeric_limits<double>::infinity();
    }
    if (!v.is_number()) throw ConfigError(field, "expected a number or \"inf\"");
    return v.get<double>();
}

std::vector<std::size_t> read_widths(const json& v, const std::string& field) {
    if (!v.is_array()) throw ConfigError(field, "expected a list of widths");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number_integer() || v[i].get<long long>() <= 0) {
            throw ConfigError(field + "[" + std::to_string(i) + "]", "expected a positive integer");
        }
        out.push_back(v[i].get<std::size_t>());
    }
    return out;
}

int read_sign(ObjectReader& r, const std::string& key, int fallback) {
    int s = fallback;
    if (const json* v = r.get(key)) {
        if (!v->is_number_integer() || (v->get<int>() != 1 && v->get<int>() != -1)) {
            throw ConfigError(r.field(key), "orientation must be 1 or -1");
        }
        s = v->get<int>();
    }
    return s;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::string json_cell(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

}  // namespace

ConfigError::ConfigError(std::string field, const std::string& message)
    : std::runtime_error(field + ": " + message), field_(std::move(field)) {}

void RunConfig::validate() const {
    if (dataset_path.empty()) {
        try {
            dataset.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError("dataset", e.what());
        }
        if (encoder_hidden.size() != dataset.modalities.size()) {
            throw ConfigError("encoders.hidden", "expected hidden widths for " +
                                                     std::to_string(dataset.modalities.size()) + " modalities");
        }
    }
    if (epochs == 0) throw ConfigError("epochs", "must be positive");
    if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr", "must be finite and nonnegative");
    const auto& c = curriculum;
    if (!(c.gamma >= 0.0 && c.gamma < 1.0)) throw ConfigError("curriculum.gamma", "must be in [0, 1)");
    if (!(c.gate_threshold > 0.0 && c.gate_threshold < 1.0)) {
        throw ConfigError("curriculum.gate_threshold", "must be in (0, 1)");
    }
    if (!(c.mu > 0.0) || !std::isfinite(c.mu)) throw ConfigError("curriculum.mu", "must be positive");
    if (c.sdc_enabled && !(c.metrics_enabled[0] || c.metrics_enabled[1] || c.metrics_enabled[2])) {
        throw ConfigError("curriculum.metrics_enabled", "at least one metric must be enabled when sdc is on");
    }
    if (c.mdc_enabled && !(c.gmr_enabled || c.hmir_enabled)) {
        throw ConfigError("curriculum.measures_enabled", "at least one measure must be enabled when mdc is on");
    }
    if (schedule.eta0 < 0.0 || !std::isfinite(schedule.eta0)) {
        throw ConfigError("schedule.eta0", "must be positive (or omitted for automatic)");
    }
    if (!(schedule.growth > 0.0) || !std::isfinite(schedule.growth)) {
        throw ConfigError("schedule.growth", "must be positive");
    }
}

RunConfig parse_config(const json& j) {
    RunConfig cfg;
    ObjectReader root(j, "");

    if (const json* d = root.get("dataset")) {
        ObjectReader r(*d, "dataset");
        r.read("path", cfg.dataset_path);
        r.read("n_samples", cfg.dataset.n_samples);
        r.read("n_classes", cfg.dataset.n_classes);
        r.read("sample_noise_spread", cfg.dataset.sample_noise_spread);
        if (const json* s = r.get("seed")) {
            if (!s->is_number_integer() || s->get<long long>() < 0) {
                throw ConfigError("dataset.seed", "expected a nonnegative integer");
            }
            cfg.dataset_seed = s->get<std::uint64_t>();
        }
        if (const json* mods = r.get("modalities")) {
            if (!mods->is_array() || mods->empty()) throw ConfigError("dataset.modalities", "expected a nonempty list");
            for (std::size_t m = 0; m < mods->size(); ++m) {
                const std::string path = "dataset.modalities[" + std::to_string(m) + "]";
                ObjectReader mr((*mods)[m], path);
                ModalitySpec spec;
                mr.read("feature_dim", spec.feature_dim);
                if (const json* snr = mr.get("snr")) spec.snr = read_snr(*snr, path + ".snr");
                mr.read("informative_fraction", spec.informative_fraction);
                mr.finish();
                cfg.dataset.modalities.push_back(spec);
            }
        }
        r.finish();
    }
    if (cfg.dataset.modalities.empty() && cfg.dataset_path.empty()) {
        cfg.dataset.modalities = {ModalitySpec{16, 1.0, 0.5}, ModalitySpec{16, 0.25, 0.5}};
    }

    std::vector<std::size_t> shared_hidden{32};
    bool per_modality = false;
    if (const json* e = root.get("encoders")) {
        ObjectReader r(*e, "encoders");
        std::string act = to_string(cfg.activation);
        r.read("activation", act);
        try {
            cfg.activation = parse_activation(act);
        } catch (const std::invalid_argument& ex) {
            throw ConfigError("encoders.activation", ex.what());
        }
        if (const json* h = r.get("hidden")) {
            if (h->is_array() && !h->empty() && h->front().is_array()) {
                per_modality = true;
                for (std::size_t m = 0; m < h->size(); ++m) {
                    cfg.encoder_hidden.push_back(read_widths((*h)[m], "encoders.hidden[" + std::to_string(m) + "]"));
                }
            } else {
                shared_hidden = read_widths(*h, "encoders.hidden");
            }
        }
        r.finish();
    }
    if (!per_modality) {
        cfg.encoder_hidden.assign(cfg.dataset_path.empty() ? cfg.dataset.modalities.size() : 0, shared_hidden);
        if (!cfg.dataset_path.empty()) cfg.encoder_hidden = {shared_hidden};  // expanded once the file is read
    }

    if (const json* f = root.get("fusion")) {
        ObjectReader r(*f, "fusion");
        std::string kind = to_string(cfg.fusion.kind);
        r.read("kind", kind);
        try {
            cfg.fusion.kind = parse_fusion_kind(kind);
        } catch (const std::invalid_argument& ex) {
            throw ConfigError("fusion.kind", ex.what());
        }
        r.read("renormalize", cfg.fusion.renormalize);
        if (const json* h = r.get("head_hidden")) cfg.fusion.head_hidden = read_widths(*h, "fusion.head_hidden");
        r.finish();
    }

    if (const json* c = root.get("curriculum")) {
        ObjectReader r(*c, "curriculum");
        auto& cur = cfg.curriculum;
        r.read("sdc_enabled", cur.sdc_enabled);
        r.read("mdc_enabled", cur.mdc_enabled);
        r.read("self_paced_enabled", cur.self_paced_enabled);
        r.read("gating_enabled", cur.gating_enabled);
        r.read("gamma", cur.gamma);
        r.read("gate_threshold", cur.gate_threshold);
        r.read("mu", cur.mu);
        if (const json* m = r.get("metrics_enabled")) {
            ObjectReader mr(*m, "curriculum.metrics_enabled");
            mr.read("loss", cur.metrics_enabled[kLossMetric]);
            mr.read("consistency", cur.metrics_enabled[kConsistencyMetric]);
            mr.read("stability", cur.metrics_enabled[kStabilityMetric]);
            mr.finish();
        }
        if (const json* m = r.get("measures_enabled")) {
            ObjectReader mr(*m, "curriculum.measures_enabled");
            mr.read("gmr", cur.gmr_enabled);
            mr.read("hmir", cur.hmir_enabled);
            mr.finish();
        }
        if (const json* o = r.get("orientation")) {
            ObjectReader orr(*o, "curriculum.orientation");
            cur.orientation.s_loss = read_sign(orr, "loss", cur.orientation.s_loss);
            cur.orientation.s_consistency = read_sign(orr, "consistency", cur.orientation.s_consistency);
            cur.orientation.s_stability = read_sign(orr, "stability", cur.orientation.s_stability);
            orr.finish();
        }
        r.finish();
    }

    if (const json* s = root.get("schedule")) {
        ObjectReader r(*s, "schedule");
        std::string kind = to_string(cfg.schedule.kind);
        r.read("kind", kind);
        try {
            cfg.schedule.kind = parse_eta_kind(kind);
        } catch (const std::invalid_argument& ex) {
            throw ConfigError("schedule.kind", ex.what());
        }
        if (const json* e = r.get("eta0")) {
            if (e->is_string() && e->get<std::string>() == "auto") {
                cfg.schedule.eta0 = 0.0;
            } else if (e->is_number() && e->get<double>() > 0.0) {
                cfg.schedule.eta0 = e->get<double>();
            } else {
                throw ConfigError("schedule.eta0", "expected a positive number or \"auto\"");
            }
        }
        r.read("growth", cfg.schedule.growth);
        r.finish();
    }

    root.read("epochs", cfg.epochs);
    root.read("batch_size", cfg.batch_size);
    root.read("lr", cfg.lr);
    root.read("seed", cfg.seed);
    root.finish();

    cfg.fusion.threshold = cfg.curriculum.gate_threshold;
    cfg.fusion.mu = cfg.curriculum.mu;
    cfg.dataset.seed = cfg.dataset_seed.value_or(cfg.seed);
    cfg.validate();
    return cfg;
}

json to_json(const RunConfig& c) {
    json j;
    json mods = json::array();
    for (const auto& m : c.dataset.modalities) {
        json mj{{"feature_dim", m.feature_dim}, {"informative_fraction", m.informative_fraction}};
        if (std::isinf(m.snr)) {
            mj["snr"] = "inf";
        } else {
            mj["snr"] = m.snr;
        }
        mods.push_back(mj);
    }
    j["dataset"] = {{"n_samples", c.dataset.n_samples},
                    {"n_classes", c.dataset.n_classes},
                    {"sample_noise_spread", c.dataset.sample_noise_spread},
                    {"seed", c.dataset.seed},
                    {"modalities", mods}};
    if (!c.dataset_path.empty()) j["dataset"]["path"] = c.dataset_path;
    j["encoders"] = {{"activation", to_string(c.activation)}, {"hidden", c.encoder_hidden}};
    j["fusion"] = {{"kind", to_string(c.fusion.kind)},
                   {"renormalize", c.fusion.renormalize},
                   {"head_hidden", c.fusion.head_hidden}};
    const auto& cur = c.curriculum;
    j["curriculum"] = {
        {"sdc_enabled", cur.sdc_enabled},
        {"mdc_enabled", cur.mdc_enabled},
        {"self_paced_enabled", cur.self_paced_enabled},
        {"metrics_enabled",
         {{"loss", cur.metrics_enabled[kLossMetric]},
          {"consistency", cur.metrics_enabled[kConsistencyMetric]},
          {"stability", cur.metrics_enabled[kStabilityMetric]}}},
        {"measures_enabled", {{"gmr", cur.gmr_enabled}, {"hmir", cur.hmir_enabled}}},
        {"gating_enabled", cur.gating_enabled},
        {"gamma", cur.gamma},
        {"gate_threshold", cur.gate_threshold},
        {"mu", cur.mu},
        {"orientation",
         {{"loss", cur.orientation.s_loss},
          {"consistency", cur.orientation.s_consistency},
          {"stability", cur.orientation.s_stability}}}};
    j["schedule"] = {{"kind", to_string(c.schedule.kind)}, {"growth", c.schedule.growth}};
    if (c.schedule.eta0 > 0.0) {
        j["schedule"]["eta0"] = c.schedule.eta0;
    } else {
        j["schedule"]["eta0"] = "auto";
    }
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["lr"] = c.lr;
    j["seed"] = c.seed;
    return j;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("<file>", e.what());
    }
    return parse_config(j);
}

RunResult execute(const RunConfig& input) {
    const auto t0 = std::chrono::steady_clock::now();
    RunResult result;
    result.config = input;
    RunConfig& cfg = result.config;
    cfg.validate();

    Dataset data;
    if (!cfg.dataset_path.empty()) {
        try {
            data = load_dataset(cfg.dataset_path);
        } catch (const std::exception& e) {
            throw ConfigError("dataset.path", e.what());
        }
        cfg.dataset.n_samples = data.samples.size();
        cfg.dataset.n_classes = data.n_classes;
        cfg.dataset.modalities.clear();
        for (std::size_t d : data.feature_dims) cfg.dataset.modalities.push_back({d, 0.0, 0.0});
        if (cfg.encoder_hidden.size() == 1 && data.num_modalities() > 1) {
            cfg.encoder_hidden.assign(data.num_modalities(), cfg.encoder_hidden.front());
        }
        if (cfg.encoder_hidden.size() != data.num_modalities()) {
            throw ConfigError("encoders.hidden", "expected hidden widths for " +
                                                     std::to_string(data.num_modalities()) + " modalities");
        }
    } else {
        data = generate(cfg.dataset);
    }

    std::vector<std::vector<std::size_t>> dims;
    for (std::size_t m = 0; m < data.num_modalities(); ++m) {
        std::vector<std::size_t> d{data.feature_dims[m]};
        d.insert(d.end(), cfg.encoder_hidden[m].begin(), cfg.encoder_hidden[m].end());
        d.push_back(data.n_classes);
        dims.push_back(std::move(d));
    }

    TrainOptions opts;
    opts.curriculum = cfg.curriculum;
    opts.fusion = cfg.fusion;
    opts.batch_size = cfg.batch_size;
    opts.lr = cfg.lr;
    opts.seed = cfg.seed;

    const Split split = split_indices(data.samples.size(), cfg.seed);
    TrainState state(MultimodalModel::create(dims, cfg.activation, cfg.fusion, cfg.seed), cfg.curriculum.gamma,
                     cfg.schedule);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        result.records.push_back(train_epoch(state, data, split.train, opts, epoch));
    }
    result.difficulty = state.last_epoch;
    result.final_train_accuracy = evaluate_accuracy(state.model, data, split.train);
    result.final_test_accuracy = evaluate_accuracy(state.model, data, split.test);
    result.final_mean_gmr = result.records.back().mean_gmr;
    result.resolved_eta0 = state.schedule.eta0;
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

std::string records_csv(const RunResult& result) {
    std::ostringstream out;
    const std::size_t n_mod = result.config.dataset.modalities.size();
    out << "epoch,mean_loss,accuracy,mean_v,mean_d_task,mean_d_fuse,psi_loss,psi_consistency,psi_stability";
    for (std::size_t m = 0; m < n_mod; ++m) out << ",gate_" << m << ",gain_" << m << ",omega_" << m;
    out << ",modality_alignment\n";
    for (const auto& r : result.records) {
        out << r.epoch << ',' << fmt(r.mean_loss) << ',' << fmt(r.accuracy) << ',' << fmt(r.mean_v) << ','
            << fmt(r.mean_d_task) << ',' << fmt(r.mean_d_fuse) << ',' << fmt(r.psi[0]) << ',' << fmt(r.psi[1])
            << ',' << fmt(r.psi[2]);
        for (std::size_t m = 0; m < n_mod; ++m) {
            out << ',' << fmt(r.gates[m]) << ',' << fmt(r.gains[m]) << ',' << fmt(r.omegas[m]);
        }
        out << ',' << fmt(r.modality_alignment) << '\n';
    }
    return out.str();
}

std::string difficulty_csv(const RunResult& result) {
    std::ostringstream out;
    out << "sample_id,true_difficulty,d_task,d_fuse,v\n";
    for (const auto& s : result.difficulty) {
        out << s.sample_id << ',' << fmt(s.true_difficulty) << ',' << fmt(s.d_task) << ',' << fmt(s.d_fuse) << ','
            << fmt(s.v) << '\n';
    }
    return out.str();
}

json summary_json(const RunResult& result) {
    json config = to_json(result.config);
    config["schedule"]["eta0_resolved"] = result.resolved_eta0;
    return json{{"config", config},
                {"final_train_accuracy", result.final_train_accuracy},
                {"final_test_accuracy", result.final_test_accuracy},
                {"epochs_run", result.records.size()},
                {"seed", result.config.seed},
                {"wall_seconds", result.wall_seconds},
                {"final_mean_gmr", result.final_mean_gmr},
                {"final_mean_inverse_gmr", result.final_mean_gmr > 0.0 ? 1.0 / result.final_mean_gmr : 0.0}};
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << contents;
        if (!out) throw std::runtime_error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_run(const RunResult& result, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "records.csv", records_csv(result));
    write_file_atomic(dir / "difficulty.csv", difficulty_csv(result));
    write_file_atomic(dir / "summary.json", summary_json(result).dump(2) + "\n");
}

std::vector<AblationAxis> parse_grid(const std::string& grid) {
    std::vector<AblationAxis> axes;
    std::stringstream ss(grid);
    std::string part;
    while (std::getline(ss, part, ';')) {
        if (part.find_first_not_of(" \t") == std::string::npos) continue;
        const auto eq = part.find('=');
        if (eq == std::string::npos) throw ConfigError("grid", "axis '" + part + "' needs field=values");
        AblationAxis axis;
        axis.field = part.substr(0, eq);
        axis.field.erase(0, axis.field.find_first_not_of(" \t"));
        axis.field.erase(axis.field.find_last_not_of(" \t") + 1);
        std::stringstream vs(part.substr(eq + 1));
        std::string v;
        while (std::getline(vs, v, ',')) {
            v.erase(0, v.find_first_not_of(" \t"));
            v.erase(v.find_last_not_of(" \t") + 1);
            if (v.empty()) continue;
            try {
                axis.values.push_back(json::parse(v));
            } catch (const json::parse_error&) {
                axis.values.push_back(json(v));
            }
        }
        if (axis.values.empty()) throw ConfigError("grid", "axis '" + axis.field + "' has no values");
        axes.push_back(std::move(axis));
    }
    return axes;
}

json with_override(const json& base, const std::string& field, const json& value) {
    // Validate the path against the fully resolved document so that defaulted
    // keys can be overridden too.
    const json resolved = to_json(parse_config(base));
    json out = base;
    json* node = &out;
    const json* schema = &resolved;
    std::stringstream ss(field);
    std::string key;
    std::vector<std::string> keys;
    while (std::getline(ss, key, '.')) keys.push_back(key);
    if (keys.empty()) throw ConfigError(field, "empty axis name");
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (!schema->is_object() || !schema->contains(keys[i])) throw ConfigError(field, "not a config field");
        schema = &(*schema)[keys[i]];
        if (!node->is_object()) *node = json::object();
        node = &(*node)[keys[i]];
    }
    if (schema->is_object()) throw ConfigError(field, "axis must name a leaf field");
    *node = value;
    return out;
}

std::vector<AblationRow> ablate(const json& base, const std::vector<AblationAxis>& axes) {
    for (const auto& axis : axes) {
        (void)with_override(base, axis.field, axis.values.front());
    }
    std::vector<AblationRow> rows;
    std::vector<std::size_t> idx(axes.size(), 0);
    while (true) {
        json cfg = base;
        AblationRow row;
        for (std::size_t a = 0; a < axes.size(); ++a) {
            cfg = with_override(cfg, axes[a].field, axes[a].values[idx[a]]);
            row.values.push_back(axes[a].values[idx[a]]);
        }
        const RunResult r = execute(parse_config(cfg));
        row.final_train_accuracy = r.final_train_accuracy;
        row.final_test_accuracy = r.final_test_accuracy;
        rows.push_back(std::move(row));

        std::size_t a = axes.size();
        while (a > 0) {
            --a;
            if (++idx[a] < axes[a].values.size()) break;
            idx[a] = 0;
            if (a == 0) return rows;
        }
        if (axes.empty()) return rows;
    }
}

std::string ablation_csv(const std::vector<AblationAxis>& axes, const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    for (const auto& axis : axes) out << axis.field << ',';
    out << "final_train_accuracy,final_test_accuracy\n";
    for (const auto& row : rows) {
        for (const auto& v : row.values) out << json_cell(v) << ',';
        out << fmt(row.final_train_accuracy) << ',' << fmt(row.final_test_accuracy) << '\n';
    }
    return out.str();
}

std::vector<SweepRow> sweep_gamma(const json& base, const std::vector<double>& values) {
    if (values.empty()) throw ConfigError("values", "at least one gamma is required");
    for (double g : values) {
        if (!(g >= 0.0 && g < 1.0)) throw ConfigError("values", "gamma " + fmt(g) + " is outside [0, 1)");
    }
    std::vector<SweepRow> rows;
    for (double g : values) {
        const RunResult r = execute(parse_config(with_override(base, "curriculum.gamma", g)));
        rows.push_back({g, r.final_train_accuracy, r.final_test_accuracy});
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "gamma,final_train_accuracy,final_test_accuracy\n";
    for (const auto& r : rows) out << fmt(r.gamma) << ',' << fmt(r.final_train_accuracy) << ',' << fmt(r.final_test_accuracy) << '\n';
    return out.str();
}

}  // namespace mmcl
