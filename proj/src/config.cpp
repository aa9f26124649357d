#include "was/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "was/errors.hpp"

namespace was::config {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos != std::string::npos) {
        const size_t next = s.find(';', pos);
        const std::string part =
            trim(s.substr(pos, next == std::string::npos ? next : next - pos));
        if (!part.empty()) out.push_back(part);
        pos = next == std::string::npos ? next : next + 1;
    }
    return out;
}

}  // namespace

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        }
        if (kv.count(key)) {
            throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" +
                              key + "'");
        }
        kv[key] = value;
    }
    return kv;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_kv_text(ss.str());
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    return from_kv(parse_kv_file(path));
}

ExperimentConfig ExperimentConfig::from_kv(const std::map<std::string, std::string>& kv) {
    ExperimentConfig cfg;
    std::vector<std::string> errors;
    std::map<std::string, bool> seen;
    for (const auto& [k, v] : kv) seen[k] = false;

    auto has = [&](const std::string& key) { return kv.count(key) > 0; };
    auto raw = [&](const std::string& key) {
        seen[key] = true;
        return kv.at(key);
    };
    auto get_str = [&](const std::string& key, std::string& dst) {
        if (has(key)) dst = raw(key);
    };
    auto get_i64 = [&](const std::string& key, int64_t& dst) {
        if (!has(key)) return;
        const std::string v = raw(key);
        int64_t parsed = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), parsed);
        if (ec != std::errc() || p != v.data() + v.size()) {
            errors.push_back("field '" + key + "': bad integer '" + v + "'");
            return;
        }
        dst = parsed;
    };
    auto get_u64 = [&](const std::string& key, uint64_t& dst) {
        if (!has(key)) return;
        const std::string v = raw(key);
        uint64_t parsed = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), parsed);
        if (ec != std::errc() || p != v.data() + v.size()) {
            errors.push_back("field '" + key + "': bad unsigned integer '" + v + "'");
            return;
        }
        dst = parsed;
    };
    auto get_f64 = [&](const std::string& key, double& dst) {
        if (!has(key)) return;
        const std::string v = raw(key);
        double parsed = 0.0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), parsed);
        if (ec != std::errc() || p != v.data() + v.size()) {
            errors.push_back("field '" + key + "': bad number '" + v + "'");
            return;
        }
        dst = parsed;
    };
    auto get_bool = [&](const std::string& key, bool& dst) {
        if (!has(key)) return;
        const std::string v = raw(key);
        if (v == "true" || v == "1") {
            dst = true;
        } else if (v == "false" || v == "0") {
            dst = false;
        } else {
            errors.push_back("field '" + key + "': expected true/false, got '" + v + "'");
        }
    };

    get_str("experiment.tag", cfg.tag);
    get_str("arch.id", cfg.arch_id);
    for (int64_t i = 0;; ++i) {
        const std::string key = "arch.layer." + std::to_string(i);
        if (!has(key)) break;
        cfg.custom_layers.push_back(raw(key));
    }
    get_str("data.set", cfg.dataset);
    get_str("data.root", cfg.data_root);
    get_i64("data.train_subset", cfg.train_subset);
    get_i64("data.test_subset", cfg.test_subset);
    get_u64("data.subset_seed", cfg.subset_seed);
    get_i64("train.epochs", cfg.epochs);
    get_i64("train.batch_size", cfg.batch_size);
    get_f64("train.lr", cfg.lr);
    get_f64("train.momentum", cfg.momentum);
    get_u64("train.seed", cfg.seed);
    if (has("train.dom_seed")) {
        get_u64("train.dom_seed", cfg.dom_seed);
        cfg.dom_seed_set = true;
    }
    if (has("train.gradient_routing")) {
        const std::string v = raw("train.gradient_routing");
        if (v == "adjoint") {
            cfg.straight_through = false;
        } else if (v == "straight_through") {
            cfg.straight_through = true;
        } else {
            errors.push_back(
                "field 'train.gradient_routing': expected adjoint or straight_through, got '" + v +
                "'");
        }
    }

    const bool has_preset = has("was.preset");
    const bool has_spec = has("was.spec");
    if (has_preset && has_spec) {
        raw("was.preset");
        raw("was.spec");
        errors.push_back("fields 'was.preset' and 'was.spec' are mutually exclusive");
    } else if (has_preset) {
        try {
            cfg.was_spec = transforms::preset(raw("was.preset"));
        } catch (const ConfigError& e) {
            errors.push_back(std::string("field 'was.preset': ") + e.what());
        }
    } else if (has_spec) {
        try {
            cfg.was_spec = transforms::parse_spec(raw("was.spec"));
        } catch (const ConfigError& e) {
            errors.push_back(std::string("field 'was.spec': ") + e.what());
        }
    }
    for (const auto& [k, v] : kv) {
        const std::string prefix = "was.spec.layer";
        if (k.rfind(prefix, 0) != 0) continue;
        seen[k] = true;
        int64_t layer = -1;
        const std::string num = k.substr(prefix.size());
        auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), layer);
        if (ec != std::errc() || p != num.data() + num.size() || layer < 0) {
            errors.push_back("field '" + k + "': bad layer index");
            continue;
        }
        try {
            cfg.layer_overrides[layer] = transforms::parse_spec(v);
        } catch (const ConfigError& e) {
            errors.push_back("field '" + k + "': " + e.what());
        }
    }

    if (has("eval.perturb")) {
        for (const std::string& part : split_list(raw("eval.perturb"))) {
            try {
                cfg.eval_perturbs.push_back(data::DataPerturbSpec::parse(part));
            } catch (const ConfigError& e) {
                errors.push_back(std::string("field 'eval.perturb': ") + e.what());
            }
        }
    }
    get_u64("eval.perturb_seed", cfg.perturb_seed);

    get_str("sweep.checkpoint", cfg.sweep_checkpoint);
    if (has("sweep.was")) cfg.sweep_was = split_list(raw("sweep.was"));
    if (has("sweep.perturb")) cfg.sweep_perturb = split_list(raw("sweep.perturb"));
    get_i64("sweep.max_cells", cfg.sweep_max_cells);
    get_bool("flops.double_count", cfg.flops_double_count);

    for (const auto& [k, v] : seen) {
        if (!v) errors.push_back("unknown config key '" + k + "'");
    }

    // semantic checks
    if (cfg.arch_id != "smallcnn" && cfg.arch_id != "vgg16c" && cfg.arch_id != "custom") {
        errors.push_back("field 'arch.id': unknown architecture '" + cfg.arch_id + "'");
    }
    if (cfg.arch_id == "custom" && cfg.custom_layers.empty()) {
        errors.push_back("field 'arch.layer.0': custom architecture needs layer lines");
    }
    if (cfg.dataset != "cifar10" && cfg.dataset != "cifar100" && cfg.dataset != "mnist") {
        errors.push_back("field 'data.set': unknown dataset '" + cfg.dataset + "'");
    }
    if (cfg.epochs < 1) errors.push_back("field 'train.epochs': must be >= 1");
    if (cfg.batch_size < 1) errors.push_back("field 'train.batch_size': must be >= 1");
    if (cfg.train_subset < 0) errors.push_back("field 'data.train_subset': must be >= 0");
    if (cfg.test_subset < 0) errors.push_back("field 'data.test_subset': must be >= 0");
    if (!(cfg.lr > 0.0)) errors.push_back("field 'train.lr': must be > 0");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) {
        errors.push_back("field 'train.momentum': must be in [0, 1)");
    }
    if (cfg.sweep_max_cells < 1) errors.push_back("field 'sweep.max_cells': must be >= 1");
    for (const std::string& s : cfg.sweep_was) {
        try {
            transforms::parse_spec(s);
        } catch (const ConfigError& e) {
            errors.push_back(std::string("field 'sweep.was': ") + e.what());
        }
    }
    for (const std::string& s : cfg.sweep_perturb) {
        try {
            data::DataPerturbSpec::parse(s);
        } catch (const ConfigError& e) {
            errors.push_back(std::string("field 'sweep.perturb': ") + e.what());
        }
    }

    if (!errors.empty()) {
        std::string msg = "invalid config:";
        for (const std::string& e : errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    if (!cfg.dom_seed_set) cfg.dom_seed = cfg.seed;
    return cfg;
}

std::string ExperimentConfig::resolved_data_root() const {
    if (!data_root.empty()) return data_root;
    const char* env = std::getenv("WAS_DATA_ROOT");
    if (env && *env) return env;
    throw ConfigError("field 'data.root': not set and WAS_DATA_ROOT is empty");
}

std::vector<transforms::TransformSpec> ExperimentConfig::specs_for(size_t n_layers) const {
    std::vector<transforms::TransformSpec> specs(n_layers, was_spec);
    for (const auto& [layer, spec] : layer_overrides) {
        if (layer < 0 || layer >= static_cast<int64_t>(n_layers)) {
            throw ConfigError("field 'was.spec.layer" + std::to_string(layer) +
                              "': layer index out of range (model has " +
                              std::to_string(n_layers) + " weighted layers)");
        }
        specs[static_cast<size_t>(layer)] = spec;
    }
    return specs;
}

}  // namespace was::config
