// Experiment configuration: a sectioned key-value text file covering the
// system geometry, link parameters, estimator list, training hyperparameters
// and sweep grid. Unknown sections or keys are rejected outright. Precedence
// is CLI flag > config file > built-in default; the output directory
// additionally falls back to the IRSCE_OUT_DIR environment variable.

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "irsce/channel_model.hpp"
#include "irsce/cdrn.hpp"
#include "irsce/optimizer.hpp"

namespace irsce {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainingConfig {
    std::size_t n_train = 5000;
    std::size_t n_test = 100;
    std::size_t batch_size = 64;
    std::size_t epochs = 12;
    AdamParams adam;
    double lr_decay = 1.0;
    double validation_fraction = 0.0;
    std::size_t blocks = 2;
    std::size_t layers_per_block = 4;
    std::size_t filters = 32;
    double bn_epsilon = 1e-5;
    double bn_momentum = 0.9;
    int threads = 0;  // 0 = hardware concurrency
    // -1: round-robin over users (one shared model); k >= 0: draw every
    // example from user k (per-user training).
    int dataset_user = -1;
    // When set (min < max), each dataset example draws its own SNR uniformly
    // from [min, max] dB and one "blind" model covers the whole range.
    double blind_snr_min_db = 0.0;
    double blind_snr_max_db = 0.0;

    bool blind() const { return blind_snr_min_db < blind_snr_max_db; }
};

struct SweepSettings {
    std::vector<double> snr_db = {10.0};
    std::size_t trials = 10000;
    int workers = 0;  // 0 = hardware concurrency
    std::size_t correlation_samples = 0;  // 0 = n_train
};

struct ExperimentConfig {
    SystemConfig system;
    LinkSet links;
    std::vector<std::string> estimators = {"ls", "lmmse"};
    TrainingConfig training;
    SweepSettings sweep;
    std::string output_dir = ".";

    void validate() const {
        system.validate();
        links.user_bs.validate();
        links.irs_bs.validate();
        links.user_irs.validate();
        if (sweep.snr_db.empty()) throw ConfigError("sweep: snr_db grid must be nonempty");
        if (sweep.trials < 1) throw ConfigError("sweep: trials must be >= 1");
        if (estimators.empty()) throw ConfigError("estimators: list must be nonempty");
        static const std::set<std::string> known = {"ls", "lmmse", "b-lmmse", "cdrn"};
        for (const auto& e : estimators)
            if (!known.count(e)) throw ConfigError("estimators: unknown estimator id '" + e + "'");
        if (training.validation_fraction < 0.0 || training.validation_fraction >= 1.0)
            throw ConfigError("training: validation_fraction must be in [0,1)");
        if (training.n_train < 1) throw ConfigError("training: n_train must be >= 1");
        if (training.dataset_user >= int(system.users))
            throw ConfigError("training: dataset_user out of range");
        if (training.blind_snr_min_db > training.blind_snr_max_db)
            throw ConfigError("training: blind_snr_db range is inverted");
    }

    CdrnHyper cdrn_hyper() const {
        CdrnHyper h;
        h.height = system.bs_antennas;
        h.width = system.irs_elements + 1;
        h.depth = training.blocks;
        h.layers_per_block = training.layers_per_block;
        h.filters = training.filters;
        h.bn_epsilon = training.bn_epsilon;
        h.bn_momentum = training.bn_momentum;
        return h;
    }

    TrainConfig train_config() const {
        TrainConfig t;
        t.batch_size = training.batch_size;
        t.epochs = training.epochs;
        t.adam = training.adam;
        t.lr_decay = training.lr_decay;
        t.validation_fraction = training.validation_fraction;
        t.seed = system.seed;
        t.threads = training.threads > 0 ? training.threads : int(hardware_threads());
        return t;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline double parse_double(const std::string& v, const std::string& where) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return d;
    } catch (const std::exception&) {
        throw ConfigError("invalid numeric value for " + where + ": '" + v + "'");
    }
}

inline long long parse_int(const std::string& v, const std::string& where) {
    try {
        std::size_t pos = 0;
        const long long n = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return n;
    } catch (const std::exception&) {
        throw ConfigError("invalid integer value for " + where + ": '" + v + "'");
    }
}

inline std::size_t parse_count(const std::string& v, const std::string& where) {
    const long long n = parse_int(v, where);
    if (n < 0) throw ConfigError(where + " must be >= 0");
    return std::size_t(n);
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

}  // namespace detail

// Parses the sectioned key = value format. '#' and ';' start comments.
inline ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig base = {}) {
    ExperimentConfig cfg = std::move(base);
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;

    auto fail = [&](const std::string& msg) {
        throw ConfigError("config line " + std::to_string(lineno) + ": " + msg);
    };

    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') fail("malformed section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            static const std::set<std::string> sections = {"system", "links", "estimators",
                                                           "training", "sweep", "output"};
            if (!sections.count(section)) fail("unknown section [" + section + "]");
            continue;
        }

        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) fail("expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        if (section.empty()) fail("key outside any section");
        const std::string where = section + "." + key;

        if (section == "system") {
            if (key == "bs_antennas") cfg.system.bs_antennas = detail::parse_count(val, where);
            else if (key == "irs_elements") cfg.system.irs_elements = detail::parse_count(val, where);
            else if (key == "users") cfg.system.users = detail::parse_count(val, where);
            else if (key == "subframes") cfg.system.subframes = detail::parse_count(val, where);
            else if (key == "pilot_length") cfg.system.pilot_length = detail::parse_count(val, where);
            else if (key == "pilot_power") cfg.system.pilot_power = detail::parse_double(val, where);
            else if (key == "seed") cfg.system.seed = std::uint64_t(detail::parse_int(val, where));
            else fail("unknown key '" + key + "' in [system]");
        } else if (section == "links") {
            if (key == "ref_loss_db") {
                const double v = detail::db_to_linear(detail::parse_double(val, where));
                cfg.links.user_bs.ref_loss = cfg.links.irs_bs.ref_loss = cfg.links.user_irs.ref_loss = v;
            } else if (key == "ref_distance_m") {
                const double v = detail::parse_double(val, where);
                cfg.links.user_bs.ref_distance_m = cfg.links.irs_bs.ref_distance_m =
                    cfg.links.user_irs.ref_distance_m = v;
            }
            else if (key == "user_bs_distance_m") cfg.links.user_bs.distance_m = detail::parse_double(val, where);
            else if (key == "user_bs_exponent") cfg.links.user_bs.exponent = detail::parse_double(val, where);
            else if (key == "user_bs_rician") cfg.links.user_bs.rician_factor = detail::parse_double(val, where);
            else if (key == "irs_bs_distance_m") cfg.links.irs_bs.distance_m = detail::parse_double(val, where);
            else if (key == "irs_bs_exponent") cfg.links.irs_bs.exponent = detail::parse_double(val, where);
            else if (key == "irs_bs_rician") cfg.links.irs_bs.rician_factor = detail::parse_double(val, where);
            else if (key == "user_irs_distance_m") cfg.links.user_irs.distance_m = detail::parse_double(val, where);
            else if (key == "user_irs_exponent") cfg.links.user_irs.exponent = detail::parse_double(val, where);
            else if (key == "user_irs_rician") cfg.links.user_irs.rician_factor = detail::parse_double(val, where);
            else fail("unknown key '" + key + "' in [links]");
        } else if (section == "estimators") {
            if (key == "list") cfg.estimators = detail::split_list(val);
            else fail("unknown key '" + key + "' in [estimators]");
        } else if (section == "training") {
            if (key == "n_train") cfg.training.n_train = detail::parse_count(val, where);
            else if (key == "n_test") cfg.training.n_test = detail::parse_count(val, where);
            else if (key == "batch_size") cfg.training.batch_size = detail::parse_count(val, where);
            else if (key == "epochs") cfg.training.epochs = detail::parse_count(val, where);
            else if (key == "learning_rate") cfg.training.adam.learning_rate = detail::parse_double(val, where);
            else if (key == "learning_rate_decay") cfg.training.lr_decay = detail::parse_double(val, where);
            else if (key == "adam_beta1") cfg.training.adam.beta1 = detail::parse_double(val, where);
            else if (key == "adam_beta2") cfg.training.adam.beta2 = detail::parse_double(val, where);
            else if (key == "adam_epsilon") cfg.training.adam.epsilon = detail::parse_double(val, where);
            else if (key == "validation_fraction") cfg.training.validation_fraction = detail::parse_double(val, where);
            else if (key == "blocks") cfg.training.blocks = detail::parse_count(val, where);
            else if (key == "layers_per_block") cfg.training.layers_per_block = detail::parse_count(val, where);
            else if (key == "filters") cfg.training.filters = detail::parse_count(val, where);
            else if (key == "bn_epsilon") cfg.training.bn_epsilon = detail::parse_double(val, where);
            else if (key == "bn_momentum") cfg.training.bn_momentum = detail::parse_double(val, where);
            else if (key == "threads") cfg.training.threads = int(detail::parse_int(val, where));
            else if (key == "dataset_user") cfg.training.dataset_user = int(detail::parse_int(val, where));
            else if (key == "blind_snr_db") {
                const auto parts = detail::split_list(val);
                if (parts.size() != 2) fail("blind_snr_db expects 'min, max'");
                cfg.training.blind_snr_min_db = detail::parse_double(parts[0], where);
                cfg.training.blind_snr_max_db = detail::parse_double(parts[1], where);
            }
            else fail("unknown key '" + key + "' in [training]");
        } else if (section == "sweep") {
            if (key == "snr_db") {
                cfg.sweep.snr_db.clear();
                for (const auto& item : detail::split_list(val))
                    cfg.sweep.snr_db.push_back(detail::parse_double(item, where));
            } else if (key == "trials") cfg.sweep.trials = detail::parse_count(val, where);
            else if (key == "workers") cfg.sweep.workers = int(detail::parse_int(val, where));
            else if (key == "correlation_samples") cfg.sweep.correlation_samples = detail::parse_count(val, where);
            else fail("unknown key '" + key + "' in [sweep]");
        } else if (section == "output") {
            if (key == "dir") cfg.output_dir = val;
            else fail("unknown key '" + key + "' in [output]");
        }
    }
    return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();

    ExperimentConfig base;
    if (const char* env = std::getenv("IRSCE_OUT_DIR"); env && *env) base.output_dir = env;
    ExperimentConfig cfg = parse_config_text(ss.str(), std::move(base));
    cfg.validate();
    return cfg;
}

}  // namespace irsce
