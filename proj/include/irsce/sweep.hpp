// Monte Carlo NMSE evaluation across estimators and SNR points. Trials run
// in parallel on per-trial substreams and accumulate in fixed trial order,
// so the CSV output is byte-identical for any worker count.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "irsce/cdrn.hpp"
#include "irsce/config.hpp"
#include "irsce/dataset.hpp"
#include "irsce/estimators.hpp"
#include "irsce/parallel.hpp"

namespace irsce {

struct SweepRow {
    double snr_db = 0.0;
    std::string estimator;
    Slice slice = Slice::kFull;
    double nmse_db = 0.0;
    std::size_t trials = 0;
    double wall_seconds = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
};

namespace detail {

// err[0]/sig[0] = direct slice, err[1]/sig[1] = cascaded slice.
struct TrialAccum {
    double err[2] = {0.0, 0.0};
};

struct TrialSignal {
    double sig[2] = {0.0, 0.0};
};

inline void accumulate_error(TrialAccum& acc, const CMatrix& est, const CMatrix& truth) {
    acc.err[0] += slice_err_sq(est, truth, Slice::kDirect);
    acc.err[1] += slice_err_sq(est, truth, Slice::kCascaded);
}

}  // namespace detail

// Trained models per SNR point, keyed by the value printed in the CSV.
// One entry per point serves every user (the shared-model default); K
// entries route model k to user k (per-user training).
using ModelsBySnr = std::map<double, std::vector<const CdrnModel*>>;

inline SweepResult run_sweep(const ExperimentConfig& cfg, const ModelsBySnr& models = {}) {
    cfg.validate();

    const bool want_cdrn = std::count(cfg.estimators.begin(), cfg.estimators.end(), "cdrn") > 0;
    const bool want_lmmse = std::count(cfg.estimators.begin(), cfg.estimators.end(), "lmmse") > 0;
    const bool want_blmmse = std::count(cfg.estimators.begin(), cfg.estimators.end(), "b-lmmse") > 0;

    if (want_cdrn)
        for (double snr : cfg.sweep.snr_db) {
            const auto it = models.find(snr);
            const bool ok = it != models.end() && !it->second.empty() &&
                            std::count(it->second.begin(), it->second.end(), nullptr) == 0 &&
                            (it->second.size() == 1 || it->second.size() == cfg.system.users);
            if (!ok)
                throw ConfigError("run_sweep: no trained model for SNR point " + std::to_string(snr) + " dB");
        }

    const ReflectionSchedule sched = build_dft_schedule(cfg.system.irs_elements, cfg.system.subframes);
    const ReflectionSchedule sched_bin = build_binary_schedule(cfg.system.irs_elements);
    const PilotBook pilots = build_pilot_book(cfg.system.users, cfg.system.pilot_length, cfg.system.pilot_power);

    std::vector<CorrelationEstimate> corr;
    if (want_lmmse || want_blmmse) {
        const std::size_t samples =
            cfg.sweep.correlation_samples > 0 ? cfg.sweep.correlation_samples : cfg.training.n_train;
        corr = training_split_correlation(cfg, samples);
    }

    const std::size_t n_est = cfg.estimators.size();
    const std::size_t trials = cfg.sweep.trials;
    const int workers = cfg.sweep.workers > 0 ? cfg.sweep.workers : int(hardware_threads());

    SweepResult result;
    for (double snr : cfg.sweep.snr_db) {
        const auto t0 = std::chrono::steady_clock::now();
        const NoisePlan noise = noise_for_snr(cfg.system, snr);
        const std::vector<const CdrnModel*> empty_models;
        const std::vector<const CdrnModel*>& snr_models = want_cdrn ? models.at(snr) : empty_models;

        std::vector<detail::TrialSignal> signal(trials);
        std::vector<std::vector<detail::TrialAccum>> errors(n_est,
                                                            std::vector<detail::TrialAccum>(trials));

        parallel_for(trials, workers, [&](std::size_t t) {
            RngStream rng = make_stream(cfg.system.seed, SeedDomain::kSweep, t);
            const ChannelRealization chan = realize_channels(cfg.system, cfg.links, rng);
            auto obs = simulate_training_phase(chan, sched, pilots, noise.noise_var_v, rng);
            for (auto& ob : obs) ob.noise_var_z = noise.noise_var_z;

            std::vector<Observation> obs_bin;
            if (want_blmmse) {
                obs_bin = simulate_training_phase(chan, sched_bin, pilots, noise.noise_var_v, rng);
                for (auto& ob : obs_bin) ob.noise_var_z = noise.noise_var_z;
            }

            for (std::size_t k = 0; k < cfg.system.users; ++k) {
                signal[t].sig[0] += detail::slice_norm_sq(chan.H[k], Slice::kDirect);
                signal[t].sig[1] += detail::slice_norm_sq(chan.H[k], Slice::kCascaded);
                for (std::size_t e = 0; e < n_est; ++e) {
                    EstimateReport rep;
                    rep.estimator_id = cfg.estimators[e];
                    if (rep.estimator_id == "ls") {
                        rep.H_hat = ls_estimate(obs[k], sched);
                    } else if (rep.estimator_id == "lmmse") {
                        rep.H_hat = lmmse_estimate(obs[k], sched, corr[k], cfg.system.bs_antennas);
                    } else if (rep.estimator_id == "b-lmmse") {
                        rep.H_hat = lmmse_estimate(obs_bin[k], sched_bin, corr[k], cfg.system.bs_antennas);
                    } else {  // cdrn
                        const CdrnModel* model = snr_models[k % snr_models.size()];
                        rep.H_hat = cdrn_estimate(obs[k], sched, *model);
                    }
                    detail::accumulate_error(errors[e][t], rep.H_hat, chan.H[k]);
                }
            }
        });

        // Fixed-order reduction.
        double sig[2] = {0.0, 0.0};
        for (std::size_t t = 0; t < trials; ++t) {
            sig[0] += signal[t].sig[0];
            sig[1] += signal[t].sig[1];
        }
        const auto t1 = std::chrono::steady_clock::now();
        const double wall = std::chrono::duration<double>(t1 - t0).count();

        for (std::size_t e = 0; e < n_est; ++e) {
            double err[2] = {0.0, 0.0};
            for (std::size_t t = 0; t < trials; ++t) {
                err[0] += errors[e][t].err[0];
                err[1] += errors[e][t].err[1];
            }
            const struct {
                Slice slice;
                double err_sq, sig_sq;
            } slices[3] = {{Slice::kDirect, err[0], sig[0]},
                           {Slice::kCascaded, err[1], sig[1]},
                           {Slice::kFull, err[0] + err[1], sig[0] + sig[1]}};
            for (const auto& s : slices) {
                SweepRow row;
                row.snr_db = snr;
                row.estimator = cfg.estimators[e];
                row.slice = s.slice;
                row.nmse_db = nmse_from_sums(s.err_sq, s.sig_sq).db;
                row.trials = trials;
                row.wall_seconds = wall;
                result.rows.push_back(std::move(row));
            }
        }
    }
    return result;
}

inline std::string format_sig10(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

inline std::string sweep_to_csv(const SweepResult& result) {
    std::string out = "snr_db,estimator,slice,nmse_db,trials,wall_time\n";
    for (const auto& r : result.rows) {
        out += format_sig10(r.snr_db);
        out += ',';
        out += r.estimator;
        out += ',';
        out += slice_name(r.slice);
        out += ',';
        out += format_sig10(r.nmse_db);
        out += ',';
        out += std::to_string(r.trials);
        out += ',';
        out += format_sig10(r.wall_seconds);
        out += '\n';
    }
    return out;
}

// Drops the wall_time column; the remainder is byte-reproducible across runs
// and worker counts.
inline std::string csv_without_wall_time(const std::string& csv) {
    std::string out;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        std::size_t nl = csv.find('\n', pos);
        if (nl == std::string::npos) nl = csv.size();
        const std::string line = csv.substr(pos, nl - pos);
        const std::size_t comma = line.rfind(',');
        out += (comma == std::string::npos) ? line : line.substr(0, comma);
        out += '\n';
        pos = nl + 1;
    }
    return out;
}

}  // namespace irsce
