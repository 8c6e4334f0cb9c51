// Training data generation: independent (channel, noise) realizations pushed
// through the full pilot pipeline at a fixed transmit SNR, stored as
// (coarse estimate, true channel) tensor pairs. Also derives the correlation
// matrices the linear Bayesian estimator needs from the same training-split
// channel draws.

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "irsce/cdrn.hpp"
#include "irsce/config.hpp"
#include "irsce/estimators.hpp"
#include "irsce/parallel.hpp"
#include "irsce/pilot_protocol.hpp"
#include "irsce/serialize.hpp"

namespace irsce {

// Transmit SNR is pilot_power / noise_var_z; the receiver noise variance
// follows from the despreading gain.
struct NoisePlan {
    double noise_var_z = 0.0;
    double noise_var_v = 0.0;
};

inline NoisePlan noise_for_snr(const SystemConfig& sys, double snr_db) {
    const double snr_linear = std::pow(10.0, snr_db / 10.0);
    if (!(snr_linear > 0.0))
        throw std::invalid_argument("noise_for_snr: SNR must be positive in linear scale");
    NoisePlan plan;
    plan.noise_var_z = sys.pilot_power / snr_linear;  // 0 in the infinite-SNR limit
    plan.noise_var_v = plan.noise_var_z * sys.pilot_power * double(sys.pilot_length);
    if (!std::isfinite(plan.noise_var_v))
        throw std::invalid_argument("noise_for_snr: non-finite noise variance");
    return plan;
}

// One example: run the pipeline for channel draw `index` and return the
// (input, label) pair for user `index % K` plus the raw truth.
namespace detail {

struct ExampleDraw {
    RealTensor input;
    RealTensor label;
    CMatrix truth;
    Observation obs;
};

inline ExampleDraw draw_example(const ExperimentConfig& cfg, const ReflectionSchedule& sched,
                                const PilotBook& pilots, const NoisePlan& noise, std::uint64_t index) {
    RngStream rng = make_stream(cfg.system.seed, SeedDomain::kDataset, index);
    NoisePlan plan = noise;
    if (cfg.training.blind()) {
        const double snr = cfg.training.blind_snr_min_db +
                           (cfg.training.blind_snr_max_db - cfg.training.blind_snr_min_db) * rng.uniform01();
        plan = noise_for_snr(cfg.system, snr);
    }
    const ChannelRealization chan = realize_channels(cfg.system, cfg.links, rng);
    const auto obs = simulate_training_phase(chan, sched, pilots, plan.noise_var_v, rng);
    const std::size_t k = cfg.training.dataset_user >= 0 ? std::size_t(cfg.training.dataset_user)
                                                         : std::size_t(index) % cfg.system.users;
    Observation ob = obs[k];
    ob.noise_var_z = plan.noise_var_z;
    ExampleDraw out;
    out.truth = chan.H[k];
    out.input = to_real_channels(denoise_observation(ob, sched));
    out.label = to_real_channels(out.truth);
    out.obs = std::move(ob);
    return out;
}

}  // namespace detail

// Training split plus a held-out test split drawn from disjoint stream
// indices of the dataset seed domain.
inline DatasetFile generate_dataset(const ExperimentConfig& cfg, double snr_db) {
    cfg.validate();
    const NoisePlan noise = noise_for_snr(cfg.system, snr_db);
    const ReflectionSchedule sched = build_dft_schedule(cfg.system.irs_elements, cfg.system.subframes);
    const PilotBook pilots = build_pilot_book(cfg.system.users, cfg.system.pilot_length, cfg.system.pilot_power);

    const std::size_t n_train = cfg.training.n_train;
    const std::size_t n_test = cfg.training.n_test;

    DatasetFile ds;
    ds.snr_db = snr_db;
    ds.noise_var_z = noise.noise_var_z;
    if (cfg.training.blind()) {
        ds.snr_min_db = cfg.training.blind_snr_min_db;
        ds.snr_max_db = cfg.training.blind_snr_max_db;
    } else {
        ds.snr_min_db = ds.snr_max_db = snr_db;
    }
    ds.train.inputs.resize(n_train);
    ds.train.labels.resize(n_train);
    ds.test.inputs.resize(n_test);
    ds.test.labels.resize(n_test);

    const int workers = cfg.sweep.workers > 0 ? cfg.sweep.workers : int(hardware_threads());
    parallel_for(n_train + n_test, workers, [&](std::size_t i) {
        auto ex = detail::draw_example(cfg, sched, pilots, noise, i);
        if (i < n_train) {
            ds.train.inputs[i] = std::move(ex.input);
            ds.train.labels[i] = std::move(ex.label);
        } else {
            ds.test.inputs[i - n_train] = std::move(ex.input);
            ds.test.labels[i - n_train] = std::move(ex.label);
        }
    });
    return ds;
}

// Per-user sample correlations over the same channel draws that make up the
// training split (the evaluation sweep lives in a different seed domain, so
// there is no leakage).
inline std::vector<CorrelationEstimate> training_split_correlation(const ExperimentConfig& cfg,
                                                                   std::size_t samples) {
    if (samples == 0) throw std::invalid_argument("training_split_correlation: need samples >= 1");
    std::vector<std::vector<CMatrix>> draws(cfg.system.users);
    for (auto& d : draws) d.resize(samples);
    const int workers = cfg.sweep.workers > 0 ? cfg.sweep.workers : int(hardware_threads());
    parallel_for(samples, workers, [&](std::size_t i) {
        RngStream rng = make_stream(cfg.system.seed, SeedDomain::kDataset, i);
        ChannelRealization chan = realize_channels(cfg.system, cfg.links, rng);
        for (std::size_t k = 0; k < cfg.system.users; ++k) draws[k][i] = std::move(chan.H[k]);
    });
    std::vector<CorrelationEstimate> out;
    out.reserve(cfg.system.users);
    for (std::size_t k = 0; k < cfg.system.users; ++k) out.push_back(estimate_correlation(draws[k]));
    return out;
}

}  // namespace irsce
