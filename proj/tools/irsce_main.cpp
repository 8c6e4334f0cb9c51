// Command-line front end: dataset generation, training, evaluation, NMSE
// sweeps, activation dumps and a quick self-test.
//
// Exit codes: 0 success, 2 usage/configuration error, 3 numerical or data
// failure.

#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "irsce/irsce.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

irsce::ExperimentConfig load_config(const CommonOpts& opts) {
    irsce::ExperimentConfig cfg;
    if (!opts.config_path.empty()) {
        cfg = irsce::parse_config_file(opts.config_path);
    } else {
        if (const char* env = std::getenv("IRSCE_OUT_DIR"); env && *env) cfg.output_dir = env;
        cfg.validate();
    }
    if (opts.seed) cfg.system.seed = *opts.seed;
    return cfg;
}

std::string checkpoint_name(double snr_db) {
    return "cdrn_snr" + irsce::format_sig10(snr_db) + ".ckpt";
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << text;
    if (!f) throw std::runtime_error("write failed: " + path);
}

int cmd_generate_dataset(const CommonOpts& opts, std::optional<double> snr) {
    const auto cfg = load_config(opts);
    const double snr_db = snr.value_or(cfg.sweep.snr_db.front());
    const auto ds = irsce::generate_dataset(cfg, snr_db);
    const std::string path =
        opts.out.value_or(cfg.output_dir + "/dataset_snr" + irsce::format_sig10(snr_db) + ".bin");
    irsce::save_dataset(ds, path);
    std::cout << "dataset: " << ds.train.size() << " training + " << ds.test.size()
              << " held-out examples at SNR " << irsce::format_sig10(snr_db) << " dB -> " << path
              << "\n";
    return kExitOk;
}

int cmd_train(const CommonOpts& opts, const std::string& dataset_path) {
    const auto cfg = load_config(opts);
    const auto ds = irsce::load_dataset(dataset_path);

    irsce::CdrnModel model(cfg.cdrn_hyper());
    irsce::RngStream init_rng = irsce::make_stream(cfg.system.seed, irsce::SeedDomain::kModelInit, 0);
    model.init_training_params(init_rng);

    const auto report = irsce::train_cdrn(model, ds.train, cfg.train_config());

    const std::string default_name = ds.blind() ? "cdrn_blind.ckpt" : checkpoint_name(ds.snr_db);
    const std::string path = opts.out.value_or(cfg.output_dir + "/" + default_name);
    irsce::save_checkpoint(model, path);

    if (!report.train_loss.empty()) {
        std::cout << "training loss: " << irsce::format_sig10(report.train_loss.front()) << " -> "
                  << irsce::format_sig10(report.train_loss.back()) << " over "
                  << report.train_loss.size() << " epochs\n";
        if (!report.val_loss.empty())
            std::cout << "validation loss: " << irsce::format_sig10(report.val_loss.back()) << "\n";
    }
    std::cout << "checkpoint -> " << path << "\n";
    return kExitOk;
}

void check_geometry(const irsce::CdrnModel& model, const irsce::ExperimentConfig& cfg,
                    const std::string& path) {
    const auto& h = model.hyper();
    if (h.height != cfg.system.bs_antennas || h.width != cfg.system.irs_elements + 1)
        throw irsce::ConfigError("checkpoint geometry mismatch for " + path);
}

// Checkpoint resolution per SNR point: an explicit --checkpoint file serves
// every point (noise-blind model); otherwise look for per-user files
// cdrn_snr<X>_user<k>.ckpt, and fall back to the shared cdrn_snr<X>.ckpt.
irsce::ModelsBySnr resolve_models(const irsce::ExperimentConfig& cfg, const std::string& dir,
                                  const std::optional<std::string>& single_checkpoint,
                                  std::deque<irsce::CdrnModel>& storage) {
    irsce::ModelsBySnr models;
    const bool want_cdrn =
        std::count(cfg.estimators.begin(), cfg.estimators.end(), "cdrn") > 0;
    if (!want_cdrn) return models;

    if (single_checkpoint) {
        storage.push_back(irsce::load_checkpoint(*single_checkpoint));
        check_geometry(storage.back(), cfg, *single_checkpoint);
        for (double snr : cfg.sweep.snr_db) models[snr] = {&storage.back()};
        return models;
    }

    for (double snr : cfg.sweep.snr_db) {
        const std::string base = dir + "/cdrn_snr" + irsce::format_sig10(snr);
        std::vector<std::string> per_user;
        for (std::size_t k = 0; k < cfg.system.users; ++k) {
            const std::string path = base + "_user" + std::to_string(k) + ".ckpt";
            if (!std::filesystem::exists(path)) break;
            per_user.push_back(path);
        }
        std::vector<std::string> paths;
        if (per_user.size() == cfg.system.users) {
            paths = std::move(per_user);
        } else {
            const std::string shared = dir + "/" + checkpoint_name(snr);
            if (!std::filesystem::exists(shared))
                throw irsce::ConfigError("missing trained model for SNR point " +
                                         irsce::format_sig10(snr) + " dB (expected " + shared + ")");
            paths = {shared};
        }
        std::vector<const irsce::CdrnModel*> loaded;
        for (const auto& path : paths) {
            storage.push_back(irsce::load_checkpoint(path));
            check_geometry(storage.back(), cfg, path);
            loaded.push_back(&storage.back());
        }
        models[snr] = std::move(loaded);
    }
    return models;
}

int run_sweep_and_emit(const irsce::ExperimentConfig& cfg, const std::string& checkpoint_dir,
                       const std::optional<std::string>& single_checkpoint,
                       const std::optional<std::string>& out) {
    std::deque<irsce::CdrnModel> storage;
    const auto models = resolve_models(cfg, checkpoint_dir, single_checkpoint, storage);
    const auto result = irsce::run_sweep(cfg, models);
    const std::string csv = irsce::sweep_to_csv(result);
    if (out) {
        write_text(*out, csv);
        std::cout << "results -> " << *out << "\n";
    } else {
        std::cout << csv;
    }
    return kExitOk;
}

int cmd_evaluate(const CommonOpts& opts, std::optional<double> snr, std::optional<std::size_t> trials,
                 const std::optional<std::string>& checkpoint_dir,
                 const std::optional<std::string>& single_checkpoint) {
    auto cfg = load_config(opts);
    if (snr) cfg.sweep.snr_db = {*snr};
    else cfg.sweep.snr_db = {cfg.sweep.snr_db.front()};
    if (trials) cfg.sweep.trials = *trials;
    return run_sweep_and_emit(cfg, checkpoint_dir.value_or(cfg.output_dir), single_checkpoint,
                              opts.out);
}

int cmd_sweep(const CommonOpts& opts, const std::optional<std::string>& checkpoint_dir,
              const std::optional<std::string>& single_checkpoint) {
    auto cfg = load_config(opts);
    const std::string dir = checkpoint_dir.value_or(cfg.output_dir);
    const std::string out = opts.out.value_or(cfg.output_dir + "/sweep.csv");
    return run_sweep_and_emit(cfg, dir, single_checkpoint, out);
}

int cmd_dump_activations(const CommonOpts& opts, const std::string& checkpoint,
                         std::optional<double> snr, std::uint64_t index) {
    const auto cfg = load_config(opts);
    const double snr_db = snr.value_or(cfg.sweep.snr_db.front());
    const irsce::CdrnModel model = irsce::load_checkpoint(checkpoint);
    if (model.hyper().height != cfg.system.bs_antennas ||
        model.hyper().width != cfg.system.irs_elements + 1)
        throw irsce::ConfigError("checkpoint geometry mismatch for " + checkpoint);

    const auto noise = irsce::noise_for_snr(cfg.system, snr_db);
    const auto sched = irsce::build_dft_schedule(cfg.system.irs_elements, cfg.system.subframes);
    const auto pilots =
        irsce::build_pilot_book(cfg.system.users, cfg.system.pilot_length, cfg.system.pilot_power);

    irsce::RngStream rng = irsce::make_stream(cfg.system.seed, irsce::SeedDomain::kMisc, index);
    const auto chan = irsce::realize_channels(cfg.system, cfg.links, rng);
    auto obs = irsce::simulate_training_phase(chan, sched, pilots, noise.noise_var_v, rng);
    obs[0].noise_var_z = noise.noise_var_z;

    const irsce::CMatrix coarse = irsce::denoise_observation(obs[0], sched);
    const auto trace = irsce::export_block_activations(coarse, model);
    const std::string path = opts.out.value_or(cfg.output_dir + "/activations.bin");
    irsce::save_activation_trace(trace, path);
    std::cout << "activation trace (" << trace.outputs.size() + 1 << " tensors) -> " << path << "\n";
    return kExitOk;
}

bool selftest_check(const char* name, bool ok) {
    std::cout << (ok ? "[ OK ] " : "[FAIL] ") << name << "\n";
    return ok;
}

int cmd_selftest() {
    using namespace irsce;
    bool all = true;

    {
        const auto sched = build_dft_schedule(32, 33);
        const CMatrix gram = matmul(sched.P, conj_transpose(sched.P));
        CMatrix target = CMatrix::identity(33);
        for (auto& z : target.data()) z *= 33.0;
        all &= selftest_check("training matrix orthogonality", max_abs(gram - target) < 1e-9);
    }
    {
        SystemConfig sys;
        sys.bs_antennas = 4;
        sys.irs_elements = 6;
        sys.subframes = 7;
        sys.users = 3;
        sys.pilot_length = 4;
        sys.noise_var_v = 0.0;
        LinkSet links;
        RngStream rng = make_stream(7, SeedDomain::kMisc, 0);
        const auto chan = realize_channels(sys, links, rng);
        const auto sched = build_dft_schedule(sys.irs_elements, sys.subframes);
        const auto pilots = build_pilot_book(sys.users, sys.pilot_length, sys.pilot_power);
        auto obs = simulate_training_phase(chan, sched, pilots, 0.0, rng);
        double worst = 0.0;
        for (std::size_t k = 0; k < sys.users; ++k)
            worst = std::max(worst, max_abs(obs[k].X - matmul(chan.H[k], sched.P)));
        all &= selftest_check("noise-free protocol exactness", worst < 1e-10);
    }
    {
        RngStream rng = make_stream(3, SeedDomain::kMisc, 1);
        CMatrix p(3, 5);
        for (auto& z : p.data()) z = rng.complex_normal();
        const CMatrix pinv = right_pseudoinverse(p);
        all &= selftest_check("pseudoinverse residual",
                              max_abs(matmul(p, pinv) - CMatrix::identity(3)) < 1e-9);
    }
    {
        CdrnHyper hyper;
        hyper.height = 3;
        hyper.width = 4;
        hyper.depth = 2;
        hyper.layers_per_block = 3;
        hyper.filters = 4;
        CdrnModel model(hyper);
        RngStream rng = make_stream(11, SeedDomain::kModelInit, 0);
        model.init_params(rng);

        RealTensor x(3, 4, 2, 2), y(3, 4, 2, 2);
        for (auto& v : x.values()) v = rng.normal();
        for (auto& v : y.values()) v = rng.normal();

        CdrnGrads grads = CdrnGrads::like(model);
        cdrn_loss_and_grad(model, x, y, grads);
        auto params = model.parameters();
        double worst = 0.0;
        auto loss_fn = [&] { return cdrn_loss(model, x, y, Mode::kTrain); };
        const double floor = 1e-6 * (1.0 + std::abs(loss_fn()));
        for (std::size_t t = 0; t < params.size(); ++t) {
            const std::size_t stride = std::max<std::size_t>(1, params[t].size / 5);
            for (std::size_t i = 0; i < params[t].size; i += stride)
                worst = std::max(worst, finite_difference_check(loss_fn, params[t].data + i, 1,
                                                                grads.buffers[t].data() + i, 1e-5, floor));
        }
        all &= selftest_check("gradient finite-difference spot check", worst < 1e-4);

        std::vector<RealTensor> residuals;
        const RealTensor out = cdrn_forward(x, model, Mode::kEval, &residuals);
        RealTensor recon = x;
        for (const auto& r : residuals)
            for (std::size_t i = 0; i < recon.size(); ++i) recon.values()[i] -= r.values()[i];
        all &= selftest_check("residual decomposition identity", max_abs_diff(out, recon) < 1e-12);
    }

    if (!all) {
        std::cout << "selftest: FAILED\n";
        return kExitNumerical;
    }
    std::cout << "selftest: all checks passed\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"simulation and estimation toolkit for reflecting-surface uplink channel estimation"};
    app.require_subcommand(1);

    CommonOpts common;
    std::optional<double> snr;
    std::optional<std::size_t> trials;
    std::optional<std::string> checkpoint_dir;
    std::optional<std::string> single_checkpoint;
    std::string dataset_path, checkpoint_path;
    std::uint64_t dump_index = 0;

    auto add_common = [&](CLI::App* sub, bool with_out = true) {
        sub->add_option("--config", common.config_path, "experiment configuration file");
        sub->add_option("--seed", common.seed, "override the configured seed");
        if (with_out) sub->add_option("--out", common.out, "output path");
    };

    auto* gen = app.add_subcommand("generate-dataset", "draw a training/test dataset at one SNR");
    add_common(gen);
    gen->add_option("--snr", snr, "transmit SNR in dB (default: first sweep point)");

    auto* train = app.add_subcommand("train", "train the denoiser on a generated dataset");
    add_common(train);
    train->add_option("--dataset", dataset_path, "dataset file from generate-dataset")->required();

    auto* eval = app.add_subcommand("evaluate", "Monte Carlo NMSE comparison at a single SNR");
    add_common(eval);
    eval->add_option("--snr", snr, "transmit SNR in dB (default: first sweep point)");
    eval->add_option("--trials", trials, "override the configured trial count");
    eval->add_option("--checkpoint-dir", checkpoint_dir, "directory holding cdrn_snr*.ckpt files");
    eval->add_option("--checkpoint", single_checkpoint, "one model file for every SNR point");

    auto* sweep = app.add_subcommand("sweep", "full NMSE-vs-SNR sweep over the configured grid");
    add_common(sweep);
    sweep->add_option("--checkpoint-dir", checkpoint_dir, "directory holding cdrn_snr*.ckpt files");
    sweep->add_option("--checkpoint", single_checkpoint, "one model file for every SNR point");

    auto* dump = app.add_subcommand("dump-activations", "export per-block outputs for one realization");
    add_common(dump);
    dump->add_option("--checkpoint", checkpoint_path, "trained model checkpoint")->required();
    dump->add_option("--snr", snr, "transmit SNR in dB (default: first sweep point)");
    dump->add_option("--index", dump_index, "realization index");

    auto* self = app.add_subcommand("selftest", "run built-in numerical sanity checks");
    (void)self;

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_generate_dataset(common, snr);
        if (train->parsed()) return cmd_train(common, dataset_path);
        if (eval->parsed()) return cmd_evaluate(common, snr, trials, checkpoint_dir, single_checkpoint);
        if (sweep->parsed()) return cmd_sweep(common, checkpoint_dir, single_checkpoint);
        if (dump->parsed()) return cmd_dump_activations(common, checkpoint_path, snr, dump_index);
        if (self->parsed()) return cmd_selftest();
    } catch (const irsce::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitConfig;
}
