#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <utility>

#include "irsce/cdrn.hpp"
#include "irsce/dataset.hpp"
#include "irsce/grad_check.hpp"
#include "irsce/serialize.hpp"

using namespace irsce;

namespace {

CdrnHyper tiny_hyper() {
    CdrnHyper h;
    h.height = 3;
    h.width = 4;
    h.depth = 2;
    h.layers_per_block = 3;
    h.filters = 8;
    return h;
}

CdrnModel tiny_model(std::uint64_t seed = 1) {
    CdrnModel model(tiny_hyper());
    RngStream rng = make_stream(seed, SeedDomain::kModelInit, 0);
    model.init_params(rng);
    return model;
}

RealTensor random_input(std::size_t batch, RngStream& rng, std::size_t h = 3, std::size_t w = 4) {
    RealTensor t(h, w, 2, batch);
    for (auto& v : t.values()) v = rng.normal();
    return t;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

double max_abs_value(const RealTensor& t) {
    double s = 0.0;
    for (const auto& v : t.values()) s = std::max(s, std::abs(v));
    return s;
}

}  // namespace

TEST_CASE("real-channel split and merge round trip") {
    RngStream rng = make_stream(1, SeedDomain::kMisc, 0);
    CMatrix x(3, 4);
    for (auto& z : x.data()) z = rng.complex_normal();
    const RealTensor t = to_real_channels(x);
    CHECK(t.shape().height == 3);
    CHECK(t.shape().width == 4);
    CHECK(t.shape().channels == 2);
    CHECK(from_real_channels(t) == x);

    CMatrix real_only(2, 2);
    real_only(0, 0) = 1.5;
    real_only(1, 1) = -2.0;
    const RealTensor tr = to_real_channels(real_only);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) CHECK(tr.at(i, j, 1) == 0.0);

    CMatrix imag_diag(2, 2);
    imag_diag(0, 0) = cxd(0, 1);
    imag_diag(1, 1) = cxd(0, 1);
    const RealTensor ti = to_real_channels(imag_diag);
    CHECK(ti.at(0, 0, 0) == 0.0);
    CHECK(ti.at(0, 0, 1) == 1.0);
    CHECK(ti.at(1, 1, 1) == 1.0);

    CHECK_THROWS_AS(from_real_channels(RealTensor(2, 2, 3, 1)), std::invalid_argument);
}

TEST_CASE("zeroed block is the identity map") {
    CdrnModel model = tiny_model();
    model.zero_params();
    RngStream rng = make_stream(2, SeedDomain::kMisc, 0);
    const RealTensor x = random_input(2, rng);
    auto [next, residual] = block_forward(x, model.blocks()[0], Mode::kEval);
    CHECK(max_abs_value(residual) == 0.0);
    CHECK(max_abs_diff(next, x) == 0.0);
}

TEST_CASE("block output plus residual reconstructs the input") {
    CdrnModel model = tiny_model(3);
    RngStream rng = make_stream(3, SeedDomain::kMisc, 0);
    const RealTensor x = random_input(2, rng);
    auto [next, residual] = block_forward(x, model.blocks()[0], Mode::kEval);
    CHECK(next.shape() == x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(next.values()[i] + residual.values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-15));
}

TEST_CASE("forward chains blocks and reports residual decomposition") {
    CdrnModel model = tiny_model(4);
    RngStream rng = make_stream(4, SeedDomain::kMisc, 0);
    const RealTensor x = random_input(3, rng);
    std::vector<RealTensor> residuals;
    const RealTensor out = cdrn_forward(x, model, Mode::kEval, &residuals);
    REQUIRE(residuals.size() == 2);

    RealTensor recon = x;
    for (const auto& r : residuals)
        for (std::size_t i = 0; i < recon.size(); ++i) recon.values()[i] -= r.values()[i];
    CHECK(max_abs_diff(out, recon) < 1e-12);
    CHECK(out.shape() == x.shape());
}

TEST_CASE("single-block model reduces to block_forward") {
    CdrnHyper h = tiny_hyper();
    h.depth = 1;
    CdrnModel model(h);
    RngStream rng = make_stream(5, SeedDomain::kModelInit, 0);
    model.init_params(rng);
    const RealTensor x = random_input(1, rng);
    const RealTensor out = cdrn_forward(x, model, Mode::kEval);
    auto [expect, residual] = block_forward(x, model.blocks()[0], Mode::kEval);
    CHECK(max_abs_diff(out, expect) == 0.0);
}

TEST_CASE("zero-parameter network is the identity") {
    CdrnModel model = tiny_model();
    model.zero_params();
    RngStream rng = make_stream(6, SeedDomain::kMisc, 0);
    const RealTensor x = random_input(2, rng);
    CHECK(max_abs_diff(cdrn_forward(x, model, Mode::kEval), x) == 0.0);
}

TEST_CASE("loss cases: perfect output and all-ones error") {
    CdrnModel model = tiny_model();
    model.zero_params();
    RngStream rng = make_stream(7, SeedDomain::kMisc, 0);
    const RealTensor x = random_input(2, rng);
    CHECK(cdrn_loss(model, x, x, Mode::kEval) == 0.0);

    // Identity network, label = input - 1: error tensor of ones.
    RealTensor ones_label(2, 2, 2, 2);  // wrong width for the model
    CHECK_THROWS_AS(cdrn_loss(model, RealTensor(2, 2, 2, 2), ones_label, Mode::kEval),
                    std::invalid_argument);

    CdrnHyper h = tiny_hyper();
    h.height = 2;
    h.width = 4;  // 2*4*2 = 16 entries per example
    CdrnModel id_model(h);
    id_model.zero_params();
    RealTensor input(2, 4, 2, 1), label(2, 4, 2, 1);
    for (auto& v : input.values()) v = 1.0;
    CHECK(cdrn_loss(id_model, input, label, Mode::kEval) == doctest::Approx(8.0));
}

namespace {

// Smallest |pre-activation| across all cached rectifier inputs. Finite
// differencing is only meaningful when every pre-activation stays clear of
// the kink for the whole +/- step excursion.
double relu_kink_margin(CdrnModel& model, const RealTensor& x) {
    ModelCache cache;
    cdrn_forward(x, model, Mode::kTrain, nullptr, &cache);
    double margin = 1e300;
    for (const auto& blk : cache.blocks)
        for (const auto& layer : blk.layers)
            if (layer.relu_in.size() > 0)
                for (const auto& v : layer.relu_in.values()) margin = std::min(margin, std::abs(v));
    return margin;
}

}  // namespace

TEST_CASE("full-model gradient matches finite differences") {
    CdrnModel model;
    RealTensor x, y;
    double margin = 0.0;
    for (std::uint64_t seed = 8; seed < 64; ++seed) {
        model = tiny_model(seed);
        RngStream rng = make_stream(seed, SeedDomain::kMisc, 1);
        x = random_input(2, rng);
        y = random_input(2, rng);
        margin = relu_kink_margin(model, x);
        if (margin > 2e-3) break;
    }
    REQUIRE(margin > 2e-3);

    CdrnGrads grads = CdrnGrads::like(model);
    cdrn_loss_and_grad(model, x, y, grads);

    auto params = model.parameters();
    auto loss = [&] { return cdrn_loss(model, x, y, Mode::kTrain); };
    // Roundoff in the loss evaluation limits what centered differences can
    // resolve; scale the absolute floor accordingly. True-zero gradients
    // (conv bias feeding a batch norm) then compare as zero instead of noise.
    const double floor = 1e-6 * (1.0 + std::abs(loss()));
    double worst = 0.0;
    for (std::size_t t = 0; t < params.size(); ++t) {
        // Spot-check a strided subset of each tensor to keep runtime sane.
        const std::size_t stride = std::max<std::size_t>(1, params[t].size / 12);
        for (std::size_t i = 0; i < params[t].size; i += stride) {
            worst = std::max(worst, finite_difference_check(loss, params[t].data + i, 1,
                                                            grads.buffers[t].data() + i, 1e-5, floor));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("training overfits a fixed tiny dataset") {
    CdrnModel model = tiny_model(9);
    RngStream rng = make_stream(9, SeedDomain::kMisc, 0);

    TrainingSet data;
    for (int i = 0; i < 4; ++i) {
        RealTensor label = random_input(1, rng);
        RealTensor input = label;
        for (auto& v : input.values()) v += 0.3 * rng.normal();
        data.inputs.push_back(std::move(input));
        data.labels.push_back(std::move(label));
    }

    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.epochs = 50;  // 50 steps at one batch per epoch
    cfg.seed = 9;
    const TrainReport report = train_cdrn(model, data, cfg);
    REQUIRE(report.train_loss.size() == 50);
    CHECK(report.train_loss.back() < 0.5 * report.train_loss.front());
}

TEST_CASE("training is deterministic under a fixed seed") {
    RngStream rng = make_stream(10, SeedDomain::kMisc, 0);
    TrainingSet data;
    for (int i = 0; i < 8; ++i) {
        data.labels.push_back(random_input(1, rng));
        data.inputs.push_back(random_input(1, rng));
    }
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.epochs = 5;
    cfg.seed = 77;

    auto run = [&] {
        CdrnModel model = tiny_model(11);
        const TrainReport report = train_cdrn(model, data, cfg);
        return std::make_pair(checkpoint_bytes(model), report.train_loss);
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}

TEST_CASE("zero epochs returns the model unchanged") {
    CdrnModel model = tiny_model(12);
    const auto before = checkpoint_bytes(model);
    TrainingSet data;
    RngStream rng = make_stream(12, SeedDomain::kMisc, 0);
    data.inputs.push_back(random_input(1, rng));
    data.labels.push_back(random_input(1, rng));
    TrainConfig cfg;
    cfg.epochs = 0;
    const TrainReport report = train_cdrn(model, data, cfg);
    CHECK(report.train_loss.empty());
    CHECK(checkpoint_bytes(model) == before);
}

namespace {

struct ToyPipeline {
    SystemConfig sys;
    LinkSet links;
    ReflectionSchedule sched;
    PilotBook pilots;
    double noise_var_v;

    ToyPipeline() {
        sys.bs_antennas = 3;
        sys.irs_elements = 3;
        sys.users = 1;
        sys.subframes = 4;
        sys.pilot_length = 1;
        // Unit-power links put the per-entry SNR in a regime where denoising
        // visibly helps.
        for (LinkParams* l : {&links.user_bs, &links.irs_bs, &links.user_irs}) {
            l->ref_loss = 1.0;
            l->distance_m = l->ref_distance_m;
        }
        sched = build_dft_schedule(sys.irs_elements, sys.subframes);
        pilots = build_pilot_book(sys.users, sys.pilot_length, sys.pilot_power);
        // Heavy noise: the per-entry SNR after the coarse estimate sits near
        // 0 dB, where denoising pays off on nearly every trial.
        noise_var_v = 4.0;
    }

    // (input tensor, truth) for stream index i of the given domain.
    std::pair<RealTensor, CMatrix> example(SeedDomain domain, std::uint64_t i) const {
        RngStream rng = make_stream(99, domain, i);
        const auto chan = realize_channels(sys, links, rng);
        auto obs = simulate_training_phase(chan, sched, pilots, noise_var_v, rng);
        obs[0].noise_var_z = despread_noise_var(noise_var_v, pilots.power, pilots.length());
        return {to_real_channels(denoise_observation(obs[0], sched)), chan.H[0]};
    }
};

}  // namespace

TEST_CASE("zero-parameter model reproduces the coarse estimate; trained model beats it") {
    ToyPipeline toy;

    CdrnHyper h;
    h.height = 3;
    h.width = 4;
    h.depth = 1;
    h.layers_per_block = 3;
    h.filters = 8;

    // Identity network returns the coarse estimate untouched.
    CdrnModel zero(h);
    zero.zero_params();
    {
        RngStream rng = make_stream(99, SeedDomain::kMisc, 500);
        const auto chan = realize_channels(toy.sys, toy.links, rng);
        auto obs = simulate_training_phase(chan, toy.sched, toy.pilots, toy.noise_var_v, rng);
        obs[0].noise_var_z = despread_noise_var(toy.noise_var_v, 1.0, 1);
        const CMatrix coarse = denoise_observation(obs[0], toy.sched);
        CHECK(max_abs(cdrn_estimate(obs[0], toy.sched, zero) - coarse) == 0.0);

        // Eval-mode determinism.
        CdrnModel model(h);
        RngStream ir = make_stream(5, SeedDomain::kModelInit, 0);
        model.init_params(ir);
        const CMatrix a = cdrn_estimate(obs[0], toy.sched, model);
        const CMatrix b = cdrn_estimate(obs[0], toy.sched, model);
        CHECK(a == b);
    }

    // Train on 512 examples, then compare squared errors on held-out trials.
    TrainingSet data;
    for (std::uint64_t i = 0; i < 512; ++i) {
        auto [input, truth] = toy.example(SeedDomain::kDataset, i);
        data.inputs.push_back(std::move(input));
        data.labels.push_back(to_real_channels(truth));
    }
    CdrnModel model(h);
    RngStream ir = make_stream(42, SeedDomain::kModelInit, 0);
    model.init_training_params(ir);
    TrainConfig cfg;
    cfg.batch_size = 32;
    cfg.epochs = 60;
    cfg.seed = 42;
    train_cdrn(model, data, cfg);

    int better = 0;
    const int trials = 100;
    for (int t = 0; t < trials; ++t) {
        auto [input, truth] = toy.example(SeedDomain::kSweep, std::uint64_t(t));
        const CMatrix coarse = from_real_channels(input);
        const CMatrix denoised = from_real_channels(cdrn_forward(input, model));
        if (fro_norm_sq(denoised - truth) <= fro_norm_sq(coarse - truth)) ++better;
    }
    CHECK(better >= 90);
}

TEST_CASE("checkpoint round trip is byte-stable and loads identically") {
    CdrnModel model = tiny_model(13);
    const std::string path = temp_path("irsce_test_ckpt.bin");
    save_checkpoint(model, path);
    CdrnModel loaded = load_checkpoint(path);
    CHECK(checkpoint_bytes(loaded) == checkpoint_bytes(model));

    const std::string path2 = temp_path("irsce_test_ckpt2.bin");
    save_checkpoint(loaded, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);

    RngStream rng = make_stream(14, SeedDomain::kMisc, 0);
    const RealTensor x = random_input(1, rng);
    CHECK(cdrn_forward(x, std::as_const(model)) == cdrn_forward(x, std::as_const(loaded)));

    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("truncated or corrupted checkpoints are rejected") {
    CdrnModel model = tiny_model(15);
    const std::string path = temp_path("irsce_test_ckpt_trunc.bin");
    save_checkpoint(model, path);

    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size / 2);
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("checksum"), std::runtime_error);

    save_checkpoint(model, path);
    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(64);
        char byte = 0x5A;
        f.write(&byte, 1);
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("checksum"), std::runtime_error);
    std::filesystem::remove(path);
}

TEST_CASE("activation export is consistent with the forward pass") {
    CdrnModel model = tiny_model(16);
    RngStream rng = make_stream(17, SeedDomain::kMisc, 0);
    CMatrix coarse(3, 4);
    for (auto& z : coarse.data()) z = rng.complex_normal();

    const ActivationTrace trace = export_block_activations(coarse, model);
    REQUIRE(trace.outputs.size() == 2);
    CHECK(trace.input.shape().height == 3);
    for (const auto& t : trace.outputs) {
        CHECK(t.shape().height == 3);
        CHECK(t.shape().width == 4);
        CHECK(t.shape().channels == 2);
    }
    const RealTensor direct = cdrn_forward(to_real_channels(coarse), std::as_const(model));
    CHECK(max_abs_diff(trace.outputs.back(), direct) == 0.0);

    const std::string path = temp_path("irsce_test_acts.bin");
    save_activation_trace(trace, path);
    const auto loaded = load_activation_trace(path);
    REQUIRE(loaded.size() == 3);
    CHECK(loaded[0] == trace.input);
    CHECK(loaded[2] == trace.outputs.back());
    std::filesystem::remove(path);
}
