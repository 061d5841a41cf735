// cdkit: change-detection workflow driver (synth / train / eval / infer /
// gradcheck). Exit codes: 0 success, 1 user error, 2 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "cdkit/config.hpp"
#include "cdkit/gradcheck_suite.hpp"
#include "cdkit/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Flag values override config-file values; the fully resolved set is dumped
/// into the output directory before any compute.
struct Resolver {
    cdkit::KvConfig file;

    std::string str(const std::string& key, const std::string& flag_value, const std::string& def) const {
        if (!flag_value.empty()) return flag_value;
        return file.get(key, def);
    }
    std::int64_t num(const std::string& key, std::int64_t flag_value, std::int64_t sentinel,
                     std::int64_t def) const {
        if (flag_value != sentinel) return flag_value;
        return file.get_int(key, def);
    }
    double real(const std::string& key, double flag_value, double def) const {
        if (!std::isnan(flag_value)) return flag_value;
        return file.get_double(key, def);
    }
};

std::string resolve_out_dir(const std::string& flag_value) {
    if (const char* env = std::getenv("CDKIT_OUT_DIR"); env && *env) return env;
    return flag_value;
}

void dump_resolved(const fs::path& out_dir, const std::vector<std::pair<std::string, std::string>>& kv) {
    fs::create_directories(out_dir);
    std::ofstream f(out_dir / "resolved_config.txt");
    for (const auto& [k, v] : kv) f << k << " = " << v << "\n";
}

std::vector<cdkit::BiTemporalSample> load_split_samples(const cdkit::DatasetOnDisk& ds,
                                                        const std::string& split) {
    std::vector<cdkit::BiTemporalSample> out;
    for (const auto& stem : ds.split(split)) out.push_back(ds.load(split, stem));
    return out;
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& out, std::int64_t count, std::int64_t val_count, std::int64_t test_count,
              std::int64_t size, std::uint64_t seed) {
    cdkit::SynthOptions opts;
    opts.min_edits = 7;
    opts.max_edits = 10;
    auto train = cdkit::synth_generate(count, size, seed, opts);
    cdkit::write_split(out, "train", train);
    if (val_count > 0)
        cdkit::write_split(out, "val", cdkit::synth_generate(val_count, size, seed + 1, opts));
    if (test_count > 0)
        cdkit::write_split(out, "test", cdkit::synth_generate(test_count, size, seed + 2, opts));
    std::cout << "train: " << count << "\nval: " << val_count << "\ntest: " << test_count << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

template <typename T>
int run_train(const fs::path& out_dir, const std::string& data_root, const std::string& preset,
              const cdkit::TrainConfig& tcfg) {
    auto ds = cdkit::load_dataset(data_root);
    auto train_samples = load_split_samples(ds, "train");
    if (train_samples.empty()) throw std::runtime_error("train: dataset has no train samples");
    auto val_samples = load_split_samples(ds, "val");
    const bool val_is_train = val_samples.empty();

    auto mcfg = cdkit::ModelConfig::from_preset(preset);
    mcfg.input_h = train_samples[0].h;
    mcfg.input_w = train_samples[0].w;
    mcfg.validate();

    cdkit::ChangeFormer<T> model(mcfg);
    model.init_weights(tcfg.seed);
    cdkit::AdamWState<T> opt;

    const auto n = static_cast<std::int64_t>(train_samples.size());
    const std::int64_t steps_per_epoch = (n + tcfg.batch_size - 1) / tcfg.batch_size;
    const std::int64_t total_steps = std::max<std::int64_t>(1, tcfg.epochs * steps_per_epoch);

    fs::create_directories(out_dir);
    std::ofstream log(out_dir / "train_log.jsonl");
    double best_val_f1 = -1.0;

    for (std::int64_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        const double lr0 = cdkit::lr_at(opt.step, total_steps, tcfg);
        cdkit::EpochStats stats;
        try {
            stats = cdkit::train_epoch(model, opt, train_samples, epoch, tcfg, total_steps);
        } catch (const std::runtime_error& e) {
            throw NumericalFailure(e.what());
        }
        const double val_f1 =
            cdkit::evaluate(model, val_is_train ? train_samples : val_samples).f1;
        json rec = {{"epoch", epoch},        {"mean_loss", stats.mean_loss}, {"steps", stats.steps},
                    {"lr_step0", lr0},       {"batch_size", tcfg.batch_size}, {"train_f1", stats.train_f1},
                    {"val_f1", val_f1},      {"val_split", val_is_train ? "train" : "val"}};
        std::cout << rec.dump() << "\n";
        log << rec.dump() << "\n";
        log.flush();
        if (val_f1 > best_val_f1) {
            best_val_f1 = val_f1;
            cdkit::save_checkpoint((out_dir / "best.ckpt").string(), model, &opt, epoch + 1);
        }
        cdkit::save_checkpoint((out_dir / "last.ckpt").string(), model, &opt, epoch + 1);
    }
    if (tcfg.epochs == 0) {
        cdkit::save_checkpoint((out_dir / "last.ckpt").string(), model, &opt, 0);
        cdkit::save_checkpoint((out_dir / "best.ckpt").string(), model, &opt, 0);
    }
    std::cout << "best_val_f1: " << best_val_f1 << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

template <typename T>
int run_eval(const fs::path& out_dir, const std::string& data_root, const std::string& ckpt,
             const std::string& split) {
    auto info = cdkit::peek_checkpoint(ckpt);
    cdkit::ChangeFormer<T> model(info.config);
    cdkit::load_checkpoint<T>(ckpt, model, nullptr, nullptr);

    auto ds = cdkit::load_dataset(data_root);
    auto samples = load_split_samples(ds, split);
    if (samples.empty()) throw std::runtime_error("eval: split '" + split + "' is empty");
    auto rep = cdkit::evaluate(model, samples);
    const auto text = rep.serialize();
    std::cout << text;
    fs::create_directories(out_dir);
    std::ofstream(out_dir / ("report_" + split + ".txt")) << text;
    return 0;
}

// ---------------------------------------------------------------------------

template <typename T>
int run_infer(const std::string& pre_path, const std::string& post_path, const std::string& ckpt,
              const std::string& out_path, const std::string& logits_path) {
    auto info = cdkit::peek_checkpoint(ckpt);
    cdkit::ChangeFormer<T> model(info.config);
    cdkit::load_checkpoint<T>(ckpt, model, nullptr, nullptr);

    auto load_image = [](const std::string& p) {
        auto img = cdkit::read_png(p);
        if (img.c != 3) throw std::runtime_error("infer: " + p + " must be RGB");
        auto t = cdkit::Tensor<T>::create({img.h, img.w, 3});
        for (std::size_t i = 0; i < img.px.size(); ++i)
            t->data[i] = static_cast<T>(img.px[i]) / T(255);
        return t;
    };
    auto pre = load_image(pre_path);
    auto post = load_image(post_path);
    auto logits = model.forward(pre, post, /*training=*/false);

    cdkit::ImageU8 mask = cdkit::ImageU8::make(pre->dim(0), pre->dim(1), 1);
    for (std::size_t i = 0; i < mask.px.size(); ++i)
        mask.px[i] = logits->data[2 * i + 1] > logits->data[2 * i] ? 255 : 0;
    cdkit::write_png(out_path, mask);

    if (!logits_path.empty()) {
        std::ofstream f(logits_path, std::ios::binary);
        f.write(reinterpret_cast<const char*>(logits->data.data()),
                static_cast<std::streamsize>(logits->data.size() * sizeof(T)));
    }
    std::cout << "mask: " << out_path << " (" << pre->dim(0) << "x" << pre->dim(1) << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------

int cmd_gradcheck(std::uint64_t seed) {
    auto rows = cdkit::run_gradcheck_suite(seed);
    bool all_pass = true;
    std::printf("%-24s %-14s %s\n", "op", "max_rel_error", "status");
    for (const auto& r : rows) {
        std::printf("%-24s %-14.3e %s\n", r.name.c_str(), r.max_rel_error, r.pass ? "pass" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    if (!all_pass) throw NumericalFailure("gradcheck: at least one op exceeded 1e-4");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cdkit: Siamese transformer change detection toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "key = value config file; flags override file entries");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic bi-temporal dataset");
    std::string synth_out = "synth_data";
    std::int64_t synth_count = 16, synth_val = 0, synth_test = 0, synth_size = 64;
    std::int64_t synth_seed = 0;
    synth->add_option("--out", synth_out, "output dataset directory")->capture_default_str();
    synth->add_option("--count", synth_count, "number of train samples")->capture_default_str();
    synth->add_option("--val-count", synth_val, "number of val samples")->capture_default_str();
    synth->add_option("--test-count", synth_test, "number of test samples")->capture_default_str();
    synth->add_option("--size", synth_size, "square sample size, divisible by 32")->capture_default_str();
    synth->add_option("--seed", synth_seed, "generator seed")->capture_default_str();

    // train
    auto* train = app.add_subcommand("train", "Train on a dataset directory");
    std::string train_data, train_preset, train_out = "run", train_dtype;
    std::int64_t train_epochs = -1, train_batch = -1, train_seed = -1;
    double train_lr = std::nan(""), train_wd = std::nan("");
    train->add_option("--data", train_data, "dataset root (train/val/test layout)");
    train->add_option("--preset", train_preset, "model preset: tiny or base (default tiny)");
    train->add_option("--epochs", train_epochs, "training epochs (default 200)");
    train->add_option("--batch-size", train_batch, "batch size (default 16)");
    train->add_option("--lr", train_lr, "initial learning rate, linearly decayed to 0 (default 1e-4)");
    train->add_option("--weight-decay", train_wd, "AdamW decoupled weight decay (default 0.01)");
    train->add_option("--seed", train_seed, "seed for init, shuffling, augmentation (default 0)");
    train->add_option("--out", train_out, "output directory for logs and checkpoints")->capture_default_str();
    train->add_option("--dtype", train_dtype, "float32 or float64 (default float32)");

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
    std::string eval_data, eval_ckpt, eval_split = "test", eval_out = "run";
    eval->add_option("--data", eval_data, "dataset root")->required();
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval->add_option("--split", eval_split, "train, val, or test")->capture_default_str();
    eval->add_option("--out", eval_out, "output directory for the report")->capture_default_str();

    // infer
    auto* infer = app.add_subcommand("infer", "Predict a change mask for one image pair");
    std::string infer_pre, infer_post, infer_ckpt, infer_out = "mask.png", infer_logits;
    infer->add_option("--pre", infer_pre, "earlier image (PNG)")->required();
    infer->add_option("--post", infer_post, "later image (PNG)")->required();
    infer->add_option("--checkpoint", infer_ckpt, "checkpoint file")->required();
    infer->add_option("--out", infer_out, "output mask PNG, {0,255} grayscale")->capture_default_str();
    infer->add_option("--logits", infer_logits, "optional raw logit dump path");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every op and the tiny model");
    std::int64_t gc_seed = 2024;
    gc->add_option("--seed", gc_seed, "probe seed")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        Resolver res;
        if (!config_path.empty()) res.file = cdkit::KvConfig::parse_file(config_path);

        if (synth->parsed()) {
            if (synth_size % 32 != 0)
                throw std::runtime_error("synth: size " + std::to_string(synth_size) +
                                         " not divisible by 32");
            return cmd_synth(synth_out, synth_count, synth_val, synth_test, synth_size,
                             static_cast<std::uint64_t>(synth_seed));
        }
        if (train->parsed()) {
            cdkit::TrainConfig tcfg;
            tcfg.initial_lr = res.real("lr", train_lr, 1e-4);
            tcfg.weight_decay = res.real("weight_decay", train_wd, 0.01);
            tcfg.epochs = res.num("epochs", train_epochs, -1, 200);
            tcfg.batch_size = res.num("batch_size", train_batch, -1, 16);
            tcfg.seed = static_cast<std::uint64_t>(res.num("seed", train_seed, -1, 0));
            tcfg.validate();
            const auto data = res.str("data", train_data, "");
            if (data.empty()) throw std::runtime_error("train: --data is required");
            const auto preset = res.str("preset", train_preset, "tiny");
            const auto dtype = res.str("dtype", train_dtype, "float32");
            const fs::path out_dir = resolve_out_dir(res.str("out", train_out, "run"));
            dump_resolved(out_dir, {{"command", "train"},
                                    {"data", data},
                                    {"preset", preset},
                                    {"dtype", dtype},
                                    {"epochs", std::to_string(tcfg.epochs)},
                                    {"batch_size", std::to_string(tcfg.batch_size)},
                                    {"lr", std::to_string(tcfg.initial_lr)},
                                    {"weight_decay", std::to_string(tcfg.weight_decay)},
                                    {"seed", std::to_string(tcfg.seed)}});
            if (dtype == "float32") return run_train<float>(out_dir, data, preset, tcfg);
            if (dtype == "float64") return run_train<double>(out_dir, data, preset, tcfg);
            throw std::runtime_error("train: unknown dtype " + dtype);
        }
        if (eval->parsed()) {
            const fs::path out_dir = resolve_out_dir(eval_out);
            const auto dtype = cdkit::peek_checkpoint(eval_ckpt).dtype;
            if (dtype == "float32") return run_eval<float>(out_dir, eval_data, eval_ckpt, eval_split);
            return run_eval<double>(out_dir, eval_data, eval_ckpt, eval_split);
        }
        if (infer->parsed()) {
            const auto dtype = cdkit::peek_checkpoint(infer_ckpt).dtype;
            if (dtype == "float32")
                return run_infer<float>(infer_pre, infer_post, infer_ckpt, infer_out, infer_logits);
            return run_infer<double>(infer_pre, infer_post, infer_ckpt, infer_out, infer_logits);
        }
        if (gc->parsed()) return cmd_gradcheck(static_cast<std::uint64_t>(gc_seed));
    } catch (const NumericalFailure& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
