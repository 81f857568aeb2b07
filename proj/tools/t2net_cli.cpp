// Command-line front end: synthetic dataset generation, training, evaluation,
// ablation comparison and error-map image emission.
//
// Exit codes: 0 success, 2 bad arguments, 3 bad artifact file, 4 numeric
// failure during training.

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>

#include "t2net/serialize.hpp"
#include "t2net/training.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace t2net;

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitBadArgs = 2;
constexpr int kExitBadArtifact = 3;
constexpr int kExitNumeric = 4;

bool power_of_two(int n) { return n >= 1 && (n & (n - 1)) == 0; }

void apply_thread_env() {
#ifdef _OPENMP
    if (const char* env = std::getenv("THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) omp_set_num_threads(n);
    }
#endif
}

void print_kv(const std::string& key, const std::string& value) {
    std::cout << "  " << key << " = " << value << "\n";
}

// ---- config files ----

TrainConfig load_train_config(const std::string& path) {
    TrainConfig cfg;
    if (path.empty()) return cfg;
    const auto kv = read_kv(path);
    for (const auto& [key, value] : kv) {
        try {
            if (key == "alpha") cfg.alpha = std::stod(value);
            else if (key == "beta") cfg.beta = std::stod(value);
            else if (key == "lr") cfg.lr = std::stod(value);
            else if (key == "steps") cfg.steps = std::stoi(value);
            else if (key == "batch") cfg.batch = std::stoi(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "n_stages") cfg.model.n_stages = std::stoi(value);
            else if (key == "channels") cfg.model.channels = std::stoi(value);
            else if (key == "scale") cfg.model.scale = std::stoi(value);
            else if (key == "patch_k") cfg.model.patch_k = std::stoi(value);
            else if (key == "zero_init_outputs") cfg.model.zero_init_outputs = (value == "true" || value == "1");
            else if (key == "variant") cfg.variant = variant_from_name(value);
            else throw ParameterError("unknown config key '" + key + "' in " + path);
        } catch (const std::invalid_argument&) {
            throw ParameterError("config " + path + ": cannot parse " + key + " = '" + value + "'");
        } catch (const std::out_of_range&) {
            throw ParameterError("config " + path + ": value out of range for " + key);
        }
    }
    return cfg;
}

void print_train_config(const TrainConfig& cfg) {
    print_kv("alpha", std::to_string(cfg.alpha));
    print_kv("beta", std::to_string(cfg.beta));
    print_kv("lr", std::to_string(cfg.lr));
    print_kv("steps", std::to_string(cfg.steps));
    print_kv("batch", std::to_string(cfg.batch));
    print_kv("seed", std::to_string(cfg.seed));
    print_kv("n_stages", std::to_string(cfg.model.n_stages));
    print_kv("channels", std::to_string(cfg.model.channels));
    print_kv("scale", std::to_string(cfg.model.scale));
    print_kv("patch_k", std::to_string(cfg.model.patch_k));
    print_kv("zero_init_outputs", cfg.model.zero_init_outputs ? "true" : "false");
    print_kv("variant", variant_name(cfg.variant));
}

// ---- metric tables ----

std::string fmt(double v, int prec = 3) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << v;
    return os.str();
}

void print_metric_row(const std::string& label, const MetricReport& sr, const MetricReport* rec) {
    std::cout << std::left << std::setw(14) << label << std::right << std::setw(9)
              << fmt(sr.psnr_db) << std::setw(8) << fmt(sr.ssim) << std::setw(8) << fmt(sr.nmse);
    if (rec)
        std::cout << std::setw(9) << fmt(rec->psnr_db) << std::setw(8) << fmt(rec->ssim)
                  << std::setw(8) << fmt(rec->nmse);
    else
        std::cout << std::setw(9) << "-" << std::setw(8) << "-" << std::setw(8) << "-";
    std::cout << "\n";
}

void print_metric_header() {
    std::cout << std::left << std::setw(14) << "row" << std::right << std::setw(9) << "sr_psnr"
              << std::setw(8) << "ssim" << std::setw(8) << "nmse" << std::setw(9) << "rec_psnr"
              << std::setw(8) << "ssim" << std::setw(8) << "nmse" << "\n";
}

// ---- subcommands ----

int run_gen_data(const std::string& out_dir, int slices, int size, int scale, double accel,
                 double center_frac, std::uint64_t seed, int ellipses, bool verify) {
    std::cout << "gen-data\n";
    print_kv("out", out_dir);
    print_kv("slices", std::to_string(slices));
    print_kv("size", std::to_string(size));
    print_kv("scale", std::to_string(scale));
    print_kv("accel", std::to_string(accel));
    print_kv("center-frac", std::to_string(center_frac));
    print_kv("seed", std::to_string(seed));
    print_kv("ellipses", std::to_string(ellipses));
    print_kv("verify", verify ? "true" : "false");

    if (slices < 0) throw ParameterError("gen-data: slices must be >= 0");
    if (!power_of_two(size)) throw ParameterError("gen-data: size must be a power of two");
    if (scale < 1 || size % scale != 0)
        throw ParameterError("gen-data: size must be divisible by scale");

    DatasetSpec spec;
    spec.slices = slices;
    spec.size = size;
    spec.scale = scale;
    spec.acceleration = accel;
    spec.center_fraction = center_frac;
    spec.ellipses = ellipses;
    spec.seed = seed;

    fs::create_directories(out_dir);
    std::vector<ManifestEntry> entries;
    for (int i = 0; i < slices; ++i) {
        auto sample = generate_slice(spec, i);
        std::ostringstream name;
        name << "slice_" << std::setw(4) << std::setfill('0') << i << ".t2n";
        save_sample(out_dir + "/" + name.str(), sample);
        entries.push_back({name.str(), slice_phantom_seed(spec, i), slice_mask_seed(spec, i)});
    }
    write_manifest(out_dir + "/manifest.txt", entries);
    std::cout << "wrote " << slices << " slices to " << out_dir << "\n";

    if (verify) {
        int checked = 0;
        for (const auto& e : entries) {
            auto sample = load_sample(out_dir + "/" + e.file);
            auto regen = generate_slice(spec, checked);
            if (sample.input_lr->values != regen.input_lr->values ||
                sample.target_rec->values != regen.target_rec->values ||
                sample.target_sr->values != regen.target_sr->values)
                throw IoError("verify: " + e.file + " does not reproduce from its seeds");
            if (accel == 1.0) {
                for (std::size_t i = 0; i < sample.input_lr->numel(); ++i)
                    if (std::fabs(sample.input_lr->values[i] - sample.target_rec->values[i]) > 1e-5)
                        throw IoError("verify: " + e.file +
                                      ": full mask but input differs from target_rec");
                if (scale == 1)
                    for (std::size_t i = 0; i < sample.input_lr->numel(); ++i)
                        if (std::fabs(sample.input_lr->values[i] - sample.target_sr->values[i]) > 1e-5)
                            throw IoError("verify: " + e.file +
                                          ": identity pipeline but input differs from target_sr");
            }
            ++checked;
        }
        std::cout << "verified " << checked << " slices\n";
    }
    return kExitOk;
}

int run_train(const std::string& data_dir, const std::string& config_path,
              const std::string& out_ckpt) {
    auto cfg = load_train_config(config_path);
    std::cout << "train\n";
    print_kv("data", data_dir);
    print_kv("config", config_path.empty() ? "(defaults)" : config_path);
    print_kv("out", out_ckpt);
    print_train_config(cfg);

    auto dataset = load_dataset(data_dir);
    auto result = train(dataset, cfg);
    save_checkpoint(out_ckpt, result.params, cfg.model, cfg.variant);
    write_train_log(out_ckpt + ".log.csv", result.log.rows);
    const double first = result.log.rows.empty() ? 0.0 : result.log.rows.front().total;
    const double last = result.log.rows.empty() ? 0.0 : result.log.rows.back().total;
    std::cout << "trained " << cfg.steps << " steps; loss " << fmt(first, 6) << " -> "
              << fmt(last, 6) << "\n";
    std::cout << "checkpoint: " << out_ckpt << "\n";
    return kExitOk;
}

int run_eval(const std::string& data_dir, const std::string& ckpt_path) {
    std::cout << "eval\n";
    print_kv("data", data_dir);
    print_kv("ckpt", ckpt_path);

    auto ckpt = load_checkpoint(ckpt_path);
    print_kv("n_stages", std::to_string(ckpt.cfg.n_stages));
    print_kv("channels", std::to_string(ckpt.cfg.channels));
    print_kv("scale", std::to_string(ckpt.cfg.scale));
    print_kv("variant", variant_name(ckpt.variant));

    auto dataset = load_dataset(data_dir);
    auto report = evaluate(ckpt.params, dataset, ckpt.cfg, ckpt.variant);
    print_metric_header();
    print_metric_row("model", report.sr, report.has_rec ? &report.rec : nullptr);
    print_metric_row("baseline", report.baseline_sr, &report.baseline_rec);

    KvPairs records = {
        {"dataset", data_dir},
        {"scale", std::to_string(ckpt.cfg.scale)},
        {"variant", variant_name(ckpt.variant)},
        {"sr_psnr", fmt(report.sr.psnr_db, 6)},
        {"sr_ssim", fmt(report.sr.ssim, 6)},
        {"sr_nmse", fmt(report.sr.nmse, 6)},
        {"baseline_sr_psnr", fmt(report.baseline_sr.psnr_db, 6)},
        {"baseline_rec_psnr", fmt(report.baseline_rec.psnr_db, 6)},
    };
    if (report.has_rec) {
        records.insert(records.begin() + 6, {"rec_psnr", fmt(report.rec.psnr_db, 6)});
        records.insert(records.begin() + 7, {"rec_ssim", fmt(report.rec.ssim, 6)});
        records.insert(records.begin() + 8, {"rec_nmse", fmt(report.rec.nmse, 6)});
    }
    write_kv(ckpt_path + ".eval", records);
    return kExitOk;
}

int run_ablate(const std::string& data_dir, const std::string& config_path) {
    auto base = load_train_config(config_path);
    std::cout << "ablate\n";
    print_kv("data", data_dir);
    print_kv("config", config_path.empty() ? "(defaults)" : config_path);
    print_train_config(base);

    auto dataset = load_dataset(data_dir);
    struct Row {
        std::string label;
        Variant variant;
        EvalReport report;
    };
    std::vector<Row> rows = {{"w/o Rec", Variant::NoRec, {}},
                             {"w/o Htt", Variant::NoTt, {}},
                             {"T2Net", Variant::Full, {}}};
    for (auto& row : rows) {
        TrainConfig cfg = base;
        cfg.variant = row.variant;
        auto result = train(dataset, cfg);
        row.report = evaluate(result.params, dataset, cfg.model, cfg.variant);
        std::cout << "trained variant " << variant_name(row.variant) << "\n";
    }
    print_metric_header();
    for (const auto& row : rows)
        print_metric_row(row.label, row.report.sr, row.report.has_rec ? &row.report.rec : nullptr);
    return kExitOk;
}

std::vector<std::uint8_t> to_bytes(const TensorPtr& img, double scale_constant) {
    std::vector<std::uint8_t> out(img->numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = std::clamp(static_cast<double>(img->values[i]) * scale_constant, 0.0, 255.0);
        out[i] = static_cast<std::uint8_t>(std::lround(v));
    }
    return out;
}

int run_error_map(const std::string& ckpt_path, const std::string& sample_path,
                  const std::string& prefix) {
    std::cout << "error-map\n";
    print_kv("ckpt", ckpt_path);
    print_kv("sample", sample_path);
    print_kv("out", prefix);

    auto ckpt = load_checkpoint(ckpt_path);
    auto sample = load_sample(sample_path);
    auto fwd = ablation_forward(ckpt.variant, sample.input_lr, ckpt.params, ckpt.cfg,
                                static_cast<Tape*>(nullptr));

    auto err = make_tensor<float>(sample.target_sr->shape);
    float err_max = 0.0f;
    for (std::size_t i = 0; i < err->numel(); ++i) {
        err->values[i] = std::fabs(fwd.x_sr->values[i] - sample.target_sr->values[i]);
        err_max = std::max(err_max, err->values[i]);
    }
    const double err_scale = err_max > 0.0f ? 255.0 / err_max : 0.0;
    std::cout << "error scale constant: " << err_scale << " (max error " << err_max << ")\n";

    auto write_image = [](const std::string& path, const TensorPtr& img, double c) {
        write_pgm(path, to_bytes(img, c), img->dim(3), img->dim(2));
    };
    write_image(prefix + "_input.pgm", sample.input_lr, 255.0);
    write_image(prefix + "_sr.pgm", fwd.x_sr, 255.0);
    if (fwd.x_rec) write_image(prefix + "_rec.pgm", fwd.x_rec, 255.0);
    write_image(prefix + "_target.pgm", sample.target_sr, 255.0);
    write_image(prefix + "_err.pgm", err, err_scale);
    std::cout << "wrote " << prefix << "_{input,sr,rec,target,err}.pgm\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    apply_thread_env();
    CLI::App app{"T2Net: joint MRI reconstruction and super-resolution at desk scale"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic phantom dataset");
    std::string gen_out;
    int gen_slices = 16, gen_size = 64, gen_scale = 2, gen_ellipses = 6;
    double gen_accel = 6.0, gen_cf = 0.0625;
    std::uint64_t gen_seed = 17;
    bool gen_verify = false;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--slices", gen_slices, "Number of slices");
    gen->add_option("--size", gen_size, "HR image size (power of two)");
    gen->add_option("--scale", gen_scale, "SR scale factor");
    gen->add_option("--accel", gen_accel, "Cartesian acceleration factor");
    gen->add_option("--center-frac", gen_cf, "Fully sampled center fraction");
    gen->add_option("--seed", gen_seed, "Base seed");
    gen->add_option("--ellipses", gen_ellipses, "Ellipses per phantom");
    gen->add_flag("--verify", gen_verify, "Re-load and check every written slice");

    // train
    auto* tr = app.add_subcommand("train", "Train a model on a dataset directory");
    std::string tr_data, tr_config, tr_out;
    tr->add_option("--data", tr_data, "Dataset directory")->required();
    tr->add_option("--config", tr_config, "key:value config file");
    tr->add_option("--out", tr_out, "Checkpoint output path")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    std::string ev_data, ev_ckpt;
    ev->add_option("--data", ev_data, "Dataset directory")->required();
    ev->add_option("--ckpt", ev_ckpt, "Checkpoint path")->required();

    // ablate
    auto* ab = app.add_subcommand("ablate", "Train and compare full / no_tt / no_rec");
    std::string ab_data, ab_config;
    ab->add_option("--data", ab_data, "Dataset directory")->required();
    ab->add_option("--config", ab_config, "key:value config file");

    // error-map
    auto* em = app.add_subcommand("error-map", "Emit PGM images incl. |x_sr - target| map");
    std::string em_ckpt, em_sample, em_out;
    em->add_option("--ckpt", em_ckpt, "Checkpoint path")->required();
    em->add_option("--sample", em_sample, "Sample file")->required();
    em->add_option("--out", em_out, "Output path prefix")->required();

    try {
        app.parse(argc, argv);
        if (gen->parsed())
            return run_gen_data(gen_out, gen_slices, gen_size, gen_scale, gen_accel, gen_cf,
                                gen_seed, gen_ellipses, gen_verify);
        if (tr->parsed()) return run_train(tr_data, tr_config, tr_out);
        if (ev->parsed()) return run_eval(ev_data, ev_ckpt);
        if (ab->parsed()) return run_ablate(ab_data, ab_config);
        if (em->parsed()) return run_error_map(em_ckpt, em_sample, em_out);
        return kExitBadArgs;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitBadArgs;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const IoError& e) {
        std::cerr << "artifact error: " << e.what() << "\n";
        return kExitBadArtifact;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadArgs;
    }
}
