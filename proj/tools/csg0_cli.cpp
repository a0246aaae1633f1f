// csg0: command-line driver for continual semantic image synthesis runs.
//
// Exit codes: 0 success, 1 verification failure, 2 invalid input or config.

#include "csg0/checkpoint.hpp"
#include "csg0/errors.hpp"
#include "csg0/image_io.hpp"
#include "csg0/metrics.hpp"
#include "csg0/rng.hpp"
#include "csg0/run_config.hpp"
#include "csg0/toyscenes.hpp"
#include "csg0/trainer.hpp"

#include <CLI11.hpp>

#include <malloc.h>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace csg0;

namespace {

constexpr int kVerifyFailed = 1;
constexpr int kInvalid = 2;

// Held-out masks and reference images come from seeds far from training data.
constexpr std::uint64_t kHeldOutOffset = 1'000'000;

struct TaskFlags {
    std::optional<std::size_t> iterations;
    std::optional<std::size_t> batch_size;
    std::optional<double> lr;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> dataset_size;
    std::optional<std::size_t> subset_size;
    std::optional<std::string> output_dir;

    void add_to(CLI::App* cmd, bool with_seed = true) {
        cmd->add_option("--iterations", iterations, "Training iterations (overrides the config)");
        cmd->add_option("--batch-size", batch_size, "Batch size (overrides the config)");
        cmd->add_option("--lr", lr, "Learning rate (overrides the config)");
        if (with_seed) {
            cmd->add_option("--seed", seed, "Seed (overrides the config)");
        }
        cmd->add_option("--dataset-size", dataset_size, "Number of toy scenes generated for the step");
        cmd->add_option("--subset-size", subset_size, "Train on the first N scenes only (low-data regime)");
        cmd->add_option("--output-dir", output_dir, "Output directory (overrides the config)");
    }

    // flag > config file > default
    TaskConfig apply(TaskConfig t) const {
        if (iterations) t.iterations = *iterations;
        if (batch_size) t.batch_size = *batch_size;
        if (lr) t.lr = *lr;
        if (seed) t.seed = *seed;
        if (dataset_size) t.dataset_size = *dataset_size;
        if (subset_size) t.subset_size = *subset_size;
        if (t.subset_size && *t.subset_size > t.dataset_size) {
            throw ConfigError("subset_size " + std::to_string(*t.subset_size) + " exceeds dataset_size " +
                              std::to_string(t.dataset_size));
        }
        return t;
    }
};

struct Stream {
    RunConfig config;
    LabelRegistry registry;
    std::vector<DomainSpec> specs;

    const DomainSpec& spec(std::string_view domain) const {
        for (const auto& s : specs) {
            if (s.domain == domain) return s;
        }
        throw ValidationError("domain '" + std::string(domain) + "' is not part of the configured stream");
    }
};

Stream load_stream(const std::string& config_path) {
    Stream s;
    s.config = load_run_config(config_path);
    if (!fs::exists(s.config.registry)) {
        throw ValidationError("registry file not found: " + s.config.registry.string());
    }
    s.registry = LabelRegistry::from_file(s.config.registry);
    if (s.config.domains.size() > s.registry.num_steps()) {
        throw ConfigError("config lists more domains than the registry stream");
    }
    for (std::size_t k = 0; k < s.config.domains.size(); ++k) {
        auto spec = load_domain_spec(s.config.domains[k]);
        if (spec.domain != s.registry.step(k).domain) {
            throw ConfigError("domain spec " + s.config.domains[k].string() + " is '" + spec.domain +
                              "' but step " + std::to_string(k) + " of the registry is '" +
                              s.registry.step(k).domain + "'");
        }
        if (spec.height != s.config.generator.height || spec.width != s.config.generator.width) {
            throw ConfigError("domain '" + spec.domain + "' renders a different image size than the generator");
        }
        check_spec_against(spec, s.registry);
        s.specs.push_back(std::move(spec));
    }
    return s;
}

fs::path output_dir(const Stream& s, const TaskFlags& flags) {
    fs::path out = flags.output_dir ? fs::path(*flags.output_dir) : s.config.output_dir;
    fs::create_directories(out);
    return out;
}

fs::path checkpoint_path(const fs::path& dir, std::size_t step) { return dir / ("step" + std::to_string(step) + ".csg0"); }

std::string hex(std::uint64_t v) {
    std::ostringstream ss;
    ss << "0x" << std::hex << std::setw(16) << std::setfill('0') << v;
    return ss.str();
}

void print_digests(const fs::path& path) {
    for (const auto& sec : read_sections(read_file(path))) {
        std::cout << "  " << std::left << std::setw(10) << sec.name << ' ' << hex(sec.digest) << '\n';
    }
}

void print_counts(const GeneratorModel& model, std::size_t step) {
    const auto c = count_params(model, step);
    std::cout << "step " << step << " (" << model.registry().step(step).domain << "): new params " << c.new_params
              << " / total params " << c.total_params << " (" << std::fixed << std::setprecision(3)
              << static_cast<double>(c.new_params) / static_cast<double>(c.total_params) << ")\n"
              << std::defaultfloat;
}

std::vector<Scene> training_data(const Stream& s, std::size_t step, const TaskConfig& task) {
    return make_dataset(s.specs.at(step), task.dataset_size, task.seed);
}

std::vector<Scene> held_out(const DomainSpec& spec, std::size_t n, std::uint64_t seed) {
    return make_dataset(spec, n, kHeldOutOffset + seed);
}

int run_pretrain(const std::string& config_path, const TaskFlags& flags) {
    const auto s = load_stream(config_path);
    const auto task = flags.apply(s.config.task(0));
    const auto out = output_dir(s, flags);
    const auto data = training_data(s, 0, task);
    std::ofstream log(out / "step0.jsonl", std::ios::trunc);
    auto opts = options_from_task(task, s.config.discriminator);
    opts.log = &log;
    const auto model = pretrain(s.config.generator, s.registry, data, opts);
    const auto path = checkpoint_path(out, 0);
    save_checkpoint(path, model);
    std::cout << "wrote " << path.string() << '\n';
    print_digests(path);
    print_counts(model, 0);
    return 0;
}

int run_continue(const std::string& config_path, std::size_t step, const std::optional<std::string>& ckpt,
                 const TaskFlags& flags) {
    const auto s = load_stream(config_path);
    if (step == 0 || step >= s.specs.size()) {
        throw ValidationError("continue: step must be in [1, " + std::to_string(s.specs.size() - 1) + "]");
    }
    const auto task = flags.apply(s.config.task(step));
    const auto out = output_dir(s, flags);
    const fs::path in = ckpt ? fs::path(*ckpt) : checkpoint_path(out, step - 1);
    auto model = load_checkpoint(in);
    if (!(model.config() == s.config.generator)) {
        throw ConfigError("checkpoint generator config differs from " + config_path);
    }
    const auto data = training_data(s, step, task);
    std::ofstream log(out / ("step" + std::to_string(step) + ".jsonl"), std::ios::trunc);
    auto opts = options_from_task(task, s.config.discriminator);
    opts.log = &log;
    continue_domain(model, step, data, opts);
    const auto path = checkpoint_path(out, step);
    save_checkpoint(path, model);
    std::cout << "wrote " << path.string() << '\n';
    print_digests(path);
    print_counts(model, step);
    return 0;
}

int run_sample(const std::string& config_path, const std::string& ckpt, const std::string& domain,
               const std::optional<std::string>& mask_domain, std::size_t n, std::uint64_t seed,
               const std::string& out_dir) {
    const auto s = load_stream(config_path);
    const auto model = load_checkpoint(ckpt);
    model.domain_step(domain);
    const auto& source = s.spec(mask_domain.value_or(domain));
    fs::create_directories(out_dir);
    const auto scenes = held_out(source, n, seed);
    for (std::size_t i = 0; i < n; ++i) {
        validate_map(scenes[i].mask, model.registry(), domain);
        const std::vector<SemanticMap> maps{scenes[i].mask};
        const Tensor img = generate(model, sample_noise(1, model.config().z_dim, hash_combine(seed, i)), maps, domain);
        const std::string stem = "sample_" + std::to_string(i);
        write_ppm(fs::path(out_dir) / (stem + ".ppm"), img);
        write_pgm(fs::path(out_dir) / (stem + "_mask.pgm"), scenes[i].mask);
    }
    std::cout << "wrote " << n << " samples of domain " << domain << " (masks from " << source.domain << ") to "
              << out_dir << '\n';
    return 0;
}

int run_verify(const std::string& before, const std::string& after, std::size_t n, std::uint64_t seed) {
    const std::string a = read_file(before);
    const std::string b = read_file(after);
    const auto probes = make_probes(decode_checkpoint(a), n, seed);
    const auto report = verify_zero_forgetting(a, b, probes);
    for (std::size_t i = 0; i < probes.size(); ++i) {
        std::cout << "probe " << i << " domain " << probes[i].domain << " max_abs_diff " << report.probe_diffs[i]
                  << '\n';
    }
    for (const auto& m : report.digest_mismatches) {
        std::cout << "digest mismatch " << m << '\n';
    }
    std::cout << (report.pass ? "PASS" : "FAIL") << '\n';
    return report.pass ? 0 : kVerifyFailed;
}

struct EvalResult {
    double fid = 0.0;
    double miou = 0.0;
};

EvalResult evaluate(const GeneratorModel& model, const DomainSpec& spec, const Segmenter& seg, std::size_t n,
                    std::uint64_t seed) {
    const FeatureExtractor fe;
    const auto real = held_out(spec, n, seed);
    const auto probes = held_out(spec, n, seed + n);
    std::vector<Tensor> real_images;
    std::vector<Tensor> fake_images;
    std::vector<SemanticMap> masks;
    for (std::size_t i = 0; i < n; ++i) {
        real_images.push_back(real[i].image);
        masks.push_back(probes[i].mask);
        const std::vector<SemanticMap> one{probes[i].mask};
        fake_images.push_back(
            generate(model, sample_noise(1, model.config().z_dim, hash_combine(seed, i)), one, spec.domain));
    }
    EvalResult r;
    r.fid = proxy_fid(summarize(real_images, fe), summarize(fake_images, fe));
    r.miou = segmentation_miou(seg, fake_images, masks);
    return r;
}

int run_eval(const std::string& config_path, const std::string& ckpt, const std::string& domain, std::size_t n,
             std::uint64_t seed, const std::optional<std::string>& compare, std::size_t seg_iters,
             const std::string& run_id, const std::optional<std::string>& out_path, const TaskFlags& flags) {
    if (n < 2) {
        throw ValidationError("eval: --n must be at least 2");
    }
    if (compare && *compare != "scratch") {
        throw ValidationError("eval: --compare only accepts 'scratch'");
    }
    const auto s = load_stream(config_path);
    const auto model = load_checkpoint(ckpt);
    const std::size_t step = model.domain_step(domain);
    const auto& spec = s.spec(domain);
    const std::size_t classes = model.registry().class_count(step);
    const auto seg_data = make_dataset(spec, 100, 2 * kHeldOutOffset + seed);
    const auto seg = train_segmenter(seg_data, classes, seg_iters, seed);

    std::ofstream file;
    if (out_path) {
        file.open(*out_path, std::ios::trunc);
        if (!file) throw ValidationError("cannot write " + *out_path);
    }
    std::ostream& out = out_path ? file : std::cout;
    out << "run_id,step,metric,value\n";
    const auto counts = count_params(model, step);
    const auto r = evaluate(model, spec, seg, n, seed);
    write_metric_row(out, run_id, step, "proxy_fid", r.fid);
    write_metric_row(out, run_id, step, "gan_test_miou", r.miou);
    write_metric_row(out, run_id, step, "new_params", static_cast<double>(counts.new_params));
    write_metric_row(out, run_id, step, "total_params", static_cast<double>(counts.total_params));
    if (compare) {
        const auto task = flags.apply(s.config.task(step));
        const auto data = training_data(s, step, task);
        const auto scratch =
            train_scratch(s.config.generator, model.registry(), step, data, options_from_task(task, s.config.discriminator));
        const auto rs = evaluate(scratch, spec, seg, n, seed);
        const std::string id = run_id + "-scratch";
        write_metric_row(out, id, step, "proxy_fid", rs.fid);
        write_metric_row(out, id, step, "gan_test_miou", rs.miou);
        write_metric_row(out, id, step, "new_params", static_cast<double>(scratch.base_size()));
        write_metric_row(out, id, step, "total_params", static_cast<double>(scratch.base_size()));
    }
    return 0;
}

int run_scenes(const std::string& config_path, const std::string& domain, std::size_t n, std::uint64_t seed,
               const std::string& out_dir) {
    const auto s = load_stream(config_path);
    const auto& spec = s.spec(domain);
    fs::create_directories(out_dir);
    for (const auto& scene : make_dataset(spec, n, seed)) {
        const std::string stem = domain + "_" + std::to_string(scene.seed);
        write_ppm(fs::path(out_dir) / (stem + ".ppm"), scene.image);
        write_pgm(fs::path(out_dir) / (stem + ".pgm"), scene.mask);
    }
    std::cout << "wrote " << n << " scenes of domain " << domain << " to " << out_dir << '\n';
    return 0;
}

int run_lowdata(const std::string& config_path, const std::string& ckpt, std::size_t step,
                const std::vector<std::size_t>& sizes, std::size_t n, const TaskFlags& flags) {
    const auto s = load_stream(config_path);
    const auto base = load_checkpoint(ckpt);
    if (step != base.trained_steps() || step >= s.specs.size()) {
        throw ValidationError("lowdata: checkpoint is trained through step " + std::to_string(base.trained_steps() - 1) +
                              ", cannot sweep step " + std::to_string(step));
    }
    auto task = flags.apply(s.config.task(step));
    const auto& spec = s.specs[step];
    const FeatureExtractor fe;
    const auto real = held_out(spec, n, task.seed);
    const auto probes = held_out(spec, n, task.seed + n);
    std::vector<Tensor> real_images;
    for (const auto& r : real) real_images.push_back(r.image);
    const auto real_summary = summarize(real_images, fe);
    auto fid_of = [&](const GeneratorModel& m) {
        std::vector<Tensor> fake;
        for (std::size_t i = 0; i < n; ++i) {
            const std::vector<SemanticMap> one{probes[i].mask};
            fake.push_back(generate(m, sample_noise(1, m.config().z_dim, hash_combine(task.seed, i)), one, spec.domain));
        }
        return proxy_fid(real_summary, summarize(fake, fe));
    };
    std::cout << "run_id,step,metric,value\n";
    for (std::size_t size : sizes) {
        if (size == 0 || size > task.dataset_size) {
            throw ValidationError("lowdata: subset size " + std::to_string(size) + " outside [1, dataset_size]");
        }
        task.subset_size = size;
        const auto data = training_data(s, step, task);
        const auto opts = options_from_task(task, s.config.discriminator);
        auto cont = base.clone();
        continue_domain(cont, step, data, opts);
        const auto scratch = train_scratch(s.config.generator, base.registry(), step, data, opts);
        write_metric_row(std::cout, "csg0-n" + std::to_string(size), step, "proxy_fid", fid_of(cont));
        write_metric_row(std::cout, "scratch-n" + std::to_string(size), step, "proxy_fid", fid_of(scratch));
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    // Tensor buffers are freed and reallocated every iteration; keep them in the heap.
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    CLI::App app{"csg0: continual semantic image synthesis with per-domain parameter deltas"};
    app.require_subcommand(1);

    std::string config;
    TaskFlags pre_flags;
    auto* pre = app.add_subcommand("pretrain", "Train the base model on the first domain of the stream");
    pre->add_option("--config", config, "Run config (JSON)")->required();
    pre_flags.add_to(pre);

    std::size_t step = 0;
    std::optional<std::string> ckpt_in;
    TaskFlags cont_flags;
    auto* cont = app.add_subcommand("continue", "Add and train the delta for the next domain");
    cont->add_option("--config", config, "Run config (JSON)")->required();
    cont->add_option("--step", step, "Stream step to train (1 = second domain)")->required();
    cont->add_option("--checkpoint", ckpt_in, "Input checkpoint (default: <output_dir>/step<k-1>.csg0)");
    cont_flags.add_to(cont);

    std::string ckpt;
    std::string domain;
    std::optional<std::string> mask_domain;
    std::size_t n = 4;
    std::uint64_t seed = 0;
    std::string out_dir = "samples";
    auto* sample = app.add_subcommand("sample", "Generate images for a domain");
    sample->add_option("--config", config, "Run config (JSON)")->required();
    sample->add_option("--checkpoint", ckpt, "Checkpoint")->required();
    sample->add_option("--domain", domain, "Domain whose parameters generate")->required();
    sample->add_option("--mask-domain", mask_domain, "Domain whose toy masks condition the samples (cross sampling)");
    sample->add_option("--n", n, "Number of samples");
    sample->add_option("--seed", seed, "Seed for masks and noise");
    sample->add_option("--out", out_dir, "Output directory");

    std::string before;
    std::string after;
    std::size_t probes = 10;
    auto* verify = app.add_subcommand("verify", "Check that earlier domains generate identically in two checkpoints");
    verify->add_option("--before", before, "Checkpoint before the continual step")->required();
    verify->add_option("--after", after, "Checkpoint after the continual step")->required();
    verify->add_option("--probes", probes, "Number of random probes");
    verify->add_option("--seed", seed, "Probe seed");

    std::size_t eval_n = 50;
    std::optional<std::string> compare;
    std::size_t seg_iters = 400;
    std::string run_id = "csg0";
    std::optional<std::string> out_csv;
    TaskFlags eval_flags;
    auto* eval = app.add_subcommand("eval", "Emit proxy-FID, GAN-test mIoU and parameter counts as CSV");
    eval->add_option("--config", config, "Run config (JSON)")->required();
    eval->add_option("--checkpoint", ckpt, "Checkpoint")->required();
    eval->add_option("--domain", domain, "Domain to evaluate")->required();
    eval->add_option("--n", eval_n, "Number of generated and reference images");
    eval->add_option("--seed", seed, "Evaluation seed");
    eval->add_option("--compare", compare, "Also train and evaluate a baseline ('scratch')");
    eval->add_option("--segmenter-iters", seg_iters, "Training iterations of the GAN-test segmenter");
    eval->add_option("--run-id", run_id, "run_id column value");
    eval->add_option("--out", out_csv, "CSV path (default: stdout)");
    eval_flags.add_to(eval, false);

    std::size_t scene_n = 8;
    auto* scenes = app.add_subcommand("scenes", "Export toy scenes as PPM images and PGM masks");
    scenes->add_option("--config", config, "Run config (JSON)")->required();
    scenes->add_option("--domain", domain, "Domain")->required();
    scenes->add_option("--n", scene_n, "Number of scenes");
    scenes->add_option("--seed", seed, "First scene seed");
    scenes->add_option("--out", out_dir, "Output directory");

    std::vector<std::size_t> sizes{20, 50, 100, 200, 300};
    std::size_t low_n = 50;
    TaskFlags low_flags;
    auto* low = app.add_subcommand("lowdata", "Continual vs from-scratch proxy-FID over training subset sizes");
    low->add_option("--config", config, "Run config (JSON)")->required();
    low->add_option("--checkpoint", ckpt, "Checkpoint trained through step-1")->required();
    low->add_option("--step", step, "Stream step to sweep")->required();
    low->add_option("--sizes", sizes, "Subset sizes")->delimiter(',');
    low->add_option("--n", low_n, "Images per proxy-FID summary");
    low_flags.add_to(low);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kInvalid;
    }

    try {
        if (pre->parsed()) return run_pretrain(config, pre_flags);
        if (cont->parsed()) return run_continue(config, step, ckpt_in, cont_flags);
        if (sample->parsed()) return run_sample(config, ckpt, domain, mask_domain, n, seed, out_dir);
        if (verify->parsed()) return run_verify(before, after, probes, seed);
        if (eval->parsed()) return run_eval(config, ckpt, domain, eval_n, seed, compare, seg_iters, run_id, out_csv, eval_flags);
        if (scenes->parsed()) return run_scenes(config, domain, scene_n, seed, out_dir);
        if (low->parsed()) return run_lowdata(config, ckpt, step, sizes, low_n, low_flags);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInvalid;
    }
    return kInvalid;
}
