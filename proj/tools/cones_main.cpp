// cones: conditional neural fields with shift modulation for paired
// image-to-image translation, runnable end to end on synthetic phantoms.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "cones/checkpoint.hpp"
#include "cones/dataset.hpp"
#include "cones/experiments.hpp"
#include "cones/gradcheck.hpp"
#include "cones/png_io.hpp"
#include "cones/trainer.hpp"
#include "cones/wilcoxon.hpp"

namespace fs = std::filesystem;
using namespace cones;

namespace {

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "manifest: cannot hash missing file '", path, "'");
  std::uint64_t h = 1469598103934665603ull;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[static_cast<std::size_t>(i)]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

bool deterministic_mode() {
  const char* v = std::getenv("CONES_DETERMINISTIC");
  return v == nullptr || std::string(v) != "0";  // fixed reduction order is the default
}

/// Writes the resolved run configuration as a manifest that can be fed back
/// through --config; artifact hashes ride along as comments.
void write_manifest(const std::string& path, const KeyValues& kv, const std::string& out_dir,
                    const std::vector<std::string>& artifacts,
                    const std::string& status = "ok") {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "manifest: cannot open '", path, "'");
  out << kv.serialize();
  out << "# status=" << status << "\n";
  out << "# deterministic=" << (deterministic_mode() ? "1" : "0") << "\n";
  for (const auto& rel : artifacts)
    out << "# artifact " << rel << " fnv1a=" << hex64(fnv1a64_file(out_dir + "/" + rel))
        << "\n";
  require(out.good(), "manifest: write failed for '", path, "'");
}

// ---------------------------------------------------------------------------
// train / ablate configuration surface (option names double as config keys)
// ---------------------------------------------------------------------------

struct TrainRunConfig {
  std::string data;
  std::string out;
  std::string mode = "shift";
  bool use_intensity = true;
  long encoding_m = 6;
  bool encoding_include_raw = false;
  std::string hypernet_preset = "desk";
  bool instance_norm = true;
  std::string mlp_hidden = "64,64,64,64";
  long steps = 2000;
  double gen_lr = 1e-4;
  double disc_lr = 4e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double lambda_adv = 1.0;
  double lambda_rec = 100.0;
  double lambda_fm = 10.0;
  double lambda_reg = 10.0;
  std::string adv_loss = "hinge";
  long crop_h = 64;
  long crop_w = 64;
  long batch_size = 1;
  long decay_start = 0;
  long decay_end = 0;
  long checkpoint_every = 0;
  double divergence_threshold = 1e6;
  long seed = 1234;
};

void add_train_options(CLI::App* cmd, TrainRunConfig& rc) {
  cmd->add_option("--data", rc.data, "dataset root (from synth-data)");
  cmd->add_option("--out", rc.out, "output directory");
  cmd->add_option("--mode", rc.mode, "conditioning: shift|film|hyper")
      ->check(CLI::IsMember({"shift", "film", "hyper"}));
  cmd->add_option("--use_intensity", rc.use_intensity,
                  "concatenate source intensities to the MLP input");
  cmd->add_option("--encoding_m", rc.encoding_m, "features per coordinate component (even)");
  cmd->add_option("--encoding_include_raw", rc.encoding_include_raw,
                  "append raw coordinates to the encoding");
  cmd->add_option("--hypernet_preset", rc.hypernet_preset, "desk|deep residual stack")
      ->check(CLI::IsMember({"desk", "deep"}));
  cmd->add_option("--instance_norm", rc.instance_norm, "instance norm inside residual blocks");
  cmd->add_option("--mlp_hidden", rc.mlp_hidden, "hidden widths, comma separated");
  cmd->add_option("--steps", rc.steps, "training iterations");
  cmd->add_option("--gen_lr", rc.gen_lr, "generator learning rate");
  cmd->add_option("--disc_lr", rc.disc_lr, "discriminator learning rate (TTUR)");
  cmd->add_option("--beta1", rc.beta1, "Adam beta1");
  cmd->add_option("--beta2", rc.beta2, "Adam beta2");
  cmd->add_option("--lambda_adv", rc.lambda_adv, "adversarial weight");
  cmd->add_option("--lambda_rec", rc.lambda_rec, "reconstruction weight");
  cmd->add_option("--lambda_fm", rc.lambda_fm, "feature matching weight");
  cmd->add_option("--lambda_reg", rc.lambda_reg, "latent regularization weight");
  cmd->add_option("--adv_loss", rc.adv_loss, "generator adversarial variant: hinge|log")
      ->check(CLI::IsMember({"hinge", "log"}));
  cmd->add_option("--crop_h", rc.crop_h, "crop height");
  cmd->add_option("--crop_w", rc.crop_w, "crop width");
  cmd->add_option("--batch_size", rc.batch_size, "samples per iteration");
  cmd->add_option("--decay_start", rc.decay_start, "linear lr decay start step");
  cmd->add_option("--decay_end", rc.decay_end, "linear lr decay end step (0 disables)");
  cmd->add_option("--checkpoint_every", rc.checkpoint_every,
                  "periodic checkpoint cadence (0 = final only)");
  cmd->add_option("--divergence_threshold", rc.divergence_threshold,
                  "abort when any loss magnitude exceeds this");
  cmd->add_option("--seed", rc.seed, "run seed (all randomness derives from it)");
}

/// Applies a key=value config file under flag-beats-file precedence. Every
/// key is validated; unknown keys abort the run.
void apply_train_config_file(CLI::App* cmd, const std::string& path, TrainRunConfig& rc) {
  const KeyValues kv = KeyValues::parse_file(path);
  auto absent = [&](const char* flag) { return cmd->count(flag) == 0; };

  auto s = [&](const char* flag, const char* key, std::string& field) {
    const std::string v = kv.get_or(key, field);
    if (absent(flag)) field = v;
  };
  auto l = [&](const char* flag, const char* key, long& field) {
    const long v = static_cast<long>(kv.get_long_or(key, field));
    if (absent(flag)) field = v;
  };
  auto d = [&](const char* flag, const char* key, double& field) {
    const double v = kv.get_double_or(key, field);
    if (absent(flag)) field = v;
  };
  auto b = [&](const char* flag, const char* key, bool& field) {
    const bool v = kv.get_bool_or(key, field);
    if (absent(flag)) field = v;
  };

  s("--data", "data", rc.data);
  s("--out", "out", rc.out);
  s("--mode", "mode", rc.mode);
  b("--use_intensity", "use_intensity", rc.use_intensity);
  l("--encoding_m", "encoding_m", rc.encoding_m);
  b("--encoding_include_raw", "encoding_include_raw", rc.encoding_include_raw);
  s("--hypernet_preset", "hypernet_preset", rc.hypernet_preset);
  b("--instance_norm", "instance_norm", rc.instance_norm);
  s("--mlp_hidden", "mlp_hidden", rc.mlp_hidden);
  l("--steps", "steps", rc.steps);
  d("--gen_lr", "gen_lr", rc.gen_lr);
  d("--disc_lr", "disc_lr", rc.disc_lr);
  d("--beta1", "beta1", rc.beta1);
  d("--beta2", "beta2", rc.beta2);
  d("--lambda_adv", "lambda_adv", rc.lambda_adv);
  d("--lambda_rec", "lambda_rec", rc.lambda_rec);
  d("--lambda_fm", "lambda_fm", rc.lambda_fm);
  d("--lambda_reg", "lambda_reg", rc.lambda_reg);
  s("--adv_loss", "adv_loss", rc.adv_loss);
  l("--crop_h", "crop_h", rc.crop_h);
  l("--crop_w", "crop_w", rc.crop_w);
  l("--batch_size", "batch_size", rc.batch_size);
  l("--decay_start", "decay_start", rc.decay_start);
  l("--decay_end", "decay_end", rc.decay_end);
  l("--checkpoint_every", "checkpoint_every", rc.checkpoint_every);
  d("--divergence_threshold", "divergence_threshold", rc.divergence_threshold);
  l("--seed", "seed", rc.seed);
  kv.fail_on_unconsumed("config '" + path + "'");
}

KeyValues train_config_kv(const TrainRunConfig& rc) {
  KeyValues kv;
  kv.set("data", rc.data);
  kv.set("out", rc.out);
  kv.set("mode", rc.mode);
  kv.set_bool("use_intensity", rc.use_intensity);
  kv.set_long("encoding_m", rc.encoding_m);
  kv.set_bool("encoding_include_raw", rc.encoding_include_raw);
  kv.set("hypernet_preset", rc.hypernet_preset);
  kv.set_bool("instance_norm", rc.instance_norm);
  kv.set("mlp_hidden", rc.mlp_hidden);
  kv.set_long("steps", rc.steps);
  kv.set_double("gen_lr", rc.gen_lr);
  kv.set_double("disc_lr", rc.disc_lr);
  kv.set_double("beta1", rc.beta1);
  kv.set_double("beta2", rc.beta2);
  kv.set_double("lambda_adv", rc.lambda_adv);
  kv.set_double("lambda_rec", rc.lambda_rec);
  kv.set_double("lambda_fm", rc.lambda_fm);
  kv.set_double("lambda_reg", rc.lambda_reg);
  kv.set("adv_loss", rc.adv_loss);
  kv.set_long("crop_h", rc.crop_h);
  kv.set_long("crop_w", rc.crop_w);
  kv.set_long("batch_size", rc.batch_size);
  kv.set_long("decay_start", rc.decay_start);
  kv.set_long("decay_end", rc.decay_end);
  kv.set_long("checkpoint_every", rc.checkpoint_every);
  kv.set_double("divergence_threshold", rc.divergence_threshold);
  kv.set_long("seed", rc.seed);
  return kv;
}

GeneratorConfig generator_config_of(const TrainRunConfig& rc, const DatasetInfo& info) {
  GeneratorConfig gc;
  gc.mode = conditioning_mode_from(rc.mode);
  gc.use_intensity = rc.use_intensity;
  gc.encoding.m = static_cast<int>(rc.encoding_m);
  gc.encoding.include_raw = rc.encoding_include_raw;
  gc.n_source = static_cast<int>(info.spec.n_source);
  gc.n_target = static_cast<int>(info.spec.n_target);
  gc.mlp_hidden = parse_int_list(rc.mlp_hidden);
  if (rc.hypernet_preset == "deep") gc.hypernet = HypernetConfig::deep_preset();
  gc.hypernet.use_instance_norm = rc.instance_norm;
  return gc;
}

TrainConfig train_config_of(const TrainRunConfig& rc) {
  TrainConfig tc;
  tc.gen_lr = rc.gen_lr;
  tc.disc_lr = rc.disc_lr;
  tc.beta1 = rc.beta1;
  tc.beta2 = rc.beta2;
  tc.total_steps = rc.steps;
  tc.decay_start = rc.decay_start;
  tc.decay_end = rc.decay_end;
  tc.crop_h = rc.crop_h;
  tc.crop_w = rc.crop_w;
  tc.batch_size = rc.batch_size;
  tc.seed = static_cast<std::uint64_t>(rc.seed);
  tc.weights.adv = rc.lambda_adv;
  tc.weights.rec = rc.lambda_rec;
  tc.weights.fm = rc.lambda_fm;
  tc.weights.reg = rc.lambda_reg;
  tc.adv_variant = adv_variant_from(rc.adv_loss);
  tc.divergence_threshold = rc.divergence_threshold;
  return tc;
}

// ---------------------------------------------------------------------------
// subcommand implementations
// ---------------------------------------------------------------------------

int run_synth_data(const std::string& out, DatasetInfo info) {
  require(!out.empty(), "synth-data: --out is required");
  write_dataset<float>(out, info);
  // one rolling digest across every emitted file keeps the manifest short
  std::uint64_t digest = 1469598103934665603ull;
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(out))
    if (entry.is_regular_file() && entry.path().extension() == ".cnsf")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const std::uint64_t h = fnv1a64_file(f);
    digest ^= h;
    digest *= 1099511628211ull;
  }
  std::ofstream app(out + "/manifest.txt", std::ios::app);
  app << "# samples-digest fnv1a=" << hex64(digest) << "\n";
  app << "# deterministic=" << (deterministic_mode() ? "1" : "0") << "\n";
  std::cout << "wrote " << files.size() << " tensor files under " << out << "\n";
  return 0;
}

int run_train(const TrainRunConfig& rc) {
  require(!rc.data.empty(), "train: --data is required");
  require(!rc.out.empty(), "train: --out is required");
  fs::create_directories(rc.out);
  const DatasetInfo info = read_dataset_manifest(rc.data);
  auto train_split = load_split<float>(rc.data, "train");

  const GeneratorConfig gc = generator_config_of(rc, info);
  Rng rng(mix_seed(static_cast<std::uint64_t>(rc.seed), 0x1417));
  GeneratorParams<float> gen = make_generator<float>(gc, rng);
  DiscriminatorParams<float> disc =
      make_discriminator<float>(gc.n_target, gc.n_source, rng);

  const TrainConfig tc = train_config_of(rc);
  TrainLoop<float> loop(gen, disc, tc);
  std::vector<LossRecord> history;
  std::string status = "ok";
  try {
    for (long t = 1; t <= tc.total_steps; ++t) {
      history.push_back(loop.step(train_split, t));
      if (rc.checkpoint_every > 0 && t % rc.checkpoint_every == 0) {
        const std::string dir = rc.out + "/checkpoints/" + std::to_string(t);
        save_generator(dir + "/generator", gen, gc);
        save_discriminator(dir + "/discriminator", disc);
      }
      if (t % 100 == 0)
        std::cout << "step " << t << "  L_total=" << format_csv_double(history.back().total)
                  << "  L_D=" << format_csv_double(history.back().d) << "\n";
    }
  } catch (const DivergenceError& e) {
    history.push_back(e.record);
    status = "diverged";
    std::cerr << e.what() << "\n";
  }
  write_loss_csv(rc.out + "/loss.csv", history);
  save_generator(rc.out + "/generator", gen, gc);
  save_discriminator(rc.out + "/discriminator", disc);
  write_manifest(rc.out + "/manifest.txt", train_config_kv(rc), rc.out,
                 {"loss.csv", "generator/checkpoint.txt"}, status);
  std::cout << (status == "ok" ? "training complete, " : "training aborted, ")
            << history.size() << " steps logged to " << rc.out << "/loss.csv\n";
  return status == "ok" ? 0 : 3;
}

int run_translate(const std::string& checkpoint, const std::string& data,
                  const std::string& split, const std::string& out, bool png) {
  require(!checkpoint.empty() && !data.empty() && !out.empty(),
          "translate: --checkpoint, --data, --out are required");
  GeneratorConfig gc;
  GeneratorParams<float> gen = load_generator<float>(checkpoint, &gc);
  const DatasetInfo info = read_dataset_manifest(data);
  require(info.spec.n_source == gc.n_source, "translate: checkpoint expects ", gc.n_source,
          " source channels, dataset has ", info.spec.n_source);
  fs::create_directories(out);
  std::vector<std::string> artifacts;
  for (const auto& dir : list_sample_dirs(data, split)) {
    auto sample = load_sample<float>(dir, info.spec.n_source, info.spec.n_target);
    Tensor<float> src = Tensor<float>::zeros(
        {1, sample.source.dim(0), sample.source.dim(1), sample.source.dim(2)});
    std::copy(sample.source.data(), sample.source.data() + sample.source.numel(), src.data());
    Tensor<float> fake;
    {
      NoGradGuard ng;
      fake = translate(src, gen).images;
    }
    const std::string name = fs::path(dir).filename().string();
    fs::create_directories(out + "/" + name);
    for (Index c = 0; c < info.spec.n_target; ++c) {
      Tensor<float> ch = Tensor<float>::zeros({fake.dim(2), fake.dim(3)});
      std::copy(fake.data() + c * ch.numel(), fake.data() + (c + 1) * ch.numel(), ch.data());
      const std::string rel = name + "/fake_" + std::to_string(c) + ".cnsf";
      write_tensor(out + "/" + rel, ch);
      artifacts.push_back(rel);
      if (png) export_png(ch, out + "/" + name + "/fake_" + std::to_string(c) + ".png");
    }
  }
  KeyValues kv;
  kv.set("checkpoint", checkpoint);
  kv.set("data", data);
  kv.set("split", split);
  kv.set("out", out);
  kv.set_bool("png", png);
  std::vector<std::string> hashed(artifacts.begin(),
                                  artifacts.begin() + std::min<std::size_t>(artifacts.size(), 8));
  write_manifest(out + "/manifest.txt", kv, out, hashed);
  std::cout << "translated " << artifacts.size() << " channel images into " << out << "\n";
  return 0;
}

int run_eval(const std::string& pred, const std::string& pred_b, const std::string& data,
             const std::string& split, const std::string& out) {
  require(!pred.empty() && !data.empty() && !out.empty(),
          "eval: --pred, --data, --out are required");
  fs::create_directories(out);
  const DatasetInfo info = read_dataset_manifest(data);

  auto eval_dir = [&](const std::string& pdir) {
    std::vector<MetricRow> rows;
    for (const auto& dir : list_sample_dirs(data, split)) {
      const std::string name = fs::path(dir).filename().string();
      auto sample = load_sample<float>(dir, info.spec.n_source, info.spec.n_target);
      for (Index c = 0; c < info.spec.n_target; ++c) {
        auto fake = read_tensor<float>(pdir + "/" + name + "/fake_" + std::to_string(c) +
                                       ".cnsf");
        auto real = channel_of(sample.target, c);
        Tensor<double> pu = to_unit_range(fake);
        Tensor<double> ru = to_unit_range(real);
        MetricRow row;
        row.image_id = name + ":" + std::to_string(c);
        row.psnr_db = psnr(pu, ru).db;
        row.ssim = ssim(pu, ru);
        Tensor<double> pc = metric_crop(pu, sample.mask, 16);
        Tensor<double> rc2 = metric_crop(ru, sample.mask, 16);
        row.cropped_psnr_db = psnr(pc, rc2).db;
        row.cropped_ssim = ssim(pc, rc2);
        rows.push_back(row);
      }
    }
    return rows;
  };

  auto rows = eval_dir(pred);
  write_metrics_csv(out + "/metrics.csv", rows);
  std::vector<double> psnrs, ssims;
  for (const auto& r : rows) {
    psnrs.push_back(r.psnr_db);
    ssims.push_back(r.ssim);
  }
  auto ps = summarize(psnrs), ss = summarize(ssims);
  std::cout << "psnr " << ps.mean << " +- " << ps.stddev << " dB, ssim " << ss.mean << " +- "
            << ss.stddev << " over " << rows.size() << " images\n";

  std::vector<std::string> artifacts{"metrics.csv"};
  if (!pred_b.empty()) {
    auto rows_b = eval_dir(pred_b);
    write_metrics_csv(out + "/metrics_b.csv", rows_b);
    std::vector<double> pb, sb;
    for (const auto& r : rows_b) {
      pb.push_back(r.psnr_db);
      sb.push_back(r.ssim);
    }
    std::ofstream w(out + "/wilcoxon.txt", std::ios::binary);
    w << "metric,statistic,p_value,n,exact\n";
    auto emit = [&](const char* metric, const std::vector<double>& a,
                    const std::vector<double>& b) {
      const WilcoxonResult r = wilcoxon_signed_rank(a, b);
      w << metric << ',' << format_csv_double(r.statistic) << ','
        << format_csv_double(r.p_value) << ',' << r.n_used << ',' << (r.exact ? 1 : 0) << "\n";
      std::cout << "wilcoxon(" << metric << "): statistic=" << r.statistic
                << " p=" << r.p_value << "\n";
    };
    emit("psnr", psnrs, pb);
    emit("ssim", ssims, sb);
    artifacts.push_back("metrics_b.csv");
    artifacts.push_back("wilcoxon.txt");
  }
  KeyValues kv;
  kv.set("pred", pred);
  if (!pred_b.empty()) kv.set("pred_b", pred_b);
  kv.set("data", data);
  kv.set("split", split);
  kv.set("out", out);
  write_manifest(out + "/manifest.txt", kv, out, artifacts);
  return 0;
}

int run_spectrum(const std::vector<std::string>& sets, const std::string& out, bool plot) {
  require(!sets.empty(), "spectrum: at least one --set name=dir:file is required");
  require(!out.empty(), "spectrum: --out is required");
  fs::create_directories(out);
  std::vector<std::string> artifacts;
  std::vector<std::vector<double>> curves;
  KeyValues kv;
  kv.set("out", out);
  int set_index = 0;
  for (const auto& spec : sets) {
    const auto eq = spec.find('=');
    const auto colon = spec.rfind(':');
    require(eq != std::string::npos && colon != std::string::npos && colon > eq,
            "spectrum: set '", spec, "' is not name=dir:file");
    const std::string name = spec.substr(0, eq);
    const std::string dir = spec.substr(eq + 1, colon - eq - 1);
    const std::string file = spec.substr(colon + 1);
    kv.set("set" + std::to_string(set_index++), spec);

    std::vector<std::pair<long, std::string>> found;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_directory()) continue;
      const fs::path candidate = entry.path() / file;
      if (!fs::is_regular_file(candidate)) continue;
      try {
        found.emplace_back(std::stol(entry.path().filename().string()), candidate.string());
      } catch (...) {
      }
    }
    std::sort(found.begin(), found.end());
    require(!found.empty(), "spectrum: no '", file, "' under numbered directories in ", dir);
    std::vector<Tensor<double>> images;
    for (auto& [i, path] : found) images.push_back(read_tensor<float>(path).cast<double>());
    SpectrumProfile profile = spectrum_profile(images);
    const std::string rel = name + "_spectrum.csv";
    write_spectrum_csv(out + "/" + rel, profile);
    artifacts.push_back(rel);
    curves.push_back(profile.log_values);
    std::cout << "set '" << name << "': " << images.size() << " images, " << profile.omega.size()
              << " frequency bins\n";
  }
  if (plot) {
    write_line_plot_png(out + "/spectra.png", curves);
    artifacts.push_back("spectra.png");
  }
  write_manifest(out + "/manifest.txt", kv, out, artifacts);
  return 0;
}

int run_ablate(const TrainRunConfig& rc) {
  require(!rc.data.empty(), "ablate: --data is required");
  require(!rc.out.empty(), "ablate: --out is required");
  fs::create_directories(rc.out);
  auto train_split = load_split<float>(rc.data, "train");
  auto val_split = load_split<float>(rc.data, "val");

  AblationOptions opts;
  opts.steps = rc.steps;
  opts.crop = rc.crop_h;
  opts.seed = static_cast<std::uint64_t>(rc.seed);
  opts.gen_lr = rc.gen_lr;
  opts.disc_lr = rc.disc_lr;
  opts.weights.adv = rc.lambda_adv;
  opts.weights.rec = rc.lambda_rec;
  opts.weights.fm = rc.lambda_fm;
  opts.weights.reg = rc.lambda_reg;
  opts.adv_variant = adv_variant_from(rc.adv_loss);
  opts.encoding.m = static_cast<int>(rc.encoding_m);
  opts.encoding.include_raw = rc.encoding_include_raw;
  if (rc.hypernet_preset == "deep") opts.hypernet = HypernetConfig::deep_preset();
  opts.hypernet.use_instance_norm = rc.instance_norm;

  auto rows = run_ablation_grid(train_split, val_split, opts);
  write_ablation_csv(rc.out + "/ablation.csv", rows);
  std::vector<std::string> artifacts{"ablation.csv"};
  for (const auto& r : rows) {
    const std::string run = std::string("run_shift-") + (r.shift ? "yes" : "no") +
                            "_intensity-" + (r.intensity ? "yes" : "no");
    fs::create_directories(rc.out + "/" + run);
    write_loss_csv(rc.out + "/" + run + "/loss.csv", r.history);
    KeyValues st;
    st.set("status", r.diverged ? "diverged" : "completed");
    st.set_long("steps_done", r.steps_done);
    st.set_long("param_generated", r.param_generated);
    st.set_double("psnr_mean", r.eval.psnr.mean);
    st.set_double("ssim_mean", r.eval.ssim.mean);
    st.save_file(rc.out + "/" + run + "/status.txt");
    artifacts.push_back(run + "/loss.csv");
    artifacts.push_back(run + "/status.txt");
    std::cout << run << ": param_generated=" << r.param_generated
              << " psnr=" << r.eval.psnr.mean << " ssim=" << r.eval.ssim.mean
              << (r.diverged ? " [diverged]" : "") << "\n";
  }
  KeyValues kv = train_config_kv(rc);
  write_manifest(rc.out + "/manifest.txt", kv, rc.out, artifacts);
  return 0;
}

int run_gradcheck(int configs, long seed, const std::string& out) {
  auto reports = run_gradient_checks(configs, static_cast<std::uint64_t>(seed));
  bool all = true;
  std::string table;
  for (const auto& r : reports) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-18s %4d configs  max rel err %.3e  %s\n",
                  r.op.c_str(), r.configs, r.max_rel_err, r.passed ? "ok" : "FAIL");
    table += line;
    all = all && r.passed;
  }
  std::cout << table;
  std::cout << (all ? "gradcheck: all operations pass\n" : "gradcheck: FAILURES above\n");
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream f(out + "/gradcheck.txt", std::ios::binary);
    f << table;
    KeyValues kv;
    kv.set_long("configs", configs);
    kv.set_long("seed", seed);
    kv.set("out", out);
    write_manifest(out + "/manifest.txt", kv, out, {"gradcheck.txt"},
                   all ? "ok" : "failed");
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditional neural fields with shift modulation"};
  app.require_subcommand(1);

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "generate the paired phantom dataset");
  std::string synth_out;
  DatasetInfo info;
  long synth_seed = 1234;
  synth->add_option("--out", synth_out, "dataset root")->required();
  synth->add_option("--train", info.n_train, "training samples");
  synth->add_option("--val", info.n_val, "validation samples");
  synth->add_option("--size", info.spec.size, "image side length");
  synth->add_option("--sources", info.spec.n_source, "source channels");
  synth->add_option("--targets", info.spec.n_target, "target channels");
  synth->add_option("--min_lesions", info.spec.min_lesions, "lesion count lower bound");
  synth->add_option("--max_lesions", info.spec.max_lesions, "lesion count upper bound");
  synth->add_option("--texture_amplitude", info.spec.texture_amplitude,
                    "high-frequency texture strength in the target");
  synth->add_option("--lesion_contrast", info.spec.lesion_contrast,
                    "target-only lesion contrast");
  synth->add_option("--seed", synth_seed, "dataset seed");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a translation model");
  TrainRunConfig train_rc;
  std::string train_config_file;
  add_train_options(train_cmd, train_rc);
  train_cmd->add_option("--config", train_config_file,
                        "key=value config file (e.g. a previous run manifest); flags override");

  // translate
  auto* tr = app.add_subcommand("translate", "apply a checkpoint to a dataset split");
  std::string tr_ckpt, tr_data, tr_split = "val", tr_out;
  bool tr_png = false;
  tr->add_option("--checkpoint", tr_ckpt, "generator checkpoint directory")->required();
  tr->add_option("--data", tr_data, "dataset root")->required();
  tr->add_option("--split", tr_split, "dataset split");
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_flag("--png", tr_png, "also export 16-bit grayscale PNGs");

  // eval
  auto* ev = app.add_subcommand("eval", "image-quality metrics for translated outputs");
  std::string ev_pred, ev_pred_b, ev_data, ev_split = "val", ev_out;
  ev->add_option("--pred", ev_pred, "translated outputs (from translate)")->required();
  ev->add_option("--pred_b", ev_pred_b,
                 "second model's outputs; adds a Wilcoxon signed-rank comparison");
  ev->add_option("--data", ev_data, "dataset root")->required();
  ev->add_option("--split", ev_split, "dataset split");
  ev->add_option("--out", ev_out, "output directory")->required();

  // spectrum
  auto* sp = app.add_subcommand("spectrum", "dataset-averaged azimuthal spectrum profiles");
  std::vector<std::string> sp_sets;
  std::string sp_out;
  bool sp_plot = false;
  sp->add_option("--set", sp_sets, "image set as name=dir:file (repeatable)")->required();
  sp->add_option("--out", sp_out, "output directory")->required();
  sp->add_flag("--plot", sp_plot, "write a line plot of all profiles");

  // ablate
  auto* ab = app.add_subcommand("ablate",
                                "4-run grid: shift modulation on/off x intensity on/off");
  TrainRunConfig ab_rc;
  ab_rc.steps = 600;
  ab_rc.crop_h = ab_rc.crop_w = 32;
  std::string ab_config_file;
  add_train_options(ab, ab_rc);
  ab->add_option("--config", ab_config_file, "key=value config file; flags override");

  // gradcheck
  auto* gcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  int gc_configs = 100;
  long gc_seed = 20240901;
  std::string gc_out;
  gcheck->add_option("--configs", gc_configs, "randomized configurations per operation");
  gcheck->add_option("--seed", gc_seed, "suite seed");
  gcheck->add_option("--out", gc_out, "optional report directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      info.spec.seed = static_cast<std::uint64_t>(synth_seed);
      return run_synth_data(synth_out, info);
    }
    if (train_cmd->parsed()) {
      if (!train_config_file.empty())
        apply_train_config_file(train_cmd, train_config_file, train_rc);
      return run_train(train_rc);
    }
    if (tr->parsed()) return run_translate(tr_ckpt, tr_data, tr_split, tr_out, tr_png);
    if (ev->parsed()) return run_eval(ev_pred, ev_pred_b, ev_data, ev_split, ev_out);
    if (sp->parsed()) return run_spectrum(sp_sets, sp_out, sp_plot);
    if (ab->parsed()) {
      if (!ab_config_file.empty()) apply_train_config_file(ab, ab_config_file, ab_rc);
      return run_ablate(ab_rc);
    }
    if (gcheck->parsed()) return run_gradcheck(gc_configs, gc_seed, gc_out);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
