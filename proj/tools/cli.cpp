#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "speckle/dataset.hpp"
#include "speckle/decoder.hpp"
#include "speckle/error.hpp"
#include "speckle/formats.hpp"
#include "speckle/harness.hpp"
#include "speckle/hash.hpp"
#include "speckle/metrics.hpp"
#include "speckle/optics.hpp"
#include "speckle/recognizer.hpp"
#include "speckle/rng.hpp"

#ifndef SPECKLE_VERSION
#define SPECKLE_VERSION "0.0.0"
#endif

namespace speckle::cli {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flag overrides for config-driven subcommands; unset flags leave the
/// config file (or built-in default) in place.
struct Overrides {
  std::string config;
  std::string output_dir;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::optional<std::uint64_t> key_seed;
};

harness::ExperimentConfig resolve_config(const Overrides& o, unsigned threads) {
  harness::ExperimentConfig c = o.config.empty() ? harness::ExperimentConfig{} : harness::load_config(o.config);
  if (!o.output_dir.empty()) c.output_dir = o.output_dir;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.batch_size) c.train.batch_size = *o.batch_size;
  if (o.learning_rate) c.train.learning_rate = *o.learning_rate;
  if (o.key_seed) c.key_seed = *o.key_seed;
  c.threads = threads;
  harness::validate(c);
  return c;
}

void add_overrides(CLI::App* sub, Overrides& o) {
  sub->add_option("-c,--config", o.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  sub->add_option("-o,--output-dir", o.output_dir, "Directory for artifacts and reports");
  sub->add_option("--epochs", o.epochs, "Override train.epochs");
  sub->add_option("--batch-size", o.batch_size, "Override train.batch_size");
  sub->add_option("--lr", o.learning_rate, "Override train.learning_rate");
  sub->add_option("--key-seed", o.key_seed, "Override key_seed");
}

harness::PipelineOptions verbose_options(std::ostream& err) {
  harness::PipelineOptions p;
  p.on_epoch = [&err](const EpochRecord& e) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %3zu  train_loss %.6f  eval_loss %.6f  eval_pcc %.6f\n", e.epoch,
                  e.train_loss, e.eval_loss, e.eval_pcc);
    err << line;
  };
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f << text;
}

void save_image(const PlainImage& image, const fs::path& path) {
  if (path.extension() == ".pgm") {
    io::save_image_pgm(image, path);
  } else {
    io::save_plain(image, path);
  }
}

std::string version_json() {
  nlohmann::ordered_json j;
  j["tool"] = SPECKLE_VERSION;
  j["formats"] = {{"SPKY", io::kKeyFormatVersion}, {"SPIM", io::kImageFormatVersion}, {"SPMD", kModelFormatVersion}};
  return j.dump();
}

struct BenchRow {
  std::size_t n_in;
  std::size_t n_out;
  double median_us;
  double p95_us;
};

BenchRow bench_encrypt(std::size_t side_in, std::size_t side_out, std::size_t iterations, std::uint64_t seed) {
  const auto key = generate_key(seed, side_in * side_in, side_out * side_out);
  std::vector<double> pixels(side_in * side_in);
  Xoshiro256 rng(derive_seed(seed, "bench-image"));
  for (auto& p : pixels) p = rng.uniform();
  const PlainImage image(side_in, side_in, pixels);
  const SpeckleShape shape{side_out, side_out};
  std::vector<double> us;
  us.reserve(iterations);
  double sink = 0.0;
  for (std::size_t i = 0; i < iterations; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto s = encrypt(key, image, shape);
    const auto t1 = std::chrono::steady_clock::now();
    sink += s.raw_scale;
    us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
  }
  if (!(sink > 0.0)) throw InternalError("bench produced an empty speckle");
  std::sort(us.begin(), us.end());
  const auto at = [&](double q) { return us[std::min(us.size() - 1, static_cast<std::size_t>(q * us.size()))]; };
  return {key.n_in, key.n_out, at(0.5), at(0.95)};
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speckle-based optical encryption toolkit: keys, ciphertexts, learned decryption and experiments",
               args.empty() ? "speckle" : fs::path(args[0]).filename().string()};
  app.require_subcommand(0, 1);
  app.fallthrough();

  bool show_version = false;
  unsigned threads = 0;
  app.add_flag("--version", show_version, "Print tool and file-format versions as JSON");
  app.add_option("--threads", threads, "Worker cap for batch work (0 = all cores)");

  std::map<CLI::App*, std::function<int()>> handlers;

  // keygen
  {
    auto* sub = app.add_subcommand("keygen", "Generate a physical key (transmission matrix)");
    auto seed = std::make_shared<std::uint64_t>(0);
    auto n_in = std::make_shared<std::size_t>(256);
    auto n_out = std::make_shared<std::size_t>(1024);
    auto path = std::make_shared<std::string>();
    sub->add_option("--seed", *seed, "Key seed")->required();
    sub->add_option("--n-in", *n_in, "Input modes (plaintext pixels)")->capture_default_str();
    sub->add_option("--n-out", *n_out, "Output modes (speckle pixels)")->capture_default_str();
    sub->add_option("-o,--output", *path, "Key file (.spky)")->required();
    handlers[sub] = [=, &out] {
      const auto key = generate_key(*seed, *n_in, *n_out);
      io::save_key(key, *path);
      out << to_hex(key.fingerprint) << '\n';
      return kOk;
    };
  }

  // corpus
  {
    auto* sub = app.add_subcommand("corpus", "Write the synthetic face corpus as PGM files plus manifest.json");
    auto o = std::make_shared<Overrides>();
    auto identities = std::make_shared<std::optional<std::size_t>>();
    auto samples = std::make_shared<std::optional<std::size_t>>();
    auto size = std::make_shared<std::optional<std::size_t>>();
    auto seed = std::make_shared<std::optional<std::uint64_t>>();
    auto dir = std::make_shared<std::string>();
    sub->add_option("-c,--config", o->config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--identities", *identities, "Number of identities");
    sub->add_option("--samples", *samples, "Samples per identity");
    sub->add_option("--size", *size, "Image side length");
    sub->add_option("--seed", *seed, "Corpus seed");
    sub->add_option("-o,--output", *dir, "Output directory")->required();
    handlers[sub] = [=, &out, &threads] {
      auto c = resolve_config(*o, threads);
      if (*identities) c.corpus.identities = **identities;
      if (*samples) c.corpus.samples_per_identity = **samples;
      if (*size) c.corpus.image_size = **size;
      if (*seed) c.corpus.seed = **seed;
      const auto corpus = dataset::build_corpus(c.corpus.identities, c.corpus.samples_per_identity,
                                                c.corpus.image_size, c.corpus.seed);
      dataset::write_corpus(corpus, *dir);
      out << corpus.samples.size() << " images written to " << *dir << '\n';
      return kOk;
    };
  }

  // encrypt
  {
    auto* sub = app.add_subcommand("encrypt", "Encrypt a plaintext image (.pgm or .spim) into a speckle (.spim)");
    auto key_path = std::make_shared<std::string>();
    auto input = std::make_shared<std::string>();
    auto output = std::make_shared<std::string>();
    auto height = std::make_shared<std::size_t>(0);
    auto width = std::make_shared<std::size_t>(0);
    auto noise_sd = std::make_shared<double>(0.0);
    auto noise_seed = std::make_shared<std::uint64_t>(0);
    sub->add_option("-k,--key", *key_path, "Key file (.spky)")->required()->check(CLI::ExistingFile);
    sub->add_option("-i,--input", *input, "Plaintext image")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--output", *output, "Speckle file (.spim)")->required();
    sub->add_option("--height", *height, "Speckle height (default: square)");
    sub->add_option("--width", *width, "Speckle width (default: square)");
    sub->add_option("--noise-sd", *noise_sd, "Detector noise SD as a fraction of the mean speckle");
    sub->add_option("--noise-seed", *noise_seed, "Noise seed");
    handlers[sub] = [=] {
      const auto key = io::load_key(*key_path);
      const auto image = io::load_any_plain(*input);
      if ((*height == 0) != (*width == 0)) throw UsageError("--height and --width must be given together");
      const SpeckleShape shape = *height ? SpeckleShape{*height, *width} : square_shape(key.n_out);
      auto speckle = encrypt(key, image, shape);
      if (*noise_sd > 0.0) speckle = add_noise(speckle, NoiseSpec{*noise_sd, *noise_seed});
      io::save_speckle(speckle, *output);
      return kOk;
    };
  }

  // train
  {
    auto* sub = app.add_subcommand("train", "Train a decoder on the configured corpus and key");
    auto o = std::make_shared<Overrides>();
    add_overrides(sub, *o);
    handlers[sub] = [=, &out, &err, &threads] {
      const auto c = resolve_config(*o, threads);
      const auto data = harness::prepare(c);
      auto result = train(make_decoder(c.decoder_spec(), c.decoder_seed), data.train_set(), data.eval_set(), c.train,
                          verbose_options(err).on_epoch);
      fs::create_directories(c.output_dir);
      io::save_key(data.key, c.output_dir / "key.spky");
      save_model(result.model, c.output_dir / "model.spmd");
      write_text(c.output_dir / "history.csv", to_csv(result.history));
      const auto test = evaluate_model(result.model, data.test_set());
      out << "test_pcc " << test.mean_pcc << '\n';
      return kOk;
    };
  }

  // decrypt
  {
    auto* sub = app.add_subcommand("decrypt", "Decrypt a speckle (.spim) with a trained model");
    auto model_path = std::make_shared<std::string>();
    auto input = std::make_shared<std::string>();
    auto output = std::make_shared<std::string>();
    sub->add_option("-m,--model", *model_path, "Model file (.spmd)")->required()->check(CLI::ExistingFile);
    sub->add_option("-i,--input", *input, "Speckle file (.spim)")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--output", *output, "Plaintext estimate (.pgm or .spim)")->required();
    handlers[sub] = [=] {
      const auto model = load_model(*model_path);
      save_image(forward(model, io::load_speckle(*input)), *output);
      return kOk;
    };
  }

  // eval
  {
    auto* sub = app.add_subcommand("eval", "Print PCC, MSE, PSNR and SSIM between two images as JSON");
    auto reference = std::make_shared<std::string>();
    auto estimate = std::make_shared<std::string>();
    sub->add_option("-r,--reference", *reference, "Reference image")->required()->check(CLI::ExistingFile);
    sub->add_option("-e,--estimate", *estimate, "Estimated image")->required()->check(CLI::ExistingFile);
    handlers[sub] = [=, &out] {
      out << metrics::to_json(metrics::evaluate(io::load_any_plain(*reference), io::load_any_plain(*estimate)))
          << '\n';
      return kOk;
    };
  }

  // recognize
  {
    auto* sub = app.add_subcommand("recognize", "Threshold sweep of face-match metrics over all image pairs");
    auto originals = std::make_shared<std::vector<std::string>>();
    auto decrypted = std::make_shared<std::vector<std::string>>();
    auto thresholds = std::make_shared<std::vector<double>>(recognition::kDefaultThresholds);
    auto seed = std::make_shared<std::uint64_t>(11);
    auto json = std::make_shared<bool>(false);
    sub->add_option("--originals", *originals, "Original images")->required()->check(CLI::ExistingFile);
    sub->add_option("--decrypted", *decrypted, "Decrypted images, same order")->required()->check(CLI::ExistingFile);
    sub->add_option("--thresholds", *thresholds, "Distance thresholds")->capture_default_str();
    sub->add_option("--embedding-seed", *seed, "Embedding projection seed")->capture_default_str();
    sub->add_flag("--json", *json, "Print JSON instead of CSV");
    handlers[sub] = [=, &out] {
      if (originals->size() != decrypted->size())
        throw UsageError("--originals has " + std::to_string(originals->size()) + " files but --decrypted has " +
                         std::to_string(decrypted->size()));
      const auto model = recognition::make_embedding_model(*seed);
      std::vector<recognition::FaceEmbedding> eo, ed;
      for (const auto& p : *originals) eo.push_back(recognition::embed(model, io::load_any_plain(p)));
      for (const auto& p : *decrypted) ed.push_back(recognition::embed(model, io::load_any_plain(p)));
      const auto rows = recognition::threshold_sweep(recognition::pair_distances(eo, ed), *thresholds);
      out << (*json ? recognition::sweep_json(rows) + "\n" : recognition::sweep_csv(rows));
      return kOk;
    };
  }

  // sweep-noise
  {
    auto* sub = app.add_subcommand("sweep-noise", "Evaluate a trained model on noisy test speckles");
    auto o = std::make_shared<Overrides>();
    auto model_path = std::make_shared<std::string>();
    add_overrides(sub, *o);
    sub->add_option("-m,--model", *model_path, "Model file (.spmd); trained fresh if omitted")
        ->check(CLI::ExistingFile);
    handlers[sub] = [=, &out, &err, &threads] {
      const auto c = resolve_config(*o, threads);
      const auto data = harness::prepare(c);
      const DecoderModel model =
          model_path->empty() ? train(make_decoder(c.decoder_spec(), c.decoder_seed), data.train_set(),
                                      data.eval_set(), c.train, verbose_options(err).on_epoch)
                                    .model
                              : load_model(*model_path);
      auto r = harness::noise_sweep(model, data.key, c.speckle, data.test_plain, c.noise_sd, c.noise_seed, threads);
      r.config_hash = harness::config_hash(c);
      r.config_json = harness::config_to_json(c);
      err << "report: " << harness::write_report(r, c.output_dir).string() << '\n';
      out << harness::conditions_csv(r);
      return kOk;
    };
  }

  // fov
  {
    auto* sub = app.add_subcommand("fov", "Train full- and cropped-FOV decoders and compare");
    auto o = std::make_shared<Overrides>();
    add_overrides(sub, *o);
    handlers[sub] = [=, &out, &err, &threads] {
      const auto c = resolve_config(*o, threads);
      const auto r = harness::fov_experiment(c, verbose_options(err).on_epoch);
      err << "report: " << harness::write_report(r, c.output_dir).string() << '\n';
      out << harness::conditions_csv(r);
      return kOk;
    };
  }

  // attack
  {
    auto* sub = app.add_subcommand("attack", "Decrypt ciphertexts from a different key with a trained model");
    auto o = std::make_shared<Overrides>();
    auto model_path = std::make_shared<std::string>();
    auto key_b_path = std::make_shared<std::string>();
    add_overrides(sub, *o);
    sub->add_option("-m,--model", *model_path, "Model trained on the config key; trained fresh if omitted")
        ->check(CLI::ExistingFile);
    sub->add_option("--key-b", *key_b_path, "Attack key (.spky); default from attack_key_seed")
        ->check(CLI::ExistingFile);
    handlers[sub] = [=, &out, &err, &threads] {
      const auto c = resolve_config(*o, threads);
      const auto data = harness::prepare(c);
      const DecoderModel model =
          model_path->empty() ? train(make_decoder(c.decoder_spec(), c.decoder_seed), data.train_set(),
                                      data.eval_set(), c.train, verbose_options(err).on_epoch)
                                    .model
                              : load_model(*model_path);
      const PhysicalKey key_b =
          key_b_path->empty() ? generate_key(c.attack_key_seed, c.n_in(), c.n_out()) : io::load_key(*key_b_path);
      auto r = harness::wrong_key_attack(model, data.key, key_b, c.speckle, data.test_plain, threads);
      r.config_hash = harness::config_hash(c);
      r.config_json = harness::config_to_json(c);
      err << "report: " << harness::write_report(r, c.output_dir).string() << '\n';
      out << harness::conditions_csv(r);
      return kOk;
    };
  }

  // keylen
  {
    auto* sub = app.add_subcommand("keylen", "Key length in bits (64 bits per complex matrix entry)");
    auto n_in = std::make_shared<std::optional<std::size_t>>();
    auto n_out = std::make_shared<std::optional<std::size_t>>();
    auto key_path = std::make_shared<std::string>();
    sub->add_option("--n-in", *n_in, "Input modes");
    sub->add_option("--n-out", *n_out, "Output modes");
    sub->add_option("-k,--key", *key_path, "Key file instead of dimensions")->check(CLI::ExistingFile);
    handlers[sub] = [=, &out] {
      if (!key_path->empty()) {
        if (*n_in || *n_out) throw UsageError("give either --key or --n-in/--n-out, not both");
        out << key_length_bits(io::load_key(*key_path)) << '\n';
        return kOk;
      }
      if (!*n_in || !*n_out) throw UsageError("keylen needs --n-in and --n-out, or --key");
      out << key_length_bits(**n_in, **n_out) << '\n';
      return kOk;
    };
  }

  // pipeline
  {
    auto* sub = app.add_subcommand("pipeline", "Corpus, encryption, training, decryption, metrics and recognition");
    auto o = std::make_shared<Overrides>();
    add_overrides(sub, *o);
    handlers[sub] = [=, &out, &err, &threads] {
      const auto c = resolve_config(*o, threads);
      const auto result = harness::run_pipeline(c, verbose_options(err));
      err << "report: " << result.report_path.string() << '\n';
      out << harness::conditions_csv(result.report);
      return kOk;
    };
  }

  // bench
  {
    auto* sub = app.add_subcommand("bench", "Forward-encryption latency at three matrix sizes");
    auto iterations = std::make_shared<std::size_t>(1000);
    auto seed = std::make_shared<std::uint64_t>(1);
    sub->add_option("--iterations", *iterations, "Encryptions per size")
        ->capture_default_str()
        ->check(CLI::Range(std::size_t{1000}, std::size_t{100000000}));
    sub->add_option("--seed", *seed, "Key and image seed")->capture_default_str();
    handlers[sub] = [=, &out] {
      out << "n_in,n_out,median_us,p95_us,encryptions_per_s\n";
      for (const auto& [side_in, side_out] : {std::pair<std::size_t, std::size_t>{8, 16}, {16, 32}, {32, 64}}) {
        const auto row = bench_encrypt(side_in, side_out, *iterations, *seed);
        char line[160];
        std::snprintf(line, sizeof line, "%zu,%zu,%.3f,%.3f,%.1f\n", row.n_in, row.n_out, row.median_us, row.p95_us,
                      1e6 / row.median_us);
        out << line;
      }
      return kOk;
    };
  }

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("speckle");

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsageError;
  }

  if (show_version) {
    out << version_json() << '\n';
    return kOk;
  }
  const auto chosen = app.get_subcommands();
  if (chosen.empty()) {
    err << "error: a subcommand is required\n\n" << app.help();
    return kUsageError;
  }
  CLI::App* sub = chosen.front();
  try {
    return handlers.at(sub)();
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << sub->help();
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDomainError;
  }
}

}  // namespace speckle::cli
