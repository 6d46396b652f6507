#include "speckle/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json_util.hpp"
#include "speckle/error.hpp"
#include "speckle/formats.hpp"
#include "speckle/hash.hpp"
#include "speckle/rng.hpp"

namespace speckle::harness {

namespace {

using detail::Json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void reject_unknown(const Json& object, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!object.is_object()) throw InvalidArgument(where + " must be a JSON object");
  std::set<std::string> names(allowed.begin(), allowed.end());
  for (const auto& [k, v] : object.items()) {
    if (!names.contains(k)) throw InvalidArgument("unknown config field '" + where + "." + k + "'");
  }
}

template <typename T>
void read(const Json& object, const char* name, T& out) {
  if (object.contains(name)) out = object.at(name).get<T>();
}

std::string mode_name(InputMode mode) { return mode == InputMode::amplitude ? "amplitude" : "intensity"; }

InputMode parse_mode(const std::string& name) {
  if (name == "amplitude") return InputMode::amplitude;
  if (name == "intensity") return InputMode::intensity;
  throw InvalidArgument("decoder.input_mode must be 'amplitude' or 'intensity', got '" + name + "'");
}

Json config_json_value(const ExperimentConfig& c) {
  Json j;
  j["key_seed"] = c.key_seed;
  j["attack_key_seed"] = c.attack_key_seed;
  j["corpus"] = {{"identities", c.corpus.identities},
                 {"samples_per_identity", c.corpus.samples_per_identity},
                 {"image_size", c.corpus.image_size},
                 {"seed", c.corpus.seed}};
  j["speckle"] = {{"height", c.speckle.height}, {"width", c.speckle.width}};
  j["split"] = {{"train", c.split.n_train}, {"eval", c.split.n_eval}, {"test", c.split.n_test}, {"seed", c.split_seed}};
  j["decoder"] = {{"input_mode", mode_name(c.input_mode)},
                  {"conv_stem", c.conv_stem},
                  {"unet_levels", c.unet_levels},
                  {"channels", c.channels},
                  {"seed", c.decoder_seed}};
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"seed", c.train.seed}};
  j["noise"] = {{"sd_list", c.noise_sd}, {"seed", c.noise_seed}};
  const FovSpec fov = c.fov_window();
  j["fov"] = {{"origin_row", fov.origin_row},
              {"origin_col", fov.origin_col},
              {"height", fov.crop_height},
              {"width", fov.crop_width}};
  j["recognition"] = {{"thresholds", c.thresholds}, {"embedding_seed", c.embedding_seed}, {"grid", c.embedding_grid}};
  return j;
}

Json condition_json(const ConditionSummary& s) {
  Json j;
  j["label"] = s.label;
  j["n"] = s.n;
  j["pcc_n"] = s.pcc_n;
  j["pcc_mean"] = s.pcc_mean;
  j["pcc_std"] = s.pcc_std;
  j["mse_mean"] = s.mse_mean;
  j["ssim_mean"] = s.ssim_mean;
  j["psnr_mean"] = detail::optional_number(s.psnr_mean);
  j["psnr_n"] = s.psnr_n;
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

std::vector<SpecklePattern> cropped(std::span<const SpecklePattern> speckles, const FovSpec& fov) {
  std::vector<SpecklePattern> out;
  out.reserve(speckles.size());
  for (const auto& s : speckles) out.push_back(crop_fov(s, fov));
  return out;
}

std::string labelled(const char* prefix, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%g", prefix, value);
  return buf;
}

}  // namespace

DecoderSpec ExperimentConfig::decoder_spec() const {
  DecoderSpec spec;
  spec.speckle_height = speckle.height;
  spec.speckle_width = speckle.width;
  spec.output_height = corpus.image_size;
  spec.output_width = corpus.image_size;
  spec.input_mode = input_mode;
  spec.conv_stem = conv_stem;
  spec.unet_levels = unet_levels;
  spec.channels = channels;
  return spec;
}

void validate(const ExperimentConfig& c) {
  if (c.corpus.identities < 2) throw InvalidArgument("corpus.identities must be at least 2");
  if (c.corpus.samples_per_identity < 1) throw InvalidArgument("corpus.samples_per_identity must be at least 1");
  if (c.corpus.image_size < 8) throw InvalidArgument("corpus.image_size must be at least 8");
  if (c.speckle.height < 2 || c.speckle.width < 2) throw InvalidArgument("speckle height and width must be at least 2");
  const std::size_t total = c.corpus.identities * c.corpus.samples_per_identity;
  const std::size_t wanted = c.split.n_train + c.split.n_eval + c.split.n_test;
  if (c.split.n_train == 0 || c.split.n_eval == 0 || c.split.n_test < 2)
    throw InvalidArgument("split needs train >= 1, eval >= 1 and test >= 2");
  if (wanted > total)
    throw InvalidArgument("split asks for " + std::to_string(wanted) + " samples but the corpus has " +
                          std::to_string(total));
  validate(c.train);
  for (double sd : c.noise_sd) {
    if (!std::isfinite(sd) || sd < 0.0) throw InvalidArgument("noise.sd_list entries must be finite and >= 0");
  }
  if (c.thresholds.empty()) throw InvalidArgument("recognition.thresholds must not be empty");
  for (double t : c.thresholds) {
    if (!std::isfinite(t) || !(t > 0.0)) throw InvalidArgument("recognition thresholds must be finite and positive");
  }
  const FovSpec fov = c.fov_window();
  if (fov.crop_height < 2 || fov.crop_width < 2 || fov.origin_row + fov.crop_height > c.speckle.height ||
      fov.origin_col + fov.crop_width > c.speckle.width)
    throw InvalidArgument("fov window does not fit inside the speckle");
  if (c.embedding_grid < 2 || c.embedding_grid > c.corpus.image_size)
    throw InvalidArgument("recognition.grid must be in [2, image_size]");
}

ExperimentConfig config_from_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw InvalidArgument(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  try {
    reject_unknown(j, "config",
                   {"key_seed", "attack_key_seed", "corpus", "speckle", "split", "decoder", "train", "noise", "fov",
                    "recognition", "threads", "output_dir"});
    read(j, "key_seed", c.key_seed);
    read(j, "attack_key_seed", c.attack_key_seed);
    read(j, "threads", c.threads);
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("corpus")) {
      const auto& o = j.at("corpus");
      reject_unknown(o, "corpus", {"identities", "samples_per_identity", "image_size", "seed"});
      read(o, "identities", c.corpus.identities);
      read(o, "samples_per_identity", c.corpus.samples_per_identity);
      read(o, "image_size", c.corpus.image_size);
      read(o, "seed", c.corpus.seed);
    }
    if (j.contains("speckle")) {
      const auto& o = j.at("speckle");
      reject_unknown(o, "speckle", {"height", "width"});
      read(o, "height", c.speckle.height);
      read(o, "width", c.speckle.width);
    }
    if (j.contains("split")) {
      const auto& o = j.at("split");
      reject_unknown(o, "split", {"train", "eval", "test", "seed"});
      read(o, "train", c.split.n_train);
      read(o, "eval", c.split.n_eval);
      read(o, "test", c.split.n_test);
      read(o, "seed", c.split_seed);
    }
    if (j.contains("decoder")) {
      const auto& o = j.at("decoder");
      reject_unknown(o, "decoder", {"input_mode", "conv_stem", "unet_levels", "channels", "seed"});
      if (o.contains("input_mode")) c.input_mode = parse_mode(o.at("input_mode").get<std::string>());
      read(o, "conv_stem", c.conv_stem);
      read(o, "unet_levels", c.unet_levels);
      read(o, "channels", c.channels);
      read(o, "seed", c.decoder_seed);
    }
    if (j.contains("train")) {
      const auto& o = j.at("train");
      reject_unknown(o, "train", {"learning_rate", "epochs", "batch_size", "seed"});
      read(o, "learning_rate", c.train.learning_rate);
      read(o, "epochs", c.train.epochs);
      read(o, "batch_size", c.train.batch_size);
      read(o, "seed", c.train.seed);
    }
    if (j.contains("noise")) {
      const auto& o = j.at("noise");
      reject_unknown(o, "noise", {"sd_list", "seed"});
      read(o, "sd_list", c.noise_sd);
      read(o, "seed", c.noise_seed);
    }
    if (j.contains("fov")) {
      const auto& o = j.at("fov");
      reject_unknown(o, "fov", {"origin_row", "origin_col", "height", "width"});
      FovSpec fov = quarter_fov(c.speckle);
      read(o, "origin_row", fov.origin_row);
      read(o, "origin_col", fov.origin_col);
      read(o, "height", fov.crop_height);
      read(o, "width", fov.crop_width);
      c.fov = fov;
    }
    if (j.contains("recognition")) {
      const auto& o = j.at("recognition");
      reject_unknown(o, "recognition", {"thresholds", "embedding_seed", "grid"});
      read(o, "thresholds", c.thresholds);
      read(o, "embedding_seed", c.embedding_seed);
      read(o, "grid", c.embedding_grid);
    }
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("bad config value: ") + e.what());
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

std::string config_to_json(const ExperimentConfig& config) { return config_json_value(config).dump(); }

std::string config_hash(const ExperimentConfig& config) { return to_hex(fnv1a(config_to_json(config))); }

ConditionSummary summarize(std::string label, std::span<const PlainImage> references,
                           std::span<const PlainImage> estimates) {
  if (references.size() != estimates.size())
    throw InvalidArgument("summarize: " + std::to_string(references.size()) + " references vs " +
                          std::to_string(estimates.size()) + " estimates");
  if (references.empty()) throw InvalidArgument("summarize: no samples");
  ConditionSummary s;
  s.label = std::move(label);
  s.n = references.size();
  std::vector<double> pccs;
  double psnr_sum = 0.0;
  for (std::size_t i = 0; i < references.size(); ++i) {
    const auto ref = references[i].data();
    const auto est = estimates[i].data();
    try {
      pccs.push_back(metrics::pcc(ref, est));
    } catch (const UndefinedMetric&) {
      // constant image: left out of the PCC mean, visible through pcc_n
    }
    const double err = metrics::mse(ref, est);
    s.mse_mean += err;
    s.ssim_mean += metrics::ssim(ref, est);
    if (err > 0.0) {
      psnr_sum += metrics::psnr(ref, est);
      ++s.psnr_n;
    }
  }
  if (pccs.empty()) throw UndefinedMetric("condition '" + s.label + "': PCC undefined for every sample");
  const double n = static_cast<double>(s.n);
  s.mse_mean /= n;
  s.ssim_mean /= n;
  s.pcc_n = pccs.size();
  const double np = static_cast<double>(s.pcc_n);
  for (double p : pccs) s.pcc_mean += p;
  s.pcc_mean /= np;
  for (double p : pccs) s.pcc_std += (p - s.pcc_mean) * (p - s.pcc_mean);
  s.pcc_std = std::sqrt(s.pcc_std / np);
  if (s.psnr_n > 0) s.psnr_mean = psnr_sum / static_cast<double>(s.psnr_n);
  return s;
}

const ConditionSummary& ExperimentReport::condition(const std::string& label) const {
  for (const auto& c : conditions) {
    if (c.label == label) return c;
  }
  throw InvalidArgument("report has no condition '" + label + "'");
}

std::string to_json(const ExperimentReport& report, bool include_wall_clock) {
  Json j;
  j["kind"] = report.kind;
  j["config_hash"] = report.config_hash;
  j["config"] = report.config_json.empty() ? Json(nullptr) : Json::parse(report.config_json);
  Json seeds = Json::object();
  for (const auto& [k, v] : report.seeds) seeds[k] = v;
  j["seeds"] = seeds;
  Json fps = Json::object();
  for (const auto& [k, v] : report.key_fingerprints) fps[k] = to_hex(v);
  j["key_fingerprints"] = fps;
  Json conds = Json::array();
  for (const auto& c : report.conditions) conds.push_back(condition_json(c));
  j["conditions"] = conds;
  j["recognition"] = detail::sweep_to_json(report.recognition);
  Json extras = Json::object();
  for (const auto& [k, v] : report.extras) extras[k] = v;
  j["extras"] = extras;
  Json hist = Json::array();
  for (const auto& e : report.history.epochs) {
    hist.push_back(
        {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"eval_loss", e.eval_loss}, {"eval_pcc", e.eval_pcc}});
  }
  j["training"] = hist;
  if (include_wall_clock) j["wall_clock_s"] = report.wall_clock_s;
  return j.dump(2) + "\n";
}

std::string conditions_csv(const ExperimentReport& report) {
  std::string out = "label,n,pcc_n,pcc_mean,pcc_std,mse_mean,ssim_mean,psnr_mean,psnr_n\n";
  char buf[256];
  for (const auto& c : report.conditions) {
    std::string psnr = "null";
    if (c.psnr_mean) {
      std::snprintf(buf, sizeof buf, "%.6f", *c.psnr_mean);
      psnr = buf;
    }
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.6f,%.6f,%.6f,%.6f,", c.label.c_str(), c.n, c.pcc_n, c.pcc_mean, c.pcc_std,
                  c.mse_mean, c.ssim_mean);
    out += buf;
    out += psnr + "," + std::to_string(c.psnr_n) + "\n";
  }
  return out;
}

std::filesystem::path write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string stem = report.kind + "_" + report.config_hash;
  std::filesystem::path path = dir / (stem + ".json");
  for (int suffix = 1; std::filesystem::exists(path); ++suffix) {
    path = dir / (stem + "_" + std::to_string(suffix) + ".json");
  }
  write_text(path, to_json(report));
  return path;
}

PreparedData prepare(const ExperimentConfig& config) {
  validate(config);
  PreparedData d;
  d.corpus = dataset::build_corpus(config.corpus.identities, config.corpus.samples_per_identity,
                                   config.corpus.image_size, config.corpus.seed);
  d.split = dataset::split(d.corpus.samples, config.split, config.split_seed);
  d.key = generate_key(config.key_seed, config.n_in(), config.n_out());
  d.train_plain = dataset::images_of(d.split.train);
  d.eval_plain = dataset::images_of(d.split.eval);
  d.test_plain = dataset::images_of(d.split.test);
  d.train_speckle = encrypt_all(d.key, d.train_plain, config.speckle, config.threads);
  d.eval_speckle = encrypt_all(d.key, d.eval_plain, config.speckle, config.threads);
  d.test_speckle = encrypt_all(d.key, d.test_plain, config.speckle, config.threads);
  return d;
}

std::vector<recognition::RecognitionReport> recognition_sweep(const ExperimentConfig& config,
                                                              std::span<const PlainImage> originals,
                                                              std::span<const PlainImage> decrypted) {
  const auto model = recognition::make_embedding_model(config.embedding_seed, config.embedding_grid);
  std::vector<recognition::FaceEmbedding> eo, ed;
  for (const auto& im : originals) eo.push_back(recognition::embed(model, im));
  for (const auto& im : decrypted) ed.push_back(recognition::embed(model, im));
  return recognition::threshold_sweep(recognition::pair_distances(eo, ed), config.thresholds);
}

PipelineOutcome run_pipeline(const ExperimentConfig& config, const PipelineOptions& options) {
  const auto start = Clock::now();
  PipelineOutcome out;
  out.data = prepare(config);
  const PreparedData& d = out.data;

  ExperimentReport& r = out.report;
  r.kind = options.perfect_decoder ? "pipeline_perfect" : "pipeline";
  r.config_hash = config_hash(config);
  r.config_json = config_to_json(config);
  r.seeds = {{"key", config.key_seed},
             {"corpus", config.corpus.seed},
             {"split", config.split_seed},
             {"decoder", config.decoder_seed},
             {"train", config.train.seed},
             {"embedding", config.embedding_seed}};
  r.key_fingerprints = {{"key", d.key.fingerprint}};

  if (options.perfect_decoder) {
    out.decrypted = d.test_plain;
  } else {
    DecoderModel model = make_decoder(config.decoder_spec(), config.decoder_seed);
    auto trained = train(std::move(model), d.train_set(), d.eval_set(), config.train, options.on_epoch);
    r.history = trained.history;
    out.decrypted = forward_all(trained.model, d.test_speckle, config.threads);
    out.model = std::move(trained.model);
  }

  r.conditions.push_back(summarize("test", d.test_plain, out.decrypted));
  r.recognition = recognition_sweep(config, d.test_plain, out.decrypted);

  const auto emb = recognition::make_embedding_model(config.embedding_seed, config.embedding_grid);
  std::vector<recognition::FaceEmbedding> eo, ed;
  for (const auto& im : d.test_plain) eo.push_back(recognition::embed(emb, im));
  for (const auto& im : out.decrypted) ed.push_back(recognition::embed(emb, im));
  const auto self = recognition::self_distances(eo, ed);
  double mean = 0.0;
  for (double v : self) mean += v;
  mean /= static_cast<double>(self.size());
  r.extras.emplace_back("self_distance_mean", mean);
  for (double t : config.thresholds) {
    std::size_t hits = 0;
    for (double v : self) hits += recognition::match_distance(v, t) == recognition::MatchResult::match ? 1 : 0;
    r.extras.emplace_back(labelled("self_match_rate@", t), static_cast<double>(hits) / self.size());
  }

  r.wall_clock_s = seconds_since(start);

  if (options.persist) {
    const auto& dir = config.output_dir;
    std::filesystem::create_directories(dir / "test");
    io::save_key(d.key, dir / "key.spky");
    if (out.model) save_model(*out.model, dir / "model.spmd");
    write_text(dir / "history.csv", to_csv(r.history));
    for (std::size_t i = 0; i < d.test_plain.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "%04zu", i);
      io::save_plain(d.test_plain[i], dir / "test" / (std::string("plain_") + name + ".spim"));
      io::save_speckle(d.test_speckle[i], dir / "test" / (std::string("speckle_") + name + ".spim"));
      io::save_plain(out.decrypted[i], dir / "test" / (std::string("decrypted_") + name + ".spim"));
    }
    write_text(dir / "recognition.csv", recognition::sweep_csv(r.recognition));
    write_text(dir / "conditions.csv", conditions_csv(r));
    out.report_path = write_report(r, dir);
  }
  return out;
}

ExperimentReport noise_sweep(const DecoderModel& model, const PhysicalKey& key, SpeckleShape shape,
                             std::span<const PlainImage> test_plain, std::span<const double> sd_list,
                             std::uint64_t noise_seed, unsigned threads) {
  const auto start = Clock::now();
  if (sd_list.empty()) throw InvalidArgument("noise sweep needs at least one SD");
  const auto clean = encrypt_all(key, test_plain, shape, threads);
  ExperimentReport r;
  r.kind = "noise_sweep";
  r.seeds = {{"noise", noise_seed}};
  r.key_fingerprints = {{"key", key.fingerprint}};
  for (double sd : sd_list) {
    std::vector<SpecklePattern> noisy;
    noisy.reserve(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) {
      noisy.push_back(add_noise(clean[i], NoiseSpec{sd, derive_seed(noise_seed, static_cast<std::uint64_t>(i))}));
    }
    const auto decoded = forward_all(model, noisy, threads);
    r.conditions.push_back(summarize(labelled("sd=", sd), test_plain, decoded));
  }
  r.wall_clock_s = seconds_since(start);
  return r;
}

ExperimentReport fov_experiment(const ExperimentConfig& config, const EpochCallback& on_epoch) {
  const auto start = Clock::now();
  const PreparedData d = prepare(config);
  const FovSpec fov = config.fov_window();

  ExperimentReport r;
  r.kind = "fov";
  r.config_hash = config_hash(config);
  r.config_json = config_to_json(config);
  r.seeds = {{"key", config.key_seed}, {"decoder", config.decoder_seed}, {"train", config.train.seed}};
  r.key_fingerprints = {{"key", d.key.fingerprint}};

  auto full = train(make_decoder(config.decoder_spec(), config.decoder_seed), d.train_set(), d.eval_set(),
                    config.train, on_epoch);
  r.conditions.push_back(summarize("full_fov", d.test_plain, forward_all(full.model, d.test_speckle, config.threads)));

  const auto train_c = cropped(d.train_speckle, fov);
  const auto eval_c = cropped(d.eval_speckle, fov);
  const auto test_c = cropped(d.test_speckle, fov);
  DecoderSpec spec = config.decoder_spec();
  spec.speckle_height = fov.crop_height;
  spec.speckle_width = fov.crop_width;
  auto quarter = train(make_decoder(spec, config.decoder_seed), SampleSet{train_c, d.train_plain},
                       SampleSet{eval_c, d.eval_plain}, config.train, on_epoch);
  r.conditions.push_back(summarize("quarter_fov", d.test_plain, forward_all(quarter.model, test_c, config.threads)));

  r.extras = {{"full_pixels", static_cast<double>(config.speckle.size())},
              {"crop_pixels", static_cast<double>(fov.crop_height * fov.crop_width)},
              {"pcc_gap", r.conditions[0].pcc_mean - r.conditions[1].pcc_mean}};
  r.wall_clock_s = seconds_since(start);
  return r;
}

ExperimentReport wrong_key_attack(const DecoderModel& model, const PhysicalKey& key_a, const PhysicalKey& key_b,
                                  SpeckleShape shape, std::span<const PlainImage> test_plain, unsigned threads) {
  const auto start = Clock::now();
  if (key_a.n_in != key_b.n_in || key_a.n_out != key_b.n_out)
    throw InvalidArgument("attack keys differ in shape: " + std::to_string(key_a.n_out) + "x" +
                          std::to_string(key_a.n_in) + " vs " + std::to_string(key_b.n_out) + "x" +
                          std::to_string(key_b.n_in));
  ExperimentReport r;
  r.kind = "attack";
  r.seeds = {{"key_a", key_a.seed}, {"key_b", key_b.seed}};
  r.key_fingerprints = {{"key_a", key_a.fingerprint}, {"key_b", key_b.fingerprint}};
  const auto same = forward_all(model, encrypt_all(key_a, test_plain, shape, threads), threads);
  r.conditions.push_back(summarize("same_key", test_plain, same));
  const auto wrong = forward_all(model, encrypt_all(key_b, test_plain, shape, threads), threads);
  r.conditions.push_back(summarize("wrong_key", test_plain, wrong));
  r.wall_clock_s = seconds_since(start);
  return r;
}

}  // namespace speckle::harness
