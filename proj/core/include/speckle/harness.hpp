#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "speckle/dataset.hpp"
#include "speckle/decoder.hpp"
#include "speckle/metrics.hpp"
#include "speckle/optics.hpp"
#include "speckle/recognizer.hpp"

namespace speckle::harness {

struct CorpusConfig {
  std::size_t identities = 220;
  std::size_t samples_per_identity = 10;
  std::size_t image_size = 16;
  std::uint64_t seed = 1;
};

/// Everything a run depends on. Seeds are always explicit.
struct ExperimentConfig {
  std::uint64_t key_seed = 7;
  std::uint64_t attack_key_seed = 8;
  CorpusConfig corpus;
  SpeckleShape speckle{32, 32};
  dataset::SplitSpec split{2000, 100, 100};
  std::uint64_t split_seed = 2;
  InputMode input_mode = InputMode::amplitude;
  bool conv_stem = false;
  std::size_t unet_levels = 0;
  std::size_t channels = 4;
  std::uint64_t decoder_seed = 3;
  TrainConfig train{0.15, 30, 8, 4};
  std::vector<double> noise_sd{0.0, 0.1, 0.3, 0.5, 1.0};
  std::uint64_t noise_seed = 5;
  std::optional<FovSpec> fov;  ///< default: top-left quadrant
  std::vector<double> thresholds = recognition::kDefaultThresholds;
  std::uint64_t embedding_seed = 11;
  std::size_t embedding_grid = 8;
  unsigned threads = 0;  ///< worker cap; never affects results
  std::filesystem::path output_dir = "runs";

  std::size_t n_in() const { return corpus.image_size * corpus.image_size; }
  std::size_t n_out() const { return speckle.size(); }
  FovSpec fov_window() const { return fov.value_or(quarter_fov(speckle)); }
  DecoderSpec decoder_spec() const;
};

void validate(const ExperimentConfig& config);

/// Parses a JSON config; absent fields keep their defaults, unknown fields
/// are rejected.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON of every result-affecting field (output_dir and threads
/// are left out).
std::string config_to_json(const ExperimentConfig& config);

/// 16 hex digits of FNV-1a over config_to_json().
std::string config_hash(const ExperimentConfig& config);

struct ConditionSummary {
  std::string label;
  std::size_t n = 0;
  std::size_t pcc_n = 0;  ///< samples with defined PCC (neither image constant)
  double pcc_mean = 0.0;
  double pcc_std = 0.0;
  double mse_mean = 0.0;
  double ssim_mean = 0.0;
  std::optional<double> psnr_mean;  ///< over samples with defined PSNR
  std::size_t psnr_n = 0;
};

/// Mean/SD summary of the four metrics over aligned image lists. Throws
/// UndefinedMetric only if no sample has a defined PCC.
ConditionSummary summarize(std::string label, std::span<const PlainImage> references,
                           std::span<const PlainImage> estimates);

struct ExperimentReport {
  std::string kind;
  std::string config_hash;
  std::string config_json;
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
  std::vector<std::pair<std::string, std::uint64_t>> key_fingerprints;
  std::vector<ConditionSummary> conditions;
  std::vector<recognition::RecognitionReport> recognition;
  std::vector<std::pair<std::string, double>> extras;
  TrainHistory history;
  double wall_clock_s = 0.0;

  const ConditionSummary& condition(const std::string& label) const;
};

/// {kind, config_hash, config, seeds{}, key_fingerprints{}, conditions[],
///  recognition[], extras{}, training[], wall_clock_s}
std::string to_json(const ExperimentReport& report, bool include_wall_clock = true);
std::string conditions_csv(const ExperimentReport& report);

/// Writes <dir>/<kind>_<hash>.json; an existing file is never replaced,
/// later runs get a _1, _2, ... suffix. Returns the written path.
std::filesystem::path write_report(const ExperimentReport& report, const std::filesystem::path& dir);

/// Corpus, split, key and ciphertexts for one configuration.
struct PreparedData {
  dataset::Corpus corpus;
  dataset::DatasetSplit split;
  PhysicalKey key;
  std::vector<PlainImage> train_plain, eval_plain, test_plain;
  std::vector<SpecklePattern> train_speckle, eval_speckle, test_speckle;

  SampleSet train_set() const { return {train_speckle, train_plain}; }
  SampleSet eval_set() const { return {eval_speckle, eval_plain}; }
  SampleSet test_set() const { return {test_speckle, test_plain}; }
};

PreparedData prepare(const ExperimentConfig& config);

struct PipelineOptions {
  bool perfect_decoder = false;  ///< skip training; decrypted := original
  bool persist = true;
  EpochCallback on_epoch;
};

struct PipelineOutcome {
  ExperimentReport report;
  std::optional<DecoderModel> model;
  PreparedData data;
  std::vector<PlainImage> decrypted;
  std::filesystem::path report_path;
};

/// corpus -> encrypt -> train -> decrypt test set -> metrics -> recognition
/// sweep. With persist, writes key.spky, model.spmd, history.csv,
/// test/*.spim, recognition.csv, conditions.csv and the report JSON under
/// config.output_dir.
PipelineOutcome run_pipeline(const ExperimentConfig& config, const PipelineOptions& options = {});

/// Recognition sweep between originals and their decryptions.
std::vector<recognition::RecognitionReport> recognition_sweep(const ExperimentConfig& config,
                                                              std::span<const PlainImage> originals,
                                                              std::span<const PlainImage> decrypted);

/// Perturbs the clean test ciphertexts at each SD and decodes them with the
/// same model. Conditions are labelled "sd=<value>".
ExperimentReport noise_sweep(const DecoderModel& model, const PhysicalKey& key, SpeckleShape shape,
                             std::span<const PlainImage> test_plain, std::span<const double> sd_list,
                             std::uint64_t noise_seed, unsigned threads = 0);

/// Trains one decoder on full speckles and one on the crop window, same
/// seeds and recipe, and reports "full_fov" and "quarter_fov" test metrics.
ExperimentReport fov_experiment(const ExperimentConfig& config, const EpochCallback& on_epoch = {});

/// Encrypts the test plaintexts under key_b and decodes them with a model
/// trained on key_a. Reports "same_key" and "wrong_key".
ExperimentReport wrong_key_attack(const DecoderModel& model, const PhysicalKey& key_a, const PhysicalKey& key_b,
                                  SpeckleShape shape, std::span<const PlainImage> test_plain,
                                  unsigned threads = 0);

}  // namespace speckle::harness
