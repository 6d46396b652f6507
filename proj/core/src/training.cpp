#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <string>

#include "speckle/decoder.hpp"
#include "speckle/error.hpp"
#include "speckle/rng.hpp"

namespace speckle {

void validate(const TrainConfig& config) {
  if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
    throw InvalidArgument("learning_rate must be positive");
  }
  if (config.epochs == 0) throw InvalidArgument("epochs must be at least 1");
  if (config.batch_size == 0) throw InvalidArgument("batch_size must be at least 1");
}

double cosine_learning_rate(double lr0, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return lr0;
  return 0.5 * lr0 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

std::string to_csv(const TrainHistory& history) {
  std::string out = "epoch,train_loss,eval_loss,eval_pcc\n";
  char line[128];
  for (const auto& e : history.epochs) {
    std::snprintf(line, sizeof line, "%zu,%.9f,%.9f,%.9f\n", e.epoch, e.train_loss, e.eval_loss, e.eval_pcc);
    out += line;
  }
  return out;
}

namespace {

void check_set(const DecoderModel& model, SampleSet set, const char* what) {
  if (set.speckles.size() != set.plaintexts.size()) {
    throw InvalidArgument(std::string(what) + " set has " + std::to_string(set.speckles.size()) +
                          " speckles but " + std::to_string(set.plaintexts.size()) + " plaintexts");
  }
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& s = set.speckles[i];
    const auto& p = set.plaintexts[i];
    if (s.height != model.speckle_height || s.width != model.speckle_width) {
      throw InvalidArgument(std::string(what) + " speckle " + std::to_string(i) + " is " +
                            std::to_string(s.height) + "x" + std::to_string(s.width) + ", decoder expects " +
                            std::to_string(model.speckle_height) + "x" + std::to_string(model.speckle_width));
    }
    if (p.height() != model.output_height || p.width() != model.output_width) {
      throw InvalidArgument(std::string(what) + " plaintext " + std::to_string(i) + " is " +
                            std::to_string(p.height()) + "x" + std::to_string(p.width()) + ", decoder outputs " +
                            std::to_string(model.output_height) + "x" + std::to_string(model.output_width));
    }
  }
}

std::vector<nn::Layer> zero_gradients(const DecoderModel& model) {
  std::vector<nn::Layer> grads;
  grads.reserve(model.layers.size());
  for (const auto& layer : model.layers) grads.push_back(nn::zeros_like(layer));
  return grads;
}

void clear(std::vector<nn::Layer>& grads) {
  for (auto& g : grads) {
    for (auto s : nn::parameters(g)) std::fill(s.begin(), s.end(), 0.0);
  }
}

// Loss of a batch and its gradient w.r.t. the network output, averaged over
// the batch. Columns are processed in index order.
double batch_loss(const nn::Batch& out, std::span<const PlainImage* const> targets, Eigen::MatrixXd& grad) {
  const auto rows = static_cast<std::size_t>(out.re.rows());
  const auto count = static_cast<double>(targets.size());
  grad.resize(out.re.rows(), out.re.cols());
  double total = 0.0;
  for (std::size_t b = 0; b < targets.size(); ++b) {
    const auto col = static_cast<Eigen::Index>(b);
    std::span<const double> est(out.re.col(col).data(), rows);
    const auto ref = targets[b]->data();
    total += loss(est, ref);
    const auto g = loss_gradient(est, ref);
    for (std::size_t k = 0; k < rows; ++k) grad(static_cast<Eigen::Index>(k), col) = g[k] / count;
  }
  return total;
}

}  // namespace

TrainResult train(DecoderModel model, SampleSet train_set, SampleSet eval_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  validate(model);
  validate(config);
  if (train_set.size() == 0) throw InvalidArgument("training set is empty");
  check_set(model, train_set, "training");
  check_set(model, eval_set, "evaluation");

  const std::size_t n = train_set.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.epochs;

  Xoshiro256 rng(derive_seed(config.seed, "shuffle"));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<nn::Layer> grads = zero_gradients(model);
  std::vector<nn::Batch> trace;
  std::vector<const SpecklePattern*> inputs;
  std::vector<const PlainImage*> targets;
  Eigen::MatrixXd grad_out;

  TrainHistory history;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_indices(order, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      inputs.clear();
      targets.clear();
      for (std::size_t i = start; i < end; ++i) {
        inputs.push_back(&train_set.speckles[order[i]]);
        targets.push_back(&train_set.plaintexts[order[i]]);
      }
      const nn::Batch out = nn::forward_stack(model.layers, make_input(model, inputs), &trace);
      const double batch_total = batch_loss(out, targets, grad_out);
      if (!std::isfinite(batch_total)) {
        throw NumericalFailure("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                               std::to_string(step) + " (learning rate " +
                               std::to_string(cosine_learning_rate(config.learning_rate, step, total_steps)) +
                               ", batch size " + std::to_string(end - start) + ")");
      }
      epoch_loss += batch_total;

      nn::Batch g;
      g.shape = out.shape;
      g.re = grad_out;
      clear(grads);
      nn::backward_stack(model.layers, trace, std::move(g), grads);

      const double lr = cosine_learning_rate(config.learning_rate, step, total_steps);
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto params = nn::parameters(model.layers[l]);
        auto deltas = nn::parameters(grads[l]);
        for (std::size_t p = 0; p < params.size(); ++p) {
          for (std::size_t k = 0; k < params[p].size(); ++k) params[p][k] -= lr * deltas[p][k];
        }
      }
      ++step;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = epoch_loss / static_cast<double>(n);
    if (eval_set.size() > 0) {
      const EvalSummary eval = evaluate_model(model, eval_set);
      record.eval_loss = eval.mean_loss;
      record.eval_pcc = eval.mean_pcc;
    }
    history.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  return {std::move(model), std::move(history)};
}

GradCheckResult grad_check(const DecoderModel& model, const SpecklePattern& speckle, const PlainImage& plaintext,
                           const GradCheckOptions& options) {
  validate(model);
  const SpecklePattern* input_ptr = &speckle;
  const nn::Batch input = make_input(model, std::span(&input_ptr, 1));
  const auto ref = plaintext.data();
  if (ref.size() != model.output_height * model.output_width) {
    throw InvalidArgument("plaintext does not match the decoder output shape");
  }

  auto loss_of = [&](const DecoderModel& m) {
    const nn::Batch out = nn::forward_stack(m.layers, input, nullptr);
    return loss(std::span<const double>(out.re.data(), static_cast<std::size_t>(out.re.rows())), ref);
  };

  std::vector<nn::Batch> trace;
  const nn::Batch out = nn::forward_stack(model.layers, input, &trace);
  const auto g = loss_gradient(std::span<const double>(out.re.data(), static_cast<std::size_t>(out.re.rows())), ref);
  nn::Batch grad_out;
  grad_out.shape = out.shape;
  grad_out.re = Eigen::Map<const Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
  std::vector<nn::Layer> grads = zero_gradients(model);
  nn::backward_stack(model.layers, trace, std::move(grad_out), grads);

  DecoderModel probe = model;
  Xoshiro256 rng(derive_seed(options.seed, "grad-check"));
  GradCheckResult result;
  for (std::size_t l = 0; l < probe.layers.size(); ++l) {
    auto params = nn::parameters(probe.layers[l]);
    auto analytic = nn::parameters(grads[l]);
    std::vector<std::pair<std::size_t, std::size_t>> slots;  // (span, offset)
    for (std::size_t p = 0; p < params.size(); ++p) {
      for (std::size_t k = 0; k < params[p].size(); ++k) slots.emplace_back(p, k);
    }
    if (slots.empty()) continue;

    for (std::size_t i = 0; i < slots.size(); ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(slots.size() - i));
      std::swap(slots[i], slots[j]);
    }

    LayerGradCheck layer_result;
    layer_result.layer_index = l;
    layer_result.layer_name = nn::name_of(probe.layers[l]);
    const double centre = loss_of(probe);
    const double h = options.step;
    for (std::size_t i = 0; i < slots.size() && layer_result.checked < options.per_layer; ++i) {
      auto [p, k] = slots[i];
      double& value = params[p][k];
      const double saved = value;
      auto at = [&](double offset) {
        value = saved + offset;
        const double f = loss_of(probe);
        value = saved;
        return f;
      };
      const double up = at(h), down = at(-h), up2 = at(h / 2), down2 = at(-h / 2);
      const double numeric = (up - down) / (2.0 * h);
      // Smooth: the central quotients at h and h/2 agree and the one-sided
      // asymmetry halves with the step. A ReLU or max-pool switching inside
      // [-h, h] breaks one of the two; no finite difference describes that
      // probe.
      const double half = (up2 - down2) / h;
      const double asym = (up - 2.0 * centre + down) / h;
      const double asym2 = (up2 - 2.0 * centre + down2) / (h / 2);
      const double tol = 1e-6 * std::max(std::abs(numeric), std::abs(half)) + 2e-9;
      if (std::abs(numeric - half) > tol || std::abs(asym - 2.0 * asym2) > tol) {
        ++layer_result.nonsmooth;
        continue;
      }
      const double exact = analytic[p][k];
      const double err = std::abs(numeric - exact) / std::max({std::abs(numeric), std::abs(exact), options.abs_floor});
      layer_result.max_error = std::max(layer_result.max_error, err);
      ++layer_result.checked;
    }
    result.max_error = std::max(result.max_error, layer_result.max_error);
    result.checked += layer_result.checked;
    result.layers.push_back(layer_result);
  }
  return result;
}

}  // namespace speckle
