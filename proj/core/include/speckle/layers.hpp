#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace speckle::nn {

struct Shape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const { return channels * height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Activations for a mini-batch: one column per sample, features stored in
/// (channel, row, col) order. `im` is populated only for complex data.
struct Batch {
  Shape shape;
  Eigen::MatrixXd re;
  Eigen::MatrixXd im;
  bool complex = false;

  Eigen::Index samples() const { return re.cols(); }
};

/// z = W x + b with complex W and b. Weights are held as separate real and
/// imaginary matrices and trained as independent real parameters.
struct ComplexDense {
  Shape input;
  std::size_t outputs = 0;
  Eigen::MatrixXd weight_re;  ///< outputs x input.size()
  Eigen::MatrixXd weight_im;
  Eigen::VectorXd bias_re;
  Eigen::VectorXd bias_im;
};

/// |z|, complex to real.
struct Modulus {};

/// 3x3 same-padded convolution followed by max(0, .).
struct ConvBlock {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  Eigen::MatrixXd kernels;  ///< out_channels x (in_channels * 9), taps row-major per channel
  Eigen::VectorXd bias;
};

/// 2x2 max-pool. Its input is kept for the matching Upsample.
struct Downsample {};

/// 2x nearest-neighbour upsample, concatenated with the input of the most
/// recent unmatched Downsample.
struct Upsample {};

/// Logistic output 1 / (1 + exp(-(gain * u + offset))).
struct OutputSquash {
  double gain = 1.0;
  double offset = 0.0;
};

using Layer = std::variant<ComplexDense, Modulus, ConvBlock, Downsample, Upsample, OutputSquash>;

enum class LayerTag : std::uint8_t {
  complex_dense = 1,
  modulus = 2,
  conv_block = 3,
  downsample = 4,
  upsample = 5,
  output_squash = 6,
};

LayerTag tag_of(const Layer& layer);
const char* name_of(const Layer& layer);

/// Output shape of `layer` given its input shape. `skips` carries the
/// shapes pushed by Downsample layers; throws InvalidArgument if the layer
/// cannot accept the input.
Shape output_shape(const Layer& layer, const Shape& input, std::vector<Shape>& skips);

/// Trainable parameters of a layer as contiguous spans, in a fixed order.
std::vector<std::span<double>> parameters(Layer& layer);
std::size_t parameter_count(const Layer& layer);

/// Same structure as `layer` with every parameter set to zero.
Layer zeros_like(const Layer& layer);

/// Forward pass of a whole layer stack. When `trace` is non-null it receives
/// the input of every layer followed by the final output.
Batch forward_stack(std::span<const Layer> layers, Batch input, std::vector<Batch>* trace);

/// Backpropagates `grad_output` through a stack given the trace from
/// forward_stack(). Parameter gradients are added into `grads`, which must
/// be structurally identical to `layers`. Returns the gradient with respect
/// to the stack input; when `input_gradient` is false and the first layer
/// is parametric that gradient is skipped and the result is empty.
Batch backward_stack(std::span<const Layer> layers, const std::vector<Batch>& trace, Batch grad_output,
                     std::span<Layer> grads, bool input_gradient = false);

}  // namespace speckle::nn
