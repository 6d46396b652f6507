#include "speckle/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "speckle/error.hpp"

namespace speckle::nn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string shape_text(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

constexpr double kSquashFloor = 1e-12;

// Patch matrix for one sample: rows are output pixels, columns are
// (channel, tap) pairs. Out-of-image taps read zero.
Eigen::MatrixXd im2col(const double* src, const Shape& in) {
  const auto h = static_cast<long>(in.height);
  const auto w = static_cast<long>(in.width);
  const long hw = h * w;
  Eigen::MatrixXd patches = Eigen::MatrixXd::Zero(hw, static_cast<long>(in.channels * 9));
  for (long c = 0; c < static_cast<long>(in.channels); ++c) {
    const double* plane = src + c * hw;
    for (long ky = 0; ky < 3; ++ky) {
      for (long kx = 0; kx < 3; ++kx) {
        const long col = c * 9 + ky * 3 + kx;
        for (long y = 0; y < h; ++y) {
          const long sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (long x = 0; x < w; ++x) {
            const long sx = x + kx - 1;
            if (sx < 0 || sx >= w) continue;
            patches(y * w + x, col) = plane[sy * w + sx];
          }
        }
      }
    }
  }
  return patches;
}

void col2im_add(const Eigen::MatrixXd& patch_grad, const Shape& in, double* dst) {
  const auto h = static_cast<long>(in.height);
  const auto w = static_cast<long>(in.width);
  const long hw = h * w;
  for (long c = 0; c < static_cast<long>(in.channels); ++c) {
    double* plane = dst + c * hw;
    for (long ky = 0; ky < 3; ++ky) {
      for (long kx = 0; kx < 3; ++kx) {
        const long col = c * 9 + ky * 3 + kx;
        for (long y = 0; y < h; ++y) {
          const long sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (long x = 0; x < w; ++x) {
            const long sx = x + kx - 1;
            if (sx < 0 || sx >= w) continue;
            plane[sy * w + sx] += patch_grad(y * w + x, col);
          }
        }
      }
    }
  }
}

Batch real_batch(const Shape& shape, Eigen::Index samples) {
  Batch b;
  b.shape = shape;
  b.re = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(shape.size()), samples);
  return b;
}

// ---- forward -------------------------------------------------------------

Batch forward_dense(const ComplexDense& layer, const Batch& in) {
  if (static_cast<Eigen::Index>(in.shape.size()) != layer.weight_re.cols()) {
    throw InvalidArgument("complex dense expects " + std::to_string(layer.weight_re.cols()) +
                          " inputs, got " + std::to_string(in.shape.size()));
  }
  Batch out;
  out.shape = {1, 1, layer.outputs};
  out.complex = true;
  out.re.noalias() = layer.weight_re * in.re;
  out.im.noalias() = layer.weight_im * in.re;
  if (in.complex) {
    out.re.noalias() -= layer.weight_im * in.im;
    out.im.noalias() += layer.weight_re * in.im;
  }
  out.re.colwise() += layer.bias_re;
  out.im.colwise() += layer.bias_im;
  return out;
}

Batch forward_modulus(const Batch& in) {
  Batch out;
  out.shape = in.shape;
  if (in.complex) {
    out.re = (in.re.array().square() + in.im.array().square()).sqrt().matrix();
  } else {
    out.re = in.re.cwiseAbs();
  }
  return out;
}

Batch forward_conv(const ConvBlock& layer, const Batch& in) {
  if (in.complex) throw InvalidArgument("conv block expects real input");
  const Shape out_shape{layer.out_channels, in.shape.height, in.shape.width};
  Batch out = real_batch(out_shape, in.samples());
  const auto hw = static_cast<Eigen::Index>(in.shape.height * in.shape.width);
  for (Eigen::Index b = 0; b < in.samples(); ++b) {
    const Eigen::MatrixXd patches = im2col(in.re.col(b).data(), in.shape);
    Eigen::Map<Eigen::MatrixXd> result(out.re.col(b).data(), hw, static_cast<Eigen::Index>(layer.out_channels));
    result.noalias() = patches * layer.kernels.transpose();
    result.rowwise() += layer.bias.transpose();
    result = result.cwiseMax(0.0);
  }
  return out;
}

Batch forward_down(const Batch& in) {
  const Shape s = in.shape;
  const Shape o{s.channels, s.height / 2, s.width / 2};
  Batch out = real_batch(o, in.samples());
  for (Eigen::Index b = 0; b < in.samples(); ++b) {
    const double* src = in.re.col(b).data();
    double* dst = out.re.col(b).data();
    for (std::size_t c = 0; c < s.channels; ++c) {
      for (std::size_t y = 0; y < o.height; ++y) {
        for (std::size_t x = 0; x < o.width; ++x) {
          const std::size_t base = c * s.height * s.width + 2 * y * s.width + 2 * x;
          dst[c * o.height * o.width + y * o.width + x] =
              std::max({src[base], src[base + 1], src[base + s.width], src[base + s.width + 1]});
        }
      }
    }
  }
  return out;
}

Batch forward_up(const Batch& in, const Batch& skip) {
  const Shape s = in.shape;
  const Shape o{s.channels + skip.shape.channels, skip.shape.height, skip.shape.width};
  Batch out = real_batch(o, in.samples());
  const std::size_t up_size = s.channels * o.height * o.width;
  for (Eigen::Index b = 0; b < in.samples(); ++b) {
    const double* src = in.re.col(b).data();
    double* dst = out.re.col(b).data();
    for (std::size_t c = 0; c < s.channels; ++c) {
      for (std::size_t y = 0; y < o.height; ++y) {
        for (std::size_t x = 0; x < o.width; ++x) {
          dst[c * o.height * o.width + y * o.width + x] = src[c * s.height * s.width + (y / 2) * s.width + x / 2];
        }
      }
    }
    std::copy_n(skip.re.col(b).data(), skip.shape.size(), dst + up_size);
  }
  return out;
}

Batch forward_squash(const OutputSquash& layer, const Batch& in) {
  if (in.complex) throw InvalidArgument("output squash expects real input");
  Batch out;
  out.shape = in.shape;
  out.re = in.re.unaryExpr([&](double u) {
    const double s = 1.0 / (1.0 + std::exp(-(layer.gain * u + layer.offset)));
    return std::clamp(s, kSquashFloor, 1.0 - kSquashFloor);
  });
  return out;
}

// ---- backward ------------------------------------------------------------

Batch backward_dense(const ComplexDense& layer, const Batch& in, const Batch& grad_out, ComplexDense& grad,
                     bool want_input_grad) {
  const Eigen::MatrixXd& gr = grad_out.re;
  const Eigen::MatrixXd& gi = grad_out.im;
  grad.weight_re.noalias() += gr * in.re.transpose();
  grad.weight_im.noalias() += gi * in.re.transpose();
  if (in.complex) {
    grad.weight_re.noalias() += gi * in.im.transpose();
    grad.weight_im.noalias() -= gr * in.im.transpose();
  }
  grad.bias_re += gr.rowwise().sum();
  grad.bias_im += gi.rowwise().sum();

  Batch gin;
  gin.shape = in.shape;
  if (!want_input_grad) return gin;
  gin.re.noalias() = layer.weight_re.transpose() * gr;
  gin.re.noalias() += layer.weight_im.transpose() * gi;
  if (in.complex) {
    gin.complex = true;
    gin.im.noalias() = layer.weight_re.transpose() * gi;
    gin.im.noalias() -= layer.weight_im.transpose() * gr;
  }
  return gin;
}

Batch backward_modulus(const Batch& in, const Batch& out, const Batch& grad_out) {
  Batch gin;
  gin.shape = in.shape;
  gin.complex = in.complex;
  // Subgradient 0 at |z| = 0.
  const Eigen::ArrayXXd scale =
      (out.re.array() > 0.0).select(grad_out.re.array() / out.re.array(), 0.0);
  gin.re = (scale * in.re.array()).matrix();
  if (in.complex) gin.im = (scale * in.im.array()).matrix();
  return gin;
}

Batch backward_conv(const ConvBlock& layer, const Batch& in, const Batch& out, const Batch& grad_out,
                    ConvBlock& grad, bool want_input_grad) {
  Batch gin = real_batch(in.shape, in.samples());
  const auto hw = static_cast<Eigen::Index>(in.shape.height * in.shape.width);
  const auto oc = static_cast<Eigen::Index>(layer.out_channels);
  for (Eigen::Index b = 0; b < in.samples(); ++b) {
    const Eigen::MatrixXd patches = im2col(in.re.col(b).data(), in.shape);
    Eigen::Map<const Eigen::MatrixXd> activated(out.re.col(b).data(), hw, oc);
    Eigen::Map<const Eigen::MatrixXd> upstream(grad_out.re.col(b).data(), hw, oc);
    const Eigen::MatrixXd local = (activated.array() > 0.0).select(upstream.array(), 0.0).matrix();
    grad.kernels.noalias() += local.transpose() * patches;
    grad.bias += local.colwise().sum().transpose();
    if (want_input_grad) {
      const Eigen::MatrixXd patch_grad = local * layer.kernels;
      col2im_add(patch_grad, in.shape, gin.re.col(b).data());
    }
  }
  return gin;
}

Batch backward_down(const Batch& in, const Batch& grad_out) {
  const Shape s = in.shape;
  const Shape o = grad_out.shape;
  Batch gin = real_batch(s, in.samples());
  for (Eigen::Index b = 0; b < in.samples(); ++b) {
    const double* src = in.re.col(b).data();
    const double* g = grad_out.re.col(b).data();
    double* dst = gin.re.col(b).data();
    for (std::size_t c = 0; c < s.channels; ++c) {
      for (std::size_t y = 0; y < o.height; ++y) {
        for (std::size_t x = 0; x < o.width; ++x) {
          const std::size_t base = c * s.height * s.width + 2 * y * s.width + 2 * x;
          const std::size_t cand[4] = {base, base + 1, base + s.width, base + s.width + 1};
          std::size_t arg = cand[0];
          for (std::size_t k = 1; k < 4; ++k) {
            if (src[cand[k]] > src[arg]) arg = cand[k];
          }
          dst[arg] += g[c * o.height * o.width + y * o.width + x];
        }
      }
    }
  }
  return gin;
}

// Splits the upsample gradient into the part for its own input and the part
// for the skip connection.
std::pair<Batch, Batch> backward_up(const Batch& in, const Batch& grad_out) {
  const Shape s = in.shape;
  const Shape o = grad_out.shape;
  const Shape skip_shape{o.channels - s.channels, o.height, o.width};
  Batch gin = real_batch(s, in.samples());
  Batch gskip = real_batch(skip_shape, in.samples());
  const std::size_t up_size = s.channels * o.height * o.width;
  for (Eigen::Index b = 0; b < in.samples(); ++b) {
    const double* g = grad_out.re.col(b).data();
    double* dst = gin.re.col(b).data();
    for (std::size_t c = 0; c < s.channels; ++c) {
      for (std::size_t y = 0; y < o.height; ++y) {
        for (std::size_t x = 0; x < o.width; ++x) {
          dst[c * s.height * s.width + (y / 2) * s.width + x / 2] += g[c * o.height * o.width + y * o.width + x];
        }
      }
    }
    std::copy_n(g + up_size, skip_shape.size(), gskip.re.col(b).data());
  }
  return {std::move(gin), std::move(gskip)};
}

Batch backward_squash(const OutputSquash& layer, const Batch& in, const Batch& out, const Batch& grad_out,
                      OutputSquash& grad) {
  const Eigen::ArrayXXd local = grad_out.re.array() * out.re.array() * (1.0 - out.re.array());
  grad.gain += (local * in.re.array()).sum();
  grad.offset += local.sum();
  Batch gin;
  gin.shape = in.shape;
  gin.re = (local * layer.gain).matrix();
  return gin;
}

}  // namespace

LayerTag tag_of(const Layer& layer) {
  return std::visit(overloaded{
                        [](const ComplexDense&) { return LayerTag::complex_dense; },
                        [](const Modulus&) { return LayerTag::modulus; },
                        [](const ConvBlock&) { return LayerTag::conv_block; },
                        [](const Downsample&) { return LayerTag::downsample; },
                        [](const Upsample&) { return LayerTag::upsample; },
                        [](const OutputSquash&) { return LayerTag::output_squash; },
                    },
                    layer);
}

const char* name_of(const Layer& layer) {
  switch (tag_of(layer)) {
    case LayerTag::complex_dense: return "complex_dense";
    case LayerTag::modulus: return "modulus";
    case LayerTag::conv_block: return "conv_block";
    case LayerTag::downsample: return "downsample";
    case LayerTag::upsample: return "upsample";
    case LayerTag::output_squash: return "output_squash";
  }
  return "unknown";
}

Shape output_shape(const Layer& layer, const Shape& input, std::vector<Shape>& skips) {
  return std::visit(
      overloaded{
          [&](const ComplexDense& l) {
            if (input.size() != static_cast<std::size_t>(l.weight_re.cols()) ||
                l.weight_re.rows() != static_cast<Eigen::Index>(l.outputs) ||
                l.weight_im.rows() != l.weight_re.rows() || l.weight_im.cols() != l.weight_re.cols() ||
                l.bias_re.size() != l.weight_re.rows() || l.bias_im.size() != l.weight_re.rows()) {
              throw InvalidArgument("complex dense weights do not fit input " + shape_text(input));
            }
            return Shape{1, 1, l.outputs};
          },
          [&](const Modulus&) { return input; },
          [&](const ConvBlock& l) {
            if (input.channels != l.in_channels ||
                l.kernels.rows() != static_cast<Eigen::Index>(l.out_channels) ||
                l.kernels.cols() != static_cast<Eigen::Index>(l.in_channels * 9) ||
                l.bias.size() != static_cast<Eigen::Index>(l.out_channels)) {
              throw InvalidArgument("conv block " + std::to_string(l.in_channels) + "->" +
                                    std::to_string(l.out_channels) + " does not fit input " + shape_text(input));
            }
            return Shape{l.out_channels, input.height, input.width};
          },
          [&](const Downsample&) {
            if (input.height % 2 != 0 || input.width % 2 != 0 || input.height < 2 || input.width < 2) {
              throw InvalidArgument("downsample needs even spatial size, got " + shape_text(input));
            }
            skips.push_back(input);
            return Shape{input.channels, input.height / 2, input.width / 2};
          },
          [&](const Upsample&) {
            if (skips.empty()) throw InvalidArgument("upsample without a matching downsample");
            const Shape skip = skips.back();
            skips.pop_back();
            if (skip.height != 2 * input.height || skip.width != 2 * input.width) {
              throw InvalidArgument("upsample of " + shape_text(input) + " does not match skip " + shape_text(skip));
            }
            return Shape{input.channels + skip.channels, skip.height, skip.width};
          },
          [&](const OutputSquash&) { return input; },
      },
      layer);
}

std::vector<std::span<double>> parameters(Layer& layer) {
  auto span_of = [](auto& m) { return std::span<double>(m.data(), static_cast<std::size_t>(m.size())); };
  return std::visit(overloaded{
                        [&](ComplexDense& l) {
                          return std::vector<std::span<double>>{span_of(l.weight_re), span_of(l.weight_im),
                                                                span_of(l.bias_re), span_of(l.bias_im)};
                        },
                        [&](ConvBlock& l) { return std::vector<std::span<double>>{span_of(l.kernels), span_of(l.bias)}; },
                        [&](OutputSquash& l) {
                          return std::vector<std::span<double>>{std::span<double>(&l.gain, 1),
                                                                std::span<double>(&l.offset, 1)};
                        },
                        [](auto&) { return std::vector<std::span<double>>{}; },
                    },
                    layer);
}

std::size_t parameter_count(const Layer& layer) {
  std::size_t n = 0;
  for (auto s : parameters(const_cast<Layer&>(layer))) n += s.size();
  return n;
}

Layer zeros_like(const Layer& layer) {
  Layer copy = layer;
  for (auto s : parameters(copy)) std::fill(s.begin(), s.end(), 0.0);
  return copy;
}

Batch forward_stack(std::span<const Layer> layers, Batch input, std::vector<Batch>* trace) {
  std::vector<Batch> skips;
  if (trace) {
    trace->clear();
    trace->reserve(layers.size() + 1);
  }
  Batch current = std::move(input);
  for (const Layer& layer : layers) {
    if (trace) trace->push_back(current);
    current = std::visit(overloaded{
                             [&](const ComplexDense& l) { return forward_dense(l, current); },
                             [&](const Modulus&) { return forward_modulus(current); },
                             [&](const ConvBlock& l) { return forward_conv(l, current); },
                             [&](const Downsample&) {
                               skips.push_back(current);
                               return forward_down(current);
                             },
                             [&](const Upsample&) {
                               if (skips.empty()) throw InvalidArgument("upsample without a matching downsample");
                               Batch out = forward_up(current, skips.back());
                               skips.pop_back();
                               return out;
                             },
                             [&](const OutputSquash& l) { return forward_squash(l, current); },
                         },
                         layer);
  }
  if (trace) trace->push_back(current);
  return current;
}

Batch backward_stack(std::span<const Layer> layers, const std::vector<Batch>& trace, Batch grad_output,
                     std::span<Layer> grads, bool input_gradient) {
  if (trace.size() != layers.size() + 1 || grads.size() != layers.size()) {
    throw InvalidArgument("backward_stack: trace or gradient buffer does not match the layer stack");
  }
  std::vector<Batch> skip_grads;
  Batch grad = std::move(grad_output);
  for (std::size_t i = layers.size(); i-- > 0;) {
    const Batch& in = trace[i];
    const Batch& out = trace[i + 1];
    const bool want_input_grad = i > 0 || input_gradient;
    grad = std::visit(
        overloaded{
            [&](const ComplexDense& l) {
              return backward_dense(l, in, grad, std::get<ComplexDense>(grads[i]), want_input_grad);
            },
            [&](const Modulus&) { return backward_modulus(in, out, grad); },
            [&](const ConvBlock& l) {
              return backward_conv(l, in, out, grad, std::get<ConvBlock>(grads[i]), want_input_grad);
            },
            [&](const Downsample&) {
              Batch g = backward_down(in, grad);
              if (skip_grads.empty()) throw InternalError("downsample without skip gradient");
              g.re += skip_grads.back().re;
              skip_grads.pop_back();
              return g;
            },
            [&](const Upsample&) {
              auto [g, gskip] = backward_up(in, grad);
              skip_grads.push_back(std::move(gskip));
              return g;
            },
            [&](const OutputSquash& l) {
              return backward_squash(l, in, out, grad, std::get<OutputSquash>(grads[i]));
            },
        },
        layers[i]);
  }
  return grad;
}

}  // namespace speckle::nn
