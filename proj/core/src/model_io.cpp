#include <fstream>
#include <iterator>
#include <string>

#include "byte_order.hpp"
#include "speckle/decoder.hpp"
#include "speckle/error.hpp"

namespace speckle {

namespace {

void put_matrix(std::vector<std::byte>& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) detail::put_le(out, m(r, c));
  }
}

void put_vector(std::vector<std::byte>& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) detail::put_le(out, v[i]);
}

Eigen::MatrixXd get_matrix(detail::ByteReader& in, std::size_t rows, std::size_t cols) {
  in.require(rows * cols * 8);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = in.get<double>();
  }
  return m;
}

Eigen::VectorXd get_vector(detail::ByteReader& in, std::size_t n) {
  in.require(n * 8);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = in.get<double>();
  return v;
}

}  // namespace

void save_model(const DecoderModel& model, const std::filesystem::path& path) {
  validate(model);
  std::vector<std::byte> out;
  detail::put_magic(out, "SPMD");
  detail::put_le(out, kModelFormatVersion);
  detail::put_le(out, static_cast<std::uint16_t>(model.layers.size()));
  detail::put_le(out, static_cast<std::uint8_t>(model.input_mode));
  detail::put_le(out, static_cast<std::uint32_t>(model.speckle_height));
  detail::put_le(out, static_cast<std::uint32_t>(model.speckle_width));
  detail::put_le(out, static_cast<std::uint32_t>(model.output_height));
  detail::put_le(out, static_cast<std::uint32_t>(model.output_width));
  for (const auto& layer : model.layers) {
    detail::put_le(out, static_cast<std::uint8_t>(nn::tag_of(layer)));
    if (const auto* d = std::get_if<nn::ComplexDense>(&layer)) {
      detail::put_le(out, static_cast<std::uint32_t>(d->input.size()));
      detail::put_le(out, static_cast<std::uint32_t>(d->outputs));
      put_matrix(out, d->weight_re);
      put_matrix(out, d->weight_im);
      put_vector(out, d->bias_re);
      put_vector(out, d->bias_im);
    } else if (const auto* c = std::get_if<nn::ConvBlock>(&layer)) {
      detail::put_le(out, static_cast<std::uint32_t>(c->in_channels));
      detail::put_le(out, static_cast<std::uint32_t>(c->out_channels));
      put_matrix(out, c->kernels);
      put_vector(out, c->bias);
    } else if (const auto* s = std::get_if<nn::OutputSquash>(&layer)) {
      detail::put_le(out, s->gain);
      detail::put_le(out, s->offset);
    }
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error("cannot open " + path.string() + " for writing");
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error("write failed for " + path.string());
}

DecoderModel load_model(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw FormatError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  std::vector<std::byte> bytes(raw.size());
  std::memcpy(bytes.data(), raw.data(), raw.size());

  const std::string what = path.string();
  detail::ByteReader in(bytes, what);
  if (in.magic() != "SPMD") throw FormatError(what + ": not a model file (bad magic)");
  const auto version = in.get<std::uint16_t>();
  if (version != kModelFormatVersion) {
    throw UnsupportedVersion(what + ": unsupported model format version " + std::to_string(version) +
                             " (this build reads version " + std::to_string(kModelFormatVersion) + ")");
  }
  const auto layer_count = in.get<std::uint16_t>();
  DecoderModel model;
  const auto mode = in.get<std::uint8_t>();
  if (mode > 1) throw FormatError(what + ": unknown input mode " + std::to_string(mode));
  model.input_mode = static_cast<InputMode>(mode);
  model.speckle_height = in.get<std::uint32_t>();
  model.speckle_width = in.get<std::uint32_t>();
  model.output_height = in.get<std::uint32_t>();
  model.output_width = in.get<std::uint32_t>();

  // Track the running activation shape so dense layers get their input shape back.
  nn::Shape shape{1, model.speckle_height, model.speckle_width};
  std::vector<nn::Shape> skips;
  for (std::uint16_t i = 0; i < layer_count; ++i) {
    const auto tag = static_cast<nn::LayerTag>(in.get<std::uint8_t>());
    nn::Layer layer;
    switch (tag) {
      case nn::LayerTag::complex_dense: {
        nn::ComplexDense d;
        const std::size_t inputs = in.get<std::uint32_t>();
        d.outputs = in.get<std::uint32_t>();
        if (inputs != shape.size()) throw FormatError(what + ": dense layer input size does not match");
        d.input = shape;
        d.weight_re = get_matrix(in, d.outputs, inputs);
        d.weight_im = get_matrix(in, d.outputs, inputs);
        d.bias_re = get_vector(in, d.outputs);
        d.bias_im = get_vector(in, d.outputs);
        layer = std::move(d);
        break;
      }
      case nn::LayerTag::conv_block: {
        nn::ConvBlock c;
        c.in_channels = in.get<std::uint32_t>();
        c.out_channels = in.get<std::uint32_t>();
        c.kernels = get_matrix(in, c.out_channels, c.in_channels * 9);
        c.bias = get_vector(in, c.out_channels);
        layer = std::move(c);
        break;
      }
      case nn::LayerTag::output_squash: {
        nn::OutputSquash s;
        s.gain = in.get<double>();
        s.offset = in.get<double>();
        layer = s;
        break;
      }
      case nn::LayerTag::modulus: layer = nn::Modulus{}; break;
      case nn::LayerTag::downsample: layer = nn::Downsample{}; break;
      case nn::LayerTag::upsample: layer = nn::Upsample{}; break;
      default: throw FormatError(what + ": unknown layer tag " + std::to_string(static_cast<int>(tag)));
    }
    try {
      shape = nn::output_shape(layer, shape, skips);
    } catch (const InvalidArgument& e) {
      throw FormatError(what + ": " + e.what());
    }
    model.layers.push_back(std::move(layer));
  }
  if (!in.at_end()) throw FormatError(what + ": trailing bytes after last layer");
  try {
    validate(model);
  } catch (const InvalidArgument& e) {
    throw FormatError(what + ": " + e.what());
  }
  return model;
}

}  // namespace speckle
