#include "sleeptk/unet_infer.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "sleeptk/error.hpp"

namespace sleeptk::unet {

namespace {

using json = nlohmann::json;

// Channels x samples, row-major.
struct Tensor {
  int channels{0};
  std::size_t length{0};
  std::vector<double> data;

  Tensor(int c, std::size_t n) : channels(c), length(n), data(static_cast<std::size_t>(c) * n, 0.0) {}
  double* row(int c) { return data.data() + static_cast<std::size_t>(c) * length; }
  const double* row(int c) const { return data.data() + static_cast<std::size_t>(c) * length; }
};

double activate(Activation a, double v) {
  switch (a) {
    case Activation::Linear:
      return v;
    case Activation::Relu:
      return v > 0.0 ? v : 0.0;
    case Activation::Sigmoid:
      return 1.0 / (1.0 + std::exp(-v));
    case Activation::Tanh:
      return std::tanh(v);
  }
  return v;
}

Tensor conv(const ConvLayer& layer, const Tensor& x) {
  Tensor y(layer.out, x.length);
  const auto n = static_cast<long>(x.length);
  const int left = (layer.kernel - 1) / 2;
  for (int o = 0; o < layer.out; ++o) {
    double* out = y.row(o);
    std::fill(out, out + n, static_cast<double>(layer.bias[static_cast<std::size_t>(o)]));
    for (int i = 0; i < layer.in; ++i) {
      const double* in = x.row(i);
      for (int k = 0; k < layer.kernel; ++k) {
        const double w =
            layer.weight[(static_cast<std::size_t>(o) * layer.in + static_cast<std::size_t>(i)) * layer.kernel +
                         static_cast<std::size_t>(k)];
        if (w == 0.0) continue;
        const long shift = k - left;
        const long t0 = std::max(0L, -shift);
        const long t1 = std::min(n, n - shift);
        for (long t = t0; t < t1; ++t) out[t] += w * in[t + shift];
      }
    }
    if (layer.activation != Activation::Linear) {
      for (long t = 0; t < n; ++t) out[t] = activate(layer.activation, out[t]);
    }
  }
  return y;
}

Tensor run_layers(const std::vector<ConvLayer>& layers, Tensor x) {
  for (const auto& l : layers) x = conv(l, x);
  return x;
}

Tensor max_pool(const Tensor& x, int factor) {
  const std::size_t f = static_cast<std::size_t>(factor);
  Tensor y(x.channels, x.length / f);
  for (int c = 0; c < x.channels; ++c) {
    const double* in = x.row(c);
    double* out = y.row(c);
    for (std::size_t t = 0; t < y.length; ++t) out[t] = *std::max_element(in + t * f, in + (t + 1) * f);
  }
  return y;
}

Tensor upsample_concat(const Tensor& x, int factor, const Tensor& skip) {
  const std::size_t f = static_cast<std::size_t>(factor);
  Tensor y(x.channels + skip.channels, skip.length);
  for (int c = 0; c < x.channels; ++c) {
    const double* in = x.row(c);
    double* out = y.row(c);
    for (std::size_t t = 0; t < skip.length; ++t) out[t] = in[std::min(t / f, x.length - 1)];
  }
  std::copy(skip.data.begin(), skip.data.end(), y.data.begin() + static_cast<std::ptrdiff_t>(x.channels * skip.length));
  return y;
}

void check_layer(const ConvLayer& l, const std::string& where) {
  if (l.in <= 0 || l.out <= 0 || l.kernel <= 0) {
    throw Error(ErrorKind::ShapeMismatch, where + ": channel counts and kernel must be positive");
  }
  if (l.weight.size() != static_cast<std::size_t>(l.out) * l.in * l.kernel ||
      l.bias.size() != static_cast<std::size_t>(l.out)) {
    throw Error(ErrorKind::ShapeMismatch, where + ": tensor sizes do not match the declared shape");
  }
}

// Checks a layer chain starting from `channels`; returns the output width.
int check_chain(const std::vector<ConvLayer>& layers, int channels, const std::string& where) {
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const std::string name = where + " layer " + std::to_string(k);
    check_layer(layers[k], name);
    if (layers[k].in != channels) {
      throw Error(ErrorKind::ShapeMismatch, name + ": expects " + std::to_string(layers[k].in) +
                                                " input channels, receives " + std::to_string(channels));
    }
    channels = layers[k].out;
  }
  return channels;
}

template <typename Fn>
void for_each_layer(const UNetModel& m, Fn&& fn) {
  for (const auto& b : m.encoder) {
    for (const auto& l : b.layers) fn(l);
  }
  for (const auto& l : m.bottleneck) fn(l);
  for (const auto& b : m.decoder) {
    for (const auto& l : b.layers) fn(l);
  }
  fn(m.output);
}

template <typename Fn>
void for_each_layer_mut(UNetModel& m, Fn&& fn) {
  for (auto& b : m.encoder) {
    for (auto& l : b.layers) fn(l);
  }
  for (auto& l : m.bottleneck) fn(l);
  for (auto& b : m.decoder) {
    for (auto& l : b.layers) fn(l);
  }
  fn(m.output);
}

int get_int(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_number_integer()) {
    throw Error(ErrorKind::MalformedHeader, where + ": missing integer field '" + key + "'");
  }
  return j.at(key).get<int>();
}

ConvLayer layer_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::MalformedHeader, where + ": layer must be an object");
  ConvLayer l;
  l.in = get_int(j, "in", where);
  l.out = get_int(j, "out", where);
  l.kernel = get_int(j, "kernel", where);
  l.activation = parse_activation(j.value("activation", std::string("linear")));
  if (l.in <= 0 || l.out <= 0 || l.kernel <= 0) {
    throw Error(ErrorKind::ShapeMismatch, where + ": channel counts and kernel must be positive");
  }
  return l;
}

std::vector<ConvLayer> layers_from_json(const json& j, const std::string& where) {
  std::vector<ConvLayer> out;
  if (!j.is_array()) throw Error(ErrorKind::MalformedHeader, where + ": 'layers' must be an array");
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(layer_from_json(j[k], where + " layer " + std::to_string(k)));
  return out;
}

json layer_to_json(const ConvLayer& l) {
  return {{"in", l.in}, {"out", l.out}, {"kernel", l.kernel}, {"activation", activation_name(l.activation)}};
}

json layers_to_json(const std::vector<ConvLayer>& layers) {
  json arr = json::array();
  for (const auto& l : layers) arr.push_back(layer_to_json(l));
  return arr;
}

void append_floats(std::string& out, const std::vector<float>& v) {
  for (float f : v) {
    auto bits = std::bit_cast<std::uint32_t>(f);
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
  }
}

}  // namespace

Activation parse_activation(std::string_view name) {
  if (name == "linear" || name == "identity" || name == "none") return Activation::Linear;
  if (name == "relu") return Activation::Relu;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "tanh") return Activation::Tanh;
  throw Error(ErrorKind::UnknownActivation, "unknown activation '" + std::string(name) + "'");
}

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::Linear:
      return "linear";
    case Activation::Relu:
      return "relu";
    case Activation::Sigmoid:
      return "sigmoid";
    case Activation::Tanh:
      return "tanh";
  }
  return "linear";
}

std::size_t ConvLayer::parameter_count() const {
  return static_cast<std::size_t>(out) * static_cast<std::size_t>(in) * static_cast<std::size_t>(kernel) +
         static_cast<std::size_t>(out);
}

std::size_t UNetModel::parameter_count() const {
  std::size_t n = 0;
  for_each_layer(*this, [&](const ConvLayer& l) { n += l.parameter_count(); });
  return n;
}

std::size_t UNetModel::length_multiple() const {
  std::size_t m = 1;
  for (const auto& b : encoder) m *= static_cast<std::size_t>(b.pool);
  return m;
}

void UNetModel::validate() const {
  if (in_channels <= 0) throw Error(ErrorKind::ShapeMismatch, "in_channels must be positive");
  if (decoder.size() != encoder.size()) {
    throw Error(ErrorKind::ShapeMismatch, "decoder has " + std::to_string(decoder.size()) +
                                              " blocks, encoder has " + std::to_string(encoder.size()));
  }
  int channels = in_channels;
  std::vector<int> skip_channels;
  for (std::size_t b = 0; b < encoder.size(); ++b) {
    if (encoder[b].pool < 1) throw Error(ErrorKind::ShapeMismatch, "pool factor must be >= 1");
    channels = check_chain(encoder[b].layers, channels, "encoder block " + std::to_string(b));
    skip_channels.push_back(channels);
  }
  channels = check_chain(bottleneck, channels, "bottleneck");
  for (std::size_t j = 0; j < decoder.size(); ++j) {
    const std::size_t partner = encoder.size() - 1 - j;
    const std::string where = "decoder block " + std::to_string(j);
    if (decoder[j].upsample != encoder[partner].pool) {
      throw Error(ErrorKind::ShapeMismatch, where + ": upsample factor differs from the matching pool");
    }
    channels = check_chain(decoder[j].layers, channels + skip_channels[partner], where);
  }
  check_chain({output}, channels, "output");
  if (output.out != 2) throw Error(ErrorKind::ShapeMismatch, "output layer must have 2 channels");
}

UNetModel parse_weights(std::string_view bytes) {
  if (bytes.size() < 8) throw Error(ErrorKind::MalformedHeader, "weight file shorter than its length prefix");
  std::uint64_t header_len = 0;
  for (int b = 7; b >= 0; --b) header_len = (header_len << 8) | static_cast<unsigned char>(bytes[static_cast<std::size_t>(b)]);
  if (header_len > bytes.size() - 8) throw Error(ErrorKind::MalformedHeader, "header length exceeds file size");

  json h;
  try {
    h = json::parse(bytes.substr(8, header_len));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedHeader, std::string("weight header is not valid JSON: ") + e.what());
  }
  if (!h.is_object()) throw Error(ErrorKind::MalformedHeader, "weight header must be a JSON object");

  UNetModel m;
  try {
    m.in_channels = get_int(h, "in_channels", "header");
    for (std::size_t b = 0; b < h.value("encoder", json::array()).size(); ++b) {
      const auto& jb = h.at("encoder")[b];
      const std::string where = "encoder block " + std::to_string(b);
      m.encoder.push_back({layers_from_json(jb.at("layers"), where), get_int(jb, "pool", where)});
    }
    if (h.contains("bottleneck")) m.bottleneck = layers_from_json(h.at("bottleneck").at("layers"), "bottleneck");
    for (std::size_t b = 0; b < h.value("decoder", json::array()).size(); ++b) {
      const auto& jb = h.at("decoder")[b];
      const std::string where = "decoder block " + std::to_string(b);
      m.decoder.push_back({get_int(jb, "upsample", where), layers_from_json(jb.at("layers"), where)});
    }
    if (!h.contains("output")) throw Error(ErrorKind::MalformedHeader, "header lacks an output layer");
    m.output = layer_from_json(h.at("output"), "output");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::MalformedHeader, std::string("weight header: ") + e.what());
  }

  // Shapes are checked before any tensor is read.
  for_each_layer_mut(m, [](ConvLayer& l) {
    l.weight.assign(static_cast<std::size_t>(l.out) * l.in * l.kernel, 0.0f);
    l.bias.assign(static_cast<std::size_t>(l.out), 0.0f);
  });
  m.validate();
  if (h.contains("parameter_count") && h.at("parameter_count").get<std::size_t>() != m.parameter_count()) {
    throw Error(ErrorKind::ShapeMismatch, "declared parameter_count disagrees with the layer shapes");
  }

  const std::size_t need = m.parameter_count() * 4;
  const std::size_t have = bytes.size() - 8 - header_len;
  if (have < need) {
    throw Error(ErrorKind::TruncatedTensorData, "tensor payload has " + std::to_string(have / 4) +
                                                    " floats, header promises " + std::to_string(need / 4));
  }
  if (have > need) throw Error(ErrorKind::ShapeMismatch, "tensor payload is longer than the header declares");

  std::size_t pos = 8 + header_len;
  auto read_into = [&](std::vector<float>& v) {
    for (auto& f : v) {
      std::uint32_t bits = 0;
      for (int b = 3; b >= 0; --b) bits = (bits << 8) | static_cast<unsigned char>(bytes[pos + static_cast<std::size_t>(b)]);
      f = std::bit_cast<float>(bits);
      pos += 4;
    }
  };
  for_each_layer_mut(m, [&](ConvLayer& l) {
    read_into(l.weight);
    read_into(l.bias);
  });
  return m;
}

UNetModel load_weights(const std::filesystem::path& path) { return parse_weights(read_file(path)); }

std::string serialize_weights(const UNetModel& model) {
  model.validate();
  json h;
  h["format"] = "sleeptk-unet";
  h["version"] = 1;
  h["in_channels"] = model.in_channels;
  h["encoder"] = json::array();
  for (const auto& b : model.encoder) h["encoder"].push_back({{"pool", b.pool}, {"layers", layers_to_json(b.layers)}});
  h["bottleneck"] = {{"layers", layers_to_json(model.bottleneck)}};
  h["decoder"] = json::array();
  for (const auto& b : model.decoder) {
    h["decoder"].push_back({{"upsample", b.upsample}, {"layers", layers_to_json(b.layers)}});
  }
  h["output"] = layer_to_json(model.output);
  h["parameter_count"] = model.parameter_count();
  const std::string header = h.dump();

  std::string out;
  std::uint64_t len = header.size();
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((len >> (8 * b)) & 0xFFu));
  out += header;
  for_each_layer(model, [&](const ConvLayer& l) {
    append_floats(out, l.weight);
    append_floats(out, l.bias);
  });
  return out;
}

void save_weights(const UNetModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_weights(model));
}

SegmentationMask forward(const UNetModel& model, std::span<const double> x) {
  const std::size_t multiple = model.length_multiple();
  if (x.size() < multiple || x.empty()) {
    throw Error(ErrorKind::InputTooShort, "input of " + std::to_string(x.size()) +
                                              " samples is shorter than the pooling product " +
                                              std::to_string(multiple));
  }
  if (model.in_channels != 1) {
    throw Error(ErrorKind::ShapeMismatch, "single-channel input given to a " +
                                              std::to_string(model.in_channels) + "-channel model");
  }
  const std::size_t padded = (x.size() + multiple - 1) / multiple * multiple;
  Tensor t(1, padded);
  std::copy(x.begin(), x.end(), t.data.begin());

  std::vector<Tensor> skips;
  for (const auto& block : model.encoder) {
    t = run_layers(block.layers, std::move(t));
    skips.push_back(t);
    t = max_pool(t, block.pool);
  }
  t = run_layers(model.bottleneck, std::move(t));
  for (std::size_t j = 0; j < model.decoder.size(); ++j) {
    const auto& skip = skips[model.encoder.size() - 1 - j];
    t = run_layers(model.decoder[j].layers, upsample_concat(t, model.decoder[j].upsample, skip));
  }
  t = conv(model.output, t);

  SegmentationMask m;
  m.spindle.assign(t.row(0), t.row(0) + x.size());
  m.non_spindle.assign(t.row(1), t.row(1) + x.size());
  return m;
}

EventList masks_to_events(const SegmentationMask& mask, double fs_hz) {
  if (!(fs_hz > 0.0)) throw Error(ErrorKind::InvalidArgument, "masks_to_events: fs must be positive");
  if (mask.spindle.size() != mask.non_spindle.size()) {
    throw Error(ErrorKind::ShapeMismatch, "mask channels differ in length");
  }
  EventList out;
  const std::size_t n = mask.size();
  for (std::size_t i = 0; i < n;) {
    if (!(mask.spindle[i] > mask.non_spindle[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && mask.spindle[j] > mask.non_spindle[j]) ++j;
    out.push_back({static_cast<double>(i) / fs_hz, static_cast<double>(j - i) / fs_hz, {}});
    i = j;
  }
  return out;
}

}  // namespace sleeptk::unet
