#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sleeptk/record_io.hpp"

namespace sleeptk::unet {

enum class Activation { Linear, Relu, Sigmoid, Tanh };

// Throws UnknownActivation.
Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation a);

// 1D convolution with "same" padding (cross-correlation, zero padding of
// (kernel-1)/2 on the left). weight is out x in x kernel, row-major.
struct ConvLayer {
  int in{0};
  int out{0};
  int kernel{1};
  Activation activation{Activation::Linear};
  std::vector<float> weight;
  std::vector<float> bias;

  std::size_t parameter_count() const;
};

struct EncoderBlock {
  std::vector<ConvLayer> layers;
  int pool{2};  // max-pool factor applied after the layers
};

struct DecoderBlock {
  int upsample{2};  // nearest-neighbour factor; must equal the matching pool
  std::vector<ConvLayer> layers;  // input is [upsampled, skip] along channels
};

// Immutable after load; forward() may be called concurrently.
struct UNetModel {
  int in_channels{1};
  std::vector<EncoderBlock> encoder;
  std::vector<ConvLayer> bottleneck;
  std::vector<DecoderBlock> decoder;  // decoder[j] pairs with encoder[depth-1-j]
  ConvLayer output;                   // out == 2: (spindle, non-spindle)

  std::size_t depth() const { return encoder.size(); }
  std::size_t parameter_count() const;
  // Product of the pooling factors; inputs are padded to a multiple of it.
  std::size_t length_multiple() const;
  // Throws ShapeMismatch.
  void validate() const;
};

// Container: u64 little-endian header length, UTF-8 JSON header, then
// little-endian float32 tensors (each layer's weight then bias) in the order
// encoder blocks, bottleneck, decoder blocks, output.
// Throws FileNotFound, MalformedHeader, ShapeMismatch, UnknownActivation,
// TruncatedTensorData.
UNetModel load_weights(const std::filesystem::path& path);
UNetModel parse_weights(std::string_view bytes);
std::string serialize_weights(const UNetModel& model);
void save_weights(const UNetModel& model, const std::filesystem::path& path);

struct SegmentationMask {
  std::vector<double> spindle;
  std::vector<double> non_spindle;
  std::size_t size() const { return spindle.size(); }
};

// Throws InputTooShort when len(x) < length_multiple().
SegmentationMask forward(const UNetModel& model, std::span<const double> x);

// One event per maximal run where spindle > non_spindle (ties are
// non-spindle). Times are in seconds from the first mask sample.
EventList masks_to_events(const SegmentationMask& mask, double fs_hz);

}  // namespace sleeptk::unet
