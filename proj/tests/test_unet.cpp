#include <doctest.h>

#include <bit>
#include <cstdint>
#include <json.hpp>
#include <random>

#include "sleeptk/error.hpp"
#include "sleeptk/unet_infer.hpp"
#include "test_util.hpp"

using namespace sleeptk;
using namespace sleeptk::unet;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an sleeptk::Error");
  return ErrorKind::InvalidArgument;
}

ConvLayer layer(int in, int out, int kernel, Activation act, std::mt19937_64* rng = nullptr) {
  ConvLayer l{in, out, kernel, act, std::vector<float>(static_cast<std::size_t>(in * out * kernel), 0.0f),
              std::vector<float>(static_cast<std::size_t>(out), 0.0f)};
  if (rng) {
    std::normal_distribution<float> g(0.0f, 0.4f);
    for (auto& w : l.weight) w = g(*rng);
    for (auto& b : l.bias) b = g(*rng);
  }
  return l;
}

// Depth-2 U-Net with 1 -> 16 -> 32 channels and kernel 3.
UNetModel fixture_model(std::mt19937_64* rng) {
  UNetModel m;
  m.in_channels = 1;
  m.encoder.push_back({{layer(1, 16, 3, Activation::Relu, rng)}, 2});
  m.encoder.push_back({{layer(16, 32, 3, Activation::Relu, rng)}, 2});
  m.bottleneck = {layer(32, 32, 3, Activation::Relu, rng)};
  m.decoder.push_back({2, {layer(64, 16, 3, Activation::Relu, rng)}});
  m.decoder.push_back({2, {layer(32, 16, 3, Activation::Relu, rng)}});
  m.output = layer(16, 2, 1, Activation::Linear, rng);
  return m;
}

// Writes the container by hand from a JSON header and a flat float payload.
std::string container(const nlohmann::json& header, std::size_t n_floats, float value = 0.25f) {
  const std::string h = header.dump();
  std::string out;
  const std::uint64_t len = h.size();
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((len >> (8 * b)) & 0xFF));
  out += h;
  const auto bits = std::bit_cast<std::uint32_t>(value);
  for (std::size_t i = 0; i < n_floats; ++i) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
  }
  return out;
}

nlohmann::json conv_json(int in, int out, int kernel, const char* act = "relu") {
  return {{"in", in}, {"out", out}, {"kernel", kernel}, {"activation", act}};
}

}  // namespace

TEST_SUITE("unet") {

TEST_CASE("fixture model round-trips and reports its parameter count") {
  std::mt19937_64 rng(1);
  const auto m = fixture_model(&rng);
  // out*in*k + out per layer, summed by hand.
  const std::size_t expected = (16 * 1 * 3 + 16) + (32 * 16 * 3 + 32) + (32 * 32 * 3 + 32) +
                               (16 * 64 * 3 + 16) + (16 * 32 * 3 + 16) + (2 * 16 * 1 + 2);
  CHECK(expected == 9410);
  CHECK(m.parameter_count() == expected);

  testutil::TempDir dir;
  save_weights(m, dir / "m.bin");
  const auto back = load_weights(dir / "m.bin");
  CHECK(back.parameter_count() == expected);
  CHECK(back.depth() == 2);
  CHECK(back.encoder[1].layers[0].weight == m.encoder[1].layers[0].weight);
  CHECK(back.output.bias == m.output.bias);
  const auto x = testutil::white_noise(301, 2);
  CHECK(forward(back, x).spindle == forward(m, x).spindle);
}

TEST_CASE("hand-written container parses") {
  nlohmann::json h = {{"in_channels", 1},
                      {"encoder", nlohmann::json::array()},
                      {"decoder", nlohmann::json::array()},
                      {"output", conv_json(1, 2, 49, "linear")}};
  CHECK(parse_weights(container(h, 100)).parameter_count() == 100);
  CHECK(parse_weights(container(h, 100)).output.weight[7] == 0.25f);
  // 100 floats promised, 80 present.
  CHECK(kind_of([&] { parse_weights(container(h, 80)); }) == ErrorKind::TruncatedTensorData);
  CHECK(kind_of([&] { parse_weights(container(h, 101)); }) == ErrorKind::ShapeMismatch);

  h["output"]["activation"] = "swish";
  CHECK(kind_of([&] { parse_weights(container(h, 100)); }) == ErrorKind::UnknownActivation);

  CHECK(kind_of([] { parse_weights(std::string("\x05\0\0\0\0\0\0\0{oops", 13)); }) ==
        ErrorKind::MalformedHeader);
}

TEST_CASE("skip-connection mismatch is rejected at load") {
  const nlohmann::json h = {
      {"in_channels", 1},
      {"encoder", {{{"pool", 2}, {"layers", {conv_json(1, 8, 3)}}}}},
      {"bottleneck", {{"layers", {conv_json(8, 8, 3)}}}},
      // 8 upsampled + 8 skip = 16 channels arrive, 12 declared.
      {"decoder", {{{"upsample", 2}, {"layers", {conv_json(12, 8, 3)}}}}},
      {"output", conv_json(8, 2, 1, "linear")}};
  CHECK(kind_of([&] { parse_weights(container(h, 10000)); }) == ErrorKind::ShapeMismatch);

  auto unbalanced = h;
  unbalanced["decoder"] = nlohmann::json::array();
  CHECK(kind_of([&] { parse_weights(container(unbalanced, 10000)); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("forward on zero and hand-computable models") {
  const auto zero = fixture_model(nullptr);
  const auto m = forward(zero, std::vector<double>(64, 0.0));
  for (std::size_t i = 0; i < 64; ++i) {
    CHECK(m.spindle[i] == 0.0);
    CHECK(m.non_spindle[i] == 0.0);
  }
  CHECK(masks_to_events(forward(zero, testutil::white_noise(100, 1)), 100.0).empty());

  UNetModel affine;
  affine.output = layer(1, 2, 1, Activation::Linear);
  affine.output.weight = {2.0f, -1.0f};
  affine.output.bias = {0.5f, 3.0f};
  const auto a = forward(affine, std::vector<double>{1, 2, 3, 4});
  CHECK(a.spindle == std::vector<double>{2.5, 4.5, 6.5, 8.5});
  CHECK(a.non_spindle == std::vector<double>{2, 1, 0, -1});

  // Kernel 3 same padding: y[t] = x[t-1] + 10 x[t] + 100 x[t+1].
  UNetModel k3;
  k3.output = layer(1, 2, 3, Activation::Linear);
  k3.output.weight = {1.0f, 10.0f, 100.0f, 0.0f, 0.0f, 0.0f};
  CHECK(forward(k3, std::vector<double>{1, 2, 3}).spindle == std::vector<double>{210, 321, 32});
}

TEST_CASE("forward is deterministic, length preserving and translation consistent") {
  std::mt19937_64 rng(7);
  const auto m = fixture_model(&rng);
  const auto x = testutil::white_noise(258, 3);
  const auto m1 = forward(m, x), m2 = forward(m, x);
  CHECK(m1.spindle == m2.spindle);
  CHECK(m1.size() == 258);

  std::vector<double> shifted(4, 0.0);
  shifted.insert(shifted.end(), x.begin(), x.end() - 4);
  const auto ms = forward(m, shifted);
  for (std::size_t t = 40; t < 200; ++t) {
    CHECK(ms.spindle[t + 4] == doctest::Approx(m1.spindle[t]).epsilon(1e-12));
    CHECK(ms.non_spindle[t + 4] == doctest::Approx(m1.non_spindle[t]).epsilon(1e-12));
  }

  CHECK(kind_of([&] { forward(m, std::vector<double>{1.0, 2.0, 3.0}); }) == ErrorKind::InputTooShort);
}

TEST_CASE("masks_to_events") {
  SegmentationMask mask{std::vector<double>(400, 0.0), std::vector<double>(400, 1.0)};
  for (std::size_t i = 100; i < 180; ++i) mask.spindle[i] = 2.0;
  auto ev = masks_to_events(mask, 100.0);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].start_s == doctest::Approx(1.0));
  CHECK(ev[0].duration_s == doctest::Approx(0.8));

  mask.spindle[140] = 1.0;  // a tie splits the run
  ev = masks_to_events(mask, 100.0);
  REQUIRE(ev.size() == 2);
  CHECK(ev[1].start_s * 100.0 == doctest::Approx(141.0));

  SegmentationMask all{std::vector<double>(50, 1.0), std::vector<double>(50, 0.0)};
  ev = masks_to_events(all, 25.0);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].start_s == 0.0);
  CHECK(ev[0].duration_s == 2.0);

  SegmentationMask none{std::vector<double>(50, 0.0), std::vector<double>(50, 0.0)};
  CHECK(masks_to_events(none, 25.0).empty());
}

}  // TEST_SUITE
