#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace sleeptk::dsp {

enum class FilterKind { Lowpass, Highpass, Bandpass };
enum class FilterMode { Forward, ZeroPhase };

// One biquad: H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2).
struct Section {
  double b0{1.0}, b1{0.0}, b2{0.0};
  double a1{0.0}, a2{0.0};

  std::complex<double> response(std::complex<double> z_inv) const;
  // Roots of z^2 + a1 z + a2 (a first-order section yields one root at 0).
  std::pair<std::complex<double>, std::complex<double>> poles() const;
};

// Immutable once designed; safe to share between threads.
struct FilterSpec {
  FilterKind kind{FilterKind::Lowpass};
  int order{0};
  std::vector<double> cutoffs_hz;
  double fs_hz{0.0};
  std::vector<Section> sections;

  std::complex<double> response(double f_hz) const;
  double magnitude_db(double f_hz) const;
  bool stable() const;
};

// Digital Butterworth as cascaded second-order sections (bilinear transform
// with pre-warped cutoffs). Bandpass of order N has N sections.
// Throws CutoffOutOfRange, InvalidOrder.
FilterSpec design_butterworth(FilterKind kind, int order, std::span<const double> cutoffs_hz,
                              double fs_hz);
FilterSpec design_lowpass(int order, double cutoff_hz, double fs_hz);
FilterSpec design_highpass(int order, double cutoff_hz, double fs_hz);
FilterSpec design_bandpass(int order, double low_hz, double high_hz, double fs_hz);

// ZeroPhase runs the cascade forward then backward over an odd-extended
// signal with steady-state initial conditions, so the output has zero group
// delay and the squared magnitude response. Throws EmptyInput.
std::vector<double> apply_filter(const FilterSpec& spec, std::span<const double> x,
                                 FilterMode mode = FilterMode::ZeroPhase);

// Reduced integer ratio up/down with up/down == fs_out/fs_in.
struct ResampleRatio {
  long up{1};
  long down{1};
};
// Throws IrrationalRatio when no ratio with both terms <= max_term exists.
ResampleRatio rational_ratio(double fs_in, double fs_out, long max_term = 10000);

// Polyphase Kaiser-windowed sinc resampler. Output length is
// round(len(x) * fs_out / fs_in); fs_in == fs_out returns x unchanged.
std::vector<double> resample(std::span<const double> x, double fs_in, double fs_out);

// Quantile with linear interpolation between order statistics
// (position q*(n-1)). Throws EmptyInput.
double quantile(std::span<const double> x, double q);
double median(std::span<const double> x);

// (x - median) / IQR. Throws DegenerateSignal when IQR is zero and
// InvalidArgument for fewer than four samples.
std::vector<double> robust_normalize(std::span<const double> x);

class ClipBounds {
 public:
  // Throws InvalidBounds unless lo < hi.
  ClipBounds(double lo = -20.0, double hi = 20.0);
  double lo() const { return lo_; }
  double hi() const { return hi_; }

 private:
  double lo_;
  double hi_;
};

std::vector<double> clip(std::span<const double> x, ClipBounds bounds = {});
void clip_in_place(std::span<double> x, ClipBounds bounds = {});

// In-place radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& data, bool inverse = false);
std::size_t next_pow2(std::size_t n);

// Analytic signal x + i*H(x), built in the frequency domain after reflective
// padding to the next power of two. Throws EmptyInput.
std::vector<std::complex<double>> analytic_signal(std::span<const double> x);
// |analytic_signal(x)|
std::vector<double> analytic_envelope(std::span<const double> x);

}  // namespace sleeptk::dsp
