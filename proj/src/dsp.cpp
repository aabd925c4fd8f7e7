#include "sleeptk/dsp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "sleeptk/error.hpp"

namespace sleeptk::dsp {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;

double warp(double f_hz, double fs_hz) { return 2.0 * fs_hz * std::tan(kPi * f_hz / fs_hz); }

cplx bilinear(cplx s, double fs_hz) { return (2.0 * fs_hz + s) / (2.0 * fs_hz - s); }

// Left-half-plane analog Butterworth prototype poles with non-negative
// imaginary part; the real pole (odd order) is last.
std::vector<cplx> prototype_upper_poles(int order) {
  std::vector<cplx> poles;
  for (int k = 0; k < order / 2; ++k) {
    const double theta = kPi * (2.0 * k + order + 1) / (2.0 * order);
    cplx p = std::polar(1.0, theta);
    if (p.imag() < 0.0) p = std::conj(p);
    poles.push_back(p);
  }
  if (order % 2 == 1) poles.emplace_back(-1.0, 0.0);
  return poles;
}

Section conjugate_pair_section(cplx z, double b0, double b1, double b2) {
  return Section{b0, b1, b2, -2.0 * z.real(), std::norm(z)};
}

void normalize_at(Section& s, cplx z_inv) {
  const double g = std::abs(s.response(z_inv));
  s.b0 /= g;
  s.b1 /= g;
  s.b2 /= g;
}

// Initial DF2T state for a unit step at each section's steady state.
std::vector<std::array<double, 2>> step_initial_state(const std::vector<Section>& sections) {
  std::vector<std::array<double, 2>> zi(sections.size());
  double level = 1.0;
  for (std::size_t i = 0; i < sections.size(); ++i) {
    const auto& s = sections[i];
    const double gain = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    zi[i][1] = (s.b2 - s.a2 * gain) * level;
    zi[i][0] = (s.b1 + s.b2 - (s.a1 + s.a2) * gain) * level;
    level *= gain;
  }
  return zi;
}

void run_cascade(const std::vector<Section>& sections, std::vector<double>& x,
                 const std::vector<std::array<double, 2>>* zi, double zi_scale) {
  for (std::size_t k = 0; k < sections.size(); ++k) {
    const auto& s = sections[k];
    double s1 = zi ? (*zi)[k][0] * zi_scale : 0.0;
    double s2 = zi ? (*zi)[k][1] * zi_scale : 0.0;
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + s1;
      s1 = s.b1 * in - s.a1 * out + s2;
      s2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

double bessel_i0(double x) {
  double sum = 1.0;
  double term = 1.0;
  const double half = x / 2.0;
  for (int k = 1; k < 500; ++k) {
    term *= (half / k) * (half / k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

// Kaiser parameter for ~80 dB stopband attenuation.
constexpr double kKaiserBeta = 7.857;
// Filter half-length, in zero crossings of the widest sinc.
constexpr long kHalfZeroCrossings = 32;
// Cutoff as a fraction of the tighter Nyquist frequency.
constexpr double kCutoffFraction = 0.9;

std::vector<double> resample_kernel(long up, long down) {
  const long r = std::max(up, down);
  const long half = kHalfZeroCrossings * r;
  const long taps = 2 * half + 1;
  const double fc = kCutoffFraction * 0.5 / static_cast<double>(r);  // cycles per upsampled sample
  std::vector<double> h(static_cast<std::size_t>(taps));
  const double denom = bessel_i0(kKaiserBeta);
  for (long k = 0; k < taps; ++k) {
    const double t = static_cast<double>(k - half);
    const double arg = 2.0 * fc * t;
    const double sinc = t == 0.0 ? 1.0 : std::sin(kPi * arg) / (kPi * arg);
    const double ratio = static_cast<double>(k - half) / static_cast<double>(half);
    const double window = bessel_i0(kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - ratio * ratio))) / denom;
    h[static_cast<std::size_t>(k)] = 2.0 * fc * sinc * window;
  }
  // Each polyphase branch sees 1/up of the taps; unit DC gain overall.
  const double sum = std::accumulate(h.begin(), h.end(), 0.0);
  for (double& v : h) v *= static_cast<double>(up) / sum;
  return h;
}

void check_non_empty(std::span<const double> x, const char* what) {
  if (x.empty()) throw Error(ErrorKind::EmptyInput, std::string(what) + ": empty input");
}

}  // namespace

cplx Section::response(cplx z_inv) const {
  return (b0 + z_inv * (b1 + z_inv * b2)) / (1.0 + z_inv * (a1 + z_inv * a2));
}

std::pair<cplx, cplx> Section::poles() const {
  const cplx disc = std::sqrt(cplx(a1 * a1 - 4.0 * a2, 0.0));
  return {(-a1 + disc) / 2.0, (-a1 - disc) / 2.0};
}

cplx FilterSpec::response(double f_hz) const {
  const cplx z_inv = std::polar(1.0, -2.0 * kPi * f_hz / fs_hz);
  cplx h(1.0, 0.0);
  for (const auto& s : sections) h *= s.response(z_inv);
  return h;
}

double FilterSpec::magnitude_db(double f_hz) const { return 20.0 * std::log10(std::abs(response(f_hz))); }

bool FilterSpec::stable() const {
  return std::all_of(sections.begin(), sections.end(), [](const Section& s) {
    auto [p1, p2] = s.poles();
    return std::abs(p1) < 1.0 && std::abs(p2) < 1.0;
  });
}

FilterSpec design_butterworth(FilterKind kind, int order, std::span<const double> cutoffs_hz,
                              double fs_hz) {
  if (order < 1) throw Error(ErrorKind::InvalidOrder, "filter order must be >= 1");
  if (!(fs_hz > 0.0)) throw Error(ErrorKind::InvalidArgument, "sampling rate must be positive");
  const std::size_t expected = kind == FilterKind::Bandpass ? 2 : 1;
  if (cutoffs_hz.size() != expected) {
    throw Error(ErrorKind::InvalidArgument,
                "expected " + std::to_string(expected) + " cutoff frequencies");
  }
  for (double c : cutoffs_hz) {
    if (!(c > 0.0) || !(c < fs_hz / 2.0)) {
      throw Error(ErrorKind::CutoffOutOfRange,
                  "cutoff " + std::to_string(c) + " Hz outside (0, " + std::to_string(fs_hz / 2.0) + ") Hz");
    }
  }

  FilterSpec spec;
  spec.kind = kind;
  spec.order = order;
  spec.cutoffs_hz.assign(cutoffs_hz.begin(), cutoffs_hz.end());
  spec.fs_hz = fs_hz;
  const auto proto = prototype_upper_poles(order);

  if (kind == FilterKind::Lowpass || kind == FilterKind::Highpass) {
    const bool low = kind == FilterKind::Lowpass;
    const double w = warp(cutoffs_hz[0], fs_hz);
    const cplx norm_point = low ? cplx(1.0, 0.0) : cplx(-1.0, 0.0);
    const double sign = low ? 1.0 : -1.0;
    for (const cplx& p : proto) {
      const cplx s = low ? w * p : w / p;
      const cplx z = bilinear(s, fs_hz);
      Section sec;
      if (p.imag() > 0.0) {
        sec = conjugate_pair_section(z, 1.0, 2.0 * sign, 1.0);
      } else {
        sec = Section{1.0, sign, 0.0, -z.real(), 0.0};
      }
      normalize_at(sec, norm_point);
      spec.sections.push_back(sec);
    }
    return spec;
  }

  if (!(cutoffs_hz[0] < cutoffs_hz[1])) {
    throw Error(ErrorKind::CutoffOutOfRange, "bandpass low cutoff must be below high cutoff");
  }
  const double w1 = warp(cutoffs_hz[0], fs_hz);
  const double w2 = warp(cutoffs_hz[1], fs_hz);
  const double w0 = std::sqrt(w1 * w2);
  const double bw = w2 - w1;
  const double f0 = fs_hz / kPi * std::atan(w0 / (2.0 * fs_hz));
  const cplx z0_inv = std::polar(1.0, -2.0 * kPi * f0 / fs_hz);
  for (const cplx& p : proto) {
    const cplx disc = std::sqrt(p * p * bw * bw - 4.0 * w0 * w0);
    const cplx s1 = (p * bw + disc) / 2.0;
    const cplx s2 = (p * bw - disc) / 2.0;
    if (p.imag() > 0.0) {
      for (const cplx& s : {s1, s2}) {
        Section sec = conjugate_pair_section(bilinear(s, fs_hz), 1.0, 0.0, -1.0);
        normalize_at(sec, z0_inv);
        spec.sections.push_back(sec);
      }
    } else {
      // Real prototype pole: the two bandpass poles are either a conjugate
      // pair or both real.
      const cplx z1 = bilinear(s1, fs_hz);
      const cplx z2 = bilinear(s2, fs_hz);
      Section sec{1.0, 0.0, -1.0, -(z1 + z2).real(), (z1 * z2).real()};
      normalize_at(sec, z0_inv);
      spec.sections.push_back(sec);
    }
  }
  return spec;
}

FilterSpec design_lowpass(int order, double cutoff_hz, double fs_hz) {
  const double c[] = {cutoff_hz};
  return design_butterworth(FilterKind::Lowpass, order, c, fs_hz);
}

FilterSpec design_highpass(int order, double cutoff_hz, double fs_hz) {
  const double c[] = {cutoff_hz};
  return design_butterworth(FilterKind::Highpass, order, c, fs_hz);
}

FilterSpec design_bandpass(int order, double low_hz, double high_hz, double fs_hz) {
  const double c[] = {low_hz, high_hz};
  return design_butterworth(FilterKind::Bandpass, order, c, fs_hz);
}

std::vector<double> apply_filter(const FilterSpec& spec, std::span<const double> x, FilterMode mode) {
  check_non_empty(x, "apply_filter");
  if (mode == FilterMode::Forward) {
    std::vector<double> y(x.begin(), x.end());
    run_cascade(spec.sections, y, nullptr, 0.0);
    return y;
  }

  const std::size_t n = x.size();
  const std::size_t pad = std::min<std::size_t>(3 * (2 * spec.sections.size() + 1), n - 1);
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const auto zi = step_initial_state(spec.sections);
  run_cascade(spec.sections, ext, &zi, ext.front());
  std::reverse(ext.begin(), ext.end());
  run_cascade(spec.sections, ext, &zi, ext.front());
  std::reverse(ext.begin(), ext.end());
  return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                             ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

ResampleRatio rational_ratio(double fs_in, double fs_out, long max_term) {
  if (!(fs_in > 0.0) || !(fs_out > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "sampling rates must be positive");
  }
  const double ratio = fs_out / fs_in;
  for (long q = 1; q <= max_term; ++q) {
    const double pq = ratio * static_cast<double>(q);
    const double p = std::round(pq);
    if (p < 1.0 || p > static_cast<double>(max_term)) continue;
    if (std::abs(p - pq) <= 1e-9 * std::max(1.0, pq)) {
      const long up = static_cast<long>(p);
      const long g = std::gcd(up, q);
      return {up / g, q / g};
    }
  }
  throw Error(ErrorKind::IrrationalRatio,
              "no integer ratio with terms <= " + std::to_string(max_term) + " for " +
                  std::to_string(fs_in) + " -> " + std::to_string(fs_out) + " Hz");
}

std::vector<double> resample(std::span<const double> x, double fs_in, double fs_out) {
  const auto [up, down] = rational_ratio(fs_in, fs_out);
  if (up == down) return std::vector<double>(x.begin(), x.end());
  const auto n = static_cast<long>(x.size());
  const long out_len = (n * up + down / 2) / down;
  const auto h = resample_kernel(up, down);
  const auto taps = static_cast<long>(h.size());
  const long delay = (taps - 1) / 2;

  std::vector<double> y(static_cast<std::size_t>(out_len), 0.0);
  for (long m = 0; m < out_len; ++m) {
    const long j = m * down + delay;
    long i_hi = std::min(j / up, n - 1);
    long i_lo = j - taps + 1 <= 0 ? 0 : (j - taps + 1 + up - 1) / up;
    double acc = 0.0;
    for (long i = i_lo; i <= i_hi; ++i) {
      acc += x[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(j - i * up)];
    }
    y[static_cast<std::size_t>(m)] = acc;
  }
  return y;
}

namespace {

// Quantiles of `work`, which is reordered in the process.
double quantile_of(std::vector<double>& work, double q) {
  const double pos = q * static_cast<double>(work.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  std::nth_element(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(lo), work.end());
  const double v_lo = work[lo];
  if (frac == 0.0 || lo + 1 >= work.size()) return v_lo;
  const double v_hi = *std::min_element(work.begin() + static_cast<std::ptrdiff_t>(lo + 1), work.end());
  return v_lo + frac * (v_hi - v_lo);
}

}  // namespace

double quantile(std::span<const double> x, double q) {
  check_non_empty(x, "quantile");
  if (!(q >= 0.0 && q <= 1.0)) throw Error(ErrorKind::InvalidArgument, "quantile outside [0, 1]");
  std::vector<double> work(x.begin(), x.end());
  return quantile_of(work, q);
}

double median(std::span<const double> x) { return quantile(x, 0.5); }

std::vector<double> robust_normalize(std::span<const double> x) {
  if (x.size() < 4) {
    throw Error(ErrorKind::InvalidArgument, "robust normalization needs at least 4 samples");
  }
  std::vector<double> work(x.begin(), x.end());
  const double med = quantile_of(work, 0.5);
  const double q1 = quantile_of(work, 0.25);
  const double q3 = quantile_of(work, 0.75);
  const double iqr = q3 - q1;
  if (!(iqr > 0.0)) throw Error(ErrorKind::DegenerateSignal, "interquartile range is zero");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - med) / iqr;
  return out;
}

ClipBounds::ClipBounds(double lo, double hi) : lo_(lo), hi_(hi) {
  if (!(lo < hi)) throw Error(ErrorKind::InvalidBounds, "clip bounds require lo < hi");
}

std::vector<double> clip(std::span<const double> x, ClipBounds bounds) {
  std::vector<double> out(x.begin(), x.end());
  clip_in_place(out, bounds);
  return out;
}

void clip_in_place(std::span<double> x, ClipBounds bounds) {
  for (double& v : x) v = std::clamp(v, bounds.lo(), bounds.hi());
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft(std::vector<cplx>& data, bool inverse) {
  const std::size_t n = data.size();
  if (n == 0 || (n & (n - 1)) != 0) {
    throw Error(ErrorKind::InvalidArgument, "FFT size must be a power of two");
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const cplx step = std::polar(1.0, angle);
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cplx u = data[i + k];
        const cplx v = data[i + k + len / 2] * w;
        data[i + k] = u + v;
        data[i + k + len / 2] = u - v;
        w *= step;
      }
    }
  }
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& v : data) v *= scale;
  }
}

namespace {

// Natural cubic spline through unit-spaced samples.
class UnitSpline {
 public:
  explicit UnitSpline(std::span<const double> y) : y_(y), m_(y.size(), 0.0) {
    const std::size_t n = y.size();
    if (n < 3) return;
    // Thomas algorithm on m[i-1] + 4 m[i] + m[i+1] = 6 (y[i+1] - 2 y[i] + y[i-1]).
    std::vector<double> c(n, 0.0), d(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double rhs = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]);
      const double denom = 4.0 - c[i - 1];
      c[i] = 1.0 / denom;
      d[i] = (rhs - d[i - 1]) / denom;
    }
    for (std::size_t i = n - 2; i >= 1; --i) m_[i] = d[i] - c[i] * m_[i + 1];
  }

  double operator()(double pos) const {
    const std::size_t n = y_.size();
    if (n == 1) return y_[0];
    const auto i = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0, static_cast<double>(n - 2)));
    const double t = pos - static_cast<double>(i);
    const double u = 1.0 - t;
    return u * y_[i] + t * y_[i + 1] + ((u * u * u - u) * m_[i] + (t * t * t - t) * m_[i + 1]) / 6.0;
  }

 private:
  std::span<const double> y_;
  std::vector<double> m_;
};

// Sub-sample position of the local extremum closest to one end of x
// (parabolic refinement), or the end sample itself if x is monotone there.
double boundary_extremum(std::span<const double> x, bool from_left) {
  const std::size_t n = x.size();
  if (n < 3) return from_left ? 0.0 : static_cast<double>(n - 1);
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const std::size_t p = from_left ? k : n - 1 - k;
    if ((x[p] - x[p - 1]) * (x[p + 1] - x[p]) <= 0.0) {
      const double curvature = x[p - 1] - 2.0 * x[p] + x[p + 1];
      const double offset = curvature != 0.0 ? 0.5 * (x[p - 1] - x[p + 1]) / curvature : 0.0;
      return static_cast<double>(p) + std::clamp(offset, -0.5, 0.5);
    }
  }
  return from_left ? 0.0 : static_cast<double>(n - 1);
}

}  // namespace

std::vector<cplx> analytic_signal(std::span<const double> x) {
  check_non_empty(x, "analytic_signal");
  const std::size_t n = x.size();
  // At least n/2 padded samples on each side.
  const std::size_t total = next_pow2(2 * n);
  const std::size_t left = (total - n) / 2;

  // Mirror about the outermost local extrema rather than the end samples: a
  // narrowband signal is locally even around its peaks, so the padding
  // continues the oscillation without a slope discontinuity at the join.
  double lo = boundary_extremum(x, true);
  double hi = boundary_extremum(x, false);
  if (hi - lo < 1.0) {
    lo = 0.0;
    hi = static_cast<double>(n - 1);
  }
  const UnitSpline spline(x);
  auto padded = [&](double pos) {
    if (n == 1) return x[0];
    const double period = 2.0 * (hi - lo);
    double rel = std::fmod(pos - lo, period);
    if (rel < 0.0) rel += period;
    if (rel > hi - lo) rel = period - rel;
    return spline(lo + rel);
  };

  std::vector<cplx> buf(total);
  for (std::size_t i = 0; i < total; ++i) {
    if (i >= left && i < left + n) {
      buf[i] = x[i - left];
    } else {
      buf[i] = padded(static_cast<double>(i) - static_cast<double>(left));
    }
  }
  fft(buf);
  for (std::size_t k = 1; k < total / 2; ++k) buf[k] *= 2.0;
  for (std::size_t k = total / 2 + 1; k < total; ++k) buf[k] = 0.0;
  fft(buf, true);
  return std::vector<cplx>(buf.begin() + static_cast<std::ptrdiff_t>(left),
                           buf.begin() + static_cast<std::ptrdiff_t>(left + n));
}

std::vector<double> analytic_envelope(std::span<const double> x) {
  const auto a = analytic_signal(x);
  std::vector<double> env(a.size());
  std::transform(a.begin(), a.end(), env.begin(), [](const cplx& c) { return std::abs(c); });
  return env;
}

}  // namespace sleeptk::dsp
