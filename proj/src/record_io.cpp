#include "sleeptk/record_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "sleeptk/error.hpp"
#include "text_util.hpp"

namespace sleeptk {

namespace {

constexpr std::size_t kFixedHeaderBytes = 256;
constexpr std::size_t kSignalHeaderBytes = 256;
constexpr std::string_view kEdfAnnotationsLabel = "EDF Annotations";
constexpr std::string_view kEventsHeader = "start_s,duration_s,channels";

// Per-signal header fields, in file order, with their widths.
struct SignalHeader {
  std::string label;
  double physical_min{0.0};
  double physical_max{0.0};
  int digital_min{0};
  int digital_max{0};
  int samples_per_record{0};
};

class HeaderCursor {
 public:
  explicit HeaderCursor(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t width) {
    if (pos_ + width > bytes_.size()) {
      throw Error(ErrorKind::MalformedHeader, "EDF header truncated");
    }
    auto field = bytes_.substr(pos_, width);
    pos_ += width;
    return field;
  }

  std::size_t position() const { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_{0};
};

long long header_int(std::string_view field, std::string_view what) {
  auto v = text::parse_int(text::trim(field));
  if (!v) {
    throw Error(ErrorKind::MalformedHeader,
                "EDF header field '" + std::string(what) + "' is not an integer: '" +
                    std::string(text::trim(field)) + "'");
  }
  return *v;
}

double header_double(std::string_view field, std::string_view what) {
  auto v = text::parse_double(text::trim(field));
  if (!v) {
    throw Error(ErrorKind::MalformedHeader,
                "EDF header field '" + std::string(what) + "' is not a number: '" +
                    std::string(text::trim(field)) + "'");
  }
  return *v;
}

std::string fixed_field(std::string_view value, std::size_t width) {
  if (value.size() > width) {
    throw Error(ErrorKind::InvalidArgument,
                "EDF field '" + std::string(value) + "' exceeds " + std::to_string(width) +
                    " characters");
  }
  std::string out(value);
  out.resize(width, ' ');
  return out;
}

// Smallest value >= peak whose negative fits the 8-character EDF field.
std::string physical_extent_field(double peak) {
  for (int decimals = 4; decimals >= 0; --decimals) {
    const double scale = std::pow(10.0, decimals);
    const double rounded = std::ceil(peak * scale) / scale;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, rounded);
    if (std::strlen(buf) + 1 <= 8) return buf;
  }
  throw Error(ErrorKind::InvalidArgument, "channel amplitude too large for an EDF header");
}

}  // namespace

const Channel* SignalRecord::find(std::string_view label) const {
  for (const auto& ch : channels) {
    if (ch.label == label) return &ch;
  }
  return nullptr;
}

const Channel& SignalRecord::channel(std::string_view label) const {
  if (const auto* ch = find(label)) return *ch;
  throw Error(ErrorKind::ChannelNotFound, "channel '" + std::string(label) + "' not in record");
}

void SignalRecord::validate_and_update() {
  std::set<std::string> seen;
  double duration = 0.0;
  for (const auto& ch : channels) {
    if (!(ch.fs > 0.0)) {
      throw Error(ErrorKind::InvalidArgument, "channel '" + ch.label + "' has fs <= 0");
    }
    if (ch.samples.empty()) {
      throw Error(ErrorKind::InvalidArgument, "channel '" + ch.label + "' has no samples");
    }
    if (!seen.insert(ch.label).second) {
      throw Error(ErrorKind::InvalidArgument, "duplicate channel label '" + ch.label + "'");
    }
    duration = std::max(duration, ch.duration_s());
  }
  duration_s = duration;
}

SignalRecord SignalRecord::scaled(double factor) const {
  SignalRecord out = *this;
  for (auto& ch : out.channels) {
    for (auto& v : ch.samples) v *= factor;
  }
  return out;
}

std::string_view stage_token(Stage s) {
  switch (s) {
    case Stage::Wake:
      return "W";
    case Stage::N1:
      return "N1";
    case Stage::N2:
      return "N2";
    case Stage::N3:
      return "N3";
    case Stage::REM:
      return "REM";
  }
  return "?";
}

Stage parse_stage_token(std::string_view token) {
  const std::string t = text::to_upper(text::trim(token));
  if (t == "W") return Stage::Wake;
  if (t == "N1") return Stage::N1;
  if (t == "N2") return Stage::N2;
  if (t == "N3") return Stage::N3;
  if (t == "REM") return Stage::REM;
  throw Error(ErrorKind::UnknownStageToken, "unknown stage token '" + std::string(token) + "'");
}

void sort_events(EventList& events) {
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.start_s < b.start_s; });
}

std::vector<std::string> merge_labels(const std::vector<std::string>& a,
                                      const std::vector<std::string>& b) {
  std::vector<std::string> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

double EdfCalibration::to_physical(int digital) const {
  return (static_cast<double>(digital) - digital_min) * (physical_max - physical_min) /
             (static_cast<double>(digital_max) - digital_min) +
         physical_min;
}

int EdfCalibration::to_digital(double physical) const {
  const double d = (physical - physical_min) * (static_cast<double>(digital_max) - digital_min) /
                       (physical_max - physical_min) +
                   digital_min;
  const double r = std::round(d);
  return static_cast<int>(std::clamp(r, static_cast<double>(digital_min),
                                     static_cast<double>(digital_max)));
}

SignalRecord parse_edf(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < kFixedHeaderBytes) {
    throw Error(ErrorKind::MalformedHeader, "file shorter than the 256-byte EDF header");
  }
  if (static_cast<unsigned char>(bytes[0]) == 0xFF) {
    throw Error(ErrorKind::UnsupportedEncoding, "BDF (24-bit) files are not supported");
  }

  HeaderCursor cur(bytes);
  const auto version = text::trim(cur.take(8));
  if (version != "0") {
    throw Error(ErrorKind::MalformedHeader, "EDF version field must be '0'");
  }
  cur.take(80);  // patient
  cur.take(80);  // recording
  const auto start_date = text::trim(cur.take(8));
  const auto start_clock = text::trim(cur.take(8));
  const long long header_bytes = header_int(cur.take(8), "header bytes");
  const auto reserved = text::trim(cur.take(44));
  long long n_records = header_int(cur.take(8), "number of data records");
  const double record_duration = header_double(cur.take(8), "data record duration");
  const long long ns = header_int(cur.take(4), "number of signals");

  if (reserved.starts_with("EDF+D")) {
    throw Error(ErrorKind::UnsupportedEncoding, "discontinuous EDF+ files are not supported");
  }
  if (reserved.find("24BIT") != std::string_view::npos ||
      reserved.find("BDF") != std::string_view::npos) {
    throw Error(ErrorKind::UnsupportedEncoding, "only 16-bit EDF samples are supported");
  }
  if (ns < 1) throw Error(ErrorKind::MalformedHeader, "EDF declares no signals");
  if (header_bytes != static_cast<long long>(kFixedHeaderBytes + kSignalHeaderBytes * ns)) {
    throw Error(ErrorKind::MalformedHeader, "EDF header byte count does not match signal count");
  }
  if (!(record_duration > 0.0)) {
    throw Error(ErrorKind::MalformedHeader, "EDF data record duration must be positive");
  }
  if (bytes.size() < static_cast<std::size_t>(header_bytes)) {
    throw Error(ErrorKind::MalformedHeader, "EDF signal headers truncated");
  }

  const auto n = static_cast<std::size_t>(ns);
  std::vector<SignalHeader> sig(n);
  for (auto& s : sig) s.label = std::string(text::trim(cur.take(16)));
  for (std::size_t i = 0; i < n; ++i) cur.take(80);  // transducer
  for (std::size_t i = 0; i < n; ++i) cur.take(8);   // physical dimension
  for (auto& s : sig) s.physical_min = header_double(cur.take(8), "physical minimum");
  for (auto& s : sig) s.physical_max = header_double(cur.take(8), "physical maximum");
  for (auto& s : sig) s.digital_min = static_cast<int>(header_int(cur.take(8), "digital minimum"));
  for (auto& s : sig) s.digital_max = static_cast<int>(header_int(cur.take(8), "digital maximum"));
  for (std::size_t i = 0; i < n; ++i) cur.take(80);  // prefiltering
  for (auto& s : sig) {
    s.samples_per_record = static_cast<int>(header_int(cur.take(8), "samples per record"));
  }
  for (std::size_t i = 0; i < n; ++i) cur.take(32);  // reserved

  std::size_t record_bytes = 0;
  for (const auto& s : sig) {
    if (s.samples_per_record < 1) {
      throw Error(ErrorKind::MalformedHeader, "signal '" + s.label + "' has no samples per record");
    }
    if (s.label == kEdfAnnotationsLabel) {
      record_bytes += 2 * static_cast<std::size_t>(s.samples_per_record);
      continue;
    }
    if (s.digital_max <= s.digital_min || s.digital_min < -32768 || s.digital_max > 32767) {
      throw Error(ErrorKind::MalformedHeader, "signal '" + s.label + "' has an invalid digital range");
    }
    if (s.physical_max == s.physical_min) {
      throw Error(ErrorKind::MalformedHeader, "signal '" + s.label + "' has an empty physical range");
    }
    record_bytes += 2 * static_cast<std::size_t>(s.samples_per_record);
  }

  const std::size_t data_bytes = bytes.size() - static_cast<std::size_t>(header_bytes);
  if (n_records == -1) {
    if (data_bytes % record_bytes != 0) {
      throw Error(ErrorKind::InconsistentRecord, "data section is not a whole number of records");
    }
    n_records = static_cast<long long>(data_bytes / record_bytes);
  }
  if (n_records < 0 || data_bytes != static_cast<std::size_t>(n_records) * record_bytes) {
    throw Error(ErrorKind::InconsistentRecord,
                "header declares " + std::to_string(n_records) + " data records but the file holds " +
                    std::to_string(data_bytes / record_bytes));
  }
  if (n_records == 0) throw Error(ErrorKind::InconsistentRecord, "EDF holds no data records");

  SignalRecord rec;
  if (!start_date.empty()) {
    rec.start_time = std::string(start_date) + " " + std::string(start_clock);
  }
  std::vector<std::size_t> channel_of(n, static_cast<std::size_t>(-1));
  std::vector<EdfCalibration> cal(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (sig[i].label == kEdfAnnotationsLabel) continue;
    channel_of[i] = rec.channels.size();
    Channel ch;
    ch.label = sig[i].label;
    ch.fs = sig[i].samples_per_record / record_duration;
    ch.samples.reserve(static_cast<std::size_t>(n_records) * sig[i].samples_per_record);
    rec.channels.push_back(std::move(ch));
    cal[i] = EdfCalibration{sig[i].physical_min, sig[i].physical_max, sig[i].digital_min,
                            sig[i].digital_max};
  }

  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data()) + header_bytes;
  for (long long r = 0; r < n_records; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto spr = static_cast<std::size_t>(sig[i].samples_per_record);
      if (channel_of[i] == static_cast<std::size_t>(-1)) {
        data += 2 * spr;
        continue;
      }
      auto& out = rec.channels[channel_of[i]].samples;
      for (std::size_t k = 0; k < spr; ++k, data += 2) {
        const auto raw = static_cast<std::int16_t>(static_cast<std::uint16_t>(data[0]) |
                                                   (static_cast<std::uint16_t>(data[1]) << 8));
        out.push_back(cal[i].to_physical(raw));
      }
    }
  }
  if (rec.channels.empty()) {
    throw Error(ErrorKind::MalformedHeader, "EDF holds only annotation signals");
  }
  rec.validate_and_update();
  return rec;
}

void write_edf(const SignalRecord& rec, const std::filesystem::path& path,
               const EdfWriteOptions& options) {
  if (rec.channels.empty()) throw Error(ErrorKind::InvalidArgument, "record has no channels");
  const std::size_t ns = rec.channels.size();
  std::vector<std::size_t> spr(ns);
  std::size_t n_records = 0;
  for (std::size_t i = 0; i < ns; ++i) {
    const auto& ch = rec.channels[i];
    const double exact = ch.fs * options.record_duration_s;
    const double rounded = std::round(exact);
    if (rounded < 1.0 || std::abs(exact - rounded) > 1e-6) {
      throw Error(ErrorKind::InvalidArgument,
                  "channel '" + ch.label + "' has a non-integral number of samples per record");
    }
    spr[i] = static_cast<std::size_t>(rounded);
    n_records = std::max(n_records, (ch.samples.size() + spr[i] - 1) / spr[i]);
  }

  std::vector<EdfCalibration> cal(ns);
  std::vector<std::string> pmin(ns), pmax(ns);
  for (std::size_t i = 0; i < ns; ++i) {
    double peak = 0.0;
    for (double v : rec.channels[i].samples) peak = std::max(peak, std::abs(v));
    if (peak == 0.0) peak = 1.0;
    pmax[i] = physical_extent_field(peak);
    pmin[i] = "-" + pmax[i];
    const double extent = *text::parse_double(pmax[i]);
    cal[i] = EdfCalibration{-extent, extent, -32768, 32767};
  }

  std::string out;
  out.reserve(kFixedHeaderBytes * (ns + 1) + n_records * 2 * ns * spr[0]);
  out += fixed_field("0", 8);
  out += fixed_field(options.patient, 80);
  out += fixed_field(options.recording, 80);
  out += fixed_field(options.start_date, 8);
  out += fixed_field(options.start_time, 8);
  out += fixed_field(std::to_string(kFixedHeaderBytes * (ns + 1)), 8);
  out += fixed_field("", 44);
  out += fixed_field(std::to_string(n_records), 8);
  out += fixed_field(format_double(options.record_duration_s), 8);
  out += fixed_field(std::to_string(ns), 4);
  for (const auto& ch : rec.channels) out += fixed_field(ch.label, 16);
  for (std::size_t i = 0; i < ns; ++i) out += fixed_field("", 80);
  for (std::size_t i = 0; i < ns; ++i) out += fixed_field("uV", 8);
  for (std::size_t i = 0; i < ns; ++i) out += fixed_field(pmin[i], 8);
  for (std::size_t i = 0; i < ns; ++i) out += fixed_field(pmax[i], 8);
  for (std::size_t i = 0; i < ns; ++i) out += fixed_field("-32768", 8);
  for (std::size_t i = 0; i < ns; ++i) out += fixed_field("32767", 8);
  for (std::size_t i = 0; i < ns; ++i) out += fixed_field("", 80);
  for (std::size_t i = 0; i < ns; ++i) out += fixed_field(std::to_string(spr[i]), 8);
  for (std::size_t i = 0; i < ns; ++i) out += fixed_field("", 32);

  for (std::size_t r = 0; r < n_records; ++r) {
    for (std::size_t i = 0; i < ns; ++i) {
      const auto& samples = rec.channels[i].samples;
      for (std::size_t k = 0; k < spr[i]; ++k) {
        const std::size_t idx = r * spr[i] + k;
        const double v = idx < samples.size() ? samples[idx] : 0.0;
        const auto d = static_cast<std::uint16_t>(static_cast<std::int16_t>(cal[i].to_digital(v)));
        out.push_back(static_cast<char>(d & 0xFF));
        out.push_back(static_cast<char>(d >> 8));
      }
    }
  }
  write_file_atomic(path, out);
}

Hypnogram parse_hypnogram(std::string_view content) {
  Hypnogram h;
  for (auto line : text::split_lines(content)) {
    line = text::trim(line);
    if (line.empty()) continue;
    h.stages.push_back(parse_stage_token(line));
  }
  if (h.stages.empty()) throw Error(ErrorKind::EmptyHypnogram, "hypnogram holds no epochs");
  return h;
}

Hypnogram read_hypnogram(const std::filesystem::path& path) {
  return parse_hypnogram(read_file(path));
}

std::string format_hypnogram(const Hypnogram& h) {
  std::string out;
  out.reserve(h.stages.size() * 3);
  for (Stage s : h.stages) {
    out += stage_token(s);
    out += '\n';
  }
  return out;
}

void write_hypnogram(const Hypnogram& h, const std::filesystem::path& path) {
  if (h.stages.empty()) throw Error(ErrorKind::EmptyHypnogram, "hypnogram holds no epochs");
  write_file_atomic(path, format_hypnogram(h));
}

EventList parse_events(std::string_view content) {
  EventList events;
  std::size_t line_no = 0;
  bool first = true;
  for (auto line : text::split_lines(content)) {
    ++line_no;
    line = text::trim(line);
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line == kEventsHeader) continue;
    }
    const auto fields = text::split(line, ',');
    const auto where = " (line " + std::to_string(line_no) + ")";
    if (fields.size() != 3) {
      throw Error(ErrorKind::UnparsableRow, "expected 3 fields" + where);
    }
    const auto start = text::parse_double(text::trim(fields[0]));
    const auto duration = text::parse_double(text::trim(fields[1]));
    if (!start || !duration || !std::isfinite(*start) || !std::isfinite(*duration)) {
      throw Error(ErrorKind::UnparsableRow, "non-numeric start or duration" + where);
    }
    if (*duration <= 0.0) {
      throw Error(ErrorKind::NegativeDuration, "non-positive event duration" + where);
    }
    Event e{*start, *duration, {}};
    const auto labels = text::trim(fields[2]);
    if (!labels.empty()) {
      for (auto l : text::split(labels, '|')) {
        l = text::trim(l);
        if (!l.empty()) e.channels.emplace_back(l);
      }
    }
    std::sort(e.channels.begin(), e.channels.end());
    e.channels.erase(std::unique(e.channels.begin(), e.channels.end()), e.channels.end());
    events.push_back(std::move(e));
  }
  sort_events(events);
  return events;
}

EventList read_events(const std::filesystem::path& path) { return parse_events(read_file(path)); }

std::string format_events(const EventList& events) {
  std::string out(kEventsHeader);
  out += '\n';
  for (const auto& e : events) {
    out += format_double(e.start_s);
    out += ',';
    out += format_double(e.duration_s);
    out += ',';
    for (std::size_t i = 0; i < e.channels.size(); ++i) {
      if (i) out += '|';
      out += e.channels[i];
    }
    out += '\n';
  }
  return out;
}

void write_events(const EventList& events, const std::filesystem::path& path) {
  write_file_atomic(path, format_events(events));
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::FileNotFound, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorKind::IoError, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot rename onto '" + path.string() + "': " + ec.message());
}

}  // namespace sleeptk
