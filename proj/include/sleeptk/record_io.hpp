#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sleeptk {

// One sampled channel in physical units (microvolts for EEG).
struct Channel {
  std::string label;
  std::vector<double> samples;
  double fs{0.0};

  double duration_s() const { return fs > 0.0 ? samples.size() / fs : 0.0; }
};

struct SignalRecord {
  std::vector<Channel> channels;
  std::optional<std::string> start_time;  // "dd.mm.yy hh.mm.ss" as stored in EDF
  double duration_s{0.0};

  // Returns nullptr when no channel carries the label.
  const Channel* find(std::string_view label) const;
  // Throws ChannelNotFound.
  const Channel& channel(std::string_view label) const;

  // Recomputes duration_s from the channels and checks the record invariants
  // (fs > 0, non-empty channels, unique labels). Throws InvalidArgument.
  void validate_and_update();

  // Copy with every sample multiplied by `factor`.
  SignalRecord scaled(double factor) const;
};

enum class Stage : std::uint8_t { Wake = 0, N1 = 1, N2 = 2, N3 = 3, REM = 4 };

inline constexpr std::size_t kNumStages = 5;
inline constexpr std::array<Stage, kNumStages> kAllStages = {
    Stage::Wake, Stage::N1, Stage::N2, Stage::N3, Stage::REM};

std::string_view stage_token(Stage s);
// Case-insensitive; accepts W, N1, N2, N3, REM. Throws UnknownStageToken.
Stage parse_stage_token(std::string_view token);

struct Hypnogram {
  static constexpr double kEpochLenS = 30.0;
  std::vector<Stage> stages;

  std::size_t size() const { return stages.size(); }
  bool operator==(const Hypnogram&) const = default;
};

struct Event {
  double start_s{0.0};
  double duration_s{0.0};
  std::vector<std::string> channels;  // sorted, unique

  double end_s() const { return start_s + duration_s; }
  bool operator==(const Event&) const = default;
};

using EventList = std::vector<Event>;

// Stable sort by start time.
void sort_events(EventList& events);
// Sorted union of two label sets.
std::vector<std::string> merge_labels(const std::vector<std::string>& a,
                                      const std::vector<std::string>& b);

// EDF / EDF+ reader. 16-bit samples only; "EDF Annotations" signals are
// skipped. Physical value = (digital - dmin) * (pmax - pmin) / (dmax - dmin) + pmin.
SignalRecord parse_edf(const std::filesystem::path& path);

// Minimal EDF writer used by the synthetic generator and test fixtures.
// Every channel must have an integral number of samples per
// `record_duration_s`; the last data record is zero-padded. Physical range
// per channel is symmetric around zero and covers the channel's peak value.
struct EdfWriteOptions {
  double record_duration_s{1.0};
  std::string patient{"X X X X"};
  std::string recording{"Startdate X X X X"};
  std::string start_date{"01.01.00"};
  std::string start_time{"00.00.00"};
};
void write_edf(const SignalRecord& rec, const std::filesystem::path& path,
               const EdfWriteOptions& options = {});

// Linear digital<->physical map used by both EDF directions.
struct EdfCalibration {
  double physical_min{-1.0};
  double physical_max{1.0};
  int digital_min{-32768};
  int digital_max{32767};

  double to_physical(int digital) const;
  // Nearest representable digital value, saturated to the digital range.
  int to_digital(double physical) const;
};

// Hypnogram text: one token per line.
Hypnogram read_hypnogram(const std::filesystem::path& path);
Hypnogram parse_hypnogram(std::string_view text);
void write_hypnogram(const Hypnogram& h, const std::filesystem::path& path);
std::string format_hypnogram(const Hypnogram& h);

// Event CSV: header start_s,duration_s,channels (pipe-separated labels).
EventList read_events(const std::filesystem::path& path);
EventList parse_events(std::string_view text);
void write_events(const EventList& events, const std::filesystem::path& path);
std::string format_events(const EventList& events);

// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

// Writes `content` to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace sleeptk
