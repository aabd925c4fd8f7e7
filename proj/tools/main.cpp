// sleeptk command-line interface.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cmath>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "sleeptk/characteristics.hpp"
#include "sleeptk/config.hpp"
#include "sleeptk/error.hpp"
#include "sleeptk/metrics.hpp"
#include "sleeptk/pipeline.hpp"
#include "sleeptk/spindles.hpp"
#include "sleeptk/staging.hpp"
#include "sleeptk/synth.hpp"
#include "sleeptk/unet_infer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace sleeptk;

namespace {

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Writes a report to `path` atomically, or to stdout when path is empty.
void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(path, text);
  }
}

std::unique_ptr<staging::ClassifierBackend> make_backend(const std::string& spec) {
  if (spec == "baseline") return staging::baseline_bandpower_backend();
  if (spec.rfind("probs:", 0) == 0) return staging::precomputed_backend(fs::path(spec.substr(6)));
  throw Error(ErrorKind::InvalidArgument, "backend must be baseline or probs:<csv>, got " + spec);
}

std::unique_ptr<spindles::Detector> make_detector(const std::string& spec, const Config& config) {
  if (spec == "baseline") return spindles::baseline_detector(config.baseline);
  if (spec.rfind("unet:", 0) == 0) {
    auto model = std::make_shared<const unet::UNetModel>(unet::load_weights(fs::path(spec.substr(5))));
    return spindles::unet_detector(std::move(model));
  }
  throw Error(ErrorKind::InvalidArgument, "detector must be baseline or unet:<weights>, got " + spec);
}

std::vector<std::string> resolve_channels(const std::string& list, const SignalRecord& rec) {
  if (list.empty()) {
    std::vector<std::string> all;
    for (const auto& c : rec.channels) all.push_back(c.label);
    return all;
  }
  return split_list(list);
}

metrics::AbsentStagePolicy parse_absent(const std::string& s) {
  if (s == "exclude") return metrics::AbsentStagePolicy::Exclude;
  if (s == "score_one") return metrics::AbsentStagePolicy::ScoreOne;
  if (s == "score_zero") return metrics::AbsentStagePolicy::ScoreZero;
  throw Error(ErrorKind::InvalidArgument, "--absent must be exclude, score_one or score_zero");
}

json summary_json(const stats::Summary& s) {
  return {{"n", s.n},           {"mean", number(s.mean)}, {"sd", number(s.sd)},
          {"q1", number(s.q1)}, {"median", number(s.median)}, {"q3", number(s.q3)}};
}

// Rater manifest: {"kind": "stages"|"events", "raters": {"A": {"item": "path", ...}, ...}}
// with paths relative to the manifest's directory.
std::pair<std::string, std::map<std::string, std::map<std::string, fs::path>>> read_rater_manifest(
    const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("rater manifest: ") + e.what());
  }
  const std::string kind = j.value("kind", "");
  if (kind != "stages" && kind != "events") {
    throw Error(ErrorKind::InvalidArgument, "rater manifest kind must be stages or events");
  }
  if (!j.contains("raters") || !j.at("raters").is_object()) {
    throw Error(ErrorKind::InvalidArgument, "rater manifest needs a raters object");
  }
  std::map<std::string, std::map<std::string, fs::path>> out;
  for (const auto& [rater, items] : j.at("raters").items()) {
    if (!items.is_object()) throw Error(ErrorKind::InvalidArgument, "rater " + rater + " must map items to files");
    for (const auto& [item, file] : items.items()) {
      if (!file.is_string()) throw Error(ErrorKind::InvalidArgument, "file for " + rater + "/" + item + " must be a string");
      out[rater][item] = path.parent_path() / file.get<std::string>();
    }
  }
  return {kind, out};
}

// subject,cohort CSV with an optional header.
characteristics::CohortMap read_cohort_map(const fs::path& path) {
  characteristics::CohortMap out;
  std::stringstream in(read_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw Error(ErrorKind::UnparsableRow, "cohort map line " + std::to_string(line_no) + ": expected subject,cohort");
    }
    const auto subject = line.substr(0, comma);
    const auto cohort = line.substr(comma + 1);
    if (line_no == 1 && subject == "subject") continue;
    out[subject] = characteristics::parse_cohort(cohort);
  }
  return out;
}

struct Common {
  std::string config_path;
  Config config;

  void load() {
    if (!config_path.empty()) config = read_config(config_path);
  }
};

int run_records(const std::vector<std::string>& edfs, const std::vector<std::string>& hyps,
                const std::string& backend_spec, const std::string& detector_spec, const std::string& channel_list,
                const fs::path& out, unsigned jobs, const Config& config) {
  if (!hyps.empty() && hyps.size() != edfs.size()) {
    throw Error(ErrorKind::InvalidArgument, "give one --hypnogram per record or none");
  }
  std::unique_ptr<staging::ClassifierBackend> backend;
  if (hyps.empty()) backend = make_backend(backend_spec);
  const auto detector = make_detector(detector_spec, config);

  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::optional<Error> first_error;
  auto worker = [&] {
    for (std::size_t i = next++; i < edfs.size(); i = next++) {
      try {
        const fs::path edf = edfs[i];
        const auto rec = parse_edf(edf);
        const auto channels = resolve_channels(channel_list, rec);
        pipeline::ManifestInfo info;
        info.channels = channels;
        info.detector = detector_spec;
        info.inputs.push_back({"record", edf});
        pipeline::RunResult result;
        if (hyps.empty()) {
          info.mode = "full";
          info.backend = backend_spec;
          if (backend_spec.rfind("probs:", 0) == 0) info.inputs.push_back({"probabilities", backend_spec.substr(6)});
          result = pipeline::run_full(rec, *backend, *detector, channels, config);
        } else {
          info.mode = "expert_stages";
          info.backend = "expert";
          info.inputs.push_back({"hypnogram", hyps[i]});
          result = pipeline::run_with_expert_stages(rec, read_hypnogram(hyps[i]), *detector, channels, config);
        }
        const fs::path dir = edfs.size() == 1 ? out : out / edf.stem();
        pipeline::write_artifacts(dir, info, config, result);
      } catch (const Error& e) {
        std::lock_guard lock(err_mutex);
        if (!first_error) first_error = Error(e.kind(), edfs[i] + ": " + e.what());
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(edfs.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first_error) throw *first_error;
  return 0;
}

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sleeptk: sleep staging, spindle detection and agreement analysis"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(pipeline::tool_version()));
  Common common;
  app.add_option("--config", common.config_path, "JSON config overriding the defaults")->check(CLI::ExistingFile);

  // stage
  auto* stage = app.add_subcommand("stage", "Score sleep stages of an EDF record");
  std::string stage_edf, stage_backend = "baseline", stage_out, stage_probs_out;
  stage->add_option("edf", stage_edf, "EDF record")->required()->check(CLI::ExistingFile);
  stage->add_option("--backend", stage_backend, "baseline | probs:<csv>")->capture_default_str();
  stage->add_option("-o,--output", stage_out, "hypnogram file")->required();
  stage->add_option("--probs-out", stage_probs_out, "also write per-epoch probabilities CSV");

  // detect
  auto* detect = app.add_subcommand("detect", "Detect spindles in N2 epochs of a scored record");
  std::string det_edf, det_hyp, det_detector = "baseline", det_channels, det_out;
  detect->add_option("edf", det_edf, "EDF record")->required()->check(CLI::ExistingFile);
  detect->add_option("--hypnogram", det_hyp, "hypnogram file")->required()->check(CLI::ExistingFile);
  detect->add_option("--detector", det_detector, "baseline | unet:<weights>")->capture_default_str();
  detect->add_option("--channels", det_channels, "comma-separated channel labels (default: all)");
  detect->add_option("-o,--output", det_out, "event CSV")->required();

  // run
  auto* run = app.add_subcommand("run", "Full pipeline: stage, detect, union, characterize");
  std::vector<std::string> run_edfs, run_hyps;
  std::string run_backend = "baseline", run_detector = "baseline", run_channels, run_out;
  unsigned run_jobs = 1;
  run->add_option("edf", run_edfs, "EDF record(s)")->required()->check(CLI::ExistingFile);
  run->add_option("--backend", run_backend, "baseline | probs:<csv>")->capture_default_str();
  run->add_option("--hypnogram", run_hyps, "expert hypnogram per record; skips staging")->check(CLI::ExistingFile);
  run->add_option("--detector", run_detector, "baseline | unet:<weights>")->capture_default_str();
  run->add_option("--channels", run_channels, "comma-separated channel labels (default: all)");
  run->add_option("-o,--output", run_out, "output directory (one subdirectory per record when several)")->required();
  run->add_option("--jobs", run_jobs, "records processed in parallel")->capture_default_str()->check(CLI::PositiveNumber);

  // agree-stages
  auto* ast = app.add_subcommand("agree-stages", "Macro F1 between two hypnograms");
  std::string ast_a, ast_b, ast_absent, ast_out;
  ast->add_option("a", ast_a, "hypnogram A")->required()->check(CLI::ExistingFile);
  ast->add_option("b", ast_b, "hypnogram B (reference)")->required()->check(CLI::ExistingFile);
  ast->add_option("--absent", ast_absent, "stages absent from both: exclude | score_one | score_zero");
  ast->add_option("-o,--output", ast_out, "write JSON here instead of stdout");

  // agree-events
  auto* aev = app.add_subcommand("agree-events", "IoU-F1 between two event lists");
  std::string aev_a, aev_b, aev_out;
  std::optional<double> aev_threshold;
  aev->add_option("a", aev_a, "event CSV A")->required()->check(CLI::ExistingFile);
  aev->add_option("b", aev_b, "event CSV B (reference)")->required()->check(CLI::ExistingFile);
  aev->add_option("--threshold", aev_threshold, "IoU threshold (default 0.2)");
  aev->add_option("-o,--output", aev_out, "write JSON here instead of stdout");

  // rater-dist
  auto* rd = app.add_subcommand("rater-dist", "Pairwise inter-rater agreement distribution");
  std::string rd_manifest, rd_out, rd_summary_out;
  std::optional<std::size_t> rd_min_joint;
  std::optional<double> rd_threshold;
  rd->add_option("manifest", rd_manifest, "JSON manifest of rater files")->required()->check(CLI::ExistingFile);
  rd->add_option("--min-joint", rd_min_joint, "minimum jointly annotated items per pair (default 5)");
  rd->add_option("--threshold", rd_threshold, "IoU threshold for event raters (default 0.2)");
  rd->add_option("-o,--output", rd_out, "distribution CSV")->required();
  rd->add_option("--summary", rd_summary_out, "write summary JSON here instead of stdout");

  // characterize
  auto* ch = app.add_subcommand("characterize", "Per-spindle duration, frequency and amplitude");
  std::string ch_edf, ch_events, ch_hyp, ch_channels, ch_out;
  ch->add_option("edf", ch_edf, "EDF record")->required()->check(CLI::ExistingFile);
  ch->add_option("events", ch_events, "event CSV")->required()->check(CLI::ExistingFile);
  ch->add_option("hypnogram", ch_hyp, "hypnogram file")->required()->check(CLI::ExistingFile);
  ch->add_option("--channels", ch_channels, "comma-separated channel labels (default: all)");
  ch->add_option("-o,--output", ch_out, "features CSV (default stdout)");

  // cohort
  auto* co = app.add_subcommand("cohort", "Cohort comparison table from per-subject feature files");
  std::string co_dir, co_map, co_speed = "fast", co_out;
  std::vector<std::string> co_wilcoxon;
  co->add_option("features_dir", co_dir, "directory of <subject>.csv feature files")->required()->check(CLI::ExistingDirectory);
  co->add_option("cohort_map", co_map, "CSV subject,cohort (HC or BP)")->required()->check(CLI::ExistingFile);
  co->add_option("--speed", co_speed, "fast | slow | all")->capture_default_str();
  co->add_option("--wilcoxon", co_wilcoxon, "cells tested with the rank-sum test, as Characteristic:Channel");
  co->add_option("-o,--output", co_out, "table CSV (default stdout)");

  // synth
  auto* sy = app.add_subcommand("synth", "Generate a synthetic record with ground truth");
  std::string sy_spec, sy_out;
  sy->add_option("spec", sy_spec, "JSON synthesis spec")->required()->check(CLI::ExistingFile);
  sy->add_option("-o,--output", sy_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("UsageError", e.what());
    return 2;
  }

  try {
    common.load();
    Config& config = common.config;

    if (*stage) {
      const auto rec = parse_edf(stage_edf);
      const auto backend = make_backend(stage_backend);
      const auto probs =
          staging::stage_probabilities(staging::preprocess_for_staging(rec, config.staging), *backend, config.staging);
      write_hypnogram(staging::hypnogram_from_probs(probs), stage_out);
      if (!stage_probs_out.empty()) write_file_atomic(stage_probs_out, staging::format_probabilities(probs));
    } else if (*detect) {
      const auto rec = parse_edf(det_edf);
      const auto channels = resolve_channels(det_channels, rec);
      const auto detector = make_detector(det_detector, config);
      const auto out = spindles::detect_record(rec, read_hypnogram(det_hyp), channels, *detector, config.detection);
      write_events(out.events, det_out);
    } else if (*run) {
      return run_records(run_edfs, run_hyps, run_backend, run_detector, run_channels, run_out, run_jobs, config);
    } else if (*ast) {
      const auto a = read_hypnogram(ast_a);
      const auto b = read_hypnogram(ast_b);
      const auto policy = ast_absent.empty() ? config.absent_stages : parse_absent(ast_absent);
      const auto conf = metrics::stage_confusion(a, b);
      json per_stage;
      for (std::size_t k = 0; k < kNumStages; ++k) {
        const auto& c = conf.per_stage[k];
        per_stage[std::string(stage_token(kAllStages[k]))] = {
            {"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"f1", number(metrics::stage_f1(c))}};
      }
      const json out = {{"macro_f1", number(metrics::macro_f1(a, b, policy))}, {"epochs", a.size()}, {"per_stage", per_stage}};
      emit(out.dump(2) + "\n", ast_out);
    } else if (*aev) {
      const double threshold = aev_threshold.value_or(config.iou_threshold);
      const std::vector<metrics::EventListPair> pairs = {{read_events(aev_a), read_events(aev_b)}};
      const auto rep = metrics::iou_f1_report(pairs, threshold);
      const json out = {{"iou_f1", number(rep.iou_f1)}, {"tp", rep.tp}, {"fp", rep.fp}, {"fn", rep.fn}, {"threshold", threshold}};
      emit(out.dump(2) + "\n", aev_out);
    } else if (*rd) {
      const auto [kind, files] = read_rater_manifest(rd_manifest);
      const std::size_t min_joint = rd_min_joint.value_or(config.min_joint_items);
      std::vector<metrics::PairScore> scores;
      if (kind == "stages") {
        metrics::RaterHypnograms raters;
        for (const auto& [r, items] : files) {
          for (const auto& [item, p] : items) raters[r][item] = read_hypnogram(p);
        }
        scores = metrics::pairwise_agreement_distribution(raters, min_joint, config.absent_stages);
      } else {
        metrics::RaterEvents raters;
        for (const auto& [r, items] : files) {
          for (const auto& [item, p] : items) raters[r][item] = read_events(p);
        }
        scores = metrics::pairwise_agreement_distribution(raters, min_joint, rd_threshold.value_or(config.iou_threshold));
      }
      write_file_atomic(rd_out, metrics::format_pair_scores(scores));
      std::vector<double> values;
      std::set<std::pair<std::string, std::string>> pairs;
      for (const auto& s : scores) {
        values.push_back(s.score);
        pairs.insert({s.rater_a, s.rater_b});
      }
      json out = {{"kind", kind}, {"pairs", pairs.size()}, {"scores", values.size()}, {"min_joint", min_joint}};
      out["summary"] = values.empty() ? json(nullptr) : summary_json(metrics::summarize_distribution(values));
      emit(out.dump(2) + "\n", rd_summary_out);
    } else if (*ch) {
      const auto rec = parse_edf(ch_edf);
      const auto channels = resolve_channels(ch_channels, rec);
      const auto events = read_events(ch_events);
      const auto hyp = read_hypnogram(ch_hyp);
      const auto set = characteristics::compute_features(rec, events, channels, config.features);
      const characteristics::SubjectFeatures subject{characteristics::n2_minutes(hyp), channels, set.features};
      emit(characteristics::format_features(subject), ch_out);
      if (set.skipped > 0) {
        std::cerr << json{{"warning", "TooFewCrossings"}, {"skipped", set.skipped}}.dump() << "\n";
      }
    } else if (*co) {
      const auto speed = characteristics::parse_speed(co_speed);
      const auto cohorts = read_cohort_map(co_map);
      characteristics::SubjectAggregates subjects;
      for (const auto& [subject, _] : cohorts) {
        const fs::path file = fs::path(co_dir) / (subject + ".csv");
        subjects[subject] = characteristics::aggregate_subject(characteristics::read_features(file), speed,
                                                               config.features.fast_threshold_hz);
      }
      characteristics::CellSet cells;
      for (const auto& c : co_wilcoxon) {
        const auto colon = c.find(':');
        if (colon == std::string::npos) throw Error(ErrorKind::InvalidArgument, "--wilcoxon expects Characteristic:Channel");
        cells.insert({c.substr(0, colon), c.substr(colon + 1)});
      }
      emit(characteristics::format_cohort_table(characteristics::cohort_table(subjects, cohorts, cells)), co_out);
    } else if (*sy) {
      synth::write_synth(synth::read_spec(sy_spec), sy_out);
    }
  } catch (const Error& e) {
    print_error(std::string(to_string(e.kind())), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("InternalError", e.what());
    return 1;
  }
  return 0;
}
