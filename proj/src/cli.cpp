// Copyright 2026 The stylevc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "stylevc/cli.hpp"

#include <filesystem>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "stylevc/checkpoint.hpp"
#include "stylevc/config.hpp"
#include "stylevc/evaluation.hpp"
#include "stylevc/inference.hpp"
#include "stylevc/wav.hpp"

namespace stylevc {

namespace fs = std::filesystem;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo:
    case ErrorKind::kIntegrity:
      return kExitIo;
    case ErrorKind::kNumeric:
      return kExitNumeric;
    case ErrorKind::kConfig:
    case ErrorKind::kInput:
    case ErrorKind::kData:
    case ErrorKind::kParse:
    default:
      return kExitConfig;
  }
}

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
  std::optional<std::size_t> steps;
  bool force = false;
  std::string vocoder = "griffinlim";
  std::string paper_literal;
  // subcommand specific
  std::string source, target, manifest, pairs;
  std::size_t speakers = 4, utts = 8;
  double duration = 1.0;
  int iters = 32;
  bool no_dtw = false;
  bool corrupt_kl = false;
  bool all_entries = false;
};

VocoderMode parse_vocoder(const std::string& v) {
  return v == "external" ? VocoderMode::kExternal : VocoderMode::kGriffinLim;
}

std::unique_ptr<Model> load_model(const std::string& checkpoint, RunConfig* cfg_out = nullptr) {
  if (checkpoint.empty()) throw ConfigError("--checkpoint is required");
  TrainState s = load_checkpoint(checkpoint);
  if (cfg_out) *cfg_out = s.config;
  return std::move(s.model);
}

int cmd_synth_data(const Options& o, std::ostream& out) {
  SynthConfig sc;
  if (!o.config.empty()) {
    const RunConfig rc = load_config(o.config);
    sc.n_speakers = rc.data.synth_speakers;
    sc.n_utts = rc.data.synth_utts;
    sc.duration_s = rc.data.synth_duration_s;
    sc.sample_rate = rc.feature.sample_rate;
  } else {
    sc.n_speakers = o.speakers;
    sc.n_utts = o.utts;
    sc.duration_s = o.duration;
  }
  Rng rng(o.seed.value_or(0));
  const fs::path dir = o.out.empty() ? fs::path("synth_corpus") : fs::path(o.out);
  const Manifest m = make_synthetic_corpus(sc, rng, dir, o.force);
  out << "wrote " << m.entries.size() << " utterances from " << m.speakers.size() << " speakers\n";
  out << (dir / "manifest.tsv").string() << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  if (o.config.empty()) throw ConfigError("--config is required");
  RunConfig cfg = load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.steps) cfg.train.steps = *o.steps;
  apply_paper_literal(cfg, o.paper_literal);
  if (cfg.data.manifest.empty()) throw ConfigError("data.manifest is not set");
  const Manifest full = load_manifest(cfg.data.manifest);
  Manifest train_m = full;
  if (cfg.data.holdout_per_speaker > 0) train_m = split_holdout(full, cfg.data.holdout_per_speaker).first;
  cfg.model.n_speakers = full.speakers.size();
  cfg.validate();

  const fs::path dir = o.out.empty() ? fs::path(cfg.out_dir) : fs::path(o.out);
  const fs::path ckpt = dir / "checkpoint.ckpt";
  if (o.checkpoint.empty() && fs::exists(ckpt) && !o.force)
    throw IoError(ckpt.string() + " already exists (use --force or --checkpoint to resume)");
  fs::create_directories(dir);
  if (o.checkpoint.empty() && o.force) fs::remove(dir / "metrics.csv");

  TrainState state;
  if (!o.checkpoint.empty()) {
    state = load_checkpoint(o.checkpoint);
    if (o.steps) state.config.train.steps = *o.steps;
    if (!(state.config.feature == cfg.feature))
      throw ConfigError("checkpoint feature configuration differs from " + o.config);
  } else {
    state = TrainState::create(cfg);
  }
  {
    std::ofstream snap(dir / "config.toml");
    snap << format_config(state.config);
  }
  const FeatureBank bank = FeatureBank::build(train_m, state.config.feature);
  const TripletSampler sampler(bank, state.config.train.segment_frames);
  TrainHooks hooks;
  hooks.log = &out;
  hooks.metrics_csv = dir / "metrics.csv";
  hooks.checkpoint_path = ckpt;
  LossBreakdown last;
  hooks.on_step = [&](std::size_t, const StepResult& r) { last = r.losses; };
  const std::size_t start = state.step;
  train(state, sampler, state.config.train.steps, hooks);
  out << "trained steps " << start << ".." << state.step << " total " << last.total << " checkpoint "
      << ckpt.string() << '\n';
  return kExitOk;
}

int cmd_convert(const Options& o, std::ostream& out) {
  RunConfig cfg;
  const auto model = load_model(o.checkpoint, &cfg);
  ConversionRequest req;
  req.source_audio = o.source;
  req.target_audio = o.target;
  req.output = o.out.empty() ? fs::path("converted.wav") : fs::path(o.out);
  req.vocoder = parse_vocoder(o.vocoder);
  req.griffin_lim_iters = o.iters;
  const ConversionResult r = convert_file(*model, cfg.feature, req);
  out << "sidecar " << r.sidecar.string() << '\n';
  if (r.wav.empty())
    out << "external vocoder mode: no waveform written; synthesize from the sidecar mel\n";
  else
    out << "wav " << r.wav.string() << '\n';
  return kExitOk;
}

int cmd_batch_convert(const Options& o, std::ostream& out) {
  RunConfig cfg;
  const auto model = load_model(o.checkpoint, &cfg);
  if (o.manifest.empty() || o.target.empty()) throw ConfigError("--manifest and --target are required");
  Manifest m = load_manifest(o.manifest);
  const fs::path dir = o.out.empty() ? fs::path("converted") : fs::path(o.out);
  const BatchReport r = batch_convert(*model, cfg.feature, m, o.target, dir, parse_vocoder(o.vocoder), o.iters);
  out << "converted " << r.rows.size() - r.failures() << " of " << r.rows.size() << "; report "
      << (dir / "report.csv").string() << '\n';
  return r.failures() == 0 ? kExitOk : kExitIo;
}

int cmd_eval(const Options& o, std::ostream& out) {
  RunConfig cfg;
  const auto model = load_model(o.checkpoint, &cfg);
  if (o.pairs.empty()) throw ConfigError("--pairs is required");
  const auto pairs = load_eval_pairs(o.pairs);
  std::vector<MetricRow> rows(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const EvalPair& p = pairs[i];
    const MelSpectrogram src = extract_logmel(read_wav(p.source), cfg.feature);
    const MelSpectrogram tgt = extract_logmel(read_wav(p.target), cfg.feature);
    const Matrix gen = p.generated.empty() ? convert_mel(*model, src.values, tgt.values)
                                           : read_sidecar(p.generated).values;
    rows[i] = {p.source_id, p.target_id, mcd(tgt.values, gen, !o.no_dtw),
               vss_surrogate(*model, gen, {tgt.values})};
  }
  const MetricReport report = summarize(rows);
  const fs::path path = o.out.empty() ? fs::path("report.csv") : fs::path(o.out);
  write_report(report, path);
  out << "pairs " << report.rows.size() << " mcd_db " << report.mcd.mean << " +/- " << report.mcd.half_width
      << " vss_cosine " << report.vss.mean << " +/- " << report.vss.half_width << " report " << path.string()
      << '\n';
  return kExitOk;
}

int cmd_export(const Options& o, std::ostream& out) {
  RunConfig cfg;
  const auto model = load_model(o.checkpoint, &cfg);
  if (o.manifest.empty()) throw ConfigError("--manifest is required");
  Manifest m = load_manifest(o.manifest);
  const FeatureBank bank = FeatureBank::build(m, cfg.feature);
  const fs::path path = o.out.empty() ? fs::path("embeddings.csv") : fs::path(o.out);
  const std::size_t n = export_embeddings(*model, bank, m, path);
  out << "exported " << n << " embeddings to " << path.string() << '\n';
  return kExitOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  RunConfig cfg;
  if (!o.config.empty()) cfg = load_config(o.config);
  apply_paper_literal(cfg, o.paper_literal);
  LossConfig loss = cfg.loss;
  loss.corrupt_kl_gradient = o.corrupt_kl;
  GradCheckSetup setup = make_gradcheck_setup(o.seed.value_or(cfg.seed), loss, cfg.model.paper_literal_attention);
  GradCheckOptions opt;
  if (o.all_entries) opt.top_entries = opt.random_entries = 0;
  const GradCheckReport r = gradient_check(*setup.model, setup.batch, setup.loss, setup.lambda2, opt);
  out << std::left << std::setw(24) << "group" << std::setw(14) << "max_rel_err" << std::setw(9) << "checked"
      << "skipped\n";
  for (const auto& g : r.groups)
    out << std::setw(24) << g.name << std::setw(14) << std::setprecision(3) << std::scientific << g.max_rel_error
        << std::defaultfloat << std::setw(9) << g.checked << g.skipped << '\n';
  out << (r.passed() ? "PASS" : "FAIL") << " tolerance " << r.tolerance << " loss " << std::setprecision(10)
      << r.loss << '\n';
  return r.passed() ? kExitOk : kExitCheckFailed;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"stylevc: voice conversion with stylized transformer blocks"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::string> vocoders = {"griffinlim", "external"};

  auto add_config = [&](CLI::App* c) { c->add_option("--config", o.config, "run configuration file"); };
  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "random seed"); };
  auto add_literal = [&](CLI::App* c) {
    c->add_option("--paper-literal", o.paper_literal, "comma list of paper-literal variants: kl,triplet,attention");
  };

  auto* synth = app.add_subcommand("synth-data", "generate the synthetic multi-speaker corpus");
  add_config(synth);
  add_seed(synth);
  synth->add_option("--out", o.out, "output directory");
  synth->add_option("--speakers", o.speakers, "number of speakers");
  synth->add_option("--utts", o.utts, "utterances per speaker");
  synth->add_option("--duration", o.duration, "seconds per utterance");
  synth->add_flag("--force", o.force, "write into a non-empty directory");

  auto* train_c = app.add_subcommand("train", "train a model");
  add_config(train_c);
  add_seed(train_c);
  add_literal(train_c);
  train_c->add_option("--out", o.out, "run directory (checkpoint, metrics, config snapshot)");
  train_c->add_option("--checkpoint", o.checkpoint, "resume from this checkpoint");
  train_c->add_option("--steps", o.steps, "total training steps");
  train_c->add_flag("--force", o.force, "overwrite an existing run directory");

  auto* conv = app.add_subcommand("convert", "convert one utterance to a target timbre");
  conv->add_option("--checkpoint", o.checkpoint, "trained checkpoint")->required();
  conv->add_option("--source", o.source, "source WAV (content)")->required();
  conv->add_option("--target", o.target, "target WAV (timbre reference)")->required();
  conv->add_option("--out", o.out, "output WAV path; the sidecar mel uses the .mel extension");
  conv->add_option("--vocoder", o.vocoder, "griffinlim or external")->check(CLI::IsMember(vocoders));
  conv->add_option("--iters", o.iters, "Griffin-Lim iterations");

  auto* batch = app.add_subcommand("batch-convert", "convert every manifest entry to one target timbre");
  batch->add_option("--checkpoint", o.checkpoint, "trained checkpoint")->required();
  batch->add_option("--manifest", o.manifest, "source manifest")->required();
  batch->add_option("--target", o.target, "target WAV")->required();
  batch->add_option("--out", o.out, "output directory");
  batch->add_option("--vocoder", o.vocoder, "griffinlim or external")->check(CLI::IsMember(vocoders));
  batch->add_option("--iters", o.iters, "Griffin-Lim iterations");

  auto* eval = app.add_subcommand("eval", "MCD and embedding similarity over a pair list");
  eval->add_option("--checkpoint", o.checkpoint, "trained checkpoint")->required();
  eval->add_option("--pairs", o.pairs, "pair list (TSV)")->required();
  eval->add_option("--out", o.out, "report CSV");
  eval->add_flag("--no-dtw", o.no_dtw, "require equal lengths instead of DTW alignment");

  auto* exp = app.add_subcommand("export-embeddings", "write speaker embeddings of a manifest");
  exp->add_option("--checkpoint", o.checkpoint, "trained checkpoint")->required();
  exp->add_option("--manifest", o.manifest, "manifest")->required();
  exp->add_option("--out", o.out, "output CSV");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full objective on a tiny model");
  add_config(gc);
  add_seed(gc);
  add_literal(gc);
  gc->add_flag("--corrupt-kl", o.corrupt_kl, "fault injection: reverse the KL gradient");
  gc->add_flag("--all-entries", o.all_entries, "check every parameter entry");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*synth) return cmd_synth_data(o, out);
    if (*train_c) return cmd_train(o, out);
    if (*conv) return cmd_convert(o, out);
    if (*batch) return cmd_batch_convert(o, out);
    if (*eval) return cmd_eval(o, out);
    if (*exp) return cmd_export(o, out);
    if (*gc) return cmd_gradcheck(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitConfig;
}

}  // namespace stylevc
