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

#include "stylevc/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "stylevc/error.hpp"

namespace stylevc {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected a number, got '" + s + "'");
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename Get>
Field size_field(std::string key, Get ref) {
  return {key, [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = static_cast<std::size_t>(parse_uint(key, v)); }};
}
template <typename Get>
Field int_field(std::string key, Get ref) {
  return {key, [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = static_cast<int>(parse_uint(key, v)); }};
}
template <typename Get>
Field u64_field(std::string key, Get ref) {
  return {key, [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_uint(key, v); }};
}
template <typename Get>
Field double_field(std::string key, Get ref) {
  return {key, [ref](const RunConfig& c) { return fmt_double(ref(const_cast<RunConfig&>(c))); },
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_double(key, v); }};
}
template <typename Get>
Field bool_field(std::string key, Get ref) {
  return {key, [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [ref, key](RunConfig& c, const std::string& v) { ref(c) = parse_bool(key, v); }};
}
template <typename Get>
Field string_field(std::string key, Get ref) {
  return {key, [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); },
          [ref](RunConfig& c, const std::string& v) { ref(c) = v; }};
}
template <typename E, typename Get>
Field enum_field(std::string key, Get ref, std::vector<std::pair<std::string, E>> names) {
  return {key,
          [ref, names](const RunConfig& c) {
            for (const auto& [n, e] : names)
              if (ref(const_cast<RunConfig&>(c)) == e) return n;
            return std::string("?");
          },
          [ref, names, key](RunConfig& c, const std::string& v) {
            for (const auto& [n, e] : names)
              if (n == v) {
                ref(c) = e;
                return;
              }
            std::string allowed;
            for (const auto& [n, e] : names) allowed += (allowed.empty() ? "" : ", ") + n;
            throw ConfigError(key + ": '" + v + "' is not one of {" + allowed + "}");
          }};
}

#define REF(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      u64_field("seed", REF(seed)),
      string_field("out_dir", REF(out_dir)),

      size_field("feature.n_mels", REF(feature.n_mels)),
      size_field("feature.n_fft", REF(feature.n_fft)),
      size_field("feature.win_length", REF(feature.win_length)),
      size_field("feature.hop_length", REF(feature.hop_length)),
      int_field("feature.sample_rate", REF(feature.sample_rate)),
      double_field("feature.f_min", REF(feature.f_min)),
      double_field("feature.f_max", REF(feature.f_max)),
      double_field("feature.log_floor", REF(feature.log_floor)),

      size_field("model.n_mels", REF(model.n_mels)),
      size_field("model.d_model", REF(model.d_model)),
      size_field("model.d_content", REF(model.d_content)),
      size_field("model.n_heads", REF(model.n_heads)),
      size_field("model.conv_kernel", REF(model.conv_kernel)),
      size_field("model.ff_expansion", REF(model.ff_expansion)),
      double_field("model.dropout", REF(model.dropout)),
      size_field("model.speaker_blocks", REF(model.speaker_blocks)),
      size_field("model.rel_pos_clip", REF(model.rel_pos_clip)),
      size_field("model.content_head_kernel", REF(model.content_head_kernel)),
      size_field("model.pool_hidden", REF(model.pool_hidden)),
      double_field("model.style_init_scale", REF(model.style_init_scale)),
      bool_field("model.paper_literal_attention", REF(model.paper_literal_attention)),
      size_field("model.n_speakers", REF(model.n_speakers)),

      double_field("loss.lambda1", REF(loss.lambda1)),
      double_field("loss.lambda3", REF(loss.lambda3)),
      double_field("loss.lambda4", REF(loss.lambda4)),
      double_field("loss.delta", REF(loss.delta)),
      double_field("loss.aam_scale", REF(loss.aam_scale)),
      double_field("loss.aam_margin", REF(loss.aam_margin)),
      enum_field<KlForm>("loss.kl_form", REF(loss.kl_form),
                         {{"standard", KlForm::kStandard}, {"paper_literal", KlForm::kPaperLiteral}}),
      enum_field<TripletForm>("loss.triplet_form", REF(loss.triplet_form),
                              {{"hinge", TripletForm::kHinge}, {"paper_literal", TripletForm::kPaperLiteral}}),
      enum_field<VaePairing>("loss.pairing", REF(loss.pairing),
                             {{"literal", VaePairing::kLiteral}, {"positive_primary", VaePairing::kPositivePrimary}}),

      size_field("train.batch_size", REF(train.batch_size)),
      double_field("train.lr", REF(train.lr)),
      double_field("train.beta1", REF(train.beta1)),
      double_field("train.beta2", REF(train.beta2)),
      double_field("train.eps", REF(train.eps)),
      size_field("train.steps", REF(train.steps)),
      double_field("train.lambda2_start", REF(train.lambda2_start)),
      double_field("train.lambda2_end", REF(train.lambda2_end)),
      size_field("train.lambda2_ramp_steps", REF(train.lambda2_ramp_steps)),
      size_field("train.checkpoint_every", REF(train.checkpoint_every)),
      double_field("train.grad_clip", REF(train.grad_clip)),
      size_field("train.segment_frames", REF(train.segment_frames)),
      size_field("train.queue_capacity", REF(train.queue_capacity)),
      bool_field("train.prefetch", REF(train.prefetch)),
      size_field("train.log_every", REF(train.log_every)),

      string_field("data.manifest", REF(data.manifest)),
      size_field("data.holdout_per_speaker", REF(data.holdout_per_speaker)),
      size_field("data.synth_speakers", REF(data.synth_speakers)),
      size_field("data.synth_utts", REF(data.synth_utts)),
      double_field("data.synth_duration_s", REF(data.synth_duration_s)),
  };
  return f;
}

#undef REF

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::validate() const {
  feature.validate();
  model.validate();
  loss.validate();
  train.validate();
  if (model.d_model % model.n_heads != 0)
    throw ConfigError("d_model " + std::to_string(model.d_model) + " is not divisible by n_heads " +
                      std::to_string(model.n_heads));
  if (feature.n_mels != model.n_mels)
    throw ConfigError("feature.n_mels and model.n_mels differ");
  if (train.segment_frames % 16 != 0) throw ConfigError("train.segment_frames must be divisible by 16");
}

ConfigMap to_map(const RunConfig& cfg) {
  ConfigMap m;
  for (const auto& f : fields()) m[f.key] = f.get(cfg);
  return m;
}

void apply_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields())
    if (f.key == key) return f.set(cfg, value);
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig from_map(const ConfigMap& m) {
  RunConfig c;
  for (const auto& [k, v] : m) apply_entry(c, k, v);
  return c;
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    try {
      apply_entry(cfg, section.empty() ? key : section + "." + key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  RunConfig cfg = parse_config(ss.str(), path.string());
  if (!cfg.data.manifest.empty() && std::filesystem::path(cfg.data.manifest).is_relative())
    cfg.data.manifest = (path.parent_path() / cfg.data.manifest).string();
  return cfg;
}

std::string format_config(const RunConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& [key, value] : to_map(cfg)) {
    const auto dot = key.find('.');
    const std::string sec = dot == std::string::npos ? "" : key.substr(0, dot);
    const std::string name = dot == std::string::npos ? key : key.substr(dot + 1);
    if (sec != section) {
      os << "\n[" << sec << "]\n";
      section = sec;
    }
    const bool is_text = key == "out_dir" || key == "data.manifest";
    os << name << " = " << (is_text ? "\"" + value + "\"" : value) << '\n';
  }
  return os.str();
}

void apply_paper_literal(RunConfig& cfg, const std::string& list) {
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item == "kl") cfg.loss.kl_form = KlForm::kPaperLiteral;
    else if (item == "triplet") cfg.loss.triplet_form = TripletForm::kPaperLiteral;
    else if (item == "attention") cfg.model.paper_literal_attention = true;
    else if (!item.empty())
      throw ConfigError("--paper-literal: unknown variant '" + item + "' (expected kl, triplet, attention)");
  }
}

RunConfig toy_config() {
  RunConfig c;
  c.model.d_model = 32;
  c.model.d_content = 16;
  c.model.n_heads = 4;
  c.model.conv_kernel = 7;
  c.model.ff_expansion = 2;
  c.model.dropout = 0.0;
  c.model.speaker_blocks = 2;
  c.model.rel_pos_clip = 8;
  c.model.pool_hidden = 16;
  c.train.segment_frames = 64;
  c.train.steps = 2000;
  c.data.synth_speakers = 4;
  c.data.synth_utts = 8;
  c.data.holdout_per_speaker = 2;
  c.data.synth_duration_s = 1.5;
  return c;
}

}  // namespace stylevc
