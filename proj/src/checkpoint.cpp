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

#include "stylevc/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <thread>

#include "json.hpp"
#include "stylevc/error.hpp"

namespace stylevc {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

TrainState TrainState::create(const RunConfig& cfg) {
  cfg.validate();
  TrainState s;
  s.config = cfg;
  s.model = std::make_unique<Model>(cfg.model, cfg.seed);
  s.adam.init(s.model->params());
  s.rng = Rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 1);
  return s;
}

namespace {

std::uint32_t crc_of(const Matrix& m) {
  const auto* p = reinterpret_cast<const Bytef*>(m.data());
  return static_cast<std::uint32_t>(crc32(0L, p, static_cast<uInt>(m.size() * sizeof(double))));
}

struct TensorRef {
  std::string name;
  const Matrix* value;
};

std::vector<TensorRef> tensors_of(const TrainState& s) {
  std::vector<TensorRef> out;
  const auto& params = s.model->params().all();
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back({"param/" + params[i].name, &params[i].value});
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back({"adam_m/" + params[i].name, &s.adam.m.at(i)});
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back({"adam_v/" + params[i].name, &s.adam.v.at(i)});
  return out;
}

struct RawCheckpoint {
  json header;
  std::vector<char> bytes;
  std::size_t payload_start = 0;
};

RawCheckpoint read_raw(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  RawCheckpoint raw;
  raw.bytes.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
  const auto& b = raw.bytes;
  constexpr std::size_t kPrefix = 8 + 4 + 8;
  if (b.size() < kPrefix || std::memcmp(b.data(), kCheckpointMagic, 8) != 0)
    throw IntegrityError(path.string() + ": not a checkpoint (bad magic or truncated)");
  std::uint32_t version;
  std::uint64_t header_len;
  std::memcpy(&version, b.data() + 8, 4);
  std::memcpy(&header_len, b.data() + 12, 8);
  if (version != kCheckpointVersion)
    throw ConfigError(path.string() + ": checkpoint format version " + std::to_string(version) +
                      ", this build reads version " + std::to_string(kCheckpointVersion));
  if (header_len > b.size() - kPrefix) throw IntegrityError(path.string() + ": truncated header");
  try {
    raw.header = json::parse(b.begin() + kPrefix, b.begin() + static_cast<std::ptrdiff_t>(kPrefix + header_len));
  } catch (const json::exception& e) {
    throw IntegrityError(path.string() + ": corrupt header (" + e.what() + ")");
  }
  raw.payload_start = kPrefix + header_len;
  return raw;
}

RunConfig config_of(const RawCheckpoint& raw, const fs::path& path) {
  try {
    return from_map(raw.header.at("config").get<ConfigMap>());
  } catch (const json::exception& e) {
    throw IntegrityError(path.string() + ": corrupt config block (" + e.what() + ")");
  }
}

void fill(const RawCheckpoint& raw, const fs::path& path, TrainState& s) {
  std::map<std::string, json> index;
  try {
    for (const auto& t : raw.header.at("tensors")) index[t.at("name").get<std::string>()] = t;
    s.step = raw.header.at("step").get<std::size_t>();
    s.adam.t = raw.header.at("adam_t").get<std::size_t>();
    s.rng.deserialize(raw.header.at("rng").get<std::string>());
  } catch (const json::exception& e) {
    throw IntegrityError(path.string() + ": corrupt header (" + e.what() + ")");
  } catch (const std::exception& e) {
    throw IntegrityError(path.string() + ": corrupt RNG state (" + e.what() + ")");
  }
  const std::size_t payload = raw.bytes.size() - raw.payload_start;
  for (const auto& ref : tensors_of(s)) {
    auto it = index.find(ref.name);
    if (it == index.end()) throw ConfigError(path.string() + ": tensor '" + ref.name + "' missing from checkpoint");
    const json& t = it->second;
    const auto rows = t.at("shape").at(0).get<std::size_t>();
    const auto cols = t.at("shape").at(1).get<std::size_t>();
    if (rows != ref.value->rows() || cols != ref.value->cols())
      throw ConfigError(path.string() + ": shape mismatch for tensor '" + ref.name + "': checkpoint [" +
                        std::to_string(rows) + " x " + std::to_string(cols) + "], model " +
                        ref.value->shape_string());
    const auto offset = t.at("offset").get<std::size_t>();
    const std::size_t nbytes = rows * cols * sizeof(double);
    if (offset > payload || nbytes > payload - offset)
      throw IntegrityError(path.string() + ": truncated payload (tensor '" + ref.name + "')");
    Matrix& dst = const_cast<Matrix&>(*ref.value);
    std::memcpy(dst.data(), raw.bytes.data() + raw.payload_start + offset, nbytes);
    if (crc_of(dst) != t.at("crc32").get<std::uint32_t>())
      throw IntegrityError(path.string() + ": checksum mismatch for tensor '" + ref.name + "'");
  }
}

}  // namespace

void save_checkpoint(const TrainState& s, const fs::path& path) {
  json header;
  header["format"] = "stylevc-checkpoint";
  header["dtype"] = "float64";
  header["step"] = s.step;
  header["adam_t"] = s.adam.t;
  header["rng"] = s.rng.serialize();
  header["config"] = to_map(s.config);
  json index = json::array();
  std::size_t offset = 0;
  const auto tensors = tensors_of(s);
  for (const auto& t : tensors) {
    index.push_back({{"name", t.name},
                     {"shape", {t.value->rows(), t.value->cols()}},
                     {"offset", offset},
                     {"crc32", crc_of(*t.value)}});
    offset += t.value->size() * sizeof(double);
  }
  header["tensors"] = std::move(index);
  const std::string text = header.dump();

  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint " + tmp.string());
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t len = text.size();
    os.write(kCheckpointMagic, 8);
    os.write(reinterpret_cast<const char*>(&version), 4);
    os.write(reinterpret_cast<const char*>(&len), 8);
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : tensors)
      os.write(reinterpret_cast<const char*>(t.value->data()),
               static_cast<std::streamsize>(t.value->size() * sizeof(double)));
    if (!os) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

TrainState load_checkpoint(const fs::path& path) {
  const RawCheckpoint raw = read_raw(path);
  TrainState s = TrainState::create(config_of(raw, path));
  fill(raw, path, s);
  return s;
}

void restore_checkpoint(const fs::path& path, TrainState& into) {
  const RawCheckpoint raw = read_raw(path);
  fill(raw, path, into);
}

// ---------------------------------------------------------------------------

void write_metrics_header(std::ostream& os) { os << "step,l_vae_y1,l_vae_y2,l_aam,l_tri,total,lambda2\n"; }

void write_metrics_row(std::ostream& os, std::size_t step, const LossBreakdown& b) {
  os << step << std::setprecision(17) << ',' << b.l_vae_y1 << ',' << b.l_vae_y2 << ',' << b.l_aam << ','
     << b.l_tri << ',' << b.total << ',' << b.lambda2 << '\n';
}

void train(TrainState& state, const TripletSampler& sampler, std::size_t target_step, const TrainHooks& hooks) {
  const TrainConfig& tc = state.config.train;
  const std::size_t latent_dim = state.config.model.d_content;
  if (target_step <= state.step) return;
  const std::size_t n_batches = target_step - state.step;

  std::unique_ptr<std::ofstream> metrics;
  if (!hooks.metrics_csv.empty()) {
    const bool fresh = !fs::exists(hooks.metrics_csv) || fs::file_size(hooks.metrics_csv) == 0;
    metrics = std::make_unique<std::ofstream>(hooks.metrics_csv, std::ios::app);
    if (!*metrics) throw IoError("cannot open metrics file " + hooks.metrics_csv.string());
    if (fresh) write_metrics_header(*metrics);
  }

  BoundedQueue<TripletBatch> queue(tc.queue_capacity);
  std::thread producer;
  if (tc.prefetch) {
    producer = std::thread([&queue, &sampler, rng = state.rng, n_batches, bs = tc.batch_size, latent_dim]() mutable {
      for (std::size_t i = 0; i < n_batches; ++i)
        if (!queue.push(sampler.sample_batch(rng, bs, latent_dim))) return;
      queue.close();
    });
  }
  auto stop = [&] {
    queue.close();
    if (producer.joinable()) producer.join();
  };

  std::string last_good = "none";
  try {
    while (state.step < target_step) {
      TripletBatch batch;
      if (tc.prefetch) {
        auto next = queue.pop();
        if (!next) throw DataError("batch producer stopped early");
        batch = std::move(*next);
      } else {
        Rng rng = state.rng;
        batch = sampler.sample_batch(rng, tc.batch_size, latent_dim);
      }
      StepResult r;
      try {
        r = train_step(*state.model, state.adam, batch, state.config.loss, tc, state.step);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + "; last good checkpoint: " + last_good);
      }
      state.rng.deserialize(batch.rng_state_after);
      const std::size_t done = state.step;
      ++state.step;
      if (metrics) write_metrics_row(*metrics, done, r.losses);
      if (hooks.log && (tc.log_every == 0 || done % tc.log_every == 0 || state.step == target_step)) {
        const auto& b = r.losses;
        *hooks.log << "step " << done << " total " << b.total << " vae_y1 " << b.l_vae_y1 << " vae_y2 "
                   << b.l_vae_y2 << " recon_y1 " << b.l_recon_y1 << " kl " << b.l_kl_y1 << " aam " << b.l_aam
                   << " tri " << b.l_tri << " lambda2 " << b.lambda2 << " grad_norm " << r.grad_norm << std::endl;
      }
      if (hooks.on_step) hooks.on_step(done, r);
      if (!hooks.checkpoint_path.empty() &&
          ((tc.checkpoint_every > 0 && state.step % tc.checkpoint_every == 0) || state.step == target_step)) {
        save_checkpoint(state, hooks.checkpoint_path);
        last_good = hooks.checkpoint_path.string() + " (step " + std::to_string(state.step) + ")";
      }
    }
  } catch (...) {
    stop();
    throw;
  }
  stop();
}

}  // namespace stylevc
