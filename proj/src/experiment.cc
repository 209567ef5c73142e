// src/experiment.cc

// Copyright 2026  The voicepd Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "voicepd/experiment.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "voicepd/augment.h"
#include "voicepd/gmm.h"
#include "voicepd/persist.h"

namespace voicepd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename F>
void parallel_for(int n, int threads, F &&f) {
  std::vector<std::exception_ptr> errors(std::max(n, 0));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i; (i = next++) < n;) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int t = std::clamp(threads, 1, std::max(1, n));
  if (t == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < t; ++i) pool.emplace_back(worker);
  }
  for (auto &e : errors)
    if (e) std::rethrow_exception(e);
}

std::string read_bytes(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path &path, const std::string &text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed for " + path.string());
  }
  fs::rename(tmp, path);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string audit_line(const std::string &fingerprint, uint64_t seed) {
  return "# config_fingerprint=" + fingerprint +
         " seed=" + std::to_string(seed) + "\n";
}

std::string run_name(int run) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "run-%02d", run);
  return buf;
}

bool is_gmm_preset(FrontendPreset p) {
  return p == FrontendPreset::kGmmHighQuality ||
         p == FrontendPreset::kGmmTelephone;
}

bool is_telephone_preset(FrontendPreset p) {
  return p == FrontendPreset::kGmmTelephone ||
         p == FrontendPreset::kXvecTelephone;
}

json frontend_to_json(const FrontendConfig &c) {
  json j;
  j["frame_len_ms"] = c.frame_len_ms;
  j["frame_hop_ms"] = c.frame_hop_ms;
  j["n_mfcc"] = c.n_mfcc;
  j["n_mel_bins"] = c.n_mel_bins;
  j["mel_low_hz"] = c.mel_low_hz;
  j["mel_high_hz"] = c.mel_high_hz;
  j["delta_order"] = c.delta_order;
  j["cms_window_ms"] = c.cms_window_ms;
  j["vad_offset"] = c.vad_offset;
  j["preemph_coeff"] = c.preemph_coeff;
  j["deltas_before_vad"] = c.deltas_before_vad;
  j["target_rate_hz"] =
      c.target_rate_hz ? json(*c.target_rate_hz) : json(nullptr);
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

std::string_view to_string(Classifier c) {
  switch (c) {
    case Classifier::kGmm: return "gmm";
    case Classifier::kXvecCos: return "xvec-cos";
    case Classifier::kXvecLdaCos: return "xvec-lda-cos";
    case Classifier::kXvecPlda: return "xvec-plda";
  }
  return "unknown";
}

Classifier parse_classifier(std::string_view s) {
  for (auto c : {Classifier::kGmm, Classifier::kXvecCos,
                 Classifier::kXvecLdaCos, Classifier::kXvecPlda})
    if (s == to_string(c)) return c;
  throw ConfigError("unknown classifier '" + std::string(s) + "'");
}

bool is_xvector(Classifier c) { return c != Classifier::kGmm; }

BackendKind backend_kind(Classifier c) {
  switch (c) {
    case Classifier::kXvecLdaCos: return BackendKind::kLdaCosine;
    case Classifier::kXvecPlda: return BackendKind::kPlda;
    default: return BackendKind::kCosine;
  }
}

std::string_view to_string(SexFilter s) {
  switch (s) {
    case SexFilter::kMale: return "M";
    case SexFilter::kFemale: return "F";
    case SexFilter::kBoth: return "both";
  }
  return "unknown";
}

SexFilter parse_sex_filter(std::string_view s) {
  if (s == "M" || s == "male") return SexFilter::kMale;
  if (s == "F" || s == "female") return SexFilter::kFemale;
  if (s == "both") return SexFilter::kBoth;
  throw ConfigError("unknown sex filter '" + std::string(s) + "'");
}

std::string sex_dir(Sex s) { return s == Sex::kMale ? "male" : "female"; }

FrontendPreset ExperimentConfig::frontend_preset() const {
  if (preset) return *preset;
  const bool tel = channel == Channel::kTelephone;
  if (classifier == Classifier::kGmm)
    return tel ? FrontendPreset::kGmmTelephone : FrontendPreset::kGmmHighQuality;
  return tel ? FrontendPreset::kXvecTelephone : FrontendPreset::kXvecHighQuality;
}

int ExperimentConfig::num_gmm_components() const {
  return gmm_components ? *gmm_components
                        : default_num_components(channel == Channel::kTelephone);
}

std::vector<Sex> ExperimentConfig::sexes() const {
  switch (sex) {
    case SexFilter::kMale: return {Sex::kMale};
    case SexFilter::kFemale: return {Sex::kFemale};
    case SexFilter::kBoth: return {Sex::kMale, Sex::kFemale};
  }
  return {};
}

void ExperimentConfig::validate() const {
  const FrontendPreset p = frontend_preset();
  if (is_gmm_preset(p) != (classifier == Classifier::kGmm))
    throw ConfigError("preset '" + std::string(to_string(p)) +
                      "' does not match classifier '" +
                      std::string(to_string(classifier)) + "'");
  if (channel == Channel::kTelephone && !is_telephone_preset(p))
    throw ConfigError("telephone recordings need a telephone preset");
  if (n_runs < 1) throw ConfigError("need at least one run");
  if (train_per_class && *train_per_class < 1)
    throw ConfigError("train size per class must be positive");
  if (!(segment_min_s >= 0.0 && segment_min_s < segment_max_s))
    throw ConfigError("segment range must satisfy 0 <= min < max");
  if (gmm_components && *gmm_components < 1)
    throw ConfigError("GMM needs at least one component");
  if (gmm_max_iter < 1) throw ConfigError("GMM needs at least one iteration");
  if (!(sigmoid_slope > 0.0) || !std::isfinite(sigmoid_slope))
    throw ConfigError("sigmoid slope must be positive");
  if (lda_dim < 1) throw ConfigError("LDA dimension must be positive");
  if (embedder.frame_width < 1 || embedder.last_frame_width < 1 ||
      embedder.embed_dim < 1 || embedder.train.steps < 1)
    throw ConfigError("embedder sizes must be positive");
  if (threads < 1) throw ConfigError("need at least one thread");
}

json ExperimentConfig::to_json() const {
  json j;
  j["channel"] = std::string(to_string(channel));
  j["preset"] = std::string(to_string(frontend_preset()));
  j["sex"] = std::string(to_string(sex));
  std::vector<std::string> ts;
  for (Task t : tasks) ts.emplace_back(to_string(t));
  std::sort(ts.begin(), ts.end());
  j["tasks"] = ts;
  j["classifier"] = std::string(to_string(classifier));
  j["augment_backend"] = augment_backend;
  j["train_per_class"] = train_per_class ? json(*train_per_class) : json(nullptr);
  j["n_runs"] = n_runs;
  j["segment_min_s"] = segment_min_s;
  j["segment_max_s"] = std::isinf(segment_max_s) ? json("inf")
                                                  : json(segment_max_s);
  j["seed"] = seed;
  j["sigmoid_slope"] = sigmoid_slope;
  if (classifier == Classifier::kGmm) {
    j["gmm_components"] = num_gmm_components();
    j["gmm_max_iter"] = gmm_max_iter;
  } else {
    j["lda_dim"] = lda_dim;
    j["embedder"] = {{"frame_width", embedder.frame_width},
                     {"last_frame_width", embedder.last_frame_width},
                     {"embed_dim", embedder.embed_dim},
                     {"steps", embedder.train.steps},
                     {"batch_size", embedder.train.batch_size},
                     {"lr", embedder.train.lr},
                     {"momentum", embedder.train.momentum},
                     {"min_crop_frames", embedder.train.min_crop_frames},
                     {"max_crop_frames", embedder.train.max_crop_frames}};
  }
  return j;
}

std::string config_fingerprint(const ExperimentConfig &cfg,
                               const std::string &manifest_digest,
                               const std::string &embedder_digest) {
  const std::string text = cfg.to_json().dump() + "\n" + manifest_digest +
                           "\n" + embedder_digest;
  return hex64(fnv1a64(text));
}

std::string frontend_fingerprint(const FrontendConfig &cfg) {
  return hex64(fnv1a64(frontend_to_json(cfg).dump()));
}

// ---------------------------------------------------------------------------
// Feature store

FeatureStore::FeatureStore(const fs::path &out_dir, FrontendPreset preset)
    : dir_(out_dir / "features" / std::string(to_string(preset))),
      preset_(preset) {}

fs::path FeatureStore::feature_path(std::string_view utterance_id) const {
  return dir_ / (file_stem(utterance_id) + ".vpd");
}

bool FeatureStore::has(std::string_view utterance_id) const {
  return fs::exists(feature_path(utterance_id));
}

FeatureMatrix FeatureStore::load(std::string_view utterance_id) const {
  const fs::path p = feature_path(utterance_id);
  if (!fs::exists(p))
    throw DataError("no features for '" + std::string(utterance_id) +
                    "' in " + dir_.string() + " (run extract first)");
  const Artifact a = read_artifact(p);
  if (a.kind != "features")
    throw DataError(p.string() + " is not a feature file");
  const Tensor &t = a.tensor("frames");
  if (t.shape.size() != 2) throw DataError(p.string() + ": bad frame shape");
  FeatureMatrix fm;
  fm.frames = to_matrix(t, t.shape[0], t.shape[1]);
  fm.frame_hop_ms = a.meta.value("frame_hop_ms", 10.0);
  fm.utterance_id = std::string(utterance_id);
  fm.vad_mask.assign(fm.frames.rows(), true);
  return fm;
}

ExtractSummary cmd_extract(const Manifest &manifest, FrontendPreset preset,
                           const fs::path &out_dir, uint64_t seed,
                           int threads) {
  const FeatureStore store(out_dir, preset);
  const FrontendConfig fcfg = FrontendConfig::preset(preset);
  const std::string fp = frontend_fingerprint(fcfg);
  ExtractSummary summary;
  summary.n_records = static_cast<int>(manifest.records.size());
  if (manifest.records.empty()) {
    spdlog::warn("extract: manifest is empty, nothing to do");
    fs::create_directories(store.dir());
    return summary;
  }
  fs::create_directories(store.dir());

  const int n = summary.n_records;
  std::vector<std::optional<json>> entries(n);
  std::vector<std::string> errors(n);
  parallel_for(n, threads, [&](int i) {
    const ManifestRecord &r = manifest.records[i];
    const std::string utt = r.utterance_id();
    try {
      const fs::path wav = manifest.resolve(r.path);
      std::string digest_src = read_bytes(wav);
      AudioBuffer audio = load_wav(wav);
      std::optional<AudioBuffer> noise;
      const bool subtract =
          r.channel == Channel::kHighQuality && r.noise_path.has_value();
      if (subtract) {
        const fs::path np = manifest.resolve(*r.noise_path);
        digest_src += read_bytes(np);
        noise = load_wav(np);
      }
      const FeatureMatrix fm =
          run_frontend(audio, fcfg, noise ? &*noise : nullptr);
      Artifact a;
      a.kind = "features";
      a.config_fingerprint = fp;
      a.seed = seed;
      a.meta = {{"utterance_id", utt},
                {"preset", std::string(to_string(preset))},
                {"frame_hop_ms", fm.frame_hop_ms},
                {"spectral_subtraction", subtract}};
      a.tensors.push_back(to_tensor("frames", fm.frames));
      write_artifact(a, store.feature_path(utt));
      entries[i] = json{{"utterance_id", utt},
                        {"subject_id", r.subject_id},
                        {"file", store.feature_path(utt).filename().string()},
                        {"frames", fm.num_frames()},
                        {"dim", fm.dim()},
                        {"channel", std::string(to_string(r.channel))},
                        {"spectral_subtraction", subtract},
                        {"source_digest", hex64(fnv1a64(digest_src))},
                        {"config_fingerprint", fp},
                        {"seed", seed}};
    } catch (const std::exception &e) {
      errors[i] = utt + ": " + e.what();
    }
  });

  // Merge with whatever an earlier extraction left in the index.
  std::map<std::string, json> index;
  const fs::path index_path = store.dir() / "index.jsonl";
  if (fs::exists(index_path)) {
    std::istringstream in(read_bytes(index_path));
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      try {
        json j = json::parse(line);
        const std::string id = j.at("utterance_id").get<std::string>();
        index[id] = std::move(j);
      } catch (const std::exception &) {
        spdlog::warn("extract: ignoring malformed index line");
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    if (entries[i]) {
      index[(*entries[i])["utterance_id"].get<std::string>()] = *entries[i];
      ++summary.n_written;
    } else {
      spdlog::error("extract: {}", errors[i]);
      summary.failures.push_back(errors[i]);
      ++summary.n_failed;
    }
  }
  std::string text;
  for (const auto &[id, j] : index) text += j.dump() + "\n";
  write_text(index_path, text);
  spdlog::info("extract: {} of {} recordings written to {}", summary.n_written,
               n, store.dir().string());
  if (summary.n_failed > 0)
    spdlog::error("extract: {} recordings failed", summary.n_failed);
  return summary;
}

// ---------------------------------------------------------------------------
// Augmentation

namespace {

std::vector<std::string> list_wavs(const fs::path &dir, std::string_view what) {
  if (dir.empty() || !fs::is_directory(dir))
    throw ConfigError("missing " + std::string(what) + " pool directory '" +
                      dir.string() + "'");
  std::vector<std::string> out;
  for (const auto &e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav")
      out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  if (out.empty())
    throw ConfigError("the " + std::string(what) + " pool '" + dir.string() +
                      "' holds no .wav files");
  return out;
}

std::string absolute_path(const Manifest &m, const std::string &p) {
  return fs::absolute(m.resolve(p)).lexically_normal().string();
}

}  // namespace

fs::path cmd_augment(const Manifest &manifest, const AugmentPools &pools,
                     const fs::path &out_dir, uint64_t seed, bool enabled) {
  const fs::path out_manifest = out_dir / "augmented.jsonl";
  std::vector<ManifestRecord> out;
  auto absolutized = [&](ManifestRecord r) {
    r.path = absolute_path(manifest, r.path);
    if (r.noise_path) r.noise_path = absolute_path(manifest, *r.noise_path);
    return r;
  };
  if (!enabled) {
    for (const auto &r : manifest.records) out.push_back(absolutized(r));
    write_manifest(out, out_manifest);
    spdlog::info("augment: disabled, {} records passed through", out.size());
    return out_manifest;
  }

  std::array<CorruptionSpec, 4> specs;
  const std::array<const fs::path *, 4> dirs = {&pools.rir, &pools.noise,
                                                &pools.music, &pools.babble};
  for (int k = 0; k < 4; ++k) {
    specs[k].kind = kAllCorruptionKinds[k];
    specs[k].source_pool =
        list_wavs(*dirs[k], to_string(kAllCorruptionKinds[k]));
  }
  std::map<int, std::array<CorruptionSource, 4>> by_rate;
  auto sources_for = [&](int rate) -> const std::array<CorruptionSource, 4> & {
    auto it = by_rate.find(rate);
    if (it != by_rate.end()) return it->second;
    std::array<CorruptionSource, 4> s;
    for (int k = 0; k < 4; ++k) s[k] = load_corruption_source(specs[k], rate);
    return by_rate.emplace(rate, std::move(s)).first->second;
  };

  const fs::path wav_dir = out_dir / "augmented";
  fs::create_directories(wav_dir);
  int n_orig = 0;
  for (const auto &r : manifest.records) {
    if (r.is_augmented()) continue;
    ++n_orig;
    const std::string utt = r.utterance_id();
    Utterance u{utt, load_wav(manifest.resolve(r.path))};
    const auto copies =
        augment_corpus({u}, sources_for(u.audio.sample_rate_hz), seed);
    for (const auto &c : copies) {
      if (!c.kind) {
        out.push_back(absolutized(r));
        continue;
      }
      const fs::path wav = wav_dir / (file_stem(c.id) + ".wav");
      save_wav(wav, c.audio);
      ManifestRecord a = absolutized(r);
      a.id = c.id;
      a.path = fs::absolute(wav).lexically_normal().string();
      a.provenance = {{"source", c.source_id},
                      {"kind", std::string(to_string(*c.kind))},
                      {"snr_db", std::isfinite(c.snr_db) ? json(c.snr_db)
                                                          : json(nullptr)},
                      {"seed", c.seed}};
      out.push_back(std::move(a));
    }
  }
  write_manifest(out, out_manifest);
  spdlog::info("augment: {} originals -> {} records in {}", n_orig, out.size(),
               out_manifest.string());
  return out_manifest;
}

// ---------------------------------------------------------------------------
// Embedder

EmbedderRef prepare_embedder(const ExperimentConfig &cfg, const fs::path &out_dir,
                             bool train_if_missing) {
  if (cfg.embedder_path) {
    if (!fs::exists(*cfg.embedder_path))
      throw DataError("embedder '" + cfg.embedder_path->string() +
                      "' not found");
    return {*cfg.embedder_path, hex64(fnv1a64(read_bytes(*cfg.embedder_path)))};
  }
  if (!cfg.embedder_manifest)
    throw ConfigError(
        "x-vector classifiers need a pretrained embedder or a background "
        "manifest to train one");
  const Manifest bg =
      load_manifest(*cfg.embedder_manifest, data_root_from_env(), false);
  const FrontendPreset preset = cfg.frontend_preset();
  json key = cfg.to_json()["embedder"];
  key["preset"] = std::string(to_string(preset));
  key["seed"] = cfg.seed;
  key["manifest"] = manifest_digest(bg.records);
  const std::string digest = hex64(fnv1a64(key.dump()));
  const fs::path path = out_dir / "embedders" / (digest + ".vpd");
  if (fs::exists(path) || !train_if_missing) return {path, digest};

  const FeatureStore store(out_dir, preset);
  std::map<std::string, int> speakers;
  for (const auto &r : bg.records) speakers.emplace(r.subject_id, 0);
  if (speakers.size() < 2)
    throw DataError("embedder training needs at least two speakers");
  int next = 0;
  for (auto &[id, label] : speakers) label = next++;
  std::vector<TrainExample> examples;
  for (const auto &r : bg.records) {
    FeatureMatrix fm = store.load(r.utterance_id());
    examples.push_back({std::move(fm.frames), speakers.at(r.subject_id)});
  }
  const int k = static_cast<int>(examples.front().frames.cols());
  const TdnnConfig tcfg = TdnnConfig::compact(
      k, static_cast<int>(speakers.size()), cfg.embedder.frame_width,
      cfg.embedder.last_frame_width, cfg.embedder.embed_dim);
  EmbedderTrainOptions opts = cfg.embedder.train;
  opts.seed = derive_seed(cfg.seed, "embedder");
  spdlog::info("embedder: training on {} recordings of {} speakers",
               examples.size(), speakers.size());
  const TdnnWeights w = train_embedder(tcfg, examples, opts);
  spdlog::info("embedder: training accuracy {:.3f}",
               tdnn_accuracy(w, examples));
  save_tdnn(w, {digest, cfg.seed}, path);
  return {path, digest};
}

// ---------------------------------------------------------------------------
// Train and evaluate

namespace {

struct SexCohort {
  Sex sex = Sex::kMale;
  std::vector<Subject> subjects;  // sorted by id
  std::map<std::string, ClassLabel> labels;
  // Original recordings per subject, and augmented copies per subject.
  std::map<std::string, std::vector<std::string>> originals, augmented;
};

SexCohort build_cohort(const Manifest &m, const ExperimentConfig &cfg, Sex sex) {
  SexCohort c;
  c.sex = sex;
  const std::set<Task> tasks(cfg.tasks.begin(), cfg.tasks.end());
  std::map<std::string, std::string> source_subject;
  for (const auto &r : m.records) {
    if (r.sex != sex || r.channel != cfg.channel || !r.group) continue;
    if (!tasks.empty() && !tasks.contains(r.task)) continue;
    c.labels[r.subject_id] = *r.group;
    if (r.is_augmented())
      c.augmented[r.subject_id].push_back(r.utterance_id());
    else
      c.originals[r.subject_id].push_back(r.utterance_id());
  }
  for (const auto &[id, label] : c.labels) {
    if (!c.originals.contains(id)) continue;
    c.subjects.push_back({id, label, sex});
  }
  for (auto it = c.labels.begin(); it != c.labels.end();)
    it = c.originals.contains(it->first) ? std::next(it) : c.labels.erase(it);
  if (c.subjects.empty())
    throw DataError("no " + sex_dir(sex) + " " +
                    std::string(to_string(cfg.channel)) +
                    " recordings match the task filter");
  return c;
}

int resolve_train_per_class(const ExperimentConfig &cfg, const SexCohort &c) {
  if (cfg.train_per_class) return *cfg.train_per_class;
  int n_pd = 0, n_hc = 0;
  for (const auto &s : c.subjects) (s.label == ClassLabel::kPD ? n_pd : n_hc)++;
  return std::max(1, 2 * std::min(n_pd, n_hc) / 3);
}

struct RunContext {
  ExperimentConfig cfg;
  fs::path run_dir;
  std::string fingerprint;
  std::string manifest_digest;
  std::string embedder_digest;
  std::optional<EmbedderRef> embedder;
};

RunContext make_context(const Manifest &m, const ExperimentConfig &cfg,
                        const fs::path &out_dir, bool train_embedder_now) {
  cfg.validate();
  RunContext ctx;
  ctx.cfg = cfg;
  ctx.manifest_digest = manifest_digest(m.records);
  if (is_xvector(cfg.classifier)) {
    ctx.embedder = prepare_embedder(cfg, out_dir, train_embedder_now);
    ctx.embedder_digest = ctx.embedder->digest;
  }
  ctx.fingerprint =
      config_fingerprint(cfg, ctx.manifest_digest, ctx.embedder_digest);
  ctx.run_dir = out_dir / ("run-" + ctx.fingerprint);
  return ctx;
}

json plans_to_json(const std::vector<SplitPlan> &plans) {
  json runs = json::array();
  for (const auto &p : plans)
    runs.push_back({{"run", p.run_index},
                    {"seed", p.seed},
                    {"train_pd", p.train_pd},
                    {"train_hc", p.train_hc},
                    {"test_pd", p.test_pd},
                    {"test_hc", p.test_hc}});
  return runs;
}

std::vector<SplitPlan> plans_from_json(const json &runs) {
  std::vector<SplitPlan> plans;
  for (const auto &r : runs) {
    SplitPlan p;
    p.run_index = r.at("run").get<int>();
    p.seed = r.at("seed").get<uint64_t>();
    p.train_pd = r.at("train_pd").get<std::vector<std::string>>();
    p.train_hc = r.at("train_hc").get<std::vector<std::string>>();
    p.test_pd = r.at("test_pd").get<std::vector<std::string>>();
    p.test_hc = r.at("test_hc").get<std::vector<std::string>>();
    plans.push_back(std::move(p));
  }
  return plans;
}

std::map<std::string, FeatureMatrix> load_features(const FeatureStore &store,
                                                   const SexCohort &c,
                                                   bool with_augmented,
                                                   int threads) {
  std::vector<std::string> ids;
  for (const auto &[s, utts] : c.originals)
    ids.insert(ids.end(), utts.begin(), utts.end());
  if (with_augmented)
    for (const auto &[s, utts] : c.augmented)
      ids.insert(ids.end(), utts.begin(), utts.end());
  std::vector<FeatureMatrix> mats(ids.size());
  parallel_for(static_cast<int>(ids.size()), threads,
               [&](int i) { mats[i] = store.load(ids[i]); });
  std::map<std::string, FeatureMatrix> out;
  for (size_t i = 0; i < ids.size(); ++i) out[ids[i]] = std::move(mats[i]);
  return out;
}

Eigen::MatrixXd subject_frames(const SexCohort &c, const std::string &subject,
                               const std::map<std::string, FeatureMatrix> &fs) {
  std::vector<FeatureMatrix> mats;
  for (const auto &u : c.originals.at(subject)) mats.push_back(fs.at(u));
  return pool_frames(mats);
}

Eigen::MatrixXd class_frames(const SexCohort &c,
                             const std::vector<std::string> &subjects,
                             const std::map<std::string, FeatureMatrix> &fs) {
  std::vector<FeatureMatrix> mats;
  for (const auto &s : subjects)
    for (const auto &u : c.originals.at(s)) mats.push_back(fs.at(u));
  return pool_frames(mats);
}

struct XvecEntry {
  std::string utterance, subject, segment;
  bool augmented = false;
};

struct XvecTable {
  std::vector<XvecEntry> entries;
  Eigen::MatrixXd values;  // one row per entry
};

XvecTable compute_xvectors(const SexCohort &c, const ExperimentConfig &cfg,
                           const TdnnWeights &w, const FeatureStore &store,
                           int threads) {
  std::vector<std::pair<std::string, std::string>> utts;  // (utt, subject)
  std::vector<bool> aug;
  for (const auto &[s, us] : c.originals)
    for (const auto &u : us) utts.emplace_back(u, s), aug.push_back(false);
  if (cfg.augment_backend)
    for (const auto &[s, us] : c.augmented)
      for (const auto &u : us) utts.emplace_back(u, s), aug.push_back(true);

  const int n = static_cast<int>(utts.size());
  std::vector<std::vector<XVector>> per_utt(n);
  std::vector<std::vector<std::string>> seg_names(n);
  ChunkOptions copts;
  copts.min_s = cfg.segment_min_s;
  copts.max_s = cfg.segment_max_s;
  copts.min_frames = std::max(copts.min_frames, w.cfg.receptive_field());
  parallel_for(n, threads, [&](int i) {
    const auto &[utt, subject] = utts[i];
    const FeatureMatrix fm = store.load(utt);
    ChunkOptions o = copts;
    o.seed = derive_seed(cfg.seed, "chunk:" + utt);
    const auto segs = chunk_segments(fm, o);
    // Fragments of one long segment are averaged into one x-vector.
    std::map<std::string, std::vector<FeatureMatrix>> groups;
    for (const auto &s : segs) {
      const auto cut = s.utterance_id.find("/frag");
      groups[s.utterance_id.substr(0, cut)].push_back(s);
    }
    for (const auto &[name, frags] : groups) {
      XVector x = extract_xvector(w, frags, subject);
      x.source = utt;
      per_utt[i].push_back(std::move(x));
      seg_names[i].push_back(name);
    }
  });
  XvecTable t;
  int rows = 0;
  for (const auto &v : per_utt) rows += static_cast<int>(v.size());
  if (rows == 0) throw DataError("no segment is long enough for an x-vector");
  t.values.resize(rows, per_utt[0].empty() ? w.cfg.embed_dim
                                           : per_utt[0][0].values.size());
  int r = 0;
  for (int i = 0; i < n; ++i)
    for (size_t k = 0; k < per_utt[i].size(); ++k, ++r) {
      t.values.row(r) = per_utt[i][k].values.transpose();
      t.entries.push_back(
          {utts[i].first, utts[i].second, seg_names[i][k], aug[i]});
    }
  return t;
}

void save_xvectors(const XvecTable &t, const ArtifactInfo &info,
                   const fs::path &path) {
  Artifact a;
  a.kind = "xvectors";
  a.config_fingerprint = info.config_fingerprint;
  a.seed = info.seed;
  json entries = json::array();
  for (const auto &e : t.entries)
    entries.push_back({{"utterance", e.utterance},
                       {"subject", e.subject},
                       {"segment", e.segment},
                       {"augmented", e.augmented}});
  a.meta = {{"entries", entries}};
  a.tensors.push_back(to_tensor("values", t.values));
  write_artifact(a, path);
}

XvecTable load_xvectors(const fs::path &path) {
  if (!fs::exists(path))
    throw DataError("missing " + path.string() + " (run train first)");
  const Artifact a = read_artifact(path);
  if (a.kind != "xvectors") throw DataError(path.string() + ": wrong kind");
  XvecTable t;
  for (const auto &e : a.meta.at("entries"))
    t.entries.push_back({e.at("utterance").get<std::string>(),
                         e.at("subject").get<std::string>(),
                         e.at("segment").get<std::string>(),
                         e.at("augmented").get<bool>()});
  const Tensor &v = a.tensor("values");
  if (v.shape.size() != 2 ||
      v.shape[0] != static_cast<int64_t>(t.entries.size()))
    throw DataError(path.string() + ": x-vector table shape mismatch");
  t.values = to_matrix(v, v.shape[0], v.shape[1]);
  return t;
}

std::vector<XVector> select_xvectors(const XvecTable &t,
                                     const std::set<std::string> &subjects,
                                     bool include_augmented) {
  std::vector<XVector> out;
  for (size_t i = 0; i < t.entries.size(); ++i) {
    const auto &e = t.entries[i];
    if (!subjects.contains(e.subject)) continue;
    if (e.augmented && !include_augmented) continue;
    out.push_back({t.values.row(i).transpose(), e.utterance, e.subject});
  }
  return out;
}

fs::path sex_path(const RunContext &ctx, Sex s) {
  return ctx.run_dir / sex_dir(s);
}

fs::path model_dir(const RunContext &ctx, Sex s, int run) {
  return sex_path(ctx, s) / "models" / run_name(run);
}

void write_json(const fs::path &path, const json &j) {
  write_text(path, j.dump(2) + "\n");
}

}  // namespace

fs::path run_directory(const fs::path &out_dir, const ExperimentConfig &cfg,
                       const Manifest &manifest,
                       const std::string &embedder_digest) {
  return out_dir / ("run-" + config_fingerprint(cfg, manifest_digest(
                                                          manifest.records),
                                                embedder_digest));
}

TrainSummary cmd_train(const Manifest &manifest, const ExperimentConfig &cfg,
                       const fs::path &out_dir) {
  const RunContext ctx = make_context(manifest, cfg, out_dir, true);
  const ArtifactInfo info{ctx.fingerprint, cfg.seed};
  const FeatureStore store(out_dir, cfg.frontend_preset());
  fs::create_directories(ctx.run_dir);
  write_json(ctx.run_dir / "config.json",
             {{"config_fingerprint", ctx.fingerprint},
              {"seed", cfg.seed},
              {"config", cfg.to_json()},
              {"manifest_digest", ctx.manifest_digest},
              {"embedder_digest", ctx.embedder_digest}});

  std::optional<TdnnWeights> embedder;
  if (ctx.embedder) embedder = load_tdnn(ctx.embedder->path);

  for (Sex sex : cfg.sexes()) {
    const SexCohort c = build_cohort(manifest, cfg, sex);
    const int k = resolve_train_per_class(cfg, c);
    const auto plans = make_splits(
        c.subjects, k, cfg.n_runs,
        derive_seed(cfg.seed, "splits:" + std::string(to_string(sex))));
    const fs::path sdir = sex_path(ctx, sex);
    write_json(sdir / "splits.json", {{"config_fingerprint", ctx.fingerprint},
                                      {"seed", cfg.seed},
                                      {"sex", std::string(to_string(sex))},
                                      {"train_per_class", k},
                                      {"n_runs", cfg.n_runs},
                                      {"runs", plans_to_json(plans)}});
    spdlog::info("train: {} subjects ({}), {} runs with {} per class",
                 c.subjects.size(), sex_dir(sex), plans.size(), k);

    if (cfg.classifier == Classifier::kGmm) {
      const auto feats = load_features(store, c, false, cfg.threads);
      const int m = cfg.num_gmm_components();
      EmOptions em;
      em.max_iter = cfg.gmm_max_iter;
      parallel_for(static_cast<int>(plans.size()), cfg.threads, [&](int i) {
        const SplitPlan &p = plans[i];
        const fs::path dir = model_dir(ctx, sex, p.run_index);
        const GmmModel pd =
            train_gmm(class_frames(c, p.train_pd, feats), m, ClassLabel::kPD,
                      derive_seed(p.seed, "gmm:PD"), em);
        const GmmModel hc =
            train_gmm(class_frames(c, p.train_hc, feats), m, ClassLabel::kHC,
                      derive_seed(p.seed, "gmm:HC"), em);
        save_gmm(pd, info, dir / "gmm_pd.vpd");
        save_gmm(hc, info, dir / "gmm_hc.vpd");
      });
    } else {
      const XvecTable table =
          compute_xvectors(c, cfg, *embedder, store, cfg.threads);
      save_xvectors(table, info, sdir / "xvectors.vpd");
      BackendOptions bopts;
      bopts.kind = backend_kind(cfg.classifier);
      bopts.lda.d_out = cfg.lda_dim;
      parallel_for(static_cast<int>(plans.size()), cfg.threads, [&](int i) {
        const SplitPlan &p = plans[i];
        std::set<std::string> train(p.train_pd.begin(), p.train_pd.end());
        train.insert(p.train_hc.begin(), p.train_hc.end());
        const auto xs = select_xvectors(table, train, cfg.augment_backend);
        std::vector<ClassLabel> labels;
        for (const auto &x : xs) labels.push_back(c.labels.at(x.subject_id));
        const Backend b = train_backend(xs, labels, bopts);
        save_backend(b, info, model_dir(ctx, sex, p.run_index) / "backend.vpd");
      });
    }
    spdlog::info("train: models written to {}", sdir.string());
  }
  return {ctx.run_dir, ctx.fingerprint};
}

EvaluateResult cmd_evaluate(const Manifest &manifest,
                            const ExperimentConfig &cfg,
                            const fs::path &out_dir, bool compare_simple) {
  const RunContext ctx = make_context(manifest, cfg, out_dir, false);
  const FeatureStore store(out_dir, cfg.frontend_preset());
  EvaluateResult result{ctx.run_dir, ctx.fingerprint, {}};
  const std::string audit = audit_line(ctx.fingerprint, cfg.seed);

  for (Sex sex : cfg.sexes()) {
    const SexCohort c = build_cohort(manifest, cfg, sex);
    const fs::path sdir = sex_path(ctx, sex);
    const fs::path splits_path = sdir / "splits.json";
    if (!fs::exists(splits_path))
      throw DataError("missing " + splits_path.string() + " (run train first)");
    const json splits = json::parse(read_bytes(splits_path));
    if (splits.at("config_fingerprint") != ctx.fingerprint)
      throw DataError(splits_path.string() + " belongs to another config");
    const auto plans = plans_from_json(splits.at("runs"));
    for (const auto &p : plans) check_split(p, c.subjects);

    Pipeline pipeline;
    std::map<std::string, FeatureMatrix> feats;
    std::optional<XvecTable> table;
    if (cfg.classifier == Classifier::kGmm) {
      feats = load_features(store, c, false, cfg.threads);
      pipeline = [&](const SplitPlan &p) {
        const fs::path dir = model_dir(ctx, sex, p.run_index);
        for (const char *f : {"gmm_pd.vpd", "gmm_hc.vpd"})
          if (!fs::exists(dir / f))
            throw DataError("missing " + (dir / f).string() +
                            " (run train first)");
        const GmmModel pd = load_gmm(dir / "gmm_pd.vpd");
        const GmmModel hc = load_gmm(dir / "gmm_hc.vpd");
        std::map<std::string, double> scores;
        for (const auto *group : {&p.test_pd, &p.test_hc})
          for (const auto &s : *group) {
            FeatureMatrix fm;
            fm.frames = subject_frames(c, s, feats);
            scores[s] =
                score_subject(fm, pd, hc, cfg.sigmoid_slope, s).score;
          }
        return scores;
      };
    } else {
      table = load_xvectors(sdir / "xvectors.vpd");
      pipeline = [&](const SplitPlan &p) {
        const fs::path f = model_dir(ctx, sex, p.run_index) / "backend.vpd";
        if (!fs::exists(f))
          throw DataError("missing " + f.string() + " (run train first)");
        const Backend b = load_backend(f);
        std::map<std::string, double> scores;
        for (const auto *group : {&p.test_pd, &p.test_hc})
          for (const auto &s : *group) {
            const auto xs = select_xvectors(*table, {s}, false);
            if (xs.empty())
              throw DataError("subject " + s + " has no x-vectors");
            scores[s] =
                classify_subject(xs, b, cfg.sigmoid_slope, s).final_score;
          }
        return scores;
      };
    }

    SexReport rep;
    rep.sex = sex;
    rep.dir = sdir;
    rep.scores = run_experiment(c.subjects, plans, pipeline, cfg.threads);
    std::map<std::string, double> finals;
    for (const auto &s : rep.scores.subjects) finals[s.subject.id] = s.final_score;
    const auto ls = labeled_scores(finals, c.labels);
    rep.det = det_curve(ls);
    if (compare_simple) rep.simple = simple_model_eval(rep.scores.runs, c.labels);

    std::string csv = audit + "subject,sex,label,final_score,n_tests\n";
    for (const auto &s : rep.scores.subjects)
      csv += s.subject.id + "," + std::string(to_string(sex)) + "," +
             std::string(to_string(s.subject.label)) + "," +
             format_double(s.final_score) + "," +
             std::to_string(s.run_scores.size()) + "\n";
    write_text(sdir / "scores.csv", csv);
    auto det_text = [&](const DetCurve &d) {
      std::string t = audit + "fpr,fnr,threshold\n";
      for (const auto &pt : d.points)
        t += format_double(pt.fpr) + "," + format_double(pt.fnr) + "," +
             format_double(pt.threshold) + "\n";
      return t;
    };
    write_text(sdir / "det_curve.csv", det_text(rep.det));
    if (rep.simple) write_text(sdir / "det_curve_simple.csv", det_text(*rep.simple));

    int n_pd = 0, n_hc = 0;
    size_t min_tests = SIZE_MAX, max_tests = 0;
    for (const auto &s : rep.scores.subjects) {
      (s.subject.label == ClassLabel::kPD ? n_pd : n_hc)++;
      min_tests = std::min(min_tests, s.run_scores.size());
      max_tests = std::max(max_tests, s.run_scores.size());
    }
    json summary = {{"config_fingerprint", ctx.fingerprint},
                    {"seed", cfg.seed},
                    {"classifier", std::string(to_string(cfg.classifier))},
                    {"channel", std::string(to_string(cfg.channel))},
                    {"preset", std::string(to_string(cfg.frontend_preset()))},
                    {"sex", std::string(to_string(sex))},
                    {"n_subjects", n_pd + n_hc},
                    {"n_pd", n_pd},
                    {"n_hc", n_hc},
                    {"n_runs", plans.size()},
                    {"train_per_class", splits.at("train_per_class")},
                    {"tests_per_subject", {{"min", min_tests}, {"max", max_tests}}},
                    {"eer_aggregated", rep.det.eer},
                    {"eer_threshold", rep.det.eer_threshold}};
    if (cfg.classifier == Classifier::kGmm)
      summary["gmm_components"] = cfg.num_gmm_components();
    if (rep.simple) summary["eer_simple"] = rep.simple->eer;
    write_json(sdir / "summary.json", summary);
    spdlog::info("evaluate: {} EER {:.4f}{}", sex_dir(sex), rep.det.eer,
                 rep.simple ? fmt::format(" (simple model {:.4f})", rep.simple->eer)
                            : std::string());
    result.reports.push_back(std::move(rep));
  }
  return result;
}

EerResult cmd_det(const fs::path &scores_csv, const fs::path &out_csv) {
  std::istringstream in(read_bytes(scores_csv));
  std::string audit, line;
  std::vector<std::string> header;
  std::vector<LabeledScore> scores;
  int label_col = -1, score_col = -1;
  auto split = [](const std::string &s) {
    std::vector<std::string> f;
    std::stringstream ss(s);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    return f;
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      audit += line + "\n";
      continue;
    }
    const auto f = split(line);
    if (label_col < 0) {
      for (int i = 0; i < static_cast<int>(f.size()); ++i) {
        if (f[i] == "label") label_col = i;
        if (f[i] == "final_score") score_col = i;
      }
      if (label_col < 0 || score_col < 0)
        throw DataError(scores_csv.string() +
                        ": needs 'label' and 'final_score' columns");
      continue;
    }
    if (static_cast<int>(f.size()) <= std::max(label_col, score_col))
      throw DataError(scores_csv.string() + ": short row '" + line + "'");
    double v;
    try {
      v = std::stod(f[score_col]);
    } catch (const std::exception &) {
      throw DataError(scores_csv.string() + ": bad score '" + f[score_col] + "'");
    }
    scores.push_back({v, parse_class_label(f[label_col]) == ClassLabel::kPD});
  }
  const DetCurve d = det_curve(scores);
  std::string t = audit + "fpr,fnr,threshold\n";
  for (const auto &pt : d.points)
    t += format_double(pt.fpr) + "," + format_double(pt.fnr) + "," +
         format_double(pt.threshold) + "\n";
  write_text(out_csv, t);
  return {d.eer, d.eer_threshold};
}

}  // namespace voicepd
