// src/persist.cc

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

#include "voicepd/persist.h"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace voicepd {

namespace {

constexpr std::string_view kMagic = "VPDTNSR1";

// Weights stored as float32 sum to one only up to rounding.
constexpr double kStoredWeightTol = 1e-5;

template <typename T>
void put_le(std::string *out, T v) {
  for (size_t i = 0; i < sizeof(T); ++i)
    out->push_back(static_cast<char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string_view take(uint64_t n) {
    need(n);
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(uint64_t n) const {
    if (n > bytes_.size() - pos_)
      throw DataError("artifact: truncated file");
  }

  std::string_view bytes_;
  size_t pos_ = 0;
};

std::vector<int64_t> shape_from_json(const nlohmann::json &j) {
  if (!j.is_array()) throw DataError("artifact: shape is not an array");
  std::vector<int64_t> s;
  for (const auto &d : j) {
    if (!d.is_number_integer() || d.get<int64_t>() < 0)
      throw DataError("artifact: bad dimension in header");
    s.push_back(d.get<int64_t>());
  }
  return s;
}

std::string shape_string(const std::vector<int64_t> &s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i)
    out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

void expect_kind(const Artifact &a, std::string_view kind) {
  if (a.kind != kind)
    throw DataError("artifact: expected kind '" + std::string(kind) +
                    "', found '" + a.kind + "'");
}

std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

int64_t Tensor::size() const {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

const Tensor &Artifact::tensor(std::string_view name) const {
  for (const auto &t : tensors)
    if (t.name == name) return t;
  throw DataError("artifact '" + kind + "': missing tensor '" +
                  std::string(name) + "'");
}

bool Artifact::has_tensor(std::string_view name) const {
  for (const auto &t : tensors)
    if (t.name == name) return true;
  return false;
}

Tensor to_tensor(std::string name, const Eigen::MatrixXd &m) {
  Tensor t{std::move(name), {m.rows(), m.cols()}, {}};
  t.data.reserve(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      t.data.push_back(static_cast<float>(m(r, c)));
  return t;
}

Tensor to_tensor(std::string name, const Eigen::VectorXd &v) {
  Tensor t{std::move(name), {v.size()}, {}};
  for (Eigen::Index i = 0; i < v.size(); ++i)
    t.data.push_back(static_cast<float>(v(i)));
  return t;
}

Eigen::MatrixXd to_matrix(const Tensor &t, int64_t rows, int64_t cols) {
  if (t.shape != std::vector<int64_t>{rows, cols})
    throw DataError("tensor '" + t.name + "': shape " + shape_string(t.shape) +
                    ", expected " + shape_string({rows, cols}));
  Eigen::MatrixXd m(rows, cols);
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) m(r, c) = t.data[r * cols + c];
  return m;
}

Eigen::VectorXd to_vector(const Tensor &t, int64_t n) {
  if (t.shape != std::vector<int64_t>{n})
    throw DataError("tensor '" + t.name + "': shape " + shape_string(t.shape) +
                    ", expected " + shape_string({n}));
  Eigen::VectorXd v(n);
  for (int64_t i = 0; i < n; ++i) v(i) = t.data[i];
  return v;
}

std::string serialize_artifact(const Artifact &a) {
  nlohmann::json h;
  h["kind"] = a.kind;
  h["schema_version"] = a.schema_version;
  h["config_fingerprint"] = a.config_fingerprint;
  h["seed"] = a.seed;
  h["meta"] = a.meta;
  h["tensors"] = nlohmann::json::array();
  for (const auto &t : a.tensors) {
    if (static_cast<int64_t>(t.data.size()) != t.size())
      throw ConfigError("tensor '" + t.name + "': data does not match shape");
    h["tensors"].push_back({{"name", t.name}, {"shape", t.shape}});
  }
  const std::string header = h.dump();

  std::string out(kMagic);
  put_le<uint64_t>(&out, header.size());
  out += header;
  put_le<uint32_t>(&out, static_cast<uint32_t>(a.tensors.size()));
  for (const auto &t : a.tensors) {
    put_le<uint32_t>(&out, static_cast<uint32_t>(t.name.size()));
    out += t.name;
    put_le<uint32_t>(&out, static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) put_le<uint64_t>(&out, static_cast<uint64_t>(d));
    for (float f : t.data) put_le<uint32_t>(&out, std::bit_cast<uint32_t>(f));
  }
  return out;
}

Artifact parse_artifact(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < kMagic.size() || r.take(kMagic.size()) != kMagic)
    throw DataError("artifact: bad magic");
  const uint64_t header_len = r.get<uint64_t>();
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(r.take(header_len));
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("artifact: bad header: ") + e.what());
  }

  Artifact a;
  try {
    a.schema_version = h.at("schema_version").get<int>();
    if (a.schema_version != kSchemaVersion)
      throw ConfigError("artifact: schema version " +
                        std::to_string(a.schema_version) + " not supported (" +
                        std::to_string(kSchemaVersion) + " expected)");
    a.kind = h.at("kind").get<std::string>();
    a.config_fingerprint = h.at("config_fingerprint").get<std::string>();
    a.seed = h.at("seed").get<uint64_t>();
    a.meta = h.at("meta");
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("artifact: bad header: ") + e.what());
  }
  const nlohmann::json &declared = h.value("tensors", nlohmann::json::array());

  const uint32_t count = r.get<uint32_t>();
  if (count != declared.size())
    throw DataError("artifact: header lists " + std::to_string(declared.size()) +
                    " tensors, file holds " + std::to_string(count));
  for (uint32_t i = 0; i < count; ++i) {
    Tensor t;
    t.name = std::string(r.take(r.get<uint32_t>()));
    const uint32_t rank = r.get<uint32_t>();
    for (uint32_t k = 0; k < rank; ++k)
      t.shape.push_back(static_cast<int64_t>(r.get<uint64_t>()));
    if (declared[i].value("name", "") != t.name ||
        shape_from_json(declared[i].at("shape")) != t.shape)
      throw DataError("artifact: tensor '" + t.name + "' has shape " +
                      shape_string(t.shape) +
                      " but the header declares a different one");
    const int64_t n = t.size();
    if (n < 0 || static_cast<uint64_t>(n) > bytes.size())
      throw DataError("artifact: tensor '" + t.name + "' too large");
    t.data.resize(n);
    for (int64_t k = 0; k < n; ++k) {
      t.data[k] = std::bit_cast<float>(r.get<uint32_t>());
      if (!std::isfinite(t.data[k]))
        throw DataError("artifact: non-finite value in '" + t.name + "'");
    }
    a.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw DataError("artifact: trailing bytes");
  return a;
}

void write_artifact(const Artifact &a, const std::filesystem::path &path) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  const std::string bytes = serialize_artifact(a);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Artifact read_artifact(const std::filesystem::path &path) {
  return parse_artifact(read_file(path));
}

Artifact gmm_to_artifact(const GmmModel &m, const ArtifactInfo &info) {
  m.validate(kStoredWeightTol);
  Artifact a{"gmm", kSchemaVersion, info.config_fingerprint, info.seed,
             {{"label", std::string(to_string(m.label))},
              {"num_components", m.num_components()},
              {"dim", m.dim()}},
             {}};
  a.tensors.push_back(to_tensor("weights", m.weights));
  a.tensors.push_back(to_tensor("means", m.means));
  a.tensors.push_back(to_tensor("variances", m.variances));
  a.tensors.push_back(to_tensor("variance_floor", m.variance_floor));
  return a;
}

GmmModel gmm_from_artifact(const Artifact &a) {
  expect_kind(a, "gmm");
  GmmModel m;
  try {
    m.label = parse_class_label(a.meta.at("label").get<std::string>());
    const int64_t mc = a.meta.at("num_components").get<int64_t>();
    const int64_t d = a.meta.at("dim").get<int64_t>();
    m.weights = to_vector(a.tensor("weights"), mc);
    m.means = to_matrix(a.tensor("means"), mc, d);
    m.variances = to_matrix(a.tensor("variances"), mc, d);
    m.variance_floor = to_vector(a.tensor("variance_floor"), d);
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("gmm artifact: bad meta: ") + e.what());
  }
  try {
    m.validate(kStoredWeightTol);
  } catch (const ConfigError &e) {
    throw DataError(std::string("gmm artifact: ") + e.what());
  }
  return m;
}

nlohmann::json tdnn_config_to_json(const TdnnConfig &cfg) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto &l : cfg.frame_layers)
    layers.push_back({{"offsets", l.offsets}, {"out_dim", l.out_dim}});
  return {{"input_dim", cfg.input_dim},
          {"frame_layers", layers},
          {"embed_dim", cfg.embed_dim},
          {"seg7_dim", cfg.seg7_dim},
          {"n_classes", cfg.n_classes}};
}

TdnnConfig tdnn_config_from_json(const nlohmann::json &j) {
  TdnnConfig cfg;
  try {
    cfg.input_dim = j.at("input_dim").get<int>();
    for (const auto &l : j.at("frame_layers"))
      cfg.frame_layers.push_back(
          {l.at("offsets").get<std::vector<int>>(), l.at("out_dim").get<int>()});
    cfg.embed_dim = j.at("embed_dim").get<int>();
    cfg.seg7_dim = j.at("seg7_dim").get<int>();
    cfg.n_classes = j.at("n_classes").get<int>();
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("tdnn config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

Artifact tdnn_to_artifact(const TdnnWeights &w, const ArtifactInfo &info) {
  w.validate();
  Artifact a{"tdnn", kSchemaVersion, info.config_fingerprint, info.seed,
             {{"config", tdnn_config_to_json(w.cfg)}}, {}};
  for (int i = 0; i < TdnnWeights::kNumLayers; ++i) {
    const std::string name = TdnnWeights::layer_name(i);
    a.tensors.push_back(to_tensor(name + ".w", w.layers[i].w));
    a.tensors.push_back(to_tensor(name + ".b", w.layers[i].b));
  }
  return a;
}

TdnnWeights tdnn_from_artifact(const Artifact &a) {
  expect_kind(a, "tdnn");
  TdnnWeights w;
  if (!a.meta.contains("config")) throw DataError("tdnn artifact: no config");
  try {
    w.cfg = tdnn_config_from_json(a.meta["config"]);
  } catch (const ConfigError &e) {
    throw DataError(std::string("tdnn artifact: ") + e.what());
  }
  // Expected shapes come from a freshly initialized network.
  const TdnnWeights shape = init_weights(w.cfg, 0);
  for (int i = 0; i < TdnnWeights::kNumLayers; ++i) {
    const std::string name = TdnnWeights::layer_name(i);
    const auto &ref = shape.layers[i];
    w.layers.push_back({to_matrix(a.tensor(name + ".w"), ref.w.rows(), ref.w.cols()),
                        to_vector(a.tensor(name + ".b"), ref.b.size())});
  }
  try {
    w.validate();
  } catch (const ConfigError &e) {
    throw DataError(std::string("tdnn artifact: ") + e.what());
  }
  return w;
}

Artifact backend_to_artifact(const Backend &b, const ArtifactInfo &info) {
  const Eigen::Index d = b.centroids.pd.size();
  if (d == 0 || b.centroids.hc.size() != d)
    throw ConfigError("backend: untrained");
  nlohmann::json meta = {{"backend", std::string(to_string(b.kind))},
                         {"dim", d},
                         {"count_pd", b.centroids.count_pd},
                         {"count_hc", b.centroids.count_hc}};
  Artifact a{"backend", kSchemaVersion, info.config_fingerprint, info.seed,
             meta, {}};
  a.tensors.push_back(to_tensor("centroid_pd", b.centroids.pd));
  a.tensors.push_back(to_tensor("centroid_hc", b.centroids.hc));
  if (b.lda) {
    const LdaProjection &l = *b.lda;
    a.meta["lda"] = {{"d_out", l.d_out()}, {"class_ids", l.class_ids}};
    a.tensors.push_back(to_tensor("lda.basis", l.basis));
    a.tensors.push_back(to_tensor("lda.global_mean", l.global_mean));
    a.tensors.push_back(to_tensor("lda.eigenvalues", l.eigenvalues));
    a.tensors.push_back(to_tensor("lda.class_means", l.class_means));
  }
  if (b.plda) {
    const PldaModel &p = *b.plda;
    p.validate();
    a.meta["plda"] = {{"dim", p.dim()},
                      {"r_b", p.F.cols()},
                      {"r_w", p.G.cols()}};
    a.tensors.push_back(to_tensor("plda.mu", p.mu));
    a.tensors.push_back(to_tensor("plda.F", p.F));
    a.tensors.push_back(to_tensor("plda.G", p.G));
    a.tensors.push_back(to_tensor("plda.sigma", p.sigma));
  }
  return a;
}

Backend backend_from_artifact(const Artifact &a) {
  expect_kind(a, "backend");
  Backend b;
  try {
    b.kind = parse_backend_kind(a.meta.at("backend").get<std::string>());
    const int64_t d = a.meta.at("dim").get<int64_t>();
    b.centroids.count_pd = a.meta.at("count_pd").get<int>();
    b.centroids.count_hc = a.meta.at("count_hc").get<int>();
    b.centroids.pd = to_vector(a.tensor("centroid_pd"), d);
    b.centroids.hc = to_vector(a.tensor("centroid_hc"), d);
    if (a.meta.contains("lda")) {
      LdaProjection l;
      const int64_t d_out = a.meta["lda"].at("d_out").get<int64_t>();
      l.class_ids = a.meta["lda"].at("class_ids").get<std::vector<int>>();
      l.basis = to_matrix(a.tensor("lda.basis"), d_out, d);
      l.global_mean = to_vector(a.tensor("lda.global_mean"), d);
      l.eigenvalues = to_vector(a.tensor("lda.eigenvalues"), d_out);
      l.class_means = to_matrix(a.tensor("lda.class_means"),
                                static_cast<int64_t>(l.class_ids.size()), d_out);
      b.lda = std::move(l);
    }
    if (a.meta.contains("plda")) {
      PldaModel p;
      const int64_t pd = a.meta["plda"].at("dim").get<int64_t>();
      const int64_t rb = a.meta["plda"].at("r_b").get<int64_t>();
      const int64_t rw = a.meta["plda"].at("r_w").get<int64_t>();
      if (pd != (b.lda ? b.lda->d_out() : d))
        throw DataError("backend artifact: PLDA dimension does not match");
      p.mu = to_vector(a.tensor("plda.mu"), pd);
      p.F = to_matrix(a.tensor("plda.F"), pd, rb);
      p.G = to_matrix(a.tensor("plda.G"), pd, rw);
      p.sigma = to_vector(a.tensor("plda.sigma"), pd);
      try {
        p.validate();
      } catch (const ConfigError &e) {
        throw DataError(std::string("backend artifact: ") + e.what());
      }
      b.plda = std::move(p);
    }
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("backend artifact: bad meta: ") + e.what());
  }
  if ((b.kind == BackendKind::kCosine) != !b.lda ||
      (b.kind == BackendKind::kPlda) != b.plda.has_value())
    throw DataError("backend artifact: components do not match kind '" +
                    std::string(to_string(b.kind)) + "'");
  return b;
}

void save_gmm(const GmmModel &m, const ArtifactInfo &info,
              const std::filesystem::path &path) {
  write_artifact(gmm_to_artifact(m, info), path);
}

GmmModel load_gmm(const std::filesystem::path &path) {
  return gmm_from_artifact(read_artifact(path));
}

void save_tdnn(const TdnnWeights &w, const ArtifactInfo &info,
               const std::filesystem::path &path) {
  write_artifact(tdnn_to_artifact(w, info), path);
}

TdnnWeights load_tdnn(const std::filesystem::path &path) {
  return tdnn_from_artifact(read_artifact(path));
}

void save_backend(const Backend &b, const ArtifactInfo &info,
                  const std::filesystem::path &path) {
  write_artifact(backend_to_artifact(b, info), path);
}

Backend load_backend(const std::filesystem::path &path) {
  return backend_from_artifact(read_artifact(path));
}

}  // namespace voicepd
