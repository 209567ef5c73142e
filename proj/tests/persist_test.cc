// tests/persist_test.cc

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

#include <gtest/gtest.h>

#include <fstream>

#include "plda_util.h"
#include "test_util.h"

namespace voicepd {
namespace {

using test::random_matrix;
using test::temp_dir;

std::string slurp(const std::filesystem::path &p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void spit(const std::filesystem::path &p, const std::string &s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

GmmModel small_gmm() {
  Eigen::MatrixXd x = random_matrix(400, 8, 3);
  x.topRows(200).array() += 2.0;
  return train_gmm(x, 5, ClassLabel::kPD, 17);
}

const ArtifactInfo kInfo{"abc123", 42};

TEST(Persist, GmmRoundTripIsIdempotent) {
  const auto dir = temp_dir("persist_gmm");
  const GmmModel m = small_gmm();
  save_gmm(m, kInfo, dir / "a.vpd");
  const GmmModel loaded = load_gmm(dir / "a.vpd");
  save_gmm(loaded, kInfo, dir / "b.vpd");
  EXPECT_EQ(slurp(dir / "a.vpd"), slurp(dir / "b.vpd"));
  EXPECT_EQ(loaded.label, ClassLabel::kPD);
  const Artifact a = read_artifact(dir / "a.vpd");
  EXPECT_EQ(a.config_fingerprint, "abc123");
  EXPECT_EQ(a.seed, 42u);
}

TEST(Persist, GmmLoglikSurvivesFloatStorage) {
  const auto dir = temp_dir("persist_gmm_ll");
  const GmmModel m = small_gmm();
  save_gmm(m, kInfo, dir / "m.vpd");
  const GmmModel loaded = load_gmm(dir / "m.vpd");
  const Eigen::MatrixXd probe = random_matrix(200, 8, 99, 1.5);
  const Eigen::VectorXd before = frame_logliks(m, probe);
  const Eigen::VectorXd after = frame_logliks(loaded, probe);
  for (Eigen::Index i = 0; i < probe.rows(); ++i)
    EXPECT_LE(std::abs(after(i) - before(i)), 1e-5 * std::abs(before(i)))
        << "frame " << i;
}

TEST(Persist, TamperedHeaderShapeIsRejected) {
  const auto dir = temp_dir("persist_tamper");
  save_gmm(small_gmm(), kInfo, dir / "m.vpd");
  std::string bytes = slurp(dir / "m.vpd");
  const std::string from = "\"shape\":[5,8]";
  const size_t pos = bytes.find(from);
  ASSERT_NE(pos, std::string::npos);
  bytes.replace(pos, from.size(), "\"shape\":[5,9]");
  spit(dir / "m.vpd", bytes);
  try {
    load_gmm(dir / "m.vpd");
    FAIL() << "tampered file loaded";
  } catch (const DataError &e) {
    EXPECT_NE(std::string(e.what()).find("shape"), std::string::npos);
  }
}

TEST(Persist, ConsistentButWrongShapeIsRejected) {
  Artifact a = gmm_to_artifact(small_gmm(), kInfo);
  a.meta["dim"] = 7;
  EXPECT_THROW(gmm_from_artifact(parse_artifact(serialize_artifact(a))),
               DataError);
}

TEST(Persist, TruncationIsRejected) {
  const std::string bytes = serialize_artifact(gmm_to_artifact(small_gmm(), kInfo));
  for (size_t cut : {size_t{0}, size_t{5}, size_t{20}, bytes.size() / 2,
                     bytes.size() - 1})
    EXPECT_THROW(parse_artifact(std::string_view(bytes).substr(0, cut)),
                 DataError)
        << "cut " << cut;
  EXPECT_THROW(parse_artifact(bytes + "x"), DataError);
}

TEST(Persist, VersionMismatchIsRejected) {
  Artifact a = gmm_to_artifact(small_gmm(), kInfo);
  a.schema_version = kSchemaVersion + 1;
  EXPECT_THROW(parse_artifact(serialize_artifact(a)), ConfigError);
}

TEST(Persist, WrongKindIsRejected) {
  const Artifact a = gmm_to_artifact(small_gmm(), kInfo);
  EXPECT_THROW(tdnn_from_artifact(a), DataError);
}

TEST(Persist, LittleEndianLayout) {
  Artifact a{"raw", kSchemaVersion, "", 0, nlohmann::json::object(), {}};
  a.tensors.push_back({"x", {2}, {1.0f, -2.0f}});
  const std::string b = serialize_artifact(a);
  ASSERT_EQ(b.substr(0, 8), "VPDTNSR1");
  uint64_t hlen = 0;
  for (int i = 0; i < 8; ++i)
    hlen |= static_cast<uint64_t>(static_cast<unsigned char>(b[8 + i])) << (8 * i);
  const auto header = nlohmann::json::parse(b.substr(16, hlen));
  EXPECT_EQ(header["kind"], "raw");
  // The last four bytes hold -2.0f = 0xc0000000.
  EXPECT_EQ(static_cast<unsigned char>(b[b.size() - 1]), 0xc0);
  EXPECT_EQ(static_cast<unsigned char>(b[b.size() - 2]), 0x00);
  EXPECT_EQ(static_cast<unsigned char>(b[b.size() - 4]), 0x00);
}

TEST(Persist, TdnnRoundTrip) {
  const auto dir = temp_dir("persist_tdnn");
  const TdnnWeights w = init_weights(TdnnConfig::compact(24, 3, 16, 32, 12), 5);
  save_tdnn(w, kInfo, dir / "a.vpd");
  const TdnnWeights loaded = load_tdnn(dir / "a.vpd");
  save_tdnn(loaded, kInfo, dir / "b.vpd");
  EXPECT_EQ(slurp(dir / "a.vpd"), slurp(dir / "b.vpd"));
  ASSERT_EQ(loaded.cfg.frame_layers.size(), w.cfg.frame_layers.size());
  EXPECT_EQ(loaded.cfg.frame_layers[2].offsets, w.cfg.frame_layers[2].offsets);
  const Eigen::MatrixXd x = random_matrix(40, 24, 8);
  const auto o1 = tdnn_forward(w, x), o2 = tdnn_forward(loaded, x);
  EXPECT_LE((o1.xvector - o2.xvector).norm(), 1e-5 * o1.xvector.norm());
}

std::vector<XVector> labelled_xvectors(std::vector<ClassLabel> *labels) {
  std::vector<XVector> xs;
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int s = 0; s < 20; ++s) {
    const ClassLabel l = s % 2 ? ClassLabel::kPD : ClassLabel::kHC;
    Eigen::VectorXd spk(6);
    for (int k = 0; k < 6; ++k) spk(k) = n(rng);
    for (int u = 0; u < 3; ++u) {
      XVector x;
      x.values = spk + 0.3 * Eigen::VectorXd::NullaryExpr(6, [&] { return n(rng); });
      x.values(0) += (l == ClassLabel::kPD ? 2.0 : -2.0);
      x.subject_id = "s" + std::to_string(s);
      xs.push_back(x);
      labels->push_back(l);
    }
  }
  return xs;
}

TEST(Persist, BackendRoundTripForEveryKind) {
  const auto dir = temp_dir("persist_backend");
  std::vector<ClassLabel> labels;
  const auto xs = labelled_xvectors(&labels);
  for (BackendKind k :
       {BackendKind::kCosine, BackendKind::kLdaCosine, BackendKind::kPlda}) {
    BackendOptions opts;
    opts.kind = k;
    const Backend b = train_backend(xs, labels, opts);
    const auto path = dir / (std::string(to_string(k)) + ".vpd");
    save_backend(b, kInfo, path);
    const Backend loaded = load_backend(path);
    save_backend(loaded, kInfo, dir / "again.vpd");
    EXPECT_EQ(slurp(path), slurp(dir / "again.vpd")) << to_string(k);
    EXPECT_EQ(loaded.kind, k);
    for (size_t i = 0; i < 5; ++i)
      EXPECT_NEAR(loaded.similarity_difference(xs[i].values),
                  b.similarity_difference(xs[i].values), 1e-4)
          << to_string(k);
  }
}

}  // namespace
}  // namespace voicepd
