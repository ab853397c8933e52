// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "eegfmri/io.hpp"
#include "eegfmri/metrics.hpp"
#include "eegfmri/models.hpp"
#include "eegfmri/synthetic.hpp"
#include "fixtures.hpp"

using namespace eegfmri;
using eegfmri::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("eegfmri_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), sizeof(double) * std::size_t(a.data().size())) == 0;
}

SyntheticSpec small_spec() {
  SyntheticSpec s = synthetic_preset("tiny");
  s.individuals = 2;
  s.duration_s = 120;
  return s;
}

}  // namespace

TEST_CASE("tensor files") {
  TempDir dir("tensor");
  const Tensor t = random_tensor({3, 4, 5}, 1);
  write_tensor(dir.path / "t.bin", t);
  CHECK(bit_equal(read_tensor(dir.path / "t.bin"), t));
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");

  const std::string bytes = encode_tensor(t);
  CHECK_THROWS_AS_KIND(decode_tensor(bytes.substr(0, bytes.size() - 3), "x"), ErrorKind::FormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS_KIND(decode_tensor(bad, "x"), ErrorKind::FormatError);
  CHECK_THROWS_AS_KIND(decode_tensor(bytes + "z", "x"), ErrorKind::FormatError);
  try {
    decode_tensor(bytes.substr(0, 10), "cut.bin");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("cut.bin") != std::string::npos);
  }
  CHECK_THROWS(read_tensor(dir.path / "missing.bin"));
}

TEST_CASE("dataset round trip and integrity") {
  TempDir dir("dataset");
  const auto sessions = generate_synthetic(small_spec());
  save_dataset(dir.path, sessions, "{}");
  CHECK(dataset_individuals(dir.path) == std::vector<std::string>{"sub-01", "sub-02"});
  const auto back = load_dataset(dir.path);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].individual_id == sessions[i].individual_id);
    CHECK(bit_equal(back[i].eeg.samples, sessions[i].eeg.samples));
    CHECK(bit_equal(back[i].fmri.volumes, sessions[i].fmri.volumes));
    CHECK(back[i].eeg.sampling_rate_hz == sessions[i].eeg.sampling_rate_hz);
    CHECK(back[i].fmri.tr_seconds == sessions[i].fmri.tr_seconds);
  }
  // flip one payload byte
  const fs::path f = dir.path / "sub-02" / "fmri.bin";
  std::string bytes = read_file(f);
  bytes[bytes.size() - 1] ^= 1;
  write_file(f, bytes);
  try {
    load_dataset(dir.path);
    FAIL("expected a checksum mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ChecksumMismatch);
    CHECK(std::string(e.what()).find("fmri.bin") != std::string::npos);
  }
  CHECK_THROWS(load_dataset(dir.path / "nowhere"));
}

TEST_CASE("synthetic generator") {
  SUBCASE("same spec, same bytes") {
    TempDir a("syn_a"), b("syn_b");
    write_synthetic_dataset(a.path, small_spec());
    write_synthetic_dataset(b.path, small_spec());
    for (const char* rel : {"dataset.json", "coupling.bin", "sub-01/eeg.bin", "sub-02/fmri.bin", "sub-02/session.json"})
      CHECK(read_file(a.path / rel) == read_file(b.path / rel));
    SyntheticSpec other = small_spec();
    other.seed = 1;
    TempDir c("syn_c");
    write_synthetic_dataset(c.path, other);
    CHECK(read_file(a.path / "sub-01/eeg.bin") != read_file(c.path / "sub-01/eeg.bin"));
  }
  SUBCASE("invalid specs") {
    SyntheticSpec s = small_spec();
    s.individuals = 0;
    CHECK_THROWS_AS_KIND(s.validate(), ErrorKind::InvalidSpec);
    s = small_spec();
    s.tr_s = -1;
    CHECK_THROWS_AS_KIND(s.validate(), ErrorKind::InvalidSpec);
    CHECK_THROWS_AS_KIND(synthetic_preset("huge"), ErrorKind::InvalidSpec);
    CHECK_THROWS_AS_KIND(synthetic_spec_from_json(nlohmann::json{{"colour", 1}}), ErrorKind::InvalidSpec);
    CHECK(synthetic_spec_from_json(nlohmann::json{{"preset", "tiny"}, {"channels", 3}}).channels == 3);
  }
  SUBCASE("oddball-like layout loads at the expected timing") {
    SyntheticSpec s = synthetic_preset("oddball_like");
    CHECK(s.individuals == 14);
    s.individuals = 1;
    s.channels = 2;
    s.sampling_rate_hz = 64;
    s.grid = {6, 6, 3};
    TempDir dir("oddball");
    write_synthetic_dataset(dir.path, s);
    const auto back = load_dataset(dir.path);
    REQUIRE(back.size() == 1);
    CHECK(back[0].fmri.time_steps() == 170);
    CHECK(back[0].fmri.tr_seconds == 2.0);
    CHECK(back[0].eeg.length() == std::size_t(340 * 64));
  }
  SUBCASE("spec JSON round trip") {
    const SyntheticSpec s = synthetic_preset("noddi_like");
    CHECK(to_json_value(synthetic_spec_from_json(to_json_value(s))) == to_json_value(s));
    CHECK(s.tr_s == 2.16);
  }
}

TEST_CASE("linear coupling is recoverable by the stored mixing") {
  const SyntheticSpec spec = synthetic_preset("tiny");
  const SyntheticTruth truth = synthetic_truth(spec);
  const PreprocessConfig pp;
  double worst = 1.0;
  for (std::size_t i = 3; i < 5; ++i) {
    const RawSession raw = synthesize_session(spec, truth, i);
    for (const auto& w : preprocess_recording(raw.eeg, raw.fmri, pp))
      worst = std::min(worst, cfv(w.fmri, oracle_predict(spec, truth, i, w.eeg, pp.downsample_factor)));
  }
  CHECK(worst > 0.99);
}

TEST_CASE("slice images") {
  TempDir dir("pgm");
  const Tensor flat = Tensor::full({3, 2, 2}, 7.0);
  const GrayImage c = slice_image(flat, 1);
  CHECK(c.width == 3);
  CHECK(c.height == 2);
  for (auto p : c.pixels) CHECK(p == 128);

  // volume [x=2, y=1, z=1] holding {0, 5}
  const Tensor two({2, 1, 1}, Vector((Vector(2) << 0.0, 5.0).finished()));
  const GrayImage g = slice_image(two, 0);
  CHECK(g.pixels == std::vector<std::uint8_t>{0, 255});

  const Tensor vol = random_tensor({5, 4, 3}, 2);
  emit_slice(vol, 2, dir.path / "sub" / "s.pgm");
  const GrayImage back = read_pgm(dir.path / "sub" / "s.pgm");
  CHECK(back.width == 5);
  CHECK(back.height == 4);
  CHECK(back.pixels == slice_image(vol, 2).pixels);
  CHECK(read_file(dir.path / "sub" / "s.pgm").rfind("P5", 0) == 0);
  CHECK_THROWS_AS_KIND(slice_image(vol, 3), ErrorKind::IndexOutOfRange);
}

TEST_CASE("checkpoint round trip") {
  TempDir dir("ckpt");
  const auto sessions = eegfmri::testing::tiny_sessions(2);
  for (auto p : {Procedure::LCOMB, Procedure::WGAN}) {
    TrainConfig c;
    c.procedure = p;
    c.epochs = 1;
    c.seed = 6;
    c.temporal_encoding = p == Procedure::LCOMB;
    const TrainedModel m = train(sessions, c);
    save_checkpoint(dir.path / "m.efck", m);
    const TrainedModel back = load_checkpoint(dir.path / "m.efck");
    CHECK(back.trained);
    CHECK(back.procedure == p);
    CHECK(back.history.size() == m.history.size());
    const auto pa = m.parameters(), pb = back.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(bit_equal(pa[i], pb[i]));
    const Tensor eeg = sessions[0].windows[0].eeg;
    CHECK(bit_equal(synthesize(m, eeg), synthesize(back, eeg)));
  }
  std::string bytes = read_file(dir.path / "m.efck");
  write_file(dir.path / "cut.efck", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS_KIND(load_checkpoint(dir.path / "cut.efck"), ErrorKind::FormatError);
}
