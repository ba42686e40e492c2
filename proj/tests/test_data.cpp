#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "seqdistill/data.hpp"

using namespace seqdistill;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  std::string path = "test_tmp_" + name;
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("sparse frame expansion") {
  Frame f = Frame::from_sparse({10, 77}, 88);
  REQUIRE(f.size() == 88);
  CHECK(f.bits[10] == 1);
  CHECK(f.bits[77] == 1);
  std::size_t ones = 0;
  for (auto b : f.bits) ones += b;
  CHECK(ones == 2);

  CHECK(Frame::from_sparse({}, 88) == Frame::dense(88));

  // duplicates are tolerated and deduplicated
  Frame dup = Frame::from_sparse({3, 3, 3}, 8);
  CHECK(dup.to_sparse() == std::vector<std::size_t>{3});
}

TEST_CASE("sparse round trip recovers the sorted index set") {
  RngStream rng = RngStream::derive(7, "frames");
  for (int it = 0; it < 50; ++it) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < 32; ++i)
      if (rng.bernoulli(0.3)) idx.push_back(i);
    Frame f = Frame::from_sparse(idx, 32);
    CHECK(f.to_sparse() == idx);  // generated sorted and unique already
  }
}

TEST_CASE("pianoroll loader") {
  SECTION("valid 88-key piano-roll file") {
    std::string path = write_temp(
        "ok.json",
        R"({"dimension": 88, "train": [[[10,77],[5]]], "test": [[[0],[87]]]})");
    Dataset ds = load_pianoroll(path);
    CHECK(ds.dimension == 88);
    CHECK(ds.train.size() == 1);
    CHECK(ds.train[0].frames[0].bits[10] == 1);
    CHECK(ds.train[0].frames[0].bits[77] == 1);
    std::remove(path.c_str());
  }

  SECTION("malformed JSON reports a line") {
    std::string path = write_temp("bad.json", "{\n  \"dimension\": 88,\n  oops\n}");
    try {
      load_pianoroll(path);
      FAIL("expected a format error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::format);
      CHECK(std::string(e.what()).find("line") != std::string::npos);
    }
    std::remove(path.c_str());
  }

  SECTION("index >= dimension names the position") {
    std::string path = write_temp(
        "oob.json", R"({"dimension": 4, "train": [[[1],[4]]], "test": []})");
    try {
      load_pianoroll(path);
      FAIL("expected a validation error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::validation);
      CHECK(std::string(e.what()).find("train[0].frame[1]") != std::string::npos);
    }
    std::remove(path.c_str());
  }

  SECTION("empty train split is rejected") {
    std::string path =
        write_temp("empty.json", R"({"dimension": 4, "train": [], "test": []})");
    try {
      load_pianoroll(path);
      FAIL("expected a validation error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::validation);
    }
    std::remove(path.c_str());
  }

  SECTION("missing file") {
    CHECK_THROWS_AS(load_pianoroll("no_such_file.json"), Error);
  }
}

TEST_CASE("dataset save/load round trip") {
  Dataset ds = synth_markov(11, 6, 3, 5, 4, 2);
  std::string path = "test_tmp_roundtrip.json";
  save_pianoroll(ds, path);
  Dataset back = load_pianoroll(path);
  CHECK(back == ds);
  std::remove(path.c_str());
}

TEST_CASE("synth_markov") {
  SECTION("two states alternate") {
    Dataset ds = synth_markov(1, 4, 2, 6, 3, 1);
    for (const Sequence& seq : ds.train) {
      for (std::size_t t = 2; t < seq.length(); ++t)
        CHECK(seq.frames[t] == seq.frames[t - 2]);
      CHECK_FALSE(seq.frames[0] == seq.frames[1]);
    }
  }

  SECTION("deterministic in its arguments") {
    Dataset a = synth_markov(42, 8, 3, 7, 5, 3);
    Dataset b = synth_markov(42, 8, 3, 7, 5, 3);
    CHECK(a == b);
    Dataset c = synth_markov(43, 8, 3, 7, 5, 3);
    CHECK_FALSE(a == c);
  }

  SECTION("period equals n_states") {
    Dataset ds = synth_markov(5, 6, 3, 7, 4, 2);
    for (const Sequence& seq : ds.train)
      for (std::size_t t = 3; t < seq.length(); ++t)
        CHECK(seq.frames[t] == seq.frames[t - 3]);
  }

  SECTION("parameter bounds") {
    CHECK_THROWS_AS(synth_markov(1, 4, 1, 6, 2, 1), Error);
    CHECK_THROWS_AS(synth_markov(1, 4, 2, 1, 2, 1), Error);
    CHECK_THROWS_AS(synth_markov(1, 2, 5, 6, 2, 1), Error);  // 5 > 2^2
  }

  SECTION("generated datasets validate cleanly") {
    Dataset ds = synth_markov(9, 5, 2, 4, 3, 2, 0.1);
    CHECK(validate(ds).empty());
  }
}

TEST_CASE("validate reports violations with locations") {
  Dataset ds = synth_markov(2, 4, 2, 4, 2, 1);
  CHECK(validate(ds).empty());

  SECTION("non-binary value") {
    ds.train[0].frames[1].bits[2] = 2;
    auto v = validate(ds);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("train[0].frame[1][2]") != std::string::npos);
  }

  SECTION("short sequence") {
    ds.test[0].frames.resize(1);
    auto v = validate(ds);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("T < 2") != std::string::npos);
  }

  SECTION("wrong frame length") {
    ds.train[1].frames[0].bits.push_back(0);
    auto v = validate(ds);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("length 5") != std::string::npos);
  }
}
