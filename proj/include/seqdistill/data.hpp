// Binary sequence datasets (piano-roll style): loading from sparse-index
// JSON, synthetic generation, validation, and round-trip serialization.
// A Dataset is immutable after construction and safe to share across threads.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqdistill/error.hpp"
#include "seqdistill/linalg.hpp"
#include "seqdistill/rng.hpp"

namespace seqdistill {

// One time step: a binary vector of length D. 1 = active (key stroked).
struct Frame {
  std::vector<std::uint8_t> bits;

  std::size_t size() const { return bits.size(); }

  static Frame dense(std::size_t d) { return Frame{std::vector<std::uint8_t>(d, 0)}; }

  // Expands a sparse list of active indices; duplicates are accepted and
  // deduplicated, indices must be < d.
  static Frame from_sparse(const std::vector<std::size_t>& indices, std::size_t d) {
    Frame f = dense(d);
    for (std::size_t idx : indices) {
      if (idx >= d)
        fail_validation("frame index " + std::to_string(idx) +
                        " out of range for dimension " + std::to_string(d));
      f.bits[idx] = 1;
    }
    return f;
  }

  std::vector<std::size_t> to_sparse() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < bits.size(); ++i)
      if (bits[i]) idx.push_back(i);
    return idx;
  }

  Vec to_real() const {
    Vec v(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) v[i] = bits[i] ? 1.0 : 0.0;
    return v;
  }

  bool operator==(const Frame&) const = default;
};

// Ordered frames sharing one dimension; T >= 2 so a next frame always exists.
struct Sequence {
  std::vector<Frame> frames;

  std::size_t length() const { return frames.size(); }
  std::size_t dimension() const { return frames.empty() ? 0 : frames[0].size(); }

  std::vector<Vec> to_real() const {
    std::vector<Vec> out;
    out.reserve(frames.size());
    for (const Frame& f : frames) out.push_back(f.to_real());
    return out;
  }

  bool operator==(const Sequence&) const = default;
};

struct Dataset {
  std::size_t dimension = 0;
  std::vector<Sequence> train;
  std::vector<Sequence> test;
  std::string name;

  bool operator==(const Dataset&) const = default;
};

// Invariant check; returns one entry per violation instead of throwing.
inline std::vector<std::string> validate(const Dataset& ds) {
  std::vector<std::string> out;
  if (ds.dimension == 0) out.push_back("dimension must be positive");
  if (ds.train.empty()) out.push_back("train split is empty");
  auto check_split = [&](const std::vector<Sequence>& split, const char* label) {
    for (std::size_t s = 0; s < split.size(); ++s) {
      const Sequence& seq = split[s];
      std::string where = std::string(label) + "[" + std::to_string(s) + "]";
      if (seq.length() < 2) out.push_back(where + ": T < 2");
      for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        const Frame& f = seq.frames[t];
        if (f.size() != ds.dimension)
          out.push_back(where + ".frame[" + std::to_string(t) + "]: length " +
                        std::to_string(f.size()) + " != dimension " +
                        std::to_string(ds.dimension));
        for (std::size_t i = 0; i < f.bits.size(); ++i)
          if (f.bits[i] > 1)
            out.push_back(where + ".frame[" + std::to_string(t) + "][" +
                          std::to_string(i) + "]: value " +
                          std::to_string(int(f.bits[i])) + " not in {0,1}");
      }
    }
  };
  check_split(ds.train, "train");
  check_split(ds.test, "test");
  return out;
}

namespace detail {

inline std::size_t line_of_offset(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

inline std::vector<Sequence> parse_split(const nlohmann::json& arr, std::size_t d,
                                         const char* label) {
  std::vector<Sequence> out;
  for (std::size_t s = 0; s < arr.size(); ++s) {
    const auto& jseq = arr[s];
    if (!jseq.is_array())
      fail_format(std::string(label) + "[" + std::to_string(s) +
                  "] is not an array of frames");
    Sequence seq;
    for (std::size_t t = 0; t < jseq.size(); ++t) {
      const auto& jframe = jseq[t];
      if (!jframe.is_array())
        fail_format(std::string(label) + "[" + std::to_string(s) + "].frame[" +
                    std::to_string(t) + "] is not an index array");
      std::vector<std::size_t> idx;
      for (const auto& ji : jframe) {
        if (!ji.is_number_integer() || ji.get<long long>() < 0)
          fail_format(std::string(label) + "[" + std::to_string(s) + "].frame[" +
                      std::to_string(t) + "] contains a non-index value");
        idx.push_back(ji.get<std::size_t>());
      }
      for (std::size_t i : idx)
        if (i >= d)
          fail_validation("index " + std::to_string(i) + " >= dimension " +
                          std::to_string(d) + " at " + label + "[" +
                          std::to_string(s) + "].frame[" + std::to_string(t) + "]");
      seq.frames.push_back(Frame::from_sparse(idx, d));
    }
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace detail

// Canonical on-disk form: {"dimension": D, "name": ..., "train": [...],
// "test": [...]}, each frame a sparse array of active indices.
inline Dataset parse_pianoroll(const std::string& text, const std::string& name_hint) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail_format("JSON parse error near line " +
                std::to_string(detail::line_of_offset(text, e.byte)) + ": " +
                e.what());
  }
  if (!j.is_object() || !j.contains("dimension") || !j.contains("train") ||
      !j.contains("test"))
    fail_format("dataset must be an object with dimension/train/test");
  if (!j["dimension"].is_number_integer() || j["dimension"].get<long long>() <= 0)
    fail_format("dimension must be a positive integer");
  Dataset ds;
  ds.dimension = j["dimension"].get<std::size_t>();
  ds.name = j.value("name", name_hint);
  ds.train = detail::parse_split(j["train"], ds.dimension, "train");
  ds.test = detail::parse_split(j["test"], ds.dimension, "test");
  if (ds.train.empty()) fail_validation("train split is empty");
  // Remaining type invariants (e.g. T >= 2) are the validate() report's job;
  // consumers that need them check before use.
  return ds;
}

inline Dataset load_pianoroll(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_missing("cannot open dataset file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string stem = path;
  if (auto slash = stem.find_last_of('/'); slash != std::string::npos)
    stem = stem.substr(slash + 1);
  if (auto dot = stem.find_last_of('.'); dot != std::string::npos)
    stem = stem.substr(0, dot);
  return parse_pianoroll(buf.str(), stem);
}

inline nlohmann::json dataset_to_json(const Dataset& ds) {
  auto split_to_json = [](const std::vector<Sequence>& split) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Sequence& seq : split) {
      nlohmann::json jseq = nlohmann::json::array();
      for (const Frame& f : seq.frames) jseq.push_back(f.to_sparse());
      arr.push_back(std::move(jseq));
    }
    return arr;
  };
  nlohmann::json j;
  j["dimension"] = ds.dimension;
  j["name"] = ds.name;
  j["train"] = split_to_json(ds.train);
  j["test"] = split_to_json(ds.test);
  return j;
}

inline void save_pianoroll(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_missing("cannot write dataset file: " + path);
  out << dataset_to_json(ds).dump(2) << "\n";
}

// Deterministic cycle over n_states distinct binary frames, with optional
// seed-controlled bit-flip noise. Pure function of its arguments.
inline Dataset synth_markov(std::uint64_t seed, std::size_t d, std::size_t n_states,
                            std::size_t t_len, std::size_t n_train,
                            std::size_t n_test, double noise_rate = 0.0) {
  if (d == 0) fail_validation("dimension must be positive");
  if (n_states < 2) fail_validation("n_states must be >= 2");
  if (d < 63 && n_states > (std::size_t(1) << d))
    fail_validation("n_states exceeds 2^D distinct frames");
  if (t_len < 2) fail_validation("T must be >= 2");
  if (n_train == 0) fail_validation("n_train must be >= 1");
  if (noise_rate < 0.0 || noise_rate >= 1.0)
    fail_validation("noise_rate must lie in [0, 1)");

  RngStream state_rng = RngStream::derive(seed, "synth/states");
  std::vector<Frame> states;
  std::set<std::vector<std::uint8_t>> seen;
  while (states.size() < n_states) {
    Frame f = Frame::dense(d);
    for (std::size_t i = 0; i < d; ++i) f.bits[i] = state_rng.bernoulli(0.5) ? 1 : 0;
    if (seen.insert(f.bits).second) states.push_back(std::move(f));
  }

  auto make_split = [&](std::size_t count, const char* tag) {
    std::vector<Sequence> split;
    for (std::size_t s = 0; s < count; ++s) {
      RngStream rng = RngStream::derive(seed, tag, {s});
      std::size_t phase = rng.next_u64() % n_states;
      Sequence seq;
      for (std::size_t t = 0; t < t_len; ++t) {
        Frame f = states[(phase + t) % n_states];
        if (noise_rate > 0.0)
          for (std::size_t i = 0; i < d; ++i)
            if (rng.bernoulli(noise_rate)) f.bits[i] ^= 1;
        seq.frames.push_back(std::move(f));
      }
      split.push_back(std::move(seq));
    }
    return split;
  };

  Dataset ds;
  ds.dimension = d;
  ds.name = "synth-markov-" + std::to_string(seed);
  ds.train = make_split(n_train, "synth/train");
  ds.test = make_split(n_test, "synth/test");
  return ds;
}

}  // namespace seqdistill
