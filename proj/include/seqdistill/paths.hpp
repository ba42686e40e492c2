// Converts network signal flow into the C4.5 training table: for each time
// step the most-fired hidden neuron index per layer, paired with the
// next-step value of one output bit. Also reads/writes the classic
// .names/.data file pair, one line per row: `10,77,34,54,54,0`.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "seqdistill/data.hpp"
#include "seqdistill/dbn.hpp"
#include "seqdistill/error.hpp"

namespace seqdistill {

// One neuron index per layer, in layer order (0-based indices).
struct FiredPath {
  std::vector<std::size_t> indices;

  bool operator==(const FiredPath&) const = default;
};

struct PathRow {
  FiredPath path;
  int label = 0;  // {0,1}

  bool operator==(const PathRow&) const = default;
};

// Categorical table for one output dimension. Attribute column l is named
// layer<l+1> externally; its value set is exactly the set of indices
// observed in the rows.
struct PathDataset {
  std::size_t num_layers = 0;
  std::vector<std::set<std::size_t>> attribute_values;
  std::vector<PathRow> rows;
  std::size_t target_dimension = 0;

  bool operator==(const PathDataset&) const = default;

  void rebuild_attribute_values() {
    attribute_values.assign(num_layers, {});
    for (const PathRow& r : rows)
      for (std::size_t l = 0; l < num_layers; ++l)
        attribute_values[l].insert(r.path.indices[l]);
  }
};

// Argmax per layer; ties break to the lowest index.
inline FiredPath most_fired(const std::vector<Vec>& layer_activations) {
  if (layer_activations.empty()) fail_validation("most_fired: no layers");
  FiredPath p;
  p.indices.reserve(layer_activations.size());
  for (const Vec& a : layer_activations) {
    if (a.empty()) fail_validation("most_fired: empty layer activation");
    p.indices.push_back(static_cast<std::size_t>(
        std::max_element(a.begin(), a.end()) - a.begin()));
  }
  return p;
}

// Fired path at every step of every training sequence, with the full next
// frame as teacher. The unroll is causal, so one pass over each sequence
// yields the same activations a per-prefix forward would.
struct SequencePaths {
  std::vector<FiredPath> paths;  // steps 1..T-1
  std::vector<Frame> teachers;   // frames 2..T
};

inline std::vector<SequencePaths> extract_paths(const RnnDbnModel& model,
                                                const std::vector<Sequence>& split) {
  model.check_chain();
  std::vector<SequencePaths> out(split.size());
  parallel_for(split.size(), [&](std::size_t s) {
    const Sequence& seq = split[s];
    std::vector<Vec> x = seq.to_real();
    std::vector<std::vector<Vec>> acts;  // [layer][step]
    acts.reserve(model.layer_count());
    for (const RnnRbmParams& layer : model.layers) {
      x = propagate_layer(layer, x);
      acts.push_back(x);
    }
    SequencePaths sp;
    for (std::size_t t = 0; t + 1 < seq.length(); ++t) {
      std::vector<Vec> at_step;
      at_step.reserve(model.layer_count());
      for (const auto& layer_acts : acts) at_step.push_back(layer_acts[t]);
      sp.paths.push_back(most_fired(at_step));
      sp.teachers.push_back(seq.frames[t + 1]);
    }
    out[s] = std::move(sp);
  });
  return out;
}

// Table for one output bit: one row per (sequence, step t<T), class =
// v^(t+1)[d]. Rows appear in sequence order.
inline PathDataset build_path_dataset(const RnnDbnModel& model, const Dataset& dataset,
                                      std::size_t target_dimension) {
  if (target_dimension >= dataset.dimension)
    fail_validation("target dimension " + std::to_string(target_dimension) +
                    " out of range for dataset dimension " +
                    std::to_string(dataset.dimension));
  std::vector<SequencePaths> all = extract_paths(model, dataset.train);
  PathDataset pd;
  pd.num_layers = model.layer_count();
  pd.target_dimension = target_dimension;
  for (const SequencePaths& sp : all)
    for (std::size_t i = 0; i < sp.paths.size(); ++i)
      pd.rows.push_back({sp.paths[i], sp.teachers[i].bits[target_dimension] ? 1 : 0});
  pd.rebuild_attribute_values();
  return pd;
}

// ---- .names / .data -----------------------------------------------------

inline void write_c45_files(const PathDataset& pd, const std::string& stem) {
  if (pd.rows.empty()) fail_validation("cannot write an empty path dataset");

  std::ofstream names(stem + ".names", std::ios::binary);
  if (!names) fail_missing("cannot write " + stem + ".names");
  names << "0,1.\n";
  for (std::size_t l = 0; l < pd.num_layers; ++l) {
    names << "layer" << (l + 1) << ": ";
    bool first = true;
    for (std::size_t v : pd.attribute_values[l]) {
      if (!first) names << ",";
      names << v;
      first = false;
    }
    names << ".\n";
  }

  std::ofstream data(stem + ".data", std::ios::binary);
  if (!data) fail_missing("cannot write " + stem + ".data");
  for (const PathRow& r : pd.rows) {
    for (std::size_t l = 0; l < pd.num_layers; ++l) data << r.path.indices[l] << ",";
    data << r.label << "\n";
  }
}

// Inverse of write_c45_files. The file pair does not carry the target
// dimension; the caller supplies it (it is part of the ruleset artifact).
inline PathDataset read_c45_files(const std::string& stem,
                                  std::size_t target_dimension = 0) {
  std::ifstream names(stem + ".names", std::ios::binary);
  if (!names) fail_missing("cannot open " + stem + ".names");
  std::string line;
  if (!std::getline(names, line) || line != "0,1.")
    fail_format(stem + ".names line 1: expected class line '0,1.'");

  PathDataset pd;
  pd.target_dimension = target_dimension;
  std::size_t line_no = 1;
  while (std::getline(names, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::string expect = "layer" + std::to_string(pd.num_layers + 1) + ": ";
    if (line.rfind(expect, 0) != 0)
      fail_format(stem + ".names line " + std::to_string(line_no) +
                  ": expected attribute '" + expect + "...'");
    if (line.back() != '.')
      fail_format(stem + ".names line " + std::to_string(line_no) +
                  ": missing trailing period");
    std::string values = line.substr(expect.size(), line.size() - expect.size() - 1);
    std::set<std::size_t> set;
    std::stringstream ss(values);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
        fail_format(stem + ".names line " + std::to_string(line_no) +
                    ": bad value '" + tok + "'");
      set.insert(std::stoull(tok));
    }
    pd.attribute_values.push_back(std::move(set));
    ++pd.num_layers;
  }
  if (pd.num_layers == 0) fail_format(stem + ".names declares no attributes");

  std::ifstream data(stem + ".data", std::ios::binary);
  if (!data) fail_missing("cannot open " + stem + ".data");
  line_no = 0;
  while (std::getline(data, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) cells.push_back(tok);
    if (cells.size() != pd.num_layers + 1)
      fail_format(stem + ".data line " + std::to_string(line_no) + ": expected " +
                  std::to_string(pd.num_layers + 1) + " columns, got " +
                  std::to_string(cells.size()));
    PathRow row;
    for (std::size_t l = 0; l < pd.num_layers; ++l) {
      if (cells[l].empty() ||
          cells[l].find_first_not_of("0123456789") != std::string::npos)
        fail_format(stem + ".data line " + std::to_string(line_no) +
                    ": bad attribute value '" + cells[l] + "'");
      row.path.indices.push_back(std::stoull(cells[l]));
    }
    if (cells.back() != "0" && cells.back() != "1")
      fail_format(stem + ".data line " + std::to_string(line_no) +
                  ": class must be 0 or 1");
    row.label = cells.back() == "1" ? 1 : 0;
    pd.rows.push_back(std::move(row));
  }
  if (pd.rows.empty()) fail_validation(stem + ".data contains no rows");
  return pd;
}

}  // namespace seqdistill
