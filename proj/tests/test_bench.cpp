#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "seqdistill/bench.hpp"

using namespace seqdistill;

namespace {

// Trained two-cycle pipeline shared across the benchmark tests: model,
// per-dimension rulesets from the real extraction path.
struct Pipeline {
  Dataset ds;
  RnnDbnModel model;
  std::vector<RuleSet> rulesets;

  Pipeline() {
    ds = synth_markov(23, 6, 2, 10, 6, 3);
    TrainHyper hyper;
    hyper.learning_rate = 0.1;
    hyper.epochs = 600;
    hyper.seed = 23;
    StructureConfig config;
    config.gen_threshold = 1e300;
    config.ann_threshold = 1e-12;
    config.layer_threshold = 1e-9;
    config.max_layers = 2;
    config.max_hidden = 32;
    // 24 hidden units: wide enough that distinct inputs fire distinct argmax
    // winners, which the whole distillation premise rests on
    model = stack_train(ds, hyper, config, 24).model;
    for (std::size_t d = 0; d < ds.dimension; ++d) {
      PathDataset pd = build_path_dataset(model, ds, d);
      auto tree = build_tree(pd);
      auto pruned = prune_tree(*tree, pd);
      rulesets.push_back(tree_to_rules(*pruned, d));
    }
  }
};

const Pipeline& pipeline() {
  static Pipeline p;
  return p;
}

std::vector<RuleSet> default_only_rulesets(std::size_t d, int cls) {
  std::vector<RuleSet> sets(d);
  for (std::size_t i = 0; i < d; ++i) {
    sets[i].default_class = cls;
    sets[i].target_dimension = i;
  }
  return sets;
}

std::vector<RuleSet> layer1_rulesets(std::size_t d) {
  std::vector<RuleSet> sets(d);
  for (std::size_t i = 0; i < d; ++i) {
    sets[i].target_dimension = i;
    sets[i].default_class = 0;
    sets[i].rules.push_back({{{0, 0}}, 1, 1.0, 1});
  }
  return sets;
}

}  // namespace

TEST_CASE("predict_network") {
  SECTION("probabilities at exactly 0.5 threshold to zero") {
    RnnDbnModel m;
    RnnRbmParams p;
    p.rbm.w = Mat(3, 2);
    p.rbm.b = Vec(3, 0.0);
    p.rbm.c = Vec(2, 0.0);
    p.u0 = Vec(2, 0.0);
    p.w_uv = Mat(3, 2);
    p.w_uh = Mat(2, 2);
    p.w_vu = Mat(2, 3);
    p.w_uu = Mat(2, 2);
    m.layers.push_back(std::move(p));
    Frame f = predict_network(m, {{1, 0, 1}});
    CHECK(f == Frame::dense(3));
  }

  SECTION("converged two-cycle model predicts the next frame deterministically") {
    const auto& p = pipeline();
    const Sequence& seq = p.ds.test[0];
    auto real = seq.to_real();
    for (std::size_t t = 1; t + 1 < seq.length(); ++t) {
      std::vector<Vec> prefix(real.begin(), real.begin() + t + 1);
      Frame a = predict_network(p.model, prefix);
      Frame b = predict_network(p.model, prefix);
      CHECK(a == b);
      CHECK(a == seq.frames[t + 1]);
    }
  }
}

TEST_CASE("rule predictor laziness") {
  const auto& p = pipeline();

  SECTION("layer-1-only rulesets never touch layer 2") {
    RulePredictor pred(p.model, layer1_rulesets(6));
    CHECK(pred.layers_needed() == 1);
    RuleStateCache cache;
    auto real = p.ds.test[0].to_real();
    for (std::size_t t = 0; t < real.size(); ++t) pred.advance(cache, real[t]);
    CHECK(cache.layer_evaluations == real.size());  // exactly one layer per frame
  }

  SECTION("default-only rulesets evaluate nothing at all") {
    RulePredictor pred(p.model, default_only_rulesets(6, 1));
    CHECK(pred.layers_needed() == 0);
    RuleStateCache cache;
    auto real = p.ds.test[0].to_real();
    Frame f;
    for (std::size_t t = 0; t < real.size(); ++t) {
      pred.advance(cache, real[t]);
      f = pred.classify_current(cache);
    }
    CHECK(cache.layer_evaluations == 0);
    CHECK(f == Frame{std::vector<std::uint8_t>(6, 1)});
  }

  SECTION("one ruleset per dimension is required") {
    std::vector<RuleSet> short_sets = default_only_rulesets(5, 0);
    CHECK_THROWS_AS(RulePredictor(p.model, short_sets), Error);
  }
}

TEST_CASE("rule predictor paths match the extraction pipeline") {
  const auto& p = pipeline();
  // Force evaluation of every layer so the full path is comparable.
  std::vector<RuleSet> deep = layer1_rulesets(6);
  deep[0].rules.push_back({{{1, 0}}, 1, 1.0, 1});
  RulePredictor pred(p.model, deep);
  REQUIRE(pred.layers_needed() == 2);

  auto all = extract_paths(p.model, p.ds.train);
  for (std::size_t s = 0; s < p.ds.train.size(); ++s) {
    RuleStateCache cache;
    auto real = p.ds.train[s].to_real();
    for (std::size_t t = 0; t + 1 < real.size(); ++t) {
      pred.advance(cache, real[t]);
      CHECK(cache.path == all[s].paths[t]);
    }
  }
}

TEST_CASE("predict_rules cache semantics") {
  const auto& p = pipeline();
  RulePredictor pred(p.model, p.rulesets);
  auto real = p.ds.test[0].to_real();

  SECTION("incremental prefixes equal from-scratch evaluation") {
    RuleStateCache warm;
    for (std::size_t t = 0; t < real.size(); ++t) {
      std::vector<Vec> prefix(real.begin(), real.begin() + t + 1);
      Frame incremental = predict_rules(pred, prefix, warm);
      RuleStateCache cold;
      Frame scratch = predict_rules(pred, prefix, cold);
      CHECK(incremental == scratch);
    }
  }

  SECTION("a non-extending prefix resets the cache") {
    RuleStateCache cache;
    std::vector<Vec> p1(real.begin(), real.begin() + 4);
    predict_rules(pred, p1, cache);
    std::vector<Vec> other = p1;
    other[0] = Vec(other[0].size(), 1.0);  // different history
    Frame a = predict_rules(pred, other, cache);
    RuleStateCache fresh;
    Frame b = predict_rules(pred, other, fresh);
    CHECK(a == b);
  }

  SECTION("empty prefix is rejected") {
    RuleStateCache cache;
    CHECK_THROWS_AS(predict_rules(pred, {}, cache), Error);
  }
}

TEST_CASE("rules agree with the network on the trained pipeline") {
  const auto& p = pipeline();
  RulePredictor pred(p.model, p.rulesets);

  std::size_t agree = 0, frames = 0;
  for (const Sequence& seq : p.ds.test) {
    auto real = seq.to_real();
    RuleStateCache cache;
    for (std::size_t t = 0; t + 1 < seq.length(); ++t) {
      std::vector<Vec> prefix(real.begin(), real.begin() + t + 1);
      Frame net = predict_network(p.model, prefix);
      pred.advance(cache, real[t]);
      Frame rules = pred.classify_current(cache);
      agree += net == rules ? 1 : 0;
      ++frames;
    }
  }
  CHECK(double(agree) / double(frames) >= 0.95);
}

TEST_CASE("evaluate") {
  const auto& p = pipeline();

  SECTION("a perfect predictor scores 100/100") {
    EvalReport r = evaluate(
        "network", p.ds.test, [](const Sequence&) {},
        [&](const Sequence& seq, const std::vector<Vec>&, std::size_t t) {
          return seq.frames[t + 1];  // cheat: echo the truth
        });
    CHECK(r.accuracy_percent == 100.0);
    CHECK(r.exact_frame_percent == 100.0);
    CHECK(r.cpu_time_seconds > 0.0);
    std::size_t expect = 0;
    for (const Sequence& s : p.ds.test) expect += s.length() - 1;
    CHECK(r.frames_evaluated == expect);
  }

  SECTION("constant-zero predictor on constant-zero data") {
    Dataset zeros;
    zeros.dimension = 4;
    Sequence z;
    z.frames.assign(5, Frame::dense(4));
    zeros.train = {z};
    zeros.test = {z};
    EvalReport r = evaluate(
        "network", zeros.test, [](const Sequence&) {},
        [&](const Sequence&, const std::vector<Vec>&, std::size_t) {
          return Frame::dense(4);
        });
    CHECK(r.accuracy_percent == 100.0);
  }

  SECTION("empty test split is rejected") {
    CHECK_THROWS_AS(evaluate(
                        "network", std::vector<Sequence>{}, [](const Sequence&) {},
                        [&](const Sequence&, const std::vector<Vec>&, std::size_t) {
                          return Frame::dense(4);
                        }),
                    Error);
  }
}

TEST_CASE("compare") {
  const auto& p = pipeline();
  Comparison c = compare(p.model, p.rulesets, p.ds);

  SECTION("both predictors are accurate on the converged pipeline") {
    CHECK(c.network.accuracy_percent >= 95.0);
    CHECK(c.rules.accuracy_percent >= 95.0);
    CHECK(std::abs(c.network.accuracy_percent - c.rules.accuracy_percent) <= 5.0);
  }

  SECTION("speedup is the ratio of the cpu times") {
    CHECK(c.speedup ==
          Catch::Approx(c.network.cpu_time_seconds / c.rules.cpu_time_seconds));
    CHECK(c.rules.speedup_vs_network == Catch::Approx(c.speedup));
  }

  SECTION("self-comparison lands near parity") {
    EvalReport a = evaluate_network(p.model, p.ds.test);
    EvalReport b = evaluate_network(p.model, p.ds.test);
    double ratio = a.cpu_time_seconds / b.cpu_time_seconds;
    CHECK(ratio > 0.3);
    CHECK(ratio < 3.0);
  }

  SECTION("reports serialize and parse back") {
    nlohmann::json j = comparison_to_json(c);
    EvalReport net = report_from_json(j["without_knowledge"]);
    EvalReport rules = report_from_json(j["with_knowledge"]);
    CHECK(net.predictor == "network");
    CHECK(rules.predictor == "rules");
    CHECK(rules.speedup_vs_network == Catch::Approx(c.speedup));

    std::string text = comparison_to_text(c);
    CHECK(text.find("without knowledge") != std::string::npos);
    CHECK(text.find("with knowledge") != std::string::npos);
    CHECK(text.find("speedup") != std::string::npos);
  }
}

TEST_CASE("rules training-split accuracy is consistent with the trees") {
  const auto& p = pipeline();
  RulePredictor pred(p.model, p.rulesets);

  // Aggregate training accuracy of the per-dimension rulesets over the
  // extracted tables.
  std::size_t tree_hits = 0, tree_total = 0;
  for (std::size_t d = 0; d < p.ds.dimension; ++d) {
    PathDataset pd = build_path_dataset(p.model, p.ds, d);
    for (const PathRow& row : pd.rows) {
      tree_hits += classify(p.rulesets[d], row.path) == row.label ? 1 : 0;
      ++tree_total;
    }
  }

  EvalReport train_eval = evaluate_rules(pred, p.ds.train);
  double rule_acc = train_eval.accuracy_percent / 100.0;
  double tree_acc = double(tree_hits) / double(tree_total);
  CHECK(rule_acc >= tree_acc - 1e-9);
}
