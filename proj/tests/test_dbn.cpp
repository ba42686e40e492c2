#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

#include "seqdistill/dbn.hpp"

using namespace seqdistill;

namespace {

StructureConfig no_edits() {
  StructureConfig c;
  c.gen_threshold = 1e300;  // generation can never fire
  c.ann_threshold = 1e-12;  // annihilation can never fire
  c.layer_threshold = 0.1;
  c.max_hidden = 64;
  return c;
}

RnnDbnModel zero_model(std::size_t d, std::size_t h) {
  RnnDbnModel m;
  RnnRbmParams p;
  p.rbm.w = Mat(d, h);
  p.rbm.b = Vec(d, 0.0);
  p.rbm.c = Vec(h, 0.0);
  p.u0 = Vec(h, 0.0);
  p.w_uv = Mat(d, h);
  p.w_uh = Mat(h, h);
  p.w_vu = Mat(h, d);
  p.w_uu = Mat(h, h);
  m.layers.push_back(std::move(p));
  return m;
}

}  // namespace

TEST_CASE("layer_input") {
  SECTION("layer 1 sees the raw sequence") {
    RnnDbnModel m = zero_model(3, 2);
    std::vector<Vec> seq{{1, 0, 1}, {0, 1, 0}};
    CHECK(layer_input(m, 1, seq) == seq);
  }

  SECTION("zero weights map every frame to 0.5") {
    RnnDbnModel m = zero_model(3, 2);
    RnnRbmParams upper;
    upper.rbm.w = Mat(2, 2);
    upper.rbm.b = Vec(2, 0.0);
    upper.rbm.c = Vec(2, 0.0);
    upper.u0 = Vec(2, 0.0);
    upper.w_uv = Mat(2, 2);
    upper.w_uh = Mat(2, 2);
    upper.w_vu = Mat(2, 2);
    upper.w_uu = Mat(2, 2);
    m.layers.push_back(std::move(upper));

    std::vector<Vec> seq{{1, 0, 1}, {0, 1, 0}};
    auto out = layer_input(m, 2, seq);
    REQUIRE(out.size() == 2);
    CHECK(out[0] == Vec{0.5, 0.5});
    CHECK(out[1] == Vec{0.5, 0.5});
  }

  SECTION("two-layer scalar chain matches hand evaluation") {
    RnnDbnModel m;
    for (int l = 0; l < 2; ++l) {
      RnnRbmParams p;
      p.rbm.w = Mat(1, 1);
      p.rbm.w(0, 0) = 0.5 + l;
      p.rbm.b = {0.0};
      p.rbm.c = {0.1};
      p.u0 = {0.2};
      p.w_uv = Mat(1, 1);
      p.w_uh = Mat(1, 1);
      p.w_uh(0, 0) = 0.3;
      p.w_vu = Mat(1, 1);
      p.w_vu(0, 0) = 0.4;
      p.w_uu = Mat(1, 1);
      m.layers.push_back(std::move(p));
    }
    std::vector<Vec> seq{{1.0}, {0.0}};

    auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    // layer 1
    double u0s = sig(0.2);
    double h10 = sig(0.1 + 0.3 * u0s + 0.5 * 1.0);
    double u11 = sig(0.2 + 0.4 * 1.0);
    double h11 = sig(0.1 + 0.3 * u11 + 0.5 * 0.0);
    // layer 2 runs on (h10, h11)
    double h20 = sig(0.1 + 0.3 * u0s + 1.5 * h10);
    double u21 = sig(0.2 + 0.4 * h10);
    double h21 = sig(0.1 + 0.3 * u21 + 1.5 * h11);

    auto to_l2 = layer_input(m, 2, seq);
    REQUIRE(to_l2.size() == 2);
    CHECK(to_l2[0][0] == Catch::Approx(h10).margin(1e-12));
    CHECK(to_l2[1][0] == Catch::Approx(h11).margin(1e-12));
    auto out = propagate_layer(m.layers[1], to_l2);
    CHECK(out[0][0] == Catch::Approx(h20).margin(1e-12));
    CHECK(out[1][0] == Catch::Approx(h21).margin(1e-12));
  }

  SECTION("layer index bounds") {
    RnnDbnModel m = zero_model(3, 2);
    CHECK_THROWS_AS(layer_input(m, 0, {{1, 0, 1}}), Error);
    CHECK_THROWS_AS(layer_input(m, 2, {{1, 0, 1}}), Error);
  }
}

TEST_CASE("forward") {
  SECTION("one layer reduces to predict_next") {
    Dataset ds = synth_markov(3, 6, 2, 8, 4, 1);
    TrainHyper hyper;
    hyper.learning_rate = 0.05;
    hyper.epochs = 30;
    hyper.seed = 5;
    StructureConfig config = no_edits();
    config.max_layers = 1;
    StackTrainResult r = stack_train(ds, hyper, config);
    REQUIRE(r.model.layer_count() == 1);

    auto prefix = ds.test[0].to_real();
    ForwardTrace tr = forward(r.model, prefix);
    Vec direct = predict_next(r.model.layers[0], prefix);
    CHECK(tr.next_prob == direct);
  }

  SECTION("activation count equals layers x steps") {
    Dataset ds = synth_markov(4, 5, 2, 6, 3, 1);
    TrainHyper hyper;
    hyper.learning_rate = 0.05;
    hyper.epochs = 12;
    hyper.seed = 6;
    StructureConfig config = no_edits();
    config.max_layers = 3;
    config.layer_threshold = 1e-9;  // always stack to the cap
    StackTrainResult r = stack_train(ds, hyper, config);
    REQUIRE(r.model.layer_count() == 3);

    auto prefix = ds.test[0].to_real();
    ForwardTrace tr = forward(r.model, prefix);
    std::size_t vectors = 0;
    for (const auto& layer : tr.activations) vectors += layer.size();
    CHECK(vectors == 3 * prefix.size());
    CHECK(tr.next_prob.size() == 5);
  }

  SECTION("forward is deterministic bitwise") {
    Dataset ds = synth_markov(5, 4, 2, 6, 3, 1);
    TrainHyper hyper;
    hyper.epochs = 8;
    hyper.seed = 7;
    StackTrainResult r = stack_train(ds, hyper, no_edits());
    auto prefix = ds.test[0].to_real();
    ForwardTrace a = forward(r.model, prefix);
    ForwardTrace b = forward(r.model, prefix);
    CHECK(a.next_prob == b.next_prob);
    CHECK(a.activations == b.activations);
  }
}

TEST_CASE("stack_train") {
  Dataset ds = synth_markov(8, 6, 2, 10, 6, 2);

  SECTION("an infinite layer threshold trains exactly one layer") {
    TrainHyper hyper;
    hyper.epochs = 5;
    hyper.seed = 9;
    StructureConfig config = no_edits();
    config.layer_threshold = 1e300;
    config.max_layers = 5;
    StackTrainResult r = stack_train(ds, hyper, config);
    CHECK(r.model.layer_count() == 1);
  }

  SECTION("persistent error stacks to the cap") {
    TrainHyper hyper;
    hyper.epochs = 4;
    hyper.seed = 10;
    StructureConfig config = no_edits();
    config.layer_threshold = 1e-9;
    config.max_layers = 3;
    StackTrainResult r = stack_train(ds, hyper, config);
    CHECK(r.model.layer_count() == 3);
    CHECK(r.traces.size() == 3);
    // two new_layer records
    std::size_t new_layers = 0;
    for (const auto& e : r.model.structure_log)
      if (e.kind == "new_layer") ++new_layers;
    CHECK(new_layers == 2);
    r.model.check_chain();
  }

  SECTION("max_layers=1 is observationally equivalent to plain train") {
    TrainHyper hyper;
    hyper.learning_rate = 0.05;
    hyper.epochs = 10;
    hyper.seed = 11;
    StructureConfig config = no_edits();
    config.max_layers = 1;
    StackTrainResult r = stack_train(ds, hyper, config);

    RngStream init_rng = RngStream::derive(hyper.seed, "init", {0});
    RnnRbmParams p = init_params(6, 6, 6, init_rng);
    std::vector<std::vector<Vec>> seqs;
    for (const Sequence& s : ds.train) seqs.push_back(s.to_real());
    auto trace = train(p, seqs, hyper, 0);

    CHECK(r.traces[0] == trace);
    CHECK(r.model.layers[0].rbm.w.flat() == p.rbm.w.flat());
    CHECK(r.model.layers[0].u0 == p.u0);
  }

  SECTION("deeper stack does not hurt two-cycle prediction") {
    TrainHyper hyper;
    hyper.learning_rate = 0.1;
    hyper.epochs = 400;
    hyper.seed = 12;

    StructureConfig one = no_edits();
    one.max_layers = 1;
    StackTrainResult single = stack_train(ds, hyper, one);

    StructureConfig two = no_edits();
    two.max_layers = 2;
    two.layer_threshold = 1e-9;
    StackTrainResult stacked = stack_train(ds, hyper, two);
    REQUIRE(stacked.model.layer_count() == 2);

    auto accuracy = [&](const RnnDbnModel& m) {
      std::size_t hits = 0, total = 0;
      for (const Sequence& seq : ds.test) {
        auto real = seq.to_real();
        for (std::size_t t = 0; t + 1 < seq.length(); ++t) {
          std::vector<Vec> prefix(real.begin(), real.begin() + t + 1);
          Vec prob = forward(m, prefix).next_prob;
          for (std::size_t i = 0; i < prob.size(); ++i) {
            hits += (prob[i] > 0.5 ? 1 : 0) == int(seq.frames[t + 1].bits[i]);
            ++total;
          }
        }
      }
      return static_cast<double>(hits) / static_cast<double>(total);
    };

    double acc1 = accuracy(single.model);
    double acc2 = accuracy(stacked.model);
    CHECK(acc2 >= acc1 - 0.02);
    CHECK(acc2 >= 0.95);
  }
}

TEST_CASE("model serialization") {
  Dataset ds = synth_markov(13, 5, 2, 8, 4, 2);
  TrainHyper hyper;
  hyper.learning_rate = 0.05;
  hyper.epochs = 6;
  hyper.seed = 14;
  StructureConfig config = no_edits();
  config.max_layers = 2;
  config.layer_threshold = 1e-9;
  StackTrainResult r = stack_train(ds, hyper, config);

  SECTION("round trip is exact and idempotent") {
    nlohmann::json j1 = model_to_json(r.model);
    RnnDbnModel back = model_from_json(j1);
    nlohmann::json j2 = model_to_json(back);
    CHECK(j1.dump() == j2.dump());
    CHECK(back.layer_count() == r.model.layer_count());
    CHECK(back.layers[1].rbm.w.flat() == r.model.layers[1].rbm.w.flat());
  }

  SECTION("file round trip") {
    save_model(r.model, "test_tmp_model.json");
    RnnDbnModel back = load_model("test_tmp_model.json");
    CHECK(model_to_json(back).dump() == model_to_json(r.model).dump());
    std::remove("test_tmp_model.json");
  }

  SECTION("same seed gives byte-identical serialization") {
    StackTrainResult again = stack_train(ds, hyper, config);
    CHECK(model_to_json(again.model).dump() == model_to_json(r.model).dump());
  }

  SECTION("broken dimension chain is rejected") {
    RnnDbnModel bad = r.model;
    bad.layers[1].rbm.b.push_back(0.0);
    bad.layers[1].rbm.w = Mat(6, bad.layers[1].hidden());
    CHECK_THROWS_AS(model_to_json(bad), Error);
  }
}
