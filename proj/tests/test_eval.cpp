#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include <graphau/eval.hpp>
#include <graphau/synth.hpp>

using namespace graphau;

namespace {

ModelConfig tiny_cfg() {
  ModelConfig cfg;
  cfg.n_au = 8;
  cfg.d_au = 16;
  cfg.channels = 16;
  cfg.positions = 9;
  cfg.proj_dim = 9;
  cfg.k_neighbors = 3;
  cfg.image_side = 48;
  cfg.conv_channels = {4, 6, 8};
  return cfg;
}

DatasetManifest tiny_dataset(int frames, std::uint64_t seed,
                             std::array<double, 3> mixture = {0.5, 0.3, 0.2}) {
  SynthConfig s;
  s.side = 48;
  s.frames = frames;
  s.subjects = 2;
  s.seed = seed;
  s.mixture = mixture;
  return synth_generate(s);
}

// parses the raw-count lines beneath the scaled values back into a matrix
ConfusionMatrix parse_rendered_counts(const std::string& text, int categories) {
  ConfusionMatrix cm(categories);
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // legend
  std::getline(in, line);  // header
  for (int i = 0; i < categories; ++i) {
    std::getline(in, line);  // scaled
    std::getline(in, line);  // raw
    std::istringstream row(line);
    for (int j = 0; j < categories; ++j) {
      long long v;
      row >> v;
      cm.at(i, j) = v;
    }
  }
  return cm;
}

}  // namespace

TEST_CASE("confusion tally") {
  auto cm = confusion({0, 1, 1, 0}, {0, 0, 1, 2}, 3);
  CHECK(cm.at(0, 0) == 1);
  CHECK(cm.at(0, 1) == 1);
  CHECK(cm.at(0, 2) == 0);
  CHECK(cm.at(1, 0) == 0);
  CHECK(cm.at(1, 1) == 1);
  CHECK(cm.at(2, 0) == 1);
  CHECK(cm.total() == 4);

  auto empty = confusion({}, {}, 3);
  CHECK(empty.total() == 0);

  CHECK_THROWS_AS(confusion({0}, {0, 1}, 2), LengthMismatchError);
  CHECK_THROWS_AS(confusion({5}, {0}, 3), InvalidConfigError);
}

TEST_CASE("perfect predictions give perfect metrics") {
  auto cm = confusion({0, 1, 2, 2, 1}, {0, 1, 2, 2, 1}, 3);
  auto r = metrics_from_confusion(cm);
  CHECK(r.accuracy == doctest::Approx(100.0));
  CHECK(r.macro_f1 == doctest::Approx(100.0));
  for (const auto& m : r.per_class) {
    CHECK(m.precision == doctest::Approx(100.0));
    CHECK(m.recall == doctest::Approx(100.0));
    CHECK(m.f1 == doctest::Approx(100.0));
  }
}

TEST_CASE("metrics golden example") {
  ConfusionMatrix cm(2);
  cm.at(0, 0) = 50;
  cm.at(0, 1) = 10;
  cm.at(1, 0) = 10;
  cm.at(1, 1) = 30;
  auto r = metrics_from_confusion(cm);
  CHECK(r.per_class[0].precision == doctest::Approx(83.33).epsilon(1e-4));
  CHECK(r.per_class[0].recall == doctest::Approx(83.33).epsilon(1e-4));
  CHECK(r.per_class[0].f1 == doctest::Approx(83.33).epsilon(1e-4));
  CHECK(r.per_class[1].precision == doctest::Approx(75.0));
  CHECK(r.per_class[1].recall == doctest::Approx(75.0));
  CHECK(r.per_class[1].f1 == doctest::Approx(75.0));
  CHECK(r.macro_f1 == doctest::Approx(79.17).epsilon(1e-3));
  CHECK(r.accuracy == doctest::Approx(80.0));
}

TEST_CASE("macro values are exact per-class means") {
  ConfusionMatrix cm(3);
  cm.at(0, 0) = 7;
  cm.at(0, 1) = 3;
  cm.at(1, 1) = 5;
  cm.at(1, 2) = 2;
  cm.at(2, 0) = 1;
  cm.at(2, 2) = 9;
  auto r = metrics_from_confusion(cm);
  double p = 0, rec = 0, f1 = 0;
  for (const auto& m : r.per_class) {
    p += m.precision;
    rec += m.recall;
    f1 += m.f1;
  }
  CHECK(std::abs(r.macro_precision - p / 3) < 1e-9);
  CHECK(std::abs(r.macro_recall - rec / 3) < 1e-9);
  CHECK(std::abs(r.macro_f1 - f1 / 3) < 1e-9);
}

TEST_CASE("degenerate class reports zero with flags") {
  ConfusionMatrix cm(3);
  cm.at(0, 0) = 5;
  cm.at(1, 1) = 5;  // class 2 never appears in labels or predictions
  auto r = metrics_from_confusion(cm);
  CHECK(r.per_class[2].precision == 0.0);
  CHECK(r.per_class[2].recall == 0.0);
  CHECK(r.per_class[2].f1 == 0.0);
  CHECK(r.per_class[2].zero_div_precision);
  CHECK(r.per_class[2].zero_div_recall);
  CHECK(r.per_class[2].zero_div_f1);
  CHECK_FALSE(r.per_class[0].zero_div_f1);
  CHECK_THROWS_AS(metrics_from_confusion(ConfusionMatrix(3)), EmptyMatrixError);
  CHECK_THROWS_AS(metrics_from_confusion(ConfusionMatrix{}), EmptyMatrixError);
}

TEST_CASE("consistent relabeling permutes metrics but not macros") {
  std::vector<int> labels{0, 0, 1, 2, 1, 0, 2, 2, 1, 0};
  std::vector<int> preds{0, 1, 1, 2, 0, 0, 1, 2, 1, 2};
  auto r = metrics_from_confusion(confusion(preds, labels, 3));

  auto perm = [](int x) { return (x + 1) % 3; };
  std::vector<int> labels_p, preds_p;
  for (int x : labels) labels_p.push_back(perm(x));
  for (int x : preds) preds_p.push_back(perm(x));
  auto rp = metrics_from_confusion(confusion(preds_p, labels_p, 3));

  for (int c = 0; c < 3; ++c) {
    CHECK(rp.per_class[static_cast<std::size_t>(perm(c))].f1 ==
          doctest::Approx(r.per_class[static_cast<std::size_t>(c)].f1));
  }
  CHECK(rp.macro_f1 == doctest::Approx(r.macro_f1));
  CHECK(rp.macro_precision == doctest::Approx(r.macro_precision));
  CHECK(rp.accuracy == doctest::Approx(r.accuracy));
}

TEST_CASE("log10 rendering shows scaled values and survives a round trip") {
  ConfusionMatrix cm(3);
  cm.at(0, 0) = 0;
  cm.at(0, 1) = 9;
  cm.at(0, 2) = 99;
  cm.at(1, 0) = 1234;
  cm.at(1, 1) = 1;
  cm.at(2, 2) = 42;
  auto text = render_confusion_log10(cm, {"NoPain", "Mild", "Obvious"});
  CHECK(text.find("0.00") != std::string::npos);  // log10(1+0)
  CHECK(text.find("1.00") != std::string::npos);  // log10(1+9)
  CHECK(text.find("2.00") != std::string::npos);  // log10(1+99)
  CHECK(text.find("NoPain") != std::string::npos);

  auto back = parse_rendered_counts(text, 3);
  CHECK(back.counts == cm.counts);
}

TEST_CASE("heatmap raster covers the scale") {
  ConfusionMatrix cm(2);
  cm.at(0, 0) = 99;
  cm.at(1, 1) = 9;
  Image img = render_confusion_heatmap(cm, 4);
  CHECK(img.rows() == 8 * 8);
  CHECK(img.maxCoeff() == doctest::Approx(1.0f));
  CHECK(img.minCoeff() == 0.0f);
  CHECK(img(0, 0) == doctest::Approx(1.0f));  // the 99 cell saturates
}

TEST_CASE("category names per scheme") {
  CHECK(category_names(WeightScheme::ThreeCat) ==
        std::vector<std::string>{"NoPain", "Mild", "Obvious"});
  CHECK(category_names(WeightScheme::FourCat) ==
        std::vector<std::string>{"NoPain", "Weak", "Mild", "Strong"});
}

TEST_CASE("constant-logit model on an all-NoPain set scores 100") {
  auto cfg = tiny_cfg();
  auto manifest = tiny_dataset(10, 3, {1.0, 0.0, 0.0});
  auto params = zero_params<float>(cfg);
  params.cls_b(0) = 1.0f;  // always predicts NoPain
  auto r = evaluate_model(params, cfg, manifest, WeightScheme::ThreeCat);
  CHECK(r.frames == 10);
  CHECK(r.pain.accuracy == doctest::Approx(100.0));
}

TEST_CASE("constant-logit model matches hand-computed metrics") {
  auto cfg = tiny_cfg();
  // fish a mixed dataset until the label counts are as desired
  auto manifest = tiny_dataset(40, 5);
  std::array<int, 3> counts{0, 0, 0};
  for (const auto& rec : manifest.records) ++counts[static_cast<std::size_t>(rec.label3)];
  REQUIRE(counts[1] > 0);

  auto params = zero_params<float>(cfg);
  params.cls_b(1) = 1.0f;  // always predicts Mild
  auto r = evaluate_model(params, cfg, manifest, WeightScheme::ThreeCat);
  CHECK(r.pain.accuracy ==
        doctest::Approx(100.0 * counts[1] / static_cast<double>(manifest.records.size())));
  CHECK(r.pain.per_class[1].recall == doctest::Approx(100.0));
  CHECK(r.pain.per_class[0].recall == doctest::Approx(0.0));
  // with zero anchors every AU prediction is the degenerate 0
  for (const auto& au : r.per_au) CHECK(au.f1 == 0.0);
}

TEST_CASE("evaluation is deterministic and round trips through json") {
  auto cfg = tiny_cfg();
  auto manifest = tiny_dataset(16, 9);
  auto params = init_params<float>(cfg, 3);
  auto a = evaluate_model(params, cfg, manifest, WeightScheme::ThreeCat);
  auto b = evaluate_model(params, cfg, manifest, WeightScheme::ThreeCat);
  CHECK(eval_result_to_json(a) == eval_result_to_json(b));

  auto back = eval_result_from_json(eval_result_to_json(a));
  CHECK(back.pain.cm.counts == a.pain.cm.counts);
  CHECK(back.pain.macro_f1 == doctest::Approx(a.pain.macro_f1));
  CHECK(back.frames == a.frames);
  CHECK(back.per_au.size() == a.per_au.size());
  CHECK_THROWS_AS(eval_result_from_json("nope"), Error);
}

TEST_CASE("evaluation rejects scheme/model mismatches and empty data") {
  auto cfg = tiny_cfg();
  auto params = zero_params<float>(cfg);
  CHECK_THROWS_AS(evaluate_model(params, cfg, DatasetManifest{}, WeightScheme::ThreeCat),
                  EmptyDatasetError);
  auto manifest = tiny_dataset(4, 1);
  CHECK_THROWS_AS(evaluate_model(params, cfg, manifest, WeightScheme::FourCat),
                  ShapeMismatchError);
}

TEST_CASE("predict_occurrence covers every frame and modeled AU") {
  auto cfg = tiny_cfg();
  auto manifest = tiny_dataset(6, 2);
  auto params = init_params<float>(cfg, 9);
  auto preds = predict_occurrence(params, cfg, manifest);
  CHECK(preds.size() == 6);
  for (const auto& rec : manifest.records) {
    REQUIRE(preds.count(rec.frame_id) == 1);
    const auto& m = preds.at(rec.frame_id);
    CHECK(m.size() == manifest.modeled_aus.size());
    for (const auto& [au, bit] : m) CHECK((bit == 0 || bit == 1));
  }
}

TEST_CASE("text tables carry the headline numbers") {
  ConfusionMatrix cm(2);
  cm.at(0, 0) = 50;
  cm.at(0, 1) = 10;
  cm.at(1, 0) = 10;
  cm.at(1, 1) = 30;
  auto r = metrics_from_confusion(cm);
  auto table = pain_metrics_table(r, {"a", "b"});
  CHECK(table.find("83.33") != std::string::npos);
  CHECK(table.find("75.00") != std::string::npos);
  CHECK(table.find("accuracy") != std::string::npos);

  auto au_table = au_metrics_table({{4, 91.25, 97.5}, {6, 80.0, 90.0}});
  CHECK(au_table.find("AU4") != std::string::npos);
  CHECK(au_table.find("91.25") != std::string::npos);
  CHECK(au_table.find("mean") != std::string::npos);

  auto ab_table = ablation_table({{"full", r}, {"no_gnn", r}});
  CHECK(ab_table.find("full") != std::string::npos);
  CHECK(ab_table.find("no_gnn") != std::string::npos);
}
