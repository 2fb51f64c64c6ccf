#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include <graphau/pipeline.hpp>

using namespace graphau;

namespace {

AUFrameRecord rec(const std::string& id, const std::string& subj, AUIntensityMap aus,
                  const ModeledAUSet& modeled = ModeledAUSet()) {
  for (int c : {4, 6, 7, 9, 10, 43})
    if (!aus.count(c)) aus[c] = 0;
  return make_record(id, subj, "synthetic:v1;side=16;grid=1;margin=0;noise=0x0p+0;seed=0;aus=",
                     aus, modeled);
}

DatasetManifest manifest_of(std::vector<AUFrameRecord> records) {
  DatasetManifest m;
  m.records = std::move(records);
  m.normalize();
  return m;
}

}  // namespace

TEST_CASE("undersample keeps painful frames and drops inactive ones") {
  auto m = manifest_of({
      rec("f0", "s0", {{4, 2}}),           // pspi 2, active
      rec("f1", "s0", {{12, 1}}),          // pspi 0, active modeled AU
      rec("f2", "s0", {{7, 3}}),           // pspi 3 but no active modeled AU
      rec("f3", "s0", {}),                 // nothing at all
  });
  auto out = undersample(m, 1.0, 1);
  // keep_rate 1: only the no-active-AU exclusion applies
  CHECK(out.records.size() == 2);
  CHECK(out.records[0].frame_id == "f0");
  CHECK(out.records[1].frame_id == "f1");
  CHECK(out.provenance.count("undersample_seed") == 1);
}

TEST_CASE("undersample with no eligible pspi-0 frames is identity") {
  auto m = manifest_of({rec("f0", "s0", {{4, 1}, {6, 2}}), rec("f1", "s1", {{4, 3}})});
  auto out = undersample(m, 0.01, 9);
  CHECK(out.records.size() == 2);
}

TEST_CASE("undersample rejects bad keep rates") {
  auto m = manifest_of({rec("f0", "s0", {{4, 1}})});
  CHECK_THROWS_AS(undersample(m, 0.0, 1), InvalidConfigError);
  CHECK_THROWS_AS(undersample(m, 1.5, 1), InvalidConfigError);
}

TEST_CASE("undersample survivor count sits in the binomial band") {
  std::vector<AUFrameRecord> rs;
  for (int i = 0; i < 10000; ++i)
    rs.push_back(rec("f" + std::to_string(100000 + i), "s0", {{12, 1}}));  // pspi 0, active
  auto m = manifest_of(std::move(rs));
  auto out = undersample(m, 0.1, 4);
  CHECK(out.records.size() >= 850);
  CHECK(out.records.size() <= 1150);
}

TEST_CASE("undersample decisions are frame-keyed, not order-keyed") {
  auto a = manifest_of({rec("f0", "s0", {{12, 1}}), rec("f1", "s0", {{12, 1}}),
                        rec("f2", "s0", {{12, 1}})});
  auto b = manifest_of({rec("f2", "s0", {{12, 1}}), rec("f0", "s0", {{12, 1}}),
                        rec("f1", "s0", {{12, 1}})});
  CHECK(undersample(a, 0.5, 7).records == undersample(b, 0.5, 7).records);
}

TEST_CASE("hybrid merge fills only the fill set") {
  auto m = manifest_of({rec("f0", "s0", {{4, 2}, {12, 1}})});
  std::map<std::string, AUOccurrenceMap> pred{
      {"f0", {{1, 1}, {2, 1}, {4, 0}, {6, 1}, {9, 1}, {12, 0}, {25, 1}, {26, 1}}}};
  auto out = merge_hybrid(m, pred, /*overlap=*/{4, 12}, /*fill=*/{1, 2, 6, 9, 25, 26});
  CHECK(out.is_hybrid());
  const auto& r = out.records[0];
  // overlap bits keep their measured values
  CHECK(r.occurrence.at(4) == 1);
  CHECK(r.occurrence.at(12) == 1);
  // fill bits come from the predictions
  CHECK(r.occurrence.at(1) == 1);
  CHECK(r.occurrence.at(26) == 1);
  REQUIRE(r.predicted_au.has_value());
}

TEST_CASE("hybrid merge degenerate set choices") {
  auto m = manifest_of({rec("f0", "s0", {{4, 2}, {12, 1}})});
  std::map<std::string, AUOccurrenceMap> pred{
      {"f0", {{1, 1}, {2, 1}, {4, 0}, {6, 1}, {9, 1}, {12, 0}, {25, 1}, {26, 1}}}};
  // empty fill set: occurrence unchanged
  auto same = merge_hybrid(m, pred, {1, 2, 4, 6, 9, 12, 25, 26}, {});
  CHECK(same.records[0].occurrence == m.records[0].occurrence);
  // empty overlap set: occurrence fully replaced
  auto repl = merge_hybrid(m, pred, {}, {1, 2, 4, 6, 9, 12, 25, 26});
  CHECK(repl.records[0].occurrence == pred.at("f0"));
}

TEST_CASE("hybrid merge rejects bad partitions and missing predictions") {
  auto m = manifest_of({rec("f0", "s0", {{4, 2}})});
  std::map<std::string, AUOccurrenceMap> pred{
      {"f0", {{1, 0}, {2, 0}, {4, 1}, {6, 0}, {9, 0}, {12, 0}, {25, 0}, {26, 0}}}};
  CHECK_THROWS_AS(merge_hybrid(m, pred, {4, 12}, {1, 2, 4, 6, 9, 25, 26}), OverlappingSetsError);
  CHECK_THROWS_AS(merge_hybrid(m, pred, {4}, {1, 2, 6, 9, 25, 26}), OverlappingSetsError);
  CHECK_THROWS_AS(merge_hybrid(m, {}, {4, 12}, {1, 2, 6, 9, 25, 26}), MissingPredictionError);
}

TEST_CASE("class weights from rates") {
  auto uniform = weights_from_rates({1.0 / 3, 1.0 / 3, 1.0 / 3});
  CHECK(uniform.weights[0] == doctest::Approx(1.0));
  CHECK(uniform.weights[1] == doctest::Approx(1.0));
  CHECK(uniform.weights[2] == doctest::Approx(1.0));

  auto w = weights_from_rates({0.82, 0.15, 0.03});
  CHECK(w.weights[0] == doctest::Approx(0.08876).epsilon(1e-4));
  CHECK(w.weights[1] == doctest::Approx(0.48521).epsilon(1e-4));
  CHECK(w.weights[2] == doctest::Approx(2.42604).epsilon(1e-4));

  CHECK_THROWS_AS(weights_from_rates({0.5, 0.0, 0.5}), EmptyCategoryError);
}

TEST_CASE("class weights always sum to the category count") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> rates{u(rng), u(rng), u(rng)};
    const double total = rates[0] + rates[1] + rates[2];
    for (auto& r : rates) r /= total;
    auto w = weights_from_rates(rates);
    const double sum = w.weights[0] + w.weights[1] + w.weights[2];
    REQUIRE(sum == doctest::Approx(3.0).epsilon(1e-9));
  }
}

TEST_CASE("class weights from a manifest") {
  std::vector<AUFrameRecord> rs;
  for (int i = 0; i < 8; ++i) rs.push_back(rec("a" + std::to_string(i), "s0", {{12, 1}}));
  for (int i = 0; i < 2; ++i) rs.push_back(rec("b" + std::to_string(i), "s0", {{4, 2}}));
  rs.push_back(rec("c0", "s0", {{4, 5}, {6, 5}}));
  auto m = manifest_of(std::move(rs));
  auto w = compute_class_weights(m, WeightScheme::ThreeCat);
  // rates 8/11, 2/11, 1/11 -> inverse-rate weighting, minority largest
  CHECK(w.weights[2] > w.weights[1]);
  CHECK(w.weights[1] > w.weights[0]);
  CHECK(w.weights[0] + w.weights[1] + w.weights[2] == doctest::Approx(3.0));

  auto nopain_only = manifest_of({rec("f0", "s0", {{12, 1}})});
  CHECK_THROWS_AS(compute_class_weights(nopain_only, WeightScheme::ThreeCat),
                  EmptyCategoryError);
}

TEST_CASE("subject-disjoint split") {
  std::vector<AUFrameRecord> rs;
  for (int s = 0; s < 10; ++s)
    for (int f = 0; f < 5; ++f)
      rs.push_back(rec("f" + std::to_string(s * 10 + f), "s" + std::to_string(s), {{4, 1}}));
  auto m = manifest_of(std::move(rs));

  auto split = split_subject_disjoint(m, 0.3, 5);
  std::set<std::string> train_subj, test_subj;
  for (const auto& r : split.train.records) train_subj.insert(r.subject_id);
  for (const auto& r : split.test.records) test_subj.insert(r.subject_id);
  CHECK(test_subj.size() == 3);
  CHECK(train_subj.size() == 7);
  for (const auto& s : test_subj) CHECK(train_subj.count(s) == 0);
  CHECK(split.train.records.size() + split.test.records.size() == m.records.size());

  // determinism
  auto again = split_subject_disjoint(m, 0.3, 5);
  CHECK(again.train.records == split.train.records);
  CHECK(again.test.records == split.test.records);

  // two subjects at 0.5 -> one each side
  auto two = manifest_of({rec("f0", "s0", {{4, 1}}), rec("f1", "s1", {{4, 1}})});
  auto half = split_subject_disjoint(two, 0.5, 3);
  CHECK(half.train.records.size() == 1);
  CHECK(half.test.records.size() == 1);

  auto one = manifest_of({rec("f0", "s0", {{4, 1}})});
  CHECK_THROWS_AS(split_subject_disjoint(one, 0.5, 3), TooFewSubjectsError);
  CHECK_THROWS_AS(split_subject_disjoint(m, 0.0, 3), InvalidConfigError);
}

TEST_CASE("framewise split partitions and is deterministic") {
  std::vector<AUFrameRecord> rs;
  for (int f = 0; f < 200; ++f) rs.push_back(rec("f" + std::to_string(1000 + f), "s0", {{4, 1}}));
  auto m = manifest_of(std::move(rs));
  auto split = split_framewise(m, 0.25, 2);
  CHECK(split.train.records.size() + split.test.records.size() == 200);
  CHECK(split.test.records.size() > 20);
  CHECK(split.test.records.size() < 90);
  auto again = split_framewise(m, 0.25, 2);
  CHECK(again.test.records == split.test.records);
}

TEST_CASE("per-AU positive weights") {
  std::vector<AUFrameRecord> rs;
  for (int i = 0; i < 4; ++i)
    rs.push_back(rec("f" + std::to_string(i), "s0", i < 1 ? AUIntensityMap{{4, 1}}
                                                          : AUIntensityMap{{12, 1}}));
  auto m = manifest_of(std::move(rs));
  auto w = au_positive_weights(m);
  const int idx4 = m.modeled_aus.index_of(4);
  const int idx12 = m.modeled_aus.index_of(12);
  const int idx1 = m.modeled_aus.index_of(1);
  CHECK(w[static_cast<std::size_t>(idx4)] == doctest::Approx(3.0));   // rate 1/4
  CHECK(w[static_cast<std::size_t>(idx12)] == doctest::Approx(1.0 / 3));  // rate 3/4
  CHECK(w[static_cast<std::size_t>(idx1)] == doctest::Approx(1.0));   // degenerate rate 0
}
