// Acceptance gate: one self-contained check per numbered criterion, each
// reporting a single PASS/FAIL line. The oracles here are deliberately
// written as plain loops over std::vector so they share no code with the
// library implementation (only parameter values cross the boundary).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <cstdlib>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <graphau/checkpoint.hpp>
#include <graphau/eval.hpp>
#include <graphau/facs.hpp>
#include <graphau/gradcheck.hpp>
#include <graphau/model.hpp>
#include <graphau/pipeline.hpp>
#include <graphau/synth.hpp>
#include <graphau/train.hpp>

using namespace graphau;

namespace {

struct Outcome {
  int id;
  bool pass;
  std::string detail;
};

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const auto t0 = clock::now();
  return std::chrono::duration<double>(clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. PSPI oracle

Outcome criterion1() {
  int checked = 0;
  for (int a4 = 0; a4 <= 5; ++a4)
    for (int a6 = 0; a6 <= 5; ++a6)
      for (int a7 = 0; a7 <= 5; ++a7)
        for (int a9 = 0; a9 <= 5; ++a9)
          for (int a10 = 0; a10 <= 5; ++a10)
            for (int a43 = 0; a43 <= 1; ++a43) {
              const int expect =
                  a4 + (a6 > a7 ? a6 : a7) + (a9 > a10 ? a9 : a10) + a43;
              const int got = compute_pspi(
                  {{4, a4}, {6, a6}, {7, a7}, {9, a9}, {10, a10}, {43, a43}});
              if (got != expect || got < 0 || got > 16)
                return {1, false, "mismatch at a combination"};
              // raising any constituent must not lower the score
              if (a4 < 5 &&
                  compute_pspi({{4, a4 + 1}, {6, a6}, {7, a7}, {9, a9}, {10, a10}, {43, a43}}) <
                      got)
                return {1, false, "not monotone in AU4"};
              if (a6 < 5 &&
                  compute_pspi({{4, a4}, {6, a6 + 1}, {7, a7}, {9, a9}, {10, a10}, {43, a43}}) <
                      got)
                return {1, false, "not monotone in AU6"};
              if (a10 < 5 &&
                  compute_pspi({{4, a4}, {6, a6}, {7, a7}, {9, a9}, {10, a10 + 1}, {43, a43}}) <
                      got)
                return {1, false, "not monotone in AU10"};
              ++checked;
            }
  if (checked != 15552) return {1, false, "combination count " + std::to_string(checked)};
  return {1, true, "15552 combinations agree with the straight-line formula"};
}

// ---------------------------------------------------------------------------
// 2. Class-weight oracle

Outcome criterion2() {
  auto w = weights_from_rates({0.82, 0.15, 0.03});
  const double expect[3] = {0.08876, 0.48521, 2.42604};
  for (int j = 0; j < 3; ++j)
    if (std::abs(w.weights[static_cast<std::size_t>(j)] - expect[j]) > 1e-5)
      return {2, false, "weight " + std::to_string(j) + " off"};

  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.005, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t c = 3 + static_cast<std::size_t>(t % 2);
    std::vector<double> rates(c);
    double total = 0;
    for (auto& r : rates) total += (r = u(rng));
    for (auto& r : rates) r /= total;
    auto ws = weights_from_rates(rates);
    const double sum = std::accumulate(ws.weights.begin(), ws.weights.end(), 0.0);
    if (std::abs(sum - static_cast<double>(c)) > 1e-9)
      return {2, false, "weights do not sum to C"};
  }
  return {2, true, "(0.82,0.15,0.03) maps to the expected weights; 1000 sums exact"};
}

// ---------------------------------------------------------------------------
// 3. Category boundary table

Outcome criterion3() {
  const bool ok3 = categorize_pain_3(0) == PainCategory3::NoPain &&
                   categorize_pain_3(1) == PainCategory3::Mild &&
                   categorize_pain_3(4) == PainCategory3::Mild &&
                   categorize_pain_3(5) == PainCategory3::Obvious;
  const bool ok4 = categorize_pain_4(0) == PainCategory4::NoPain &&
                   categorize_pain_4(1) == PainCategory4::Weak &&
                   categorize_pain_4(2) == PainCategory4::Mild &&
                   categorize_pain_4(3) == PainCategory4::Strong;
  if (!ok3 || !ok4) return {3, false, "boundary table mismatch"};
  return {3, true, "3- and 4-category boundaries all map correctly"};
}

// ---------------------------------------------------------------------------
// 4. Finite-difference gradient checks

Outcome criterion4() {
  double worst = 0;
  std::string worst_at;
  for (auto stage : all_grad_stages())
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto rep = grad_check(stage, seed * 101);
      if (rep.max_rel_err > worst) {
        worst = rep.max_rel_err;
        worst_at = to_string(stage) + "/seed" + std::to_string(seed);
      }
    }
  char buf[128];
  std::snprintf(buf, sizeof buf, "worst relative error %.2e at %s", worst, worst_at.c_str());
  if (worst >= 1e-4) return {4, false, buf};
  return {4, true, std::string("8 stages x 5 seeds; ") + buf};
}

// ---------------------------------------------------------------------------
// 5. KNN graph oracle

Outcome criterion5() {
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<float> u(-2.0f, 2.0f);
  const int n = 8, k = 3;
  for (int trial = 0; trial < 500; ++trial) {
    Mat<float> H(n, 16);
    for (Eigen::Index i = 0; i < H.size(); ++i) H.data()[i] = u(rng);
    Mat<float> A = build_knn_graph(H, k);

    for (int i = 0; i < n; ++i) {
      // brute-force oracle: plain dot products + stable sort
      std::vector<std::pair<float, int>> sims;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        float dot = 0;
        for (int c = 0; c < 16; ++c) dot += H(i, c) * H(j, c);
        sims.emplace_back(dot, j);
      }
      std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      std::set<int> expect;
      for (int e = 0; e < k; ++e) expect.insert(sims[static_cast<std::size_t>(e)].second);

      float row_sum = 0;
      int edges = 0;
      for (int j = 0; j < n; ++j) {
        row_sum += A(i, j);
        if (A(i, j) != 0.0f) {
          ++edges;
          if (!expect.count(j)) return {5, false, "edge set differs from the oracle"};
          if (std::abs(A(i, j) - 1.0f / k) > 1e-7f) return {5, false, "edge weight not 1/K"};
        }
      }
      if (A(i, i) != 0.0f) return {5, false, "nonzero diagonal"};
      if (edges != k) return {5, false, "row does not have exactly K edges"};
      if (std::abs(row_sum - 1.0f) > 1e-6f) return {5, false, "row sum not 1"};
    }
  }
  return {5, true, "500 random matrices match the brute-force oracle exactly"};
}

// ---------------------------------------------------------------------------
// 6. Composed forward vs an independent straight-line script

using VecD = std::vector<double>;
using MatD = std::vector<std::vector<double>>;

// naive 3x3 stride-2 pad-1 convolution + relu, channel-last rows
MatD naive_conv(const MatD& in, int side, const Mat<double>& W, const Vec<double>& b) {
  const int cin = static_cast<int>(in[0].size());
  const int cout = static_cast<int>(W.cols());
  const int so = (side + 1) / 2;
  MatD out(static_cast<std::size_t>(so) * so, VecD(static_cast<std::size_t>(cout)));
  for (int oy = 0; oy < so; ++oy)
    for (int ox = 0; ox < so; ++ox)
      for (int co = 0; co < cout; ++co) {
        double v = b(co);
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const int iy = oy * 2 + ky - 1, ix = ox * 2 + kx - 1;
            if (iy < 0 || iy >= side || ix < 0 || ix >= side) continue;
            for (int ci = 0; ci < cin; ++ci)
              v += in[static_cast<std::size_t>(iy) * side + ix][static_cast<std::size_t>(ci)] *
                   W((ky * 3 + kx) * cin + ci, co);
          }
        out[static_cast<std::size_t>(oy) * so + ox][static_cast<std::size_t>(co)] =
            v > 0 ? v : 0;
      }
  return out;
}

Outcome criterion6() {
  ModelConfig cfg;
  cfg.n_au = 8;
  cfg.d_au = 16;
  cfg.channels = 24;
  cfg.positions = 4;   // conv output is already 2x2: no pooling resample
  cfg.proj_dim = 4;
  cfg.k_neighbors = 3;
  cfg.image_side = 32;
  cfg.conv_channels = {6, 8, 10};
  cfg.validate();

  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto params = init_params<double>(cfg, 600 + static_cast<std::uint64_t>(trial));
    std::mt19937_64 rng(static_cast<std::uint64_t>(trial));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    // non-trivial batch-norm running statistics
    for (int j = 0; j < cfg.d_au; ++j) {
      params.bn_mean(j) = u(rng) - 0.5;
      params.bn_var(j) = 0.5 + u(rng);
    }
    Mat<double> image(static_cast<Eigen::Index>(cfg.image_side) * cfg.image_side, 3);
    for (Eigen::Index i = 0; i < image.size(); ++i) image.data()[i] = u(rng);

    auto lib = forward(image, params, cfg, RunMode::Eval);

    // ---- straight-line re-evaluation from here on ----
    MatD act(static_cast<std::size_t>(cfg.image_side) * cfg.image_side, VecD(3));
    for (Eigen::Index p = 0; p < image.rows(); ++p)
      for (int c = 0; c < 3; ++c)
        act[static_cast<std::size_t>(p)][static_cast<std::size_t>(c)] = image(p, c);
    int side = cfg.image_side;
    for (int l = 0; l < 4; ++l) {
      act = naive_conv(act, side, params.conv_w[static_cast<std::size_t>(l)],
                       params.conv_b[static_cast<std::size_t>(l)]);
      side = (side + 1) / 2;
    }
    const int P = cfg.positions, D = cfg.channels, n = cfg.n_au, d = cfg.d_au;

    VecD pooled(static_cast<std::size_t>(D), 0.0);
    for (int p = 0; p < P; ++p)
      for (int c = 0; c < D; ++c)
        pooled[static_cast<std::size_t>(c)] +=
            act[static_cast<std::size_t>(p)][static_cast<std::size_t>(c)] / P;

    MatD Ha(static_cast<std::size_t>(n), VecD(static_cast<std::size_t>(d)));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) {
        double v = params.head_b[static_cast<std::size_t>(i)](j);
        for (int c = 0; c < D; ++c)
          v += params.head_w[static_cast<std::size_t>(i)](j, c) * pooled[static_cast<std::size_t>(c)];
        Ha[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = v > 0 ? v : 0;
      }

    // directed KNN adjacency by feature dot product
    MatD A(static_cast<std::size_t>(n), VecD(static_cast<std::size_t>(n), 0.0));
    for (int i = 0; i < n; ++i) {
      std::vector<std::pair<double, int>> sims;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        double dot = 0;
        for (int c = 0; c < d; ++c)
          dot += Ha[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] *
                 Ha[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
        sims.emplace_back(dot, j);
      }
      std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      for (int e = 0; e < cfg.k_neighbors; ++e)
        A[static_cast<std::size_t>(i)][static_cast<std::size_t>(sims[static_cast<std::size_t>(e)].second)] =
            1.0 / cfg.k_neighbors;
    }

    // graph layer with eval-mode batch norm, then residual relu
    MatD Hap(static_cast<std::size_t>(n), VecD(static_cast<std::size_t>(d)));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) {
        double agg = params.fc2_b(j);
        for (int c = 0; c < d; ++c)
          agg += params.fc2_w(j, c) * Ha[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
        for (int s = 0; s < n; ++s) {
          if (A[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)] == 0.0) continue;
          double f1 = params.fc1_b(j);
          for (int c = 0; c < d; ++c)
            f1 += params.fc1_w(j, c) * Ha[static_cast<std::size_t>(s)][static_cast<std::size_t>(c)];
          agg += A[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)] * f1;
        }
        const double xhat = (agg - params.bn_mean(j)) / std::sqrt(params.bn_var(j) + 1e-5);
        const double y = params.bn_gamma(j) * xhat + params.bn_beta(j);
        const double res = Ha[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] + y;
        Hap[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = res > 0 ? res : 0;
      }

    // nonnegative cosine against the anchors
    VecD p_oracle(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
      double uu = 0, vv = 0, uv = 0;
      for (int j = 0; j < d; ++j) {
        const double hv = Hap[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        const double sv = params.anchors(i, j) > 0 ? params.anchors(i, j) : 0.0;
        uu += hv * hv;
        vv += sv * sv;
        uv += hv * sv;
      }
      if (uu > 0 && vv > 0) p_oracle[static_cast<std::size_t>(i)] = uv / std::sqrt(uu * vv);
    }

    // projections, infusion, pooled-graph branch, classifier
    VecD ha_mean(static_cast<std::size_t>(d), 0.0), h_g(static_cast<std::size_t>(d), 0.0);
    for (int j = 0; j < d; ++j)
      for (int i = 0; i < n; ++i) {
        ha_mean[static_cast<std::size_t>(j)] +=
            Hap[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] / n;
        h_g[static_cast<std::size_t>(j)] +=
            Hap[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      }
    const int pj = cfg.proj_dim;
    VecD ha_p(static_cast<std::size_t>(pj)), hg_p(static_cast<std::size_t>(pj));
    for (int r = 0; r < pj; ++r) {
      double va = params.proj_a_b(r), vg = params.proj_g_b(r);
      for (int j = 0; j < d; ++j) {
        va += params.proj_a_w(r, j) * ha_mean[static_cast<std::size_t>(j)];
        vg += params.proj_g_w(r, j) * h_g[static_cast<std::size_t>(j)];
      }
      ha_p[static_cast<std::size_t>(r)] = va > 0 ? va : 0;
      hg_p[static_cast<std::size_t>(r)] = vg > 0 ? vg : 0;
    }
    VecD h_ab(static_cast<std::size_t>(pj));
    for (int r = 0; r < pj; ++r) {
      double q = 0;
      for (int p = 0; p < P; ++p) {
        double hb = params.proj_b_b(r);
        for (int c = 0; c < D; ++c)
          hb += params.proj_b_w(r, c) * act[static_cast<std::size_t>(p)][static_cast<std::size_t>(c)];
        if (hb < 0) hb = 0;
        q += hb * ha_p[static_cast<std::size_t>(p)];
      }
      h_ab[static_cast<std::size_t>(r)] = q > 0 ? q : 0;
    }
    for (int y = 0; y < cfg.d_pain; ++y) {
      double v = params.cls_b(y);
      for (int r = 0; r < pj; ++r) {
        v += params.cls_w(y, r) * h_ab[static_cast<std::size_t>(r)];
        v += params.cls_w(y, pj + r) * hg_p[static_cast<std::size_t>(r)];
      }
      worst = std::max(worst, std::abs(v - lib.logits(y)));
    }
    for (int i = 0; i < n; ++i)
      worst = std::max(worst, std::abs(p_oracle[static_cast<std::size_t>(i)] - lib.p(i)));
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "max |difference| %.2e over 100 inputs", worst);
  if (worst >= 1e-6) return {6, false, buf};
  return {6, true, buf};
}

// ---------------------------------------------------------------------------
// 7. Metrics golden tests

Outcome criterion7() {
  ConfusionMatrix cm(2);
  cm.at(0, 0) = 50;
  cm.at(0, 1) = 10;
  cm.at(1, 0) = 10;
  cm.at(1, 1) = 30;
  auto r = metrics_from_confusion(cm);
  auto near = [](double a, double b) { return std::abs(a - b) < 0.01; };
  if (!near(r.per_class[0].precision, 83.33) || !near(r.per_class[0].recall, 83.33) ||
      !near(r.per_class[0].f1, 83.33) || !near(r.per_class[1].precision, 75.0) ||
      !near(r.per_class[1].recall, 75.0) || !near(r.per_class[1].f1, 75.0) ||
      !near(r.macro_f1, 79.17))
    return {7, false, "hand-computed 2x2 example does not reproduce"};

  std::mt19937_64 rng(7);
  std::uniform_int_distribution<long long> cnt(0, 500);
  for (int t = 0; t < 200; ++t) {
    ConfusionMatrix c3(3);
    for (auto& v : c3.counts) v = cnt(rng);
    auto m = metrics_from_confusion(c3);
    double p = 0, rc = 0, f1 = 0;
    for (const auto& pc : m.per_class) {
      p += pc.precision;
      rc += pc.recall;
      f1 += pc.f1;
    }
    if (std::abs(m.macro_precision - p / 3) > 1e-9 || std::abs(m.macro_recall - rc / 3) > 1e-9 ||
        std::abs(m.macro_f1 - f1 / 3) > 1e-9)
      return {7, false, "macro values are not exact per-class means"};

    // the log-scale rendering must carry the raw counts losslessly
    auto text = render_confusion_log10(c3, {"a", "b", "c"});
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    for (int i = 0; i < 3; ++i) {
      std::getline(in, line);  // scaled row
      std::getline(in, line);  // raw row
      std::istringstream row(line);
      for (int j = 0; j < 3; ++j) {
        long long v = -1;
        row >> v;
        if (v != c3.at(i, j)) return {7, false, "rendering does not round-trip raw counts"};
      }
    }
  }
  return {7, true, "golden 2x2 example, exact macros and lossless rendering"};
}

// ---------------------------------------------------------------------------
// 8. Undersampling statistics

Outcome criterion8() {
  DatasetManifest m;
  for (int i = 0; i < 10000; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "z%05d", i);
    m.records.push_back(make_record(id, "s0", "none",
                                    {{4, 0}, {6, 0}, {7, 0}, {9, 0}, {10, 0}, {43, 0}, {12, 1}},
                                    ModeledAUSet()));
  }
  for (int i = 0; i < 500; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "p%05d", i);
    m.records.push_back(make_record(id, "s0", "none",
                                    {{4, 2}, {6, 0}, {7, 0}, {9, 0}, {10, 0}, {43, 0}},
                                    ModeledAUSet()));
  }
  for (int i = 0; i < 300; ++i) {  // painful, but nothing in the modeled set is active
    char id[16];
    std::snprintf(id, sizeof id, "q%05d", i);
    m.records.push_back(make_record(id, "s0", "none",
                                    {{4, 0}, {6, 0}, {7, 3}, {9, 0}, {10, 0}, {43, 0}},
                                    ModeledAUSet()));
  }
  m.normalize();

  auto out = undersample(m, 0.1, 99);
  std::size_t survivors0 = 0, painful = 0, inactive = 0;
  for (const auto& r : out.records) {
    if (r.frame_id[0] == 'z') ++survivors0;
    if (r.frame_id[0] == 'p') ++painful;
    if (r.frame_id[0] == 'q') ++inactive;
  }
  if (painful != 500) return {8, false, "painful active frames were dropped"};
  if (inactive != 0) return {8, false, "frames with no active modeled AU survived"};
  if (survivors0 < 850 || survivors0 > 1150)
    return {8, false, "survivor count " + std::to_string(survivors0) +
                          " outside the binomial band [850,1150]"};
  return {8, true, std::to_string(survivors0) + "/10000 majority survivors; " +
                       "all painful kept, all inactive removed"};
}

// ---------------------------------------------------------------------------
// Shared training helpers for criteria 9-11

ModelConfig desk_model(int image_side, int positions, int channels, int d_au,
                       std::array<int, 3> conv) {
  ModelConfig cfg;
  cfg.n_au = 8;
  cfg.d_au = d_au;
  cfg.channels = channels;
  cfg.positions = positions;
  cfg.proj_dim = positions;
  cfg.k_neighbors = 3;
  cfg.image_side = image_side;
  cfg.conv_channels = conv;
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// 9. End-to-end synthetic regression (two-stage protocol)

Outcome criterion9() {
  SynthConfig synth;  // shipped defaults: 2500 frames, 82/15/3 mixture
  auto data = synth_generate(synth);
  auto split = split_subject_disjoint(data, 0.2, 7);  // 2000 train / 500 test

  auto cfg = desk_model(96, 36, 64, 64, {8, 12, 16});

  auto sft_cfg = TrainConfig::au_sft_defaults();
  sft_cfg.epochs = 5;
  sft_cfg.lr = 1e-3;
  sft_cfg.batch_size = 32;
  sft_cfg.seed = 7;
  auto sft_train = undersample(split.train, 0.5, 7);
  auto stage1 = pretrain_au(init_params<float>(cfg, 7), cfg, sft_train, sft_cfg);

  auto pain_cfg = TrainConfig::pain_defaults();
  pain_cfg.epochs = 8;
  pain_cfg.lr = 1e-3;
  pain_cfg.batch_size = 32;
  pain_cfg.seed = 7;
  pain_cfg.val_fraction = 0.0;
  auto pain_train = undersample(split.train, 0.5, 8);
  auto stage2 =
      train_pain(init_params<float>(cfg, 8), cfg, pain_train, pain_cfg, &stage1);

  auto result = evaluate_model(stage2.params, cfg, split.test, WeightScheme::ThreeCat);
  char buf[128];
  std::snprintf(buf, sizeof buf, "test macro-F1 %.2f, accuracy %.2f on %zu frames",
                result.pain.macro_f1, result.pain.accuracy, result.frames);
  if (result.pain.macro_f1 < 85.0 || result.pain.accuracy < 90.0) return {9, false, buf};
  return {9, true, buf};
}

// ---------------------------------------------------------------------------
// 10. Imbalance-handling trend: inverse-rate weights vs uniform weights

Outcome criterion10() {
  SynthConfig synth;
  synth.side = 48;
  synth.frames = 700;
  synth.subjects = 7;
  synth.seed = 10;
  auto data = synth_generate(synth);
  auto split = split_subject_disjoint(data, 0.3, 10);
  auto cfg = desk_model(48, 9, 32, 32, {6, 8, 10});

  std::vector<double> weighted_recall, uniform_recall;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (int mode = 0; mode < 2; ++mode) {
      auto tc = TrainConfig::pain_defaults();
      tc.epochs = 12;
      tc.lr = 1e-3;
      tc.batch_size = 32;
      tc.seed = seed;
      tc.val_fraction = 0.0;
      if (mode == 1) tc.class_weights = {1.0, 1.0, 1.0};
      auto ckpt = train_pain(init_params<float>(cfg, seed), cfg, split.train, tc);
      auto result = evaluate_model(ckpt.params, cfg, split.test, WeightScheme::ThreeCat);
      (mode == 0 ? weighted_recall : uniform_recall)
          .push_back(result.pain.per_class[2].recall);
    }
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const double mw = median(weighted_recall), mu = median(uniform_recall);
  char buf[128];
  std::snprintf(buf, sizeof buf,
                "median Obvious recall: %.2f weighted vs %.2f uniform (5 seeds)", mw, mu);
  if (!(mw > mu)) return {10, false, buf};
  return {10, true, buf};
}

// ---------------------------------------------------------------------------
// 11. Ablation trend: full >= no_gnn, full >> backbone_only

Outcome criterion11() {
  SynthConfig synth;
  synth.frames = 600;
  synth.subjects = 6;
  synth.seed = 11;
  synth.mixture = {0.4, 0.35, 0.25};  // co-occurrence structure matters, not imbalance
  auto data = synth_generate(synth);
  auto split = split_subject_disjoint(data, 0.3, 11);

  std::vector<double> f1_full, f1_nognn, f1_backbone;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (auto mode : {AblationMode::Full, AblationMode::NoGnn, AblationMode::BackboneOnly}) {
      auto cfg = desk_model(96, 36, 16, 32, {4, 6, 8});
      cfg.ablation = mode;
      auto tc = TrainConfig::pain_defaults();
      tc.epochs = 10;
      tc.lr = 1e-3;
      tc.batch_size = 32;
      tc.seed = seed;
      tc.val_fraction = 0.0;
      auto ckpt = train_pain(init_params<float>(cfg, seed), cfg, split.train, tc);
      auto result = evaluate_model(ckpt.params, cfg, split.test, WeightScheme::ThreeCat);
      if (mode == AblationMode::Full) f1_full.push_back(result.pain.macro_f1);
      if (mode == AblationMode::NoGnn) f1_nognn.push_back(result.pain.macro_f1);
      if (mode == AblationMode::BackboneOnly) f1_backbone.push_back(result.pain.macro_f1);
    }
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const double mf = median(f1_full), mn = median(f1_nognn), mb = median(f1_backbone);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "median macro-F1: full %.2f, no_gnn %.2f, backbone_only %.2f (5 seeds)", mf, mn,
                mb);
  if (!(mf >= mn) || !(mf - mb >= 5.0)) return {11, false, buf};
  return {11, true, buf};
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<Outcome (*)()> criteria = {criterion1, criterion2, criterion3, criterion4,
                                         criterion5, criterion6, criterion7, criterion8,
                                         criterion9, criterion10, criterion11};
  int only = 0;
  if (argc > 1) only = std::atoi(argv[1]);

  bool all_pass = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<int>(i + 1) != only) continue;
    const double t0 = now_seconds();
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {static_cast<int>(i + 1), false, std::string("exception: ") + e.what()};
    }
    const double dt = now_seconds() - t0;
    std::printf("%s criterion %2d: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", o.id,
                o.detail.c_str(), dt);
    std::fflush(stdout);
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}
