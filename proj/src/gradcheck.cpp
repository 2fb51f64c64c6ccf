#include "graphau/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "graphau/errors.hpp"
#include "graphau/model.hpp"
#include "graphau/rng.hpp"
#include "graphau/train.hpp"

namespace graphau {

std::vector<GradStage> all_grad_stages() {
  return {GradStage::Backbone, GradStage::AuHeads, GradStage::Gnn,     GradStage::Cosine,
          GradStage::Fuse,     GradStage::Classify, GradStage::CeLoss, GradStage::BceLoss};
}

std::string to_string(GradStage stage) {
  switch (stage) {
    case GradStage::Backbone: return "backbone";
    case GradStage::AuHeads: return "au_heads";
    case GradStage::Gnn: return "gnn";
    case GradStage::Cosine: return "cosine";
    case GradStage::Fuse: return "fuse";
    case GradStage::Classify: return "classify";
    case GradStage::CeLoss: return "ce_loss";
    case GradStage::BceLoss: return "bce_loss";
  }
  return "?";
}

namespace {

using D = double;
constexpr double kKinkMargin = 2e-4;

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.n_au = 4;
  cfg.d_au = 8;
  cfg.positions = 4;
  cfg.channels = 6;
  cfg.proj_dim = 4;
  cfg.k_neighbors = 2;
  cfg.d_pain = 3;
  cfg.image_side = 16;
  cfg.conv_channels = {4, 4, 4};
  return cfg;
}

Mat<D> random_mat(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double lo,
                  double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Mat<D> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

// Magnitudes in [0.1, 1] with random sign: never near a ReLU kink.
Mat<D> random_signed_offzero(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::bernoulli_distribution flip(0.5);
  Mat<D> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = (flip(rng) ? 1.0 : -1.0) * u(rng);
  return m;
}

bool away_from_kinks(const Mat<D>& pre) {
  return (pre.array().abs() > kKinkMargin).all();
}

struct Harness {
  // tensors whose coordinates are perturbed, paired with analytic gradients
  std::vector<std::pair<D*, D>> coords;
  std::function<D()> eval;

  void add(Mat<D>& tensor, const Mat<D>& grad) {
    for (Eigen::Index i = 0; i < tensor.size(); ++i)
      coords.emplace_back(tensor.data() + i, grad.data()[i]);
  }
  void add(Vec<D>& tensor, const Vec<D>& grad) {
    for (Eigen::Index i = 0; i < tensor.size(); ++i)
      coords.emplace_back(tensor.data() + i, grad.data()[i]);
  }

  GradCheckReport run(double h) const {
    GradCheckReport rep;
    rep.coords = coords.size();
    for (const auto& [ptr, analytic] : coords) {
      const D orig = *ptr;
      *ptr = orig + h;
      const D fp = eval();
      *ptr = orig - h;
      const D fm = eval();
      *ptr = orig;
      const D fd = (fp - fm) / (2.0 * h);
      const D denom = std::max({std::abs(analytic), std::abs(fd), 1e-4});
      rep.max_rel_err = std::max(rep.max_rel_err, std::abs(analytic - fd) / denom);
    }
    return rep;
  }
};

GradCheckReport check_backbone(std::uint64_t seed, double h) {
  const ModelConfig cfg = small_config();
  for (int attempt = 0; attempt < 200; ++attempt) {
    std::mt19937_64 rng(fnv1a64("backbone" + std::to_string(attempt), seed));
    auto params = init_params<D>(cfg, rng());
    Mat<D> image =
        random_mat(rng, static_cast<Eigen::Index>(cfg.image_side) * cfg.image_side, 3, 0.0, 1.0);
    BackboneCache<D> cache;
    backbone_forward(image, params, cfg, &cache);
    bool ok = true;
    for (int l = 0; l < 4; ++l) ok = ok && away_from_kinks(cache.pre[l]);
    if (!ok) continue;

    Mat<D> c = random_signed_offzero(rng, cfg.positions, cfg.channels);
    auto grads = zero_grads<D>(cfg);
    Mat<D> dimage;
    backbone_backward(c, params, cfg, cache, grads, &dimage);

    Harness harness;
    harness.eval = [&]() {
      return backbone_forward(image, params, cfg).cwiseProduct(c).sum();
    };
    for (int l = 0; l < 4; ++l) {
      harness.add(params.conv_w[l], grads.conv_w[l]);
      harness.add(params.conv_b[l], grads.conv_b[l]);
    }
    harness.add(image, dimage);
    return harness.run(h);
  }
  throw NumericError("could not sample a kink-free backbone configuration");
}

GradCheckReport check_au_heads(std::uint64_t seed, double h) {
  const ModelConfig cfg = small_config();
  for (int attempt = 0; attempt < 200; ++attempt) {
    std::mt19937_64 rng(fnv1a64("heads" + std::to_string(attempt), seed));
    auto params = init_params<D>(cfg, rng());
    Vec<D> pooled = random_signed_offzero(rng, cfg.channels, 1);
    HeadCache<D> cache;
    au_node_features(pooled, params, cfg, &cache);
    if (!away_from_kinks(cache.pre)) continue;

    Mat<D> c = random_signed_offzero(rng, cfg.n_au, cfg.d_au);
    auto grads = zero_grads<D>(cfg);
    Vec<D> dpooled;
    au_heads_backward(c, params, cfg, cache, grads, &dpooled);

    Harness harness;
    harness.eval = [&]() {
      return au_node_features(pooled, params, cfg).cwiseProduct(c).sum();
    };
    for (int i = 0; i < cfg.n_au; ++i) {
      harness.add(params.head_w[static_cast<std::size_t>(i)],
                  grads.head_w[static_cast<std::size_t>(i)]);
      harness.add(params.head_b[static_cast<std::size_t>(i)],
                  grads.head_b[static_cast<std::size_t>(i)]);
    }
    harness.add(pooled, dpooled);
    return harness.run(h);
  }
  throw NumericError("could not sample a kink-free AU head configuration");
}

GradCheckReport check_gnn(std::uint64_t seed, double h) {
  const ModelConfig cfg = small_config();
  for (int attempt = 0; attempt < 200; ++attempt) {
    std::mt19937_64 rng(fnv1a64("gnn" + std::to_string(attempt), seed));
    auto params = init_params<D>(cfg, rng());
    Mat<D> H_a = random_signed_offzero(rng, cfg.n_au, cfg.d_au);
    // graph frozen: edge selection is non-differentiable by design
    const Mat<D> A = build_knn_graph(H_a, cfg.k_neighbors);

    GnnCache<D> cache;
    gnn_forward(H_a, A, params, RunMode::Train, cache, /*update_running=*/false);
    if (!away_from_kinks(cache.respre)) continue;

    Mat<D> c = random_signed_offzero(rng, cfg.n_au, cfg.d_au);
    auto grads = zero_grads<D>(cfg);
    Mat<D> dH_a = gnn_backward(c, params, cache, grads);

    Harness harness;
    harness.eval = [&]() {
      GnnCache<D> scratch;
      return gnn_forward(H_a, A, params, RunMode::Train, scratch, false)
          .cwiseProduct(c)
          .sum();
    };
    harness.add(params.fc1_w, grads.fc1_w);
    harness.add(params.fc1_b, grads.fc1_b);
    harness.add(params.fc2_w, grads.fc2_w);
    harness.add(params.fc2_b, grads.fc2_b);
    harness.add(params.bn_gamma, grads.bn_gamma);
    harness.add(params.bn_beta, grads.bn_beta);
    harness.add(H_a, dH_a);
    return harness.run(h);
  }
  throw NumericError("could not sample a kink-free GNN configuration");
}

GradCheckReport check_cosine(std::uint64_t seed, double h) {
  const ModelConfig cfg = small_config();
  for (int attempt = 0; attempt < 200; ++attempt) {
    std::mt19937_64 rng(fnv1a64("cosine" + std::to_string(attempt), seed));
    auto params = init_params<D>(cfg, rng());
    if (!(params.anchors.array().abs() > 1e-3).all()) continue;
    Mat<D> H = random_signed_offzero(rng, cfg.n_au, cfg.d_au);

    CosineCache<D> cache;
    auto res = au_occurrence_probs(H, params, &cache);
    bool ok = true;
    for (auto d : res.degenerate) ok = ok && d == 0;
    if (!ok) continue;

    Vec<D> c = random_signed_offzero(rng, cfg.n_au, 1);
    auto grads = zero_grads<D>(cfg);
    Mat<D> dH;
    au_occurrence_backward(c, params, cache, grads, dH);

    Harness harness;
    harness.eval = [&]() {
      return au_occurrence_probs(H, params).p.cwiseProduct(c).sum();
    };
    harness.add(params.anchors, grads.anchors);
    harness.add(H, dH);
    return harness.run(h);
  }
  throw NumericError("could not sample a kink-free cosine configuration");
}

GradCheckReport check_fuse(std::uint64_t seed, double h) {
  const ModelConfig cfg = small_config();
  for (int attempt = 0; attempt < 200; ++attempt) {
    std::mt19937_64 rng(fnv1a64("fuse" + std::to_string(attempt), seed));
    auto params = init_params<D>(cfg, rng());
    Mat<D> h_b = random_signed_offzero(rng, cfg.positions, cfg.channels);
    Mat<D> H_ap = random_signed_offzero(rng, cfg.n_au, cfg.d_au);

    FuseCache<D> cache;
    project_and_fuse(h_b, H_ap, params, cfg, &cache);
    if (!(away_from_kinks(cache.ha_pre) && away_from_kinks(cache.hb_pre) &&
          away_from_kinks(cache.hg_pre) && away_from_kinks(cache.q)))
      continue;

    Vec<D> c_ab = random_signed_offzero(rng, cfg.proj_dim, 1);
    Vec<D> c_g = random_signed_offzero(rng, cfg.proj_dim, 1);
    auto grads = zero_grads<D>(cfg);
    Mat<D> dh_b, dH_ap;
    // seed the backward with the objective coefficients through the ReLUs
    Vec<D> dh_ab = c_ab;
    Vec<D> dhg_p = c_g;
    fuse_backward(dh_ab, dhg_p, params, cfg, cache, grads, dh_b, dH_ap);

    Harness harness;
    harness.eval = [&]() {
      auto out = project_and_fuse(h_b, H_ap, params, cfg);
      return out.h_ab.cwiseProduct(c_ab).sum() + out.hg_p.cwiseProduct(c_g).sum();
    };
    harness.add(params.proj_a_w, grads.proj_a_w);
    harness.add(params.proj_a_b, grads.proj_a_b);
    harness.add(params.proj_b_w, grads.proj_b_w);
    harness.add(params.proj_b_b, grads.proj_b_b);
    harness.add(params.proj_g_w, grads.proj_g_w);
    harness.add(params.proj_g_b, grads.proj_g_b);
    harness.add(h_b, dh_b);
    harness.add(H_ap, dH_ap);
    return harness.run(h);
  }
  throw NumericError("could not sample a kink-free fusion configuration");
}

GradCheckReport check_classify(std::uint64_t seed, double h) {
  const ModelConfig cfg = small_config();
  std::mt19937_64 rng(fnv1a64("classify", seed));
  auto params = init_params<D>(cfg, rng());
  Vec<D> h_ab = random_signed_offzero(rng, cfg.proj_dim, 1);
  Vec<D> hg_p = random_signed_offzero(rng, cfg.proj_dim, 1);

  Vec<D> c = random_signed_offzero(rng, cfg.d_pain, 1);
  auto grads = zero_grads<D>(cfg);
  Vec<D> dh_ab, dhg_p;
  classify_backward(c, h_ab, hg_p, params, cfg, grads, dh_ab, dhg_p);

  Harness harness;
  harness.eval = [&]() { return classify(h_ab, hg_p, params, cfg).cwiseProduct(c).sum(); };
  harness.add(params.cls_w, grads.cls_w);
  harness.add(params.cls_b, grads.cls_b);
  harness.add(h_ab, dh_ab);
  harness.add(hg_p, dhg_p);
  return harness.run(h);
}

GradCheckReport check_ce_loss(std::uint64_t seed, double h) {
  std::mt19937_64 rng(fnv1a64("ce", seed));
  const Eigen::Index n = 5, c = 3;
  Mat<D> logits = random_mat(rng, n, c, -2.0, 2.0);
  Mat<D> onehot = Mat<D>::Zero(n, c);
  std::uniform_int_distribution<int> cls(0, static_cast<int>(c) - 1);
  for (Eigen::Index i = 0; i < n; ++i) onehot(i, cls(rng)) = 1.0;
  std::vector<double> weights;
  std::uniform_real_distribution<double> wr(0.5, 2.5);
  for (Eigen::Index j = 0; j < c; ++j) weights.push_back(wr(rng));

  Mat<D> dlogits;
  weighted_ce_loss(logits, onehot, weights, 1e-8, &dlogits);

  Harness harness;
  harness.eval = [&]() { return weighted_ce_loss(logits, onehot, weights, 1e-8); };
  harness.add(logits, dlogits);
  return harness.run(h);
}

GradCheckReport check_bce_loss(std::uint64_t seed, double h) {
  std::mt19937_64 rng(fnv1a64("bce", seed));
  const Eigen::Index n = 4, a = 5;
  Mat<D> p = random_mat(rng, n, a, 0.05, 0.95);
  Mat<D> bits(n, a);
  std::bernoulli_distribution bit(0.5);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < a; ++j) bits(i, j) = bit(rng) ? 1.0 : 0.0;
  std::vector<double> weights;
  std::uniform_real_distribution<double> wr(0.5, 3.0);
  for (Eigen::Index j = 0; j < a; ++j) weights.push_back(wr(rng));

  Mat<D> dp;
  au_bce_loss(p, bits, weights, 1e-8, &dp);

  Harness harness;
  harness.eval = [&]() { return au_bce_loss(p, bits, weights, 1e-8); };
  harness.add(p, dp);
  return harness.run(h);
}

}  // namespace

GradCheckReport grad_check(GradStage stage, std::uint64_t seed, double step) {
  switch (stage) {
    case GradStage::Backbone: return check_backbone(seed, step);
    case GradStage::AuHeads: return check_au_heads(seed, step);
    case GradStage::Gnn: return check_gnn(seed, step);
    case GradStage::Cosine: return check_cosine(seed, step);
    case GradStage::Fuse: return check_fuse(seed, step);
    case GradStage::Classify: return check_classify(seed, step);
    case GradStage::CeLoss: return check_ce_loss(seed, step);
    case GradStage::BceLoss: return check_bce_loss(seed, step);
  }
  throw InvalidConfigError("unknown gradient-check stage");
}

}  // namespace graphau
