#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "graphau/errors.hpp"

namespace graphau {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

enum class AblationMode { Full = 0, NoGraphRep = 1, NoGnn = 2, BackboneOnly = 3 };
enum class RunMode { Train, Eval };

inline std::string to_string(AblationMode m) {
  switch (m) {
    case AblationMode::Full: return "full";
    case AblationMode::NoGraphRep: return "no_graph_rep";
    case AblationMode::NoGnn: return "no_gnn";
    case AblationMode::BackboneOnly: return "backbone_only";
  }
  return "?";
}

inline AblationMode ablation_from_string(const std::string& s) {
  if (s == "full") return AblationMode::Full;
  if (s == "no_graph_rep") return AblationMode::NoGraphRep;
  if (s == "no_gnn") return AblationMode::NoGnn;
  if (s == "backbone_only") return AblationMode::BackboneOnly;
  throw InvalidConfigError("unknown ablation mode '" + s + "'");
}

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.9;

// ---------------------------------------------------------------------------
// Configuration

struct ModelConfig {
  int n_au = 8;
  int d_au = 512;
  int positions = 36;  // P, a perfect square
  int channels = 2048; // D
  int proj_dim = 36;
  int k_neighbors = 3;
  int d_pain = 3;
  std::string backbone = "desk";  // "full" pins 172x172 -> 36x2048
  int image_side = 96;
  std::array<int, 3> conv_channels = {8, 12, 16};  // stages 1-3; stage 4 emits `channels`
  AblationMode ablation = AblationMode::Full;

  void validate() const {
    if (n_au < 2) throw InvalidConfigError("n_au must be >= 2");
    if (d_au < 1 || channels < 1 || proj_dim < 1) throw InvalidConfigError("bad dims");
    if (k_neighbors < 1 || k_neighbors > n_au - 1)
      throw InvalidConfigError("K must be in [1, n_au-1]");
    if (d_pain != 3 && d_pain != 4) throw InvalidConfigError("d_pain must be 3 or 4");
    const int g = grid_side();
    if (g * g != positions) throw InvalidConfigError("positions must be a perfect square");
    if (proj_dim != positions)
      throw InvalidConfigError("proj_dim must equal positions for feature infusion");
    if (image_side < 16) throw InvalidConfigError("image side too small");
  }
  int grid_side() const { return static_cast<int>(std::lround(std::sqrt(double(positions)))); }

  // Spatial side after each of the 4 stride-2 convolutions.
  std::array<int, 5> conv_sides() const {
    std::array<int, 5> s{};
    s[0] = image_side;
    for (int i = 1; i <= 4; ++i) s[i] = (s[i - 1] + 1) / 2;
    return s;
  }
  std::array<int, 5> layer_channels() const {
    return {3, conv_channels[0], conv_channels[1], conv_channels[2], channels};
  }

  static ModelConfig full_scale() {
    ModelConfig c;
    c.backbone = "full";
    c.image_side = 172;
    c.positions = 36;
    c.proj_dim = 36;
    c.channels = 2048;
    c.d_au = 512;
    c.conv_channels = {16, 32, 64};
    return c;
  }
};

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
struct ModelParams {
  std::array<Mat<T>, 4> conv_w;  // (Cin*9) x Cout
  std::array<Vec<T>, 4> conv_b;
  std::vector<Mat<T>> head_w;  // n_au entries, d_au x D
  std::vector<Vec<T>> head_b;
  Mat<T> fc1_w, fc2_w;  // d_au x d_au
  Vec<T> fc1_b, fc2_b;
  Vec<T> bn_gamma, bn_beta;
  Vec<T> bn_mean, bn_var;  // running stats, not optimized
  Mat<T> anchors;          // n_au x d_au
  Mat<T> proj_a_w;         // proj x d_au
  Vec<T> proj_a_b;
  Mat<T> proj_b_w;  // proj x D
  Vec<T> proj_b_b;
  Mat<T> proj_g_w;  // proj x d_au
  Vec<T> proj_g_b;
  Mat<T> cls_w;  // d_pain x 2*proj
  Vec<T> cls_b;
  Mat<T> bb_w;  // d_pain x D, backbone-only head
  Vec<T> bb_b;
};

// Visits every tensor with f(name, matrix&, trainable). Vectors appear as
// n x 1 blocks through a common Eigen expression type.
template <typename T, typename P, typename F>
void for_each_tensor(P& p, F&& f) {
  for (int i = 0; i < 4; ++i) {
    f("backbone.conv" + std::to_string(i) + ".weight", p.conv_w[i], true);
    f("backbone.conv" + std::to_string(i) + ".bias", p.conv_b[i], true);
  }
  for (std::size_t i = 0; i < p.head_w.size(); ++i) {
    f("au_head." + std::to_string(i) + ".weight", p.head_w[i], true);
    f("au_head." + std::to_string(i) + ".bias", p.head_b[i], true);
  }
  f("gnn.fc1.weight", p.fc1_w, true);
  f("gnn.fc1.bias", p.fc1_b, true);
  f("gnn.fc2.weight", p.fc2_w, true);
  f("gnn.fc2.bias", p.fc2_b, true);
  f("gnn.bn.gamma", p.bn_gamma, true);
  f("gnn.bn.beta", p.bn_beta, true);
  f("gnn.bn.running_mean", p.bn_mean, false);
  f("gnn.bn.running_var", p.bn_var, false);
  f("sim.anchors", p.anchors, true);
  f("fuse.proj_a.weight", p.proj_a_w, true);
  f("fuse.proj_a.bias", p.proj_a_b, true);
  f("fuse.proj_b.weight", p.proj_b_w, true);
  f("fuse.proj_b.bias", p.proj_b_b, true);
  f("fuse.proj_g.weight", p.proj_g_w, true);
  f("fuse.proj_g.bias", p.proj_g_b, true);
  f("cls.weight", p.cls_w, true);
  f("cls.bias", p.cls_b, true);
  f("backbone_cls.weight", p.bb_w, true);
  f("backbone_cls.bias", p.bb_b, true);
}

template <typename T>
ModelParams<T> zero_params(const ModelConfig& cfg) {
  cfg.validate();
  const auto ch = cfg.layer_channels();
  ModelParams<T> p;
  for (int i = 0; i < 4; ++i) {
    p.conv_w[i] = Mat<T>::Zero(ch[i] * 9, ch[i + 1]);
    p.conv_b[i] = Vec<T>::Zero(ch[i + 1]);
  }
  p.head_w.assign(cfg.n_au, Mat<T>::Zero(cfg.d_au, cfg.channels));
  p.head_b.assign(cfg.n_au, Vec<T>::Zero(cfg.d_au));
  p.fc1_w = Mat<T>::Zero(cfg.d_au, cfg.d_au);
  p.fc2_w = Mat<T>::Zero(cfg.d_au, cfg.d_au);
  p.fc1_b = Vec<T>::Zero(cfg.d_au);
  p.fc2_b = Vec<T>::Zero(cfg.d_au);
  p.bn_gamma = Vec<T>::Ones(cfg.d_au);
  p.bn_beta = Vec<T>::Zero(cfg.d_au);
  p.bn_mean = Vec<T>::Zero(cfg.d_au);
  p.bn_var = Vec<T>::Ones(cfg.d_au);
  p.anchors = Mat<T>::Zero(cfg.n_au, cfg.d_au);
  p.proj_a_w = Mat<T>::Zero(cfg.proj_dim, cfg.d_au);
  p.proj_a_b = Vec<T>::Zero(cfg.proj_dim);
  p.proj_b_w = Mat<T>::Zero(cfg.proj_dim, cfg.channels);
  p.proj_b_b = Vec<T>::Zero(cfg.proj_dim);
  p.proj_g_w = Mat<T>::Zero(cfg.proj_dim, cfg.d_au);
  p.proj_g_b = Vec<T>::Zero(cfg.proj_dim);
  p.cls_w = Mat<T>::Zero(cfg.d_pain, 2 * cfg.proj_dim);
  p.cls_b = Vec<T>::Zero(cfg.d_pain);
  p.bb_w = Mat<T>::Zero(cfg.d_pain, cfg.channels);
  p.bb_b = Vec<T>::Zero(cfg.d_pain);
  return p;
}

// Gradient accumulator: like zero_params but with the BN gamma/var slots
// zeroed too (zero_params keeps them at one so a zero model is usable).
template <typename T>
ModelParams<T> zero_grads(const ModelConfig& cfg) {
  ModelParams<T> p = zero_params<T>(cfg);
  p.bn_gamma.setZero();
  p.bn_var.setZero();
  return p;
}

// Fan-in-scaled uniform init; similarity anchors become random nonnegative
// unit vectors so the cosine head is non-degenerate at step 0.
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams<T> p = zero_params<T>(cfg);
  std::mt19937_64 rng(seed);
  auto fill = [&](auto& m, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<T>(u(rng));
  };
  const auto ch = cfg.layer_channels();
  for (int i = 0; i < 4; ++i) {
    fill(p.conv_w[i], ch[i] * 9);
    fill(p.conv_b[i], ch[i] * 9);
  }
  for (int i = 0; i < cfg.n_au; ++i) {
    fill(p.head_w[i], cfg.channels);
    fill(p.head_b[i], cfg.channels);
  }
  fill(p.fc1_w, cfg.d_au);
  fill(p.fc1_b, cfg.d_au);
  fill(p.fc2_w, cfg.d_au);
  fill(p.fc2_b, cfg.d_au);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int i = 0; i < cfg.n_au; ++i) {
    for (int j = 0; j < cfg.d_au; ++j) p.anchors(i, j) = static_cast<T>(u01(rng));
    p.anchors.row(i) /= p.anchors.row(i).norm();
  }
  fill(p.proj_a_w, cfg.d_au);
  fill(p.proj_a_b, cfg.d_au);
  fill(p.proj_b_w, cfg.channels);
  fill(p.proj_b_b, cfg.channels);
  fill(p.proj_g_w, cfg.d_au);
  fill(p.proj_g_b, cfg.d_au);
  fill(p.cls_w, 2 * cfg.proj_dim);
  fill(p.cls_b, 2 * cfg.proj_dim);
  fill(p.bb_w, cfg.channels);
  fill(p.bb_b, cfg.channels);
  return p;
}

// ---------------------------------------------------------------------------
// Convolution (3x3, stride 2, pad 1) via im2col

template <typename T>
Mat<T> im2col_3x3s2(const Mat<T>& in, int side) {
  const int cin = static_cast<int>(in.cols());
  const int out_side = (side + 1) / 2;
  Mat<T> col = Mat<T>::Zero(static_cast<Eigen::Index>(out_side) * out_side, 9 * cin);
  for (int oy = 0; oy < out_side; ++oy)
    for (int ox = 0; ox < out_side; ++ox) {
      const Eigen::Index orow = static_cast<Eigen::Index>(oy) * out_side + ox;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const int iy = oy * 2 + ky - 1;
          const int ix = ox * 2 + kx - 1;
          if (iy < 0 || iy >= side || ix < 0 || ix >= side) continue;
          col.block(orow, (ky * 3 + kx) * cin, 1, cin) =
              in.row(static_cast<Eigen::Index>(iy) * side + ix);
        }
    }
  return col;
}

template <typename T>
Mat<T> col2im_3x3s2(const Mat<T>& dcol, int side, int cin) {
  const int out_side = (side + 1) / 2;
  Mat<T> din = Mat<T>::Zero(static_cast<Eigen::Index>(side) * side, cin);
  for (int oy = 0; oy < out_side; ++oy)
    for (int ox = 0; ox < out_side; ++ox) {
      const Eigen::Index orow = static_cast<Eigen::Index>(oy) * out_side + ox;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const int iy = oy * 2 + ky - 1;
          const int ix = ox * 2 + kx - 1;
          if (iy < 0 || iy >= side || ix < 0 || ix >= side) continue;
          din.row(static_cast<Eigen::Index>(iy) * side + ix) +=
              dcol.block(orow, (ky * 3 + kx) * cin, 1, cin);
        }
    }
  return din;
}

// ---------------------------------------------------------------------------
// Adaptive average pooling s x s -> g x g (channel-last rows)

template <typename T>
Mat<T> adaptive_pool(const Mat<T>& in, int s, int g) {
  if (s == g) return in;
  Mat<T> out = Mat<T>::Zero(static_cast<Eigen::Index>(g) * g, in.cols());
  for (int gy = 0; gy < g; ++gy) {
    const int y0 = gy * s / g, y1 = ((gy + 1) * s + g - 1) / g;
    for (int gx = 0; gx < g; ++gx) {
      const int x0 = gx * s / g, x1 = ((gx + 1) * s + g - 1) / g;
      auto row = out.row(static_cast<Eigen::Index>(gy) * g + gx);
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) row += in.row(static_cast<Eigen::Index>(y) * s + x);
      row /= static_cast<T>((y1 - y0) * (x1 - x0));
    }
  }
  return out;
}

template <typename T>
Mat<T> adaptive_pool_backward(const Mat<T>& dout, int s, int g) {
  if (s == g) return dout;
  Mat<T> din = Mat<T>::Zero(static_cast<Eigen::Index>(s) * s, dout.cols());
  for (int gy = 0; gy < g; ++gy) {
    const int y0 = gy * s / g, y1 = ((gy + 1) * s + g - 1) / g;
    for (int gx = 0; gx < g; ++gx) {
      const int x0 = gx * s / g, x1 = ((gx + 1) * s + g - 1) / g;
      const auto grad =
          dout.row(static_cast<Eigen::Index>(gy) * g + gx) / static_cast<T>((y1 - y0) * (x1 - x0));
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) din.row(static_cast<Eigen::Index>(y) * s + x) += grad;
    }
  }
  return din;
}

// ---------------------------------------------------------------------------
// Backbone stage

template <typename T>
struct BackboneCache {
  std::array<Mat<T>, 4> col;   // im2col inputs per layer
  std::array<Mat<T>, 4> pre;   // pre-ReLU outputs
  Mat<T> post;                 // post-ReLU of the last layer (s4*s4 x D)
  Mat<T> h_b;                  // P x D
};

template <typename T>
Mat<T> backbone_forward(const Mat<T>& image, const ModelParams<T>& params,
                        const ModelConfig& cfg, BackboneCache<T>* cache = nullptr) {
  const auto sides = cfg.conv_sides();
  if (image.rows() != static_cast<Eigen::Index>(cfg.image_side) * cfg.image_side ||
      image.cols() != 3)
    throw ShapeMismatchError("image must be side*side x 3");
  BackboneCache<T> local;
  BackboneCache<T>& c = cache ? *cache : local;
  Mat<T> act = image;
  for (int l = 0; l < 4; ++l) {
    c.col[l] = im2col_3x3s2(act, sides[l]);
    c.pre[l] = c.col[l] * params.conv_w[l];
    c.pre[l].rowwise() += params.conv_b[l].transpose();
    act = c.pre[l].cwiseMax(T(0));
  }
  c.post = act;
  c.h_b = adaptive_pool(c.post, sides[4], cfg.grid_side());
  return c.h_b;
}

template <typename T>
void backbone_backward(const Mat<T>& dh_b, const ModelParams<T>& params, const ModelConfig& cfg,
                       const BackboneCache<T>& cache, ModelParams<T>& grads,
                       Mat<T>* dimage = nullptr) {
  const auto sides = cfg.conv_sides();
  Mat<T> dact = adaptive_pool_backward(dh_b, sides[4], cfg.grid_side());
  for (int l = 3; l >= 0; --l) {
    Mat<T> dpre = dact.cwiseProduct((cache.pre[l].array() > T(0)).template cast<T>().matrix());
    grads.conv_w[l] += cache.col[l].transpose() * dpre;
    grads.conv_b[l] += dpre.colwise().sum().transpose();
    if (l > 0 || dimage) {
      Mat<T> dcol = dpre * params.conv_w[l].transpose();
      Mat<T> din = col2im_3x3s2(dcol, sides[l], static_cast<int>(cache.col[l].cols()) / 9);
      if (l > 0)
        dact = std::move(din);
      else if (dimage)
        *dimage = std::move(din);
    }
  }
}

// ---------------------------------------------------------------------------
// AU head stage: pooled backbone feature -> per-AU node features

template <typename T>
struct HeadCache {
  Vec<T> pooled;  // D
  Mat<T> pre;     // n_au x d_au
};

template <typename T>
Mat<T> au_node_features(const Vec<T>& pooled, const ModelParams<T>& params,
                        const ModelConfig& cfg, HeadCache<T>* cache = nullptr) {
  if (pooled.size() != cfg.channels) throw ShapeMismatchError("pooled feature length");
  HeadCache<T> local;
  HeadCache<T>& c = cache ? *cache : local;
  c.pooled = pooled;
  c.pre.resize(cfg.n_au, cfg.d_au);
  for (int i = 0; i < cfg.n_au; ++i)
    c.pre.row(i) = (params.head_w[i] * pooled + params.head_b[i]).transpose();
  return c.pre.cwiseMax(T(0));
}

template <typename T>
void au_heads_backward(const Mat<T>& dH_a, const ModelParams<T>& params, const ModelConfig& cfg,
                       const HeadCache<T>& cache, ModelParams<T>& grads, Vec<T>* dpooled) {
  if (dpooled) dpooled->setZero(cfg.channels);
  for (int i = 0; i < cfg.n_au; ++i) {
    Vec<T> dpre = dH_a.row(i)
                      .transpose()
                      .cwiseProduct((cache.pre.row(i).transpose().array() > T(0))
                                        .template cast<T>()
                                        .matrix());
    grads.head_w[i] += dpre * cache.pooled.transpose();
    grads.head_b[i] += dpre;
    if (dpooled) *dpooled += params.head_w[i].transpose() * dpre;
  }
}

// ---------------------------------------------------------------------------
// Dynamic KNN graph (non-differentiable; treated as constant in backward)

template <typename T>
Mat<T> build_knn_graph(const Mat<T>& H_a, int k) {
  const int n = static_cast<int>(H_a.rows());
  if (k < 1 || k > n - 1) throw KTooLargeError(k, n);
  Mat<T> gram = H_a * H_a.transpose();
  Mat<T> adj = Mat<T>::Zero(n, n);
  std::vector<std::pair<T, int>> order;
  for (int i = 0; i < n; ++i) {
    order.clear();
    for (int j = 0; j < n; ++j)
      if (j != i) order.emplace_back(gram(i, j), j);
    // largest similarity first; ties go to the smaller AU index
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (int e = 0; e < k; ++e) adj(i, order[static_cast<std::size_t>(e)].second) = T(1) / T(k);
  }
  return adj;
}

// ---------------------------------------------------------------------------
// Batch normalization over the rows of an R x d matrix

template <typename T>
struct BnCache {
  Mat<T> xhat;
  Vec<T> invstd;  // train mode
  bool train = false;
};

template <typename T>
Mat<T> bn_forward(const Mat<T>& x, ModelParams<T>& params, RunMode mode, BnCache<T>& cache,
                  bool update_running = true) {
  const auto rows = static_cast<T>(x.rows());
  cache.train = (mode == RunMode::Train);
  Mat<T> y(x.rows(), x.cols());
  if (cache.train) {
    Vec<T> mean = x.colwise().mean().transpose();
    Mat<T> centered = x.rowwise() - mean.transpose();
    Vec<T> var = centered.array().square().colwise().sum().transpose() / rows;
    cache.invstd = (var.array() + T(kBnEps)).rsqrt();
    cache.xhat = centered.array().rowwise() * cache.invstd.transpose().array();
    if (update_running) {
      params.bn_mean = T(kBnMomentum) * params.bn_mean + T(1 - kBnMomentum) * mean;
      params.bn_var = T(kBnMomentum) * params.bn_var + T(1 - kBnMomentum) * var;
    }
  } else {
    Vec<T> invstd = (params.bn_var.array() + T(kBnEps)).rsqrt();
    cache.invstd = invstd;
    cache.xhat = (x.rowwise() - params.bn_mean.transpose()).array().rowwise() *
                 invstd.transpose().array();
  }
  y = cache.xhat.array().rowwise() * params.bn_gamma.transpose().array();
  y.rowwise() += params.bn_beta.transpose();
  return y;
}

template <typename T>
Mat<T> bn_backward(const Mat<T>& dy, const ModelParams<T>& params, const BnCache<T>& cache,
                   ModelParams<T>& grads) {
  grads.bn_gamma += dy.cwiseProduct(cache.xhat).colwise().sum().transpose();
  grads.bn_beta += dy.colwise().sum().transpose();
  Mat<T> dxhat = dy.array().rowwise() * params.bn_gamma.transpose().array();
  if (!cache.train)
    return dxhat.array().rowwise() * cache.invstd.transpose().array();
  const auto rows = static_cast<T>(dy.rows());
  Vec<T> mean_dxhat = dxhat.colwise().mean().transpose();
  Vec<T> mean_dxhat_xhat = dxhat.cwiseProduct(cache.xhat).colwise().mean().transpose();
  Mat<T> dx = dxhat;
  dx.rowwise() -= mean_dxhat.transpose();
  dx -= (cache.xhat.array().rowwise() * mean_dxhat_xhat.transpose().array()).matrix();
  (void)rows;
  return dx.array().rowwise() * cache.invstd.transpose().array();
}

// ---------------------------------------------------------------------------
// Graph convolution: H' = ReLU(H + BN(A^T FC1(H) + FC2(H)))
// The linear part is per sample; BN statistics may span a whole batch, so
// the composed forward stacks rows before calling bn_forward.

template <typename T>
struct GnnLinearCache {
  Mat<T> H_a, A, f1;
};

template <typename T>
Mat<T> gnn_linear_forward(const Mat<T>& H_a, const Mat<T>& A, const ModelParams<T>& params,
                          GnnLinearCache<T>& cache) {
  cache.H_a = H_a;
  cache.A = A;
  cache.f1 = H_a * params.fc1_w.transpose();
  cache.f1.rowwise() += params.fc1_b.transpose();
  Mat<T> f2 = H_a * params.fc2_w.transpose();
  f2.rowwise() += params.fc2_b.transpose();
  return A.transpose() * cache.f1 + f2;
}

template <typename T>
Mat<T> gnn_linear_backward(const Mat<T>& dM, const ModelParams<T>& params,
                           const GnnLinearCache<T>& cache, ModelParams<T>& grads) {
  Mat<T> df1 = cache.A * dM;
  grads.fc1_w += df1.transpose() * cache.H_a;
  grads.fc1_b += df1.colwise().sum().transpose();
  grads.fc2_w += dM.transpose() * cache.H_a;
  grads.fc2_b += dM.colwise().sum().transpose();
  return df1 * params.fc1_w + dM * params.fc2_w;
}

// Single-sample Eq. 1 (BN statistics over this sample's nodes); used by the
// gradient checker and anywhere batching is not in play.
template <typename T>
struct GnnCache {
  GnnLinearCache<T> lin;
  BnCache<T> bn;
  Mat<T> respre;  // H_a + BN(...)
};

template <typename T>
Mat<T> gnn_forward(const Mat<T>& H_a, const Mat<T>& A, ModelParams<T>& params, RunMode mode,
                   GnnCache<T>& cache, bool update_running = true) {
  Mat<T> m = gnn_linear_forward(H_a, A, params, cache.lin);
  Mat<T> n = bn_forward(m, params, mode, cache.bn, update_running);
  cache.respre = H_a + n;
  return cache.respre.cwiseMax(T(0));
}

template <typename T>
Mat<T> gnn_backward(const Mat<T>& dH_ap, const ModelParams<T>& params, const GnnCache<T>& cache,
                    ModelParams<T>& grads) {
  Mat<T> dres =
      dH_ap.cwiseProduct((cache.respre.array() > T(0)).template cast<T>().matrix());
  Mat<T> dm = bn_backward(dres, params, cache.bn, grads);
  Mat<T> dH_a = gnn_linear_backward(dm, params, cache.lin, grads);
  return dH_a + dres;  // residual path
}

// ---------------------------------------------------------------------------
// AU occurrence probabilities: nonnegative cosine against learnable anchors

template <typename T>
struct CosineCache {
  Mat<T> H;  // inputs as given (pre-ReLU of this stage)
};

template <typename T>
struct OccurrenceResult {
  Vec<T> p;
  std::vector<std::uint8_t> degenerate;
};

template <typename T>
OccurrenceResult<T> au_occurrence_probs(const Mat<T>& H_ap, const ModelParams<T>& params,
                                        CosineCache<T>* cache = nullptr) {
  if (H_ap.rows() != params.anchors.rows() || H_ap.cols() != params.anchors.cols())
    throw ShapeMismatchError("node features vs anchors");
  if (cache) cache->H = H_ap;
  const int n = static_cast<int>(H_ap.rows());
  OccurrenceResult<T> out;
  out.p = Vec<T>::Zero(n);
  out.degenerate.assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    Vec<T> u = H_ap.row(i).transpose().cwiseMax(T(0));
    Vec<T> v = params.anchors.row(i).transpose().cwiseMax(T(0));
    const T nu = u.norm(), nv = v.norm();
    if (nu == T(0) || nv == T(0)) {
      out.degenerate[static_cast<std::size_t>(i)] = 1;
      continue;
    }
    out.p(i) = u.dot(v) / (nu * nv);
  }
  return out;
}

template <typename T>
void au_occurrence_backward(const Vec<T>& dp, const ModelParams<T>& params,
                            const CosineCache<T>& cache, ModelParams<T>& grads, Mat<T>& dH_ap) {
  const int n = static_cast<int>(cache.H.rows());
  dH_ap = Mat<T>::Zero(cache.H.rows(), cache.H.cols());
  for (int i = 0; i < n; ++i) {
    if (dp(i) == T(0)) continue;
    Vec<T> u = cache.H.row(i).transpose().cwiseMax(T(0));
    Vec<T> v = params.anchors.row(i).transpose().cwiseMax(T(0));
    const T nu = u.norm(), nv = v.norm();
    if (nu == T(0) || nv == T(0)) continue;
    const T p = u.dot(v) / (nu * nv);
    Vec<T> du = v / (nu * nv) - (p / (nu * nu)) * u;
    Vec<T> dv = u / (nu * nv) - (p / (nv * nv)) * v;
    dH_ap.row(i) += (dp(i) * du)
                        .cwiseProduct((cache.H.row(i).transpose().array() > T(0))
                                          .template cast<T>()
                                          .matrix())
                        .transpose();
    grads.anchors.row(i) += (dp(i) * dv)
                                .cwiseProduct((params.anchors.row(i).transpose().array() > T(0))
                                                  .template cast<T>()
                                                  .matrix())
                                .transpose();
  }
}

// ---------------------------------------------------------------------------
// Fusion: projections + feature infusion (Eq. 3 wiring)

template <typename T>
struct FuseCache {
  Mat<T> h_b, H_ap;
  Vec<T> h_g, h_a_mean;
  Vec<T> ha_pre, ha_p;
  Mat<T> hb_pre, hb_p;
  Vec<T> hg_pre, hg_p;
  Vec<T> q;
};

template <typename T>
struct FuseResult {
  Vec<T> h_ab;
  Vec<T> hg_p;
};

template <typename T>
FuseResult<T> project_and_fuse(const Mat<T>& h_b, const Mat<T>& H_ap, const ModelParams<T>& params,
                               const ModelConfig& cfg, FuseCache<T>* cache = nullptr) {
  if (h_b.rows() != cfg.positions || h_b.cols() != cfg.channels)
    throw ShapeMismatchError("h_b shape");
  if (H_ap.rows() != cfg.n_au || H_ap.cols() != cfg.d_au)
    throw ShapeMismatchError("node feature shape");
  FuseCache<T> local;
  FuseCache<T>& c = cache ? *cache : local;
  c.h_b = h_b;
  c.H_ap = H_ap;
  c.h_g = H_ap.colwise().sum().transpose();
  c.h_a_mean = H_ap.colwise().mean().transpose();
  c.ha_pre = params.proj_a_w * c.h_a_mean + params.proj_a_b;
  c.ha_p = c.ha_pre.cwiseMax(T(0));
  c.hb_pre = h_b * params.proj_b_w.transpose();
  c.hb_pre.rowwise() += params.proj_b_b.transpose();
  c.hb_p = c.hb_pre.cwiseMax(T(0));
  c.hg_pre = params.proj_g_w * c.h_g + params.proj_g_b;
  c.hg_p = c.hg_pre.cwiseMax(T(0));
  c.q = c.hb_p.transpose() * c.ha_p;
  FuseResult<T> out;
  out.h_ab = c.q.cwiseMax(T(0));
  out.hg_p = c.hg_p;
  return out;
}

template <typename T>
void fuse_backward(const Vec<T>& dh_ab, const Vec<T>& dhg_p, const ModelParams<T>& params,
                   const ModelConfig& cfg, const FuseCache<T>& cache, ModelParams<T>& grads,
                   Mat<T>& dh_b, Mat<T>& dH_ap) {
  auto relu_mask = [](const auto& pre) {
    return (pre.array() > T(0)).template cast<T>().matrix();
  };
  Vec<T> dq = dh_ab.cwiseProduct(relu_mask(cache.q));
  Vec<T> dha_p = cache.hb_p * dq;
  Mat<T> dhb_p = cache.ha_p * dq.transpose();

  Vec<T> dha_pre = dha_p.cwiseProduct(relu_mask(cache.ha_pre));
  grads.proj_a_w += dha_pre * cache.h_a_mean.transpose();
  grads.proj_a_b += dha_pre;
  Vec<T> dh_a_mean = params.proj_a_w.transpose() * dha_pre;

  Mat<T> dhb_pre = dhb_p.cwiseProduct(relu_mask(cache.hb_pre));
  grads.proj_b_w += dhb_pre.transpose() * cache.h_b;
  grads.proj_b_b += dhb_pre.colwise().sum().transpose();
  dh_b = dhb_pre * params.proj_b_w;

  Vec<T> dhg_pre = dhg_p.cwiseProduct(relu_mask(cache.hg_pre));
  grads.proj_g_w += dhg_pre * cache.h_g.transpose();
  grads.proj_g_b += dhg_pre;
  Vec<T> dh_g = params.proj_g_w.transpose() * dhg_pre;

  dH_ap = Mat<T>::Zero(cfg.n_au, cfg.d_au);
  dH_ap.rowwise() += dh_g.transpose();
  dH_ap.rowwise() += (dh_a_mean / T(cfg.n_au)).transpose();
}

// ---------------------------------------------------------------------------
// Classifier (Eq. 4)

template <typename T>
Vec<T> classify(const Vec<T>& h_ab, const Vec<T>& hg_p, const ModelParams<T>& params,
                const ModelConfig& cfg) {
  if (h_ab.size() != cfg.proj_dim || hg_p.size() != cfg.proj_dim)
    throw ShapeMismatchError("classifier input length");
  Vec<T> z(2 * cfg.proj_dim);
  z << h_ab, hg_p;
  return params.cls_w * z + params.cls_b;
}

template <typename T>
void classify_backward(const Vec<T>& dlogits, const Vec<T>& h_ab, const Vec<T>& hg_p,
                       const ModelParams<T>& params, const ModelConfig& cfg, ModelParams<T>& grads,
                       Vec<T>& dh_ab, Vec<T>& dhg_p) {
  Vec<T> z(2 * cfg.proj_dim);
  z << h_ab, hg_p;
  grads.cls_w += dlogits * z.transpose();
  grads.cls_b += dlogits;
  Vec<T> dz = params.cls_w.transpose() * dlogits;
  dh_ab = dz.head(cfg.proj_dim);
  dhg_p = dz.tail(cfg.proj_dim);
}

// ---------------------------------------------------------------------------
// Composed forward/backward over a batch

template <typename T>
struct SampleCache {
  BackboneCache<T> backbone;
  HeadCache<T> head;
  Mat<T> H_a;
  Mat<T> A;
  GnnLinearCache<T> gnn_lin;
  Mat<T> respre;
  Mat<T> H_ap;
  CosineCache<T> cos;
  FuseCache<T> fuse;
  Vec<T> h_ab;
  Vec<T> p;
  std::vector<std::uint8_t> degenerate;
  Vec<T> logits;
  // scratch used between the two halves of backward_batch
  Mat<T> dH_a_pending;
  Mat<T> dh_b_pending;
};

template <typename T>
struct BatchCache {
  std::vector<SampleCache<T>> samples;
  BnCache<T> bn;  // over the stacked node rows of the whole batch
  RunMode mode = RunMode::Eval;
};

template <typename T>
void forward_batch(const std::vector<Mat<T>>& images, ModelParams<T>& params,
                   const ModelConfig& cfg, RunMode mode, BatchCache<T>& cache) {
  cfg.validate();
  const int b = static_cast<int>(images.size());
  cache.samples.assign(static_cast<std::size_t>(b), SampleCache<T>{});
  cache.mode = mode;
  const bool use_gnn =
      cfg.ablation == AblationMode::Full || cfg.ablation == AblationMode::NoGraphRep;

  for (int s = 0; s < b; ++s) {
    auto& sc = cache.samples[static_cast<std::size_t>(s)];
    backbone_forward(images[static_cast<std::size_t>(s)], params, cfg, &sc.backbone);
    if (cfg.ablation == AblationMode::BackboneOnly) {
      Vec<T> pooled = sc.backbone.h_b.colwise().mean().transpose();
      sc.head.pooled = pooled;
      sc.logits = params.bb_w * pooled + params.bb_b;
      sc.p = Vec<T>::Zero(cfg.n_au);
      sc.degenerate.assign(static_cast<std::size_t>(cfg.n_au), 1);
      continue;
    }
    Vec<T> pooled = sc.backbone.h_b.colwise().mean().transpose();
    sc.H_a = au_node_features(pooled, params, cfg, &sc.head);
    if (use_gnn) {
      sc.A = build_knn_graph(sc.H_a, cfg.k_neighbors);
    }
  }

  if (cfg.ablation == AblationMode::BackboneOnly) return;

  if (use_gnn) {
    // stack every sample's aggregation output so BN statistics span the batch
    Mat<T> stacked(static_cast<Eigen::Index>(b) * cfg.n_au, cfg.d_au);
    for (int s = 0; s < b; ++s) {
      auto& sc = cache.samples[static_cast<std::size_t>(s)];
      stacked.middleRows(static_cast<Eigen::Index>(s) * cfg.n_au, cfg.n_au) =
          gnn_linear_forward(sc.H_a, sc.A, params, sc.gnn_lin);
    }
    Mat<T> normed = bn_forward(stacked, params, mode, cache.bn);
    for (int s = 0; s < b; ++s) {
      auto& sc = cache.samples[static_cast<std::size_t>(s)];
      sc.respre = sc.H_a + normed.middleRows(static_cast<Eigen::Index>(s) * cfg.n_au, cfg.n_au);
      sc.H_ap = sc.respre.cwiseMax(T(0));
    }
  } else {  // NoGnn: bypass the graph entirely
    for (auto& sc : cache.samples) sc.H_ap = sc.H_a.cwiseMax(T(0));
  }

  for (auto& sc : cache.samples) {
    auto occ = au_occurrence_probs(sc.H_ap, params, &sc.cos);
    sc.p = std::move(occ.p);
    sc.degenerate = std::move(occ.degenerate);
    auto fused = project_and_fuse(sc.backbone.h_b, sc.H_ap, params, cfg, &sc.fuse);
    sc.h_ab = fused.h_ab;
    Vec<T> hg_branch = (cfg.ablation == AblationMode::NoGraphRep)
                           ? Vec<T>::Zero(cfg.proj_dim).eval()
                           : fused.hg_p;
    sc.logits = classify(sc.h_ab, hg_branch, params, cfg);
  }
}

// dlogits / dp may be empty when the respective output is not in the loss.
template <typename T>
void backward_batch(BatchCache<T>& cache, const ModelParams<T>& params, const ModelConfig& cfg,
                    const std::vector<Vec<T>>& dlogits, const std::vector<Vec<T>>& dp,
                    ModelParams<T>& grads, std::vector<Mat<T>>* dimages = nullptr) {
  const int b = static_cast<int>(cache.samples.size());
  const bool use_gnn =
      cfg.ablation == AblationMode::Full || cfg.ablation == AblationMode::NoGraphRep;
  if (dimages) dimages->assign(static_cast<std::size_t>(b), Mat<T>());

  Mat<T> stacked_dm;
  if (use_gnn) stacked_dm.setZero(static_cast<Eigen::Index>(b) * cfg.n_au, cfg.d_au);

  for (int s = 0; s < b; ++s) {
    auto& sc = cache.samples[static_cast<std::size_t>(s)];
    Mat<T> dh_b = Mat<T>::Zero(cfg.positions, cfg.channels);
    Mat<T> dH_ap = Mat<T>::Zero(cfg.n_au, cfg.d_au);

    if (cfg.ablation == AblationMode::BackboneOnly) {
      if (!dlogits.empty() && dlogits[static_cast<std::size_t>(s)].size() > 0) {
        const Vec<T>& dl = dlogits[static_cast<std::size_t>(s)];
        grads.bb_w += dl * sc.head.pooled.transpose();
        grads.bb_b += dl;
        Vec<T> dpooled = params.bb_w.transpose() * dl;
        dh_b.rowwise() += (dpooled / T(cfg.positions)).transpose();
      }
      backbone_backward(dh_b, params, cfg, sc.backbone, grads,
                        dimages ? &(*dimages)[static_cast<std::size_t>(s)] : nullptr);
      continue;
    }

    if (!dlogits.empty() && dlogits[static_cast<std::size_t>(s)].size() > 0) {
      Vec<T> dh_ab, dhg_p;
      Vec<T> hg_branch = (cfg.ablation == AblationMode::NoGraphRep)
                             ? Vec<T>::Zero(cfg.proj_dim).eval()
                             : sc.fuse.hg_p;
      classify_backward(dlogits[static_cast<std::size_t>(s)], sc.h_ab, hg_branch, params, cfg,
                        grads, dh_ab, dhg_p);
      if (cfg.ablation == AblationMode::NoGraphRep) dhg_p.setZero();
      Mat<T> dh_b_fuse, dH_ap_fuse;
      fuse_backward(dh_ab, dhg_p, params, cfg, sc.fuse, grads, dh_b_fuse, dH_ap_fuse);
      dh_b += dh_b_fuse;
      dH_ap += dH_ap_fuse;
    }
    if (!dp.empty() && dp[static_cast<std::size_t>(s)].size() > 0) {
      Mat<T> dH_ap_cos;
      au_occurrence_backward(dp[static_cast<std::size_t>(s)], params, sc.cos, grads, dH_ap_cos);
      dH_ap += dH_ap_cos;
    }

    Mat<T> dH_a;
    if (use_gnn) {
      Mat<T> dres =
          dH_ap.cwiseProduct((sc.respre.array() > T(0)).template cast<T>().matrix());
      stacked_dm.middleRows(static_cast<Eigen::Index>(s) * cfg.n_au, cfg.n_au) = dres;
      dH_a = dres;  // residual path; BN path added after the joint BN backward
    } else {
      dH_a = dH_ap.cwiseProduct((sc.H_a.array() > T(0)).template cast<T>().matrix());
    }
    // stash per-sample gradients until the joint BN backward completes
    sc.dH_a_pending = dH_a;
    sc.dh_b_pending = dh_b;
  }

  // backbone-only samples are fully handled above
  if (cfg.ablation == AblationMode::BackboneOnly) return;

  Mat<T> stacked_dx;
  if (use_gnn) stacked_dx = bn_backward(stacked_dm, params, cache.bn, grads);

  for (int s = 0; s < b; ++s) {
    auto& sc = cache.samples[static_cast<std::size_t>(s)];
    Mat<T> dH_a = sc.dH_a_pending;
    Mat<T> dh_b = sc.dh_b_pending;
    if (use_gnn) {
      Mat<T> dm = stacked_dx.middleRows(static_cast<Eigen::Index>(s) * cfg.n_au, cfg.n_au);
      dH_a += gnn_linear_backward(dm, params, sc.gnn_lin, grads);
    }
    Vec<T> dpooled;
    au_heads_backward(dH_a, params, cfg, sc.head, grads, &dpooled);
    dh_b.rowwise() += (dpooled / T(cfg.positions)).transpose();
    backbone_backward(dh_b, params, cfg, sc.backbone, grads,
                      dimages ? &(*dimages)[static_cast<std::size_t>(s)] : nullptr);
  }
}

// ---------------------------------------------------------------------------
// Public inference surface

template <typename T>
struct ForwardOutput {
  Vec<T> logits;
  Vec<T> p;
  std::vector<std::uint8_t> degenerate;
  std::vector<int> occurrence_bits;  // [p_i >= threshold]
  // intermediates retained for inspection
  Mat<T> h_b, H_a, A, H_ap;
  Vec<T> h_g, h_ab;
};

inline constexpr double kOccurrenceThreshold = 0.5;

template <typename T>
ForwardOutput<T> forward(const Mat<T>& image, ModelParams<T>& params, const ModelConfig& cfg,
                         RunMode mode = RunMode::Eval) {
  BatchCache<T> cache;
  std::vector<Mat<T>> images{image};
  forward_batch(images, params, cfg, mode, cache);
  auto& sc = cache.samples[0];
  ForwardOutput<T> out;
  out.logits = sc.logits;
  out.p = sc.p;
  out.degenerate = sc.degenerate;
  out.occurrence_bits.resize(static_cast<std::size_t>(cfg.n_au));
  for (int i = 0; i < cfg.n_au; ++i)
    out.occurrence_bits[static_cast<std::size_t>(i)] =
        (sc.p.size() > 0 && sc.p(i) >= T(kOccurrenceThreshold)) ? 1 : 0;
  out.h_b = sc.backbone.h_b;
  out.H_a = sc.H_a;
  out.A = sc.A;
  out.H_ap = sc.H_ap;
  if (out.H_ap.rows() > 0) {
    out.h_g = out.H_ap.colwise().sum().transpose();
    out.h_ab = sc.h_ab;
  }
  return out;
}

}  // namespace graphau
