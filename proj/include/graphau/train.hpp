#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "graphau/checkpoint.hpp"
#include "graphau/manifest.hpp"
#include "graphau/model.hpp"
#include "graphau/pipeline.hpp"

namespace graphau {

// ---------------------------------------------------------------------------
// Losses

// Weighted cross-entropy over softmax probabilities with eps-clamped logs.
// logits/onehot are N x C; labels must be exactly one-hot. Optional dlogits
// receives the gradient.
template <typename T>
T weighted_ce_loss(const Mat<T>& logits, const Mat<T>& onehot, const std::vector<double>& weights,
                   double eps, Mat<T>* dlogits = nullptr) {
  const Eigen::Index n = logits.rows(), c = logits.cols();
  if (onehot.rows() != n || onehot.cols() != c) throw ShapeMismatchError("labels vs logits");
  if (static_cast<Eigen::Index>(weights.size()) != c)
    throw ShapeMismatchError("class weight count");
  if (dlogits) dlogits->setZero(n, c);
  T loss = T(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    int truth = -1;
    for (Eigen::Index j = 0; j < c; ++j) {
      const T y = onehot(i, j);
      if (y == T(1)) {
        if (truth >= 0) throw NonOneHotLabelError("row " + std::to_string(i));
        truth = static_cast<int>(j);
      } else if (y != T(0)) {
        throw NonOneHotLabelError("row " + std::to_string(i));
      }
    }
    if (truth < 0) throw NonOneHotLabelError("row " + std::to_string(i));

    // softmax with max-shift
    Vec<T> row = logits.row(i).transpose();
    const T mx = row.maxCoeff();
    Vec<T> ex = (row.array() - mx).exp();
    const T z = ex.sum();
    Vec<T> p = ex / z;
    const T w = static_cast<T>(weights[static_cast<std::size_t>(truth)]);
    const T pt = p(truth);
    loss -= w * std::log(std::max(pt, static_cast<T>(eps)));
    if (dlogits && pt > static_cast<T>(eps)) {
      for (Eigen::Index j = 0; j < c; ++j)
        (*dlogits)(i, j) = w / static_cast<T>(n) * (p(j) - (static_cast<int>(j) == truth));
    }
  }
  return loss / static_cast<T>(n);
}

// Weighted binary cross-entropy on probabilities, mean over samples and AUs.
// pos_weights has one positive-class weight per AU column.
template <typename T>
T au_bce_loss(const Mat<T>& p, const Mat<T>& bits, const std::vector<double>& pos_weights,
              double eps, Mat<T>* dp = nullptr) {
  const Eigen::Index n = p.rows(), a = p.cols();
  if (bits.rows() != n || bits.cols() != a) throw ShapeMismatchError("bits vs probabilities");
  if (static_cast<Eigen::Index>(pos_weights.size()) != a)
    throw ShapeMismatchError("per-AU weight count");
  if (dp) dp->setZero(n, a);
  const T e = static_cast<T>(eps);
  const T scale = T(1) / static_cast<T>(n * a);
  T loss = T(0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < a; ++j) {
      const T w = static_cast<T>(pos_weights[static_cast<std::size_t>(j)]);
      const T b = bits(i, j);
      if (b != T(0) && b != T(1)) throw NonOneHotLabelError("occurrence bits must be 0/1");
      const T pij = p(i, j);
      loss -= w * b * std::log(std::max(pij, e));
      loss -= (T(1) - b) * std::log(std::max(T(1) - pij, e));
      if (dp) {
        T g = T(0);
        if (b == T(1) && pij > e) g -= w / pij;
        if (b == T(0) && T(1) - pij > e) g += T(1) / (T(1) - pij);
        (*dp)(i, j) = g * scale;
      }
    }
  return loss * scale;
}

// ---------------------------------------------------------------------------
// Optimizer: Adam with classical L2 weight decay folded into the gradient.

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;
};

// Flat view over one parameter tensor; Eigen dense storage is contiguous.
template <typename T>
struct TensorView {
  std::string name;
  T* data = nullptr;
  Eigen::Index size = 0;
  bool trainable = true;
};

template <typename T, typename P>
std::vector<TensorView<T>> tensor_views(P& p) {
  std::vector<TensorView<T>> out;
  for_each_tensor<T>(p, [&](const std::string& n, auto& t, bool tr) {
    out.push_back({n, t.data(), t.size(), tr});
  });
  return out;
}

template <typename T>
class Adam {
public:
  using Filter = std::function<bool(const std::string&)>;

  explicit Adam(AdamConfig cfg, Filter trainable = nullptr)
      : cfg_(cfg), trainable_(std::move(trainable)) {}

  void step(ModelParams<T>& params, const ModelParams<T>& grads) {
    ++step_;
    const T bias1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, step_));
    const T bias2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, step_));
    auto pv = tensor_views<T>(params);
    auto gv = tensor_views<T>(const_cast<ModelParams<T>&>(grads));
    for (std::size_t i = 0; i < pv.size(); ++i) {
      if (!pv[i].trainable) continue;
      if (trainable_ && !trainable_(pv[i].name)) continue;
      Eigen::Map<Vec<T>> t(pv[i].data, pv[i].size);
      Eigen::Map<const Vec<T>> g(gv[i].data, gv[i].size);
      auto& m = m_[pv[i].name];
      auto& v = v_[pv[i].name];
      if (m.size() != pv[i].size) {
        m = Vec<T>::Zero(pv[i].size);
        v = Vec<T>::Zero(pv[i].size);
      }
      Vec<T> grad = g + static_cast<T>(cfg_.weight_decay) * t;
      m = static_cast<T>(cfg_.beta1) * m + (T(1) - static_cast<T>(cfg_.beta1)) * grad;
      v = (static_cast<T>(cfg_.beta2) * v.array() +
           (T(1) - static_cast<T>(cfg_.beta2)) * grad.array().square())
              .matrix();
      t.array() -= static_cast<T>(cfg_.lr) * (m.array() / bias1) /
                   ((v.array() / bias2).sqrt() + static_cast<T>(cfg_.eps));
    }
  }

private:
  AdamConfig cfg_;
  Filter trainable_;
  long step_ = 0;
  std::map<std::string, Vec<T>> m_, v_;
};

// ---------------------------------------------------------------------------
// Training configuration and loops

enum class TrainStage { AuSft, Pain };

struct TrainConfig {
  TrainStage stage = TrainStage::Pain;
  double lr = 1e-4;
  int batch_size = 64;
  int epochs = 8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 5e-4;
  double loss_eps = 1e-8;
  std::uint64_t seed = 1;
  std::vector<double> class_weights;  // empty: derive from data
  WeightScheme scheme = WeightScheme::ThreeCat;
  double val_fraction = 0.1;

  static TrainConfig au_sft_defaults() {
    TrainConfig c;
    c.stage = TrainStage::AuSft;
    c.lr = 1e-5;
    c.batch_size = 16;
    c.epochs = 17;
    return c;
  }
  static TrainConfig pain_defaults() {
    TrainConfig c;
    c.stage = TrainStage::Pain;
    c.lr = 1e-4;
    c.batch_size = 64;
    c.epochs = 8;
    return c;
  }
};

using EpochLogger = std::function<void(const std::string& json_line)>;

// AU-occurrence pretraining: optimizes backbone + AU branch through the
// cosine head with the weighted BCE loss. Projection/classifier parameters
// are untouched.
Checkpoint pretrain_au(const ModelParams<float>& initial, const ModelConfig& model_cfg,
                       const DatasetManifest& manifest, const TrainConfig& cfg,
                       EpochLogger logger = nullptr);

// Pain-intensity training with the weighted cross-entropy loss. When init
// is given, its representation parameters (backbone, AU heads, GNN,
// anchors) are copied in first; fusion/classifier stay freshly initialized.
Checkpoint train_pain(const ModelParams<float>& initial, const ModelConfig& model_cfg,
                      const DatasetManifest& manifest, const TrainConfig& cfg,
                      const Checkpoint* init = nullptr, EpochLogger logger = nullptr);

// Copies the representation-module tensors of `from` into `into`; shapes
// must agree.
void load_representation_params(ModelParams<float>& into, const ModelParams<float>& from);

bool is_representation_param(const std::string& name);
bool is_sft_trainable(const std::string& name);

}  // namespace graphau
