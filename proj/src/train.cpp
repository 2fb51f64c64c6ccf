#include "graphau/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "graphau/errors.hpp"
#include "graphau/eval.hpp"
#include "graphau/rng.hpp"
#include "graphau/synth.hpp"

using nlohmann::json;

namespace graphau {

bool is_representation_param(const std::string& name) {
  return name.rfind("backbone.conv", 0) == 0 || name.rfind("au_head.", 0) == 0 ||
         name.rfind("gnn.", 0) == 0 || name.rfind("sim.", 0) == 0;
}

bool is_sft_trainable(const std::string& name) { return is_representation_param(name); }

void load_representation_params(ModelParams<float>& into, const ModelParams<float>& from) {
  auto dst = tensor_views<float>(into);
  auto src = tensor_views<float>(const_cast<ModelParams<float>&>(from));
  if (dst.size() != src.size()) throw IncompatibleCheckpointError("tensor count mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (!is_representation_param(dst[i].name)) continue;
    if (dst[i].size != src[i].size)
      throw IncompatibleCheckpointError("shape mismatch for " + dst[i].name);
    std::copy(src[i].data, src[i].data + src[i].size, dst[i].data);
  }
}

namespace {

void check_model_matches(const ModelConfig& a, const ModelConfig& b) {
  if (a.n_au != b.n_au || a.d_au != b.d_au || a.positions != b.positions ||
      a.channels != b.channels || a.image_side != b.image_side ||
      a.conv_channels != b.conv_channels)
    throw IncompatibleCheckpointError("checkpoint config does not match the model");
}

std::vector<Mat<float>> render_batch(const DatasetManifest& manifest,
                                     const std::vector<std::size_t>& order, std::size_t start,
                                     std::size_t stop, std::vector<Image>& cache,
                                     std::vector<char>& cached) {
  std::vector<Mat<float>> images;
  images.reserve(stop - start);
  for (std::size_t k = start; k < stop; ++k) {
    const std::size_t idx = order[k];
    if (!cached[idx]) {
      cache[idx] = load_image(manifest.records[idx].image_ref);
      cached[idx] = 1;
    }
    images.push_back(cache[idx]);
  }
  return images;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch,
                                     const char* tag) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(fnv1a64(std::string(tag) + std::to_string(epoch), seed));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

Checkpoint pretrain_au(const ModelParams<float>& initial, const ModelConfig& model_cfg,
                       const DatasetManifest& manifest, const TrainConfig& cfg,
                       EpochLogger logger) {
  model_cfg.validate();
  if (manifest.records.empty()) throw EmptyDatasetError("AU pretraining manifest is empty");
  if (static_cast<int>(manifest.modeled_aus.size()) != model_cfg.n_au)
    throw ShapeMismatchError("modeled AU set size vs model n_au");

  Checkpoint ckpt;
  ckpt.config = model_cfg;
  ckpt.params = initial;
  ckpt.stage_history = {"au_sft"};

  const auto& codes = manifest.modeled_aus.codes();
  const std::vector<double> pos_weights = au_positive_weights(manifest);
  Adam<float> opt(AdamConfig{cfg.lr, cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay},
                  is_sft_trainable);

  const std::size_t n = manifest.records.size();
  std::vector<Image> image_cache(n);
  std::vector<char> cached(n, 0);
  std::ostringstream metrics_log;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(n, cfg.seed, epoch, "sft-epoch-");
    double loss_sum = 0;
    std::size_t batches = 0;
    std::vector<long long> tp(codes.size(), 0), fp(codes.size(), 0), fn(codes.size(), 0);

    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      auto images = render_batch(manifest, order, start, stop, image_cache, cached);
      const auto b = static_cast<Eigen::Index>(stop - start);

      BatchCache<float> cache;
      forward_batch(images, ckpt.params, model_cfg, RunMode::Train, cache);

      Mat<float> probs(b, model_cfg.n_au), bits(b, model_cfg.n_au);
      for (Eigen::Index s = 0; s < b; ++s) {
        probs.row(s) = cache.samples[static_cast<std::size_t>(s)].p.transpose();
        const auto& rec = manifest.records[order[start + static_cast<std::size_t>(s)]];
        for (std::size_t a = 0; a < codes.size(); ++a)
          bits(s, static_cast<Eigen::Index>(a)) =
              static_cast<float>(rec.occurrence.at(codes[a]));
      }
      Mat<float> dp_mat;
      const float loss = au_bce_loss(probs, bits, pos_weights, cfg.loss_eps, &dp_mat);
      if (!std::isfinite(loss)) throw NumericError("AU pretraining loss is not finite");
      loss_sum += loss;
      ++batches;

      for (Eigen::Index s = 0; s < b; ++s)
        for (std::size_t a = 0; a < codes.size(); ++a) {
          const bool pred = probs(s, static_cast<Eigen::Index>(a)) >= float(kOccurrenceThreshold);
          const bool truth = bits(s, static_cast<Eigen::Index>(a)) > 0.5f;
          if (pred && truth) ++tp[a];
          else if (pred && !truth) ++fp[a];
          else if (!pred && truth) ++fn[a];
        }

      std::vector<Vec<float>> dp(static_cast<std::size_t>(b));
      for (Eigen::Index s = 0; s < b; ++s) dp[static_cast<std::size_t>(s)] = dp_mat.row(s);
      ModelParams<float> grads = zero_grads<float>(model_cfg);
      backward_batch(cache, ckpt.params, model_cfg, {}, dp, grads);
      opt.step(ckpt.params, grads);
    }

    double f1_sum = 0;
    for (std::size_t a = 0; a < codes.size(); ++a) {
      const double denom = 2.0 * tp[a] + fp[a] + fn[a];
      f1_sum += (denom > 0) ? 2.0 * tp[a] / denom : 0.0;
    }
    json line;
    line["stage"] = "au_sft";
    line["epoch"] = epoch;
    line["loss"] = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    line["train_mean_au_f1"] = f1_sum / static_cast<double>(codes.size());
    metrics_log << line.dump() << "\n";
    if (logger) logger(line.dump());
  }

  ckpt.epoch = cfg.epochs;
  ckpt.metrics_jsonl = metrics_log.str();
  return ckpt;
}

Checkpoint train_pain(const ModelParams<float>& initial, const ModelConfig& model_cfg,
                      const DatasetManifest& manifest, const TrainConfig& cfg,
                      const Checkpoint* init, EpochLogger logger) {
  model_cfg.validate();
  if (manifest.records.empty()) throw EmptyDatasetError("pain training manifest is empty");
  const int c = (cfg.scheme == WeightScheme::ThreeCat) ? 3 : 4;
  if (model_cfg.d_pain != c) throw ShapeMismatchError("model d_pain vs weight scheme");

  Checkpoint ckpt;
  ckpt.config = model_cfg;
  ckpt.params = initial;
  if (init) {
    check_model_matches(model_cfg, init->config);
    load_representation_params(ckpt.params, init->params);
    ckpt.stage_history = init->stage_history;
  }
  ckpt.stage_history.push_back("pain");

  // optional subject-disjoint validation slice
  DatasetManifest train = manifest;
  DatasetManifest val;
  if (cfg.val_fraction > 0) {
    std::set<std::string> subjects;
    for (const auto& r : manifest.records) subjects.insert(r.subject_id);
    if (subjects.size() >= 2) {
      auto split = split_subject_disjoint(manifest, cfg.val_fraction, cfg.seed);
      train = std::move(split.train);
      val = std::move(split.test);
    }
  }
  if (train.records.empty()) throw EmptyDatasetError("training split is empty");

  std::vector<double> weights = cfg.class_weights;
  if (weights.empty()) weights = compute_class_weights(train, cfg.scheme).weights;
  if (static_cast<int>(weights.size()) != c) throw ShapeMismatchError("class weight count");

  Adam<float> opt(AdamConfig{cfg.lr, cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay},
                  model_cfg.ablation == AblationMode::BackboneOnly
                      ? Adam<float>::Filter([](const std::string& n) {
                          return n.rfind("backbone.conv", 0) == 0 ||
                                 n.rfind("backbone_cls.", 0) == 0;
                        })
                      : Adam<float>::Filter(nullptr));

  const std::size_t n = train.records.size();
  std::vector<Image> image_cache(n);
  std::vector<char> cached(n, 0);
  std::ostringstream metrics_log;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(n, cfg.seed, epoch, "pain-epoch-");
    double loss_sum = 0;
    std::size_t batches = 0;

    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      auto images = render_batch(train, order, start, stop, image_cache, cached);
      const auto b = static_cast<Eigen::Index>(stop - start);

      BatchCache<float> cache;
      forward_batch(images, ckpt.params, model_cfg, RunMode::Train, cache);

      Mat<float> logits(b, c), onehot = Mat<float>::Zero(b, c);
      for (Eigen::Index s = 0; s < b; ++s) {
        logits.row(s) = cache.samples[static_cast<std::size_t>(s)].logits.transpose();
        const auto& rec = train.records[order[start + static_cast<std::size_t>(s)]];
        const int label = (cfg.scheme == WeightScheme::ThreeCat) ? static_cast<int>(rec.label3)
                                                                 : static_cast<int>(rec.label4);
        onehot(s, label) = 1.0f;
      }
      Mat<float> dlogits_mat;
      const float loss = weighted_ce_loss(logits, onehot, weights, cfg.loss_eps, &dlogits_mat);
      if (!std::isfinite(loss)) throw NumericError("pain training loss is not finite");
      loss_sum += loss;
      ++batches;

      std::vector<Vec<float>> dlogits(static_cast<std::size_t>(b));
      for (Eigen::Index s = 0; s < b; ++s)
        dlogits[static_cast<std::size_t>(s)] = dlogits_mat.row(s);
      ModelParams<float> grads = zero_grads<float>(model_cfg);
      backward_batch(cache, ckpt.params, model_cfg, dlogits, {}, grads);
      opt.step(ckpt.params, grads);
    }

    json line;
    line["stage"] = "pain";
    line["epoch"] = epoch;
    line["loss"] = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    if (!val.records.empty()) {
      EvalResult ev = evaluate_model(ckpt.params, model_cfg, val, cfg.scheme);
      line["val_macro_f1"] = ev.pain.macro_f1;
      line["val_accuracy"] = ev.pain.accuracy;
    }
    metrics_log << line.dump() << "\n";
    if (logger) logger(line.dump());
  }

  ckpt.epoch = cfg.epochs;
  ckpt.metrics_jsonl = metrics_log.str();
  return ckpt;
}

}  // namespace graphau
