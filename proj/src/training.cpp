#include "mti/training.hpp"

#include "mti/manifest.hpp"
#include "mti/metrics.hpp"
#include "mti/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

namespace mti {
namespace {

struct UtteranceGrad {
  ForwardOutput output;
  ParamStore grads;
};

// Forward + backward of the batch objective restricted to one utterance.
// The 1/U factor is applied by the caller through `batch_size`.
void utterance_gradient(const TrainItem& item, const ParamStore& params, const ModelConfig& cfg,
                        const LossConfig& loss, const NormStats& norm, size_t batch_size,
                        UtteranceGrad& out) {
  const FrameFeatures feat = build_features(item.input, params, cfg);
  ForwardTrace trace;
  out.output = forward(feat, params, cfg, &norm, &trace);

  std::vector<OutputGrad> og;
  const ForwardOutput* outputs = &out.output;
  const UtteranceLabels* labels = &item.labels;
  const std::string* id = &item.utt_id;
  multitask_loss(std::span(outputs, 1), std::span(labels, 1), loss, std::span(id, 1), &og);
  const double scale = 1.0 / static_cast<double>(batch_size);
  for (auto& [t, v] : og[0].frame) v *= scale;
  for (auto& [t, v] : og[0].utt) v *= scale;

  out.grads = params.zeros_like();
  Matrix grad_lfb;
  backward(trace, params, cfg, og[0], out.grads, &grad_lfb);
  if (cfg.features.branches.contains(Branch::LFB)) {
    out.grads.at("lfb.weights") += lfb_backward(item.input.power, params.at("lfb.weights"),
                                                cfg.features.floor_eps, grad_lfb);
  }
}

double selection_score(const EpochLog& log, Target t) {
  auto it = log.val_lcc.find(t);
  if (it == log.val_lcc.end() || !it->second) return -std::numeric_limits<double>::infinity();
  return *it->second;
}

}  // namespace

FrameFeatures build_features(const UtteranceInput& input, const ParamStore& params,
                             const ModelConfig& cfg) {
  const FeatureLayout& layout = cfg.features;
  PowerSpectrogram ps;
  ps.frames = input.power;
  ps.frame_rate = static_cast<double>(layout.sample_rate) / layout.stft.hop_length;
  Matrix lfb;
  if (layout.branches.contains(Branch::LFB))
    lfb = lfb_forward(input.power, params.at("lfb.weights"), layout.floor_eps);
  std::optional<Matrix> ssl;
  if (layout.branches.contains(Branch::SSL)) ssl = input.ssl;
  return assemble_features(std::move(ps), std::move(lfb), std::move(ssl), layout.branches);
}

ForwardOutput predict(const UtteranceInput& input, const ParamStore& params,
                      const ModelConfig& cfg, const NormStats& norm) {
  return forward(build_features(input, params, cfg), params, cfg, &norm);
}

ForwardOutput predict(const UtteranceInput& input, const Checkpoint& ckpt) {
  return predict(input, ckpt.params, ckpt.model, ckpt.norm);
}

NormStats compute_norm_stats(std::span<const TrainItem> items, const ParamStore& params,
                             const ModelConfig& cfg) {
  std::vector<const TrainItem*> ptrs;
  for (const auto& it : items) ptrs.push_back(&it);
  return compute_norm_stats(std::span<const TrainItem* const>(ptrs), params, cfg);
}

NormStats compute_norm_stats(std::span<const TrainItem* const> items, const ParamStore& params,
                             const ModelConfig& cfg) {
  const FeatureLayout& layout = cfg.features;
  NormStats stats;
  if (!layout.normalize || items.empty()) return stats;
  auto accumulate = [&](auto&& transform, Vector& mean, Vector& stddev, int width) {
    Vector sum = Vector::Zero(width), sq = Vector::Zero(width);
    double count = 0.0;
    for (const TrainItem* item : items) {
      const Matrix x = transform(*item);
      sum += x.colwise().sum().transpose();
      sq += x.array().square().matrix().colwise().sum().transpose();
      count += static_cast<double>(x.rows());
    }
    mean = sum / count;
    Vector var = (sq / count).array() - mean.array().square();
    stddev = var.cwiseMax(0.0).cwiseSqrt().cwiseMax(1e-3);
  };
  if (layout.branches.contains(Branch::PS)) {
    accumulate([&](const TrainItem& it) {
      return Matrix((it.input.power.array() + layout.floor_eps).log());
    }, stats.ps_mean, stats.ps_std, layout.ps_width());
  }
  if (layout.branches.contains(Branch::LFB)) {
    const Matrix& bank = params.at("lfb.weights");
    accumulate([&](const TrainItem& it) {
      return lfb_forward(it.input.power, bank, layout.floor_eps);
    }, stats.lfb_mean, stats.lfb_std, layout.lfb_width());
  }
  return stats;
}

GradientResult compute_gradients(std::span<const TrainItem* const> batch,
                                 const ParamStore& params, const ModelConfig& cfg,
                                 const LossConfig& loss, const NormStats& norm, int threads) {
  if (batch.empty()) throw Error("compute_gradients: empty batch");
  std::vector<UtteranceGrad> per(batch.size());
  const size_t workers = std::clamp<size_t>(static_cast<size_t>(std::max(threads, 1)), 1, batch.size());
  if (workers == 1) {
    for (size_t u = 0; u < batch.size(); ++u)
      utterance_gradient(*batch[u], params, cfg, loss, norm, batch.size(), per[u]);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (size_t u = w; u < batch.size(); u += workers)
            utterance_gradient(*batch[u], params, cfg, loss, norm, batch.size(), per[u]);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  GradientResult result;
  result.grads = std::move(per[0].grads);
  for (size_t u = 1; u < per.size(); ++u) result.grads.add_scaled(per[u].grads, 1.0);

  std::vector<ForwardOutput> outputs;
  std::vector<UtteranceLabels> labels;
  std::vector<std::string> ids;
  for (size_t u = 0; u < batch.size(); ++u) {
    outputs.push_back(std::move(per[u].output));
    labels.push_back(batch[u]->labels);
    ids.push_back(batch[u]->utt_id);
  }
  result.terms = multitask_loss(outputs, labels, loss, ids);
  if (auto bad = result.grads.first_non_finite(); !bad.empty())
    throw NumericalError("non-finite gradient in tensor '" + bad + "'");
  if (!std::isfinite(result.terms.total)) throw NumericalError("non-finite loss");
  return result;
}

LossTerms batch_loss(std::span<const TrainItem* const> batch, const ParamStore& params,
                     const ModelConfig& cfg, const LossConfig& loss, const NormStats& norm) {
  std::vector<ForwardOutput> outputs;
  std::vector<UtteranceLabels> labels;
  std::vector<std::string> ids;
  for (const TrainItem* item : batch) {
    outputs.push_back(predict(item->input, params, cfg, norm));
    labels.push_back(item->labels);
    ids.push_back(item->utt_id);
  }
  return multitask_loss(outputs, labels, loss, ids);
}

void OptimConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw Error("optim.lr must be finite and >= 0");
  if (epochs < 0) throw Error("optim.epochs must be >= 0");
  if (batch_size < 1) throw Error("optim.batch_size must be >= 1");
  if (patience < 1) throw Error("optim.patience must be >= 1");
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw Error("optim.val_fraction must be in (0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw Error("optim betas must be in [0, 1)");
}

OptimConfig OptimConfig::from_config(const Config& cfg) {
  OptimConfig o;
  const std::string algo = cfg.get("optim.algorithm", "adam");
  if (algo == "adam") {
    o.algorithm = Algorithm::adam;
  } else if (algo == "sgd") {
    o.algorithm = Algorithm::sgd;
  } else {
    throw Error("optim.algorithm must be adam or sgd");
  }
  o.learning_rate = cfg.get_double("optim.lr", o.learning_rate);
  o.beta1 = cfg.get_double("optim.beta1", o.beta1);
  o.beta2 = cfg.get_double("optim.beta2", o.beta2);
  o.epsilon = cfg.get_double("optim.epsilon", o.epsilon);
  o.momentum = cfg.get_double("optim.momentum", o.momentum);
  o.epochs = static_cast<int>(cfg.get_int("optim.epochs", o.epochs));
  o.batch_size = static_cast<int>(cfg.get_int("optim.batch_size", o.batch_size));
  o.patience = static_cast<int>(cfg.get_int("optim.patience", o.patience));
  o.grad_clip = cfg.get_double("optim.grad_clip", o.grad_clip);
  o.seed = static_cast<uint64_t>(cfg.get_int("optim.seed", static_cast<long long>(o.seed)));
  o.val_fraction = cfg.get_double("optim.val_fraction", o.val_fraction);
  o.threads = static_cast<int>(cfg.get_int("optim.threads", o.threads));
  o.deterministic = cfg.get_bool("optim.deterministic", o.deterministic);
  o.validate();
  return o;
}

void OptimConfig::to_config(Config& cfg) const {
  cfg.set("optim.algorithm", algorithm == Algorithm::adam ? "adam" : "sgd");
  cfg.set("optim.lr", format_double(learning_rate));
  cfg.set("optim.beta1", format_double(beta1));
  cfg.set("optim.beta2", format_double(beta2));
  cfg.set("optim.epsilon", format_double(epsilon));
  cfg.set("optim.momentum", format_double(momentum));
  cfg.set("optim.epochs", std::to_string(epochs));
  cfg.set("optim.batch_size", std::to_string(batch_size));
  cfg.set("optim.patience", std::to_string(patience));
  cfg.set("optim.grad_clip", format_double(grad_clip));
  cfg.set("optim.seed", std::to_string(seed));
  cfg.set("optim.val_fraction", format_double(val_fraction));
}

double clip_gradients(ParamStore& grads, double max_norm) {
  const double norm = grads.global_norm();
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [name, g] : grads) g *= scale;
  }
  return norm;
}

void Optimizer::step(ParamStore& params, const ParamStore& grads) {
  if (first_.size() == 0) {
    first_ = params.zeros_like();
    second_ = params.zeros_like();
  }
  ++steps_;
  const double lr = cfg_.learning_rate;
  if (cfg_.algorithm == Algorithm::sgd) {
    for (auto& [name, p] : params) {
      Matrix& vel = first_.at(name);
      vel = cfg_.momentum * vel + grads.at(name);
      p -= lr * vel;
    }
    return;
  }
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (auto& [name, p] : params) {
    const Matrix& g = grads.at(name);
    Matrix& m = first_.at(name);
    Matrix& v = second_.at(name);
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.epsilon);
  }
}

std::string EpochLog::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["O"] = objective;
  for (Target t : kAllTargets) {
    auto it = task_loss.find(t);
    j["L_" + std::string(target_name(t))] = it == task_loss.end() ? 0.0 : it->second;
  }
  for (Target t : kAllTargets) {
    auto it = val_lcc.find(t);
    const std::string key = "val_lcc_" + std::string(target_name(t));
    if (it != val_lcc.end() && it->second) {
      j[key] = *it->second;
    } else {
      j[key] = nullptr;
    }
  }
  return j.dump();
}

ParamStore transfer_init(const Checkpoint& source, const ModelConfig& target_cfg,
                         TransferReport* report) {
  ParamStore params = init_params(target_cfg);
  TransferReport local;
  std::vector<std::string> offending;
  for (auto& [name, value] : params) {
    if (!source.params.contains(name)) {
      local.fresh.push_back(name);
      continue;
    }
    const Matrix& src = source.params.at(name);
    if (src.rows() != value.rows() || src.cols() != value.cols()) {
      offending.push_back(name + " (source " + std::to_string(src.rows()) + "x" +
                          std::to_string(src.cols()) + ", target " + std::to_string(value.rows()) +
                          "x" + std::to_string(value.cols()) + ")");
      continue;
    }
    value = src;
    local.copied.push_back(name);
  }
  if (!offending.empty()) {
    std::string msg = "warm start shape mismatch:";
    for (const auto& o : offending) msg += " " + o + ";";
    throw Error(msg);
  }
  if (report) *report = std::move(local);
  return params;
}

Target selection_target(const TargetSet& targets) {
  if (targets.contains(Target::I)) return Target::I;
  return targets.list().front();
}

TrainResult train(std::span<const TrainItem> items, const ModelConfig& model_cfg,
                  const LossConfig& loss_cfg, const OptimConfig& optim_cfg,
                  const Checkpoint* warm_start,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  model_cfg.validate();
  loss_cfg.validate();
  optim_cfg.validate();
  if (!(loss_cfg.targets == model_cfg.targets))
    throw Error("loss targets " + loss_cfg.targets.to_string() + " differ from model targets " +
                model_cfg.targets.to_string());
  if (items.empty()) throw Error("train: empty training set");
  for (const auto& item : items) {
    for (Target t : model_cfg.targets.list())
      if (!item.labels.get(t))
        throw Error("utterance " + item.utt_id + " has no " + std::string(target_name(t)) +
                    " label but the target is active");
  }

  TrainResult result;
  auto [train_idx, val_idx] = split_indices(items.size(), optim_cfg.val_fraction, optim_cfg.seed);
  std::vector<const TrainItem*> train_set, val_set;
  for (size_t i : train_idx) {
    train_set.push_back(&items[i]);
    result.train_ids.push_back(items[i].utt_id);
  }
  for (size_t i : val_idx) {
    val_set.push_back(&items[i]);
    result.val_ids.push_back(items[i].utt_id);
  }

  ParamStore params;
  NormStats norm;
  if (warm_start) {
    params = transfer_init(*warm_start, model_cfg, &result.transfer);
    if (!warm_start->norm.empty() && warm_start->model.features.branches == model_cfg.features.branches &&
        warm_start->model.features.normalize == model_cfg.features.normalize) {
      norm = warm_start->norm;
    }
  } else {
    params = init_params(model_cfg);
  }
  if (norm.empty()) norm = compute_norm_stats(train_set, params, model_cfg);

  auto snapshot = [&](int epoch) {
    Checkpoint c;
    c.model = model_cfg;
    c.loss = loss_cfg;
    c.params = params;
    c.norm = norm;
    c.info.set("train.best_epoch", std::to_string(epoch));
    if (warm_start) c.info.set("train.warm_start", "1");
    return c;
  };
  result.best = snapshot(0);

  const int threads = optim_cfg.deterministic ? 1 : std::max(optim_cfg.threads, 1);
  const Target select = selection_target(model_cfg.targets);
  double best_score = -std::numeric_limits<double>::infinity();
  Optimizer optimizer(optim_cfg);
  Rng shuffle_rng(optim_cfg.seed ^ 0xB47C4ULL);
  std::vector<const TrainItem*> order = train_set;

  for (int epoch = 1; epoch <= optim_cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    EpochLog log;
    log.epoch = epoch;
    double seen = 0.0;
    try {
      for (size_t start = 0; start < order.size(); start += static_cast<size_t>(optim_cfg.batch_size)) {
        const size_t end = std::min(order.size(), start + static_cast<size_t>(optim_cfg.batch_size));
        std::span<const TrainItem* const> batch(order.data() + start, end - start);
        GradientResult g = compute_gradients(batch, params, model_cfg, loss_cfg, norm, threads);
        const double w = static_cast<double>(batch.size());
        log.objective += w * g.terms.total;
        for (Target t : model_cfg.targets.list()) log.task_loss[t] += w * g.terms.term(t);
        seen += w;
        clip_gradients(g.grads, optim_cfg.grad_clip);
        optimizer.step(params, g.grads);
        if (params.contains("lfb.weights"))
          params.at("lfb.weights") = params.at("lfb.weights").cwiseMax(0.0);
        if (auto bad = params.first_non_finite(); !bad.empty())
          throw NumericalError("non-finite parameter '" + bad + "' after update");
      }
    } catch (const NumericalError& e) {
      result.diverged = true;
      result.message = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
    log.objective /= seen;
    for (auto& [t, v] : log.task_loss) v /= seen;

    std::map<Target, std::vector<double>> truth, pred;
    for (const TrainItem* item : val_set) {
      const ForwardOutput out = predict(item->input, params, model_cfg, norm);
      for (Target t : model_cfg.targets.list()) {
        truth[t].push_back(*item->labels.get(t));
        pred[t].push_back(out.at(t).utt_score);
      }
    }
    for (Target t : model_cfg.targets.list()) {
      try {
        log.val_lcc[t] = lcc(truth[t], pred[t]);
      } catch (const Error&) {
        log.val_lcc[t] = std::nullopt;
      }
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);

    const double score = selection_score(log, select);
    if (score > best_score || result.best_epoch == 0) {
      if (score > best_score) best_score = score;
      result.best_epoch = epoch;
      result.best = snapshot(epoch);
    }
    if (epoch - result.best_epoch >= optim_cfg.patience) break;
  }
  return result;
}

}  // namespace mti
