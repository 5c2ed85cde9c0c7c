#include "mti/loss.hpp"

#include <cmath>

namespace mti {

double LossConfig::alpha(Target t) const {
  switch (t) {
    case Target::I: return alpha_i;
    case Target::W: return alpha_w;
    case Target::S: return alpha_s;
  }
  return 0.0;
}

void LossConfig::set_alpha(Target t, double v) {
  switch (t) {
    case Target::I: alpha_i = v; break;
    case Target::W: alpha_w = v; break;
    case Target::S: alpha_s = v; break;
  }
}

void LossConfig::validate() const {
  for (Target t : kAllTargets) {
    const double a = alpha(t);
    if (!std::isfinite(a) || a < 0.0)
      throw Error("loss weight alpha_" + std::string(target_name(t)) + " must be finite and >= 0");
  }
  if (targets.empty()) throw Error("loss config: no active target");
}

LossConfig LossConfig::from_config(const Config& cfg) {
  LossConfig l;
  l.alpha_i = cfg.get_double("loss.alpha_I", l.alpha_i);
  l.alpha_w = cfg.get_double("loss.alpha_W", l.alpha_w);
  l.alpha_s = cfg.get_double("loss.alpha_S", l.alpha_s);
  l.targets = TargetSet::parse(cfg.get("model.targets", l.targets.to_string()));
  l.validate();
  return l;
}

void LossConfig::to_config(Config& cfg) const {
  cfg.set("loss.alpha_I", format_double(alpha_i));
  cfg.set("loss.alpha_W", format_double(alpha_w));
  cfg.set("loss.alpha_S", format_double(alpha_s));
}

std::optional<double> UtteranceLabels::get(Target t) const {
  switch (t) {
    case Target::I: return intelligibility;
    case Target::W: return wer;
    case Target::S: return stoi;
  }
  return std::nullopt;
}

void UtteranceLabels::set(Target t, std::optional<double> v) {
  switch (t) {
    case Target::I: intelligibility = v; break;
    case Target::W: wer = v; break;
    case Target::S: stoi = v; break;
  }
}

void UtteranceLabels::validate() const {
  for (Target t : kAllTargets) {
    auto v = get(t);
    if (v && !(std::isfinite(*v) && *v >= 0.0 && *v <= 1.0))
      throw Error("label " + std::string(target_name(t)) + " = " + format_double(*v) +
                  " outside [0, 1]");
  }
}

double LossTerms::term(Target t) const {
  auto it = tasks.find(t);
  return it == tasks.end() ? 0.0 : it->second.total();
}

LossTerms multitask_loss(std::span<const ForwardOutput> outputs,
                         std::span<const UtteranceLabels> labels, const LossConfig& cfg,
                         std::span<const std::string> utt_ids,
                         std::vector<OutputGrad>* grads) {
  if (outputs.size() != labels.size())
    throw Error("multitask_loss: " + std::to_string(outputs.size()) + " outputs but " +
                std::to_string(labels.size()) + " label sets");
  if (outputs.empty()) throw Error("multitask_loss: empty batch");
  const double inv_u = 1.0 / static_cast<double>(outputs.size());
  auto name = [&](size_t u) {
    return u < utt_ids.size() ? utt_ids[u] : "#" + std::to_string(u);
  };

  LossTerms terms;
  if (grads) grads->assign(outputs.size(), OutputGrad{});
  for (Target t : cfg.targets.list()) {
    const double alpha = cfg.alpha(t);
    TaskLoss task;
    for (size_t u = 0; u < outputs.size(); ++u) {
      auto truth = labels[u].get(t);
      if (!truth)
        throw Error("utterance " + name(u) + " has no " + std::string(target_name(t)) +
                    " label but the target is active");
      if (!outputs[u].has(t))
        throw Error("utterance " + name(u) + " has no " + std::string(target_name(t)) +
                    " prediction");
      const TaskScores& pred = outputs[u].at(t);
      const auto frames = pred.frame_scores.size();
      if (frames == 0) throw Error("utterance " + name(u) + " has no frames");
      const double inv_f = 1.0 / static_cast<double>(frames);

      const double utt_residual = *truth - pred.utt_score;
      task.utterance += inv_u * utt_residual * utt_residual;
      Vector residual = (*truth - pred.frame_scores.array()).matrix();
      task.frame += inv_u * alpha * inv_f * residual.squaredNorm();

      if (grads) {
        OutputGrad& g = (*grads)[u];
        g.utt[t] = -2.0 * inv_u * utt_residual;
        g.frame[t] = (-2.0 * inv_u * alpha * inv_f) * residual;
      }
    }
    terms.tasks[t] = task;
    terms.total += task.total();
  }
  return terms;
}

}  // namespace mti
