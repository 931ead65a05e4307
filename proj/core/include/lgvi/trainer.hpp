#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "lgvi/checkpoint.hpp"
#include "lgvi/nn.hpp"
#include "lgvi/video.hpp"

namespace lgvi::train {

enum class Mode { lgvi, lgvi_i };

inline Mode mode_from_string(const std::string& s) {
  if (s == "lgvi") return Mode::lgvi;
  if (s == "lgvi_i") return Mode::lgvi_i;
  throw std::invalid_argument("unknown mode '" + s + "'");
}

struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 0.001;
  double lambda3 = 0.1;  // ignored in non-interactive mode
};

// --- loss composition ---------------------------------------------------------

// ||eps - eps_hat||^2 averaged over elements.
template <class S>
Var<S> diffusion_loss(const Var<S>& eps, const Var<S>& eps_hat) {
  return mse_mean(eps, eps_hat);
}

// Per-pixel binary cross entropy on sigmoid(logits) against a binary mask.
template <class S>
Var<S> mask_loss(const Var<S>& logits, const MaskClip& mask) {
  if (logits->value.numel() != static_cast<int64_t>(mask.data.size()))
    throw std::invalid_argument("mask_loss: logits/mask element count mismatch");
  Tensor<S> target(logits->value.shape);
  for (size_t i = 0; i < mask.data.size(); ++i) {
    if (mask.data[i] > 1) throw std::invalid_argument("mask_loss: mask values must be 0/1");
    target.data[i] = static_cast<S>(mask.data[i]);
  }
  return bce_logits_mean(logits, target);
}

template <class S>
struct LossParts {
  Var<S> diff, mask, lm;
};

template <class S>
Var<S> total_loss(const LossParts<S>& parts, const LossWeights& w, Mode mode) {
  if (!parts.diff || !parts.mask)
    throw std::invalid_argument("total_loss: diffusion and mask parts are required");
  auto total = add(scale(parts.diff, w.lambda1), scale(parts.mask, w.lambda2));
  if (mode == Mode::lgvi_i) {
    if (!parts.lm) throw std::invalid_argument("total_loss: interactive mode requires lm part");
    total = add(total, scale(parts.lm, w.lambda3));
  }
  return total;
}

// --- optimizer ------------------------------------------------------------------

// Adam with per-group learning rates selected by parameter-name prefix
// (longest match wins). beta = (0.9, 0.999), no weight decay.
class Adam {
 public:
  struct Group {
    std::string prefix;
    double lr;
  };

  explicit Adam(std::vector<Group> groups, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : groups_(std::move(groups)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  double lr_for(const std::string& name) const {
    size_t best_len = 0;
    double lr = 0;
    bool found = false;
    for (const auto& g : groups_) {
      if (name.rfind(g.prefix, 0) == 0 && (g.prefix.size() >= best_len || !found)) {
        best_len = g.prefix.size();
        lr = g.lr;
        found = true;
      }
    }
    if (!found) throw std::invalid_argument("adam: no learning-rate group for " + name);
    return lr;
  }

  void step(const std::vector<ParamStore<float>*>& stores) {
    ++t_;
    double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto* ps : stores) {
      for (auto& [name, var] : ps->params) {
        if (var->grad.numel() == 0) continue;  // parameter untouched this step
        double lr = lr_for(name);
        auto& mv = moments_[name];
        if (mv.first.numel() == 0) {
          mv.first = Tensor<float>::zeros(var->value.shape);
          mv.second = Tensor<float>::zeros(var->value.shape);
        }
        float* m = mv.first.ptr();
        float* v = mv.second.ptr();
        float* p = var->value.ptr();
        const float* g = var->grad.ptr();
        const int64_t n = var->value.numel();
        for (int64_t i = 0; i < n; ++i) {
          m[i] = static_cast<float>(beta1_ * m[i] + (1.0 - beta1_) * g[i]);
          v[i] = static_cast<float>(beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i]);
          double mhat = m[i] / c1;
          double vhat = v[i] / c2;
          p[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps_));
        }
      }
    }
  }

  int64_t steps_taken() const { return t_; }

  void save(const std::string& prefix) const {
    std::vector<std::pair<std::string, const Tensor<float>*>> tensors;
    Tensor<float> step_t({1});
    step_t.data[0] = static_cast<float>(t_);
    tensors.emplace_back("__adam_step__", &step_t);
    for (const auto& [name, mv] : moments_) {
      tensors.emplace_back("m." + name, &mv.first);
      tensors.emplace_back("v." + name, &mv.second);
    }
    ckpt::save_tensors(prefix, tensors);
  }

  void load(const std::string& prefix) {
    auto stored = ckpt::load_tensors(prefix);
    moments_.clear();
    t_ = 0;
    for (auto& [name, t] : stored) {
      if (name == "__adam_step__") {
        t_ = static_cast<int64_t>(t.data[0]);
      } else if (name.rfind("m.", 0) == 0) {
        moments_[name.substr(2)].first = std::move(t);
      } else if (name.rfind("v.", 0) == 0) {
        moments_[name.substr(2)].second = std::move(t);
      }
    }
  }

 private:
  std::vector<Group> groups_;
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, std::pair<Tensor<float>, Tensor<float>>> moments_;
};

// Deterministic 3:1 video/image mixer: a pure function of (seed, step).
inline bool step_is_video(uint64_t seed, int64_t step, double video_fraction) {
  return stream_rng(seed, static_cast<uint64_t>(step), hash_str("mix")).uniform() <
         video_fraction;
}

}  // namespace lgvi::train
