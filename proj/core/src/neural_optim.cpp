#include <cmath>

#include "syllabion/error.hpp"
#include "syllabion/neural.hpp"

namespace syllabion {

AdamWState make_adamw_state(const ParamStore& store) {
  AdamWState s;
  s.m.reserve(store.size());
  s.v.reserve(store.size());
  for (const auto& p : store) {
    s.m.emplace_back(p.value.rows(), p.value.cols());
    s.v.emplace_back(p.value.rows(), p.value.cols());
  }
  s.steps.assign(store.size(), 0);
  return s;
}

void adamw_step(ParamStore& store, const Grads& grads, AdamWState& state, double lr, const AdamWConfig& cfg,
                const std::function<bool(const Param&)>& update) {
  check(grads.size() == store.size() && state.m.size() == store.size(),
        "adamw: gradient/state size does not match parameter store");
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Param& param = store[i];
    if (!param.trainable || param.buffer) continue;
    if (update && !update(param)) continue;
    Matrix& theta = store.value(i);
    const bool has_grad = grads.has(i);
    if (has_grad) {
      check(grads.get(i).rows() == theta.rows() && grads.get(i).cols() == theta.cols(),
            "adamw: gradient shape mismatch for '" + param.name + "'");
      check(all_finite(grads.get(i)), "adamw: non-finite gradient in '" + param.name + "'");
    }
    const long long t = ++state.steps[i];
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    auto& m = state.m[i].data();
    auto& v = state.v[i].data();
    auto& th = theta.data();
    for (std::size_t k = 0; k < th.size(); ++k) {
      const double gk = has_grad ? grads.get(i).data()[k] : 0.0;
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      const double mhat = m[k] / c1, vhat = v[k] / c2;
      th[k] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * th[k]);
    }
  }
}

void LrSchedule::validate() const {
  check(lr_min > 0.0 && lr_min <= lr_max, "lr schedule: need 0 < lr_min <= lr_max");
  check(warmup_frac >= 0.0 && hold_frac >= 0.0 && warmup_frac + hold_frac <= 1.0,
        "lr schedule: warmup_frac + hold_frac must lie in [0, 1]");
  check(total_steps >= 1, "lr schedule: total_steps must be >= 1");
}

double lr_at(const LrSchedule& s, long long step) {
  check(step >= 0 && step <= s.total_steps, "lr_at: step " + std::to_string(step) + " outside [0, " +
                                                std::to_string(s.total_steps) + "]");
  const double k = static_cast<double>(step);
  const double total = static_cast<double>(s.total_steps);
  const double warm_end = s.warmup_frac * total;
  const double hold_end = (s.warmup_frac + s.hold_frac) * total;
  if (k < warm_end) return s.lr_min + (s.lr_max - s.lr_min) * k / warm_end;
  if (k <= hold_end || hold_end >= total) return s.lr_max;
  return s.lr_max - (s.lr_max - s.lr_min) * (k - hold_end) / (total - hold_end);
}

}  // namespace syllabion
