#include "pipeline.hpp"

#include <algorithm>

#include "parallel.hpp"

namespace twmq {

MqModel fit_model(const PanelFrame& frame, const FitOptions& opts) {
  MqModel model;
  model.D = frame.D;
  model.T = frame.T;
  model.opts = opts;

  const std::vector<double> qs = opts.grid_qs.empty() ? default_quantile_grid() : opts.grid_qs;
  model.grid = fit_grid(frame, qs, opts.robust(), opts.ctrl);
  model.qhat = unit_mq_coefficients(frame, model.grid);
  model.thetas = domain_thetas(frame, model.qhat);
  model.resid_table = subdomain_residuals(frame, model.grid, model.thetas);

  const int P_max = opts.P_max >= 0 ? std::min(opts.P_max, frame.T - 1)
                                    : std::min(5, frame.T - 1);
  model.plan = weight_plan(fit_seasonal_ar(model.resid_table, P_max), frame);

  model.twmq.assign(static_cast<std::size_t>(frame.T),
                    std::vector<QuantileSurface>(static_cast<std::size_t>(frame.D) + 1));
  const int jobs = frame.T * (frame.D + 1);
  parallel_for(jobs, opts.threads, [&](int job) {
    const int t = job / (frame.D + 1) + 1;
    const int slot = job % (frame.D + 1);
    const double q = slot < frame.D
                         ? model.thetas[static_cast<std::size_t>(slot)].theta_hat
                         : 0.5;
    model.twmq[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(slot)] =
        fit_twmq(frame, q, t, model.plan.w, model.plan.sets, opts.robust(), opts.ctrl);
  });
  return model;
}

}  // namespace twmq
