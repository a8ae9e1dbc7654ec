#include "lvst/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "lvst/linalg.hpp"

namespace lvst {

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
  return std::abs(analytic - numeric) / scale;
}

namespace {

RoadGraph ring_with_chords(std::size_t n, std::mt19937_64& rng) {
  RoadGraph g;
  g.n_nodes = n;
  g.adjacency = Tensor({n, n}, 0.0);
  Tensor dist({n, n}, kUnreachable);
  auto link = [&](std::size_t i, std::size_t j) {
    const double w = 0.5 + uniform01(rng);
    g.adjacency(i, j) = g.adjacency(j, i) = 1.0;
    dist(i, j) = dist(j, i) = w;
  };
  for (std::size_t i = 0; i < n; ++i) link(i, (i + 1) % n);
  link(0, n / 2);
  g.edge_dist = std::move(dist);
  return g;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& o) {
  std::mt19937_64 rng(o.seed);
  const std::size_t n = o.n_nodes, spd = 24;

  ModelConfig cfg;
  cfg.n_nodes = n;
  cfg.input_len = o.input_len;
  cfg.output_len = o.output_len;
  cfg.d = o.d;
  cfg.k_eigen = o.k_eigen;
  cfg.layers = o.layers;
  cfg.heads_spatial = o.heads;
  cfg.heads_temporal = o.heads;
  cfg.steps_per_day = spd;
  cfg.dropout = 0.0;
  cfg.validate();

  const RoadGraph g = ring_with_chords(n, rng);
  Tensor history({2 * spd, n});
  for (double& v : history.values()) v = uniform01(rng);
  ViewConfig vc;
  vc.local_threshold = 1.2;
  vc.k_global = 2;
  vc.k_pivotal = 2;
  vc.steps_per_day = spd;
  const SpatialContext ctx = make_context(build_views(g, history, vc.resolved(n)), laplacian_basis(g, o.k_eigen));

  Tensor x({o.batch, o.input_len, n});
  for (double& v : x.values()) v = 2.0 * uniform01(rng) - 1.0;
  CalendarBatch cal;
  for (std::size_t b = 0; b < o.batch; ++b)
    for (std::size_t t = 0; t < o.input_len; ++t) {
      cal.tod.push_back((5 * b + t) % spd);
      cal.dow.push_back(b % 7);
    }
  Tensor weights({o.batch, o.output_len, n});
  for (double& v : weights.values()) v = 2.0 * uniform01(rng) - 1.0;

  ParamStore params = init_model(cfg, o.seed);

  // Smooth loss: sum of w * y + 0.5 * y^2 over the forecast.
  auto loss_of = [&](const ParamStore& p, Tape& tape, std::vector<Tensor>* grads) {
    ParamBinding bind(tape, p, grads != nullptr);
    Var y = model_forward(bind, x, cal, ctx, cfg);
    Var w = tape.constant(weights);
    Var loss = ag::sum(ag::add(ag::mul(w, y), ag::scale(ag::mul(y, y), 0.5)));
    if (grads) {
      tape.backward(loss);
      *grads = bind.grads();
    }
    return loss.value().item();
  };

  std::vector<Tensor> analytic;
  {
    Tape tape;
    if (!o.fault_op.empty()) tape.inject_fault(o.fault_op, o.fault_factor);
    loss_of(params, tape, &analytic);
  }

  GradcheckReport report;
  report.tolerance = o.tolerance;
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamStore probe = params;
    auto f = [&](const std::vector<double>& v) {
      std::copy(v.begin(), v.end(), probe.tensor(i).data());
      Tape tape;
      return loss_of(probe, tape, nullptr);
    };
    const std::vector<double> numeric = finite_diff_grad(f, params.tensor(i).storage(), o.eps);
    GroupReport gr;
    gr.name = params.name(i);
    gr.elements = numeric.size();
    for (std::size_t j = 0; j < numeric.size(); ++j) {
      const double err = relative_error(analytic[i][j], numeric[j]);
      if (j == 0 || err > gr.max_rel_error) {
        gr.max_rel_error = err;
        gr.worst_index = j;
        gr.analytic = analytic[i][j];
        gr.numeric = numeric[j];
      }
    }
    report.groups.push_back(gr);
    if (gr.max_rel_error > report.groups[report.worst].max_rel_error) report.worst = i;
  }
  report.passed = std::all_of(report.groups.begin(), report.groups.end(),
                              [&](const GroupReport& r) { return r.max_rel_error <= o.tolerance; });
  return report;
}

}  // namespace lvst
