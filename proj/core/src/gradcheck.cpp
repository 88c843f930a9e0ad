#include "corrnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "corrnet/network.hpp"

namespace corrnet {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

std::string GradcheckReport::to_csv() const {
  std::ostringstream os;
  os << "parameter,index,analytic,numeric,rel_error\n";
  char buf[128];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, ",%zu,%.17g,%.17g,%.3e\n", e.index, e.analytic, e.numeric,
                  e.rel_error);
    os << e.parameter << buf;
  }
  return os.str();
}

GradcheckReport gradcheck(const NetSpec& spec, const GradcheckOptions& opts) {
  Network net(spec, opts.seed);
  std::mt19937_64 rng(opts.seed ^ 0x9c4ec4ULL);
  const auto& in = spec.input;
  NDTensor x({static_cast<std::size_t>(opts.batch), static_cast<std::size_t>(in.channels),
              static_cast<std::size_t>(in.length), static_cast<std::size_t>(in.height),
              static_cast<std::size_t>(in.width)});
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& v : x.data()) v = u(rng);
  // The probed scalar is a fixed random projection of the logits, so every
  // logit's Jacobian row contributes.
  NDTensor proj({static_cast<std::size_t>(opts.batch), static_cast<std::size_t>(spec.num_classes)});
  std::uniform_real_distribution<double> ur(-1.0, 1.0);
  for (auto& v : proj.data()) v = ur(rng);
  auto project = [&](const NDTensor& logits) {
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) s += proj[i] * logits[i];
    return s;
  };
  const Var input = make_leaf(x);

  struct Probe {
    double loss;
    std::uint64_t pattern;
  };
  auto probe = [&] {
    ScopedActivationPattern pattern;
    Tape tape(false);
    const double l = project(net.forward(tape, input, Mode::train)->value);
    return Probe{l, pattern.hash()};
  };

  const auto& params = net.parameters();
  for (const auto& p : params) p.var->grad = NDTensor();
  std::uint64_t base_pattern = 0;
  {
    ScopedActivationPattern pattern;
    Tape tape;
    const Var logits = net.forward(tape, input, Mode::train);
    base_pattern = pattern.hash();
    tape.backward(logits, proj);
  }

  GradcheckReport rep;
  if (params.empty()) {
    rep.passed = true;
    return rep;
  }
  std::uniform_int_distribution<std::size_t> pick_param(0, params.size() - 1);
  const int max_attempts = 20 * std::max(opts.n_coords, 1);
  for (int attempt = 0; attempt < max_attempts && static_cast<int>(rep.entries.size()) < opts.n_coords;
       ++attempt) {
    const auto& p = params[pick_param(rng)];
    NDTensor& w = p.var->value;
    const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, w.size() - 1)(rng);
    const double analytic = p.var->grad.is_set() ? p.var->grad[idx] : 0.0;

    const double saved = w[idx];
    w[idx] = saved + opts.step;
    const Probe plus = probe();
    w[idx] = saved - opts.step;
    const Probe minus = probe();
    w[idx] = saved;
    if (plus.pattern != base_pattern || minus.pattern != base_pattern) {
      ++rep.skipped_kinks;
      continue;
    }
    const double numeric = (plus.loss - minus.loss) / (2.0 * opts.step);
    const double err = relative_error(analytic, numeric);
    rep.entries.push_back({p.name, idx, analytic, numeric, err});
    rep.max_rel_error = std::max(rep.max_rel_error, err);
  }
  rep.passed = static_cast<int>(rep.entries.size()) == opts.n_coords &&
               rep.max_rel_error <= opts.tolerance;
  return rep;
}

}  // namespace corrnet
