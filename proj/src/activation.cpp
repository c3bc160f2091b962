#include "dlor/activation.hpp"

#include <cmath>

namespace dlor {

namespace {

double softplus(double x) {
  // max(x,0) + log1p(exp(-|x|)) avoids overflow on both tails.
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr double kKinkTol = 1e-15;

}  // namespace

const char* act_name(Act a) {
  switch (a) {
    case Act::Softplus: return "softplus";
    case Act::Relu: return "relu";
    case Act::Sigmoid: return "sigmoid";
    case Act::Tanh: return "tanh";
    case Act::Heaviside: return "heaviside";
  }
  return "?";
}

Act act_from_name(const std::string& name) {
  if (name == "softplus") return Act::Softplus;
  if (name == "relu") return Act::Relu;
  if (name == "sigmoid") return Act::Sigmoid;
  if (name == "tanh") return Act::Tanh;
  if (name == "heaviside") return Act::Heaviside;
  throw Error("unknown activation: " + name);
}

double default_expansion_point(Act name) {
  switch (name) {
    case Act::Softplus:
    case Act::Sigmoid:
    case Act::Tanh:
      return 0.5;
    case Act::Relu:
      return 1.0;
    case Act::Heaviside:
      throw NoExpansionPoint("heaviside has no differentiable expansion point");
  }
  throw NoExpansionPoint("unknown activation");
}

double eval(const ActivationSpec& spec, double x) {
  switch (spec.name) {
    case Act::Softplus: return softplus(x);
    case Act::Relu: return x > 0.0 ? x : 0.0;
    case Act::Sigmoid: return logistic(x);
    case Act::Tanh: return std::tanh(x);
    case Act::Heaviside: return x >= 0.0 ? 1.0 : 0.0;
  }
  return 0.0;
}

Vector eval_vec(const ActivationSpec& spec, const Vector& v) {
  Vector out(v.size());
  for (Index i = 0; i < v.size(); ++i) out[i] = eval(spec, v[i]);
  return out;
}

double deriv(const ActivationSpec& spec, double x) {
  switch (spec.name) {
    case Act::Softplus: return logistic(x);
    case Act::Sigmoid: {
      const double s = logistic(x);
      return s * (1.0 - s);
    }
    case Act::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Act::Relu:
      if (std::abs(x) <= kKinkTol)
        throw NonDifferentiablePoint("relu derivative requested at the kink");
      return x > 0.0 ? 1.0 : 0.0;
    case Act::Heaviside:
      if (std::abs(x) <= kKinkTol)
        throw NonDifferentiablePoint("heaviside derivative requested at the jump");
      return 0.0;
  }
  return 0.0;
}

double deriv_total(Act name, double x) {
  switch (name) {
    case Act::Softplus: return logistic(x);
    case Act::Sigmoid: {
      const double s = logistic(x);
      return s * (1.0 - s);
    }
    case Act::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Act::Relu: return x > 0.0 ? 1.0 : 0.0;
    case Act::Heaviside: return 0.0;
  }
  return 0.0;
}

ActivationSpec make_activation(Act name, double c) {
  ActivationSpec spec;
  spec.name = name;
  spec.mean_periodic = false;
  if (name == Act::Heaviside) {
    spec.c = 0.0;
    spec.rho_c = 1.0;  // eval(0)
    spec.drho_c = 0.0;
    spec.differentiable_at_c = false;
    return spec;
  }
  spec.c = c;
  spec.rho_c = eval(spec, c);
  spec.drho_c = deriv(spec, c);
  spec.differentiable_at_c = true;
  if (spec.drho_c == 0.0)
    throw Error(std::string("expansion point has zero derivative for ") + act_name(name));
  return spec;
}

ActivationSpec make_activation(Act name) {
  if (name == Act::Heaviside) return make_activation(name, 0.0);
  return make_activation(name, default_expansion_point(name));
}

bool usable_for_h(const ActivationSpec& spec) {
  return spec.differentiable_at_c && spec.drho_c != 0.0;
}

}  // namespace dlor
