#pragma once

#include <string>

#include "dlor/linalg.hpp"

namespace dlor {

enum class Act { Softplus, Relu, Sigmoid, Tanh, Heaviside };

const char* act_name(Act a);
Act act_from_name(const std::string& name);

/// An activation together with its expansion-point data. rho_c and drho_c
/// are always recomputed from the closed forms, never taken from callers.
struct ActivationSpec {
  Act name = Act::Softplus;
  double c = 0.5;
  double rho_c = 0.0;
  double drho_c = 0.0;
  bool differentiable_at_c = true;
  bool mean_periodic = false;  // none of the shipped activations are
};

/// Expansion point used by the h-parameterized constructions. Smooth
/// activations use 0.5; relu uses 1.0 (strictly inside the active regime,
/// where the derivative is 1). Heaviside has none.
double default_expansion_point(Act name);

ActivationSpec make_activation(Act name);
ActivationSpec make_activation(Act name, double c);

double eval(const ActivationSpec& spec, double x);
Vector eval_vec(const ActivationSpec& spec, const Vector& v);

/// Closed-form derivative. Rejects the relu/heaviside kink (|x| <= 1e-15).
double deriv(const ActivationSpec& spec, double x);

/// Derivative with the x=0 subgradient convention; used by training code
/// where a total function is required.
double deriv_total(Act name, double x);

/// True when the spec can drive the h-parameterized builders.
bool usable_for_h(const ActivationSpec& spec);

}  // namespace dlor
