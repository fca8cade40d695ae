#pragma once

// Steerable layers over finite rotation / reflection groups acting on
// permutation-representation feature fields.
//
// Feature maps are [B, m*d, H, W] with channel-major fiber layout: channel
// f*d + j holds slot j of field f, d = rep.dim(). g acts on a feature map by
// permuting every fiber with rho(rep, g) and moving pixels with the image
// rotation about the center.

#include <functional>
#include <string>
#include <vector>

#include "steerq/group.hpp"
#include "steerq/rng.hpp"
#include "steerq/tensor.hpp"

namespace steerq {

struct GeoTensor {
  Tensor tensor;  ///< [B, fields*rep.dim(), H, W]
  Representation rep;

  int batch() const { return tensor.dim(0); }
  int fields() const { return tensor.dim(1) / rep.dim(); }
  int height() const { return tensor.dim(2); }
  int width() const { return tensor.dim(3); }
};

/// Checks shape/rep consistency; throws std::invalid_argument.
GeoTensor make_geo(Tensor t, Representation rep);

/// Differentiable g . x (fiber permutation plus spatial rotation about the
/// center, zero translation). Needs a lattice-exact group and square maps.
GeoTensor act(const GroupElement& g, const GeoTensor& x);
/// Spatial-only action on plain [B,C,H,W] tensors (every channel trivial).
Tensor act_spatial(const GroupElement& g, const Tensor& x);

/// Orbit structure of a constrained kernel between one input field and one
/// output field. Every (out slot, in slot, ky, kx) entry belongs to exactly
/// one orbit of the action (o, i, y) -> (rho_out(g) o, rho_in(g) i, g y), and
/// all entries of an orbit share one free parameter, so the expanded kernel
/// satisfies K(g y) = rho_out(g) K(y) rho_in(g)^-1 by construction.
/// Orbits are numbered in first-encounter row-major order; for a regular
/// output this makes output slot 0 equal to the base filter.
class KernelExpansion {
 public:
  KernelExpansion(Representation in, Representation out, int in_fields, int out_fields,
                  int kernel);

  const Representation& in_rep() const { return in_; }
  const Representation& out_rep() const { return out_; }
  int in_fields() const { return in_fields_; }
  int out_fields() const { return out_fields_; }
  int kernel() const { return k_; }
  int in_channels() const { return in_fields_ * in_.dim(); }
  int out_channels() const { return out_fields_ * out_.dim(); }
  int orbits_per_block() const { return orbits_; }
  /// Free parameters: out_fields * in_fields * orbits_per_block.
  int free_count() const { return out_fields_ * in_fields_ * orbits_; }
  /// Entries of the expanded [Co, Ci, k, k] kernel.
  int expanded_count() const { return out_channels() * in_channels() * k_ * k_; }
  /// free-parameter index of each expanded entry, row-major over [Co,Ci,k,k].
  const std::vector<int>& index_map() const { return index_; }

  /// params [F] -> kernel [Co,Ci,k,k]; params [B,F] -> per-sample kernels
  /// [B,Co,Ci,k,k]. Differentiable: gradients sum over each orbit.
  Tensor expand(const Tensor& params) const;

 private:
  Representation in_, out_;
  int in_fields_, out_fields_, k_;
  int orbits_ = 0;
  std::vector<int> index_;
};

/// Largest |K(g y) - rho_out(g) K(y) rho_in(g)^-1| over all group elements,
/// kernel offsets and fiber entries, for a kernel [Co,Ci,k,k] (or a batch
/// [B,Co,Ci,k,k]). Computed directly from the definition, independent of
/// KernelExpansion.
double kernel_constraint_error(const Tensor& kernel, const Representation& in,
                               const Representation& out);

/// Equivariant convolution with "same" padding and an optional per-field bias.
class SteerableConv {
 public:
  SteerableConv() = default;
  SteerableConv(Representation in, Representation out, int in_fields, int out_fields, int kernel,
                bool bias, Rng& rng);

  GeoTensor forward(const GeoTensor& x) const;
  /// Convolution with externally supplied free parameters ([B,F], one
  /// kernel per sample). The layer's own weights are ignored, its bias is used.
  GeoTensor forward_dynamic(const GeoTensor& x, const Tensor& weight_vec) const;

  Tensor expanded_kernel() const { return expansion_.expand(weight_); }
  const KernelExpansion& expansion() const { return expansion_; }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }
  std::vector<std::pair<std::string, Tensor>> named_parameters(const std::string& prefix) const;

 private:
  GeoTensor finish(const GeoTensor& x, Tensor out) const;

  KernelExpansion expansion_{Representation{}, Representation{}, 1, 1, 1};
  Tensor weight_;  // [free_count]
  Tensor bias_;    // [out_fields] or undefined
};

/// Free parameters -> per-sample expanded kernels for a template layer.
Tensor dynamic_filter(const Tensor& weight_vec, const KernelExpansion& expansion);

/// Max over each field's fiber; output is trivial-rep. Throws for trivial input.
GeoTensor group_pool(const GeoTensor& x);

/// Appends vec.dim(1) fields that are constant over fiber and pixels
/// (vec is [B,d] or [d] for a batch of one).
GeoTensor lift_expand(const Tensor& vec, const GeoTensor& x);

/// Concatenates fields of the same representation.
GeoTensor concat_fields(const std::vector<GeoTensor>& parts);

GeoTensor relu(const GeoTensor& x);
GeoTensor max_pool(const GeoTensor& x);
GeoTensor upsample(const GeoTensor& x);

/// Evaluates a scalar-valued network on transformed copies of a patch:
/// out[:, i] = net(elements[i]^-1 . patch). `net` maps [B,C,h,w] to [B,1]
/// (or [B]); the result is [B, elements.size()].
Tensor deictic_eval(const std::function<Tensor(const Tensor&)>& net, const Tensor& patch,
                    const std::vector<GroupElement>& elements);

/// He-normal initial values for a layer with the given fan-in.
std::vector<double> he_normal(std::size_t count, int fan_in, Rng& rng);

}  // namespace steerq
