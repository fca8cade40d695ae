#pragma once

// Q-networks for spatial actions.
//
// Equivariant variants build every image layer from SteerableConv over C4
// (D4 for the ASR position network). Conventional variants use the very
// same code over the one-element group C1, where the kernel expansion is the
// identity and every layer is an ordinary convolution; their widths are
// chosen so the free-parameter count matches the equivariant net within 10%.
//
// Orientation outputs always have 2 channels per map, channel t holding
// orientation t. For the equivariant nets these are the two cosets of the
// quotient C4/C2, so orientations t and t + pi share one value by design.

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "steerq/env.hpp"
#include "steerq/equi.hpp"
#include "steerq/rng.hpp"
#include "steerq/tensor.hpp"

namespace steerq {

enum class PartialMechanism { DynamicFilter, LiftExpansion };
enum class Architecture { Fcn, Asr };

std::string to_string(PartialMechanism m);
PartialMechanism parse_mechanism(const std::string& s);

struct NetConfig {
  Architecture arch = Architecture::Fcn;
  bool equivariant = true;
  /// Total channels per UNet level of the equivariant net (fields = width / |G|).
  std::vector<int> widths{8, 16, 32};
  /// Total channels of the two orientation-network layers (ASR only).
  int q2_width = 16;
  int u = 4;
  PartialMechanism mechanism = PartialMechanism::DynamicFilter;
  int crop = 7;
  int hand_features = 16;
  /// Channel multiplier for the conventional net; 0 means "match the
  /// equivariant parameter count".
  double conv_scale = 0.0;
};

/// A batch of observations as network input.
struct NetInput {
  Tensor image;  ///< [B,1,N,N]
  Tensor hand;   ///< [B,1,p,p]
  std::vector<bool> holding;

  int batch() const { return image.dim(0); }
};

NetInput make_input(const std::vector<Observation>& obs, const std::vector<bool>& holding);

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

struct Linear {
  Linear() = default;
  Linear(int in, int out, Rng& rng, double scale = 1.0);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, NamedParams& out) const;
  Tensor weight, bias;
};

/// Small convolutional encoder for the in-hand patch.
class HandEncoder {
 public:
  HandEncoder() = default;
  HandEncoder(int patch, int features, Rng& rng);
  Tensor forward(const Tensor& hand) const;  ///< [B,1,p,p] -> [B,features]
  void collect(const std::string& prefix, NamedParams& out) const;

 private:
  Tensor k1_, b1_, k2_, b2_;
  Linear fc1_, fc2_;
  int flat_ = 0;
};

/// Three-level UNet of regular fields: conv, pool, conv, pool, conv, then
/// upsample + skip concatenation twice.
class SteerableUNet {
 public:
  SteerableUNet() = default;
  SteerableUNet(Group g, std::vector<int> fields, Rng& rng);
  struct Out {
    GeoTensor features;    ///< fields[0] regular fields at full resolution
    GeoTensor bottleneck;  ///< fields[2] regular fields at 1/4 resolution
  };
  Out forward(const GeoTensor& image) const;
  void collect(const std::string& prefix, NamedParams& out) const;

 private:
  SteerableConv e0_, e1_, e2_, d1_, d0_;
};

/// Injects a non-equivariant conditioning vector into regular feature
/// fields, by a dynamic filter generated from the vector or by lift expansion.
class ConditionedConv {
 public:
  ConditionedConv() = default;
  ConditionedConv(Group g, int fields, int cond_dim, PartialMechanism mechanism, Rng& rng);
  GeoTensor forward(const GeoTensor& x, const Tensor& cond) const;  ///< relu applied
  void collect(const std::string& prefix, NamedParams& out) const;
  const SteerableConv& conv() const { return conv_; }
  PartialMechanism mechanism() const { return mechanism_; }

 private:
  PartialMechanism mechanism_ = PartialMechanism::DynamicFilter;
  SteerableConv conv_;
  Linear gen_;
};

class QNetwork {
 public:
  virtual ~QNetwork() = default;
  virtual NamedParams named_parameters() const = 0;
  const NetConfig& config() const { return config_; }
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  /// Group acting on the image for the orientation network (C4 or C1).
  Group group() const;

 protected:
  explicit QNetwork(NetConfig config) : config_(std::move(config)) {}
  NetConfig config_;
};

struct QMaps {
  GeoTensor pick;   ///< [B,2,N,N]
  GeoTensor place;  ///< [B,2,N,N]
};

class FcnQNet : public QNetwork {
 public:
  FcnQNet(NetConfig config, const EnvConfig& env, Rng& rng);
  QMaps forward(const NetInput& in) const;
  /// Actionable head restricted to the workspace: [B, 2*W*W] in the
  /// environment's flat action order.
  Tensor q_values(const NetInput& in) const;
  NamedParams named_parameters() const override;

 private:
  EnvConfig env_;
  HandEncoder hand_;
  SteerableUNet unet_;
  SteerableConv pick_head_, place_head_;
  ConditionedConv place_branch_;
};

class AsrQNet : public QNetwork {
 public:
  AsrQNet(NetConfig config, const EnvConfig& env, Rng& rng);

  struct Q1Out {
    GeoTensor pick, place;  ///< [B,1,N,N] position maps
    Tensor values;          ///< actionable head over the workspace, [B, W*W]
    Tensor encoding;        ///< invariant state encoding e(s), [B, E]
    Tensor hand;            ///< hand features [B, F]
  };
  Q1Out q1(const NetInput& in) const;
  struct Q2Out {
    Tensor pick, place;  ///< [B,2] over orientations
    Tensor values;       ///< actionable head, [B,2]
  };
  /// Orientation values of the patches cropped at `cells`.
  Q2Out q2(const NetInput& in, const Q1Out& q1out, const std::vector<Cell>& cells) const;
  /// q2 on explicit patches [B,1,c,c] with explicit conditioning.
  Q2Out q2_patch(const Tensor& patch, const Tensor& hand_features, const Tensor& encoding,
                 const std::vector<bool>& holding) const;
  Group position_group() const;
  NamedParams named_parameters() const override;

 private:
  EnvConfig env_;
  HandEncoder hand_;
  SteerableUNet unet_;
  SteerableConv q1_pick_, q1_place_;
  ConditionedConv q1_branch_;
  SteerableConv c1_, c2_;
  ConditionedConv q2_branch_;
  SteerableConv q2_pick_, q2_place_;
};

std::unique_ptr<QNetwork> make_network(const NetConfig& config, const EnvConfig& env, Rng& rng);

/// Channel multiplier giving the conventional net the equivariant net's
/// parameter count (closest over a fine grid).
double matched_conv_scale(NetConfig config, const EnvConfig& env);

/// Copies parameter values between two nets of identical architecture.
void copy_parameters(const QNetwork& from, QNetwork& to);

/// Lowest flat index among the maxima of each row of [B,n].
std::vector<int> argmax_rows(const Tensor& q);

/// ASR action selection. x = argmax q1 over the workspace, then
/// theta = argmax of the actionable q2 head at x; with probability epsilon
/// each is replaced by a uniform draw.
std::vector<SpatialAction> asr_select(const AsrQNet& net, const NetInput& in,
                                      const EnvConfig& env, double epsilon, Rng& rng);
/// Q2((s,x),theta) for one action per batch row.
std::vector<double> asr_q_value(const AsrQNet& net, const NetInput& in, const EnvConfig& env,
                                const std::vector<SpatialAction>& actions);

std::vector<SpatialAction> fcn_select(const FcnQNet& net, const NetInput& in,
                                      const GridStack& env, double epsilon, Rng& rng);

}  // namespace steerq
