#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rfit/common.hpp"
#include "rfit/geometry.hpp"
#include "rfit/gradients.hpp"
#include "rfit/loss.hpp"
#include "rfit/radar.hpp"
#include "rfit/tracer.hpp"

namespace rfit {

/// What the forward pipeline produces and the loss compares.
enum class TargetKind {
  kProfileExact,      // windowed-DFT range profile per rx (bins x rx)
  kProfileSurrogate,  // Gaussian-kernel range profile per rx (bins x rx)
  kBeamform,          // beamforming spectrum of one noise-free snapshot
  kAiry,              // Airy spatial surrogate
};

std::string to_string(TargetKind k);
TargetKind target_kind_from_string(const std::string& name);
bool is_profile(TargetKind k);
/// Default comparison domain: phase-sensitive for the exact profile,
/// magnitude for everything else.
LossDomain default_domain(TargetKind k);

struct PipelineConfig {
  int max_order = 1;
  int min_order = 0;  // 1 drops the direct tx -> rx path (range-gated leakage)
  RadarConfig radar;
  SurrogateConfig surrogate;
  AngleGrid grid = AngleGrid::uniform(-kPi / 2, kPi / 2, 31, 0.0, kPi / 2, 16);
  BoundaryConfig boundary;
  bool include_boundary = true;
};

/// Pipeline output for one parameter vector.
struct Simulation {
  CirSample cir;
  MatXc values;  // bins x rx for profiles, az x el (real) for spectra
};

/// Evaluates the forward pipeline and its derivative for one target kind.
class Objective {
 public:
  Objective(Scene scene, PipelineConfig pipeline, TargetKind target, LossConfig loss, MatXc observation);

  const Scene& scene() const { return scene_; }
  const PipelineConfig& pipeline() const { return pipeline_; }
  TargetKind target() const { return target_; }
  const LossConfig& loss_config() const { return loss_; }
  const MatXc& observation() const { return observation_; }
  const ParamLayout& layout() const { return layout_; }
  /// Parameter vector the scene file specifies.
  VecX initial_theta() const { return scene_.params.pack(); }

  struct Result {
    double loss = 0.0;
    VecX gradient;           // interior + boundary (if enabled)
    VecX interior_gradient;  // interior only
    int path_count = 0;
    bool boundary_affected = false;  // some path is near a visibility or support change
    bool singular = false;
  };

  /// Forward pass only.
  Simulation simulate(const VecX& theta, std::uint64_t phase_seed = 0) const;
  /// Loss (and gradient when requested). `mask` selects loss entries;
  /// `phase_seed` re-draws the Airy phases.
  Result evaluate(const VecX& theta, bool want_gradient, const MatX* mask = nullptr,
                  std::uint64_t phase_seed = 0) const;
  double loss(const VecX& theta) const { return evaluate(theta, false).loss; }

  /// Per-parameter flag: geometric parameters when any path is boundary-affected.
  std::vector<bool> boundary_flags(const Result& r) const;

 private:
  Scene scene_;
  PipelineConfig pipeline_;
  TargetKind target_;
  LossConfig loss_;
  MatXc observation_;
  ParamLayout layout_;
  ArrayGeometry array_;
  MatXc steering_;  // elements x grid cells (az-major), beamform only
};

/// Forward simulation for a scene at its own parameters.
MatXc simulate_target(const Scene& scene, const PipelineConfig& pipeline, TargetKind target,
                      std::uint64_t phase_seed = 0);

/// Total gradient of the objective at theta.
VecX total_gradient(const Objective& objective, const VecX& theta);

}  // namespace rfit
