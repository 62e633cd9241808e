#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rfit/common.hpp"
#include "rfit/geometry.hpp"
#include "rfit/gradients.hpp"
#include "rfit/objective.hpp"
#include "rfit/optimize.hpp"
#include "rfit/radar.hpp"
#include "rfit/tracer.hpp"

namespace rfit {

/// Array-processing settings read from the scene file's `spectrum` section.
struct SpectrumSettings {
  SpectrumMethod method = SpectrumMethod::kBeamform;
  int sources = 1;
  SnapshotConfig snapshots;
};

/// Everything a scene file describes.
struct SceneFile {
  std::string path;
  std::string text;  // original document, used when writing fitted scenes
  Scene scene;
  PipelineConfig pipeline;
  SpectrumSettings spectrum;
};

/// Parses a scene document. Errors are InputError with "<source>:<line>: <field>: <message>".
SceneFile parse_scene(const std::string& text, const std::string& source,
                      const std::string& base_dir = ".");
SceneFile load_scene_file(const std::string& path);

/// Writes the scene document with its `params` section replaced.
void write_scene_file(const SceneFile& scene_file, const SceneParams& params, const std::string& path);

/// Triangle mesh from a Wavefront OBJ file (v/f records; polygons are fanned).
Mesh load_obj(const std::string& path, int material_id = 0);

// ---------------------------------------------------------------------------
// Text output. Numbers use 17 significant digits; every file starts with
// '#' comment lines describing columns and units.

std::string format_double(double v);

/// Writes via a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

void write_cir_csv(const std::string& path, const CirSample& sample);

/// Profiles are bins x rx.
void write_profile_csv(const std::string& path, const MatXc& profiles, const VecX& delays,
                       Provenance provenance);
/// Reads a profile CSV back into a bins x rx matrix.
MatXc read_profile_csv(const std::string& path);

void write_spectrum_csv(const std::string& path, const SpatialSpectrum& spectrum);
/// Reads a spectrum CSV; the angle grid must match `grid`.
MatX read_spectrum_csv(const std::string& path, const AngleGrid& grid);

void write_gradient_report_csv(const std::string& path, const GradientReport& report);
void write_fit_trace_csv(const std::string& path, const FitTrace& trace);

struct SweepRow {
  double theta = 0.0;
  double loss_exact = 0.0;
  double loss_surrogate = 0.0;
};
void write_sweep_csv(const std::string& path, const std::string& param, const std::vector<SweepRow>& rows);

// ---------------------------------------------------------------------------
// Binary grid: "RFGRID01", u32 version, u32 ndim, u32 dtype (1 = float64,
// 2 = complex128 as re/im pairs), u64 dims[ndim], float64 axis values per
// dimension, then row-major little-endian float64 data.

inline constexpr std::uint32_t kGridVersion = 1;

struct BinaryGrid {
  std::vector<std::uint64_t> dims;
  std::vector<VecX> axes;
  bool complex_values = false;
  std::vector<double> data;  // row-major; interleaved re/im when complex
};

void write_grid_binary(const std::string& path, const BinaryGrid& grid);
BinaryGrid read_grid_binary(const std::string& path);
BinaryGrid grid_from_spectrum(const SpatialSpectrum& spectrum);
BinaryGrid grid_from_profiles(const MatXc& profiles, const VecX& delays);

// ---------------------------------------------------------------------------

void write_checkpoint(const std::string& path, const FitTrace& trace, const VecX& next_theta);
FitCheckpoint read_checkpoint(const std::string& path);

struct RunManifest {
  std::string command;
  std::string scene_path;
  std::vector<std::string> args;  // full argument list after the program name
  std::string working_dir;        // relative paths in args resolve against this
  std::uint64_t seed = 0;
  std::string version;
  double wall_clock_s = 0.0;  // informational; not part of reproducibility
  std::vector<std::string> outputs;
};

void write_manifest(const std::string& path, const RunManifest& manifest);
RunManifest read_manifest(const std::string& path);

}  // namespace rfit
