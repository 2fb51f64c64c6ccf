#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "graphau/manifest.hpp"

namespace graphau {

// Images are (side*side) x 3 row-major pixel matrices with values in [0,1].
using Image = Eigen::MatrixXf;

// Configuration of the synthetic AU-blob renderer. Each rendered AU owns a
// disjoint cell on a grid x grid macro-grid; an active AU is drawn as a
// brightness blob in its cell scaled by intensity/5, over Gaussian noise.
struct SynthConfig {
  int side = 96;    // image side in pixels; must be divisible by grid
  int grid = 6;     // macro-grid side; grid*grid cells
  int margin = 2;   // blob inset inside its cell, pixels
  std::map<int, int> au_cells;           // AU code -> cell index
  std::array<double, 3> mixture = {0.82, 0.15, 0.03};  // label3 proportions
  double noise = 0.05;                   // Gaussian pixel noise stddev
  std::vector<int> rendered_aus;         // defaults to modeled + {7,10,43}
  std::uint64_t seed = 7;
  int frames = 2500;
  int subjects = 25;
  ModeledAUSet modeled;

  // Fills au_cells/rendered_aus defaults and validates all invariants.
  void finalize();
};

// Self-contained per-frame render recipe, carried in a "synthetic:" URI so
// images never need to live on disk.
struct RenderSpec {
  int side = 96;
  int grid = 6;
  int margin = 2;
  float noise = 0.0f;
  std::uint64_t seed = 0;
  // (au code, intensity, cell index) for every active AU
  std::vector<std::array<int, 3>> active;
};

std::string encode_render_uri(const RenderSpec& spec);
RenderSpec decode_render_uri(const std::string& uri);

Image render(const RenderSpec& spec);

// Renders a "synthetic:" image_ref or reads a PPM file.
Image load_image(const std::string& image_ref);

// Deterministic synthetic dataset: intensities are sampled so that the
// label3 marginal matches the configured mixture, then every label is
// derived through the FACS math.
DatasetManifest synth_generate(const SynthConfig& config);

// Lossless 8-bit binary PPM.
void write_ppm(const std::string& path, const Image& image, int side);
Image read_ppm(const std::string& path);

}  // namespace graphau
