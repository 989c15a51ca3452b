// Geometry / solution file formats (versioned JSON with byte-stable
// round-trips), SVG isoline plotting and sampled-grid export.
#pragma once

#include <optional>
#include <string>
#include <utility>

#include "mp/control.hpp"
#include "mp/metrics.hpp"

namespace mp::io {

// Parsed geometry artifact: the raw covering, one or more named boundary
// correspondences, and optional target metadata.
struct GeometryFile {
  RawTopology raw;
  std::vector<std::pair<std::string, BoundaryCorrespondence>> correspondences;
  std::optional<ControlMap::Target> target;
};

GeometryFile parse_geometry(const std::string& text);
std::string write_geometry(const GeometryFile& g);

// Correspondence by name; empty name selects the first entry.
const BoundaryCorrespondence& find_correspondence(const GeometryFile& g,
                                                  const std::string& name);

// FNV-1a (64-bit) content hash, as 16 hex digits.
std::string content_hash(const std::string& text);

// Per-patch tensor space description (degrees and full knot vectors).
struct PatchSpaceDesc {
  int degree_u = 0, degree_v = 0;
  std::vector<double> knots_u, knots_v;
};
std::vector<PatchSpaceDesc> describe_space(const MultipatchSpace& space);
MultipatchSpace space_from_desc(std::shared_ptr<const Quadrangulation> topo,
                                const std::vector<PatchSpaceDesc>& desc);

struct SolutionFile {
  std::string geometry_hash;
  std::vector<PatchSpaceDesc> space;
  Eigen::MatrixX2d x;                     // map control points, dim x 2
  std::optional<Eigen::MatrixX2d> s, r;   // controlmap / reference, when present
  bool s_identity_boundary = true;
  std::vector<std::pair<std::string, std::string>> provenance;  // config echo
  std::optional<QualityReport> quality;
};

SolutionFile parse_solution(const std::string& text);
std::string write_solution(const SolutionFile& s);

// Patchwise isoline plot: one polyline per isoline per patch in both
// parametric directions, patch boundaries stroked heavier, viewBox = bounding
// box with a 2% margin. Deterministic for fixed inputs.
std::string export_svg(const GeometryMap& map, int isolines_per_patch,
                       int samples_per_isoline);

// Tabular sample export: header line, then one row per lattice point of the
// row-major n x n per-patch grid: patch mu1 mu2 x1 x2 det(d x/d mu), 17
// significant digits.
std::string export_grid(const GeometryMap& map, int n);

}  // namespace mp::io
