#pragma once

#include <filesystem>
#include <optional>

namespace ppocma::viz {

struct VizArtifacts {
  std::filesystem::path actions_csv;
  std::filesystem::path panels_svg;
  std::optional<std::filesystem::path> trace_csv;
  std::optional<std::filesystem::path> trace_svg;
};

/// Renders the recorded action clouds and policy ellipses of a quadratic-
/// environment run into <run_dir>/viz/: a per-iteration CSV, a self-contained
/// SVG with one panel per logged iteration (scatter, mean point, 1-std
/// ellipse), and for vanilla-pg runs the per-minibatch-step policy trace of
/// the first iteration. Throws when the run used any other environment.
VizArtifacts emit_didactic_viz(const std::filesystem::path& run_dir);

/// Plot-coordinate scale used for the panels: svg pixels per action unit.
/// Ellipse radii in the SVG equal 1 standard deviation times this factor.
double panel_scale();

}  // namespace ppocma::viz
