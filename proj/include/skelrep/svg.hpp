#pragma once

#include <string>
#include <utility>
#include <vector>

#include "skelrep/skeleton.hpp"

namespace skelrep {

// Self-contained SVG writers (no external assets), used by the render
// subcommand on denoising triples and training metrics.

// Front (x,y) and side (z,y) projections of the named poses overlaid in a
// fixed palette. `comment` is embedded as an XML comment (config echo).
std::string render_pose_svg(const SkeletonTopology& topo,
                            const std::vector<std::pair<std::string, Pose>>& named,
                            const std::string& comment = "");

// Line chart of the named columns against the first (step) column.
std::string render_metrics_svg(const std::vector<std::string>& header,
                               const std::vector<std::vector<double>>& rows,
                               const std::vector<std::string>& columns,
                               const std::string& comment = "");

// Comment- and header-aware reader for the trainer's metrics files.
std::pair<std::vector<std::string>, std::vector<std::vector<double>>> read_csv(
    const std::string& path);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace skelrep
