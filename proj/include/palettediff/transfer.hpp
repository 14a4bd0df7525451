#pragma once

#include <filesystem>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "palettediff/quantize.hpp"

namespace palettediff {

enum class TransferMode { color, negative_color };

std::string_view to_string(TransferMode mode);
TransferMode parse_transfer_mode(std::string_view text);

/// Entry (i, j): squared RGB distance between source color i and target color j,
/// negated in negative-color mode.
using CostMatrix = Eigen::MatrixXd;

/// mapping[i] is the target index matched to source index i.
struct Assignment {
  std::vector<int> mapping;

  double total_cost(const CostMatrix& cost) const;
  bool is_bijection() const;
};

CostMatrix build_cost(const Palette& src, const Palette& tgt, TransferMode mode);

/// Minimum-cost perfect matching (Hungarian, O(n^3) for the optimum); among
/// equal-cost optima the lexicographically smallest mapping is returned.
Assignment solve_assignment(const CostMatrix& cost);

IndexedImage transfer_palette(const IndexedImage& q, const Palette& tgt, TransferMode mode);

/// Samples n colors at evenly spaced positions along a piecewise-linear colormap.
Palette resample_colormap(const std::vector<Rgb>& stops, int n);

std::vector<Rgb> load_colormap(const std::filesystem::path& path);

}  // namespace palettediff
