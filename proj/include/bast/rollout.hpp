#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bast/dataset.hpp"
#include "bast/model.hpp"

BAST_NAMESPACE_BEGIN

// Dense row-major N x N matrix in double precision.
struct SquareMatrix {
  std::size_t n = 0;
  std::vector<double> values;

  static SquareMatrix identity(std::size_t n);
  double& at(std::size_t r, std::size_t c) { return values[r * n + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * n + c]; }
};

// Head-averaged attention plus identity, rows renormalized. `attention` holds
// heads * n * n values.
SquareMatrix augmented_attention(std::span<const Real> attention, std::size_t heads, std::size_t n);

// Cumulative rollout R_k = A_k * R_{k-1} starting from `initial`.
std::vector<SquareMatrix> cumulative_rollout(const std::vector<SquareMatrix>& layers, const SquareMatrix& initial);

SquareMatrix multiply(const SquareMatrix& a, const SquareMatrix& b);
SquareMatrix row_normalize(SquareMatrix m);

struct EncoderRollout {
  std::vector<SquareMatrix> attention;  // augmented, one per layer
  std::vector<SquareMatrix> rollout;    // cumulative, one per layer
  SquareMatrix initial;
  const SquareMatrix& final() const { return rollout.empty() ? initial : rollout.back(); }
};

struct RolloutRecord {
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  EncoderRollout left;
  EncoderRollout right;
  EncoderRollout center;  // initialized from rownorm(R^L + R^R)
  // Column means of the final rollouts, patch-grid order (rows x cols).
  std::vector<double> left_relevance;
  std::vector<double> right_relevance;
  std::vector<double> center_relevance;
};

// Column means of m.
std::vector<double> column_relevance(const SquareMatrix& m);

// Rollout of batch element `sample` from a forward pass that captured attention.
RolloutRecord bast_rollout(const ForwardResult& forward, const BastModel& model, std::size_t sample = 0);
// Eval-mode forward of a single left/right pair followed by the rollout.
RolloutRecord bast_rollout(const BastModel& model, const Tensor& left, const Tensor& right, std::size_t sample = 0);

// Nearest-neighbour upsampling of a rows x cols grid to height x width.
std::vector<double> upsample_nearest(std::span<const double> grid, std::size_t rows, std::size_t cols,
                                     std::size_t height, std::size_t width);

// Writes rollout_<id>_{left,right,center}.csv grids, the matching *_overlay.csv
// at spectrogram resolution, and rollout_<id>_meta.json.
void export_heatmap(const std::filesystem::path& dir, const RolloutRecord& record, const SampleMeta& meta,
                    std::size_t height, std::size_t width);

BAST_NAMESPACE_END
