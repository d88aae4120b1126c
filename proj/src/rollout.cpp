#include "bast/rollout.hpp"

#include <Eigen/Core>
#include <cstdio>
#include <fstream>
#include <json.hpp>

BAST_NAMESPACE_BEGIN

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> view(const SquareMatrix& m) {
  return Eigen::Map<const RowMatrix>(m.values.data(), static_cast<Eigen::Index>(m.n), static_cast<Eigen::Index>(m.n));
}

EncoderRollout roll_encoder(const std::vector<Tensor>& attention, std::size_t sample, const SquareMatrix& initial) {
  EncoderRollout r;
  r.initial = initial;
  for (const auto& a : attention) {
    if (a.rank() != 4 || a.dim(2) != a.dim(3)) {
      throw DimensionError("attention must be [batch, heads, N, N], got " + shape_str(a.shape()));
    }
    if (sample >= a.dim(0)) throw InputError("rollout sample index out of range");
    const std::size_t heads = a.dim(1), n = a.dim(2);
    if (n != initial.n) throw DimensionError("attention size does not match the rollout initialization");
    r.attention.push_back(augmented_attention(a.data().subspan(sample * heads * n * n, heads * n * n), heads, n));
  }
  r.rollout = cumulative_rollout(r.attention, initial);
  return r;
}

void write_grid(const std::filesystem::path& path, std::span<const double> values, std::size_t rows,
                std::size_t cols) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw RunError("cannot write " + path.string());
  char buf[64];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::snprintf(buf, sizeof buf, "%.9g", values[r * cols + c]);
      os << (c ? "," : "") << buf;
    }
    os << '\n';
  }
}

}  // namespace

SquareMatrix SquareMatrix::identity(std::size_t n) {
  SquareMatrix m{n, std::vector<double>(n * n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

SquareMatrix multiply(const SquareMatrix& a, const SquareMatrix& b) {
  if (a.n != b.n) throw DimensionError("rollout matrices differ in size");
  SquareMatrix out{a.n, std::vector<double>(a.n * a.n)};
  Eigen::Map<RowMatrix>(out.values.data(), static_cast<Eigen::Index>(a.n), static_cast<Eigen::Index>(a.n)).noalias() =
      view(a) * view(b);
  return out;
}

SquareMatrix row_normalize(SquareMatrix m) {
  for (std::size_t r = 0; r < m.n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m.n; ++c) s += m.at(r, c);
    if (s <= 0.0) throw InputError("rollout row " + std::to_string(r) + " has no mass");
    for (std::size_t c = 0; c < m.n; ++c) m.at(r, c) /= s;
  }
  return m;
}

SquareMatrix augmented_attention(std::span<const Real> attention, std::size_t heads, std::size_t n) {
  if (heads == 0 || attention.size() != heads * n * n) {
    throw DimensionError("attention of " + std::to_string(attention.size()) + " values is not " +
                         std::to_string(heads) + " x " + std::to_string(n) + " x " + std::to_string(n));
  }
  SquareMatrix m = SquareMatrix::identity(n);
  const double inv = 1.0 / static_cast<double>(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t k = 0; k < n * n; ++k) m.values[k] += inv * static_cast<double>(attention[h * n * n + k]);
  }
  return row_normalize(std::move(m));
}

std::vector<SquareMatrix> cumulative_rollout(const std::vector<SquareMatrix>& layers, const SquareMatrix& initial) {
  std::vector<SquareMatrix> out;
  const SquareMatrix* prev = &initial;
  for (const auto& a : layers) {
    out.push_back(multiply(a, *prev));
    prev = &out.back();
  }
  return out;
}

std::vector<double> column_relevance(const SquareMatrix& m) {
  std::vector<double> col(m.n, 0.0);
  for (std::size_t r = 0; r < m.n; ++r) {
    for (std::size_t c = 0; c < m.n; ++c) col[c] += m.at(r, c);
  }
  for (auto& v : col) v /= static_cast<double>(m.n);
  return col;
}

RolloutRecord bast_rollout(const ForwardResult& forward, const BastModel& model, std::size_t sample) {
  const auto& cfg = model.config();
  if (forward.left_attention.size() != cfg.layers || forward.right_attention.size() != cfg.layers ||
      forward.center_attention.size() != cfg.layers) {
    throw ContractError("forward pass did not capture attention for every encoder layer");
  }
  const std::size_t n = model.grid().count();
  RolloutRecord rec;
  rec.grid_rows = model.grid().rows;
  rec.grid_cols = model.grid().cols;
  const auto eye = SquareMatrix::identity(n);
  rec.left = roll_encoder(forward.left_attention, sample, eye);
  rec.right = roll_encoder(forward.right_attention, sample, eye);
  SquareMatrix summed = rec.left.final();
  for (std::size_t k = 0; k < summed.values.size(); ++k) summed.values[k] += rec.right.final().values[k];
  rec.center = roll_encoder(forward.center_attention, sample, row_normalize(std::move(summed)));
  rec.left_relevance = column_relevance(rec.left.final());
  rec.right_relevance = column_relevance(rec.right.final());
  rec.center_relevance = column_relevance(rec.center.final());
  return rec;
}

RolloutRecord bast_rollout(const BastModel& model, const Tensor& left, const Tensor& right, std::size_t sample) {
  return bast_rollout(model.predict(left, right), model, sample);
}

std::vector<double> upsample_nearest(std::span<const double> grid, std::size_t rows, std::size_t cols,
                                     std::size_t height, std::size_t width) {
  if (grid.size() != rows * cols) throw DimensionError("relevance grid size mismatch");
  std::vector<double> out(height * width);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t r = std::min(rows - 1, y * rows / height);
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t c = std::min(cols - 1, x * cols / width);
      out[y * width + x] = grid[r * cols + c];
    }
  }
  return out;
}

void export_heatmap(const std::filesystem::path& dir, const RolloutRecord& record, const SampleMeta& meta,
                    std::size_t height, std::size_t width) {
  std::filesystem::create_directories(dir);
  const std::string stem = "rollout_" + meta.id;
  const std::pair<const char*, const std::vector<double>*> ears[] = {
      {"left", &record.left_relevance}, {"right", &record.right_relevance}, {"center", &record.center_relevance}};
  for (const auto& [ear, grid] : ears) {
    write_grid(dir / (stem + "_" + ear + ".csv"), *grid, record.grid_rows, record.grid_cols);
    write_grid(dir / (stem + "_" + ear + "_overlay.csv"),
               upsample_nearest(*grid, record.grid_rows, record.grid_cols, height, width), height, width);
  }
  nlohmann::json j = {{"sample_id", meta.id},
                      {"source_id", meta.source_id},
                      {"azimuth_deg", meta.azimuth_deg},
                      {"environment", environment_tag(meta.environment)},
                      {"grid", {record.grid_rows, record.grid_cols}},
                      {"overlay", {height, width}},
                      {"layers", record.center.rollout.size()},
                      {"relevance", "column mean of the final cumulative rollout"}};
  std::ofstream os(dir / (stem + "_meta.json"), std::ios::trunc);
  if (!os) throw RunError("cannot write rollout metadata for " + meta.id);
  os << j.dump(2) << '\n';
}

BAST_NAMESPACE_END
