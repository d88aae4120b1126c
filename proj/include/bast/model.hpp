#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "bast/adam.hpp"
#include "bast/checkpoint.hpp"
#include "bast/ops.hpp"

BAST_NAMESPACE_BEGIN

enum class Integration { Concat, Add, Sub };
enum class Sharing { Shared, NonShared };

std::string integration_name(Integration mode);  // "concat" | "add" | "sub"
Integration parse_integration(const std::string& name);
std::string sharing_name(Sharing mode);  // "SP" | "NSP"
Sharing parse_sharing(const std::string& name);

struct ModelConfig {
  std::size_t height = 129;  // frequency bins
  std::size_t width = 61;    // frames
  std::size_t patch = 16;
  std::size_t stride = 6;
  std::size_t dim = 1024;
  std::size_t layers = 3;  // per encoder
  std::size_t heads = 16;
  std::size_t mlp_dim = 1024;
  double dropout = 0.2;
  Integration integration = Integration::Sub;
  Sharing sharing = Sharing::NonShared;

  static ModelConfig canonical();
  // Desk-scale profile: D=128, 4 heads, MLP 256.
  static ModelConfig desk();

  // TE-C width: 2*dim for concatenation, dim otherwise.
  std::size_t center_dim() const { return integration == Integration::Concat ? 2 * dim : dim; }

  void validate() const;
  // "key = value" lines; parse() accepts the same keys plus comments (#).
  std::string to_kv() const;
  static ModelConfig parse(const std::string& text);
  // Applies a single key/value override; unknown keys raise ConfigError.
  void set(const std::string& key, const std::string& value);
  std::string hash() const;
};

// Patch layout of an H x T spectrogram. The grid is zero-padded at the end of
// each axis (top rows in frequency, right columns in time).
struct PatchGrid {
  std::size_t rows = 0;  // N_H
  std::size_t cols = 0;  // N_T
  std::size_t pad_top = 0;
  std::size_t pad_right = 0;

  std::size_t count() const { return rows * cols; }
};

PatchGrid patch_counts(std::size_t height, std::size_t width, std::size_t patch, std::size_t stride);

// [B, H, T] spectrograms -> [B, N_H*N_T, P*P] flattened patches, patch index
// row-major over (frequency patch, time patch).
Tensor extract_patches(Graph& g, const Tensor& spectrograms, const PatchGrid& grid, std::size_t patch,
                       std::size_t stride);

// Fixed 2-D sinusoidal table [N_H*N_T, dim]: first half encodes the patch row,
// second half the patch column.
Tensor position_table(const PatchGrid& grid, std::size_t dim);

struct LinearLayer {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

struct NormLayer {
  Tensor gain;
  Tensor bias;
};

struct EncoderLayer {
  NormLayer norm1;
  LinearLayer qkv;
  LinearLayer proj;
  NormLayer norm2;
  LinearLayer fc1;
  LinearLayer fc2;
};

struct Encoder {
  std::size_t dim = 0;
  std::size_t heads = 0;
  double dropout = 0.0;
  std::vector<EncoderLayer> layers;
};

struct EncoderResult {
  Tensor sequence;                 // [B, N, dim]
  std::vector<Tensor> attention;   // per layer, [B, heads, N, N]
};

Tensor linear(Graph& g, const Tensor& x, const LinearLayer& layer);

// Pre-norm Transformer blocks with residual connections.
EncoderResult encoder_forward(Graph& g, const Tensor& sequence, const Encoder& encoder, bool training,
                              std::mt19937_64& rng);

// add: L + R; sub: R - L; concat: [L, R] along the feature axis.
Tensor integrate(Graph& g, const Tensor& left, const Tensor& right, Integration mode);

struct ForwardResult {
  Tensor coords;      // [B, 2]
  Tensor left_out;    // TE-L output
  Tensor right_out;   // TE-R output
  Tensor integrated;  // TE-C input
  std::vector<Tensor> left_attention;
  std::vector<Tensor> right_attention;
  std::vector<Tensor> center_attention;
};

enum class Ear { Left, Right };

class BastModel {
 public:
  BastModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const PatchGrid& grid() const { return grid_; }

  // Patch embedding plus position table, [B, H, T] -> [B, N, dim].
  Tensor embed(Graph& g, const Tensor& spectrograms, Ear ear, bool training, std::mt19937_64& rng) const;

  ForwardResult forward(Graph& g, const Tensor& left, const Tensor& right, bool training,
                        std::mt19937_64& rng) const;
  // Eval-mode forward without gradient recording.
  ForwardResult predict(const Tensor& left, const Tensor& right) const;

  // Trainable tensors with unique storage; shared tensors appear once.
  std::vector<NamedTensor> parameters() const;
  std::size_t count_parameters() const;

  const Encoder& encoder(Ear ear) const { return ear == Ear::Left ? left_ : right_; }
  const Encoder& center_encoder() const { return center_; }
  const LinearLayer& patch_projection(Ear ear) const { return ear == Ear::Left ? left_patch_ : right_patch_; }
  const LinearLayer& head() const { return head_; }
  const Tensor& positions() const { return positions_; }

  TensorFile to_checkpoint() const;
  // Copies values from a checkpoint written for the same config; a config
  // hash or layout mismatch raises ConfigError.
  void load_checkpoint(const TensorFile& file);

 private:
  ModelConfig config_;
  PatchGrid grid_;
  LinearLayer left_patch_;
  LinearLayer right_patch_;
  Tensor positions_;
  Encoder left_;
  Encoder right_;
  Encoder center_;
  LinearLayer head_;
};

BAST_NAMESPACE_END
