#include "bast/model.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "bast/hash.hpp"

BAST_NAMESPACE_BEGIN

std::string integration_name(Integration mode) {
  switch (mode) {
    case Integration::Concat:
      return "concat";
    case Integration::Add:
      return "add";
    case Integration::Sub:
      return "sub";
  }
  return "?";
}

Integration parse_integration(const std::string& name) {
  if (name == "concat") return Integration::Concat;
  if (name == "add") return Integration::Add;
  if (name == "sub") return Integration::Sub;
  throw ConfigError("unknown integration '" + name + "' (expected concat, add or sub)");
}

std::string sharing_name(Sharing mode) { return mode == Sharing::Shared ? "SP" : "NSP"; }

Sharing parse_sharing(const std::string& name) {
  if (name == "SP") return Sharing::Shared;
  if (name == "NSP") return Sharing::NonShared;
  throw ConfigError("unknown sharing mode '" + name + "' (expected SP or NSP)");
}

ModelConfig ModelConfig::canonical() { return ModelConfig{}; }

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.dim = 128;
  c.heads = 4;
  c.mlp_dim = 256;
  c.layers = 2;
  c.dropout = 0.1;
  return c;
}

void ModelConfig::validate() const {
  if (patch == 0 || stride == 0) throw ConfigError("patch size and stride must be positive");
  if (dim == 0 || heads == 0 || mlp_dim == 0) throw ConfigError("dim, heads and mlp_dim must be positive");
  if (dim % heads != 0) throw ConfigError("dim " + std::to_string(dim) + " is not divisible by heads " + std::to_string(heads));
  if (center_dim() % heads != 0) throw ConfigError("center dim is not divisible by heads");
  if (dim % 4 != 0) throw ConfigError("dim must be a multiple of 4 for the 2-D position table");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  patch_counts(height, width, patch, stride);
}

std::string ModelConfig::to_kv() const {
  std::ostringstream os;
  os.precision(17);
  os << "height = " << height << '\n'
     << "width = " << width << '\n'
     << "patch = " << patch << '\n'
     << "stride = " << stride << '\n'
     << "dim = " << dim << '\n'
     << "layers = " << layers << '\n'
     << "heads = " << heads << '\n'
     << "mlp_dim = " << mlp_dim << '\n'
     << "dropout = " << dropout << '\n'
     << "integration = " << integration_name(integration) << '\n'
     << "sharing = " << sharing_name(sharing) << '\n';
  return os.str();
}

void ModelConfig::set(const std::string& key, const std::string& value) {
  auto as_size = [&]() -> std::size_t {
    try {
      std::size_t pos = 0;
      long long v = std::stoll(value, &pos);
      if (pos != value.size() || v < 0) throw std::invalid_argument(value);
      return static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
      throw ConfigError("invalid integer '" + value + "' for " + key);
    }
  };
  if (key == "height") height = as_size();
  else if (key == "width") width = as_size();
  else if (key == "patch") patch = as_size();
  else if (key == "stride") stride = as_size();
  else if (key == "dim") dim = as_size();
  else if (key == "layers") layers = as_size();
  else if (key == "heads") heads = as_size();
  else if (key == "mlp_dim") mlp_dim = as_size();
  else if (key == "dropout") {
    try {
      dropout = std::stod(value);
    } catch (const std::logic_error&) {
      throw ConfigError("invalid number '" + value + "' for dropout");
    }
  } else if (key == "integration") integration = parse_integration(value);
  else if (key == "sharing") sharing = parse_sharing(value);
  else throw ConfigError("unknown model config key '" + key + "'");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ModelConfig ModelConfig::parse(const std::string& text) {
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value', got '" + line + "'");
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  c.validate();
  return c;
}

std::string ModelConfig::hash() const { return hash_hex(fnv1a64(to_kv())); }

PatchGrid patch_counts(std::size_t height, std::size_t width, std::size_t patch, std::size_t stride) {
  if (patch == 0 || stride == 0) throw ConfigError("patch size and stride must be positive");
  if (height == 0 || width == 0) throw ConfigError("spectrogram extents must be positive");
  if (patch > height && patch > width) {
    throw ConfigError("patch size " + std::to_string(patch) + " exceeds both spectrogram extents");
  }
  // ceil((extent - P + S) / S), at least one patch; pad so the last window fits.
  auto axis = [&](std::size_t extent, std::size_t& count, std::size_t& pad) {
    if (extent <= patch) {
      count = 1;
      pad = patch - extent;
      return;
    }
    count = (extent - patch + stride + stride - 1) / stride;
    pad = (count - 1) * stride + patch - extent;
  };
  PatchGrid g;
  axis(height, g.rows, g.pad_top);
  axis(width, g.cols, g.pad_right);
  return g;
}

Tensor extract_patches(Graph& g, const Tensor& spectrograms, const PatchGrid& grid, std::size_t patch,
                       std::size_t stride) {
  if (spectrograms.rank() != 3) {
    throw InputError("expected [batch, height, width] spectrograms, got " + shape_str(spectrograms.shape()));
  }
  const std::size_t batch = spectrograms.dim(0), height = spectrograms.dim(1), width = spectrograms.dim(2);
  if ((grid.rows - 1) * stride + patch != height + grid.pad_top ||
      (grid.cols - 1) * stride + patch != width + grid.pad_right) {
    throw InputError("spectrogram " + shape_str(spectrograms.shape()) + " does not match the patch grid");
  }
  const std::size_t n = grid.count(), pp = patch * patch;
  Tensor out(Shape{batch, n, pp});
  // gather[i] = source index of output element i within one sample, or -1 for padding.
  std::vector<long> gather(n * pp, -1);
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      const std::size_t p = r * grid.cols + c;
      for (std::size_t i = 0; i < patch; ++i) {
        for (std::size_t j = 0; j < patch; ++j) {
          const std::size_t h = r * stride + i, t = c * stride + j;
          if (h < height && t < width) gather[p * pp + i * patch + j] = static_cast<long>(h * width + t);
        }
      }
    }
  }
  const std::size_t plane = height * width;
  auto src = spectrograms.data();
  auto dst = out.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < gather.size(); ++k) {
      dst[b * n * pp + k] = gather[k] < 0 ? Real(0) : src[b * plane + static_cast<std::size_t>(gather[k])];
    }
  }
  if (g.tracks({&spectrograms})) {
    g.record(out, [spectrograms, out, gather = std::move(gather), batch, plane, n, pp]() mutable {
      auto go = std::as_const(out).grad();
      auto gs = spectrograms.grad();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t k = 0; k < gather.size(); ++k) {
          if (gather[k] >= 0) gs[b * plane + static_cast<std::size_t>(gather[k])] += go[b * n * pp + k];
        }
      }
    });
  }
  return out;
}

Tensor position_table(const PatchGrid& grid, std::size_t dim) {
  if (dim % 4 != 0) throw ConfigError("position table needs dim divisible by 4");
  const std::size_t half = dim / 2, quarter = dim / 4;
  Tensor table(Shape{grid.count(), dim});
  auto d = table.data();
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      const std::size_t p = r * grid.cols + c;
      for (std::size_t k = 0; k < quarter; ++k) {
        const double freq = std::pow(10000.0, -static_cast<double>(2 * k) / static_cast<double>(half));
        d[p * dim + 2 * k] = static_cast<Real>(std::sin(r * freq));
        d[p * dim + 2 * k + 1] = static_cast<Real>(std::cos(r * freq));
        d[p * dim + half + 2 * k] = static_cast<Real>(std::sin(c * freq));
        d[p * dim + half + 2 * k + 1] = static_cast<Real>(std::cos(c * freq));
      }
    }
  }
  return table;
}

Tensor linear(Graph& g, const Tensor& x, const LinearLayer& layer) {
  return add(g, matmul(g, x, layer.weight), layer.bias);
}

EncoderResult encoder_forward(Graph& g, const Tensor& sequence, const Encoder& encoder, bool training,
                              std::mt19937_64& rng) {
  if (sequence.rank() != 3 || sequence.dim(2) != encoder.dim) {
    throw DimensionError("encoder of width " + std::to_string(encoder.dim) + " got sequence " +
                         shape_str(sequence.shape()));
  }
  const std::size_t batch = sequence.dim(0), tokens = sequence.dim(1), d = encoder.dim, heads = encoder.heads;
  const std::size_t head_dim = d / heads;
  const Real dropout_rate = static_cast<Real>(encoder.dropout);
  const Real score_scale = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(head_dim)));
  EncoderResult result;
  Tensor x = sequence;
  auto split_heads = [&](const Tensor& t, std::size_t part) {
    Tensor s = slice(g, t, -1, part * d, d);
    return permute(g, reshape(g, s, Shape{batch, tokens, heads, head_dim}), {0, 2, 1, 3});
  };
  for (const auto& layer : encoder.layers) {
    Tensor h = layer_norm(g, x, layer.norm1.gain, layer.norm1.bias, -1);
    Tensor qkv = linear(g, h, layer.qkv);
    Tensor q = split_heads(qkv, 0);
    Tensor k = split_heads(qkv, 1);
    Tensor v = split_heads(qkv, 2);
    Tensor attn = softmax(g, scale(g, matmul(g, q, k, true), score_scale), -1);
    result.attention.push_back(attn);
    Tensor ctx = reshape(g, permute(g, matmul(g, attn, v), {0, 2, 1, 3}), Shape{batch, tokens, d});
    x = add(g, x, linear(g, ctx, layer.proj));

    h = layer_norm(g, x, layer.norm2.gain, layer.norm2.bias, -1);
    h = dropout(g, gelu(g, linear(g, h, layer.fc1)), dropout_rate, training, rng);
    h = dropout(g, linear(g, h, layer.fc2), dropout_rate, training, rng);
    x = add(g, x, h);
  }
  result.sequence = x;
  return result;
}

Tensor integrate(Graph& g, const Tensor& left, const Tensor& right, Integration mode) {
  if (left.shape() != right.shape()) {
    throw DimensionError("integration needs equal shapes, got " + shape_str(left.shape()) + " and " +
                         shape_str(right.shape()));
  }
  switch (mode) {
    case Integration::Add:
      return add(g, left, right);
    case Integration::Sub:
      return sub(g, right, left);
    case Integration::Concat:
      return concat(g, left, right, -1);
  }
  throw ConfigError("unknown integration mode");
}

namespace {

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  // Normal(0, 0.02) truncated at two standard deviations.
  Tensor trunc_normal(Shape shape) {
    Tensor t(std::move(shape), true);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Real& v : t.data()) {
      double z;
      do {
        z = dist(rng_);
      } while (std::abs(z) > 2.0);
      v = static_cast<Real>(0.02 * z);
    }
    return t;
  }

  static Tensor constant(Shape shape, Real value) {
    Tensor t(std::move(shape), true);
    for (Real& v : t.data()) v = value;
    return t;
  }

  LinearLayer linear(std::size_t in, std::size_t out) { return {trunc_normal({in, out}), constant({out}, 0)}; }
  static NormLayer norm(std::size_t d) { return {constant({d}, 1), constant({d}, 0)}; }

  Encoder encoder(std::size_t dim, std::size_t heads, std::size_t mlp, std::size_t layers, double dropout) {
    Encoder e;
    e.dim = dim;
    e.heads = heads;
    e.dropout = dropout;
    for (std::size_t i = 0; i < layers; ++i) {
      EncoderLayer l;
      l.norm1 = norm(dim);
      l.qkv = linear(dim, 3 * dim);
      l.proj = linear(dim, dim);
      l.norm2 = norm(dim);
      l.fc1 = linear(dim, mlp);
      l.fc2 = linear(mlp, dim);
      e.layers.push_back(std::move(l));
    }
    return e;
  }

 private:
  std::mt19937_64 rng_;
};

void append_linear(std::vector<NamedTensor>& out, const std::string& prefix, const LinearLayer& l) {
  out.push_back({prefix + ".weight", l.weight});
  out.push_back({prefix + ".bias", l.bias});
}

void append_encoder(std::vector<NamedTensor>& out, const std::string& prefix, const Encoder& e) {
  for (std::size_t i = 0; i < e.layers.size(); ++i) {
    const auto& l = e.layers[i];
    const std::string p = prefix + "." + std::to_string(i);
    out.push_back({p + ".norm1.gain", l.norm1.gain});
    out.push_back({p + ".norm1.bias", l.norm1.bias});
    append_linear(out, p + ".qkv", l.qkv);
    append_linear(out, p + ".proj", l.proj);
    out.push_back({p + ".norm2.gain", l.norm2.gain});
    out.push_back({p + ".norm2.bias", l.norm2.bias});
    append_linear(out, p + ".fc1", l.fc1);
    append_linear(out, p + ".fc2", l.fc2);
  }
}

}  // namespace

BastModel::BastModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  grid_ = patch_counts(config_.height, config_.width, config_.patch, config_.stride);
  Initializer init(seed);
  const std::size_t d = config_.dim;
  left_patch_ = init.linear(config_.patch * config_.patch, d);
  left_ = init.encoder(d, config_.heads, config_.mlp_dim, config_.layers, config_.dropout);
  if (config_.sharing == Sharing::Shared) {
    right_patch_ = left_patch_;
    right_ = left_;
  } else {
    right_patch_ = init.linear(config_.patch * config_.patch, d);
    right_ = init.encoder(d, config_.heads, config_.mlp_dim, config_.layers, config_.dropout);
  }
  center_ = init.encoder(config_.center_dim(), config_.heads, config_.mlp_dim, config_.layers, config_.dropout);
  head_ = init.linear(config_.center_dim(), 2);
  positions_ = position_table(grid_, d);
}

Tensor BastModel::embed(Graph& g, const Tensor& spectrograms, Ear ear, bool training, std::mt19937_64& rng) const {
  if (spectrograms.rank() != 3 || spectrograms.dim(1) != config_.height || spectrograms.dim(2) != config_.width) {
    throw InputError("expected spectrograms [batch, " + std::to_string(config_.height) + ", " +
                     std::to_string(config_.width) + "], got " + shape_str(spectrograms.shape()));
  }
  Tensor patches = extract_patches(g, spectrograms, grid_, config_.patch, config_.stride);
  Tensor z = add(g, linear(g, patches, patch_projection(ear)), positions_);
  return dropout(g, z, static_cast<Real>(config_.dropout), training, rng);
}

ForwardResult BastModel::forward(Graph& g, const Tensor& left, const Tensor& right, bool training,
                                 std::mt19937_64& rng) const {
  if (left.shape() != right.shape()) {
    throw InputError("left/right spectrogram batches differ: " + shape_str(left.shape()) + " vs " +
                     shape_str(right.shape()));
  }
  ForwardResult r;
  auto lres = encoder_forward(g, embed(g, left, Ear::Left, training, rng), left_, training, rng);
  auto rres = encoder_forward(g, embed(g, right, Ear::Right, training, rng), right_, training, rng);
  r.left_out = lres.sequence;
  r.right_out = rres.sequence;
  r.left_attention = std::move(lres.attention);
  r.right_attention = std::move(rres.attention);
  r.integrated = integrate(g, r.left_out, r.right_out, config_.integration);
  auto cres = encoder_forward(g, r.integrated, center_, training, rng);
  r.center_attention = std::move(cres.attention);
  r.coords = linear(g, mean(g, cres.sequence, 1), head_);
  return r;
}

ForwardResult BastModel::predict(const Tensor& left, const Tensor& right) const {
  Graph g(false);
  std::mt19937_64 unused(0);
  return forward(g, left, right, false, unused);
}

std::vector<NamedTensor> BastModel::parameters() const {
  std::vector<NamedTensor> all;
  const bool shared = config_.sharing == Sharing::Shared;
  append_linear(all, shared ? "ear.patch" : "left.patch", left_patch_);
  append_encoder(all, shared ? "ear.encoder" : "left.encoder", left_);
  append_linear(all, "right.patch", right_patch_);
  append_encoder(all, "right.encoder", right_);
  append_encoder(all, "center.encoder", center_);
  append_linear(all, "head", head_);
  std::vector<NamedTensor> unique;
  for (auto& p : all) {
    bool seen = false;
    for (const auto& u : unique) seen = seen || u.tensor.same_storage(p.tensor);
    if (!seen) unique.push_back(std::move(p));
  }
  return unique;
}

std::size_t BastModel::count_parameters() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

TensorFile BastModel::to_checkpoint() const {
  TensorFile f;
  f.tag = "model " + config_.hash();
  f.tensors = parameters();
  return f;
}

void BastModel::load_checkpoint(const TensorFile& file) {
  if (file.tag != "model " + config_.hash()) {
    throw ConfigError("checkpoint was written for a different model config (tag '" + file.tag + "', expected 'model " +
                      config_.hash() + "')");
  }
  auto params = parameters();
  if (file.tensors.size() != params.size()) throw ConfigError("checkpoint tensor count does not match the model");
  for (auto& p : params) {
    const Tensor* src = file.find(p.name);
    if (!src || src->shape() != p.tensor.shape()) throw ConfigError("checkpoint lacks a matching '" + p.name + "'");
    auto s = src->data();
    std::copy(s.begin(), s.end(), p.tensor.data().begin());
  }
}

BAST_NAMESPACE_END
