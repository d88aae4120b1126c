#include "bast/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <numeric>

BAST_NAMESPACE_BEGIN

namespace {

using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

std::size_t normalize_axis(int axis, std::size_t rank) {
  int r = static_cast<int>(rank);
  int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

// Splits a shape around `axis` into (outer, extent, inner).
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

void accumulate(std::span<Real> dst, std::span<const Real> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b, bool transpose_b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  auto mismatch = [&] {
    return DimensionError("matmul shape mismatch: " + shape_str(as) + " x " + shape_str(bs) +
                          (transpose_b ? " (b transposed)" : ""));
  };
  if (as.size() < 2 || bs.size() < 2) throw mismatch();
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as.back();
  const std::size_t bk = transpose_b ? bs.back() : bs[bs.size() - 2];
  const std::size_t n = transpose_b ? bs[bs.size() - 2] : bs.back();
  if (k != bk) throw mismatch();

  const bool shared_b = bs.size() == 2;
  if (!shared_b && (bs.size() != as.size() || !std::equal(as.begin(), as.end() - 2, bs.begin()))) throw mismatch();

  Shape out_shape(as.begin(), as.end() - 1);
  out_shape.push_back(n);
  Tensor out = Tensor::empty(out_shape);

  const std::size_t batch = a.numel() / (m * k);
  auto bmat = [&](const Real* base, std::size_t i) {
    const Real* p = base + (shared_b ? 0 : i * k * n);
    return transpose_b ? ConstMatMap(p, n, k) : ConstMatMap(p, k, n);
  };

  if (shared_b) {
    ConstMatMap am(a.data().data(), batch * m, k);
    MatMap cm(out.data().data(), batch * m, n);
    if (transpose_b)
      cm.noalias() = am * bmat(b.data().data(), 0).transpose();
    else
      cm.noalias() = am * bmat(b.data().data(), 0);
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      ConstMatMap am(a.data().data() + i * m * k, m, k);
      MatMap cm(out.data().data() + i * m * n, m, n);
      if (transpose_b)
        cm.noalias() = am * bmat(b.data().data(), i).transpose();
      else
        cm.noalias() = am * bmat(b.data().data(), i);
    }
  }

  if (g.tracks({&a, &b})) {
    g.record(out, [a, b, out, m, k, n, batch, shared_b, transpose_b]() mutable {
      const Real* dc = out.grad().data();
      if (a.requires_grad()) {
        Real* da = a.grad().data();
        const std::size_t rows = shared_b ? batch * m : m;
        const std::size_t reps = shared_b ? 1 : batch;
        for (std::size_t i = 0; i < reps; ++i) {
          ConstMatMap dcm(dc + i * m * n, rows, n);
          MatMap dam(da + i * m * k, rows, k);
          const Real* bp = b.data().data() + (shared_b ? 0 : i * k * n);
          if (transpose_b)
            dam.noalias() += dcm * ConstMatMap(bp, n, k);
          else
            dam.noalias() += dcm * ConstMatMap(bp, k, n).transpose();
        }
      }
      if (b.requires_grad()) {
        Real* db = b.grad().data();
        const std::size_t rows = shared_b ? batch * m : m;
        const std::size_t reps = shared_b ? 1 : batch;
        for (std::size_t i = 0; i < reps; ++i) {
          ConstMatMap dcm(dc + i * m * n, rows, n);
          ConstMatMap am(a.data().data() + i * m * k, rows, k);
          Real* dbp = db + (shared_b ? 0 : i * k * n);
          if (transpose_b)
            MatMap(dbp, n, k).noalias() += dcm.transpose() * am;
          else
            MatMap(dbp, k, n).noalias() += am.transpose() * dcm;
        }
      }
    });
  }
  return out;
}

namespace {

enum class BinaryKind { Add, Sub };

Tensor add_or_sub(Graph& g, const Tensor& a, const Tensor& b, BinaryKind kind) {
  if (!is_suffix(b.shape(), a.shape())) {
    throw DimensionError(std::string(kind == BinaryKind::Add ? "add" : "sub") + " shape mismatch: " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  Tensor out = Tensor::empty(a.shape());
  const std::size_t nb = b.numel();
  const std::size_t blocks = a.numel() / nb;
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.data();
  const Real sign = kind == BinaryKind::Add ? Real(1) : Real(-1);
  for (std::size_t r = 0; r < blocks; ++r) {
    for (std::size_t i = 0; i < nb; ++i) {
      od[r * nb + i] = kind == BinaryKind::Add ? ad[r * nb + i] + bd[i] : ad[r * nb + i] - bd[i];
    }
  }
  if (g.tracks({&a, &b})) {
    g.record(out, [a, b, out, nb, blocks, sign]() mutable {
      auto go = std::as_const(out).grad();
      if (a.requires_grad()) accumulate(a.grad(), go);
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < nb; ++i) {
          double s = 0.0;
          for (std::size_t r = 0; r < blocks; ++r) s += go[r * nb + i];
          gb[i] += sign * static_cast<Real>(s);
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(Graph& g, const Tensor& a, const Tensor& b) { return add_or_sub(g, a, b, BinaryKind::Add); }

Tensor sub(Graph& g, const Tensor& a, const Tensor& b) { return add_or_sub(g, a, b, BinaryKind::Sub); }

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul shape mismatch: " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  Tensor out = Tensor::empty(a.shape());
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * bd[i];
  if (g.tracks({&a, &b})) {
    g.record(out, [a, b, out]() mutable {
      auto go = std::as_const(out).grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        auto bd = b.data();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * bd[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        auto ad = a.data();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * ad[i];
      }
    });
  }
  return out;
}

Tensor scale(Graph& g, const Tensor& a, Real factor) {
  Tensor out = Tensor::empty(a.shape());
  auto ad = a.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * factor;
  if (g.tracks({&a})) {
    g.record(out, [a, out, factor]() mutable {
      auto go = std::as_const(out).grad();
      auto ga = a.grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * factor;
    });
  }
  return out;
}

Tensor gelu(Graph& g, const Tensor& x) {
  Tensor out = Tensor::empty(x.shape());
  auto xd = x.data();
  auto od = out.data();
  constexpr Real inv_sqrt2 = Real(0.70710678118654752440);
  // Standard normal CDF, reused by the backward rule.
  std::vector<Real> cdf(od.size());
  for (std::size_t i = 0; i < od.size(); ++i) {
    cdf[i] = Real(0.5) * (Real(1) + std::erf(xd[i] * inv_sqrt2));
    od[i] = xd[i] * cdf[i];
  }
  if (g.tracks({&x})) {
    g.record(out, [x, out, cdf = std::move(cdf)]() mutable {
      constexpr Real inv_sqrt2pi = Real(0.39894228040143267794);
      auto go = std::as_const(out).grad();
      auto gx = x.grad();
      auto xd = x.data();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const Real v = xd[i];
        gx[i] += go[i] * (cdf[i] + v * inv_sqrt2pi * std::exp(Real(-0.5) * v * v));
      }
    });
  }
  return out;
}

Tensor dropout(Graph& g, const Tensor& x, Real rate, bool training, std::mt19937_64& rng) {
  if (!(rate >= Real(0) && rate < Real(1))) {
    throw ParameterError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == Real(0)) return x;
  Tensor out = Tensor::empty(x.shape());
  std::vector<Real> mask(x.numel());
  const Real keep_scale = Real(1) / (Real(1) - rate);
  // Each 64-bit draw yields two 32-bit uniforms; drop when one falls below rate * 2^32.
  const auto threshold = static_cast<std::uint64_t>(static_cast<double>(rate) * 4294967296.0);
  auto xd = x.data();
  auto od = out.data();
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (i % 2 == 0) bits = rng();
    const std::uint64_t u = i % 2 == 0 ? (bits & 0xffffffffu) : (bits >> 32);
    mask[i] = u < threshold ? Real(0) : keep_scale;
    od[i] = xd[i] * mask[i];
  }
  if (g.tracks({&x})) {
    g.record(out, [x, out, mask = std::move(mask)]() mutable {
      auto go = std::as_const(out).grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * mask[i];
    });
  }
  return out;
}

Tensor softmax(Graph& g, const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit sp = split_at(x.shape(), ax);
  Tensor out = Tensor::empty(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.extent * sp.inner + in;
      Real mx = xd[base];
      for (std::size_t j = 1; j < sp.extent; ++j) mx = std::max(mx, xd[base + j * sp.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < sp.extent; ++j) {
        const Real e = std::exp(xd[base + j * sp.inner] - mx);
        od[base + j * sp.inner] = e;
        total += e;
      }
      const double inv = 1.0 / total;
      for (std::size_t j = 0; j < sp.extent; ++j) {
        od[base + j * sp.inner] = static_cast<Real>(od[base + j * sp.inner] * inv);
      }
    }
  }
  if (g.tracks({&x})) {
    g.record(out, [x, out, sp]() mutable {
      auto go = std::as_const(out).grad();
      auto y = std::as_const(out).data();
      auto gx = x.grad();
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
          const std::size_t base = o * sp.extent * sp.inner + in;
          double dot = 0.0;
          for (std::size_t j = 0; j < sp.extent; ++j) {
            const std::size_t idx = base + j * sp.inner;
            dot += static_cast<double>(go[idx]) * y[idx];
          }
          for (std::size_t j = 0; j < sp.extent; ++j) {
            const std::size_t idx = base + j * sp.inner;
            gx[idx] += static_cast<Real>(y[idx] * (go[idx] - dot));
          }
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain, const Tensor& bias, int axis, Real eps) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit sp = split_at(x.shape(), ax);
  if (gain.shape() != Shape{sp.extent} || bias.shape() != Shape{sp.extent}) {
    throw DimensionError("layer_norm gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " do not match axis extent " + std::to_string(sp.extent));
  }
  Tensor out = Tensor::empty(x.shape());
  const std::size_t rows = sp.outer * sp.inner;
  std::vector<Real> normalized(x.numel());
  std::vector<double> inv_std(rows);
  auto xd = x.data();
  auto od = out.data();
  auto gd = gain.data();
  auto bd = bias.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.extent * sp.inner + in;
      double m = 0.0;
      for (std::size_t j = 0; j < sp.extent; ++j) m += xd[base + j * sp.inner];
      m /= static_cast<double>(sp.extent);
      double var = 0.0;
      for (std::size_t j = 0; j < sp.extent; ++j) {
        double d = xd[base + j * sp.inner] - m;
        var += d * d;
      }
      var /= static_cast<double>(sp.extent);
      const double istd = 1.0 / std::sqrt(var + eps);
      inv_std[o * sp.inner + in] = istd;
      for (std::size_t j = 0; j < sp.extent; ++j) {
        const std::size_t idx = base + j * sp.inner;
        const Real nrm = static_cast<Real>((xd[idx] - m) * istd);
        normalized[idx] = nrm;
        od[idx] = nrm * gd[j] + bd[j];
      }
    }
  }
  if (g.tracks({&x, &gain, &bias})) {
    g.record(out, [x, gain, bias, out, sp, normalized = std::move(normalized),
                   inv_std = std::move(inv_std)]() mutable {
      auto go = std::as_const(out).grad();
      auto gd = gain.data();
      const bool need_x = x.requires_grad();
      std::vector<double> dgain(sp.extent, 0.0), dbias(sp.extent, 0.0);
      std::span<Real> gx;
      if (need_x) gx = x.grad();
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
          const std::size_t base = o * sp.extent * sp.inner + in;
          double mean_dn = 0.0, mean_dn_n = 0.0;
          for (std::size_t j = 0; j < sp.extent; ++j) {
            const std::size_t idx = base + j * sp.inner;
            dgain[j] += static_cast<double>(go[idx]) * normalized[idx];
            dbias[j] += go[idx];
            const double dn = static_cast<double>(go[idx]) * gd[j];
            mean_dn += dn;
            mean_dn_n += dn * normalized[idx];
          }
          if (!need_x) continue;
          mean_dn /= static_cast<double>(sp.extent);
          mean_dn_n /= static_cast<double>(sp.extent);
          const double istd = inv_std[o * sp.inner + in];
          for (std::size_t j = 0; j < sp.extent; ++j) {
            const std::size_t idx = base + j * sp.inner;
            const double dn = static_cast<double>(go[idx]) * gd[j];
            gx[idx] += static_cast<Real>(istd * (dn - mean_dn - normalized[idx] * mean_dn_n));
          }
        }
      }
      if (gain.requires_grad()) {
        auto gg = gain.grad();
        for (std::size_t j = 0; j < sp.extent; ++j) gg[j] += static_cast<Real>(dgain[j]);
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad();
        for (std::size_t j = 0; j < sp.extent; ++j) gb[j] += static_cast<Real>(dbias[j]);
      }
    });
  }
  return out;
}

Tensor sum(Graph& g, const Tensor& x) {
  double total = 0.0;
  for (Real v : x.data()) total += v;
  Tensor out = Tensor::scalar(static_cast<Real>(total));
  if (g.tracks({&x})) {
    g.record(out, [x, out]() mutable {
      const Real go = std::as_const(out).grad()[0];
      for (Real& v : x.grad()) v += go;
    });
  }
  return out;
}

Tensor mean(Graph& g, const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit sp = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor out = Tensor::empty(out_shape);
  auto xd = x.data();
  auto od = out.data();
  const double inv = 1.0 / static_cast<double>(sp.extent);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      double s = 0.0;
      for (std::size_t j = 0; j < sp.extent; ++j) s += xd[(o * sp.extent + j) * sp.inner + in];
      od[o * sp.inner + in] = static_cast<Real>(s * inv);
    }
  }
  if (g.tracks({&x})) {
    g.record(out, [x, out, sp, inv]() mutable {
      auto go = std::as_const(out).grad();
      auto gx = x.grad();
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
          const Real d = static_cast<Real>(go[o * sp.inner + in] * inv);
          for (std::size_t j = 0; j < sp.extent; ++j) gx[(o * sp.extent + j) * sp.inner + in] += d;
        }
      }
    });
  }
  return out;
}

Tensor concat(Graph& g, const Tensor& a, const Tensor& b, int axis) {
  const std::size_t ax = normalize_axis(axis, a.rank());
  Shape as = a.shape(), bs = b.shape();
  if (as.size() != bs.size()) throw DimensionError("concat rank mismatch: " + shape_str(as) + " and " + shape_str(bs));
  for (std::size_t i = 0; i < as.size(); ++i) {
    if (i != ax && as[i] != bs[i]) {
      throw DimensionError("concat shape mismatch: " + shape_str(as) + " and " + shape_str(bs));
    }
  }
  const AxisSplit sa = split_at(as, ax), sb = split_at(bs, ax);
  Shape out_shape = as;
  out_shape[ax] = as[ax] + bs[ax];
  Tensor out = Tensor::empty(out_shape);
  const std::size_t ca = sa.extent * sa.inner, cb = sb.extent * sb.inner;
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.data();
  for (std::size_t o = 0; o < sa.outer; ++o) {
    std::copy_n(ad.begin() + o * ca, ca, od.begin() + o * (ca + cb));
    std::copy_n(bd.begin() + o * cb, cb, od.begin() + o * (ca + cb) + ca);
  }
  if (g.tracks({&a, &b})) {
    g.record(out, [a, b, out, ca, cb, outer = sa.outer]() mutable {
      auto go = std::as_const(out).grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < ca; ++i) ga[o * ca + i] += go[o * (ca + cb) + i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < cb; ++i) gb[o * cb + i] += go[o * (ca + cb) + ca + i];
      }
    });
  }
  return out;
}

Tensor slice(Graph& g, const Tensor& x, int axis, std::size_t start, std::size_t length) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit sp = split_at(x.shape(), ax);
  if (length == 0 || start + length > sp.extent) {
    throw DimensionError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range for " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[ax] = length;
  Tensor out = Tensor::empty(out_shape);
  const std::size_t src_row = sp.extent * sp.inner, dst_row = length * sp.inner, off = start * sp.inner;
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t o = 0; o < sp.outer; ++o) std::copy_n(xd.begin() + o * src_row + off, dst_row, od.begin() + o * dst_row);
  if (g.tracks({&x})) {
    g.record(out, [x, out, src_row, dst_row, off, outer = sp.outer]() mutable {
      auto go = std::as_const(out).grad();
      auto gx = x.grad();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < dst_row; ++i) gx[o * src_row + off + i] += go[o * dst_row + i];
    });
  }
  return out;
}

Tensor reshape(Graph& g, const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  auto xd = x.data();
  Tensor out = Tensor::empty(std::move(shape));
  std::copy(xd.begin(), xd.end(), out.data().begin());
  if (g.tracks({&x})) {
    g.record(out, [x, out]() mutable { accumulate(x.grad(), std::as_const(out).grad()); });
  }
  return out;
}

Tensor permute(Graph& g, const Tensor& x, const std::vector<std::size_t>& order) {
  const Shape& xs = x.shape();
  const std::size_t r = xs.size();
  std::vector<std::size_t> check(order);
  std::sort(check.begin(), check.end());
  for (std::size_t i = 0; i < r; ++i) {
    if (check.size() != r || check[i] != i) throw DimensionError("invalid permutation for " + shape_str(xs));
  }
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * xs[i];
  Shape out_shape(r);
  std::vector<std::size_t> stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = xs[order[i]];
    stride[i] = in_stride[order[i]];
  }
  // src_index[i] = input offset of output element i.
  const std::size_t n = x.numel();
  std::vector<std::size_t> src_index(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    src_index[i] = off;
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      off += stride[d];
      if (idx[d] < out_shape[d]) break;
      off -= stride[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  Tensor out = Tensor::empty(out_shape);
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < n; ++i) od[i] = xd[src_index[i]];
  if (g.tracks({&x})) {
    g.record(out, [x, out, src_index = std::move(src_index)]() mutable {
      auto go = std::as_const(out).grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[src_index[i]] += go[i];
    });
  }
  return out;
}

BAST_NAMESPACE_END
