#include "asymprune/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace asymprune {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using MapC = Eigen::Map<const EMat>;

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

void check_finite(const Tensor& t, const char* op) {
  const double* p = t.raw();
  const long long n = t.size();
  for (long long i = 0; i < n; ++i) {
    if (!std::isfinite(p[i]))
      throw std::runtime_error(std::string(op) + ": non-finite value in output");
  }
}

bool grad_path(const Tensor& t) { return t.has_grad(); }

}  // namespace

void backward(Tape& tape, Tensor& loss) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                shape_str(loss.shape()));
  loss.ensure_grad();
  loss.grad()[0] = 1.0;
  tape.run_backward();
}

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: dimension mismatch " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  MapM(out.raw(), m, n).noalias() = MapC(a.raw(), m, k) * MapC(b.raw(), k, n);
  check_finite(out, "matmul");
  if (tape && (grad_path(a) || grad_path(b))) {
    out.ensure_grad();
    Tensor ac = a, bc = b, oc = out;
    tape->record("matmul", [ac, bc, oc, m, k, n]() {
      MapC dout(oc.grad().data(), m, n);
      if (ac.has_grad())
        MapM(ac.grad().data(), m, k).noalias() +=
            dout * MapC(bc.raw(), k, n).transpose();
      if (bc.has_grad())
        MapM(bc.grad().data(), k, n).noalias() +=
            MapC(ac.raw(), m, k).transpose() * dout;
    });
  }
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b, Tape* tape) {
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0))
    throw std::invalid_argument("bmm: dimension mismatch " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  const int B = a.dim(0), m = a.dim(1), k = a.dim(2);
  const int n = transpose_b ? b.dim(1) : b.dim(2);
  const int bk = transpose_b ? b.dim(2) : b.dim(1);
  if (bk != k)
    throw std::invalid_argument("bmm: inner dimension mismatch " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  Tensor out({B, m, n});
  const long long sa = static_cast<long long>(m) * k;
  const long long sb = static_cast<long long>(b.dim(1)) * b.dim(2);
  const long long so = static_cast<long long>(m) * n;
  for (int i = 0; i < B; ++i) {
    MapM o(out.raw() + i * so, m, n);
    MapC ai(a.raw() + i * sa, m, k);
    if (transpose_b)
      o.noalias() = ai * MapC(b.raw() + i * sb, n, k).transpose();
    else
      o.noalias() = ai * MapC(b.raw() + i * sb, k, n);
  }
  check_finite(out, "bmm");
  if (tape && (grad_path(a) || grad_path(b))) {
    out.ensure_grad();
    Tensor ac = a, bc = b, oc = out;
    tape->record("bmm", [ac, bc, oc, transpose_b, B, m, k, n, sa, sb, so]() {
      for (int i = 0; i < B; ++i) {
        MapC dout(oc.grad().data() + i * so, m, n);
        if (ac.has_grad()) {
          MapM da(ac.grad().data() + i * sa, m, k);
          if (transpose_b)
            da.noalias() += dout * MapC(bc.raw() + i * sb, n, k);
          else
            da.noalias() += dout * MapC(bc.raw() + i * sb, k, n).transpose();
        }
        if (bc.has_grad()) {
          if (transpose_b) {
            MapM db(bc.grad().data() + i * sb, n, k);
            db.noalias() += dout.transpose() * MapC(ac.raw() + i * sa, m, k);
          } else {
            MapM db(bc.grad().data() + i * sb, k, n);
            db.noalias() += MapC(ac.raw() + i * sa, m, k).transpose() * dout;
          }
        }
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  Tensor out(a.shape());
  const long long n = a.size();
  const double* pa = a.raw();
  const double* pb = b.raw();
  double* po = out.raw();
  for (long long i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  check_finite(out, "add");
  if (tape && (grad_path(a) || grad_path(b))) {
    out.ensure_grad();
    Tensor ac = a, bc = b, oc = out;
    tape->record("add", [ac, bc, oc, n]() {
      const double* g = oc.grad().data();
      if (ac.has_grad()) {
        double* da = ac.grad().data();
        for (long long i = 0; i < n; ++i) da[i] += g[i];
      }
      if (bc.has_grad()) {
        double* db = bc.grad().data();
        for (long long i = 0; i < n; ++i) db[i] += g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  Tensor out(a.shape());
  const long long n = a.size();
  const double* pa = a.raw();
  const double* pb = b.raw();
  double* po = out.raw();
  for (long long i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  check_finite(out, "mul");
  if (tape && (grad_path(a) || grad_path(b))) {
    out.ensure_grad();
    Tensor ac = a, bc = b, oc = out;
    tape->record("mul", [ac, bc, oc, n]() {
      const double* g = oc.grad().data();
      if (ac.has_grad()) {
        double* da = ac.grad().data();
        const double* pb2 = bc.raw();
        for (long long i = 0; i < n; ++i) da[i] += g[i] * pb2[i];
      }
      if (bc.has_grad()) {
        double* db = bc.grad().data();
        const double* pa2 = ac.raw();
        for (long long i = 0; i < n; ++i) db[i] += g[i] * pa2[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double c, Tape* tape) {
  Tensor out(a.shape());
  const long long n = a.size();
  const double* pa = a.raw();
  double* po = out.raw();
  for (long long i = 0; i < n; ++i) po[i] = pa[i] * c;
  check_finite(out, "scale");
  if (tape && grad_path(a)) {
    out.ensure_grad();
    Tensor ac = a, oc = out;
    tape->record("scale", [ac, oc, c, n]() {
      const double* g = oc.grad().data();
      double* da = ac.grad().data();
      for (long long i = 0; i < n; ++i) da[i] += g[i] * c;
    });
  }
  return out;
}

Tensor relu(const Tensor& a, Tape* tape) {
  Tensor out(a.shape());
  const long long n = a.size();
  const double* pa = a.raw();
  double* po = out.raw();
  for (long long i = 0; i < n; ++i) po[i] = pa[i] > 0.0 ? pa[i] : 0.0;
  check_finite(out, "relu");
  if (tape && grad_path(a)) {
    out.ensure_grad();
    Tensor ac = a, oc = out;
    tape->record("relu", [ac, oc, n]() {
      const double* g = oc.grad().data();
      const double* pa2 = ac.raw();
      double* da = ac.grad().data();
      for (long long i = 0; i < n; ++i)
        if (pa2[i] > 0.0) da[i] += g[i];
    });
  }
  return out;
}

namespace {

// Softmax along the last axis of a [rows, n] layout.
void softmax_rows(const double* in, double* out, long long rows, int n) {
  for (long long r = 0; r < rows; ++r) {
    const double* x = in + r * n;
    double* y = out + r * n;
    double mx = x[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      y[i] = std::exp(x[i] - mx);
      sum += y[i];
    }
    const double inv = 1.0 / sum;
    for (int i = 0; i < n; ++i) y[i] *= inv;
  }
}

}  // namespace

Tensor softmax(const Tensor& x, int axis, Tape* tape) {
  const int nd = x.ndim();
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd)
    throw std::invalid_argument("softmax: invalid axis for shape " + shape_str(x.shape()));

  if (axis != nd - 1) {
    // Rotate the reduced axis to the end, reduce, rotate back.
    std::vector<int> perm, inv(nd);
    for (int i = 0; i < nd; ++i)
      if (i != axis) perm.push_back(i);
    perm.push_back(axis);
    for (int i = 0; i < nd; ++i) inv[perm[static_cast<size_t>(i)]] = i;
    Tensor moved = transpose(x, perm, tape);
    Tensor sm = softmax(moved, -1, tape);
    return transpose(sm, inv, tape);
  }

  const int n = x.dim(nd - 1);
  const long long rows = x.size() / n;
  Tensor out(x.shape());
  softmax_rows(x.raw(), out.raw(), rows, n);
  check_finite(out, "softmax");
  if (tape && grad_path(x)) {
    out.ensure_grad();
    Tensor xc = x, oc = out;
    tape->record("softmax", [xc, oc, rows, n]() {
      const double* y = oc.raw();
      const double* g = oc.grad().data();
      double* dx = xc.grad().data();
      for (long long r = 0; r < rows; ++r) {
        const double* yr = y + r * n;
        const double* gr = g + r * n;
        double dot = 0.0;
        for (int i = 0; i < n; ++i) dot += yr[i] * gr[i];
        double* dr = dx + r * n;
        for (int i = 0; i < n; ++i) dr[i] += yr[i] * (gr[i] - dot);
      }
    });
  }
  return out;
}

Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps, Tape* tape) {
  const int n = x.dim(x.ndim() - 1);
  if (gain.ndim() != 1 || gain.dim(0) != n)
    throw std::invalid_argument("rms_norm: gain shape " + shape_str(gain.shape()) +
                                " does not match last dim of " + shape_str(x.shape()));
  const long long rows = x.size() / n;
  Tensor out(x.shape());
  std::vector<double> inv_rms(static_cast<size_t>(rows));
  const double* px = x.raw();
  const double* pg = gain.raw();
  double* po = out.raw();
  for (long long r = 0; r < rows; ++r) {
    const double* xr = px + r * n;
    double ms = 0.0;
    for (int i = 0; i < n; ++i) ms += xr[i] * xr[i];
    const double inv = 1.0 / std::sqrt(ms / n + eps);
    inv_rms[static_cast<size_t>(r)] = inv;
    double* orow = po + r * n;
    for (int i = 0; i < n; ++i) orow[i] = pg[i] * xr[i] * inv;
  }
  check_finite(out, "rms_norm");
  if (tape && (grad_path(x) || grad_path(gain))) {
    out.ensure_grad();
    Tensor xc = x, gc = gain, oc = out;
    tape->record("rms_norm", [xc, gc, oc, rows, n, inv_rms = std::move(inv_rms)]() {
      const double* px2 = xc.raw();
      const double* pg2 = gc.raw();
      const double* g = oc.grad().data();
      for (long long r = 0; r < rows; ++r) {
        const double* xr = px2 + r * n;
        const double* gr = g + r * n;
        const double inv = inv_rms[static_cast<size_t>(r)];
        if (xc.has_grad()) {
          double dot = 0.0;
          for (int i = 0; i < n; ++i) dot += gr[i] * pg2[i] * xr[i];
          const double c = dot * inv * inv * inv / n;
          double* dx = xc.grad().data() + r * n;
          for (int i = 0; i < n; ++i) dx[i] += gr[i] * pg2[i] * inv - c * xr[i];
        }
        if (gc.has_grad()) {
          double* dg = gc.grad().data();
          for (int i = 0; i < n; ++i) dg[i] += gr[i] * xr[i] * inv;
        }
      }
    });
  }
  return out;
}

Tensor embedding(const std::vector<int>& ids, const Tensor& table, Tape* tape) {
  if (table.ndim() != 2)
    throw std::invalid_argument("embedding: table must be 2-D, got " +
                                shape_str(table.shape()));
  const int rows = table.dim(0), cols = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= rows)
      throw std::invalid_argument("embedding: id " + std::to_string(id) +
                                  " out of range [0," + std::to_string(rows) + ")");
  Tensor out({static_cast<int>(ids.size()), cols});
  const double* pt = table.raw();
  double* po = out.raw();
  for (size_t i = 0; i < ids.size(); ++i)
    std::copy(pt + static_cast<long long>(ids[i]) * cols,
              pt + static_cast<long long>(ids[i] + 1) * cols, po + i * cols);
  check_finite(out, "embedding");
  if (tape && grad_path(table)) {
    out.ensure_grad();
    Tensor tc = table, oc = out;
    tape->record("embedding", [tc, oc, ids, cols]() {
      const double* g = oc.grad().data();
      double* dt = tc.grad().data();
      for (size_t i = 0; i < ids.size(); ++i) {
        double* row = dt + static_cast<long long>(ids[i]) * cols;
        const double* grow = g + i * cols;
        for (int c = 0; c < cols; ++c) row[c] += grow[c];
      }
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     int ignore_index, Tape* tape) {
  const int vocab = logits.dim(logits.ndim() - 1);
  const long long rows = logits.size() / vocab;
  if (static_cast<long long>(targets.size()) != rows)
    throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(rows) + " rows");
  long long valid = 0;
  for (long long r = 0; r < rows; ++r) {
    const int t = targets[static_cast<size_t>(r)];
    if (t == ignore_index) continue;
    if (t < 0 || t >= vocab)
      throw std::invalid_argument("cross_entropy: target id " + std::to_string(t) +
                                  " out of vocab range");
    ++valid;
  }
  if (valid == 0)
    throw std::invalid_argument("cross_entropy: all positions ignored, loss is empty");

  const double* pl = logits.raw();
  double total = 0.0;
  for (long long r = 0; r < rows; ++r) {
    const int t = targets[static_cast<size_t>(r)];
    if (t == ignore_index) continue;
    const double* z = pl + r * vocab;
    double mx = z[0];
    for (int i = 1; i < vocab; ++i) mx = std::max(mx, z[i]);
    double sum = 0.0;
    for (int i = 0; i < vocab; ++i) sum += std::exp(z[i] - mx);
    total += std::log(sum) + mx - z[t];
  }
  Tensor out = Tensor::from_data({1}, {total / static_cast<double>(valid)});
  check_finite(out, "cross_entropy");
  if (tape && grad_path(logits)) {
    out.ensure_grad();
    Tensor lc = logits, oc = out;
    tape->record("cross_entropy", [lc, oc, targets, ignore_index, rows, vocab, valid]() {
      const double g = oc.grad()[0] / static_cast<double>(valid);
      const double* pl2 = lc.raw();
      double* dl = lc.grad().data();
      for (long long r = 0; r < rows; ++r) {
        const int t = targets[static_cast<size_t>(r)];
        if (t == ignore_index) continue;
        const double* z = pl2 + r * vocab;
        double* dz = dl + r * vocab;
        double mx = z[0];
        for (int i = 1; i < vocab; ++i) mx = std::max(mx, z[i]);
        double sum = 0.0;
        for (int i = 0; i < vocab; ++i) sum += std::exp(z[i] - mx);
        const double inv = 1.0 / sum;
        for (int i = 0; i < vocab; ++i) dz[i] += g * std::exp(z[i] - mx) * inv;
        dz[t] -= g;
      }
    });
  }
  return out;
}

namespace {

std::vector<long long> strides_of(const std::vector<int>& shape) {
  std::vector<long long> st(shape.size());
  long long acc = 1;
  for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
    st[static_cast<size_t>(i)] = acc;
    acc *= shape[static_cast<size_t>(i)];
  }
  return st;
}

// out[i0,..] = in[perm applied]; copies with precomputed strides.
void permute_copy(const double* in, double* out, const std::vector<int>& in_shape,
                  const std::vector<int>& perm, bool accumulate) {
  const int nd = static_cast<int>(in_shape.size());
  std::vector<int> out_shape(static_cast<size_t>(nd));
  for (int i = 0; i < nd; ++i) out_shape[static_cast<size_t>(i)] = in_shape[static_cast<size_t>(perm[static_cast<size_t>(i)])];
  auto in_st = strides_of(in_shape);
  std::vector<long long> gather_st(static_cast<size_t>(nd));
  for (int i = 0; i < nd; ++i) gather_st[static_cast<size_t>(i)] = in_st[static_cast<size_t>(perm[static_cast<size_t>(i)])];
  long long total = 1;
  for (int d : out_shape) total *= d;
  std::vector<int> idx(static_cast<size_t>(nd), 0);
  for (long long o = 0; o < total; ++o) {
    long long src = 0;
    for (int i = 0; i < nd; ++i) src += idx[static_cast<size_t>(i)] * gather_st[static_cast<size_t>(i)];
    if (accumulate)
      out[src] += in[o];
    else
      out[o] = in[src];
    for (int i = nd - 1; i >= 0; --i) {
      if (++idx[static_cast<size_t>(i)] < out_shape[static_cast<size_t>(i)]) break;
      idx[static_cast<size_t>(i)] = 0;
    }
  }
}

}  // namespace

Tensor transpose(const Tensor& a, const std::vector<int>& perm, Tape* tape) {
  const int nd = a.ndim();
  if (static_cast<int>(perm.size()) != nd)
    throw std::invalid_argument("transpose: perm rank mismatch for " +
                                shape_str(a.shape()));
  std::vector<int> new_shape(static_cast<size_t>(nd));
  for (int i = 0; i < nd; ++i) new_shape[static_cast<size_t>(i)] = a.dim(perm[static_cast<size_t>(i)]);
  Tensor out(new_shape);
  permute_copy(a.raw(), out.raw(), a.shape(), perm, false);
  if (tape && grad_path(a)) {
    out.ensure_grad();
    Tensor ac = a, oc = out;
    std::vector<int> permc = perm;
    tape->record("transpose", [ac, oc, permc]() {
      // d(in) accumulates the inverse permutation of d(out).
      permute_copy(oc.grad().data(), ac.grad().data(), ac.shape(), permc, true);
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, std::vector<int> new_shape) {
  // Row-major layout is unchanged, so data and grad buffers are shared and
  // backward needs no node.
  return a.view(std::move(new_shape));
}

Tensor sum_all(const Tensor& a, Tape* tape) {
  double s = 0.0;
  const double* pa = a.raw();
  const long long n = a.size();
  for (long long i = 0; i < n; ++i) s += pa[i];
  Tensor out = Tensor::from_data({1}, {s});
  check_finite(out, "sum_all");
  if (tape && grad_path(a)) {
    out.ensure_grad();
    Tensor ac = a, oc = out;
    tape->record("sum_all", [ac, oc, n]() {
      const double g = oc.grad()[0];
      double* da = ac.grad().data();
      for (long long i = 0; i < n; ++i) da[i] += g;
    });
  }
  return out;
}

Tensor apply_attention_bias(const Tensor& scores, const Tensor& bias,
                            const std::vector<uint8_t>* key_mask, int batch,
                            bool causal, int q_offset, Tape* tape) {
  if (scores.ndim() != 3)
    throw std::invalid_argument("apply_attention_bias: scores must be [B*H,T,S], got " +
                                shape_str(scores.shape()));
  const int BH = scores.dim(0), T = scores.dim(1), S = scores.dim(2);
  if (batch <= 0 || BH % batch != 0)
    throw std::invalid_argument("apply_attention_bias: batch does not divide B*H");
  const int H = BH / batch;
  if (bias.defined() &&
      (bias.ndim() != 3 || bias.dim(0) != H || bias.dim(1) != T || bias.dim(2) != S))
    throw std::invalid_argument("apply_attention_bias: bias shape " +
                                shape_str(bias.shape()) + " incompatible with scores " +
                                shape_str(scores.shape()));
  if (key_mask && static_cast<int>(key_mask->size()) != batch * S)
    throw std::invalid_argument("apply_attention_bias: key mask size mismatch");

  Tensor out(scores.shape());
  const double* ps = scores.raw();
  const double* pb = bias.defined() ? bias.raw() : nullptr;
  double* po = out.raw();
  const long long plane = static_cast<long long>(T) * S;
  for (int bh = 0; bh < BH; ++bh) {
    const int b = bh / H, h = bh % H;
    const double* srow = ps + bh * plane;
    const double* brow = pb ? pb + h * plane : nullptr;
    double* orow = po + bh * plane;
    const uint8_t* mk = key_mask ? key_mask->data() + static_cast<long long>(b) * S : nullptr;
    for (int i = 0; i < T; ++i) {
      for (int j = 0; j < S; ++j) {
        double v = srow[i * S + j];
        if (brow) v += brow[i * S + j];
        if (mk && !mk[j]) v += kMaskNeg;
        if (causal && j > i + q_offset) v += kMaskNeg;
        orow[i * S + j] = v;
      }
    }
  }
  // No finiteness check: masked entries are intentionally at -1e30 and the
  // downstream softmax normalizes them away.
  if (tape && (grad_path(scores) || grad_path(bias))) {
    out.ensure_grad();
    Tensor sc = scores, bc = bias, oc = out;
    tape->record("apply_attention_bias", [sc, bc, oc, BH, H, plane]() {
      const double* g = oc.grad().data();
      if (sc.has_grad()) {
        double* ds = sc.grad().data();
        const long long n = static_cast<long long>(BH) * plane;
        for (long long i = 0; i < n; ++i) ds[i] += g[i];
      }
      if (bc.defined() && bc.has_grad()) {
        double* db = bc.grad().data();
        for (int bh = 0; bh < BH; ++bh) {
          const int h = bh % H;
          const double* grow = g + bh * plane;
          double* brow = db + h * plane;
          for (long long i = 0; i < plane; ++i) brow[i] += grow[i];
        }
      }
    });
  }
  return out;
}

std::vector<int> argmax_lastdim(const Tensor& t) {
  const int n = t.dim(t.ndim() - 1);
  const long long rows = t.size() / n;
  std::vector<int> out(static_cast<size_t>(rows));
  const double* p = t.raw();
  for (long long r = 0; r < rows; ++r) {
    const double* row = p + r * n;
    int best = 0;
    for (int i = 1; i < n; ++i)
      if (row[i] > row[best]) best = i;
    out[static_cast<size_t>(r)] = best;
  }
  return out;
}

}  // namespace asymprune
