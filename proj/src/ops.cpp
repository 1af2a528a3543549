#include "mtdm/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

namespace mtdm {
namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

CMapMat as_mat(const Tensor& t) { return CMapMat(t.data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())); }
MapMat as_mat(Tensor& t) { return MapMat(t.data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())); }

void require_same_tape(Var a, Var b, const char* op) {
  if (a.tape != b.tape) throw std::logic_error(std::string(op) + ": operands live on different tapes");
}

void require_same_shape(Var a, Var b, const char* op) {
  require_same_tape(a, b, op);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_matrix(Var a, const char* op) {
  if (a.shape().size() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
  }
}

template <typename Fwd, typename Deriv>
Var unary(Var a, const char* op, Fwd fwd, Deriv deriv_from_out) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  return a.tape->record(op, std::move(out), {a}, [a, deriv_from_out](Tape& tape, const Tensor& g) {
    Tensor* ga = tape.grad_sink(a);
    if (!ga) return;
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += g[i] * deriv_from_out(x[i]);
  });
}

Real sigmoid_scalar(Real x) {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

void check_index(std::int64_t idx, std::size_t bound, const char* op) {
  if (idx < 0 || std::size_t(idx) >= bound) {
    throw std::out_of_range(std::string(op) + ": index " + std::to_string(idx) + " outside [0, " +
                            std::to_string(bound) + ")");
  }
}

// Row-wise softmax of a [rows, cols] tensor.
Tensor softmax_rows(const Tensor& logits) {
  Tensor p(logits.shape());
  const std::size_t n = logits.cols();
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    auto out = p.row(r);
    const Real mx = *std::max_element(in.begin(), in.end());
    Real z = 0;
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = std::exp(in[j] - mx);
      z += out[j];
    }
    for (std::size_t j = 0; j < n; ++j) out[j] /= z;
  }
  return p;
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor out({a.shape()[0], b.shape()[1]});
  as_mat(out).noalias() = as_mat(a.value()) * as_mat(b.value());
  return a.tape->record("matmul", std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    if (Tensor* ga = tape.grad_sink(a)) as_mat(*ga).noalias() += as_mat(g) * as_mat(b.value()).transpose();
    if (Tensor* gb = tape.grad_sink(b)) as_mat(*gb).noalias() += as_mat(a.value()).transpose() * as_mat(g);
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_tape(a, b, "matmul_nt");
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.shape()[1] != b.shape()[1]) {
    throw ShapeError("matmul_nt: column counts differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out({a.shape()[0], b.shape()[0]});
  as_mat(out).noalias() = as_mat(a.value()) * as_mat(b.value()).transpose();
  return a.tape->record("matmul_nt", std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    if (Tensor* ga = tape.grad_sink(a)) as_mat(*ga).noalias() += as_mat(g) * as_mat(b.value());
    if (Tensor* gb = tape.grad_sink(b)) as_mat(*gb).noalias() += as_mat(g).transpose() * as_mat(a.value());
  });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.tape->record("add", std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    for (Var v : {a, b}) {
      if (Tensor* gv = tape.grad_sink(v)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*gv)[i] += g[i];
      }
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape->record("sub", std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    if (Tensor* ga = tape.grad_sink(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    }
    if (Tensor* gb = tape.grad_sink(b)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape->record("mul", std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    if (Tensor* ga = tape.grad_sink(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * b.value()[i];
    }
    if (Tensor* gb = tape.grad_sink(b)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * a.value()[i];
    }
  });
}

Var affine(Var a, Real alpha, Real beta) {
  Tensor out = a.value();
  for (Real& v : out.values()) v = alpha * v + beta;
  return a.tape->record("affine", std::move(out), {a}, [a, alpha](Tape& tape, const Tensor& g) {
    if (Tensor* ga = tape.grad_sink(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += alpha * g[i];
    }
  });
}

Var add_row_bias(Var a, Var bias) {
  require_same_tape(a, bias, "add_row_bias");
  const std::size_t n = a.value().cols();
  if (bias.value().size() != n) {
    throw ShapeError("add_row_bias: bias " + shape_str(bias.shape()) + " does not match " + shape_str(a.shape()));
  }
  Tensor out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t j = 0; j < n; ++j) row[j] += bias.value()[j];
  }
  return a.tape->record("add_row_bias", std::move(out), {a, bias}, [a, bias, n](Tape& tape, const Tensor& g) {
    if (Tensor* ga = tape.grad_sink(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    }
    if (Tensor* gb = tape.grad_sink(bias)) {
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t j = 0; j < n; ++j) (*gb)[j] += g[r * n + j];
      }
    }
  });
}

Var sigmoid(Var a) {
  return unary(a, "sigmoid", sigmoid_scalar, [](Real x) {
    const Real s = sigmoid_scalar(x);
    return s * (Real(1) - s);
  });
}

Var tanh(Var a) {
  return unary(a, "tanh", [](Real x) { return std::tanh(x); }, [](Real x) {
    const Real t = std::tanh(x);
    return Real(1) - t * t;
  });
}

Var leaky_relu(Var a, Real slope) {
  return unary(a, "leaky_relu", [slope](Real x) { return x > 0 ? x : slope * x; },
               [slope](Real x) { return x > 0 ? Real(1) : slope; });
}

Var activate(Var a, Activation f) {
  switch (f) {
    case Activation::kLeakyRelu:
      return leaky_relu(a);
    case Activation::kIdentity:
      return a;
  }
  return a;
}

Var hard_round(Var a) {
  Tensor out = a.value();
  for (Real& v : out.values()) v = v >= Real(0.5) ? Real(1) : Real(0);
  return a.tape->record("hard_round", std::move(out), {a}, {});
}

Var dropout(Var a, Real p, std::mt19937_64& rng) {
  if (p <= 0) return a;
  if (p >= 1) throw std::invalid_argument("dropout: probability must be < 1");
  Tensor mask(a.shape());
  std::bernoulli_distribution keep(1.0 - double(p));
  const Real inv = Real(1) / (Real(1) - p);
  for (Real& m : mask.values()) m = keep(rng) ? inv : Real(0);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return a.tape->record("dropout", std::move(out), {a}, [a, mask = std::move(mask)](Tape& tape, const Tensor& g) {
    if (Tensor* ga = tape.grad_sink(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * mask[i];
    }
  });
}

Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t rows = parts[0].value().rows();
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p, "concat_cols");
    if (p.shape().size() != 2 || p.value().rows() != rows) {
      throw ShapeError("concat_cols: " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    }
    offsets.push_back(total);
    total += p.value().cols();
  }
  Tensor out({rows, total});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& src = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(src.row(r).begin(), src.row(r).end(), out.row(r).begin() + std::ptrdiff_t(offsets[k]));
    }
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape->record("concat_cols", std::move(out), inputs,
                               [inputs, offsets, total](Tape& tape, const Tensor& g) {
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      Tensor* gk = tape.grad_sink(inputs[k]);
      if (!gk) continue;
      const std::size_t w = gk->cols();
      for (std::size_t r = 0; r < gk->rows(); ++r) {
        for (std::size_t j = 0; j < w; ++j) gk->at(r, j) += g[r * total + offsets[k] + j];
      }
    }
  });
}

Var gather_rows(Var table, std::span<const std::int64_t> index) {
  require_matrix(table, "gather_rows");
  const Tensor& t = table.value();
  const std::size_t n = t.cols();
  Tensor out({index.size(), n});
  for (std::size_t i = 0; i < index.size(); ++i) {
    check_index(index[i], t.rows(), "gather_rows");
    std::copy(t.row(std::size_t(index[i])).begin(), t.row(std::size_t(index[i])).end(), out.row(i).begin());
  }
  std::vector<std::int64_t> idx(index.begin(), index.end());
  return table.tape->record("gather_rows", std::move(out), {table},
                            [table, idx = std::move(idx), n](Tape& tape, const Tensor& g) {
    Tensor* gt = tape.grad_sink(table);
    if (!gt) return;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto dst = gt->row(std::size_t(idx[i]));
      for (std::size_t j = 0; j < n; ++j) dst[j] += g[i * n + j];
    }
  });
}

Var sum(Var a) {
  Real s = 0;
  for (Real v : a.value().values()) s += v;
  return a.tape->record("sum", Tensor::scalar(s), {a}, [a](Tape& tape, const Tensor& g) {
    if (Tensor* ga = tape.grad_sink(a)) {
      for (Real& v : ga->values()) v += g[0];
    }
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), Real(1) / Real(n));
}

Var cosine_rows(Var a, Var b) {
  require_same_shape(a, b, "cosine_rows");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const std::size_t rows = x.rows();
  const std::size_t n = x.cols();
  Tensor out({rows});
  std::vector<Real> nx(rows), ny(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    Real dot = 0, xx = 0, yy = 0;
    for (std::size_t j = 0; j < n; ++j) {
      dot += x.at(r, j) * y.at(r, j);
      xx += x.at(r, j) * x.at(r, j);
      yy += y.at(r, j) * y.at(r, j);
    }
    nx[r] = std::sqrt(xx);
    ny[r] = std::sqrt(yy);
    out[r] = (nx[r] > 0 && ny[r] > 0) ? dot / (nx[r] * ny[r]) : Real(0);
  }
  Tensor cos = out;
  return a.tape->record("cosine_rows", std::move(out), {a, b},
                        [a, b, nx = std::move(nx), ny = std::move(ny), cos = std::move(cos)](Tape& tape,
                                                                                             const Tensor& g) {
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    const std::size_t n = x.cols();
    Tensor* ga = tape.grad_sink(a);
    Tensor* gb = tape.grad_sink(b);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      if (!(nx[r] > 0 && ny[r] > 0)) continue;
      const Real inv = Real(1) / (nx[r] * ny[r]);
      for (std::size_t j = 0; j < n; ++j) {
        if (ga) ga->at(r, j) += g[r] * (y.at(r, j) * inv - cos[r] * x.at(r, j) / (nx[r] * nx[r]));
        if (gb) gb->at(r, j) += g[r] * (x.at(r, j) * inv - cos[r] * y.at(r, j) / (ny[r] * ny[r]));
      }
    }
  });
}

Var softmax_cross_entropy(Var logits, std::span<const std::int64_t> target, std::span<const Real> row_weight) {
  require_matrix(logits, "softmax_cross_entropy");
  const Tensor& z = logits.value();
  if (target.size() != z.rows()) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(target.size()) + " targets for logits " +
                     shape_str(z.shape()));
  }
  if (!row_weight.empty() && row_weight.size() != z.rows()) {
    throw ShapeError("softmax_cross_entropy: row weight count mismatch");
  }
  Tensor p = softmax_rows(z);
  Real loss = 0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    check_index(target[r], z.cols(), "softmax_cross_entropy");
    const Real w = row_weight.empty() ? Real(1) : row_weight[r];
    const auto row = z.row(r);
    const Real mx = *std::max_element(row.begin(), row.end());
    Real s = 0;
    for (Real v : row) s += std::exp(v - mx);
    loss -= w * (row[std::size_t(target[r])] - mx - std::log(s));
  }
  std::vector<std::int64_t> tgt(target.begin(), target.end());
  std::vector<Real> wts(row_weight.begin(), row_weight.end());
  return logits.tape->record(
      "softmax_cross_entropy", Tensor::scalar(loss), {logits},
      [logits, p = std::move(p), tgt = std::move(tgt), wts = std::move(wts)](Tape& tape, const Tensor& g) {
        Tensor* gl = tape.grad_sink(logits);
        if (!gl) return;
        const std::size_t n = p.cols();
        for (std::size_t r = 0; r < p.rows(); ++r) {
          const Real w = (wts.empty() ? Real(1) : wts[r]) * g[0];
          for (std::size_t j = 0; j < n; ++j) gl->at(r, j) += w * p.at(r, j);
          gl->at(r, std::size_t(tgt[r])) -= w;
        }
      });
}

Var clamped_log_prob(Var logits, std::span<const std::int64_t> target, Real eps) {
  require_matrix(logits, "clamped_log_prob");
  const Tensor& z = logits.value();
  if (target.size() != z.rows()) throw ShapeError("clamped_log_prob: target count mismatch");
  Tensor p = softmax_rows(z);
  Tensor out({z.rows()});
  std::vector<char> active(z.rows(), 0);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    check_index(target[r], z.cols(), "clamped_log_prob");
    const Real pr = p.at(r, std::size_t(target[r]));
    const Real pc = std::clamp(pr, eps, Real(1) - eps);
    active[r] = pr > eps && pr < Real(1) - eps;
    out[r] = std::log(pc);
  }
  std::vector<std::int64_t> tgt(target.begin(), target.end());
  return logits.tape->record(
      "clamped_log_prob", std::move(out), {logits},
      [logits, p = std::move(p), tgt = std::move(tgt), active = std::move(active)](Tape& tape, const Tensor& g) {
        Tensor* gl = tape.grad_sink(logits);
        if (!gl) return;
        const std::size_t n = p.cols();
        for (std::size_t r = 0; r < p.rows(); ++r) {
          if (!active[r]) continue;
          for (std::size_t j = 0; j < n; ++j) gl->at(r, j) -= g[r] * p.at(r, j);
          gl->at(r, std::size_t(tgt[r])) += g[r];
        }
      });
}

Var conv1d_rows(Var input, Var kernel, Var bias, std::size_t in_rows, std::size_t width) {
  require_same_tape(input, kernel, "conv1d_rows");
  require_same_tape(input, bias, "conv1d_rows");
  require_matrix(input, "conv1d_rows");
  require_matrix(kernel, "conv1d_rows");
  const std::size_t batch = input.value().rows();
  if (input.value().cols() != in_rows * width) {
    throw ShapeError("conv1d_rows: input " + shape_str(input.shape()) + " is not " + std::to_string(in_rows) +
                     " rows of width " + std::to_string(width));
  }
  const std::size_t channels = kernel.value().rows();
  if (in_rows == 0 || kernel.value().cols() % in_rows != 0) {
    throw ShapeError("conv1d_rows: kernel " + shape_str(kernel.shape()) + " incompatible with " +
                     std::to_string(in_rows) + " input rows");
  }
  const std::size_t kw = kernel.value().cols() / in_rows;
  if (kw % 2 == 0) throw ShapeError("conv1d_rows: kernel width must be odd for same padding");
  if (bias.value().size() != channels) {
    throw ShapeError("conv1d_rows: bias " + shape_str(bias.shape()) + " vs " + std::to_string(channels) +
                     " channels");
  }
  const std::ptrdiff_t pad = std::ptrdiff_t(kw / 2);
  const std::size_t patch = in_rows * kw;

  // im2col of one batch element: [in_rows * kw, width].
  auto build_cols = [=](const Tensor& in, std::size_t b, RowMat& cols) {
    cols.setZero(Eigen::Index(patch), Eigen::Index(width));
    const Real* src = in.data() + b * in_rows * width;
    for (std::size_t i = 0; i < in_rows; ++i) {
      for (std::size_t k = 0; k < kw; ++k) {
        for (std::size_t x = 0; x < width; ++x) {
          const std::ptrdiff_t xs = std::ptrdiff_t(x) + std::ptrdiff_t(k) - pad;
          if (xs < 0 || xs >= std::ptrdiff_t(width)) continue;
          cols(Eigen::Index(i * kw + k), Eigen::Index(x)) = src[i * width + std::size_t(xs)];
        }
      }
    }
  };

  Tensor out({batch, channels * width});
  RowMat cols;
  const auto kmat = as_mat(kernel.value());
  for (std::size_t b = 0; b < batch; ++b) {
    build_cols(input.value(), b, cols);
    MapMat ob(out.data() + b * channels * width, Eigen::Index(channels), Eigen::Index(width));
    ob.noalias() = kmat * cols;
    for (std::size_t c = 0; c < channels; ++c) ob.row(Eigen::Index(c)).array() += bias.value()[c];
  }

  return input.tape->record(
      "conv1d_rows", std::move(out), {input, kernel, bias},
      [=](Tape& tape, const Tensor& g) {
        Tensor* gin = tape.grad_sink(input);
        Tensor* gk = tape.grad_sink(kernel);
        Tensor* gbias = tape.grad_sink(bias);
        const auto kmat = as_mat(kernel.value());
        RowMat cols, dcols;
        for (std::size_t b = 0; b < batch; ++b) {
          CMapMat gb(g.data() + b * channels * width, Eigen::Index(channels), Eigen::Index(width));
          if (gbias) {
            for (std::size_t c = 0; c < channels; ++c) (*gbias)[c] += gb.row(Eigen::Index(c)).sum();
          }
          if (gk) {
            build_cols(input.value(), b, cols);
            as_mat(*gk).noalias() += gb * cols.transpose();
          }
          if (gin) {
            dcols.noalias() = kmat.transpose() * gb;
            Real* dst = gin->data() + b * in_rows * width;
            for (std::size_t i = 0; i < in_rows; ++i) {
              for (std::size_t k = 0; k < kw; ++k) {
                for (std::size_t x = 0; x < width; ++x) {
                  const std::ptrdiff_t xs = std::ptrdiff_t(x) + std::ptrdiff_t(k) - pad;
                  if (xs < 0 || xs >= std::ptrdiff_t(width)) continue;
                  dst[i * width + std::size_t(xs)] += dcols(Eigen::Index(i * kw + k), Eigen::Index(x));
                }
              }
            }
          }
        }
      });
}

}  // namespace mtdm
