/*
 * Copyright 2026 The UCTransNet-cpp Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "uctransnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Core>

#include "uctransnet/errors.hpp"

namespace uct::ops {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;

template <class T>
ConstMatMap<T> as_matrix(const Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap<T>(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <class T>
MatMap<T> as_matrix(Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return MatMap<T>(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

void require_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(s));
  }
}

struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const char* op, const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for " + shape_str(s));
  }
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

std::uint64_t hash_words(const std::vector<std::uint64_t>& words) {
  std::uint64_t h = 1469598103934665603ULL;
  for (auto w : words) h = (h ^ w) * 1099511628211ULL;
  return h;
}

// y = f(x) elementwise with a precomputed local derivative.
template <class T>
Var<T> pointwise(const char* op, Var<T> x, Tensor<T> y, Tensor<T> dydx) {
  return x.graph().record(op, std::move(y), {x}, [x, d = std::move(dydx)](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>&) {
    Tensor<T> gx(d.shape());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = gy[i] * d[i];
    g.accumulate(x, gx);
  });
}

struct ConvGeometry {
  std::size_t c_in, h, w, c_out, k, pad, stride, ho, wo;
};

// Output columns [lo, hi) whose tap (offset kj) lands inside a row of width w.
inline void valid_span(const ConvGeometry& geo, std::size_t kj, std::size_t& lo, std::size_t& hi) {
  lo = 0;
  while (lo < geo.wo && lo * geo.stride + kj < geo.pad) ++lo;
  hi = lo;
  while (hi < geo.wo && hi * geo.stride + kj < geo.pad + geo.w) ++hi;
}

template <class T>
void im2col(const Tensor<T>& x, const ConvGeometry& geo, Tensor<T>& cols) {
  const std::size_t plane = geo.ho * geo.wo;
  const T* src = x.data().data();
  for (std::size_t c = 0; c < geo.c_in; ++c) {
    for (std::size_t ki = 0; ki < geo.k; ++ki) {
      for (std::size_t kj = 0; kj < geo.k; ++kj) {
        T* row = cols.data().data() + ((c * geo.k + ki) * geo.k + kj) * plane;
        std::size_t lo, hi;
        valid_span(geo, kj, lo, hi);
        for (std::size_t oi = 0; oi < geo.ho; ++oi) {
          T* out = row + oi * geo.wo;
          const long ii = static_cast<long>(oi * geo.stride + ki) - static_cast<long>(geo.pad);
          if (ii < 0 || ii >= static_cast<long>(geo.h) || lo >= hi) {
            std::fill(out, out + geo.wo, T{0});
            continue;
          }
          std::fill(out, out + lo, T{0});
          std::fill(out + hi, out + geo.wo, T{0});
          const T* in = src + (c * geo.h + static_cast<std::size_t>(ii)) * geo.w;
          if (geo.stride == 1) {
            std::copy(in + lo + kj - geo.pad, in + hi + kj - geo.pad, out + lo);
          } else {
            for (std::size_t oj = lo; oj < hi; ++oj) out[oj] = in[oj * geo.stride + kj - geo.pad];
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const Tensor<T>& cols, const ConvGeometry& geo, Tensor<T>& dx) {
  const std::size_t plane = geo.ho * geo.wo;
  T* dst = dx.data().data();
  for (std::size_t c = 0; c < geo.c_in; ++c) {
    for (std::size_t ki = 0; ki < geo.k; ++ki) {
      for (std::size_t kj = 0; kj < geo.k; ++kj) {
        const T* row = cols.data().data() + ((c * geo.k + ki) * geo.k + kj) * plane;
        std::size_t lo, hi;
        valid_span(geo, kj, lo, hi);
        for (std::size_t oi = 0; oi < geo.ho; ++oi) {
          const long ii = static_cast<long>(oi * geo.stride + ki) - static_cast<long>(geo.pad);
          if (ii < 0 || ii >= static_cast<long>(geo.h)) continue;
          T* out = dst + (c * geo.h + static_cast<std::size_t>(ii)) * geo.w;
          const T* in = row + oi * geo.wo;
          for (std::size_t oj = lo; oj < hi; ++oj) out[oj * geo.stride + kj - geo.pad] += in[oj];
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape("add", a.shape(), b.shape());
  Tensor<T> y(a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  return a.graph().record("add", std::move(y), {a, b}, [a, b](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>&) {
    g.accumulate(a, gy);
    g.accumulate(b, gy);
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape("sub", a.shape(), b.shape());
  Tensor<T> y(a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
  return a.graph().record("sub", std::move(y), {a, b}, [a, b](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>&) {
    g.accumulate(a, gy);
    Tensor<T> neg(gy.shape());
    for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -gy[i];
    g.accumulate(b, neg);
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape("mul", a.shape(), b.shape());
  Tensor<T> y(a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return a.graph().record("mul", std::move(y), {a, b}, [a, b](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>&) {
    const auto& av = a.value();
    const auto& bv = b.value();
    Tensor<T> ga(gy.shape()), gb(gy.shape());
    for (std::size_t i = 0; i < gy.size(); ++i) {
      ga[i] = gy[i] * bv[i];
      gb[i] = gy[i] * av[i];
    }
    g.accumulate(a, ga);
    g.accumulate(b, gb);
  });
}

template <class T>
Var<T> div(Var<T> a, Var<T> b) {
  require_same_shape("div", a.shape(), b.shape());
  Tensor<T> y(a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] / bv[i];
  return a.graph().record("div", std::move(y), {a, b}, [a, b](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>&) {
    const auto& av = a.value();
    const auto& bv = b.value();
    Tensor<T> ga(gy.shape()), gb(gy.shape());
    for (std::size_t i = 0; i < gy.size(); ++i) {
      ga[i] = gy[i] / bv[i];
      gb[i] = -gy[i] * av[i] / (bv[i] * bv[i]);
    }
    g.accumulate(a, ga);
    g.accumulate(b, gb);
  });
}

template <class T>
Var<T> add_scalar(Var<T> a, T c) {
  Tensor<T> y = a.value();
  for (auto& v : y.storage()) v += c;
  return a.graph().record("add_scalar", std::move(y), {a},
                          [a](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>&) { g.accumulate(a, gy); });
}

template <class T>
Var<T> scale(Var<T> a, T c) {
  Tensor<T> y = a.value();
  for (auto& v : y.storage()) v *= c;
  return a.graph().record("scale", std::move(y), {a}, [a, c](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>&) {
    Tensor<T> ga = gy;
    for (auto& v : ga.storage()) v *= c;
    g.accumulate(a, ga);
  });
}

// ---------------------------------------------------------------------------
// Broadcasts

template <class T>
Var<T> bias_add(Var<T> x, Var<T> b, std::size_t axis) {
  const auto sp = split_axis("bias_add", x.shape(), axis);
  if (b.size() != sp.extent) {
    throw DimensionError("bias_add: vector of " + std::to_string(b.size()) + " values against axis " +
                         std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  Tensor<T> y = x.value();
  const auto& bv = b.value();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t e = 0; e < sp.extent; ++e)
      for (std::size_t i = 0; i < sp.inner; ++i) y[(o * sp.extent + e) * sp.inner + i] += bv[e];
  return x.graph().record("bias_add", std::move(y), {x, b}, [x, b, sp](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>&) {
    g.accumulate(x, gy);
    if (!g.requires_grad(b)) return;
    Tensor<T> gb(b.shape());
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t e = 0; e < sp.extent; ++e)
        for (std::size_t i = 0; i < sp.inner; ++i) gb[e] += gy[(o * sp.extent + e) * sp.inner + i];
    g.accumulate(b, gb);
  });
}

template <class T>
Var<T> scale_along(Var<T> x, Var<T> s, std::size_t axis) {
  const auto sp = split_axis("scale_along", x.shape(), axis);
  if (s.size() != sp.extent) {
    throw DimensionError("scale_along: vector of " + std::to_string(s.size()) + " values against axis " +
                         std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  Tensor<T> y = x.value();
  const auto& sv = s.value();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t e = 0; e < sp.extent; ++e)
      for (std::size_t i = 0; i < sp.inner; ++i) y[(o * sp.extent + e) * sp.inner + i] *= sv[e];
  return x.graph().record("scale_along", std::move(y), {x, s}, [x, s, sp](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>&) {
    const auto& xv = x.value();
    const auto& sv = s.value();
    if (g.requires_grad(x)) {
      Tensor<T> gx(x.shape());
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t e = 0; e < sp.extent; ++e)
          for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t k = (o * sp.extent + e) * sp.inner + i;
            gx[k] = gy[k] * sv[e];
          }
      g.accumulate(x, gx);
    }
    if (g.requires_grad(s)) {
      Tensor<T> gs(s.shape());
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t e = 0; e < sp.extent; ++e)
          for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t k = (o * sp.extent + e) * sp.inner + i;
            gs[e] += gy[k] * xv[k];
          }
      g.accumulate(s, gs);
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra and layout

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0]) {
    throw DimensionError("matmul: cannot multiply " + shape_str(as) + " by " + shape_str(bs));
  }
  const std::size_t m = as[0], k = as[1], n = bs[1];
  Tensor<T> y({m, n});
  as_matrix(y, m, n).noalias() = as_matrix(a.value(), m, k) * as_matrix(b.value(), k, n);
  return a.graph().record("matmul", std::move(y), {a, b}, [a, b, m, k, n](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>&) {
    const auto gyv = as_matrix(gy, m, n);
    if (g.requires_grad(a)) {
      Tensor<T> ga({m, k});
      as_matrix(ga, m, k).noalias() = gyv * as_matrix(b.value(), k, n).transpose();
      g.accumulate(a, ga);
    }
    if (g.requires_grad(b)) {
      Tensor<T> gb({k, n});
      as_matrix(gb, k, n).noalias() = as_matrix(a.value(), m, k).transpose() * gyv;
      g.accumulate(b, gb);
    }
  });
}

template <class T>
Var<T> transpose(Var<T> a) {
  require_rank("transpose", a.shape(), 2);
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor<T> y({c, r});
  as_matrix(y, c, r) = as_matrix(a.value(), r, c).transpose();
  return a.graph().record("transpose", std::move(y), {a}, [a, r, c](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>&) {
    Tensor<T> ga({r, c});
    as_matrix(ga, r, c) = as_matrix(gy, c, r).transpose();
    g.accumulate(a, ga);
  });
}

template <class T>
Var<T> reshape(Var<T> a, Shape shape) {
  Tensor<T> y = a.value().reshaped(std::move(shape));
  return a.graph().record("reshape", std::move(y), {a},
                          [a](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>&) { g.accumulate(a, gy); });
}

template <class T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) throw DimensionError("concat: incompatible " + shape_str(first) + " and " + shape_str(s));
    out_shape[axis] += s[axis];
  }
  const auto sp = split_axis("concat", out_shape, axis);
  Tensor<T> y(out_shape);
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const std::size_t e = p.dim(axis);
    offsets.push_back(offset);
    const auto& pv = p.value();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(pv.data().data() + o * e * sp.inner, e * sp.inner,
                  y.data().data() + (o * sp.extent + offset) * sp.inner);
    }
    offset += e;
  }
  const std::vector<Var<T>>& inputs = parts;
  return parts[0].graph().record(
      "concat", std::move(y), inputs, [inputs, offsets, sp, axis](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>&) {
        for (std::size_t p = 0; p < inputs.size(); ++p) {
          if (!g.requires_grad(inputs[p])) continue;
          const std::size_t e = inputs[p].dim(axis);
          Tensor<T> gp(inputs[p].shape());
          for (std::size_t o = 0; o < sp.outer; ++o) {
            std::copy_n(gy.data().data() + (o * sp.extent + offsets[p]) * sp.inner, e * sp.inner,
                        gp.data().data() + o * e * sp.inner);
          }
          g.accumulate(inputs[p], gp);
        }
      });
}

template <class T>
Var<T> slice(Var<T> a, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto sp = split_axis("slice", a.shape(), axis);
  if (begin >= end || end > sp.extent) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for axis " + std::to_string(axis) + " of " + shape_str(a.shape()));
  }
  Shape out_shape = a.shape();
  const std::size_t e = end - begin;
  out_shape[axis] = e;
  Tensor<T> y(out_shape);
  const auto& av = a.value();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(av.data().data() + (o * sp.extent + begin) * sp.inner, e * sp.inner,
                y.data().data() + o * e * sp.inner);
  }
  return a.graph().record("slice", std::move(y), {a}, [a, sp, begin, e](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>&) {
    Tensor<T> ga(a.shape());
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(gy.data().data() + o * e * sp.inner, e * sp.inner,
                  ga.data().data() + (o * sp.extent + begin) * sp.inner);
    }
    g.accumulate(a, ga);
  });
}

// ---------------------------------------------------------------------------
// Softmax family

template <class T>
Var<T> softmax(Var<T> x, std::size_t axis) {
  const auto sp = split_axis("softmax", x.shape(), axis);
  Tensor<T> y(x.shape());
  const auto& xv = x.value();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.extent * sp.inner + i;
      T mx = xv[base];
      for (std::size_t e = 1; e < sp.extent; ++e) mx = std::max(mx, xv[base + e * sp.inner]);
      T total = 0;
      for (std::size_t e = 0; e < sp.extent; ++e) {
        const T v = std::exp(xv[base + e * sp.inner] - mx);
        y[base + e * sp.inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < sp.extent; ++e) y[base + e * sp.inner] /= total;
    }
  }
  return x.graph().record("softmax", std::move(y), {x},
                          [x, sp](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>& y) {
                            // dx = y * (dy - <dy, y>) per slice
                            Tensor<T> gx(y.shape());
                            for (std::size_t o = 0; o < sp.outer; ++o) {
                              for (std::size_t i = 0; i < sp.inner; ++i) {
                                const std::size_t base = o * sp.extent * sp.inner + i;
                                T dot = 0;
                                for (std::size_t e = 0; e < sp.extent; ++e) {
                                  dot += gy[base + e * sp.inner] * y[base + e * sp.inner];
                                }
                                for (std::size_t e = 0; e < sp.extent; ++e) {
                                  const std::size_t k = base + e * sp.inner;
                                  gx[k] = y[k] * (gy[k] - dot);
                                }
                              }
                            }
                            g.accumulate(x, gx);
                          });
}

template <class T>
Var<T> log_softmax(Var<T> x, std::size_t axis) {
  const auto sp = split_axis("log_softmax", x.shape(), axis);
  Tensor<T> y(x.shape());
  const auto& xv = x.value();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.extent * sp.inner + i;
      T mx = xv[base];
      for (std::size_t e = 1; e < sp.extent; ++e) mx = std::max(mx, xv[base + e * sp.inner]);
      T total = 0;
      for (std::size_t e = 0; e < sp.extent; ++e) total += std::exp(xv[base + e * sp.inner] - mx);
      const T lse = mx + std::log(total);
      for (std::size_t e = 0; e < sp.extent; ++e) y[base + e * sp.inner] = xv[base + e * sp.inner] - lse;
    }
  }
  return x.graph().record("log_softmax", std::move(y), {x},
                          [x, sp](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>& y) {
                            // dx = dy - softmax * sum(dy) per slice
                            Tensor<T> gx(y.shape());
                            for (std::size_t o = 0; o < sp.outer; ++o) {
                              for (std::size_t i = 0; i < sp.inner; ++i) {
                                const std::size_t base = o * sp.extent * sp.inner + i;
                                T total = 0;
                                for (std::size_t e = 0; e < sp.extent; ++e) total += gy[base + e * sp.inner];
                                for (std::size_t e = 0; e < sp.extent; ++e) {
                                  const std::size_t k = base + e * sp.inner;
                                  gx[k] = gy[k] - std::exp(y[k]) * total;
                                }
                              }
                            }
                            g.accumulate(x, gx);
                          });
}

// ---------------------------------------------------------------------------
// Normalisation

template <class T>
Var<T> standardize(Var<T> x, std::size_t group, T eps) {
  if (group == 0 || x.size() % group != 0) {
    throw DimensionError("standardize: group of " + std::to_string(group) + " does not tile " +
                         shape_str(x.shape()));
  }
  const std::size_t groups = x.size() / group;
  Tensor<T> y(x.shape());
  std::vector<T> inv_std(groups);
  const auto& xv = x.value();
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const T* src = xv.data().data() + gi * group;
    T mu = 0;
    for (std::size_t i = 0; i < group; ++i) mu += src[i];
    mu /= static_cast<T>(group);
    T var = 0;
    for (std::size_t i = 0; i < group; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<T>(group);
    const T is = T{1} / std::sqrt(var + eps);
    inv_std[gi] = is;
    T* dst = y.data().data() + gi * group;
    for (std::size_t i = 0; i < group; ++i) dst[i] = (src[i] - mu) * is;
  }
  return x.graph().record(
      "standardize", std::move(y), {x},
      [x, group, groups, inv_std = std::move(inv_std)](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>& y) {
        // dx = inv_std * (dy - mean(dy) - y * mean(dy * y))
        Tensor<T> gx(y.shape());
        const T n = static_cast<T>(group);
        for (std::size_t gi = 0; gi < groups; ++gi) {
          const std::size_t off = gi * group;
          T mdy = 0, mdyy = 0;
          for (std::size_t i = 0; i < group; ++i) {
            mdy += gy[off + i];
            mdyy += gy[off + i] * y[off + i];
          }
          mdy /= n;
          mdyy /= n;
          for (std::size_t i = 0; i < group; ++i) {
            gx[off + i] = inv_std[gi] * (gy[off + i] - mdy - y[off + i] * mdyy);
          }
        }
        g.accumulate(x, gx);
      });
}

template <class T>
Var<T> instance_norm(Var<T> s, T eps) {
  if (s.size() < 2) throw DimensionError("instance_norm: map " + shape_str(s.shape()) + " has fewer than 2 values");
  return standardize(s, s.size(), eps);
}

template <class T>
Var<T> layer_norm(Var<T> x, std::size_t axis, Var<T> gain, Var<T> offset, T eps) {
  if (x.shape().empty() || axis != x.shape().size() - 1) {
    throw DimensionError("layer_norm: only the last axis is supported, got axis " + std::to_string(axis) +
                         " of " + shape_str(x.shape()));
  }
  const std::size_t width = x.dim(axis);
  auto z = standardize(x, width, eps);
  return bias_add(scale_along(z, gain, axis), offset, axis);
}

// ---------------------------------------------------------------------------
// Spatial

template <class T>
Var<T> conv2d(Var<T> x, Var<T> w, std::type_identity_t<std::optional<Var<T>>> bias, std::size_t pad,
              std::size_t stride) {
  require_rank("conv2d input", x.shape(), 3);
  require_rank("conv2d kernel", w.shape(), 4);
  ConvGeometry geo{};
  geo.c_in = x.dim(0);
  geo.h = x.dim(1);
  geo.w = x.dim(2);
  geo.c_out = w.dim(0);
  geo.k = w.dim(2);
  geo.pad = pad;
  geo.stride = stride;
  if (w.dim(1) != geo.c_in || w.dim(3) != geo.k) {
    throw DimensionError("conv2d: kernel " + shape_str(w.shape()) + " does not fit input " + shape_str(x.shape()));
  }
  if (stride == 0 || geo.h + 2 * pad < geo.k || geo.w + 2 * pad < geo.k ||
      (geo.h + 2 * pad - geo.k) % stride != 0 || (geo.w + 2 * pad - geo.k) % stride != 0) {
    throw DimensionError("conv2d: kernel " + std::to_string(geo.k) + " pad " + std::to_string(pad) + " stride " +
                         std::to_string(stride) + " gives a non-integer output extent on " + shape_str(x.shape()));
  }
  geo.ho = (geo.h + 2 * pad - geo.k) / stride + 1;
  geo.wo = (geo.w + 2 * pad - geo.k) / stride + 1;
  if (bias && bias->size() != geo.c_out) {
    throw DimensionError("conv2d: bias " + shape_str(bias->shape()) + " for " + std::to_string(geo.c_out) +
                         " output channels");
  }
  const std::size_t kdim = geo.c_in * geo.k * geo.k;
  const std::size_t plane = geo.ho * geo.wo;
  Tensor<T> cols({kdim, plane});
  im2col(x.value(), geo, cols);
  Tensor<T> y({geo.c_out, geo.ho, geo.wo});
  auto ym = as_matrix(y, geo.c_out, plane);
  ym.noalias() = as_matrix(w.value(), geo.c_out, kdim) * as_matrix(cols, kdim, plane);
  std::vector<Var<T>> inputs{x, w};
  if (bias) {
    const auto& bv = bias->value();
    for (std::size_t o = 0; o < geo.c_out; ++o) ym.row(static_cast<Eigen::Index>(o)).array() += bv[o];
    inputs.push_back(*bias);
  }
  return x.graph().record(
      "conv2d", std::move(y), inputs,
      [x, w, bias, geo, kdim, plane, cols = std::move(cols)](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>&) {
        const auto gym = as_matrix(gy, geo.c_out, plane);
        if (g.requires_grad(w)) {
          Tensor<T> gw(w.shape());
          as_matrix(gw, geo.c_out, kdim).noalias() = gym * as_matrix(cols, kdim, plane).transpose();
          g.accumulate(w, gw);
        }
        if (bias && g.requires_grad(*bias)) {
          Tensor<T> gb(bias->shape());
          // Plain loop: Eigen's vectorised sum peels by address alignment,
          // which would make the result depend on the allocation.
          for (std::size_t o = 0; o < geo.c_out; ++o) {
            T total = 0;
            for (std::size_t i = 0; i < plane; ++i) total += gy[o * plane + i];
            gb[o] = total;
          }
          g.accumulate(*bias, gb);
        }
        if (g.requires_grad(x)) {
          Tensor<T> gcols({kdim, plane});
          as_matrix(gcols, kdim, plane).noalias() = as_matrix(w.value(), geo.c_out, kdim).transpose() * gym;
          Tensor<T> gx(x.shape());
          col2im(gcols, geo, gx);
          g.accumulate(x, gx);
        }
      });
}

template <class T>
Var<T> upsample_nearest(Var<T> x, std::size_t factor) {
  require_rank("upsample_nearest", x.shape(), 3);
  if (factor == 0) throw DimensionError("upsample_nearest: factor must be positive");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t H = h * factor, W = w * factor;
  Tensor<T> y({c, H, W});
  const auto& xv = x.value();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) y[(ch * H + i) * W + j] = xv[(ch * h + i / factor) * w + j / factor];
  return x.graph().record("upsample_nearest", std::move(y), {x},
                          [x, c, h, w, H, W, factor](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>&) {
                            Tensor<T> gx(x.shape());
                            for (std::size_t ch = 0; ch < c; ++ch)
                              for (std::size_t i = 0; i < H; ++i)
                                for (std::size_t j = 0; j < W; ++j)
                                  gx[(ch * h + i / factor) * w + j / factor] += gy[(ch * H + i) * W + j];
                            g.accumulate(x, gx);
                          });
}

template <class T>
Var<T> max_pool2d(Var<T> x, std::size_t k) {
  require_rank("max_pool2d", x.shape(), 3);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (k == 0 || h % k != 0 || w % k != 0) {
    throw DimensionError("max_pool2d: window " + std::to_string(k) + " does not tile " + shape_str(x.shape()));
  }
  const std::size_t ho = h / k, wo = w / k;
  Tensor<T> y({c, ho, wo});
  std::vector<std::size_t> argmax(y.size());
  std::vector<std::uint64_t> words(y.size());
  const auto& xv = x.value();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j) {
        std::size_t best = (ch * h + i * k) * w + j * k;
        for (std::size_t di = 0; di < k; ++di)
          for (std::size_t dj = 0; dj < k; ++dj) {
            const std::size_t idx = (ch * h + i * k + di) * w + j * k + dj;
            if (xv[idx] > xv[best]) best = idx;
          }
        const std::size_t o = (ch * ho + i) * wo + j;
        y[o] = xv[best];
        argmax[o] = best;
        words[o] = best;
      }
    }
  }
  auto& graph = x.graph();
  graph.mix_kink(hash_words(words));
  return graph.record("max_pool2d", std::move(y), {x},
                      [x, argmax = std::move(argmax)](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>&) {
                        Tensor<T> gx(x.shape());
                        for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += gy[o];
                        g.accumulate(x, gx);
                      });
}

template <class T>
Var<T> avg_pool2d(Var<T> x, std::size_t k) {
  require_rank("avg_pool2d", x.shape(), 3);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (k == 0 || h % k != 0 || w % k != 0) {
    throw DimensionError("avg_pool2d: window " + std::to_string(k) + " does not tile " + shape_str(x.shape()));
  }
  const std::size_t ho = h / k, wo = w / k;
  const T inv = T{1} / static_cast<T>(k * k);
  Tensor<T> y({c, ho, wo});
  const auto& xv = x.value();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) y[(ch * ho + i / k) * wo + j / k] += xv[(ch * h + i) * w + j] * inv;
  return x.graph().record("avg_pool2d", std::move(y), {x},
                          [x, c, h, w, ho, wo, k, inv](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>&) {
                            Tensor<T> gx(x.shape());
                            for (std::size_t ch = 0; ch < c; ++ch)
                              for (std::size_t i = 0; i < h; ++i)
                                for (std::size_t j = 0; j < w; ++j)
                                  gx[(ch * h + i) * w + j] = gy[(ch * ho + i / k) * wo + j / k] * inv;
                            g.accumulate(x, gx);
                          });
}

template <class T>
Var<T> global_avg_pool(Var<T> x) {
  require_rank("global_avg_pool", x.shape(), 3);
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  const T inv = T{1} / static_cast<T>(hw);
  Tensor<T> y({c, 1, 1});
  const auto& xv = x.value();
  for (std::size_t ch = 0; ch < c; ++ch) {
    T s = 0;
    for (std::size_t i = 0; i < hw; ++i) s += xv[ch * hw + i];
    y[ch] = s * inv;
  }
  return x.graph().record("global_avg_pool", std::move(y), {x},
                          [x, c, hw, inv](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>&) {
                            Tensor<T> gx(x.shape());
                            for (std::size_t ch = 0; ch < c; ++ch)
                              for (std::size_t i = 0; i < hw; ++i) gx[ch * hw + i] = gy[ch] * inv;
                            g.accumulate(x, gx);
                          });
}

// ---------------------------------------------------------------------------
// Activations

template <class T>
Var<T> relu(Var<T> x) {
  const auto& xv = x.value();
  Tensor<T> y(x.shape()), d(x.shape());
  std::vector<std::uint64_t> words((xv.size() + 63) / 64, 0);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const bool on = xv[i] > T{0};
    y[i] = on ? xv[i] : T{0};
    d[i] = on ? T{1} : T{0};
    if (on) words[i / 64] |= (std::uint64_t{1} << (i % 64));
  }
  x.graph().mix_kink(hash_words(words));
  return pointwise("relu", x, std::move(y), std::move(d));
}

template <class T>
Var<T> sigmoid(Var<T> x) {
  const auto& xv = x.value();
  Tensor<T> y(x.shape()), d(x.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T v = xv[i];
    const T s = v >= 0 ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
    y[i] = s;
    d[i] = s * (T{1} - s);
  }
  return pointwise("sigmoid", x, std::move(y), std::move(d));
}

template <class T>
Var<T> gelu(Var<T> x) {
  const auto& xv = x.value();
  Tensor<T> y(x.shape()), d(x.shape());
  const T inv_sqrt2 = T(1.0 / std::numbers::sqrt2);
  const T inv_sqrt_2pi = T(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T v = xv[i];
    const T cdf = T(0.5) * (T{1} + std::erf(v * inv_sqrt2));
    y[i] = v * cdf;
    d[i] = cdf + v * inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
  }
  return pointwise("gelu", x, std::move(y), std::move(d));
}

template <class T>
Var<T> activation(Var<T> x, Activation kind) {
  switch (kind) {
    case Activation::relu: return relu(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::gelu: return gelu(x);
  }
  throw ContractError("unknown activation");
}

// ---------------------------------------------------------------------------
// Reductions

template <class T>
Var<T> sum(Var<T> x) {
  T s = 0;
  for (auto v : x.value().data()) s += v;
  return x.graph().record("sum", Tensor<T>({1}, {s}), {x}, [x](Graph<T>& g, const Tensor<T>& gy, const Tensor<T>&) {
    g.accumulate(x, Tensor<T>(x.shape(), gy[0]));
  });
}

template <class T>
Var<T> mean(Var<T> x) {
  return scale(sum(x), T{1} / static_cast<T>(x.size()));
}

// ---------------------------------------------------------------------------

#define UCT_INSTANTIATE_OPS(T)                                                                   \
  template Var<T> add(Var<T>, Var<T>);                                                           \
  template Var<T> sub(Var<T>, Var<T>);                                                           \
  template Var<T> mul(Var<T>, Var<T>);                                                           \
  template Var<T> div(Var<T>, Var<T>);                                                           \
  template Var<T> add_scalar(Var<T>, T);                                                         \
  template Var<T> scale(Var<T>, T);                                                              \
  template Var<T> bias_add(Var<T>, Var<T>, std::size_t);                                         \
  template Var<T> scale_along(Var<T>, Var<T>, std::size_t);                                      \
  template Var<T> matmul(Var<T>, Var<T>);                                                        \
  template Var<T> transpose(Var<T>);                                                             \
  template Var<T> reshape(Var<T>, Shape);                                                        \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                                  \
  template Var<T> slice(Var<T>, std::size_t, std::size_t, std::size_t);                          \
  template Var<T> softmax(Var<T>, std::size_t);                                                  \
  template Var<T> log_softmax(Var<T>, std::size_t);                                              \
  template Var<T> standardize(Var<T>, std::size_t, T);                                           \
  template Var<T> instance_norm(Var<T>, T);                                                      \
  template Var<T> layer_norm(Var<T>, std::size_t, Var<T>, Var<T>, T);                            \
  template Var<T> conv2d(Var<T>, Var<T>, std::optional<Var<T>>, std::size_t, std::size_t);       \
  template Var<T> upsample_nearest(Var<T>, std::size_t);                                         \
  template Var<T> max_pool2d(Var<T>, std::size_t);                                               \
  template Var<T> avg_pool2d(Var<T>, std::size_t);                                               \
  template Var<T> global_avg_pool(Var<T>);                                                       \
  template Var<T> relu(Var<T>);                                                                  \
  template Var<T> sigmoid(Var<T>);                                                               \
  template Var<T> gelu(Var<T>);                                                                  \
  template Var<T> activation(Var<T>, Activation);                                                \
  template Var<T> sum(Var<T>);                                                                   \
  template Var<T> mean(Var<T>);

UCT_INSTANTIATE_OPS(float)
UCT_INSTANTIATE_OPS(double)

}  // namespace uct::ops
