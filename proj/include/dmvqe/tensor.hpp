// Copyright 2026 The dmvqe Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal reverse-mode automatic differentiation over float32 tensors.
//
// Only the primitives the two networks need are provided: matmul, bias and
// per-channel additions, elementwise tanh / SiLU / products, 2-D convolution,
// 2x2 average pooling, nearest-neighbour upsampling, group normalization,
// channel concatenation, zero padding / cropping and the reductions used by
// the losses. Tensors are row-major; images are NCHW.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <type_traits>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dmvqe/error.hpp"

namespace dmvqe::nn {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated on demand for tracked nodes
  bool tracked = false;
  std::vector<std::shared_ptr<Node<T>>> inputs;
  std::function<void(Node<T>&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0f);
  }
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

/// Disables graph recording in its scope (inference).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class BasicTensor {
 public:
  BasicTensor() = default;

  static BasicTensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value.assign(nn::numel(shape), 0.0f);
    n->shape = std::move(shape);
    n->tracked = requires_grad;
    return BasicTensor(std::move(n));
  }

  static BasicTensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (values.size() != nn::numel(shape)) {
      throw InvalidArgument("tensor data length " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
    }
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->tracked = requires_grad;
    return BasicTensor(std::move(n));
  }

  static BasicTensor scalar(T v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  T item() const {
    if (numel() != 1) throw InvalidArgument("item() needs a single-element tensor");
    return node_->value[0];
  }

  bool requires_grad() const noexcept { return node_ && node_->tracked; }
  bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
  }

  /// Untracked copy of the value.
  BasicTensor detach() const { return from(shape(), node_->value, false); }

  const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }
  explicit BasicTensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

// Result node; records inputs and the backward rule only when some input is
// tracked and recording is enabled.
template <typename T>
BasicTensor<T> make_result(Shape shape, std::vector<T> value, std::initializer_list<BasicTensor<T>> inputs,
                                   std::type_identity_t<std::function<void(Node<T>&)>> backward) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (any && grad_mode()) {
    n->tracked = true;
    for (const auto& t : inputs) n->inputs.push_back(t.node());
    n->backward = std::move(backward);
  }
  return BasicTensor(std::move(n));
}

// Gradient buffer of input k, or nullptr when that input is not tracked.
template <typename T>
T* input_grad(Node<T>& self, std::size_t k) {
  Node<T>& in = *self.inputs[k];
  if (!in.tracked) return nullptr;
  in.ensure_grad();
  return in.grad.data();
}

inline void require(bool ok, const char* what) {
  if (!ok) throw InvalidArgument(what);
}

// Builds the message only on failure.
template <typename F>
  requires std::is_invocable_r_v<std::string, F>
void require(bool ok, F&& what) {
  if (!ok) throw InvalidArgument(what());
}

// C[M,N] += A[M,K] * B[K,N]. Every element is summed over k in order into a
// zero accumulator that is then added to C, so results do not depend on M,
// N or the blocking: batched and unbatched evaluation agree bitwise.
template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C) {
  typedef T Vec __attribute__((vector_size(32)));
  constexpr int kV = static_cast<int>(sizeof(Vec) / sizeof(T));
  constexpr int kW = 2 * kV;
  auto load = [](const T* p) {
    Vec v;
    std::memcpy(&v, p, sizeof v);
    return v;
  };
  auto block = [&]<int R>(int i, int j) {
    Vec acc[R][2] = {};
    const T* a = A + static_cast<std::size_t>(i) * K;
    for (int k = 0; k < K; ++k) {
      const T* b = B + static_cast<std::size_t>(k) * N + j;
      const Vec b0 = load(b), b1 = load(b + kV);
      for (int r = 0; r < R; ++r) {
        const T s = a[static_cast<std::size_t>(r) * K + k];
        acc[r][0] += s * b0;
        acc[r][1] += s * b1;
      }
    }
    for (int r = 0; r < R; ++r) {
      T* c = C + static_cast<std::size_t>(i + r) * N + j;
      for (int w = 0; w < kV; ++w) {
        c[w] += acc[r][0][w];
        c[kV + w] += acc[r][1][w];
      }
    }
  };
  auto single = [&](int i, int j) {
    T acc = 0;
    for (int k = 0; k < K; ++k) acc += A[static_cast<std::size_t>(i) * K + k] * B[static_cast<std::size_t>(k) * N + j];
    C[static_cast<std::size_t>(i) * N + j] += acc;
  };
  for (int i = 0; i < M;) {
    const int rows = M - i >= 4 ? 4 : 1;
    int j = 0;
    for (; j + kW <= N; j += kW) {
      if (rows == 4) block.template operator()<4>(i, j);
      else block.template operator()<1>(i, j);
    }
    for (int r = 0; r < rows; ++r)
      for (int jj = j; jj < N; ++jj) single(i + r, jj);
    i += rows;
  }
}

// C[M,N] += A^T * B with A stored [K,M].
template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C) {
  for (int i = 0; i < M; ++i) {
    T* c = C + static_cast<std::size_t>(i) * N;
    for (int k = 0; k < K; ++k) {
      const T v = A[static_cast<std::size_t>(k) * M + i];
      const T* b = B + static_cast<std::size_t>(k) * N;
      for (int j = 0; j < N; ++j) c[j] += v * b[j];
    }
  }
}

template <typename T>
std::vector<T> transpose(const T* A, int rows, int cols) {
  std::vector<T> t(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) t[static_cast<std::size_t>(c) * rows + r] = A[static_cast<std::size_t>(r) * cols + c];
  return t;
}

// C[M,N] += A[M,K] * B^T with B stored [N,K].
template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C) {
  const auto bt = transpose(B, N, K);
  gemm_nn(M, N, K, A, bt.data(), C);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and dense ops

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require(a.shape().size() == 2 && b.shape().size() == 2 && a.dim(1) == b.dim(0),
                  [&] { return "matmul shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()); });
  const int M = a.dim(0), K = a.dim(1), N = b.dim(1);
  std::vector<T> out(static_cast<std::size_t>(M) * N, 0.0f);
  detail::gemm_nn(M, N, K, a.data().data(), b.data().data(), out.data());
  return detail::make_result({M, N}, std::move(out), {a, b}, [M, N, K](Node<T>& self) {
    const auto& A = self.inputs[0]->value;
    const auto& B = self.inputs[1]->value;
    if (T* ga = detail::input_grad(self, 0)) detail::gemm_nt(M, K, N, self.grad.data(), B.data(), ga);
    if (T* gb = detail::input_grad(self, 1)) detail::gemm_tn(K, N, M, A.data(), self.grad.data(), gb);
  });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require(a.shape() == b.shape(), [&] { return "add shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()); });
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (T* g = detail::input_grad(self, k))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require(a.shape() == b.shape(), [&] { return "mul shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()); });
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return detail::make_result(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    const auto& A = self.inputs[0]->value;
    const auto& B = self.inputs[1]->value;
    if (T* g = detail::input_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * B[i];
    if (T* g = detail::input_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * A[i];
  });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, std::type_identity_t<T> s) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  return detail::make_result(a.shape(), std::move(out), {a}, [s](Node<T>& self) {
    if (T* g = detail::input_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * s;
  });
}

/// x[M,N] + b[N] broadcast over rows.
template <typename T>
BasicTensor<T> add_bias(const BasicTensor<T>& x, const BasicTensor<T>& b) {
  detail::require(x.shape().size() == 2 && b.shape().size() == 1 && b.dim(0) == x.dim(1),
                  [&] { return "add_bias shape mismatch " + shape_str(x.shape()) + " + " + shape_str(b.shape()); });
  const int M = x.dim(0), N = x.dim(1);
  std::vector<T> out(x.data().begin(), x.data().end());
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j) out[static_cast<std::size_t>(i) * N + j] += b.data()[j];
  return detail::make_result(x.shape(), std::move(out), {x, b}, [M, N](Node<T>& self) {
    if (T* g = detail::input_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (T* g = detail::input_grad(self, 1))
      for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j) g[j] += self.grad[static_cast<std::size_t>(i) * N + j];
  });
}

/// Per-channel bias for conv outputs: bias[c] for a [C] vector, or bias[b, c]
/// for a [B, C] matrix, broadcast over H x W.
template <typename T>
BasicTensor<T> add_channel_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias) {
  detail::require(x.shape().size() == 4, "add_channel_bias needs an NCHW tensor");
  const int B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const bool per_sample = bias.shape().size() == 2;
  detail::require(per_sample ? (bias.dim(0) == B && bias.dim(1) == C) : (bias.shape().size() == 1 && bias.dim(0) == C),
                  [&] { return "add_channel_bias bias shape " + shape_str(bias.shape()) + " does not fit " + shape_str(x.shape()); });
  std::vector<T> out(x.data().begin(), x.data().end());
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const T v = bias.data()[per_sample ? static_cast<std::size_t>(b) * C + c : static_cast<std::size_t>(c)];
      T* o = out.data() + (static_cast<std::size_t>(b) * C + c) * HW;
      for (int k = 0; k < HW; ++k) o[k] += v;
    }
  return detail::make_result(x.shape(), std::move(out), {x, bias}, [B, C, HW, per_sample](Node<T>& self) {
    if (T* g = detail::input_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (T* g = detail::input_grad(self, 1))
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
          const T* d = self.grad.data() + (static_cast<std::size_t>(b) * C + c) * HW;
          T s = 0.0f;
          for (int k = 0; k < HW; ++k) s += d[k];
          g[per_sample ? static_cast<std::size_t>(b) * C + c : static_cast<std::size_t>(c)] += s;
        }
  });
}

template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.data()[i]);
  return detail::make_result(x.shape(), std::move(out), {x}, [](Node<T>& self) {
    if (T* g = detail::input_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * (1.0f - self.value[i] * self.value[i]);
  });
}

template <typename T>
BasicTensor<T> silu(const BasicTensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x.data()[i];
    out[i] = v / (1.0f + std::exp(-v));
  }
  return detail::make_result(x.shape(), std::move(out), {x}, [](Node<T>& self) {
    const auto& X = self.inputs[0]->value;
    if (T* g = detail::input_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const T s = 1.0f / (1.0f + std::exp(-X[i]));
        g[i] += self.grad[i] * s * (1.0f + X[i] * (1.0f - s));
      }
  });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  double s = 0.0;
  for (T v : x.data()) s += v;
  return detail::make_result({1}, {static_cast<T>(s)}, {x}, [](Node<T>& self) {
    if (T* g = detail::input_grad(self, 0)) {
      const std::size_t n = self.inputs[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

/// mean((a - b)^2) over all elements.
template <typename T>
BasicTensor<T> mse(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require(a.shape() == b.shape(), [&] { return "mse shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()); });
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    s += d * d;
  }
  const auto n = static_cast<T>(a.numel());
  return detail::make_result({1}, {static_cast<T>(s / n)}, {a, b}, [n](Node<T>& self) {
    const auto& A = self.inputs[0]->value;
    const auto& B = self.inputs[1]->value;
    const T k = 2.0f * self.grad[0] / n;
    if (T* g = detail::input_grad(self, 0))
      for (std::size_t i = 0; i < A.size(); ++i) g[i] += k * (A[i] - B[i]);
    if (T* g = detail::input_grad(self, 1))
      for (std::size_t i = 0; i < A.size(); ++i) g[i] -= k * (A[i] - B[i]);
  });
}

// ---------------------------------------------------------------------------
// Image ops (NCHW)

/// Stride-1 2-D convolution (cross-correlation) with symmetric zero padding.
/// weight is [Cout, Cin, k, k]; bias, when defined, is [Cout].
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias, int pad) {
  detail::require(x.shape().size() == 4 && weight.shape().size() == 4 && weight.dim(1) == x.dim(1) && weight.dim(2) == weight.dim(3),
                  [&] { return "conv2d shape mismatch " + shape_str(x.shape()) + " * " + shape_str(weight.shape()); });
  const int B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Co = weight.dim(0), k = weight.dim(2);
  const int Ho = H + 2 * pad - k + 1, Wo = W + 2 * pad - k + 1;
  detail::require(Ho > 0 && Wo > 0, "conv2d kernel larger than padded input");
  detail::require(!bias.defined() || (bias.shape().size() == 1 && bias.dim(0) == Co), "conv2d bias must be [Cout]");
  const int rows = Ci * k * k;
  const int cols = B * Ho * Wo;
  auto col = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows) * cols, 0.0f);
  const T* X = x.data().data();
  for (int ci = 0; ci < Ci; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col->data() + static_cast<std::size_t>((ci * k + ky) * k + kx) * cols;
        for (int b = 0; b < B; ++b)
          for (int y = 0; y < Ho; ++y) {
            const int sy = y + ky - pad;
            if (sy < 0 || sy >= H) continue;
            const T* src = X + ((static_cast<std::size_t>(b) * Ci + ci) * H + sy) * W;
            T* d = dst + (static_cast<std::size_t>(b) * Ho + y) * Wo;
            for (int xx = 0; xx < Wo; ++xx) {
              const int sx = xx + kx - pad;
              if (sx >= 0 && sx < W) d[xx] = src[sx];
            }
          }
      }
  std::vector<T> outmat(static_cast<std::size_t>(Co) * cols, 0.0f);
  detail::gemm_nn(Co, cols, rows, weight.data().data(), col->data(), outmat.data());
  const int HWo = Ho * Wo;
  std::vector<T> out(static_cast<std::size_t>(B) * Co * HWo);
  for (int co = 0; co < Co; ++co) {
    const T bv = bias.defined() ? bias.data()[co] : 0.0f;
    for (int b = 0; b < B; ++b) {
      const T* src = outmat.data() + static_cast<std::size_t>(co) * cols + static_cast<std::size_t>(b) * HWo;
      T* dst = out.data() + (static_cast<std::size_t>(b) * Co + co) * HWo;
      for (int i = 0; i < HWo; ++i) dst[i] = src[i] + bv;
    }
  }
  auto backward = [=](Node<T>& self) {
    std::vector<T> dmat(static_cast<std::size_t>(Co) * cols);
    for (int co = 0; co < Co; ++co)
      for (int b = 0; b < B; ++b) {
        const T* src = self.grad.data() + (static_cast<std::size_t>(b) * Co + co) * HWo;
        std::copy(src, src + HWo, dmat.data() + static_cast<std::size_t>(co) * cols + static_cast<std::size_t>(b) * HWo);
      }
    if (T* gw = detail::input_grad(self, 1)) detail::gemm_nt(Co, rows, cols, dmat.data(), col->data(), gw);
    if (self.inputs.size() > 2) {
      if (T* gb = detail::input_grad(self, 2))
        for (int co = 0; co < Co; ++co) {
          const T* d = dmat.data() + static_cast<std::size_t>(co) * cols;
          T s = 0.0f;
          for (int i = 0; i < cols; ++i) s += d[i];
          gb[co] += s;
        }
    }
    if (T* gx = detail::input_grad(self, 0)) {
      std::vector<T> dcol(static_cast<std::size_t>(rows) * cols, 0.0f);
      detail::gemm_tn(rows, cols, Co, self.inputs[1]->value.data(), dmat.data(), dcol.data());
      for (int ci = 0; ci < Ci; ++ci)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const T* src = dcol.data() + static_cast<std::size_t>((ci * k + ky) * k + kx) * cols;
            for (int b = 0; b < B; ++b)
              for (int y = 0; y < Ho; ++y) {
                const int sy = y + ky - pad;
                if (sy < 0 || sy >= H) continue;
                T* d = gx + ((static_cast<std::size_t>(b) * Ci + ci) * H + sy) * W;
                const T* s = src + (static_cast<std::size_t>(b) * Ho + y) * Wo;
                for (int xx = 0; xx < Wo; ++xx) {
                  const int sx = xx + kx - pad;
                  if (sx >= 0 && sx < W) d[sx] += s[xx];
                }
              }
          }
    }
  };
  if (bias.defined()) return detail::make_result({B, Co, Ho, Wo}, std::move(out), {x, weight, bias}, backward);
  return detail::make_result({B, Co, Ho, Wo}, std::move(out), {x, weight}, backward);
}

/// 2x2 average pooling; H and W must be even.
template <typename T>
BasicTensor<T> avg_pool2(const BasicTensor<T>& x) {
  detail::require(x.shape().size() == 4 && x.dim(2) % 2 == 0 && x.dim(3) % 2 == 0, "avg_pool2 needs NCHW with even H, W");
  const int BC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3), Ho = H / 2, Wo = W / 2;
  std::vector<T> out(static_cast<std::size_t>(BC) * Ho * Wo);
  const T* X = x.data().data();
  for (int p = 0; p < BC; ++p)
    for (int y = 0; y < Ho; ++y)
      for (int xx = 0; xx < Wo; ++xx) {
        const T* s = X + (static_cast<std::size_t>(p) * H + 2 * y) * W + 2 * xx;
        out[(static_cast<std::size_t>(p) * Ho + y) * Wo + xx] = 0.25f * (s[0] + s[1] + s[W] + s[W + 1]);
      }
  return detail::make_result({x.dim(0), x.dim(1), Ho, Wo}, std::move(out), {x}, [BC, H, W, Ho, Wo](Node<T>& self) {
    if (T* g = detail::input_grad(self, 0))
      for (int p = 0; p < BC; ++p)
        for (int y = 0; y < Ho; ++y)
          for (int xx = 0; xx < Wo; ++xx) {
            const T d = 0.25f * self.grad[(static_cast<std::size_t>(p) * Ho + y) * Wo + xx];
            T* s = g + (static_cast<std::size_t>(p) * H + 2 * y) * W + 2 * xx;
            s[0] += d;
            s[1] += d;
            s[W] += d;
            s[W + 1] += d;
          }
  });
}

/// Nearest-neighbour 2x upsampling.
template <typename T>
BasicTensor<T> upsample_nearest2(const BasicTensor<T>& x) {
  detail::require(x.shape().size() == 4, "upsample_nearest2 needs NCHW");
  const int BC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3), Ho = 2 * H, Wo = 2 * W;
  std::vector<T> out(static_cast<std::size_t>(BC) * Ho * Wo);
  for (int p = 0; p < BC; ++p)
    for (int y = 0; y < Ho; ++y)
      for (int xx = 0; xx < Wo; ++xx)
        out[(static_cast<std::size_t>(p) * Ho + y) * Wo + xx] = x.data()[(static_cast<std::size_t>(p) * H + y / 2) * W + xx / 2];
  return detail::make_result({x.dim(0), x.dim(1), Ho, Wo}, std::move(out), {x}, [BC, H, W, Ho, Wo](Node<T>& self) {
    if (T* g = detail::input_grad(self, 0))
      for (int p = 0; p < BC; ++p)
        for (int y = 0; y < Ho; ++y)
          for (int xx = 0; xx < Wo; ++xx)
            g[(static_cast<std::size_t>(p) * H + y / 2) * W + xx / 2] += self.grad[(static_cast<std::size_t>(p) * Ho + y) * Wo + xx];
  });
}

/// Group normalization over (C/groups, H, W) per sample, then per-channel
/// affine gamma[C], beta[C].
template <typename T>
BasicTensor<T> group_norm(const BasicTensor<T>& x, int groups, const BasicTensor<T>& gamma, const BasicTensor<T>& beta, std::type_identity_t<T> eps = T(1e-5)) {
  detail::require(x.shape().size() == 4 && groups > 0 && x.dim(1) % groups == 0, "group_norm needs NCHW with C divisible by groups");
  const int B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3), Cg = C / groups;
  detail::require(gamma.numel() == static_cast<std::size_t>(C) && beta.numel() == static_cast<std::size_t>(C), "group_norm affine size mismatch");
  const std::size_t M = static_cast<std::size_t>(Cg) * HW;
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto rstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(B) * groups);
  std::vector<T> out(x.numel());
  const T* X = x.data().data();
  for (int b = 0; b < B; ++b)
    for (int g = 0; g < groups; ++g) {
      const std::size_t off = (static_cast<std::size_t>(b) * C + static_cast<std::size_t>(g) * Cg) * HW;
      double mean = 0.0;
      for (std::size_t i = 0; i < M; ++i) mean += X[off + i];
      mean /= static_cast<double>(M);
      double var = 0.0;
      for (std::size_t i = 0; i < M; ++i) var += (X[off + i] - mean) * (X[off + i] - mean);
      var /= static_cast<double>(M);
      const T r = static_cast<T>(1.0 / std::sqrt(var + eps));
      (*rstd)[static_cast<std::size_t>(b) * groups + g] = r;
      for (std::size_t i = 0; i < M; ++i) {
        const int c = g * Cg + static_cast<int>(i / HW);
        const T xh = static_cast<T>(X[off + i] - mean) * r;
        (*xhat)[off + i] = xh;
        out[off + i] = xh * gamma.data()[c] + beta.data()[c];
      }
    }
  return detail::make_result(x.shape(), std::move(out), {x, gamma, beta}, [=](Node<T>& self) {
    const auto& G = self.inputs[1]->value;
    T* gx = detail::input_grad(self, 0);
    T* gg = detail::input_grad(self, 1);
    T* gb = detail::input_grad(self, 2);
    for (int b = 0; b < B; ++b)
      for (int g = 0; g < groups; ++g) {
        const std::size_t off = (static_cast<std::size_t>(b) * C + static_cast<std::size_t>(g) * Cg) * HW;
        double sum_d = 0.0, sum_dx = 0.0;
        for (std::size_t i = 0; i < M; ++i) {
          const int c = g * Cg + static_cast<int>(i / HW);
          const T dy = self.grad[off + i];
          const T xh = (*xhat)[off + i];
          if (gg) gg[c] += dy * xh;
          if (gb) gb[c] += dy;
          const double dxh = static_cast<double>(dy) * G[c];
          sum_d += dxh;
          sum_dx += dxh * xh;
        }
        if (!gx) continue;
        const T r = (*rstd)[static_cast<std::size_t>(b) * groups + g];
        const double inv_m = 1.0 / static_cast<double>(M);
        for (std::size_t i = 0; i < M; ++i) {
          const int c = g * Cg + static_cast<int>(i / HW);
          const double dxh = static_cast<double>(self.grad[off + i]) * G[c];
          gx[off + i] += static_cast<T>(r * (dxh - inv_m * sum_d - (*xhat)[off + i] * inv_m * sum_dx));
        }
      }
  });
}

/// Concatenate two NCHW tensors along channels.
template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require(a.shape().size() == 4 && b.shape().size() == 4 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
                  [&] { return "concat_channels shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()); });
  const int B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), HW = a.dim(2) * a.dim(3);
  std::vector<T> out(static_cast<std::size_t>(B) * (Ca + Cb) * HW);
  for (int n = 0; n < B; ++n) {
    std::copy_n(a.data().data() + static_cast<std::size_t>(n) * Ca * HW, static_cast<std::size_t>(Ca) * HW,
                out.data() + static_cast<std::size_t>(n) * (Ca + Cb) * HW);
    std::copy_n(b.data().data() + static_cast<std::size_t>(n) * Cb * HW, static_cast<std::size_t>(Cb) * HW,
                out.data() + (static_cast<std::size_t>(n) * (Ca + Cb) + Ca) * HW);
  }
  return detail::make_result({B, Ca + Cb, a.dim(2), a.dim(3)}, std::move(out), {a, b}, [B, Ca, Cb, HW](Node<T>& self) {
    const std::size_t sa = static_cast<std::size_t>(Ca) * HW, sb = static_cast<std::size_t>(Cb) * HW;
    T* ga = detail::input_grad(self, 0);
    T* gb = detail::input_grad(self, 1);
    for (int n = 0; n < B; ++n) {
      const T* src = self.grad.data() + static_cast<std::size_t>(n) * (sa + sb);
      if (ga) for (std::size_t i = 0; i < sa; ++i) ga[n * sa + i] += src[i];
      if (gb) for (std::size_t i = 0; i < sb; ++i) gb[n * sb + i] += src[sa + i];
    }
  });
}

/// Zero-pads H and W at the bottom / right up to (Hp, Wp).
template <typename T>
BasicTensor<T> pad_to(const BasicTensor<T>& x, int Hp, int Wp) {
  detail::require(x.shape().size() == 4 && Hp >= x.dim(2) && Wp >= x.dim(3), "pad_to target smaller than input");
  const int BC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H == Hp && W == Wp) return x;
  std::vector<T> out(static_cast<std::size_t>(BC) * Hp * Wp, 0.0f);
  for (int p = 0; p < BC; ++p)
    for (int y = 0; y < H; ++y)
      std::copy_n(x.data().data() + (static_cast<std::size_t>(p) * H + y) * W, W, out.data() + (static_cast<std::size_t>(p) * Hp + y) * Wp);
  return detail::make_result({x.dim(0), x.dim(1), Hp, Wp}, std::move(out), {x}, [BC, H, W, Hp, Wp](Node<T>& self) {
    if (T* g = detail::input_grad(self, 0))
      for (int p = 0; p < BC; ++p)
        for (int y = 0; y < H; ++y)
          for (int xx = 0; xx < W; ++xx) g[(static_cast<std::size_t>(p) * H + y) * W + xx] += self.grad[(static_cast<std::size_t>(p) * Hp + y) * Wp + xx];
  });
}

/// Top-left (H, W) window.
template <typename T>
BasicTensor<T> crop(const BasicTensor<T>& x, int H, int W) {
  detail::require(x.shape().size() == 4 && H <= x.dim(2) && W <= x.dim(3), "crop window larger than input");
  const int BC = x.dim(0) * x.dim(1), Hp = x.dim(2), Wp = x.dim(3);
  if (H == Hp && W == Wp) return x;
  std::vector<T> out(static_cast<std::size_t>(BC) * H * W);
  for (int p = 0; p < BC; ++p)
    for (int y = 0; y < H; ++y)
      std::copy_n(x.data().data() + (static_cast<std::size_t>(p) * Hp + y) * Wp, W, out.data() + (static_cast<std::size_t>(p) * H + y) * W);
  return detail::make_result({x.dim(0), x.dim(1), H, W}, std::move(out), {x}, [BC, H, W, Hp, Wp](Node<T>& self) {
    if (T* g = detail::input_grad(self, 0))
      for (int p = 0; p < BC; ++p)
        for (int y = 0; y < H; ++y)
          for (int xx = 0; xx < W; ++xx) g[(static_cast<std::size_t>(p) * Hp + y) * Wp + xx] += self.grad[(static_cast<std::size_t>(p) * H + y) * W + xx];
  });
}

// ---------------------------------------------------------------------------

/// Populates grad of every tracked ancestor of `loss` (accumulating into
/// leaves). The graph is released afterwards.
template <typename T>
void backward(const BasicTensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) throw InvalidArgument("backward needs a scalar loss");
  if (!loss.requires_grad()) return;
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node<T>* child = n->inputs[next++].get();
      if (child->tracked && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  for (Node<T>* n : order) {
    if (n->backward) {
      n->backward = nullptr;
      n->inputs.clear();
    }
  }
}

using Tensor = BasicTensor<float>;

}  // namespace dmvqe::nn
