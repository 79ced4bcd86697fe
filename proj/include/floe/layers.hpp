#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "floe/error.hpp"
#include "floe/rng.hpp"
#include "floe/tensor.hpp"

namespace floe {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Four-accumulator dot product. Strict left-to-right summation defeats
// vectorization; this fixed interleaved order is still deterministic and
// lets the compiler keep several FMA chains in flight.
inline double dot4(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t c = 0;
  for (; c + 4 <= n; c += 4) {
    s0 += a[c] * b[c];
    s1 += a[c + 1] * b[c + 1];
    s2 += a[c + 2] * b[c + 2];
    s3 += a[c + 3] * b[c + 3];
  }
  for (; c < n; ++c) s0 += a[c] * b[c];
  return (s0 + s1) + (s2 + s3);
}

// y = W x + b, W row-major (rows x cols)
inline void affine(const Tensor& W, const Tensor& b, const double* x, double* y) {
  const std::size_t rows = W.dims[0], cols = W.dims[1];
  for (std::size_t r = 0; r < rows; ++r)
    y[r] = b[r] + dot4(W.data.data() + r * cols, x, cols);
}

// accumulate z += W x (no bias)
inline void matvec_add(const Tensor& W, const double* x, double* z) {
  const std::size_t rows = W.dims[0], cols = W.dims[1];
  for (std::size_t r = 0; r < rows; ++r) z[r] += dot4(W.data.data() + r * cols, x, cols);
}

// dx += W^T dz
inline void matvec_transpose_add(const Tensor& W, const double* dz, double* dx) {
  const std::size_t rows = W.dims[0], cols = W.dims[1];
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = dz[r];
    if (g == 0.0) continue;
    const double* wr = W.data.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) dx[c] += wr[c] * g;
  }
}

// dW += dz (rows) outer x (cols)
inline void outer_add(Tensor& dW, const double* dz, const double* x) {
  const std::size_t rows = dW.dims[0], cols = dW.dims[1];
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = dz[r];
    if (g == 0.0) continue;
    double* wr = dW.data.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) wr[c] += g * x[c];
  }
}

/// Fully connected layer, y = W x + b.
struct DenseLayer {
  std::size_t in = 0, out = 0;
  std::size_t w = 0, bias = 0; // ParamSet entry indices

  void init(ParamSet& ps, const std::string& prefix, std::size_t in_dim, std::size_t out_dim,
            Rng& rng) {
    in = in_dim;
    out = out_dim;
    Tensor W = Tensor::zeros({out, in});
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : W.data) v = rng.uniform(-bound, bound);
    w = ps.add(prefix + ".w", std::move(W));
    bias = ps.add(prefix + ".b", Tensor::zeros({out}));
  }

  void forward(const ParamSet& ps, const double* x, double* y) const {
    affine(ps[w].value, ps[bias].value, x, y);
  }

  // x is the input the forward pass saw; dx may be null
  void backward(const ParamSet& ps, const double* x, const double* dy, double* dx,
                std::vector<Tensor>& gbuf) const {
    outer_add(gbuf[w], dy, x);
    for (std::size_t r = 0; r < out; ++r) gbuf[bias].data[r] += dy[r];
    if (dx) matvec_transpose_add(ps[w].value, dy, dx);
  }
};

/// Standard LSTM layer: sigmoid gates, tanh cell and output activations,
/// gate order (i, f, g, o) stacked in the weight rows. W: (4H x D_in),
/// U: (4H x H), b: (4H). Forget-gate bias starts at 1.
struct LstmLayer {
  std::size_t in = 0, hidden = 0;
  std::size_t w = 0, u = 0, bias = 0;

  void init(ParamSet& ps, const std::string& prefix, std::size_t in_dim, std::size_t H, Rng& rng) {
    in = in_dim;
    hidden = H;
    const double bound = 1.0 / std::sqrt(static_cast<double>(H));
    Tensor W = Tensor::zeros({4 * H, in});
    for (auto& v : W.data) v = rng.uniform(-bound, bound);
    Tensor U = Tensor::zeros({4 * H, H});
    for (auto& v : U.data) v = rng.uniform(-bound, bound);
    Tensor b = Tensor::zeros({4 * H});
    for (std::size_t i = H; i < 2 * H; ++i) b[i] = 1.0; // forget gate
    w = ps.add(prefix + ".w", std::move(W));
    u = ps.add(prefix + ".u", std::move(U));
    bias = ps.add(prefix + ".b", std::move(b));
  }

  struct Cache {
    std::size_t T = 0;
    std::vector<double> x;      // T x in
    std::vector<double> gates;  // T x 4H, post-activation (i, f, g, o)
    std::vector<double> c;      // T x H
    std::vector<double> tanh_c; // T x H
    std::vector<double> h;      // T x H
  };

  // One cell step. gates_out, when given, receives the 4H post-activation
  // gate values.
  void step(const ParamSet& ps, const double* x_t, const double* h_prev, const double* c_prev,
            double* h_t, double* c_t, double* gates_out = nullptr) const {
    const std::size_t H = hidden;
    std::vector<double> z(4 * H);
    affine(ps[w].value, ps[bias].value, x_t, z.data());
    matvec_add(ps[u].value, h_prev, z.data());
    for (std::size_t j = 0; j < H; ++j) {
      const double ig = sigmoid(z[j]);
      const double fg = sigmoid(z[H + j]);
      const double gg = std::tanh(z[2 * H + j]);
      const double og = sigmoid(z[3 * H + j]);
      const double cc = fg * c_prev[j] + ig * gg;
      c_t[j] = cc;
      h_t[j] = og * std::tanh(cc);
      if (gates_out) {
        gates_out[j] = ig;
        gates_out[H + j] = fg;
        gates_out[2 * H + j] = gg;
        gates_out[3 * H + j] = og;
      }
    }
  }

  void forward(const ParamSet& ps, const double* x, std::size_t T, Cache& cache) const {
    const std::size_t H = hidden;
    cache.T = T;
    cache.x.assign(x, x + T * in);
    cache.gates.resize(T * 4 * H);
    cache.c.resize(T * H);
    cache.tanh_c.resize(T * H);
    cache.h.resize(T * H);

    std::vector<double> z(4 * H);
    const Tensor& Wm = ps[w].value;
    const Tensor& Um = ps[u].value;
    const Tensor& bv = ps[bias].value;
    for (std::size_t t = 0; t < T; ++t) {
      affine(Wm, bv, x + t * in, z.data());
      if (t > 0) matvec_add(Um, cache.h.data() + (t - 1) * H, z.data());
      double* gt = cache.gates.data() + t * 4 * H;
      double* ct = cache.c.data() + t * H;
      double* tct = cache.tanh_c.data() + t * H;
      double* ht = cache.h.data() + t * H;
      const double* c_prev = (t > 0) ? cache.c.data() + (t - 1) * H : nullptr;
      for (std::size_t j = 0; j < H; ++j) {
        const double ig = sigmoid(z[j]);
        const double fg = sigmoid(z[H + j]);
        const double gg = std::tanh(z[2 * H + j]);
        const double og = sigmoid(z[3 * H + j]);
        gt[j] = ig;
        gt[H + j] = fg;
        gt[2 * H + j] = gg;
        gt[3 * H + j] = og;
        const double cp = c_prev ? c_prev[j] : 0.0;
        const double cc = fg * cp + ig * gg;
        ct[j] = cc;
        tct[j] = std::tanh(cc);
        ht[j] = og * tct[j];
      }
    }
  }

  // dh: T x H upstream gradient on the outputs; dx (T x in) is overwritten.
  void backward(const ParamSet& ps, const Cache& cache, const double* dh, double* dx,
                std::vector<Tensor>& gbuf) const {
    const std::size_t H = hidden, T = cache.T;
    std::vector<double> dh_rec(H, 0.0), dc_rec(H, 0.0), dz(4 * H);
    std::fill(dx, dx + T * in, 0.0);

    for (std::size_t t = T; t-- > 0;) {
      const double* gt = cache.gates.data() + t * 4 * H;
      const double* tct = cache.tanh_c.data() + t * H;
      const double* c_prev = (t > 0) ? cache.c.data() + (t - 1) * H : nullptr;
      const double* h_prev = (t > 0) ? cache.h.data() + (t - 1) * H : nullptr;
      for (std::size_t j = 0; j < H; ++j) {
        const double ig = gt[j], fg = gt[H + j], gg = gt[2 * H + j], og = gt[3 * H + j];
        const double dht = dh[t * H + j] + dh_rec[j];
        const double dc = dc_rec[j] + dht * og * (1.0 - tct[j] * tct[j]);
        const double cp = c_prev ? c_prev[j] : 0.0;
        dz[j] = dc * gg * ig * (1.0 - ig);                    // input gate pre-activation
        dz[H + j] = dc * cp * fg * (1.0 - fg);                // forget gate
        dz[2 * H + j] = dc * ig * (1.0 - gg * gg);            // candidate
        dz[3 * H + j] = dht * tct[j] * og * (1.0 - og);       // output gate
        dc_rec[j] = dc * fg;
      }
      outer_add(gbuf[w], dz.data(), cache.x.data() + t * in);
      if (h_prev) outer_add(gbuf[u], dz.data(), h_prev);
      for (std::size_t r = 0; r < 4 * H; ++r) gbuf[bias].data[r] += dz[r];
      matvec_transpose_add(ps[w].value, dz.data(), dx + t * in);
      std::fill(dh_rec.begin(), dh_rec.end(), 0.0);
      if (t > 0) matvec_transpose_add(ps[u].value, dz.data(), dh_rec.data());
    }
  }
};

/// 1-D convolution over time, zero padding, stride 1, output length equals
/// input length. W: (C_out x C_in x K), odd K only.
struct Conv1dLayer {
  std::size_t in_ch = 0, out_ch = 0, kernel = 3;
  std::size_t w = 0, bias = 0;

  void init(ParamSet& ps, const std::string& prefix, std::size_t in_c, std::size_t out_c,
            std::size_t K, Rng& rng) {
    if (K % 2 == 0) throw ConfigError("conv1d kernel width must be odd, got " + std::to_string(K));
    in_ch = in_c;
    out_ch = out_c;
    kernel = K;
    Tensor W = Tensor::zeros({out_ch, in_ch, K});
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * K));
    for (auto& v : W.data) v = rng.uniform(-bound, bound);
    w = ps.add(prefix + ".w", std::move(W));
    bias = ps.add(prefix + ".b", Tensor::zeros({out_ch}));
  }

  struct Cache {
    std::size_t T = 0;
    std::vector<double> x; // T x in_ch
  };

  void forward(const ParamSet& ps, const double* x, std::size_t T, Cache& cache, double* y) const {
    cache.T = T;
    cache.x.assign(x, x + T * in_ch);
    const Tensor& W = ps[w].value;
    const Tensor& b = ps[bias].value;
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(kernel - 1) / 2;
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t o = 0; o < out_ch; ++o) {
        double acc = b[o];
        for (std::size_t k = 0; k < kernel; ++k) {
          const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + k) - half;
          if (s < 0 || s >= static_cast<std::ptrdiff_t>(T)) continue;
          const double* xs = x + static_cast<std::size_t>(s) * in_ch;
          const double* wk = W.data.data() + (o * in_ch) * kernel + k;
          for (std::size_t c = 0; c < in_ch; ++c) acc += wk[c * kernel] * xs[c];
        }
        y[t * out_ch + o] = acc;
      }
    }
  }

  void backward(const ParamSet& ps, const Cache& cache, const double* dy, double* dx,
                std::vector<Tensor>& gbuf) const {
    const std::size_t T = cache.T;
    const Tensor& W = ps[w].value;
    Tensor& dW = gbuf[w];
    Tensor& db = gbuf[bias];
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(kernel - 1) / 2;
    if (dx) std::fill(dx, dx + T * in_ch, 0.0);

    for (std::size_t t = 0; t < T; ++t) {
      const double* dyt = dy + t * out_ch;
      for (std::size_t o = 0; o < out_ch; ++o) {
        const double g = dyt[o];
        if (g == 0.0) continue;
        db[o] += g;
        for (std::size_t k = 0; k < kernel; ++k) {
          const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + k) - half;
          if (s < 0 || s >= static_cast<std::ptrdiff_t>(T)) continue;
          const double* xs = cache.x.data() + static_cast<std::size_t>(s) * in_ch;
          double* dwk = dW.data.data() + (o * in_ch) * kernel + k;
          for (std::size_t c = 0; c < in_ch; ++c) dwk[c * kernel] += g * xs[c];
          if (dx) {
            double* dxs = dx + static_cast<std::size_t>(s) * in_ch;
            const double* wk = W.data.data() + (o * in_ch) * kernel + k;
            for (std::size_t c = 0; c < in_ch; ++c) dxs[c] += g * wk[c * kernel];
          }
        }
      }
    }
  }
};

/// Inverted dropout. Training mode draws a Bernoulli(1-p) mask and scales by
/// 1/(1-p); inference mode is the identity. The scaled mask is cached so the
/// backward pass reuses the exact forward masking.
inline void dropout_forward(const double* x, std::size_t n, double p, bool training, Rng* rng,
                            std::vector<double>& scaled_mask, double* y) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must be in [0, 1)");
  if (!training || p == 0.0) {
    scaled_mask.clear();
    if (y != x) std::copy(x, x + n, y);
    return;
  }
  scaled_mask.resize(n);
  const double scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < n; ++i) {
    scaled_mask[i] = rng->bernoulli(p) ? 0.0 : scale;
    y[i] = x[i] * scaled_mask[i];
  }
}

inline void dropout_backward(const double* dy, std::size_t n, const std::vector<double>& scaled_mask,
                             double* dx) {
  if (scaled_mask.empty()) {
    if (dx != dy) std::copy(dy, dy + n, dx);
    return;
  }
  for (std::size_t i = 0; i < n; ++i) dx[i] = dy[i] * scaled_mask[i];
}

} // namespace floe
