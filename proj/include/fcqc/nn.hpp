#pragma once

// compact-v1: four stages of [3x3 conv (same padding), ReLU, 2x2 max pool]
// with widths 16/32/64/128, global average pooling and one linear output.
// Templated on the scalar type so gradients can be checked in double while
// training runs in float.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fcqc/errors.hpp"

namespace fcqc::nn {

inline constexpr const char* kCompactV1 = "compact-v1";

struct TensorInfo {
  std::string name;
  std::vector<int> dims;
  std::size_t offset = 0;

  [[nodiscard]] std::size_t size() const {
    std::size_t n = 1;
    for (int d : dims) n *= static_cast<std::size_t>(d);
    return n;
  }
  friend bool operator==(const TensorInfo&, const TensorInfo&) = default;
};

/// Standard normal draws via Box-Muller on mt19937_64, reproducible across
/// standard library implementations.
class NormalSource {
 public:
  explicit NormalSource(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    } while (u1 <= 0.0);
    const double u2 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

template <typename T>
class CompactNet {
 public:
  static constexpr int kStages = 4;
  static constexpr std::array<int, kStages> kWidths{16, 32, 64, 128};
  static constexpr int kInputChannels = 3;

  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatMap = Eigen::Map<Matrix>;
  using ConstMatMap = Eigen::Map<const Matrix>;

  /// Activations of one sample, kept for the backward pass.
  struct Trace {
    std::array<std::vector<T>, kStages> input;
    std::array<std::vector<T>, kStages> activation;
    std::array<std::vector<int>, kStages> argmax;
    std::vector<T> features;
  };

  struct Scratch {
    std::vector<T> col;
    std::vector<T> dcol;
    std::vector<T> grad_a;
    std::vector<T> grad_x;
    std::vector<T> grad_pool;
    Trace trace;
  };

  explicit CompactNet(int resolution) : resolution_(resolution) {
    if (resolution < 16) {
      throw Error(Errc::ShapeMismatch, "compact-v1 needs an input resolution of at least 16");
    }
    std::size_t offset = 0;
    int in = kInputChannels;
    int size = resolution;
    for (int s = 0; s < kStages; ++s) {
      const int out = kWidths[s];
      add_tensor("conv" + std::to_string(s + 1) + ".weight", {out, in, 3, 3}, offset);
      add_tensor("conv" + std::to_string(s + 1) + ".bias", {out}, offset);
      side_[s] = size;
      size /= 2;
      in = out;
    }
    pooled_side_ = size;
    add_tensor("head.weight", {1, kWidths.back()}, offset);
    add_tensor("head.bias", {1}, offset);
    params_.assign(offset, T(0));
  }

  [[nodiscard]] int resolution() const { return resolution_; }
  [[nodiscard]] const std::vector<TensorInfo>& layout() const { return layout_; }
  [[nodiscard]] std::span<T> parameters() { return params_; }
  [[nodiscard]] std::span<const T> parameters() const { return params_; }
  [[nodiscard]] std::size_t input_size() const {
    return static_cast<std::size_t>(kInputChannels) * resolution_ * resolution_;
  }
  /// Offset of the first head parameter; everything before it is convolutional.
  [[nodiscard]] std::size_t head_offset() const { return layout_[2 * kStages].offset; }

  /// He-normal convolution weights, head weights N(0, 0.01^2), head bias 0.5.
  void initialize(std::uint64_t seed) {
    NormalSource normal(seed);
    int in = kInputChannels;
    for (int s = 0; s < kStages; ++s) {
      const TensorInfo& w = layout_[2 * s];
      const double stddev = std::sqrt(2.0 / (in * 9.0));
      for (std::size_t i = 0; i < w.size(); ++i) params_[w.offset + i] = static_cast<T>(stddev * normal());
      const TensorInfo& b = layout_[2 * s + 1];
      std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(b.offset), b.size(), T(0));
      in = kWidths[s];
    }
    const TensorInfo& hw = layout_[2 * kStages];
    const double head_std = 0.01;
    for (std::size_t i = 0; i < hw.size(); ++i) params_[hw.offset + i] = static_cast<T>(head_std * normal());
    params_[layout_[2 * kStages + 1].offset] = T(0.5);
  }

  /// Forward pass for one CHW sample. When `trace` is given, activations are
  /// recorded for backward().
  T forward(const T* input, Scratch& scratch, Trace* trace) const {
    std::vector<T> local_x(input, input + input_size());
    std::vector<T> act;
    std::vector<T> pooled;
    std::vector<int> argmax;
    int in = kInputChannels;
    for (int s = 0; s < kStages; ++s) {
      const int side = side_[s];
      const int hw = side * side;
      const int out = kWidths[s];
      im2col(local_x.data(), in, side, scratch.col);
      act.resize(static_cast<std::size_t>(out) * hw);
      MatMap z(act.data(), out, hw);
      ConstMatMap w(params_.data() + layout_[2 * s].offset, out, in * 9);
      ConstMatMap col(scratch.col.data(), in * 9, hw);
      z.noalias() = w * col;
      const T* bias = params_.data() + layout_[2 * s + 1].offset;
      for (int c = 0; c < out; ++c) {
        T* row = act.data() + static_cast<std::size_t>(c) * hw;
        const T b = bias[c];
        for (int i = 0; i < hw; ++i) row[i] = std::max(row[i] + b, T(0));
      }
      max_pool(act.data(), out, side, pooled, argmax);
      if (trace) {
        trace->input[s] = local_x;
        trace->activation[s] = act;
        trace->argmax[s] = argmax;
      }
      local_x.swap(pooled);
      in = out;
    }
    const int channels = kWidths.back();
    const int area = pooled_side_ * pooled_side_;
    std::vector<T> features(static_cast<std::size_t>(channels));
    for (int c = 0; c < channels; ++c) {
      T sum = 0;
      const T* p = local_x.data() + static_cast<std::size_t>(c) * area;
      for (int i = 0; i < area; ++i) sum += p[i];
      features[static_cast<std::size_t>(c)] = sum / static_cast<T>(area);
    }
    const T* hw = params_.data() + layout_[2 * kStages].offset;
    T out = params_[layout_[2 * kStages + 1].offset];
    for (int c = 0; c < channels; ++c) out += hw[c] * features[static_cast<std::size_t>(c)];
    if (trace) trace->features = std::move(features);
    return out;
  }

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  /// With `head_only` the convolution gradients are left untouched.
  void backward(const Trace& trace, T grad_out, std::span<T> grad, Scratch& scratch,
                bool head_only) const {
    const int channels = kWidths.back();
    const std::size_t hw_off = layout_[2 * kStages].offset;
    for (int c = 0; c < channels; ++c) grad[hw_off + c] += grad_out * trace.features[static_cast<std::size_t>(c)];
    grad[layout_[2 * kStages + 1].offset] += grad_out;
    if (head_only) return;

    const int area = pooled_side_ * pooled_side_;
    auto& grad_pool = scratch.grad_pool;
    grad_pool.assign(static_cast<std::size_t>(channels) * area, T(0));
    for (int c = 0; c < channels; ++c) {
      const T g = grad_out * params_[hw_off + c] / static_cast<T>(area);
      std::fill_n(grad_pool.begin() + static_cast<std::ptrdiff_t>(c) * area, area, g);
    }
    for (int s = kStages - 1; s >= 0; --s) {
      const int side = side_[s];
      const int hw = side * side;
      const int out = kWidths[s];
      const int in = s == 0 ? kInputChannels : kWidths[s - 1];
      auto& ga = scratch.grad_a;
      ga.assign(static_cast<std::size_t>(out) * hw, T(0));
      const auto& argmax = trace.argmax[s];
      for (std::size_t i = 0; i < argmax.size(); ++i) ga[static_cast<std::size_t>(argmax[i])] += grad_pool[i];
      const auto& act = trace.activation[s];
      for (std::size_t i = 0; i < ga.size(); ++i) {
        if (!(act[i] > T(0))) ga[i] = T(0);
      }
      im2col(trace.input[s].data(), in, side, scratch.col);
      ConstMatMap dz(ga.data(), out, hw);
      ConstMatMap col(scratch.col.data(), in * 9, hw);
      MatMap dw(grad.data() + layout_[2 * s].offset, out, in * 9);
      dw.noalias() += dz * col.transpose();
      T* db = grad.data() + layout_[2 * s + 1].offset;
      for (int c = 0; c < out; ++c) {
        const T* row = ga.data() + static_cast<std::size_t>(c) * hw;
        T sum = 0;
        for (int i = 0; i < hw; ++i) sum += row[i];
        db[c] += sum;
      }
      if (s == 0) break;
      scratch.dcol.resize(static_cast<std::size_t>(in) * 9 * hw);
      MatMap dcol(scratch.dcol.data(), in * 9, hw);
      ConstMatMap w(params_.data() + layout_[2 * s].offset, out, in * 9);
      dcol.noalias() = w.transpose() * dz;
      col2im(scratch.dcol.data(), in, side, grad_pool);
    }
  }

 private:
  void add_tensor(std::string name, std::vector<int> dims, std::size_t& offset) {
    TensorInfo t{std::move(name), std::move(dims), offset};
    offset += t.size();
    layout_.push_back(std::move(t));
  }

  // Row (c*9 + ky*3 + kx), column (y*side + x) holds x[c, y+ky-1, x+kx-1] or 0.
  static void im2col(const T* x, int channels, int side, std::vector<T>& col) {
    const int hw = side * side;
    col.resize(static_cast<std::size_t>(channels) * 9 * hw);
    for (int c = 0; c < channels; ++c) {
      const T* plane = x + static_cast<std::size_t>(c) * hw;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          T* dst = col.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * hw;
          const int dx = kx - 1;
          const int x_lo = std::max(0, -dx);
          const int x_hi = std::min(side, side - dx);
          for (int y = 0; y < side; ++y) {
            T* out_row = dst + static_cast<std::size_t>(y) * side;
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= side) {
              std::fill_n(out_row, side, T(0));
              continue;
            }
            const T* in_row = plane + static_cast<std::size_t>(sy) * side;
            std::fill_n(out_row, x_lo, T(0));
            std::copy(in_row + x_lo + dx, in_row + x_hi + dx, out_row + x_lo);
            std::fill(out_row + x_hi, out_row + side, T(0));
          }
        }
      }
    }
  }

  static void col2im(const T* col, int channels, int side, std::vector<T>& x) {
    const int hw = side * side;
    x.assign(static_cast<std::size_t>(channels) * hw, T(0));
    for (int c = 0; c < channels; ++c) {
      T* plane = x.data() + static_cast<std::size_t>(c) * hw;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const T* src = col + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * hw;
          const int dx = kx - 1;
          const int x_lo = std::max(0, -dx);
          const int x_hi = std::min(side, side - dx);
          for (int y = 0; y < side; ++y) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= side) continue;
            const T* in_row = src + static_cast<std::size_t>(y) * side;
            T* out_row = plane + static_cast<std::size_t>(sy) * side;
            for (int xx = x_lo; xx < x_hi; ++xx) out_row[xx + dx] += in_row[xx];
          }
        }
      }
    }
  }

  static void max_pool(const T* a, int channels, int side, std::vector<T>& pooled,
                       std::vector<int>& argmax) {
    const int half = side / 2;
    const int hw = side * side;
    pooled.resize(static_cast<std::size_t>(channels) * half * half);
    argmax.resize(pooled.size());
    std::size_t k = 0;
    for (int c = 0; c < channels; ++c) {
      const int base = c * hw;
      for (int y = 0; y < half; ++y) {
        for (int x = 0; x < half; ++x, ++k) {
          int best = base + (2 * y) * side + 2 * x;
          const int candidates[3] = {best + 1, best + side, best + side + 1};
          for (int idx : candidates) {
            if (a[idx] > a[best]) best = idx;
          }
          pooled[k] = a[best];
          argmax[k] = best;
        }
      }
    }
  }

  int resolution_;
  std::array<int, kStages> side_{};
  int pooled_side_ = 0;
  std::vector<TensorInfo> layout_;
  std::vector<T> params_;
};

/// Adam with bias correction.
template <typename T>
class Adam {
 public:
  Adam(std::size_t n, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-7)
      : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(epsilon), m_(n, 0.0), v_(n, 0.0) {}

  /// Updates params[first, last) from grad.
  void step(std::span<T> params, std::span<const T> grad, std::size_t first = 0) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = first; i < params.size(); ++i) {
      const double g = static_cast<double>(grad[i]);
      m_[i] = b1_ * m_[i] + (1.0 - b1_) * g;
      v_[i] = b2_ * v_[i] + (1.0 - b2_) * g * g;
      const double update = lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
      params[i] = static_cast<T>(static_cast<double>(params[i]) - update);
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  std::vector<double> m_, v_;
  long long t_ = 0;
};

}  // namespace fcqc::nn
