#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "pnpe/common.hpp"
#include "pnpe/rng.hpp"
#include "pnpe/tensor.hpp"

namespace pnpe {

// ---------------------------------------------------------------------------
// Architecture description
// ---------------------------------------------------------------------------

struct ConvBlockConfig {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_size = 0;
  int stride = 1;
  int pool_size = 0;  // 0 = no pooling after this block
  int pool_stride = 0;
};

enum class Normalization { Layer, Batch };

// Feature blocks (conv + ReLU + norm, optional max-pool) followed by a
// convolutional classification head. Valid (unpadded) convolutions only, so
// the composed shape arithmetic must map one analysis window to exactly one
// output step.
struct ArchitectureConfig {
  std::vector<ConvBlockConfig> blocks;
  int head_kernel = 7;
  int output_bins = 1440;
  int window_size = 1024;
  Normalization normalization = Normalization::Layer;
  double dropout_prob = 0.0;

  static int conv_out_len(int len, int kernel, int stride) {
    return (len - kernel) / stride + 1;
  }

  int block_out_len(std::size_t i, int len) const {
    const ConvBlockConfig& b = blocks[i];
    if (len < b.kernel_size)
      throw InvalidArgument("architecture: kernel longer than input in block " +
                            std::to_string(i));
    len = conv_out_len(len, b.kernel_size, b.stride);
    if (b.pool_size > 0) {
      if (len < b.pool_size)
        throw InvalidArgument("architecture: pool longer than input in block " +
                              std::to_string(i));
      len = conv_out_len(len, b.pool_size, b.pool_stride);
    }
    return len;
  }

  void validate() const {
    if (blocks.empty()) throw InvalidArgument("architecture: no blocks");
    if (output_bins < 2) throw InvalidArgument("architecture: output_bins < 2");
    if (normalization == Normalization::Batch)
      throw UnsupportedError("architecture: batch normalization is not supported");
    if (dropout_prob != 0.0)
      throw UnsupportedError("architecture: nonzero dropout is not supported");
    int len = window_size;
    int ch = blocks.front().in_channels;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const ConvBlockConfig& b = blocks[i];
      if (b.in_channels != ch)
        throw InvalidArgument("architecture: channel mismatch at block " + std::to_string(i));
      if (b.kernel_size <= 0 || b.stride <= 0 || b.out_channels <= 0)
        throw InvalidArgument("architecture: bad block " + std::to_string(i));
      if (b.pool_size > 0 && b.pool_stride <= 0)
        throw InvalidArgument("architecture: bad pool stride at block " + std::to_string(i));
      len = block_out_len(i, len);
      ch = b.out_channels;
    }
    if (len < head_kernel)
      throw InvalidArgument("architecture: head kernel longer than its input");
    len = conv_out_len(len, head_kernel, 1);
    if (len != 1)
      throw InvalidArgument("architecture: composed shape yields output length " +
                            std::to_string(len) + ", expected 1");
  }
};

// The FCNF0++-style default: six blocks, kernel 32, pooling after the first
// three, conv head over the remaining 7 steps.
inline ArchitectureConfig reference_config() {
  ArchitectureConfig cfg;
  cfg.blocks = {
      {1, 256, 32, 1, 2, 2}, {256, 32, 32, 1, 2, 2}, {32, 32, 32, 1, 2, 2},
      {32, 128, 32, 1, 0, 0}, {128, 256, 32, 1, 0, 0}, {256, 512, 32, 1, 0, 0},
  };
  cfg.head_kernel = 7;
  cfg.output_bins = 1440;
  cfg.window_size = 1024;
  return cfg;
}

// Two-block, 8-channel network over 32 bins; small enough for exhaustive
// finite-difference checks.
inline ArchitectureConfig tiny_config() {
  ArchitectureConfig cfg;
  cfg.blocks = {
      {1, 8, 64, 8, 2, 2}, {8, 8, 32, 2, 2, 2},
  };
  cfg.head_kernel = 7;
  cfg.output_bins = 32;
  cfg.window_size = 1024;
  return cfg;
}

// Mid-size network for desk-scale training runs.
inline ArchitectureConfig compact_config() {
  ArchitectureConfig cfg;
  cfg.blocks = {
      {1, 32, 64, 4, 2, 2}, {32, 32, 32, 2, 0, 0}, {32, 64, 16, 1, 2, 2},
      {64, 128, 9, 1, 0, 0},
  };
  cfg.head_kernel = 7;
  cfg.output_bins = 1440;
  cfg.window_size = 1024;
  return cfg;
}

inline ArchitectureConfig named_config(const std::string& name) {
  if (name == "reference") return reference_config();
  if (name == "compact") return compact_config();
  if (name == "tiny") return tiny_config();
  throw InvalidArgument("unknown architecture name: " + name);
}

// ---------------------------------------------------------------------------
// Parameters and serialization
// ---------------------------------------------------------------------------

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t count() const {
    std::size_t n = 1;
    for (std::uint32_t d : dims) n *= d;
    return n;
  }
};

// Ordered list of every weight tensor in the network, in the layout the
// weights file uses.
struct NetworkParams {
  std::vector<NamedTensor> tensors;

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const NamedTensor& t : tensors) n += t.values.size();
    return n;
  }
};

namespace wire {

constexpr char kMagic[4] = {'P', 'N', 'P', 'E'};
constexpr std::uint32_t kVersion = 1;

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const unsigned char* p;
  std::size_t left;

  void need(std::size_t n) const {
    if (left < n) throw FormatError("weights file: truncated payload");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p[0] | p[1] << 8);
    p += 2;
    left -= 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
                      std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
    p += 4;
    left -= 4;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    std::uint8_t v = *p;
    ++p;
    --left;
    return v;
  }
  void bytes(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, p, n);
    p += n;
    left -= n;
  }
};

}  // namespace wire

// Weights file: magic "PNPE", u32 version, u32 tensor count, then per tensor
// u16 name length, name, u8 ndim, u32 dims[], f32 row-major data. All fields
// little-endian.
inline void save_params(const std::string& path, const NetworkParams& params) {
  std::string out;
  out.append(wire::kMagic, 4);
  wire::put_u32(out, wire::kVersion);
  wire::put_u32(out, static_cast<std::uint32_t>(params.tensors.size()));
  for (const NamedTensor& t : params.tensors) {
    if (t.name.size() > 0xffff) throw InvalidArgument("tensor name too long: " + t.name);
    if (t.dims.size() > 0xff) throw InvalidArgument("tensor rank too large: " + t.name);
    if (t.count() != t.values.size())
      throw InvalidArgument("tensor dims do not match payload: " + t.name);
    wire::put_u16(out, static_cast<std::uint16_t>(t.name.size()));
    out.append(t.name);
    out.push_back(static_cast<char>(t.dims.size()));
    for (std::uint32_t d : t.dims) wire::put_u32(out, d);
    const std::size_t off = out.size();
    out.resize(off + t.values.size() * 4);
    std::memcpy(out.data() + off, t.values.data(), t.values.size() * 4);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write to " + path);
}

inline NetworkParams load_params(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  wire::Reader r{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()};

  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, wire::kMagic, 4) != 0) throw FormatError("weights file: bad magic");
  const std::uint32_t version = r.u32();
  if (version != wire::kVersion)
    throw FormatError("weights file: unsupported version " + std::to_string(version));

  NetworkParams params;
  const std::uint32_t count = r.u32();
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const std::uint16_t name_len = r.u16();
    t.name.resize(name_len);
    r.bytes(t.name.data(), name_len);
    if (!seen.insert(t.name).second)
      throw FormatError("weights file: duplicate tensor name " + t.name);
    const std::uint8_t ndim = r.u8();
    t.dims.resize(ndim);
    for (std::uint8_t d = 0; d < ndim; ++d) t.dims[d] = r.u32();
    t.values.resize(t.count());
    r.bytes(t.values.data(), t.values.size() * 4);
    params.tensors.push_back(std::move(t));
  }
  if (r.left != 0) throw FormatError("weights file: trailing bytes");
  return params;
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
using MatrixRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatrixRM<T>>;
template <typename T>
using ConstMapRM = Eigen::Map<const MatrixRM<T>>;

// Non-owning view of one conv weight tensor (out_ch, in_ch, kernel).
template <typename T>
struct ConvWeight {
  const T* data;
  int out_ch;
  int in_ch;
  int kernel;
};

// Gathers conv patches into a (in_channels*kernel) x (batch*out_len) matrix,
// columns ordered batch-major. first/count select a sub-range of items.
template <typename T>
void im2col(const Tensor3<T>& in, int kernel, int stride, int out_len, std::vector<T>& col,
            int first = 0, int count = -1) {
  if (count < 0) count = in.batch;
  const std::size_t cols = static_cast<std::size_t>(count) * out_len;
  col.resize(static_cast<std::size_t>(in.channels) * kernel * cols);
  for (int ci = 0; ci < in.channels; ++ci) {
    for (int k = 0; k < kernel; ++k) {
      T* dst = col.data() + (static_cast<std::size_t>(ci) * kernel + k) * cols;
      for (int b = first; b < first + count; ++b) {
        const T* src = in.row(b, ci) + k;
        if (stride == 1) {
          std::memcpy(dst, src, sizeof(T) * out_len);
        } else {
          for (int t = 0; t < out_len; ++t) dst[t] = src[static_cast<std::size_t>(t) * stride];
        }
        dst += out_len;
      }
    }
  }
}

// Accumulating products C += W * X with an arbitrary row stride on X. Every
// output column accumulates over k in ascending order with a bracketing that
// does not depend on the column's position, so a frame's result is the same
// wherever it sits in a batch, and the weight matrix streams once per call
// instead of once per item.

// Streaming variant: C rows are updated in place per k-block. Best when
// columns are few or k is very large relative to the column count.
template <typename T>
void invariant_gemm_stream(const T* w, const T* x, std::size_t ldx, T* c, int m_rows, int k_len,
                           int cols) {
  const int kb = cols >= 512 ? 192 : k_len;
  for (int k0 = 0; k0 < k_len; k0 += kb) {
    const int k1 = std::min(k_len, k0 + kb);
    int m = 0;
    for (; m + 4 <= m_rows; m += 4) {
      T* c0 = c + static_cast<std::size_t>(m) * cols;
      T* c1 = c0 + cols;
      T* c2 = c1 + cols;
      T* c3 = c2 + cols;
      const T* w0 = w + static_cast<std::size_t>(m) * k_len;
      const T* w1 = w0 + k_len;
      const T* w2 = w1 + k_len;
      const T* w3 = w2 + k_len;
      for (int k = k0; k < k1; ++k) {
        const T a0 = w0[k], a1 = w1[k], a2 = w2[k], a3 = w3[k];
        const T* xr = x + static_cast<std::size_t>(k) * ldx;
        for (int t = 0; t < cols; ++t) {
          const T xv = xr[t];
          c0[t] += a0 * xv;
          c1[t] += a1 * xv;
          c2[t] += a2 * xv;
          c3[t] += a3 * xv;
        }
      }
    }
    for (; m < m_rows; ++m) {
      T* cr = c + static_cast<std::size_t>(m) * cols;
      const T* wr = w + static_cast<std::size_t>(m) * k_len;
      for (int k = k0; k < k1; ++k) {
        const T a = wr[k];
        const T* xr = x + static_cast<std::size_t>(k) * ldx;
        for (int t = 0; t < cols; ++t) cr[t] += a * xr[t];
      }
    }
  }
}

// Register-tiled variant: 4 rows x up-to-32 columns accumulate across the
// whole k loop before touching C once. The short-tile path keeps the same
// bracketing as full tiles.
template <typename T>
void invariant_gemm_tiled(const T* w, const T* x, std::size_t ldx, T* c, int m_rows, int k_len,
                          int cols) {
  constexpr int kTile = 32;
  auto rows4 = [&](int m0, int rows) {
    for (int t = 0; t < cols; t += kTile) {
      const int tw = std::min(kTile, cols - t);
      T acc[4][kTile];
      for (int j = 0; j < rows; ++j)
        for (int u = 0; u < tw; ++u) acc[j][u] = T(0);
      for (int k = 0; k < k_len; ++k) {
        const T* xr = x + static_cast<std::size_t>(k) * ldx + t;
        if (tw == kTile && rows == 4) {
          const T a0 = w[static_cast<std::size_t>(m0) * k_len + k];
          const T a1 = w[static_cast<std::size_t>(m0 + 1) * k_len + k];
          const T a2 = w[static_cast<std::size_t>(m0 + 2) * k_len + k];
          const T a3 = w[static_cast<std::size_t>(m0 + 3) * k_len + k];
          for (int u = 0; u < kTile; ++u) {
            const T xv = xr[u];
            acc[0][u] += a0 * xv;
            acc[1][u] += a1 * xv;
            acc[2][u] += a2 * xv;
            acc[3][u] += a3 * xv;
          }
        } else {
          for (int j = 0; j < rows; ++j) {
            const T a = w[static_cast<std::size_t>(m0 + j) * k_len + k];
            for (int u = 0; u < tw; ++u) acc[j][u] += a * xr[u];
          }
        }
      }
      for (int j = 0; j < rows; ++j) {
        T* cr = c + static_cast<std::size_t>(m0 + j) * cols + t;
        for (int u = 0; u < tw; ++u) cr[u] += acc[j][u];
      }
    }
  };
  int m = 0;
  for (; m + 4 <= m_rows; m += 4) rows4(m, 4);
  if (m < m_rows) rows4(m, m_rows - m);
}

template <typename T>
void invariant_gemm_acc(const T* w, const T* x, std::size_t ldx, T* c, int m_rows, int k_len,
                        int cols) {
  // Shape heuristics from measurement: register tiling wins for moderate
  // column counts unless k dwarfs them.
  if (cols >= 64 && k_len >= 8 && static_cast<long>(cols) * 32 >= k_len)
    invariant_gemm_tiled(w, x, ldx, c, m_rows, k_len, cols);
  else
    invariant_gemm_stream(w, x, ldx, c, m_rows, k_len, cols);
}

template <typename T>
Tensor3<T> conv_forward(const Tensor3<T>& in, const ConvWeight<T>& w, const T* bias, int stride) {
  if (w.in_ch != in.channels) throw InvalidArgument("conv1d_valid: channel mismatch");
  if (w.kernel > in.length) throw InvalidArgument("conv1d_valid: kernel longer than input");
  if (stride <= 0) throw InvalidArgument("conv1d_valid: stride must be positive");

  const int out_len = (in.length - w.kernel) / stride + 1;
  const std::size_t cik = static_cast<std::size_t>(w.in_ch) * w.kernel;
  Tensor3<T> out(in.batch, w.out_ch, out_len);

  // A frame's output must not depend on its position within a batch, so every
  // product below accumulates each column over k in a fixed ascending order.
  //
  // Wide stride-1 layers skip im2col entirely: the convolution runs as
  // kernel_size accumulating products against shifted views of the input,
  // which stays cache-resident instead of being duplicated kernel_size times.
  if (out_len >= 64 && stride == 1) {
    // Repack weights as kernel-major (k, out, in) so each shift's weight
    // slice is contiguous.
    std::vector<T> wk(cik * static_cast<std::size_t>(w.out_ch));
    for (int k = 0; k < w.kernel; ++k)
      for (int co = 0; co < w.out_ch; ++co)
        for (int ci = 0; ci < w.in_ch; ++ci)
          wk[(static_cast<std::size_t>(k) * w.out_ch + co) * w.in_ch + ci] =
              w.data[(static_cast<std::size_t>(co) * w.in_ch + ci) * w.kernel + k];
    std::vector<T> prod(static_cast<std::size_t>(w.out_ch) * out_len);
    for (int b = 0; b < in.batch; ++b) {
      std::fill(prod.begin(), prod.end(), T(0));
      for (int k = 0; k < w.kernel; ++k)
        invariant_gemm_acc(wk.data() + static_cast<std::size_t>(k) * w.out_ch * w.in_ch,
                           in.row(b, 0) + k, static_cast<std::size_t>(in.length), prod.data(),
                           w.out_ch, w.in_ch, out_len);
      for (int co = 0; co < w.out_ch; ++co) {
        const T* src = prod.data() + static_cast<std::size_t>(co) * out_len;
        T* dst = out.row(b, co);
        const T add = bias ? bias[co] : T(0);
        for (int t = 0; t < out_len; ++t) dst[t] = src[t] + add;
      }
    }
  } else if (out_len >= 64) {
    // Wide strided layers gather patches per item; the scratch stays small.
    std::vector<T> col;
    std::vector<T> prod(static_cast<std::size_t>(w.out_ch) * out_len);
    for (int b = 0; b < in.batch; ++b) {
      im2col(in, w.kernel, stride, out_len, col, b, 1);
      std::fill(prod.begin(), prod.end(), T(0));
      invariant_gemm_acc(w.data, col.data(), static_cast<std::size_t>(out_len), prod.data(),
                         w.out_ch, static_cast<int>(cik), out_len);
      for (int co = 0; co < w.out_ch; ++co) {
        const T* src = prod.data() + static_cast<std::size_t>(co) * out_len;
        T* dst = out.row(b, co);
        const T add = bias ? bias[co] : T(0);
        for (int t = 0; t < out_len; ++t) dst[t] = src[t] + add;
      }
    }
  } else {
    // Narrow layers batch all items into one product so the weight matrix
    // streams once per call rather than once per item.
    const std::size_t cols = static_cast<std::size_t>(in.batch) * out_len;
    std::vector<T> col;
    im2col(in, w.kernel, stride, out_len, col);
    std::vector<T> prod(static_cast<std::size_t>(w.out_ch) * cols, T(0));
    invariant_gemm_acc(w.data, col.data(), cols, prod.data(), w.out_ch, static_cast<int>(cik),
                       static_cast<int>(cols));
    for (int b = 0; b < in.batch; ++b) {
      for (int co = 0; co < w.out_ch; ++co) {
        const T* src = prod.data() + static_cast<std::size_t>(co) * cols +
                       static_cast<std::size_t>(b) * out_len;
        T* dst = out.row(b, co);
        const T add = bias ? bias[co] : T(0);
        for (int t = 0; t < out_len; ++t) dst[t] = src[t] + add;
      }
    }
  }
  return out;
}

// Accumulates dW into dw/dbias and returns dInput.
template <typename T>
Tensor3<T> conv_backward(const Tensor3<T>& in, const ConvWeight<T>& w, const Tensor3<T>& dout,
                         int stride, T* dw, T* dbias) {
  const int out_len = dout.length;
  const std::size_t cik = static_cast<std::size_t>(w.in_ch) * w.kernel;
  const std::size_t cols = static_cast<std::size_t>(in.batch) * out_len;

  for (int co = 0; co < w.out_ch; ++co) {
    T acc = T(0);
    for (int b = 0; b < in.batch; ++b) {
      const T* dy = dout.row(b, co);
      for (int t = 0; t < out_len; ++t) acc += dy[t];
    }
    dbias[co] += acc;
  }

  // Flatten dout to (out_ch x cols), batch-major columns.
  std::vector<T> dmat(static_cast<std::size_t>(w.out_ch) * cols);
  for (int b = 0; b < in.batch; ++b)
    for (int co = 0; co < w.out_ch; ++co)
      std::memcpy(dmat.data() + static_cast<std::size_t>(co) * cols +
                      static_cast<std::size_t>(b) * out_len,
                  dout.row(b, co), sizeof(T) * out_len);

  std::vector<T> col;
  im2col(in, w.kernel, stride, out_len, col);
  {
    ConstMapRM<T> dy(dmat.data(), w.out_ch, static_cast<Eigen::Index>(cols));
    ConstMapRM<T> x(col.data(), static_cast<Eigen::Index>(cik), static_cast<Eigen::Index>(cols));
    MapRM<T> dwm(dw, w.out_ch, static_cast<Eigen::Index>(cik));
    dwm.noalias() += dy * x.transpose();
  }

  std::vector<T> dcol(cik * cols);
  {
    ConstMapRM<T> wm(w.data, w.out_ch, static_cast<Eigen::Index>(cik));
    ConstMapRM<T> dy(dmat.data(), w.out_ch, static_cast<Eigen::Index>(cols));
    MapRM<T> dc(dcol.data(), static_cast<Eigen::Index>(cik), static_cast<Eigen::Index>(cols));
    dc.noalias() = wm.transpose() * dy;
  }

  Tensor3<T> din(in.batch, in.channels, in.length);
  for (int ci = 0; ci < in.channels; ++ci)
    for (int k = 0; k < w.kernel; ++k) {
      const T* src = dcol.data() + (static_cast<std::size_t>(ci) * w.kernel + k) * cols;
      for (int b = 0; b < in.batch; ++b) {
        T* dst = din.row(b, ci) + k;
        if (stride == 1) {
          for (int t = 0; t < out_len; ++t) dst[t] += src[t];
        } else {
          for (int t = 0; t < out_len; ++t) dst[static_cast<std::size_t>(t) * stride] += src[t];
        }
        src += out_len;
      }
    }
  return din;
}

}  // namespace detail

// Valid (unpadded) 1-D cross-correlation. kernel is (out_ch, in_ch, k);
// output length is (L - k)/stride + 1.
template <typename T>
Tensor3<T> conv1d_valid(const Tensor3<T>& in, const Tensor3<T>& kernel,
                        const std::vector<T>& bias, int stride = 1) {
  if (!bias.empty() && static_cast<int>(bias.size()) != kernel.batch)
    throw InvalidArgument("conv1d_valid: bias size mismatch");
  detail::ConvWeight<T> w{kernel.data.data(), kernel.batch, kernel.channels, kernel.length};
  return detail::conv_forward(in, w, bias.empty() ? nullptr : bias.data(), stride);
}

template <typename T>
Tensor3<T> relu(const Tensor3<T>& in) {
  Tensor3<T> out = in;
  for (T& v : out.data)
    if (v < T(0)) v = T(0);
  return out;
}

// Per-item statistics of layer normalization, kept for the backward pass.
template <typename T>
struct NormStats {
  std::vector<T> mean;
  std::vector<T> inv_std;
};

// Normalizes each batch item over (channels x length) to zero mean and unit
// variance (epsilon 1e-5 inside the square root), then applies a per-channel
// affine map.
template <typename T>
Tensor3<T> layer_norm(const Tensor3<T>& in, const std::vector<T>& gain,
                      const std::vector<T>& shift, NormStats<T>* stats = nullptr) {
  if (static_cast<int>(gain.size()) != in.channels ||
      static_cast<int>(shift.size()) != in.channels)
    throw InvalidArgument("layer_norm: gain/shift must have one value per channel");
  const std::size_t n = static_cast<std::size_t>(in.channels) * in.length;
  Tensor3<T> out(in.batch, in.channels, in.length);
  if (stats) {
    stats->mean.assign(in.batch, T(0));
    stats->inv_std.assign(in.batch, T(0));
  }
  for (int b = 0; b < in.batch; ++b) {
    const T* x = in.row(b, 0);
    // Statistics accumulate in double (so constant input cancels exactly)
    // across eight stripes to break the serial dependence; the stripes reduce
    // in a fixed order.
    double sum_s[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    double sq_s[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    const std::size_t n8 = n - n % 8;
    for (std::size_t i = 0; i < n8; i += 8) {
      for (int j = 0; j < 8; ++j) {
        const double v = static_cast<double>(x[i + static_cast<std::size_t>(j)]);
        sum_s[j] += v;
        sq_s[j] += v * v;
      }
    }
    double sum = 0.0, sq = 0.0;
    for (int j = 0; j < 8; ++j) {
      sum += sum_s[j];
      sq += sq_s[j];
    }
    for (std::size_t i = n8; i < n; ++i) {
      const double v = static_cast<double>(x[i]);
      sum += v;
      sq += v * v;
    }
    const T mean = static_cast<T>(sum / static_cast<double>(n));
    double var = sq / static_cast<double>(n) -
                 (sum / static_cast<double>(n)) * (sum / static_cast<double>(n));
    if (var < 0.0) var = 0.0;
    const T inv_std = static_cast<T>(1.0 / std::sqrt(var + 1e-5));
    if (stats) {
      stats->mean[b] = mean;
      stats->inv_std[b] = inv_std;
    }
    for (int c = 0; c < in.channels; ++c) {
      const T* xr = in.row(b, c);
      T* yr = out.row(b, c);
      const T g = gain[c], s = shift[c];
      for (int l = 0; l < in.length; ++l) yr[l] = (xr[l] - mean) * inv_std * g + s;
    }
  }
  return out;
}

// Max pooling; when arg is non-null it receives the input index of each
// selected maximum (first occurrence wins on ties).
template <typename T>
Tensor3<T> max_pool1d(const Tensor3<T>& in, int size, int stride,
                      std::vector<int>* arg = nullptr) {
  if (size <= 0 || stride <= 0) throw InvalidArgument("max_pool1d: bad size/stride");
  if (size > in.length) throw InvalidArgument("max_pool1d: pool longer than input");
  const int out_len = (in.length - size) / stride + 1;
  Tensor3<T> out(in.batch, in.channels, out_len);
  if (arg) arg->assign(out.size(), 0);
  for (int b = 0; b < in.batch; ++b) {
    for (int c = 0; c < in.channels; ++c) {
      const T* x = in.row(b, c);
      T* y = out.row(b, c);
      int* a = arg ? arg->data() + (static_cast<std::size_t>(b) * in.channels + c) * out_len
                   : nullptr;
      for (int t = 0; t < out_len; ++t) {
        int best = t * stride;
        T v = x[best];
        for (int k = 1; k < size; ++k) {
          const int j = t * stride + k;
          if (x[j] > v) {
            v = x[j];
            best = j;
          }
        }
        y[t] = v;
        if (a) a[t] = best;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Network: forward/backward over a flat parameter vector
// ---------------------------------------------------------------------------

struct ParamEntry {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Canonical flat layout for a given architecture. Serialization order and the
// optimizer's view of the weights both follow it.
struct ParamLayout {
  std::vector<ParamEntry> entries;
  std::size_t total = 0;

  static ParamLayout for_config(const ArchitectureConfig& cfg) {
    ParamLayout lay;
    auto add = [&lay](const std::string& name, std::vector<std::uint32_t> dims) {
      ParamEntry e;
      e.name = name;
      e.dims = std::move(dims);
      e.size = 1;
      for (std::uint32_t d : e.dims) e.size *= d;
      e.offset = lay.total;
      lay.total += e.size;
      lay.entries.push_back(std::move(e));
    };
    for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
      const ConvBlockConfig& b = cfg.blocks[i];
      const std::string p = "block" + std::to_string(i);
      add(p + ".conv.weight",
          {static_cast<std::uint32_t>(b.out_channels),
           static_cast<std::uint32_t>(b.in_channels),
           static_cast<std::uint32_t>(b.kernel_size)});
      add(p + ".conv.bias", {static_cast<std::uint32_t>(b.out_channels)});
      add(p + ".norm.gain", {static_cast<std::uint32_t>(b.out_channels)});
      add(p + ".norm.shift", {static_cast<std::uint32_t>(b.out_channels)});
    }
    add("head.weight", {static_cast<std::uint32_t>(cfg.output_bins),
                        static_cast<std::uint32_t>(cfg.blocks.back().out_channels),
                        static_cast<std::uint32_t>(cfg.head_kernel)});
    add("head.bias", {static_cast<std::uint32_t>(cfg.output_bins)});
    return lay;
  }
};

template <typename T>
class Network {
 public:
  explicit Network(const ArchitectureConfig& cfg)
      : cfg_(cfg), layout_(ParamLayout::for_config(cfg)) {
    cfg_.validate();
    theta_.assign(layout_.total, T(0));
  }

  const ArchitectureConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return layout_; }
  std::vector<T>& weights() { return theta_; }
  const std::vector<T>& weights() const { return theta_; }

  // Torch-style uniform initialization scaled by fan-in.
  void init(Rng& rng) {
    std::size_t li = 0;
    for (const ConvBlockConfig& b : cfg_.blocks) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(b.in_channels) * b.kernel_size);
      fill_uniform(layout_.entries[li++], rng, bound);  // weight
      fill_uniform(layout_.entries[li++], rng, bound);  // bias
      fill_const(layout_.entries[li++], T(1));          // gain
      fill_const(layout_.entries[li++], T(0));          // shift
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.blocks.back().out_channels) *
                                         cfg_.head_kernel);
    fill_uniform(layout_.entries[li++], rng, bound);
    fill_uniform(layout_.entries[li++], rng, bound);
  }

  NetworkParams to_params() const {
    NetworkParams out;
    for (const ParamEntry& e : layout_.entries) {
      NamedTensor t;
      t.name = e.name;
      t.dims = e.dims;
      t.values.resize(e.size);
      for (std::size_t i = 0; i < e.size; ++i)
        t.values[i] = static_cast<float>(theta_[e.offset + i]);
      out.tensors.push_back(std::move(t));
    }
    return out;
  }

  void from_params(const NetworkParams& p) {
    if (p.tensors.size() != layout_.entries.size())
      throw FormatError("weights do not match architecture: tensor count");
    for (std::size_t i = 0; i < p.tensors.size(); ++i) {
      const NamedTensor& t = p.tensors[i];
      const ParamEntry& e = layout_.entries[i];
      if (t.name != e.name || t.dims != e.dims)
        throw FormatError("weights do not match architecture: " + t.name);
      for (std::size_t k = 0; k < e.size; ++k) theta_[e.offset + k] = static_cast<T>(t.values[k]);
    }
  }

  struct Cache {
    // inputs[i] is the tensor entering block i; inputs[blocks] feeds the head.
    std::vector<Tensor3<T>> inputs;
    std::vector<Tensor3<T>> conv_out;   // pre-activation per block
    std::vector<Tensor3<T>> norm_in;    // relu output per block
    std::vector<NormStats<T>> stats;
    std::vector<std::vector<int>> pool_arg;
  };

  // Maps a batch of analysis windows (batch, in_ch, window) to logits
  // (batch, output_bins, 1). Deterministic; expects raw, unnormalized audio.
  Tensor3<T> forward(const Tensor3<T>& input, Cache* cache = nullptr) const {
    if (input.length != cfg_.window_size)
      throw InvalidArgument("forward: expected window of " + std::to_string(cfg_.window_size) +
                            " samples, got " + std::to_string(input.length));
    if (input.channels != cfg_.blocks.front().in_channels)
      throw InvalidArgument("forward: wrong input channel count");
    const std::size_t nb = cfg_.blocks.size();
    if (cache) {
      cache->inputs.resize(nb + 1);
      cache->conv_out.resize(nb);
      cache->norm_in.resize(nb);
      cache->stats.resize(nb);
      cache->pool_arg.assign(nb, {});
    }
    Tensor3<T> x = input;
    for (std::size_t i = 0; i < nb; ++i) {
      const ConvBlockConfig& b = cfg_.blocks[i];
      if (cache) cache->inputs[i] = x;
      Tensor3<T> conv = detail::conv_forward(x, weight_view(i), ptr(block_entry(i, 1)), b.stride);
      Tensor3<T> act = relu(conv);
      if (cache) cache->conv_out[i] = std::move(conv);
      NormStats<T> st;
      Tensor3<T> normed = layer_norm(act, vec_of(block_entry(i, 2)), vec_of(block_entry(i, 3)),
                                     cache ? &st : nullptr);
      if (cache) {
        cache->norm_in[i] = std::move(act);
        cache->stats[i] = std::move(st);
      }
      if (b.pool_size > 0) {
        std::vector<int> arg;
        x = max_pool1d(normed, b.pool_size, b.pool_stride, cache ? &arg : nullptr);
        if (cache) cache->pool_arg[i] = std::move(arg);
      } else {
        x = std::move(normed);
      }
    }
    if (cache) cache->inputs[nb] = x;
    return detail::conv_forward(x, head_weight_view(), ptr(head_entry(1)), 1);
  }

  // Accumulates parameter gradients into grad (size layout().total) given
  // d(loss)/d(logits) with the cache of the matching forward call.
  void backward(const Cache& cache, const Tensor3<T>& dlogits, std::vector<T>& grad) const {
    if (grad.size() != layout_.total) throw InvalidArgument("backward: bad gradient buffer");
    const std::size_t nb = cfg_.blocks.size();
    Tensor3<T> dx = detail::conv_backward(cache.inputs[nb], head_weight_view(), dlogits, 1,
                                          grad.data() + head_entry(0).offset,
                                          grad.data() + head_entry(1).offset);
    for (std::size_t ii = nb; ii-- > 0;) {
      const ConvBlockConfig& b = cfg_.blocks[ii];
      Tensor3<T> dnorm;
      if (b.pool_size > 0) {
        const Tensor3<T>& shape = cache.norm_in[ii];
        dnorm = Tensor3<T>(shape.batch, shape.channels, shape.length);
        const int out_len = dx.length;
        for (int bb = 0; bb < dx.batch; ++bb)
          for (int c = 0; c < dx.channels; ++c) {
            const T* dy = dx.row(bb, c);
            T* di = dnorm.row(bb, c);
            const int* a = cache.pool_arg[ii].data() +
                           (static_cast<std::size_t>(bb) * dx.channels + c) * out_len;
            for (int t = 0; t < out_len; ++t) di[a[t]] += dy[t];
          }
      } else {
        dnorm = std::move(dx);
      }
      Tensor3<T> dact = norm_backward(ii, cache, dnorm, grad);
      const Tensor3<T>& conv = cache.conv_out[ii];
      for (std::size_t k = 0; k < dact.data.size(); ++k)
        if (conv.data[k] <= T(0)) dact.data[k] = T(0);
      dx = detail::conv_backward(cache.inputs[ii], weight_view(ii), dact, b.stride,
                                 grad.data() + block_entry(ii, 0).offset,
                                 grad.data() + block_entry(ii, 1).offset);
    }
  }

 private:
  const ParamEntry& block_entry(std::size_t block, int which) const {
    return layout_.entries[block * 4 + which];
  }
  const ParamEntry& head_entry(int which) const {
    return layout_.entries[cfg_.blocks.size() * 4 + which];
  }
  const T* ptr(const ParamEntry& e) const { return theta_.data() + e.offset; }

  detail::ConvWeight<T> weight_view(std::size_t block) const {
    const ConvBlockConfig& b = cfg_.blocks[block];
    return {ptr(block_entry(block, 0)), b.out_channels, b.in_channels, b.kernel_size};
  }
  detail::ConvWeight<T> head_weight_view() const {
    return {ptr(head_entry(0)), cfg_.output_bins, cfg_.blocks.back().out_channels,
            cfg_.head_kernel};
  }
  std::vector<T> vec_of(const ParamEntry& e) const {
    return std::vector<T>(theta_.begin() + e.offset, theta_.begin() + e.offset + e.size);
  }

  void fill_uniform(const ParamEntry& e, Rng& rng, double bound) {
    for (std::size_t i = 0; i < e.size; ++i)
      theta_[e.offset + i] = static_cast<T>(rng.uniform(-bound, bound));
  }
  void fill_const(const ParamEntry& e, T v) {
    for (std::size_t i = 0; i < e.size; ++i) theta_[e.offset + i] = v;
  }

  // Layer-norm backward; accumulates gain/shift grads, returns d(input).
  Tensor3<T> norm_backward(std::size_t block, const Cache& cache, const Tensor3<T>& dy,
                           std::vector<T>& grad) const {
    const Tensor3<T>& x = cache.norm_in[block];
    const NormStats<T>& st = cache.stats[block];
    const T* gain = ptr(block_entry(block, 2));
    const ParamEntry& ge = block_entry(block, 2);
    const ParamEntry& se = block_entry(block, 3);
    const std::size_t n = static_cast<std::size_t>(x.channels) * x.length;
    Tensor3<T> dx(x.batch, x.channels, x.length);
    for (int b = 0; b < x.batch; ++b) {
      const T mean = st.mean[b], istd = st.inv_std[b];
      T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
      for (int c = 0; c < x.channels; ++c) {
        const T* xr = x.row(b, c);
        const T* dyr = dy.row(b, c);
        const T g = gain[c];
        T acc_dy = T(0), acc_dyx = T(0);
        for (int l = 0; l < x.length; ++l) {
          const T xhat = (xr[l] - mean) * istd;
          const T dxhat = dyr[l] * g;
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
          acc_dy += dyr[l];
          acc_dyx += dyr[l] * xhat;
        }
        grad[ge.offset + c] += acc_dyx;
        grad[se.offset + c] += acc_dy;
      }
      const T inv_n = T(1) / static_cast<T>(n);
      for (int c = 0; c < x.channels; ++c) {
        const T* xr = x.row(b, c);
        const T* dyr = dy.row(b, c);
        T* dxr = dx.row(b, c);
        const T g = gain[c];
        for (int l = 0; l < x.length; ++l) {
          const T xhat = (xr[l] - mean) * istd;
          dxr[l] = istd * (dyr[l] * g - inv_n * sum_dxhat - xhat * inv_n * sum_dxhat_xhat);
        }
      }
    }
    return dx;
  }

  ArchitectureConfig cfg_;
  ParamLayout layout_;
  std::vector<T> theta_;
};

}  // namespace pnpe
