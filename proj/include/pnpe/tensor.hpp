#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "pnpe/common.hpp"

namespace pnpe {

// Dense (batch, channels, length) tensor, row-major with length fastest.
template <typename T>
struct Tensor3 {
  int batch = 0;
  int channels = 0;
  int length = 0;
  std::vector<T> data;

  Tensor3() = default;
  Tensor3(int b, int c, int l) : batch(b), channels(c), length(l) {
    if (b < 0 || c < 0 || l < 0) throw InvalidArgument("Tensor3: negative dimension");
    data.assign(static_cast<std::size_t>(b) * c * l, T(0));
  }

  std::size_t size() const { return data.size(); }

  T* row(int b, int c) {
    return data.data() + (static_cast<std::size_t>(b) * channels + c) * length;
  }
  const T* row(int b, int c) const {
    return data.data() + (static_cast<std::size_t>(b) * channels + c) * length;
  }

  T& at(int b, int c, int l) { return row(b, c)[l]; }
  T at(int b, int c, int l) const { return row(b, c)[l]; }

  bool finite() const {
    for (const T& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename U>
  Tensor3<U> cast() const {
    Tensor3<U> out(batch, channels, length);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

}  // namespace pnpe
