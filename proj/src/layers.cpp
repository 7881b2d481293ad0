#include <algorithm>

#include "mamlcon/nncore.hpp"

namespace mamlcon {

std::size_t ClassMask::count() const { return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), true)); }

bool ClassMask::subset_of(const ClassMask& other) const {
  if (other.size() != size()) return false;
  for (std::size_t i = 0; i < size(); ++i)
    if (bits_[i] && !other.bits_[i]) return false;
  return true;
}

std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t stride) {
  if (stride == 0) throw ShapeError("convolution stride must be positive");
  if (kernel > input)
    throw ShapeError("kernel extent " + std::to_string(kernel) + " exceeds input extent " + std::to_string(input));
  return (input - kernel) / stride + 1;
}

namespace {

struct ConvDims {
  std::size_t c_in, h, w, c_out, kh, kw, oh, ow;
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernels, std::size_t stride) {
  if (input.rank() != 3) throw ShapeError("conv2d input must be [C,H,W], got " + shape_to_string(input.shape()));
  if (kernels.rank() != 4)
    throw ShapeError("conv2d kernels must be [C_out,C_in,kH,kW], got " + shape_to_string(kernels.shape()));
  if (kernels.dim(1) != input.dim(0))
    throw ShapeError("conv2d channel mismatch: input " + shape_to_string(input.shape()) + ", kernels " +
                     shape_to_string(kernels.shape()));
  ConvDims d{input.dim(0), input.dim(1), input.dim(2), kernels.dim(0), kernels.dim(2), kernels.dim(3), 0, 0};
  d.oh = conv_output_extent(d.h, d.kh, stride);
  d.ow = conv_output_extent(d.w, d.kw, stride);
  return d;
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride) {
  const auto d = conv_dims(input, kernels, stride);
  if (bias.size() != d.c_out)
    throw ShapeError("conv2d bias has " + std::to_string(bias.size()) + " entries, expected " +
                     std::to_string(d.c_out));
  Tensor out({d.c_out, d.oh, d.ow});
  const auto in = input.data();
  const auto k = kernels.data();
  auto o = out.data();
  for (std::size_t co = 0; co < d.c_out; ++co) {
    for (std::size_t y = 0; y < d.oh; ++y) {
      for (std::size_t x = 0; x < d.ow; ++x) {
        double acc = bias[co];
        for (std::size_t ci = 0; ci < d.c_in; ++ci) {
          const double* kp = &k[((co * d.c_in + ci) * d.kh) * d.kw];
          const double* ip = &in[(ci * d.h + y * stride) * d.w + x * stride];
          for (std::size_t ky = 0; ky < d.kh; ++ky)
            for (std::size_t kx = 0; kx < d.kw; ++kx) acc += kp[ky * d.kw + kx] * ip[ky * d.w + kx];
        }
        o[(co * d.oh + y) * d.ow + x] = acc;
      }
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels, std::size_t stride, const Tensor& doutput) {
  const auto d = conv_dims(input, kernels, stride);
  if (doutput.shape() != Shape{d.c_out, d.oh, d.ow})
    throw ShapeError("conv2d upstream gradient " + shape_to_string(doutput.shape()) + " does not match output [" +
                     std::to_string(d.c_out) + "," + std::to_string(d.oh) + "," + std::to_string(d.ow) + "]");
  Conv2dGrads g{Tensor(input.shape()), Tensor(kernels.shape()), Tensor({d.c_out})};
  const auto in = input.data();
  const auto k = kernels.data();
  const auto go = doutput.data();
  auto gi = g.dinput.data();
  auto gk = g.dkernels.data();
  auto gb = g.dbias.data();
  for (std::size_t co = 0; co < d.c_out; ++co) {
    for (std::size_t y = 0; y < d.oh; ++y) {
      for (std::size_t x = 0; x < d.ow; ++x) {
        const double up = go[(co * d.oh + y) * d.ow + x];
        if (up == 0.0) continue;
        gb[co] += up;
        for (std::size_t ci = 0; ci < d.c_in; ++ci) {
          const std::size_t kbase = ((co * d.c_in + ci) * d.kh) * d.kw;
          const std::size_t ibase = (ci * d.h + y * stride) * d.w + x * stride;
          for (std::size_t ky = 0; ky < d.kh; ++ky) {
            for (std::size_t kx = 0; kx < d.kw; ++kx) {
              gk[kbase + ky * d.kw + kx] += up * in[ibase + ky * d.w + kx];
              gi[ibase + ky * d.w + kx] += up * k[kbase + ky * d.kw + kx];
            }
          }
        }
      }
    }
  }
  return g;
}

Tensor dense_forward(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.rank() != 2 || weight.rank() != 2 || weight.dim(1) != input.dim(1))
    throw ShapeError("dense: input " + shape_to_string(input.shape()) + " incompatible with weight " +
                     shape_to_string(weight.shape()));
  const std::size_t batch = input.dim(0), n_in = input.dim(1), n_out = weight.dim(0);
  if (bias.size() != n_out) throw ShapeError("dense: bias size does not match weight rows");
  Tensor out({batch, n_out});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* x = &input.data()[b * n_in];
    for (std::size_t o = 0; o < n_out; ++o) {
      const double* wr = &weight.data()[o * n_in];
      double acc = bias[o];
      for (std::size_t i = 0; i < n_in; ++i) acc += wr[i] * x[i];
      out[b * n_out + o] = acc;
    }
  }
  return out;
}

DenseGrads dense_backward(const Tensor& input, const Tensor& weight, const Tensor& doutput) {
  const std::size_t batch = input.dim(0), n_in = input.dim(1), n_out = weight.dim(0);
  if (doutput.shape() != Shape{batch, n_out})
    throw ShapeError("dense: upstream gradient " + shape_to_string(doutput.shape()) + " does not match [" +
                     std::to_string(batch) + "," + std::to_string(n_out) + "]");
  DenseGrads g{Tensor(input.shape()), Tensor(weight.shape()), Tensor({n_out})};
  for (std::size_t b = 0; b < batch; ++b) {
    const double* x = &input.data()[b * n_in];
    double* gx = &g.dinput.data()[b * n_in];
    for (std::size_t o = 0; o < n_out; ++o) {
      const double up = doutput[b * n_out + o];
      if (up == 0.0) continue;
      g.dbias[o] += up;
      double* gw = &g.dweight.data()[o * n_in];
      const double* wr = &weight.data()[o * n_in];
      for (std::size_t i = 0; i < n_in; ++i) {
        gw[i] += up * x[i];
        gx[i] += up * wr[i];
      }
    }
  }
  return g;
}

Tensor relu_forward(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& forward_input, const Tensor& doutput) {
  if (forward_input.shape() != doutput.shape()) throw ShapeError("relu: gradient shape mismatch");
  Tensor out(doutput.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward_input[i] > 0.0 ? doutput[i] : 0.0;
  return out;
}

}  // namespace mamlcon
