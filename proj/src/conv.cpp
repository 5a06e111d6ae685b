#include <cstring>
#include <stdexcept>
#include <string>

#include "camloc/net.hpp"

namespace camloc {
namespace {

struct ConvDims {
  int c, h, w;
  int oc, kh, kw;
  int oh, ow;
  int kdim;  // c*kh*kw
  int nout;  // oh*ow
};

ConvDims check_conv_args(const Tensor& input, const Tensor& weights, const Tensor& bias,
                         int stride, int pad_h, int pad_w) {
  if (input.rank() != 3)
    throw std::invalid_argument("conv2d: input must be CxHxW, got " + input.shape_string());
  if (weights.rank() != 4)
    throw std::invalid_argument("conv2d: weights must be [oc,ic,kh,kw], got " +
                                weights.shape_string());
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (pad_h < 0 || pad_w < 0) throw std::invalid_argument("conv2d: pad must be >= 0");

  ConvDims d;
  d.c = input.dim(0);
  d.h = input.dim(1);
  d.w = input.dim(2);
  d.oc = weights.dim(0);
  d.kh = weights.dim(2);
  d.kw = weights.dim(3);
  if (weights.dim(1) != d.c)
    throw std::invalid_argument("conv2d: input channels " + std::to_string(d.c) +
                                " do not match weight channels " + std::to_string(weights.dim(1)));
  if (bias.rank() != 1 || bias.dim(0) != d.oc)
    throw std::invalid_argument("conv2d: bias length " + std::to_string(bias.size()) +
                                " does not match output channels " + std::to_string(d.oc));
  if (d.h + 2 * pad_h < d.kh || d.w + 2 * pad_w < d.kw)
    throw std::invalid_argument("conv2d: kernel " + std::to_string(d.kh) + "x" +
                                std::to_string(d.kw) + " exceeds padded input " +
                                std::to_string(d.h + 2 * pad_h) + "x" +
                                std::to_string(d.w + 2 * pad_w));
  d.oh = (d.h + 2 * pad_h - d.kh) / stride + 1;
  d.ow = (d.w + 2 * pad_w - d.kw) / stride + 1;
  d.kdim = d.c * d.kh * d.kw;
  d.nout = d.oh * d.ow;
  return d;
}

// col[(ic,ky,kx), (oy,ox)] = padded input value. The row order (ic,ky,kx)
// fixes the channel-outer, row-major accumulation order of the GEMM.
void im2col(const Tensor& input, const ConvDims& d, int stride, int pad_h, int pad_w,
            double* col) {
  const double* in = input.data();
  double* out = col;
  for (int ic = 0; ic < d.c; ++ic) {
    const double* plane = in + static_cast<std::size_t>(ic) * d.h * d.w;
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx) {
        for (int oy = 0; oy < d.oh; ++oy) {
          const int iy = oy * stride - pad_h + ky;
          if (iy < 0 || iy >= d.h) {
            std::memset(out, 0, sizeof(double) * d.ow);
            out += d.ow;
            continue;
          }
          const double* row = plane + static_cast<std::size_t>(iy) * d.w;
          if (stride == 1) {
            const int ix0 = -pad_w + kx;
            int ox = 0;
            for (; ox < d.ow && ix0 + ox < 0; ++ox) out[ox] = 0.0;
            int valid_end = d.ow;
            while (valid_end > ox && ix0 + valid_end - 1 >= d.w) --valid_end;
            if (valid_end > ox)
              std::memcpy(out + ox, row + ix0 + ox, sizeof(double) * (valid_end - ox));
            for (ox = valid_end; ox < d.ow; ++ox) out[ox] = 0.0;
          } else {
            for (int ox = 0; ox < d.ow; ++ox) {
              const int ix = ox * stride - pad_w + kx;
              out[ox] = (ix < 0 || ix >= d.w) ? 0.0 : row[ix];
            }
          }
          out += d.ow;
        }
      }
    }
  }
}

// Scatter-add of a column buffer back into input coordinates.
void col2im(const double* col, const ConvDims& d, int stride, int pad_h, int pad_w,
            Tensor& grad_input) {
  double* gin = grad_input.data();
  const double* src = col;
  for (int ic = 0; ic < d.c; ++ic) {
    double* plane = gin + static_cast<std::size_t>(ic) * d.h * d.w;
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx) {
        for (int oy = 0; oy < d.oh; ++oy) {
          const int iy = oy * stride - pad_h + ky;
          if (iy < 0 || iy >= d.h) {
            src += d.ow;
            continue;
          }
          double* row = plane + static_cast<std::size_t>(iy) * d.w;
          for (int ox = 0; ox < d.ow; ++ox) {
            const int ix = ox * stride - pad_w + kx;
            if (ix >= 0 && ix < d.w) row[ix] += src[ox];
          }
          src += d.ow;
        }
      }
    }
  }
}

void transpose(const double* src, int rows, int cols, double* dst) {
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
    }
  }
}

bool is_pointwise(const ConvDims& d, int stride, int pad_h, int pad_w) {
  return d.kh == 1 && d.kw == 1 && stride == 1 && pad_h == 0 && pad_w == 0;
}

}  // namespace

Tensor conv2d_forward_hw(const Tensor& input, const Tensor& weights, const Tensor& bias,
                         int stride, int pad_h, int pad_w, const kernels::Backend& backend,
                         ConvScratch* scratch) {
  const ConvDims d = check_conv_args(input, weights, bias, stride, pad_h, pad_w);
  Tensor out({d.oc, d.oh, d.ow});

  const double* col;
  ConvScratch local;
  ConvScratch& ws = scratch ? *scratch : local;
  if (is_pointwise(d, stride, pad_h, pad_w)) {
    col = input.data();  // 1x1/stride-1/no-pad: the input already is the column matrix
  } else {
    ws.col.resize(static_cast<std::size_t>(d.kdim) * d.nout);
    im2col(input, d, stride, pad_h, pad_w, ws.col.data());
    col = ws.col.data();
  }
  backend.gemm_nn(weights.data(), col, out.data(), d.oc, d.kdim, d.nout, bias.data(), false);
  return out;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride,
                      int pad, const kernels::Backend& backend, ConvScratch* scratch) {
  return conv2d_forward_hw(input, weights, bias, stride, pad, pad, backend, scratch);
}

Tensor conv2d_backward_acc(const Tensor& grad_out, const Tensor& cached_input,
                           const Tensor& weights, int stride, int pad_h, int pad_w,
                           Tensor& grad_weights_acc, Tensor& grad_bias_acc, bool need_grad_input,
                           const kernels::Backend& backend, ConvScratch* scratch) {
  if (cached_input.empty())
    throw std::invalid_argument("conv2d_backward: missing forward input cache");
  const ConvDims d = check_conv_args(cached_input, weights, grad_bias_acc, stride, pad_h, pad_w);
  if (grad_out.rank() != 3 || grad_out.dim(0) != d.oc || grad_out.dim(1) != d.oh ||
      grad_out.dim(2) != d.ow)
    throw std::invalid_argument("conv2d_backward: grad_out shape " + grad_out.shape_string() +
                                " does not match forward output [" + std::to_string(d.oc) + "x" +
                                std::to_string(d.oh) + "x" + std::to_string(d.ow) + "]");
  if (!grad_weights_acc.same_shape(weights))
    throw std::invalid_argument("conv2d_backward: grad_weights shape mismatch");

  ConvScratch local;
  ConvScratch& ws = scratch ? *scratch : local;

  // Bias gradient: plain row sums of grad_out.
  for (int oc = 0; oc < d.oc; ++oc) {
    const double* row = grad_out.data() + static_cast<std::size_t>(oc) * d.nout;
    double acc = 0.0;
    for (int j = 0; j < d.nout; ++j) acc += row[j];
    grad_bias_acc[oc] += acc;
  }

  // Weight gradient: gW[oc,kd] += sum_n gout[oc,n] * col[kd,n], computed
  // against the transposed column matrix so the n-reduction stays sequential
  // per element.
  const bool pointwise = is_pointwise(d, stride, pad_h, pad_w);
  const double* col;
  if (pointwise) {
    col = cached_input.data();
  } else {
    ws.col.resize(static_cast<std::size_t>(d.kdim) * d.nout);
    im2col(cached_input, d, stride, pad_h, pad_w, ws.col.data());
    col = ws.col.data();
  }
  ws.col_t.resize(static_cast<std::size_t>(d.kdim) * d.nout);
  transpose(col, d.kdim, d.nout, ws.col_t.data());
  backend.gemm_nn(grad_out.data(), ws.col_t.data(), grad_weights_acc.data(), d.oc, d.nout, d.kdim,
                  nullptr, true);

  Tensor grad_input;
  if (need_grad_input) {
    grad_input = Tensor({d.c, d.h, d.w});
    if (pointwise) {
      backend.gemm_tn(weights.data(), grad_out.data(), grad_input.data(), d.kdim, d.oc, d.nout);
    } else {
      ws.dcol.resize(static_cast<std::size_t>(d.kdim) * d.nout);
      backend.gemm_tn(weights.data(), grad_out.data(), ws.dcol.data(), d.kdim, d.oc, d.nout);
      col2im(ws.dcol.data(), d, stride, pad_h, pad_w, grad_input);
    }
  }
  return grad_input;
}

ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& cached_input,
                          const Tensor& weights, int stride, int pad, bool need_grad_input,
                          const kernels::Backend& backend, ConvScratch* scratch) {
  ConvGrads g;
  g.grad_weights = Tensor(weights.shape());
  g.grad_bias = Tensor({weights.dim(0)});
  g.grad_input = conv2d_backward_acc(grad_out, cached_input, weights, stride, pad, pad,
                                     g.grad_weights, g.grad_bias, need_grad_input, backend,
                                     scratch);
  return g;
}

}  // namespace camloc
