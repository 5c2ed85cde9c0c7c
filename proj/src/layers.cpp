#include "mti/layers.hpp"

#include <cmath>
#include <limits>

namespace mti::layers {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Matrix activate(Matrix z, Activation act) {
  switch (act) {
    case Activation::none: break;
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::sigmoid: z = z.unaryExpr([](double v) { return sigmoid(v); }); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
  }
  return z;
}

// Gradient through the activation, expressed in terms of its output.
Matrix activation_grad(const Matrix& y, const Matrix& grad, Activation act) {
  switch (act) {
    case Activation::none: return grad;
    case Activation::relu: return (y.array() > 0.0).select(grad, 0.0);
    case Activation::sigmoid: return grad.array() * y.array() * (1.0 - y.array());
    case Activation::tanh: return grad.array() * (1.0 - y.array().square());
  }
  return grad;
}

}  // namespace

int ConvShape::width_out() const {
  const int pad = kernel_w / 2;
  return (width_in + 2 * pad - kernel_w) / stride + 1;
}

Matrix conv_forward(const Matrix& x, const ConvShape& shape, const Matrix& kernel,
                    const Matrix& bias, ConvCache* cache) {
  const int c_in = static_cast<int>(x.cols());
  const int w_out = shape.width_out();
  const int kh = shape.kernel_h, kw = shape.kernel_w;
  const int ph = kh / 2, pw = kw / 2;
  if (x.rows() != Eigen::Index(shape.frames) * shape.width_in)
    throw Error("conv: input rows do not match frames x width");
  if (kernel.rows() != Eigen::Index(kh) * kw * c_in)
    throw Error("conv: kernel does not match input channels");

  Matrix patches = Matrix::Zero(Eigen::Index(shape.frames) * w_out, Eigen::Index(kh) * kw * c_in);
  for (int t = 0; t < shape.frames; ++t) {
    for (int wo = 0; wo < w_out; ++wo) {
      const Eigen::Index row = Eigen::Index(t) * w_out + wo;
      for (int dt = 0; dt < kh; ++dt) {
        const int ts = t + dt - ph;
        if (ts < 0 || ts >= shape.frames) continue;
        for (int dw = 0; dw < kw; ++dw) {
          const int ws = wo * shape.stride + dw - pw;
          if (ws < 0 || ws >= shape.width_in) continue;
          patches.block(row, Eigen::Index(dt * kw + dw) * c_in, 1, c_in) =
              x.row(Eigen::Index(ts) * shape.width_in + ws);
        }
      }
    }
  }
  Matrix out = patches * kernel;
  out.rowwise() += bias.row(0);
  out = out.cwiseMax(0.0);
  if (cache) {
    cache->shape = shape;
    cache->channels_in = c_in;
    cache->patches = std::move(patches);
    cache->output = out;
  }
  return out;
}

Matrix conv_backward(const ConvCache& cache, const Matrix& kernel, const Matrix& grad_out,
                     Matrix& grad_kernel, Matrix& grad_bias) {
  const ConvShape& shape = cache.shape;
  const int c_in = cache.channels_in;
  const int w_out = shape.width_out();
  const int kh = shape.kernel_h, kw = shape.kernel_w;
  const int ph = kh / 2, pw = kw / 2;

  Matrix dz = (cache.output.array() > 0.0).select(grad_out, 0.0);
  grad_kernel.noalias() += cache.patches.transpose() * dz;
  grad_bias += dz.colwise().sum();
  Matrix dpatches = dz * kernel.transpose();

  Matrix dx = Matrix::Zero(Eigen::Index(shape.frames) * shape.width_in, c_in);
  for (int t = 0; t < shape.frames; ++t) {
    for (int wo = 0; wo < w_out; ++wo) {
      const Eigen::Index row = Eigen::Index(t) * w_out + wo;
      for (int dt = 0; dt < kh; ++dt) {
        const int ts = t + dt - ph;
        if (ts < 0 || ts >= shape.frames) continue;
        for (int dw = 0; dw < kw; ++dw) {
          const int ws = wo * shape.stride + dw - pw;
          if (ws < 0 || ws >= shape.width_in) continue;
          dx.row(Eigen::Index(ts) * shape.width_in + ws) +=
              dpatches.block(row, Eigen::Index(dt * kw + dw) * c_in, 1, c_in);
        }
      }
    }
  }
  return dx;
}

Matrix dense_forward(const Matrix& x, const Matrix& weight, const Matrix& bias,
                     Activation act, DenseCache* cache) {
  if (x.cols() != weight.rows()) throw Error("dense: input width does not match weight");
  Matrix z = x * weight;
  z.rowwise() += bias.row(0);
  Matrix y = activate(std::move(z), act);
  if (cache) {
    cache->input = x;
    cache->output = y;
    cache->act = act;
  }
  return y;
}

Matrix dense_backward(const DenseCache& cache, const Matrix& weight, const Matrix& grad_out,
                      Matrix& grad_weight, Matrix& grad_bias) {
  Matrix dz = activation_grad(cache.output, grad_out, cache.act);
  grad_weight.noalias() += cache.input.transpose() * dz;
  grad_bias += dz.colwise().sum();
  return dz * weight.transpose();
}

Matrix lstm_forward(const Matrix& x, const Matrix& wx, const Matrix& wh, const Matrix& bias,
                    bool reverse, LstmCache* cache) {
  const Eigen::Index frames = x.rows();
  const Eigen::Index hidden = wh.rows();
  if (x.cols() != wx.rows() || wx.cols() != 4 * hidden || wh.cols() != 4 * hidden)
    throw Error("lstm: weight shapes do not match input");

  Matrix zx = x * wx;
  zx.rowwise() += bias.row(0);
  Matrix gates(frames, 4 * hidden);
  Matrix cells(frames, hidden);
  Matrix out(frames, hidden);
  RowVector h = RowVector::Zero(hidden);
  RowVector c = RowVector::Zero(hidden);
  for (Eigen::Index step = 0; step < frames; ++step) {
    const Eigen::Index t = reverse ? frames - 1 - step : step;
    RowVector z = zx.row(t) + h * wh;
    for (Eigen::Index j = 0; j < hidden; ++j) {
      const double i = sigmoid(z(j));
      const double f = sigmoid(z(hidden + j));
      const double g = std::tanh(z(2 * hidden + j));
      const double o = sigmoid(z(3 * hidden + j));
      c(j) = f * c(j) + i * g;
      h(j) = o * std::tanh(c(j));
      gates(t, j) = i;
      gates(t, hidden + j) = f;
      gates(t, 2 * hidden + j) = g;
      gates(t, 3 * hidden + j) = o;
    }
    cells.row(t) = c;
    out.row(t) = h;
  }
  if (cache) {
    cache->input = x;
    cache->gates = std::move(gates);
    cache->cells = std::move(cells);
    cache->hidden = out;
    cache->reverse = reverse;
  }
  return out;
}

Matrix lstm_backward(const LstmCache& cache, const Matrix& wx, const Matrix& wh,
                     const Matrix& grad_out, Matrix& grad_wx, Matrix& grad_wh,
                     Matrix& grad_bias) {
  const Eigen::Index frames = cache.input.rows();
  const Eigen::Index hidden = wh.rows();
  Matrix dz_all(frames, 4 * hidden);
  RowVector dh_next = RowVector::Zero(hidden);
  RowVector dc_next = RowVector::Zero(hidden);
  RowVector dz(4 * hidden);
  for (Eigen::Index step = frames - 1; step >= 0; --step) {
    const Eigen::Index t = cache.reverse ? frames - 1 - step : step;
    const Eigen::Index prev = cache.reverse ? t + 1 : t - 1;
    const bool has_prev = step > 0;
    for (Eigen::Index j = 0; j < hidden; ++j) {
      const double i = cache.gates(t, j);
      const double f = cache.gates(t, hidden + j);
      const double g = cache.gates(t, 2 * hidden + j);
      const double o = cache.gates(t, 3 * hidden + j);
      const double c = cache.cells(t, j);
      const double c_prev = has_prev ? cache.cells(prev, j) : 0.0;
      const double tc = std::tanh(c);
      const double dh = grad_out(t, j) + dh_next(j);
      const double dc = dh * o * (1.0 - tc * tc) + dc_next(j);
      dz(j) = dc * g * i * (1.0 - i);
      dz(hidden + j) = dc * c_prev * f * (1.0 - f);
      dz(2 * hidden + j) = dc * i * (1.0 - g * g);
      dz(3 * hidden + j) = dh * tc * o * (1.0 - o);
      dc_next(j) = dc * f;
    }
    dz_all.row(t) = dz;
    if (has_prev) grad_wh.noalias() += cache.hidden.row(prev).transpose() * dz;
    dh_next = dz * wh.transpose();
  }
  grad_wx.noalias() += cache.input.transpose() * dz_all;
  grad_bias += dz_all.colwise().sum();
  return dz_all * wx.transpose();
}

Matrix attention_forward(const Matrix& h, const Matrix& wq, const Matrix& wk,
                         const Matrix& wv, const std::vector<bool>* mask,
                         AttentionCache* cache) {
  const Eigen::Index frames = h.rows();
  if (frames < 1) throw Error("attention: need at least one frame");
  if (wv.cols() != h.cols()) throw Error("attention: value projection must preserve width");
  if (mask && static_cast<Eigen::Index>(mask->size()) != frames)
    throw Error("attention: mask length does not match frame count");
  const double scale = 1.0 / std::sqrt(static_cast<double>(wq.cols()));
  Matrix q = h * wq;
  Matrix k = h * wk;
  Matrix v = h * wv;
  Matrix scores = (q * k.transpose()) * scale;
  Matrix weights(frames, frames);
  for (Eigen::Index i = 0; i < frames; ++i) {
    double peak = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < frames; ++j)
      if (!mask || (*mask)[j]) peak = std::max(peak, scores(i, j));
    double total = 0.0;
    for (Eigen::Index j = 0; j < frames; ++j) {
      const double e = (!mask || (*mask)[j]) ? std::exp(scores(i, j) - peak) : 0.0;
      weights(i, j) = e;
      total += e;
    }
    weights.row(i) /= total;
  }
  Matrix out = weights * v + h;
  if (cache) {
    cache->input = h;
    cache->query = std::move(q);
    cache->key = std::move(k);
    cache->value = std::move(v);
    cache->weights = std::move(weights);
  }
  return out;
}

Matrix attention_backward(const AttentionCache& cache, const Matrix& wq, const Matrix& wk,
                          const Matrix& wv, const Matrix& grad_out, Matrix& grad_wq,
                          Matrix& grad_wk, Matrix& grad_wv) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(wq.cols()));
  const Matrix& a = cache.weights;
  Matrix d_weights = grad_out * cache.value.transpose();
  Matrix d_value = a.transpose() * grad_out;
  Vector row_dot = (d_weights.array() * a.array()).rowwise().sum();
  Matrix d_scores = a.array() * (d_weights.colwise() - row_dot).array();
  Matrix d_query = d_scores * cache.key * scale;
  Matrix d_key = d_scores.transpose() * cache.query * scale;
  grad_wq.noalias() += cache.input.transpose() * d_query;
  grad_wk.noalias() += cache.input.transpose() * d_key;
  grad_wv.noalias() += cache.input.transpose() * d_value;
  Matrix dh = grad_out;
  dh.noalias() += d_query * wq.transpose();
  dh.noalias() += d_key * wk.transpose();
  dh.noalias() += d_value * wv.transpose();
  return dh;
}

}  // namespace mti::layers
