#pragma once

// Building blocks of the predictor network. Every layer has a forward pass
// that optionally records what its backward pass needs, and a backward pass
// that accumulates parameter gradients (+=) and returns the input gradient.

#include "mti/types.hpp"

#include <vector>

namespace mti::layers {

enum class Activation { none, relu, sigmoid, tanh };

/// 2-D convolution over a (frame x frequency) grid with C channels.
/// Activations are laid out as (frames * width) x channels, row index
/// t * width + w. Time uses stride 1 and "same" padding so the frame count
/// is preserved; frequency uses `stride` with padding kernel_w / 2.
/// ReLU is applied to the output.
struct ConvShape {
  int frames = 0;
  int width_in = 0;
  int kernel_h = 3;
  int kernel_w = 3;
  int stride = 3;

  int width_out() const;
};

struct ConvCache {
  ConvShape shape;
  int channels_in = 0;
  Matrix patches;  // (frames * width_out) x (kernel_h * kernel_w * channels_in)
  Matrix output;   // post-ReLU
};

/// kernel: (kernel_h * kernel_w * channels_in) x channels_out; bias: 1 x channels_out.
Matrix conv_forward(const Matrix& x, const ConvShape& shape, const Matrix& kernel,
                    const Matrix& bias, ConvCache* cache);
Matrix conv_backward(const ConvCache& cache, const Matrix& kernel, const Matrix& grad_out,
                     Matrix& grad_kernel, Matrix& grad_bias);

/// Affine map y = act(x W + b), row per frame.
struct DenseCache {
  Matrix input;
  Matrix output;
  Activation act = Activation::none;
};

Matrix dense_forward(const Matrix& x, const Matrix& weight, const Matrix& bias,
                     Activation act, DenseCache* cache);
Matrix dense_backward(const DenseCache& cache, const Matrix& weight, const Matrix& grad_out,
                      Matrix& grad_weight, Matrix& grad_bias);

/// Single-direction LSTM with gates ordered (input, forget, cell, output):
///   z_t = x_t Wx + h_{t-1} Wh + b,  c_t = f*c_{t-1} + i*g,  h_t = o*tanh(c_t).
/// With `reverse` the sequence is consumed from the last frame backwards and
/// the output rows stay aligned with the input rows.
struct LstmCache {
  Matrix input;
  Matrix gates;  // post-activation i, f, g, o per row
  Matrix cells;
  Matrix hidden;
  bool reverse = false;
};

Matrix lstm_forward(const Matrix& x, const Matrix& wx, const Matrix& wh, const Matrix& bias,
                    bool reverse, LstmCache* cache);
Matrix lstm_backward(const LstmCache& cache, const Matrix& wx, const Matrix& wh,
                     const Matrix& grad_out, Matrix& grad_wx, Matrix& grad_wh,
                     Matrix& grad_bias);

/// Scaled multiplicative self-attention with a residual connection:
///   A = softmax_rows((H Wq)(H Wk)^T / sqrt(attn_dim)),  out = A (H Wv) + H.
/// Frames with mask[j] == false receive zero attention from every row.
struct AttentionCache {
  Matrix input;
  Matrix query;
  Matrix key;
  Matrix value;
  Matrix weights;
};

Matrix attention_forward(const Matrix& h, const Matrix& wq, const Matrix& wk,
                         const Matrix& wv, const std::vector<bool>* mask,
                         AttentionCache* cache);
Matrix attention_backward(const AttentionCache& cache, const Matrix& wq, const Matrix& wk,
                          const Matrix& wv, const Matrix& grad_out, Matrix& grad_wq,
                          Matrix& grad_wk, Matrix& grad_wv);

}  // namespace mti::layers
