#pragma once

// Cross-attention from image tokens (queries) to text embeddings (keys/values)
// and the three ways of merging the attended features back into the image.

#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "mmui/ops.hpp"

namespace mmui {

enum class FusionStrategy { None, ElementwiseAdd, WeightedSum, ConvFusion };

inline std::string_view fusion_name(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::None: return "none";
    case FusionStrategy::ElementwiseAdd: return "add";
    case FusionStrategy::WeightedSum: return "wsum";
    case FusionStrategy::ConvFusion: return "conv";
  }
  return "none";
}

inline FusionStrategy parse_fusion(std::string_view s) {
  if (s == "none") return FusionStrategy::None;
  if (s == "add") return FusionStrategy::ElementwiseAdd;
  if (s == "wsum") return FusionStrategy::WeightedSum;
  if (s == "conv") return FusionStrategy::ConvFusion;
  throw ConfigError("unknown fusion strategy '" + std::string(s) + "' (expected none|add|wsum|conv)");
}

/// Q/K/V projections: wq [C,d], wk [D,d], wv [D,C].
template <class T>
struct AttentionParams {
  Tensor<T> wq;
  Tensor<T> wk;
  Tensor<T> wv;
};

/// Intermediate values of one cross-attention evaluation.
template <class T>
struct AttentionState {
  Tensor<T> scores;    // [HW,T] before softmax
  Tensor<T> weights;   // [HW,T]
  Tensor<T> attended;  // [HW,C]
};

/// One inserted fusion module. Only the members used by `strategy` are populated.
template <class T>
struct FusionModule {
  FusionStrategy strategy = FusionStrategy::ElementwiseAdd;
  AttentionParams<T> attn;
  Tensor<T> alpha;   // [1], weighted sum
  Tensor<T> beta;    // [1], weighted sum
  Tensor<T> fuse_w;  // [C,2C,1,1], conv fusion; input order [attended | image]
  Tensor<T> fuse_b;  // [C]
  bool scale_scores = true;
};

/// [C,H,W] -> [HW,C]; row r·W+c holds the channel vector at (r,c).
template <class T>
Tensor<T> image_to_tokens(const Tensor<T>& x) {
  detail::require_rank(x, 3, "image_to_tokens");
  return transpose2d(reshape(x, {x.dim(0), x.dim(1) * x.dim(2)}));
}

template <class T>
Tensor<T> tokens_to_image(const Tensor<T>& tokens, std::size_t h, std::size_t w) {
  detail::require_rank(tokens, 2, "tokens_to_image");
  if (tokens.dim(0) != h * w) {
    throw ShapeError("tokens_to_image: " + shape_str(tokens.shape()) + " is not " + std::to_string(h) + "x" +
                     std::to_string(w) + " tokens");
  }
  return reshape(transpose2d(tokens), {tokens.dim(1), h, w});
}

/// Q = x·wq, K = text·wk, V = text·wv, weights = softmax(Q·Kᵀ / sqrt(d)), attended = weights·V.
/// With scale_scores = false the 1/sqrt(d) factor is omitted.
template <class T>
AttentionState<T> cross_attention(const Tensor<T>& x_tokens, const Tensor<T>& text, const AttentionParams<T>& p,
                                  bool scale_scores = true) {
  detail::require_rank(x_tokens, 2, "cross_attention tokens");
  detail::require_rank(text, 2, "cross_attention text");
  if (text.dim(0) == 0) throw ContractError("cross_attention: empty text sequence");
  const std::size_t c = x_tokens.dim(1), d_text = text.dim(1);
  if (p.wq.rank() != 2 || p.wq.dim(0) != c || p.wk.rank() != 2 || p.wk.dim(0) != d_text ||
      p.wk.dim(1) != p.wq.dim(1) || p.wv.rank() != 2 || p.wv.dim(0) != d_text || p.wv.dim(1) != c) {
    throw ShapeError("cross_attention: params wq" + shape_str(p.wq.shape()) + " wk" + shape_str(p.wk.shape()) +
                     " wv" + shape_str(p.wv.shape()) + " do not fit tokens " + shape_str(x_tokens.shape()) +
                     " and text " + shape_str(text.shape()));
  }
  const auto q = matmul(x_tokens, p.wq);
  const auto k = matmul(text, p.wk);
  const auto v = matmul(text, p.wv);
  auto scores = matmul(q, transpose2d(k));
  if (scale_scores) scores = scale(scores, static_cast<T>(1.0 / std::sqrt(static_cast<double>(p.wq.dim(1)))));
  auto weights = softmax_rows(scores);
  auto attended = matmul(weights, v);
  return {scores, weights, attended};
}

template <class T>
Tensor<T> merge_add(const Tensor<T>& attended, const Tensor<T>& x_tokens) {
  return add(attended, x_tokens);
}

/// alpha·attended + beta·image.
template <class T>
Tensor<T> merge_weighted(const Tensor<T>& attended, const Tensor<T>& x_tokens, const Tensor<T>& alpha,
                         const Tensor<T>& beta) {
  detail::require_same_shape(attended, x_tokens, "merge_weighted");
  return add(scale_by(attended, alpha), scale_by(x_tokens, beta));
}

/// 1×1 convolution over the channel concatenation [attended | image].
template <class T>
Tensor<T> merge_conv(const Tensor<T>& attended, const Tensor<T>& x_tokens, const Tensor<T>& kernel,
                     const Tensor<T>& bias) {
  detail::require_same_shape(attended, x_tokens, "merge_conv");
  const std::size_t n = x_tokens.dim(0), c = x_tokens.dim(1);
  if (kernel.shape() != Shape{c, 2 * c, 1, 1}) {
    throw ShapeError("merge_conv: kernel " + shape_str(kernel.shape()) + ", expected " +
                     shape_str(Shape{c, 2 * c, 1, 1}));
  }
  // Tokens viewed as a [C, HW, 1] image so the 1×1 conv acts per position.
  auto a_img = reshape(transpose2d(attended), {c, n, 1});
  auto x_img = reshape(transpose2d(x_tokens), {c, n, 1});
  auto y = conv2d(concat_channels(a_img, x_img), kernel, bias, 1, 0);
  return transpose2d(reshape(y, {c, n}));
}

/// Drop-in fusion: output shape equals input shape [C,H,W].
template <class T>
Tensor<T> fusion_forward(const Tensor<T>& x, const Tensor<T>& text, const FusionModule<T>& m,
                         AttentionState<T>* inspect = nullptr) {
  detail::require_rank(x, 3, "fusion_forward");
  const std::size_t h = x.dim(1), w = x.dim(2);
  const auto tokens = image_to_tokens(x);
  auto state = cross_attention(tokens, text, m.attn, m.scale_scores);
  Tensor<T> merged;
  switch (m.strategy) {
    case FusionStrategy::ElementwiseAdd: merged = merge_add(state.attended, tokens); break;
    case FusionStrategy::WeightedSum: merged = merge_weighted(state.attended, tokens, m.alpha, m.beta); break;
    case FusionStrategy::ConvFusion: merged = merge_conv(state.attended, tokens, m.fuse_w, m.fuse_b); break;
    case FusionStrategy::None: throw ConfigError("fusion_forward: strategy 'none' has no fusion module");
  }
  if (inspect) *inspect = state;
  return tokens_to_image(merged, h, w);
}

}  // namespace mmui
