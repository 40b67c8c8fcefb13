#pragma once

// Text-guided geometry enhancement: the ReLU projection of text features,
// multi-head cross-attention from geometry queries onto the projected text,
// and the single-layer depth encoder that produces the geometry queries.
//
// Every op is a free function templated on the scalar type. Each has a
// *_forward variant that returns a tape and a matching *_backward that
// consumes it; the plain function is forward only.
//
// Linear maps follow the row-vector convention: y = x * W^T + b, with W of
// shape (out, in) and b a row vector.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "m3dvg/embedio.hpp"
#include "m3dvg/error.hpp"

namespace m3dvg::tge {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Eigen::Index;

template <typename Scalar>
struct ProjectionParams {
  Matrix<Scalar> weight;  // C x C
  RowVector<Scalar> bias;  // C
};

template <typename Scalar>
struct AttentionParams {
  Index n_heads = 1;
  Matrix<Scalar> w_q, w_k, w_v, w_o;  // C x C each, head h owns columns [h*d, (h+1)*d) of Q/K/V
  RowVector<Scalar> b_q, b_k, b_v, b_o;

  Index channels() const { return w_q.rows(); }
  Index head_dim() const { return channels() / n_heads; }
};

template <typename Scalar>
struct LayerNormParams {
  RowVector<Scalar> gamma;
  RowVector<Scalar> beta;
  Scalar eps = Scalar(1e-5);
};

template <typename Scalar>
struct FfnParams {
  Matrix<Scalar> w1;  // F x C
  RowVector<Scalar> b1;
  Matrix<Scalar> w2;  // C x F
  RowVector<Scalar> b2;
};

template <typename Scalar>
struct EncoderLayerParams {
  AttentionParams<Scalar> attn;
  FfnParams<Scalar> ffn;
  LayerNormParams<Scalar> norm1;
  LayerNormParams<Scalar> norm2;
};

// --- validation ----------------------------------------------------------

namespace detail {

inline std::string shape_str(Index r, Index c) { return std::to_string(r) + "x" + std::to_string(c); }

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorKind::NonFinite, std::string(what) + " has non-finite entries");
}

template <typename Derived>
void require_shape(const Eigen::MatrixBase<Derived>& m, Index rows, Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols)
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + " is " + shape_str(m.rows(), m.cols()) +
                                              ", expected " + shape_str(rows, cols));
}

template <typename Scalar>
Matrix<Scalar> add_row(Matrix<Scalar> m, const RowVector<Scalar>& b) {
  m.rowwise() += b;
  return m;
}

template <typename Scalar>
Matrix<Scalar> relu(const Matrix<Scalar>& z) {
  return z.cwiseMax(Scalar(0));
}

// Subgradient 0 at the kink.
template <typename Scalar>
Matrix<Scalar> relu_mask(const Matrix<Scalar>& z) {
  return (z.array() > Scalar(0)).template cast<Scalar>().matrix();
}

}  // namespace detail

template <typename Scalar>
void validate(const ProjectionParams<Scalar>& p) {
  const Index c = p.weight.rows();
  if (c == 0 || p.weight.cols() != c)
    throw Error(ErrorKind::ShapeMismatch, "projection weight must be square and non-empty");
  detail::require_shape(p.bias, 1, c, "projection bias");
  detail::require_finite(p.weight, "projection weight");
  detail::require_finite(p.bias, "projection bias");
}

template <typename Scalar>
void validate(const AttentionParams<Scalar>& p) {
  const Index c = p.w_q.rows();
  if (c == 0) throw Error(ErrorKind::ShapeMismatch, "attention has zero channels");
  if (p.n_heads <= 0 || c % p.n_heads != 0)
    throw Error(ErrorKind::ShapeMismatch, std::to_string(c) + " channels are not divisible into " +
                                              std::to_string(p.n_heads) + " heads");
  for (const auto* w : {&p.w_q, &p.w_k, &p.w_v, &p.w_o}) {
    detail::require_shape(*w, c, c, "attention weight");
    detail::require_finite(*w, "attention weight");
  }
  for (const auto* b : {&p.b_q, &p.b_k, &p.b_v, &p.b_o}) {
    detail::require_shape(*b, 1, c, "attention bias");
    detail::require_finite(*b, "attention bias");
  }
}

template <typename Scalar>
void validate(const LayerNormParams<Scalar>& p, Index channels) {
  detail::require_shape(p.gamma, 1, channels, "layer-norm gamma");
  detail::require_shape(p.beta, 1, channels, "layer-norm beta");
  detail::require_finite(p.gamma, "layer-norm gamma");
  detail::require_finite(p.beta, "layer-norm beta");
}

template <typename Scalar>
void validate(const FfnParams<Scalar>& p, Index channels) {
  const Index inner = p.w1.rows();
  if (inner < 1) throw Error(ErrorKind::ShapeMismatch, "FFN inner width must be at least 1");
  detail::require_shape(p.w1, inner, channels, "FFN w1");
  detail::require_shape(p.b1, 1, inner, "FFN b1");
  detail::require_shape(p.w2, channels, inner, "FFN w2");
  detail::require_shape(p.b2, 1, channels, "FFN b2");
  detail::require_finite(p.w1, "FFN w1");
  detail::require_finite(p.b1, "FFN b1");
  detail::require_finite(p.w2, "FFN w2");
  detail::require_finite(p.b2, "FFN b2");
}

template <typename Scalar>
void validate(const EncoderLayerParams<Scalar>& p) {
  validate(p.attn);
  validate(p.ffn, p.attn.channels());
  validate(p.norm1, p.attn.channels());
  validate(p.norm2, p.attn.channels());
}

// --- parameter constructors ----------------------------------------------

template <typename Scalar>
ProjectionParams<Scalar> identity_projection(Index channels) {
  return {Matrix<Scalar>::Identity(channels, channels), RowVector<Scalar>::Zero(channels)};
}

template <typename Scalar>
AttentionParams<Scalar> identity_attention(Index channels, Index n_heads) {
  AttentionParams<Scalar> p;
  p.n_heads = n_heads;
  p.w_q = p.w_k = p.w_v = p.w_o = Matrix<Scalar>::Identity(channels, channels);
  p.b_q = p.b_k = p.b_v = p.b_o = RowVector<Scalar>::Zero(channels);
  return p;
}

/// Same shapes as `like`, all zero. Used as gradient accumulators.
template <typename Scalar>
AttentionParams<Scalar> zeros_like(const AttentionParams<Scalar>& like) {
  AttentionParams<Scalar> p;
  p.n_heads = like.n_heads;
  const Index c = like.channels();
  p.w_q = p.w_k = p.w_v = p.w_o = Matrix<Scalar>::Zero(c, c);
  p.b_q = p.b_k = p.b_v = p.b_o = RowVector<Scalar>::Zero(c);
  return p;
}

// --- fc_project ----------------------------------------------------------

template <typename Scalar>
struct ProjectionTape {
  Matrix<Scalar> input;
  Matrix<Scalar> pre_activation;
  Matrix<Scalar> output;
};

template <typename Scalar>
struct ProjectionGrad {
  Matrix<Scalar> d_input;
  ProjectionParams<Scalar> d_params;
};

template <typename Derived>
ProjectionTape<typename Derived::Scalar> fc_project_forward(
    const Eigen::MatrixBase<Derived>& text, const ProjectionParams<typename Derived::Scalar>& p) {
  using Scalar = typename Derived::Scalar;
  validate(p);
  if (text.cols() != p.weight.cols())
    throw Error(ErrorKind::ShapeMismatch, "text features have " + std::to_string(text.cols()) +
                                              " channels, projection expects " +
                                              std::to_string(p.weight.cols()));
  detail::require_finite(text, "text features");
  ProjectionTape<Scalar> t;
  t.input = text;
  t.pre_activation = detail::add_row<Scalar>(t.input * p.weight.transpose(), p.bias);
  t.output = detail::relu(t.pre_activation);
  return t;
}

/// ReLU(text * W^T + b). Output is entrywise non-negative.
template <typename Derived>
Matrix<typename Derived::Scalar> fc_project(const Eigen::MatrixBase<Derived>& text,
                                            const ProjectionParams<typename Derived::Scalar>& p) {
  return fc_project_forward(text, p).output;
}

template <typename Scalar>
ProjectionGrad<Scalar> fc_project_backward(const ProjectionTape<Scalar>& t,
                                           const ProjectionParams<Scalar>& p,
                                           const Matrix<Scalar>& d_out) {
  const Matrix<Scalar> d_pre = d_out.cwiseProduct(detail::relu_mask(t.pre_activation));
  ProjectionGrad<Scalar> g;
  g.d_input = d_pre * p.weight;
  g.d_params.weight = d_pre.transpose() * t.input;
  g.d_params.bias = d_pre.colwise().sum();
  return g;
}

// --- multi-head cross-attention -------------------------------------------

template <typename Scalar>
struct AttentionTape {
  Matrix<Scalar> query_in;
  Matrix<Scalar> kv_in;
  Matrix<Scalar> q, k, v;
  std::vector<Matrix<Scalar>> weights;  // per head, softmax rows (n_query x n_kv)
  Matrix<Scalar> heads;                 // concatenated head outputs before W_o
  Matrix<Scalar> output;
};

template <typename Scalar>
struct AttentionGrad {
  Matrix<Scalar> d_query;
  Matrix<Scalar> d_kv;
  AttentionParams<Scalar> d_params;
};

/// Row-wise softmax with max subtraction.
template <typename Scalar>
Matrix<Scalar> softmax_rows(const Matrix<Scalar>& logits) {
  Matrix<Scalar> out(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    const Scalar m = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

template <typename DerivedQ, typename DerivedKV>
AttentionTape<typename DerivedQ::Scalar> mhca_forward(
    const Eigen::MatrixBase<DerivedQ>& query_in, const Eigen::MatrixBase<DerivedKV>& kv_in,
    const AttentionParams<typename DerivedQ::Scalar>& p) {
  using Scalar = typename DerivedQ::Scalar;
  validate(p);
  const Index c = p.channels();
  if (query_in.cols() != c || kv_in.cols() != c)
    throw Error(ErrorKind::ShapeMismatch,
                "attention expects " + std::to_string(c) + " channels, got query " +
                    std::to_string(query_in.cols()) + " and key/value " + std::to_string(kv_in.cols()));
  if (query_in.rows() == 0 || kv_in.rows() == 0)
    throw Error(ErrorKind::ShapeMismatch, "attention needs at least one query and one key/value row");
  detail::require_finite(query_in, "query input");
  detail::require_finite(kv_in, "key/value input");

  AttentionTape<Scalar> t;
  t.query_in = query_in;
  t.kv_in = kv_in;
  t.q = detail::add_row<Scalar>(t.query_in * p.w_q.transpose(), p.b_q);
  t.k = detail::add_row<Scalar>(t.kv_in * p.w_k.transpose(), p.b_k);
  t.v = detail::add_row<Scalar>(t.kv_in * p.w_v.transpose(), p.b_v);

  const Index d = p.head_dim();
  const Scalar scale = Scalar(1) / std::sqrt(Scalar(d));
  t.heads.resize(t.q.rows(), c);
  t.weights.reserve(static_cast<std::size_t>(p.n_heads));
  for (Index h = 0; h < p.n_heads; ++h) {
    const auto qh = t.q.middleCols(h * d, d);
    const auto kh = t.k.middleCols(h * d, d);
    const auto vh = t.v.middleCols(h * d, d);
    Matrix<Scalar> w = softmax_rows<Scalar>((qh * kh.transpose()) * scale);
    t.heads.middleCols(h * d, d) = w * vh;
    t.weights.push_back(std::move(w));
  }
  t.output = detail::add_row<Scalar>(t.heads * p.w_o.transpose(), p.b_o);
  detail::require_finite(t.output, "attention output");
  return t;
}

/// Scaled dot-product multi-head cross-attention. Output has the query's shape.
template <typename DerivedQ, typename DerivedKV>
Matrix<typename DerivedQ::Scalar> mhca(const Eigen::MatrixBase<DerivedQ>& query_in,
                                       const Eigen::MatrixBase<DerivedKV>& kv_in,
                                       const AttentionParams<typename DerivedQ::Scalar>& p) {
  return mhca_forward(query_in, kv_in, p).output;
}

template <typename Scalar>
AttentionGrad<Scalar> mhca_backward(const AttentionTape<Scalar>& t, const AttentionParams<Scalar>& p,
                                    const Matrix<Scalar>& d_out) {
  const Index d = p.head_dim();
  const Scalar scale = Scalar(1) / std::sqrt(Scalar(d));

  AttentionGrad<Scalar> g;
  g.d_params = zeros_like(p);
  g.d_params.w_o = d_out.transpose() * t.heads;
  g.d_params.b_o = d_out.colwise().sum();
  const Matrix<Scalar> d_heads = d_out * p.w_o;

  Matrix<Scalar> dq(t.q.rows(), t.q.cols());
  Matrix<Scalar> dk(t.k.rows(), t.k.cols());
  Matrix<Scalar> dv(t.v.rows(), t.v.cols());
  for (Index h = 0; h < p.n_heads; ++h) {
    const Matrix<Scalar>& w = t.weights[static_cast<std::size_t>(h)];
    const auto d_head = d_heads.middleCols(h * d, d);
    const Matrix<Scalar> d_w = d_head * t.v.middleCols(h * d, d).transpose();
    dv.middleCols(h * d, d) = w.transpose() * d_head;
    // softmax Jacobian: dS = W o (dW - rowsum(dW o W))
    const Matrix<Scalar> row_dot = d_w.cwiseProduct(w).rowwise().sum();
    const Matrix<Scalar> d_logits =
        (w.array() * (d_w.colwise() - row_dot.col(0)).array()).matrix() * scale;
    dq.middleCols(h * d, d) = d_logits * t.k.middleCols(h * d, d);
    dk.middleCols(h * d, d) = d_logits.transpose() * t.q.middleCols(h * d, d);
  }

  g.d_params.w_q = dq.transpose() * t.query_in;
  g.d_params.b_q = dq.colwise().sum();
  g.d_params.w_k = dk.transpose() * t.kv_in;
  g.d_params.b_k = dk.colwise().sum();
  g.d_params.w_v = dv.transpose() * t.kv_in;
  g.d_params.b_v = dv.colwise().sum();
  g.d_query = dq * p.w_q;
  g.d_kv = dk * p.w_k + dv * p.w_v;
  return g;
}

// --- self-attention ------------------------------------------------------

template <typename Derived>
AttentionTape<typename Derived::Scalar> mhsa_forward(const Eigen::MatrixBase<Derived>& x,
                                                     const AttentionParams<typename Derived::Scalar>& p) {
  return mhca_forward(x, x, p);
}

/// Self-attention: mhca with the input as both query and key/value.
template <typename Derived>
Matrix<typename Derived::Scalar> mhsa(const Eigen::MatrixBase<Derived>& x,
                                      const AttentionParams<typename Derived::Scalar>& p) {
  return mhca(x, x, p);
}

template <typename Scalar>
struct SelfAttentionGrad {
  Matrix<Scalar> d_input;
  AttentionParams<Scalar> d_params;
};

template <typename Scalar>
SelfAttentionGrad<Scalar> mhsa_backward(const AttentionTape<Scalar>& t, const AttentionParams<Scalar>& p,
                                        const Matrix<Scalar>& d_out) {
  AttentionGrad<Scalar> g = mhca_backward(t, p, d_out);
  return {g.d_query + g.d_kv, std::move(g.d_params)};
}

// --- layer norm ----------------------------------------------------------

template <typename Scalar>
struct LayerNormTape {
  Matrix<Scalar> normalized;  // (x - mean) / sigma
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_sigma;
  Matrix<Scalar> output;
};

template <typename Scalar>
struct LayerNormGrad {
  Matrix<Scalar> d_input;
  LayerNormParams<Scalar> d_params;
};

/// Per-row normalisation over channels with biased variance.
template <typename Scalar>
LayerNormTape<Scalar> layer_norm_forward(const Matrix<Scalar>& x, const LayerNormParams<Scalar>& p) {
  validate(p, x.cols());
  LayerNormTape<Scalar> t;
  const Scalar n = Scalar(x.cols());
  t.normalized.resize(x.rows(), x.cols());
  t.inv_sigma.resize(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).sum() / n;
    const RowVector<Scalar> centered = x.row(r).array() - mean;
    const Scalar var = centered.squaredNorm() / n;
    t.inv_sigma(r) = Scalar(1) / std::sqrt(var + p.eps);
    t.normalized.row(r) = centered * t.inv_sigma(r);
  }
  t.output = t.normalized * p.gamma.asDiagonal();
  t.output.rowwise() += p.beta;
  return t;
}

template <typename Scalar>
Matrix<Scalar> layer_norm(const Matrix<Scalar>& x, const LayerNormParams<Scalar>& p) {
  return layer_norm_forward(x, p).output;
}

template <typename Scalar>
LayerNormGrad<Scalar> layer_norm_backward(const LayerNormTape<Scalar>& t, const LayerNormParams<Scalar>& p,
                                          const Matrix<Scalar>& d_out) {
  LayerNormGrad<Scalar> g;
  g.d_params.gamma = d_out.cwiseProduct(t.normalized).colwise().sum();
  g.d_params.beta = d_out.colwise().sum();
  g.d_params.eps = p.eps;
  const Matrix<Scalar> d_norm = d_out * p.gamma.asDiagonal();
  const Scalar n = Scalar(d_out.cols());
  g.d_input.resize(d_out.rows(), d_out.cols());
  for (Index r = 0; r < d_out.rows(); ++r) {
    const Scalar mean_d = d_norm.row(r).sum() / n;
    const Scalar mean_dx = d_norm.row(r).dot(t.normalized.row(r)) / n;
    g.d_input.row(r) =
        (d_norm.row(r).array() - mean_d - t.normalized.row(r).array() * mean_dx) * t.inv_sigma(r);
  }
  return g;
}

// --- feed-forward --------------------------------------------------------

template <typename Scalar>
struct FfnTape {
  Matrix<Scalar> input;
  Matrix<Scalar> hidden_pre;
  Matrix<Scalar> hidden;
  Matrix<Scalar> output;
};

template <typename Scalar>
struct FfnGrad {
  Matrix<Scalar> d_input;
  FfnParams<Scalar> d_params;
};

template <typename Derived>
FfnTape<typename Derived::Scalar> ffn_forward(const Eigen::MatrixBase<Derived>& x,
                                              const FfnParams<typename Derived::Scalar>& p) {
  using Scalar = typename Derived::Scalar;
  validate(p, x.cols());
  detail::require_finite(x, "FFN input");
  FfnTape<Scalar> t;
  t.input = x;
  t.hidden_pre = detail::add_row<Scalar>(t.input * p.w1.transpose(), p.b1);
  t.hidden = detail::relu(t.hidden_pre);
  t.output = detail::add_row<Scalar>(t.hidden * p.w2.transpose(), p.b2);
  return t;
}

/// Two-layer position-wise MLP, C -> F -> C with ReLU. No residual.
template <typename Derived>
Matrix<typename Derived::Scalar> ffn(const Eigen::MatrixBase<Derived>& x,
                                     const FfnParams<typename Derived::Scalar>& p) {
  return ffn_forward(x, p).output;
}

template <typename Scalar>
FfnGrad<Scalar> ffn_backward(const FfnTape<Scalar>& t, const FfnParams<Scalar>& p,
                             const Matrix<Scalar>& d_out) {
  FfnGrad<Scalar> g;
  g.d_params.w2 = d_out.transpose() * t.hidden;
  g.d_params.b2 = d_out.colwise().sum();
  const Matrix<Scalar> d_hidden = (d_out * p.w2).cwiseProduct(detail::relu_mask(t.hidden_pre));
  g.d_params.w1 = d_hidden.transpose() * t.input;
  g.d_params.b1 = d_hidden.colwise().sum();
  g.d_input = d_hidden * p.w1;
  return g;
}

// --- depth encoder layer ---------------------------------------------------

template <typename Scalar>
struct EncoderTape {
  LayerNormTape<Scalar> norm1;
  AttentionTape<Scalar> attn;
  Matrix<Scalar> mid;  // x + mhsa(norm1(x))
  LayerNormTape<Scalar> norm2;
  FfnTape<Scalar> ffn;
  Matrix<Scalar> output;
};

template <typename Scalar>
struct EncoderGrad {
  Matrix<Scalar> d_input;
  EncoderLayerParams<Scalar> d_params;
};

/// Pre-norm transformer layer:
///   mid = x + mhsa(norm1(x)),  out = mid + ffn(norm2(mid)).
template <typename Derived>
EncoderTape<typename Derived::Scalar> depth_encoder_layer_forward(
    const Eigen::MatrixBase<Derived>& geometry, const EncoderLayerParams<typename Derived::Scalar>& p) {
  using Scalar = typename Derived::Scalar;
  validate(p);
  if (geometry.cols() != p.attn.channels())
    throw Error(ErrorKind::ShapeMismatch, "geometry features have " + std::to_string(geometry.cols()) +
                                              " channels, layer expects " +
                                              std::to_string(p.attn.channels()));
  detail::require_finite(geometry, "geometry features");
  const Matrix<Scalar> x = geometry;
  EncoderTape<Scalar> t;
  t.norm1 = layer_norm_forward(x, p.norm1);
  t.attn = mhsa_forward(t.norm1.output, p.attn);
  t.mid = x + t.attn.output;
  t.norm2 = layer_norm_forward(t.mid, p.norm2);
  t.ffn = ffn_forward(t.norm2.output, p.ffn);
  t.output = t.mid + t.ffn.output;
  return t;
}

template <typename Derived>
Matrix<typename Derived::Scalar> depth_encoder_layer(const Eigen::MatrixBase<Derived>& geometry,
                                                     const EncoderLayerParams<typename Derived::Scalar>& p) {
  return depth_encoder_layer_forward(geometry, p).output;
}

template <typename Scalar>
EncoderGrad<Scalar> depth_encoder_layer_backward(const EncoderTape<Scalar>& t,
                                                 const EncoderLayerParams<Scalar>& p,
                                                 const Matrix<Scalar>& d_out) {
  EncoderGrad<Scalar> g;
  FfnGrad<Scalar> gf = ffn_backward(t.ffn, p.ffn, d_out);
  LayerNormGrad<Scalar> g2 = layer_norm_backward(t.norm2, p.norm2, gf.d_input);
  const Matrix<Scalar> d_mid = d_out + g2.d_input;
  SelfAttentionGrad<Scalar> ga = mhsa_backward(t.attn, p.attn, d_mid);
  LayerNormGrad<Scalar> g1 = layer_norm_backward(t.norm1, p.norm1, ga.d_input);
  g.d_input = d_mid + g1.d_input;
  g.d_params.attn = std::move(ga.d_params);
  g.d_params.ffn = std::move(gf.d_params);
  g.d_params.norm1 = std::move(g1.d_params);
  g.d_params.norm2 = std::move(g2.d_params);
  return g;
}

// --- TGE composition -------------------------------------------------------

template <typename Scalar>
struct TgeTape {
  ProjectionTape<Scalar> projection;
  AttentionTape<Scalar> attn;
};

template <typename Scalar>
struct TgeGrad {
  Matrix<Scalar> d_geometry;
  Matrix<Scalar> d_text;
  ProjectionParams<Scalar> d_projection;
  AttentionParams<Scalar> d_attention;
};

template <typename DerivedG, typename DerivedT>
TgeTape<typename DerivedG::Scalar> tge_forward_tape(const Eigen::MatrixBase<DerivedG>& geometry,
                                                    const Eigen::MatrixBase<DerivedT>& text,
                                                    const ProjectionParams<typename DerivedG::Scalar>& proj,
                                                    const AttentionParams<typename DerivedG::Scalar>& attn) {
  TgeTape<typename DerivedG::Scalar> t;
  t.projection = fc_project_forward(text, proj);
  t.attn = mhca_forward(geometry, t.projection.output, attn);
  return t;
}

/// Enhanced geometry features: mhca(geometry, fc_project(text)).
template <typename DerivedG, typename DerivedT>
Matrix<typename DerivedG::Scalar> tge_forward(const Eigen::MatrixBase<DerivedG>& geometry,
                                              const Eigen::MatrixBase<DerivedT>& text,
                                              const ProjectionParams<typename DerivedG::Scalar>& proj,
                                              const AttentionParams<typename DerivedG::Scalar>& attn) {
  return tge_forward_tape(geometry, text, proj, attn).attn.output;
}

template <typename Scalar>
TgeGrad<Scalar> tge_backward(const TgeTape<Scalar>& t, const ProjectionParams<Scalar>& proj,
                             const AttentionParams<Scalar>& attn, const Matrix<Scalar>& d_out) {
  AttentionGrad<Scalar> ga = mhca_backward(t.attn, attn, d_out);
  ProjectionGrad<Scalar> gp = fc_project_backward(t.projection, proj, ga.d_kv);
  return {std::move(ga.d_query), std::move(gp.d_input), std::move(gp.d_params), std::move(ga.d_params)};
}

// --- seeded initialisation and checkpoints (binary64) -----------------------

/// Glorot-uniform weights and zero biases, deterministic per (seed, name, shape).
ProjectionParams<double> init_projection(Index channels, std::uint64_t seed);
AttentionParams<double> init_attention(Index channels, Index n_heads, std::uint64_t seed,
                                       const std::string& prefix = "attn");
EncoderLayerParams<double> init_encoder_layer(Index channels, Index n_heads, Index inner,
                                              std::uint64_t seed);

/// Parameters of the enhancement module as stored in a PRM1 checkpoint.
struct TgeModel {
  ProjectionParams<double> projection;
  AttentionParams<double> attention;
};

TgeModel init_tge_model(Index channels, Index n_heads, std::uint64_t seed);

/// Tensor names: proj.weight, proj.bias, attn.{w_q,w_k,w_v,w_o,b_q,b_k,b_v,b_o}
/// and attn.n_heads (1x1).
std::vector<embedio::NamedTensor> to_named_tensors(const TgeModel& m);
TgeModel tge_model_from_tensors(const std::vector<embedio::NamedTensor>& tensors);

}  // namespace m3dvg::tge
