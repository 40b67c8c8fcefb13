#include "m3dvg/tge.hpp"

#include <cmath>
#include <map>

#include "m3dvg/random.hpp"

namespace m3dvg::tge {

ProjectionParams<double> init_projection(Index channels, std::uint64_t seed) {
  return {glorot_uniform(seed, "proj.weight", channels, channels), RowVector<double>::Zero(channels)};
}

AttentionParams<double> init_attention(Index channels, Index n_heads, std::uint64_t seed,
                                       const std::string& prefix) {
  AttentionParams<double> p;
  p.n_heads = n_heads;
  p.w_q = glorot_uniform(seed, prefix + ".w_q", channels, channels);
  p.w_k = glorot_uniform(seed, prefix + ".w_k", channels, channels);
  p.w_v = glorot_uniform(seed, prefix + ".w_v", channels, channels);
  p.w_o = glorot_uniform(seed, prefix + ".w_o", channels, channels);
  p.b_q = p.b_k = p.b_v = p.b_o = RowVector<double>::Zero(channels);
  validate(p);
  return p;
}

EncoderLayerParams<double> init_encoder_layer(Index channels, Index n_heads, Index inner,
                                              std::uint64_t seed) {
  EncoderLayerParams<double> p;
  p.attn = init_attention(channels, n_heads, seed, "encoder.attn");
  p.ffn.w1 = glorot_uniform(seed, "encoder.ffn.w1", inner, channels);
  p.ffn.b1 = RowVector<double>::Zero(inner);
  p.ffn.w2 = glorot_uniform(seed, "encoder.ffn.w2", channels, inner);
  p.ffn.b2 = RowVector<double>::Zero(channels);
  p.norm1.gamma = p.norm2.gamma = RowVector<double>::Ones(channels);
  p.norm1.beta = p.norm2.beta = RowVector<double>::Zero(channels);
  validate(p);
  return p;
}

TgeModel init_tge_model(Index channels, Index n_heads, std::uint64_t seed) {
  return {init_projection(channels, seed), init_attention(channels, n_heads, seed)};
}

std::vector<embedio::NamedTensor> to_named_tensors(const TgeModel& m) {
  const auto& a = m.attention;
  Eigen::MatrixXd heads(1, 1);
  heads(0, 0) = static_cast<double>(a.n_heads);
  return {
      {"proj.weight", m.projection.weight}, {"proj.bias", m.projection.bias},
      {"attn.n_heads", heads},
      {"attn.w_q", a.w_q}, {"attn.w_k", a.w_k}, {"attn.w_v", a.w_v}, {"attn.w_o", a.w_o},
      {"attn.b_q", a.b_q}, {"attn.b_k", a.b_k}, {"attn.b_v", a.b_v}, {"attn.b_o", a.b_o},
  };
}

TgeModel tge_model_from_tensors(const std::vector<embedio::NamedTensor>& tensors) {
  std::map<std::string, const Eigen::MatrixXd*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t.value;
  auto get = [&](const std::string& name) -> const Eigen::MatrixXd& {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw Error(ErrorKind::FormatError, "checkpoint lacks tensor " + name);
    return *it->second;
  };
  auto row = [&](const std::string& name) -> RowVector<double> {
    const Eigen::MatrixXd& m = get(name);
    if (m.rows() != 1) throw Error(ErrorKind::ShapeMismatch, name + " must be a row vector");
    return m;
  };

  TgeModel m;
  m.projection.weight = get("proj.weight");
  m.projection.bias = row("proj.bias");
  const Eigen::MatrixXd& heads = get("attn.n_heads");
  if (heads.size() != 1 || heads(0, 0) < 1 || heads(0, 0) != std::floor(heads(0, 0)))
    throw Error(ErrorKind::FormatError, "attn.n_heads must be a positive integer scalar");
  m.attention.n_heads = static_cast<Index>(heads(0, 0));
  m.attention.w_q = get("attn.w_q");
  m.attention.w_k = get("attn.w_k");
  m.attention.w_v = get("attn.w_v");
  m.attention.w_o = get("attn.w_o");
  m.attention.b_q = row("attn.b_q");
  m.attention.b_k = row("attn.b_k");
  m.attention.b_v = row("attn.b_v");
  m.attention.b_o = row("attn.b_o");
  validate(m.projection);
  validate(m.attention);
  if (m.projection.weight.rows() != m.attention.channels())
    throw Error(ErrorKind::ShapeMismatch, "projection and attention channel counts differ");
  return m;
}

}  // namespace m3dvg::tge
