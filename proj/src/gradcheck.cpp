#include "m3dvg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "m3dvg/error.hpp"
#include "m3dvg/losses.hpp"
#include "m3dvg/random.hpp"
#include "m3dvg/tge.hpp"

namespace m3dvg::gradcheck {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using tge::AttentionParams;
using tge::EncoderLayerParams;
using tge::FfnParams;
using tge::LayerNormParams;
using tge::ProjectionParams;
using RowVec = tge::RowVector<double>;

constexpr int kMaxAttempts = 1000;

// Per-attempt seed so rejected draws never repeat.
std::uint64_t attempt_seed(std::uint64_t seed, int attempt) {
  return splitmix64(seed ^ (0xA24BAED4963EE407ULL * static_cast<std::uint64_t>(attempt + 1)));
}

MatrixXd uniform(std::uint64_t seed, std::string_view name, Index rows, Index cols, double bound) {
  return uniform_matrix(seed, name, rows, cols, bound);
}

RowVec row(const MatrixXd& m) { return m.row(0); }

bool clear_of_kinks(const MatrixXd& pre) { return pre.cwiseAbs().minCoeff() > kKinkMargin; }

MatrixXd reduction_weights(Reduction r, std::uint64_t seed, Index rows, Index cols) {
  if (r == Reduction::sum) return MatrixXd::Ones(rows, cols);
  return uniform(seed, "reduce", rows, cols, 1.0);
}

// --- attention parameter packing ---------------------------------------------

constexpr std::size_t kAttentionBlocks = 8;

void push_attention(Problem& p, const AttentionParams<double>& a, const std::string& prefix) {
  const std::pair<const char*, MatrixXd> parts[] = {
      {"w_q", a.w_q}, {"w_k", a.w_k}, {"w_v", a.w_v}, {"w_o", a.w_o},
      {"b_q", a.b_q}, {"b_k", a.b_k}, {"b_v", a.b_v}, {"b_o", a.b_o}};
  for (const auto& [name, value] : parts) {
    p.names.push_back(prefix + name);
    p.blocks.push_back(value);
  }
}

AttentionParams<double> attention_at(const Blocks& b, std::size_t at, Index heads) {
  AttentionParams<double> a;
  a.n_heads = heads;
  a.w_q = b[at];
  a.w_k = b[at + 1];
  a.w_v = b[at + 2];
  a.w_o = b[at + 3];
  a.b_q = row(b[at + 4]);
  a.b_k = row(b[at + 5]);
  a.b_v = row(b[at + 6]);
  a.b_o = row(b[at + 7]);
  return a;
}

void append_attention(Blocks& g, const AttentionParams<double>& d) {
  for (const MatrixXd& m : {MatrixXd(d.w_q), MatrixXd(d.w_k), MatrixXd(d.w_v), MatrixXd(d.w_o),
                            MatrixXd(d.b_q), MatrixXd(d.b_k), MatrixXd(d.b_v), MatrixXd(d.b_o)})
    g.push_back(m);
}

AttentionParams<double> random_attention(std::uint64_t seed, Index channels, Index heads,
                                         const std::string& prefix) {
  AttentionParams<double> a = tge::init_attention(channels, heads, seed, prefix);
  a.b_q = row(uniform(seed, prefix + ".b_q", 1, channels, 0.2));
  a.b_k = row(uniform(seed, prefix + ".b_k", 1, channels, 0.2));
  a.b_v = row(uniform(seed, prefix + ".b_v", 1, channels, 0.2));
  a.b_o = row(uniform(seed, prefix + ".b_o", 1, channels, 0.2));
  return a;
}

FfnParams<double> random_ffn(std::uint64_t seed, Index channels, Index inner) {
  FfnParams<double> f;
  f.w1 = glorot_uniform(seed, "ffn.w1", inner, channels);
  f.b1 = row(uniform(seed, "ffn.b1", 1, inner, 0.2));
  f.w2 = glorot_uniform(seed, "ffn.w2", channels, inner);
  f.b2 = row(uniform(seed, "ffn.b2", 1, channels, 0.2));
  return f;
}

LayerNormParams<double> random_norm(std::uint64_t seed, Index channels, const std::string& prefix) {
  LayerNormParams<double> n;
  n.gamma = row(uniform(seed, prefix + ".gamma", 1, channels, 0.5)).array() + 1.0;
  n.beta = row(uniform(seed, prefix + ".beta", 1, channels, 0.2));
  return n;
}

void push_ffn(Problem& p, const FfnParams<double>& f, const std::string& prefix) {
  p.names.insert(p.names.end(), {prefix + "w1", prefix + "b1", prefix + "w2", prefix + "b2"});
  p.blocks.insert(p.blocks.end(), {f.w1, f.b1, f.w2, f.b2});
}

FfnParams<double> ffn_at(const Blocks& b, std::size_t at) {
  return {b[at], row(b[at + 1]), b[at + 2], row(b[at + 3])};
}

void append_ffn(Blocks& g, const FfnParams<double>& d) {
  g.insert(g.end(), {d.w1, d.b1, d.w2, d.b2});
}

// --- network ops -------------------------------------------------------------

Problem linear_problem(std::uint64_t seed) {
  const losses::LossWeights w;
  Problem p;
  p.op = "linear";
  p.names = {"parts"};
  p.blocks = {uniform(seed, "parts", 1, 8, 0.1)};
  auto parts_of = [](const Blocks& b) {
    const MatrixXd& m = b[0];
    return losses::LossParts{m(0), m(1), m(2), m(3), m(4), m(5), m(6), m(7)};
  };
  p.value = [w, parts_of](const Blocks& b) { return losses::loss_overall(parts_of(b), w); };
  p.gradient = [w](const Blocks&) {
    MatrixXd g(1, 8);
    g << w.cls, w.lrtb, w.giou, w.xy3d, 1, 1, 1, 1;
    return Blocks{g};
  };
  return p;
}

Problem fc_project_problem(std::uint64_t seed, Reduction red) {
  constexpr Index kRows = 5, kChannels = 4;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::uint64_t s = attempt_seed(seed, attempt);
    Problem p;
    p.op = "fc_project";
    p.names = {"text", "weight", "bias"};
    p.blocks = {uniform(s, "text", kRows, kChannels, 1.0), glorot_uniform(s, "weight", kChannels, kChannels),
                uniform(s, "bias", 1, kChannels, 0.5)};
    const ProjectionParams<double> proj{p.blocks[1], row(p.blocks[2])};
    if (!clear_of_kinks(tge::fc_project_forward(p.blocks[0], proj).pre_activation)) continue;
    const MatrixXd w = reduction_weights(red, s, kRows, kChannels);
    p.value = [w](const Blocks& b) {
      return tge::fc_project(b[0], ProjectionParams<double>{b[1], row(b[2])}).cwiseProduct(w).sum();
    };
    p.gradient = [w](const Blocks& b) {
      const ProjectionParams<double> pp{b[1], row(b[2])};
      const auto g = tge::fc_project_backward(tge::fc_project_forward(b[0], pp), pp, w);
      return Blocks{g.d_input, g.d_params.weight, g.d_params.bias};
    };
    return p;
  }
  throw Error(ErrorKind::InvalidArgument, "could not draw a kink-free fc_project instance");
}

Problem mhca_problem(std::uint64_t seed, Reduction red) {
  constexpr Index kQueries = 3, kKeys = 5, kChannels = 4, kHeads = 2;
  Problem p;
  p.op = "mhca";
  p.names = {"query_in", "kv_in"};
  p.blocks = {uniform(seed, "query_in", kQueries, kChannels, 1.0), uniform(seed, "kv_in", kKeys, kChannels, 1.0)};
  push_attention(p, random_attention(seed, kChannels, kHeads, "attn"), "");
  const MatrixXd w = reduction_weights(red, seed, kQueries, kChannels);
  p.value = [w](const Blocks& b) { return tge::mhca(b[0], b[1], attention_at(b, 2, kHeads)).cwiseProduct(w).sum(); };
  p.gradient = [w](const Blocks& b) {
    const auto a = attention_at(b, 2, kHeads);
    const auto g = tge::mhca_backward(tge::mhca_forward(b[0], b[1], a), a, w);
    Blocks out{g.d_query, g.d_kv};
    append_attention(out, g.d_params);
    return out;
  };
  return p;
}

Problem mhsa_problem(std::uint64_t seed, Reduction red) {
  constexpr Index kRows = 4, kChannels = 8, kHeads = 2;
  Problem p;
  p.op = "mhsa";
  p.names = {"x"};
  p.blocks = {uniform(seed, "x", kRows, kChannels, 1.0)};
  push_attention(p, random_attention(seed, kChannels, kHeads, "attn"), "");
  const MatrixXd w = reduction_weights(red, seed, kRows, kChannels);
  p.value = [w](const Blocks& b) { return tge::mhsa(b[0], attention_at(b, 1, kHeads)).cwiseProduct(w).sum(); };
  p.gradient = [w](const Blocks& b) {
    const auto a = attention_at(b, 1, kHeads);
    const auto g = tge::mhsa_backward(tge::mhsa_forward(b[0], a), a, w);
    Blocks out{g.d_input};
    append_attention(out, g.d_params);
    return out;
  };
  return p;
}

Problem layer_norm_problem(std::uint64_t seed, Reduction red) {
  constexpr Index kRows = 4, kChannels = 8;
  const LayerNormParams<double> n = random_norm(seed, kChannels, "norm");
  Problem p;
  p.op = "layer_norm";
  p.names = {"x", "gamma", "beta"};
  p.blocks = {uniform(seed, "x", kRows, kChannels, 1.0), n.gamma, n.beta};
  const MatrixXd w = reduction_weights(red, seed, kRows, kChannels);
  auto params = [](const Blocks& b) { return LayerNormParams<double>{row(b[1]), row(b[2])}; };
  p.value = [w, params](const Blocks& b) {
    return tge::layer_norm<double>(b[0], params(b)).cwiseProduct(w).sum();
  };
  p.gradient = [w, params](const Blocks& b) {
    const auto np = params(b);
    const auto g = tge::layer_norm_backward(tge::layer_norm_forward<double>(b[0], np), np, w);
    return Blocks{g.d_input, g.d_params.gamma, g.d_params.beta};
  };
  return p;
}

Problem ffn_problem(std::uint64_t seed, Reduction red) {
  constexpr Index kRows = 4, kChannels = 8, kInner = 16;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::uint64_t s = attempt_seed(seed, attempt);
    Problem p;
    p.op = "ffn";
    p.names = {"x"};
    p.blocks = {uniform(s, "x", kRows, kChannels, 1.0)};
    const FfnParams<double> f = random_ffn(s, kChannels, kInner);
    if (!clear_of_kinks(tge::ffn_forward(p.blocks[0], f).hidden_pre)) continue;
    push_ffn(p, f, "");
    const MatrixXd w = reduction_weights(red, s, kRows, kChannels);
    p.value = [w](const Blocks& b) { return tge::ffn(b[0], ffn_at(b, 1)).cwiseProduct(w).sum(); };
    p.gradient = [w](const Blocks& b) {
      const auto fp = ffn_at(b, 1);
      const auto g = tge::ffn_backward(tge::ffn_forward(b[0], fp), fp, w);
      Blocks out{g.d_input};
      append_ffn(out, g.d_params);
      return out;
    };
    return p;
  }
  throw Error(ErrorKind::InvalidArgument, "could not draw a kink-free ffn instance");
}

Problem encoder_problem(std::uint64_t seed, Reduction red) {
  constexpr Index kRows = 4, kChannels = 8, kHeads = 2, kInner = 16;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::uint64_t s = attempt_seed(seed, attempt);
    EncoderLayerParams<double> e;
    e.attn = random_attention(s, kChannels, kHeads, "encoder.attn");
    e.ffn = random_ffn(s, kChannels, kInner);
    e.norm1 = random_norm(s, kChannels, "norm1");
    e.norm2 = random_norm(s, kChannels, "norm2");
    const MatrixXd x = uniform(s, "x", kRows, kChannels, 1.0);
    if (!clear_of_kinks(tge::depth_encoder_layer_forward(x, e).ffn.hidden_pre)) continue;

    Problem p;
    p.op = "depth_encoder_layer";
    p.names = {"x"};
    p.blocks = {x};
    push_attention(p, e.attn, "attn.");
    push_ffn(p, e.ffn, "ffn.");
    p.names.insert(p.names.end(), {"norm1.gamma", "norm1.beta", "norm2.gamma", "norm2.beta"});
    p.blocks.insert(p.blocks.end(), {e.norm1.gamma, e.norm1.beta, e.norm2.gamma, e.norm2.beta});
    auto params = [](const Blocks& b) {
      EncoderLayerParams<double> ep;
      ep.attn = attention_at(b, 1, kHeads);
      ep.ffn = ffn_at(b, 1 + kAttentionBlocks);
      ep.norm1 = {row(b[13]), row(b[14])};
      ep.norm2 = {row(b[15]), row(b[16])};
      return ep;
    };
    const MatrixXd w = reduction_weights(red, s, kRows, kChannels);
    p.value = [w, params](const Blocks& b) {
      return tge::depth_encoder_layer(b[0], params(b)).cwiseProduct(w).sum();
    };
    p.gradient = [w, params](const Blocks& b) {
      const auto ep = params(b);
      const auto g = tge::depth_encoder_layer_backward(tge::depth_encoder_layer_forward(b[0], ep), ep, w);
      Blocks out{g.d_input};
      append_attention(out, g.d_params.attn);
      append_ffn(out, g.d_params.ffn);
      out.insert(out.end(), {g.d_params.norm1.gamma, g.d_params.norm1.beta, g.d_params.norm2.gamma,
                             g.d_params.norm2.beta});
      return out;
    };
    return p;
  }
  throw Error(ErrorKind::InvalidArgument, "could not draw a kink-free encoder instance");
}

Problem tge_problem(std::uint64_t seed, Reduction red) {
  constexpr Index kQueries = 3, kTokens = 5, kChannels = 4, kHeads = 2;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::uint64_t s = attempt_seed(seed, attempt);
    Problem p;
    p.op = "tge";
    p.names = {"geometry", "text", "proj.weight", "proj.bias"};
    p.blocks = {uniform(s, "geometry", kQueries, kChannels, 1.0), uniform(s, "text", kTokens, kChannels, 1.0),
                glorot_uniform(s, "proj.weight", kChannels, kChannels), uniform(s, "proj.bias", 1, kChannels, 0.5)};
    const ProjectionParams<double> proj{p.blocks[2], row(p.blocks[3])};
    if (!clear_of_kinks(tge::fc_project_forward(p.blocks[1], proj).pre_activation)) continue;
    push_attention(p, random_attention(s, kChannels, kHeads, "attn"), "attn.");
    const MatrixXd w = reduction_weights(red, s, kQueries, kChannels);
    p.value = [w](const Blocks& b) {
      return tge::tge_forward(b[0], b[1], ProjectionParams<double>{b[2], row(b[3])}, attention_at(b, 4, kHeads))
          .cwiseProduct(w)
          .sum();
    };
    p.gradient = [w](const Blocks& b) {
      const ProjectionParams<double> pp{b[2], row(b[3])};
      const auto a = attention_at(b, 4, kHeads);
      const auto g = tge::tge_backward(tge::tge_forward_tape(b[0], b[1], pp, a), pp, a, w);
      Blocks out{g.d_geometry, g.d_text, g.d_projection.weight, g.d_projection.bias};
      append_attention(out, g.d_attention);
      return out;
    };
    return p;
  }
  throw Error(ErrorKind::InvalidArgument, "could not draw a kink-free tge instance");
}

// --- losses ------------------------------------------------------------------

MatrixXd as_row(const Eigen::VectorXd& v) { return v.transpose(); }

Problem focal_problem(std::uint64_t seed) {
  CounterRng rng(tensor_key(seed, "focal", 1, 3));
  const double alpha = rng.uniform(0.1, 1.0);
  const double gamma = rng.uniform(0.0, 3.0);
  Problem p;
  p.op = "focal";
  p.names = {"p_target"};
  p.blocks = {MatrixXd::Constant(1, 1, rng.uniform(0.05, 0.95))};
  p.value = [=](const Blocks& b) { return losses::focal_term(b[0](0), alpha, gamma); };
  p.gradient = [=](const Blocks& b) { return Blocks{as_row(losses::focal_term_grad(b[0](0), alpha, gamma).grad)}; };
  return p;
}

Problem depth_map_focal_problem(std::uint64_t seed) {
  constexpr Index kPixels = 6, kBins = 5;
  CounterRng rng(tensor_key(seed, "dmap", kPixels, kBins));
  MatrixXd probs(kPixels, kBins);
  std::vector<std::size_t> targets(kPixels);
  for (Index r = 0; r < kPixels; ++r) {
    for (Index c = 0; c < kBins; ++c) probs(r, c) = rng.uniform(0.2, 1.0);
    probs.row(r) /= probs.row(r).sum();
    targets[static_cast<std::size_t>(r)] = static_cast<std::size_t>(rng.next() % kBins);
  }
  Problem p;
  p.op = "depth_map_focal";
  p.names = {"probabilities"};
  p.blocks = {probs};
  p.value = [targets](const Blocks& b) { return losses::depth_map_focal(b[0], targets); };
  p.gradient = [targets](const Blocks& b) {
    const Eigen::VectorXd g = losses::depth_map_focal_grad(b[0], targets).grad;
    return Blocks{Eigen::Map<const Eigen::Matrix<double, kPixels, kBins, Eigen::RowMajor>>(g.data())};
  };
  return p;
}

std::span<const double> flat(const MatrixXd& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }

Problem l1_problem(std::uint64_t seed) {
  constexpr Index kLen = 6;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::uint64_t s = attempt_seed(seed, attempt);
    Problem p;
    p.op = "l1";
    p.names = {"pred", "target"};
    p.blocks = {uniform(s, "pred", 1, kLen, 2.0), uniform(s, "target", 1, kLen, 2.0)};
    if (!clear_of_kinks(p.blocks[0] - p.blocks[1])) continue;
    p.value = [](const Blocks& b) { return losses::l1_loss(flat(b[0]), flat(b[1])); };
    p.gradient = [](const Blocks& b) {
      const MatrixXd g = as_row(losses::l1_loss_grad(flat(b[0]), flat(b[1])).grad);
      return Blocks{g, -g};
    };
    return p;
  }
  throw Error(ErrorKind::InvalidArgument, "could not draw a kink-free l1 instance");
}

geometry::Box2D box2d_at(const MatrixXd& m, Index at) { return {m(at), m(at + 1), m(at + 2), m(at + 3)}; }

bool giou_clear(const MatrixXd& m) {
  const auto a = box2d_at(m, 0);
  const auto b = box2d_at(m, 4);
  for (Index i = 0; i < 4; ++i)
    if (std::abs(m(i) - m(i + 4)) <= kKinkMargin) return false;
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  return std::abs(iw) > kKinkMargin && std::abs(ih) > kKinkMargin;
}

Problem giou_problem(std::uint64_t seed) {
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    CounterRng rng(attempt_seed(seed, attempt));
    MatrixXd m(1, 8);
    for (Index k = 0; k < 8; k += 4) {
      const double x = rng.uniform(0.0, 6.0), y = rng.uniform(0.0, 6.0);
      m.block(0, k, 1, 4) << x, y, x + rng.uniform(0.5, 4.0), y + rng.uniform(0.5, 4.0);
    }
    if (!giou_clear(m)) continue;
    Problem p;
    p.op = "giou";
    p.names = {"boxes"};
    p.blocks = {m};
    p.value = [](const Blocks& b) { return losses::giou_loss(box2d_at(b[0], 0), box2d_at(b[0], 4)); };
    p.gradient = [](const Blocks& b) {
      return Blocks{as_row(losses::giou_loss_grad(box2d_at(b[0], 0), box2d_at(b[0], 4)).grad)};
    };
    return p;
  }
  throw Error(ErrorKind::InvalidArgument, "could not draw a kink-free giou instance");
}

losses::Box3d box3d_at(const MatrixXd& m, Index at) {
  losses::Box3d b;
  b.center << m(at), m(at + 1), m(at + 2);
  b.dims << m(at + 3), m(at + 4), m(at + 5);
  b.yaw = m(at + 6);
  return b;
}

// True when no footprint corner lies near the other footprint's edge lines
// and the vertical extents have distinct ends.
bool iou3d_clear(const losses::Box3d& a, const losses::Box3d& b) {
  const double ends[] = {a.center(1) + a.height() / 2 - (b.center(1) + b.height() / 2),
                         a.center(1) - a.height() / 2 - (b.center(1) - b.height() / 2),
                         a.center(1) + a.height() / 2 - (b.center(1) - b.height() / 2),
                         a.center(1) - a.height() / 2 - (b.center(1) + b.height() / 2)};
  for (double e : ends)
    if (std::abs(e) <= kKinkMargin) return false;
  const auto pa = geometry::bev_corners(a);
  const auto pb = geometry::bev_corners(b);
  auto clear = [](const geometry::Polygon<double>& pts, const geometry::Polygon<double>& poly) {
    for (std::size_t e = 0; e < poly.size(); ++e) {
      const Eigen::Vector2d edge = (poly[(e + 1) % poly.size()] - poly[e]).normalized();
      for (const auto& q : pts)
        if (std::abs(geometry::detail::cross<double>(edge, q - poly[e])) <= kKinkMargin) return false;
    }
    return true;
  };
  return clear(pa, pb) && clear(pb, pa);
}

MatrixXd random_box_pair(CounterRng& rng) {
  MatrixXd m(1, 14);
  const double w = rng.uniform(1.0, 3.0), h = rng.uniform(1.0, 3.0), l = rng.uniform(1.0, 5.0);
  m.block(0, 0, 1, 7) << rng.uniform(-5, 5), rng.uniform(-1, 1), rng.uniform(5, 40), w, h, l,
      rng.uniform(-std::numbers::pi, std::numbers::pi);
  m.block(0, 7, 1, 7) << m(0) + rng.uniform(-0.5, 0.5) * w, m(1) + rng.uniform(-0.5, 0.5) * h,
      m(2) + rng.uniform(-0.5, 0.5) * l, w * rng.uniform(0.7, 1.3), h * rng.uniform(0.7, 1.3),
      l * rng.uniform(0.7, 1.3), m(6) + rng.uniform(-0.8, 0.8);
  return m;
}

Problem iou3d_problem(std::uint64_t seed) {
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    CounterRng rng(attempt_seed(seed, attempt));
    const MatrixXd m = random_box_pair(rng);
    if (!iou3d_clear(box3d_at(m, 0), box3d_at(m, 7))) continue;
    Problem p;
    p.op = "iou3d";
    p.names = {"boxes"};
    p.blocks = {m};
    p.value = [](const Blocks& b) { return losses::iou3d_loss(box3d_at(b[0], 0), box3d_at(b[0], 7)); };
    p.gradient = [](const Blocks& b) {
      return Blocks{as_row(losses::iou3d_loss_grad(box3d_at(b[0], 0), box3d_at(b[0], 7)).grad)};
    };
    return p;
  }
  throw Error(ErrorKind::InvalidArgument, "could not draw a kink-free iou3d instance");
}

// Blocks: pred {w, h, l, yaw}, target {cx, cy, cz, w, h, l, yaw}.
std::pair<losses::Box3d, losses::Box3d> size3d_boxes(const Blocks& b) {
  losses::Box3d target = box3d_at(b[1], 0);
  losses::Box3d pred = target;
  pred.dims << b[0](0), b[0](1), b[0](2);
  pred.yaw = b[0](3);
  return {pred, target};
}

Problem size3d_problem(std::uint64_t seed) {
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    CounterRng rng(attempt_seed(seed, attempt));
    const MatrixXd m = random_box_pair(rng);
    Blocks blocks{MatrixXd(1, 4), m.block(0, 7, 1, 7)};
    blocks[0] << m(3), m(4), m(5), m(6);
    const auto [pred, target] = size3d_boxes(blocks);
    if (!iou3d_clear(pred, target)) continue;
    Problem p;
    p.op = "size3d";
    p.names = {"pred", "target"};
    p.blocks = blocks;
    p.value = [](const Blocks& b) {
      const auto [pr, tg] = size3d_boxes(b);
      return losses::size3d_loss(pr, tg);
    };
    p.gradient = [](const Blocks& b) {
      const auto [pr, tg] = size3d_boxes(b);
      const MatrixXd g = as_row(losses::size3d_loss_grad(pr, tg).grad);
      return Blocks{g.leftCols(4), g.rightCols(7)};
    };
    return p;
  }
  throw Error(ErrorKind::InvalidArgument, "could not draw a kink-free size3d instance");
}

Problem multibin_problem(std::uint64_t seed) {
  constexpr Index kBins = static_cast<Index>(losses::kDefaultOrientationBins);
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::uint64_t s = attempt_seed(seed, attempt);
    CounterRng rng(s);
    const losses::OrientationTarget target = losses::encode_orientation(rng.uniform(-std::numbers::pi, std::numbers::pi));
    Problem p;
    p.op = "multibin";
    p.names = {"bin_logits", "residuals"};
    p.blocks = {uniform(s, "logits", 1, kBins, 2.0), uniform(s, "residuals", 1, kBins, 0.3)};
    if (std::abs(p.blocks[1](static_cast<Index>(target.bin)) - target.residual) <= kKinkMargin) continue;
    p.value = [target](const Blocks& b) { return losses::multibin_loss(flat(b[0]), flat(b[1]), target); };
    p.gradient = [target](const Blocks& b) {
      const MatrixXd g = as_row(losses::multibin_loss_grad(flat(b[0]), flat(b[1]), target).grad);
      return Blocks{g.leftCols(kBins), g.rightCols(kBins)};
    };
    return p;
  }
  throw Error(ErrorKind::InvalidArgument, "could not draw a kink-free multibin instance");
}

Problem laplacian_problem(std::uint64_t seed) {
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    CounterRng rng(attempt_seed(seed, attempt));
    MatrixXd m(1, 3);
    m << rng.uniform(1.0, 60.0), rng.uniform(-2.0, 2.0), rng.uniform(1.0, 60.0);
    if (std::abs(m(0) - m(2)) <= kKinkMargin) continue;
    Problem p;
    p.op = "laplacian";
    p.names = {"depth_logscale_target"};
    p.blocks = {m};
    p.value = [](const Blocks& b) { return losses::laplacian_depth_loss(b[0](0), b[0](1), b[0](2)); };
    p.gradient = [](const Blocks& b) {
      return Blocks{as_row(losses::laplacian_depth_loss_grad(b[0](0), b[0](1), b[0](2)).grad)};
    };
    return p;
  }
  throw Error(ErrorKind::InvalidArgument, "could not draw a kink-free laplacian instance");
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

double Report::max_rel_error() const {
  double m = 0.0;
  for (const BlockResult& b : blocks) m = std::max(m, b.max_rel_error);
  return m;
}

Report check(const Problem& problem, const Options& options) {
  if (problem.names.size() != problem.blocks.size())
    throw Error(ErrorKind::InvalidArgument, "one name per block is required");
  const Blocks analytic = problem.gradient(problem.blocks);
  if (analytic.size() != problem.blocks.size())
    throw Error(ErrorKind::ShapeMismatch, problem.op + ": gradient has the wrong number of blocks");

  Report report;
  report.op = problem.op;
  report.options = options;
  Blocks x = problem.blocks;
  const double h = options.step;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (analytic[k].rows() != x[k].rows() || analytic[k].cols() != x[k].cols())
      throw Error(ErrorKind::ShapeMismatch, problem.op + ": gradient of " + problem.names[k] + " has the wrong shape");
    BlockResult r{problem.names[k], x[k].size(), 0.0, 0.0};
    for (Index i = 0; i < x[k].size(); ++i) {
      const double orig = x[k].data()[i];
      x[k].data()[i] = orig + h;
      const double up = problem.value(x);
      x[k].data()[i] = orig - h;
      const double down = problem.value(x);
      x[k].data()[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k].data()[i];
      if (!std::isfinite(numeric) || !std::isfinite(a))
        throw Error(ErrorKind::NonFinite, problem.op + ": non-finite gradient in " + problem.names[k]);
      r.max_abs_error = std::max(r.max_abs_error, std::abs(a - numeric));
      r.max_rel_error = std::max(r.max_rel_error, relative_error(a, numeric, options.floor));
    }
    report.blocks.push_back(std::move(r));
  }
  return report;
}

const std::vector<std::string>& registered_ops() {
  static const std::vector<std::string> ops = {
      "linear", "fc_project", "mhca", "mhsa",  "layer_norm", "ffn",      "depth_encoder_layer", "tge",
      "focal",  "depth_map_focal", "l1", "giou", "iou3d",      "size3d", "multibin",            "laplacian"};
  return ops;
}

Problem make_problem(std::string_view op, std::uint64_t seed, Reduction reduction) {
  if (op == "linear") return linear_problem(seed);
  if (op == "fc_project") return fc_project_problem(seed, reduction);
  if (op == "mhca") return mhca_problem(seed, reduction);
  if (op == "mhsa") return mhsa_problem(seed, reduction);
  if (op == "layer_norm") return layer_norm_problem(seed, reduction);
  if (op == "ffn") return ffn_problem(seed, reduction);
  if (op == "depth_encoder_layer") return encoder_problem(seed, reduction);
  if (op == "tge") return tge_problem(seed, reduction);
  if (op == "focal") return focal_problem(seed);
  if (op == "depth_map_focal") return depth_map_focal_problem(seed);
  if (op == "l1") return l1_problem(seed);
  if (op == "giou") return giou_problem(seed);
  if (op == "iou3d") return iou3d_problem(seed);
  if (op == "size3d") return size3d_problem(seed);
  if (op == "multibin") return multibin_problem(seed);
  if (op == "laplacian") return laplacian_problem(seed);
  throw Error(ErrorKind::InvalidArgument, "unknown op '" + std::string(op) + "'");
}

Report grad_check(std::string_view op, std::uint64_t seed, const Options& options, Reduction reduction) {
  Report r = check(make_problem(op, seed, reduction), options);
  r.seed = seed;
  return r;
}

std::string report_json(const std::vector<Report>& reports) {
  auto arr = nlohmann::ordered_json::array();
  for (const Report& r : reports) {
    nlohmann::ordered_json j;
    j["op"] = r.op;
    j["seed"] = r.seed;
    j["step"] = r.options.step;
    j["max_rel_error"] = r.max_rel_error();
    auto blocks = nlohmann::ordered_json::array();
    for (const BlockResult& b : r.blocks)
      blocks.push_back({{"name", b.name},
                        {"entries", b.entries},
                        {"max_abs_error", b.max_abs_error},
                        {"max_rel_error", b.max_rel_error}});
    j["blocks"] = std::move(blocks);
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

}  // namespace m3dvg::gradcheck
