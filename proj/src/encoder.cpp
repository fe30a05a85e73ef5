#include "adret/encoder.hpp"

#include <cmath>

#include <fmt/format.h>

#include "adret/error.hpp"
#include "adret/ops.hpp"
#include "adret/random.hpp"

namespace adret {

void EncoderParams::validate() const {
  if (b_proj.rows() != 1 || b_proj.cols() != w_proj.cols()) {
    throw DimensionError(fmt::format("b_proj must be 1x{}, got {}", w_proj.cols(),
                                     b_proj.shape_string()));
  }
  pool.validate(w_proj.cols());
  spec.validate();
}

EncoderGrads EncoderGrads::zeros_like(const EncoderParams& p) {
  return {Matrix(p.w_proj.rows(), p.w_proj.cols()), Matrix(1, p.b_proj.cols()),
          Matrix(p.pool.w_tok.rows(), 1), Matrix(p.pool.w_bal.rows(), 1)};
}

Matrix project(const Matrix& features, const Matrix& w_proj, const Matrix& b_proj) {
  if (features.cols() != w_proj.rows()) {
    throw DimensionError(fmt::format("project: features {} do not match projection {}",
                                     features.shape_string(), w_proj.shape_string()));
  }
  return add_row_bias(matmul(features, w_proj), b_proj);
}

namespace {

struct Forward {
  Matrix projected;
  Matrix pooled;      // 1 x d, before normalization
  Matrix normalized;  // 1 x d
};

Forward run_forward(const Matrix& features, const EncoderParams& params) {
  Forward f;
  f.projected = project(features, params.w_proj, params.b_proj);
  f.pooled = Matrix::row_vector(pool(f.projected, params.spec, params.pool));
  try {
    f.normalized = l2_normalize_rows(f.pooled);
  } catch (const DegenerateVectorError&) {
    throw DegenerateVectorError("encode: pooled embedding collapsed to (near) zero");
  }
  return f;
}

PoolGrads backward_to_projection(const Forward& f, const EncoderParams& params,
                                 std::span<const double> upstream) {
  if (upstream.size() != params.embed_dim()) {
    throw DimensionError("encode_vjp: upstream length does not match embedding width");
  }
  const Matrix d_pooled =
      l2_normalize_rows_vjp(f.pooled, f.normalized, Matrix::row_vector(upstream));
  return pool_vjp(f.projected, params.spec, params.pool, d_pooled.data());
}

}  // namespace

Vector encode(const Matrix& features, const EncoderParams& params) {
  const Forward f = run_forward(features, params);
  return Vector(f.normalized.data().begin(), f.normalized.data().end());
}

void encode_vjp(const Matrix& features, const EncoderParams& params,
                std::span<const double> upstream, EncoderGrads& grads) {
  const Forward f = run_forward(features, params);
  const PoolGrads pg = backward_to_projection(f, params, upstream);
  add_in_place(grads.w_tok, pg.w_tok);
  add_in_place(grads.w_bal, pg.w_bal);
  const BinaryGrad d_bias = add_row_bias_vjp(f.projected, params.b_proj, pg.features);
  add_in_place(grads.b_proj, d_bias.rhs);
  const BinaryGrad d_mul = matmul_vjp(features, params.w_proj, d_bias.lhs);
  add_in_place(grads.w_proj, d_mul.rhs);
}

Matrix encode_input_vjp(const Matrix& features, const EncoderParams& params,
                        std::span<const double> upstream) {
  const Forward f = run_forward(features, params);
  const PoolGrads pg = backward_to_projection(f, params, upstream);
  return matmul_vjp(features, params.w_proj, pg.features).lhs;
}

Model Model::init(std::size_t visual_dim, std::size_t text_dim, std::size_t embed_dim,
                  const PoolingSpec& visual_spec, const PoolingSpec& text_spec,
                  std::uint64_t seed) {
  if (visual_dim == 0 || text_dim == 0 || embed_dim == 0) {
    throw ConfigError("model dimensions must be >= 1");
  }
  Rng rng(seed);
  auto tower = [&](std::size_t in_dim, const PoolingSpec& spec) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in_dim + embed_dim));
    return EncoderParams{rng.uniform_matrix(in_dim, embed_dim, -limit, limit),
                         Matrix(1, embed_dim), PoolParams::zeros(embed_dim), spec};
  };
  Model m;
  m.visual = tower(visual_dim, visual_spec);
  m.text = tower(text_dim, text_spec);
  return m;
}

std::vector<NamedTensor> Model::parameters() {
  return {{"visual.w_proj", &visual.w_proj}, {"visual.b_proj", &visual.b_proj},
          {"visual.w_tok", &visual.pool.w_tok}, {"visual.w_bal", &visual.pool.w_bal},
          {"text.w_proj", &text.w_proj},     {"text.b_proj", &text.b_proj},
          {"text.w_tok", &text.pool.w_tok},     {"text.w_bal", &text.pool.w_bal}};
}

std::vector<NamedConstTensor> Model::parameters() const {
  std::vector<NamedConstTensor> out;
  for (const auto& t : const_cast<Model*>(this)->parameters()) out.push_back({t.name, t.value});
  return out;
}

ModelGrads ModelGrads::zeros_like(const Model& m) {
  return {EncoderGrads::zeros_like(m.visual), EncoderGrads::zeros_like(m.text)};
}

std::vector<NamedTensor> ModelGrads::tensors() {
  return {{"visual.w_proj", &visual.w_proj}, {"visual.b_proj", &visual.b_proj},
          {"visual.w_tok", &visual.w_tok},   {"visual.w_bal", &visual.w_bal},
          {"text.w_proj", &text.w_proj},     {"text.b_proj", &text.b_proj},
          {"text.w_tok", &text.w_tok},       {"text.w_bal", &text.w_bal}};
}

}  // namespace adret
