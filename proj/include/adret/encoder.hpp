#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adret/matrix.hpp"
#include "adret/pooling.hpp"

namespace adret {

struct EncoderParams {
  Matrix w_proj;  // d_in x d
  Matrix b_proj;  // 1 x d
  PoolParams pool;
  PoolingSpec spec;

  std::size_t input_dim() const noexcept { return w_proj.rows(); }
  std::size_t embed_dim() const noexcept { return w_proj.cols(); }
  void validate() const;
};

struct EncoderGrads {
  Matrix w_proj;
  Matrix b_proj;
  Matrix w_tok;
  Matrix w_bal;

  static EncoderGrads zeros_like(const EncoderParams& p);
};

// features * w_proj + b_proj on every row.
Matrix project(const Matrix& features, const Matrix& w_proj, const Matrix& b_proj);

// Unit-norm embedding: normalize(pool(project(features))).
Vector encode(const Matrix& features, const EncoderParams& params);

// Accumulates the gradient of <upstream, encode(features)> into `grads`.
void encode_vjp(const Matrix& features, const EncoderParams& params,
                std::span<const double> upstream, EncoderGrads& grads);

// Gradient of <upstream, encode(features)> with respect to the raw features.
Matrix encode_input_vjp(const Matrix& features, const EncoderParams& params,
                        std::span<const double> upstream);

struct NamedTensor {
  std::string name;
  Matrix* value;
};

struct NamedConstTensor {
  std::string name;
  const Matrix* value;
};

// Visual and text towers sharing one embedding width.
struct Model {
  EncoderParams visual;
  EncoderParams text;

  // Xavier-uniform projections, zero biases and zero pooling weights.
  static Model init(std::size_t visual_dim, std::size_t text_dim, std::size_t embed_dim,
                    const PoolingSpec& visual_spec, const PoolingSpec& text_spec,
                    std::uint64_t seed);

  std::vector<NamedTensor> parameters();
  std::vector<NamedConstTensor> parameters() const;
};

struct ModelGrads {
  EncoderGrads visual;
  EncoderGrads text;

  static ModelGrads zeros_like(const Model& m);
  std::vector<NamedTensor> tensors();
};

}  // namespace adret
