#include "adret/gradient_suite.hpp"

#include <algorithm>
#include <tuple>

#include "adret/encoder.hpp"
#include "adret/objectives.hpp"
#include "adret/ops.hpp"
#include "adret/pooling.hpp"
#include "adret/random.hpp"

namespace adret {
namespace {

using Inputs = std::span<const Matrix>;

Matrix as_row(const Vector& v) { return Matrix::row_vector(v); }

using InputMaker = std::function<std::vector<Matrix>(std::uint64_t)>;

GradientCase fixed(DiffOp op, InputMaker make) {
  std::string name = op.name;
  return {std::move(name), [op = std::move(op), make = std::move(make)](std::uint64_t seed) {
            return GradientInstance{op, make(seed)};
          }};
}

GradientCase unary(std::string name, std::function<Matrix(const Matrix&)> fwd,
                   std::function<Matrix(const Matrix& in, const Matrix& out, const Matrix& up)> vjp,
                   InputMaker make) {
  return fixed({std::move(name), [fwd](Inputs in) { return fwd(in[0]); },
                [vjp](Inputs in, const Matrix& out, const Matrix& up) {
                  return std::vector<Matrix>{vjp(in[0], out, up)};
                }},
               std::move(make));
}

GradientCase binary(std::string name, std::function<Matrix(const Matrix&, const Matrix&)> fwd,
                    std::function<BinaryGrad(const Matrix&, const Matrix&, const Matrix&)> vjp,
                    InputMaker make) {
  return fixed({std::move(name), [fwd](Inputs in) { return fwd(in[0], in[1]); },
                [vjp](Inputs in, const Matrix&, const Matrix& up) {
                  BinaryGrad g = vjp(in[0], in[1], up);
                  return std::vector<Matrix>{std::move(g.lhs), std::move(g.rhs)};
                }},
               std::move(make));
}

auto random_inputs(std::vector<std::pair<std::size_t, std::size_t>> shapes) {
  return [shapes](std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Matrix> out;
    for (auto [r, c] : shapes) out.push_back(rng.uniform_matrix(r, c, -1.0, 1.0));
    return out;
  };
}

// Small two-tower model, a batch of paired raw instances and a loss; inputs
// are the eight parameter tensors.
struct PipelineFixture {
  std::vector<Matrix> images;
  std::vector<Matrix> texts;
  PoolingSpec visual_spec;
  PoolingSpec text_spec;
};

constexpr std::size_t kPipeVisualDim = 3;
constexpr std::size_t kPipeTextDim = 4;
constexpr std::size_t kPipeEmbedDim = 4;
constexpr std::size_t kPipeBatch = 4;

PipelineFixture make_fixture(std::uint64_t seed) {
  Rng rng(seed + 1000);
  PipelineFixture f;
  for (std::size_t b = 0; b < kPipeBatch; ++b) {
    f.images.push_back(rng.normal_matrix(rng.between(2, 4), kPipeVisualDim));
    f.texts.push_back(rng.normal_matrix(rng.between(2, 4), kPipeTextDim));
  }
  f.visual_spec = PoolingSpec{PoolMethod::adpool};
  f.text_spec = PoolingSpec{PoolMethod::adpool};
  return f;
}

Model model_from(Inputs in, const PipelineFixture& f) {
  Model m;
  m.visual = {in[0], in[1], {in[2], in[3]}, f.visual_spec};
  m.text = {in[4], in[5], {in[6], in[7]}, f.text_spec};
  return m;
}

std::vector<Matrix> model_inputs(std::uint64_t seed) {
  Rng rng(seed);
  return {rng.uniform_matrix(kPipeVisualDim, kPipeEmbedDim, -1, 1),
          rng.uniform_matrix(1, kPipeEmbedDim, -0.5, 0.5),
          rng.uniform_matrix(kPipeEmbedDim, 1, -1, 1),
          rng.uniform_matrix(kPipeEmbedDim, 1, -1, 1),
          rng.uniform_matrix(kPipeTextDim, kPipeEmbedDim, -1, 1),
          rng.uniform_matrix(1, kPipeEmbedDim, -0.5, 0.5),
          rng.uniform_matrix(kPipeEmbedDim, 1, -1, 1),
          rng.uniform_matrix(kPipeEmbedDim, 1, -1, 1)};
}

GradientCase pipeline_case(std::string name, LossConfig loss) {
  return {name, [name, loss](std::uint64_t seed) {
            const PipelineFixture f = make_fixture(seed);
            auto forward = [f, loss](Inputs in) {
              const Model m = model_from(in, f);
              Matrix text(kPipeBatch, kPipeEmbedDim), image(kPipeBatch, kPipeEmbedDim);
              for (std::size_t b = 0; b < kPipeBatch; ++b) {
                const Vector t = encode(f.texts[b], m.text);
                const Vector v = encode(f.images[b], m.visual);
                std::copy(t.begin(), t.end(), text.row(b).begin());
                std::copy(v.begin(), v.end(), image.row(b).begin());
              }
              BatchLoss value = compute_loss(cosine_sim_matrix(text, image), loss);
              return std::tuple{m, text, image, std::move(value)};
            };
            DiffOp op{name,
                      [forward](Inputs in) { return Matrix(1, 1, std::get<3>(forward(in)).loss); },
                      [forward, f](Inputs in, const Matrix&, const Matrix& up) {
                        auto [m, text, image, value] = forward(in);
                        const BinaryGrad d =
                            cosine_sim_matrix_vjp(text, image, scaled(value.grad, up(0, 0)));
                        ModelGrads g = ModelGrads::zeros_like(m);
                        for (std::size_t b = 0; b < kPipeBatch; ++b) {
                          encode_vjp(f.texts[b], m.text, d.lhs.row(b), g.text);
                          encode_vjp(f.images[b], m.visual, d.rhs.row(b), g.visual);
                        }
                        return std::vector<Matrix>{g.visual.w_proj, g.visual.b_proj,
                                                   g.visual.w_tok,  g.visual.w_bal,
                                                   g.text.w_proj,   g.text.b_proj,
                                                   g.text.w_tok,    g.text.w_bal};
                      }};
            return GradientInstance{std::move(op), model_inputs(seed)};
          }};
}

GradientCase encode_case(std::string name, PoolingSpec spec) {
  auto params_from = [spec](Inputs in) {
    return EncoderParams{in[1], in[2], {in[3], in[4]}, spec};
  };
  DiffOp op{std::move(name),
            [params_from](Inputs in) { return as_row(encode(in[0], params_from(in))); },
            [params_from](Inputs in, const Matrix&, const Matrix& up) {
              const EncoderParams p = params_from(in);
              EncoderGrads g = EncoderGrads::zeros_like(p);
              encode_vjp(in[0], p, up.data(), g);
              return std::vector<Matrix>{encode_input_vjp(in[0], p, up.data()), g.w_proj, g.b_proj,
                                         g.w_tok, g.w_bal};
            }};
  return fixed(std::move(op), [](std::uint64_t seed) {
    Rng rng(seed);
    return std::vector<Matrix>{rng.normal_matrix(rng.between(1, 6), 3),
                               rng.uniform_matrix(3, 4, -1, 1),
                               rng.uniform_matrix(1, 4, -0.5, 0.5),
                               rng.uniform_matrix(4, 1, -1, 1),
                               rng.uniform_matrix(4, 1, -1, 1)};
  });
}

}  // namespace

std::vector<GradientCase> gradient_cases() {
  std::vector<GradientCase> cases;

  cases.push_back(binary("matmul", matmul, matmul_vjp, random_inputs({{3, 4}, {4, 2}})));
  cases.push_back(unary(
      "transpose", transpose,
      [](const Matrix&, const Matrix&, const Matrix& up) { return transpose_vjp(up); },
      random_inputs({{3, 5}})));
  cases.push_back(binary("add_row_bias", add_row_bias, add_row_bias_vjp,
                         random_inputs({{4, 3}, {1, 3}})));
  cases.push_back(binary("hadamard", hadamard, hadamard_vjp, random_inputs({{3, 4}, {3, 4}})));
  cases.push_back(unary(
      "column_sum", column_sum,
      [](const Matrix& in, const Matrix&, const Matrix& up) { return column_sum_vjp(in, up); },
      random_inputs({{4, 3}})));
  cases.push_back(unary(
      "softmax_columns", softmax_columns,
      [](const Matrix&, const Matrix& out, const Matrix& up) { return softmax_columns_vjp(out, up); },
      [](std::uint64_t seed) { return std::vector<Matrix>{Rng(seed).normal_matrix(4, 3, 2.0)}; }));
  cases.push_back(unary(
      "softmax_vector", [](const Matrix& m) { return as_row(softmax_vector(m.data())); },
      [](const Matrix&, const Matrix& out, const Matrix& up) {
        return as_row(softmax_vector_vjp(out.data(), up.data()));
      },
      [](std::uint64_t seed) { return std::vector<Matrix>{Rng(seed).normal_matrix(1, 6, 2.0)}; }));
  cases.push_back(unary(
      "sort_desc_per_column", [](const Matrix& m) { return sort_desc_per_column(m).sorted; },
      [](const Matrix& in, const Matrix&, const Matrix& up) {
        return sort_desc_per_column_vjp(sort_desc_per_column(in).permutation, up);
      },
      random_inputs({{5, 3}})));
  cases.push_back(unary(
      "l2_normalize_rows", l2_normalize_rows,
      [](const Matrix& in, const Matrix& out, const Matrix& up) {
        return l2_normalize_rows_vjp(in, out, up);
      },
      random_inputs({{3, 4}})));
  cases.push_back(binary("cosine_sim_matrix", cosine_sim_matrix, cosine_sim_matrix_vjp,
                         random_inputs({{3, 4}, {3, 4}})));

  cases.push_back(fixed({"project",
                    [](Inputs in) { return project(in[0], in[1], in[2]); },
                    [](Inputs in, const Matrix&, const Matrix& up) {
                      const BinaryGrad bias = add_row_bias_vjp(matmul(in[0], in[1]), in[2], up);
                      const BinaryGrad mul = matmul_vjp(in[0], in[1], bias.lhs);
                      return std::vector<Matrix>{mul.lhs, mul.rhs, bias.rhs};
                    }},
                   random_inputs({{4, 3}, {3, 5}, {1, 5}})));

  auto pool_case = [](std::string name, PoolingSpec spec) {
    return unary(
        std::move(name),
        [spec](const Matrix& f) { return as_row(pool(f, spec, PoolParams::zeros(f.cols()))); },
        [spec](const Matrix& f, const Matrix&, const Matrix& up) {
          return pool_vjp(f, spec, PoolParams::zeros(f.cols()), up.data()).features;
        },
        random_inputs({{6, 3}}));
  };
  cases.push_back(pool_case("mean_pool", PoolingSpec{PoolMethod::mean}));
  cases.push_back(pool_case("max_pool", PoolingSpec{PoolMethod::max}));
  cases.push_back(pool_case("kmax_pool", PoolingSpec{PoolMethod::kmax, 3}));

  cases.push_back(fixed({"token_level_adpool",
                    [](Inputs in) { return as_row(token_level_adpool(in[0], in[1]).pooled); },
                    [](Inputs in, const Matrix&, const Matrix& up) {
                      TokenPoolGrads g = token_level_adpool_vjp(in[0], in[1], up.data());
                      return std::vector<Matrix>{std::move(g.features), std::move(g.w_tok)};
                    }},
                   random_inputs({{5, 3}, {3, 1}})));
  cases.push_back(unary(
      "embedding_level_adpool",
      [](const Matrix& f) { return as_row(embedding_level_adpool(f).pooled); },
      [](const Matrix& f, const Matrix&, const Matrix& up) {
        return embedding_level_adpool_vjp(f, up.data());
      },
      [](std::uint64_t seed) { return std::vector<Matrix>{Rng(seed).normal_matrix(5, 3, 1.5)}; }));
  cases.push_back(fixed({"balance_combine",
                    [](Inputs in) {
                      return as_row(balance_combine(in[0].data(), in[1].data(), in[2]).combined);
                    },
                    [](Inputs in, const Matrix&, const Matrix& up) {
                      BalanceGrads g = balance_combine_vjp(in[0].data(), in[1].data(), in[2], up.data());
                      return std::vector<Matrix>{as_row(g.t_tok), as_row(g.t_emb), std::move(g.w_bal)};
                    }},
                   random_inputs({{1, 4}, {1, 4}, {4, 1}})));
  cases.push_back(fixed({"adpool",
                    [](Inputs in) { return as_row(adpool(in[0], {in[1], in[2]}).pooled); },
                    [](Inputs in, const Matrix&, const Matrix& up) {
                      const PoolingSpec spec{PoolMethod::adpool};
                      PoolGrads g = pool_vjp(in[0], spec, {in[1], in[2]}, up.data());
                      return std::vector<Matrix>{std::move(g.features), std::move(g.w_tok),
                                                 std::move(g.w_bal)};
                    }},
                   random_inputs({{5, 3}, {3, 1}, {3, 1}})));
  cases.push_back(
      fixed({"fixed_balance_pool",
        [](Inputs in) {
          return as_row(pool(in[0], PoolingSpec::parse("fixed-balance:0.75,0.25"), {in[1], Matrix(3, 1)}));
        },
        [](Inputs in, const Matrix&, const Matrix& up) {
          PoolGrads g = pool_vjp(in[0], PoolingSpec::parse("fixed-balance:0.75,0.25"),
                                 {in[1], Matrix(3, 1)}, up.data());
          return std::vector<Matrix>{std::move(g.features), std::move(g.w_tok)};
        }},
       random_inputs({{5, 3}, {3, 1}})));

  cases.push_back(unary(
      "hard_triplet_loss",
      [](const Matrix& s) { return Matrix(1, 1, hard_triplet_loss(s, 0.2).loss); },
      [](const Matrix& s, const Matrix&, const Matrix& up) {
        return scaled(hard_triplet_loss(s, 0.2).grad, up(0, 0));
      },
      random_inputs({{5, 5}})));
  cases.push_back(unary(
      "info_nce_loss",
      [](const Matrix& s) {
        return Matrix(1, 1, info_nce_loss(s, select_negatives(s, 2), 0.05).loss);
      },
      [](const Matrix& s, const Matrix&, const Matrix& up) {
        return scaled(info_nce_loss(s, select_negatives(s, 2), 0.05).grad, up(0, 0));
      },
      random_inputs({{5, 5}})));
  cases.push_back(unary(
      "adopt_loss", [](const Matrix& s) { return Matrix(1, 1, adopt_loss(s, 0.05).loss); },
      [](const Matrix& s, const Matrix&, const Matrix& up) {
        return scaled(adopt_loss(s, 0.05).grad, up(0, 0));
      },
      random_inputs({{6, 6}})));

  cases.push_back(encode_case("encode[adpool]", PoolingSpec{PoolMethod::adpool}));
  cases.push_back(encode_case("encode[manual-visual]", PoolingSpec{PoolMethod::manual_visual}));

  LossConfig triplet;
  triplet.mode = LossMode::hard_triplet;
  cases.push_back(pipeline_case("pipeline[encode->adpool->hard-triplet]", triplet));
  LossConfig adopt;
  adopt.mode = LossMode::infonce_adaptive;
  cases.push_back(pipeline_case("pipeline[encode->adpool->adopt]", adopt));
  return cases;
}

std::vector<GradientSuiteEntry> run_gradient_suite(std::uint64_t first_seed, std::size_t seeds,
                                                   double tolerance) {
  std::vector<GradientSuiteEntry> out;
  for (const auto& c : gradient_cases()) {
    GradientSuiteEntry entry{c.name, 0.0, seeds, true};
    for (std::size_t s = 0; s < seeds; ++s) {
      const std::uint64_t seed = first_seed + s;
      GradientInstance inst = c.instantiate(seed);
      const GradCheckReport r = finite_diff_check(inst.op, std::move(inst.inputs), tolerance, seed);
      entry.worst_error = std::max(entry.worst_error, r.max_rel_error);
      entry.passed = entry.passed && r.passed;
    }
    out.push_back(entry);
  }
  return out;
}

}  // namespace adret
