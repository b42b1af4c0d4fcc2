#pragma once

// One gradient-check case per nn-core op, used by test_nn and the
// acceptance binary.

#include <random>
#include <string>
#include <vector>

#include "gradcheck.hpp"

namespace mpa::testing {

struct OpCase {
  std::string name;
  nn::ParameterStore inputs;
  Builder build;
};

inline std::vector<OpCase> op_cases(std::uint64_t seed = 2024) {
  using namespace mpa::nn;
  std::mt19937_64 rng(seed);
  auto rt = [&](Shape s, float lo = -1.0f, float hi = 1.0f) { return random_tensor(std::move(s), rng, lo, hi); };
  auto store = [](std::initializer_list<Tensor> ts) {
    ParameterStore s;
    int i = 0;
    for (const auto& t : ts) s.add("p" + std::to_string(i++), t);
    return s;
  };

  std::vector<OpCase> cases;
  cases.push_back({"matmul", store({rt({3, 4}), rt({4, 5})}),
                   [](Tape&, const auto& v) { return matmul(v[0], v[1]); }});
  cases.push_back({"matmul_nt", store({rt({3, 4}), rt({5, 4})}),
                   [](Tape&, const auto& v) { return matmul_nt(v[0], v[1]); }});
  cases.push_back({"add (same shape, row broadcast)", store({rt({3, 4}), rt({3, 4}), rt({4})}),
                   [](Tape&, const auto& v) { return add(add(v[0], v[1]), v[2]); }});
  cases.push_back({"mul, scale", store({rt({2, 5}), rt({2, 5})}),
                   [](Tape&, const auto& v) { return scale(mul(v[0], v[1]), -1.7f); }});
  cases.push_back({"softmax axis 1", store({rt({3, 6}, -2, 2)}),
                   [](Tape&, const auto& v) { return softmax(v[0], 1); }});
  cases.push_back({"softmax axis 0", store({rt({4, 3}, -2, 2)}),
                   [](Tape&, const auto& v) { return softmax(v[0], 0); }});
  cases.push_back({"layer_norm", store({rt({3, 8}, -2, 2), rt({8}), rt({8})}),
                   [](Tape&, const auto& v) { return layer_norm(v[0], v[1], v[2]); }});
  cases.push_back({"gelu", store({rt({4, 5}, -3, 3)}), [](Tape&, const auto& v) { return gelu(v[0]); }});
  for (std::size_t stride : {1u, 2u}) {
    cases.push_back({"conv1d stride " + std::to_string(stride), store({rt({9, 3}), rt({5, 3, 4}, -0.5, 0.5), rt({4})}),
                     [stride](Tape&, const auto& v) { return conv1d(v[0], v[1], v[2], stride); }});
  }
  cases.push_back({"embedding (repeated ids)", store({rt({6, 4})}), [](Tape&, const auto& v) {
                     static const std::vector<int> ids{1, 4, 1, 0, 5};
                     return embedding(v[0], ids);
                   }});
  cases.push_back({"slice_cols, concat_cols, transpose", store({rt({3, 6}), rt({3, 2})}), [](Tape&, const auto& v) {
                     return transpose(concat_cols({slice_cols(v[0], 1, 3), v[1], slice_cols(v[0], 5, 1)}));
                   }});
  cases.push_back({"dropout (fixed key)", store({rt({4, 8})}),
                   [](Tape&, const auto& v) { return dropout(v[0], 0.3f, DropoutKey{9, 1, 2, 3}); }});
  cases.push_back({"cross_entropy (masked mean)", store({rt({5, 7}, -2, 2)}), [](Tape&, const auto& v) {
                     static const std::vector<int> t{1, 0, 6, 3, 3};
                     static const std::vector<bool> m{true, false, true, true, false};
                     return cross_entropy(v[0], t, m);
                   }});
  cases.push_back({"masked_mse", store({rt({5, 1})}), [](Tape&, const auto& v) {
                     static const std::vector<float> t{0.1f, 0.9f, 0.5f, 0.0f, 1.0f};
                     static const std::vector<bool> m{false, true, true, true, false};
                     return masked_mse(v[0], t, m);
                   }});
  cases.push_back({"sum", store({rt({3, 3})}), [](Tape&, const auto& v) { return sum(v[0]); }});
  return cases;
}

}  // namespace mpa::testing
