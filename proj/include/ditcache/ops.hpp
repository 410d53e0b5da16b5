#pragma once

#include "ditcache/tensor.hpp"

namespace ditcache::ad {

// Matrix product. Supported shapes:
//   (m,k)x(k,n) -> (m,n)
//   (B,m,k)x(k,n) -> (B,m,n)      shared right operand
//   (B,m,k)x(B,k,n) -> (B,m,n)    batched
Tensor matmul(const Tensor& a, const Tensor& b);

// Binary elementwise ops. Shapes must match exactly, or one side may be a
// single-element tensor (scalar broadcast). No other broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double c);

Tensor gelu(const Tensor& a);     // exact erf form
Tensor sigmoid(const Tensor& a);  // output strictly in (0,1)
Tensor softmax(const Tensor& a);  // last axis; rows sum to 1

// Last-axis layernorm with learnable scale/shift; gamma/beta shaped {last_dim}.
// eps stabilizes the variance so constant rows are well-defined.
Tensor layernorm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Sum of squared elementwise differences (squared Frobenius distance).
Tensor frobenius_sq(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& a);  // scalar

// x:(B,T,d) + v:(B,d), v added to every row x[b,t,:].
Tensor add_rows(const Tensor& x, const Tensor& v);

// table:(V,d), idx of length B -> (B,d); backward scatter-adds into table.
Tensor gather_rows(const Tensor& table, const std::vector<int>& idx);

Tensor transpose_last2(const Tensor& a);  // rank 2 or 3
Tensor reshape(const Tensor& a, Shape shape);

// (B,T,d) -> (B*h,T,d/h) and back; pure index permutations.
Tensor split_heads(const Tensor& x, int n_heads);
Tensor merge_heads(const Tensor& x, int n_heads);

// (B,C,H,W) -> (B, (H/p)*(W/p), C*p*p) and back.
Tensor patchify(const Tensor& x, int p);
Tensor unpatchify(const Tensor& tokens, int channels, int h, int w, int p);

Tensor detach(const Tensor& a);

// Backward through the active tape.
void backward(const Tensor& loss);

}  // namespace ditcache::ad
