#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "boed/grad/tape.hpp"

namespace boed::grad {

// Binary elementwise ops broadcast rank-2 operands: along each axis the sizes
// must match or one of them must be 1.

Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);
// x * w + b, with b a 1 x out row.
Var affine(Var x, Var w, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var minimum(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

Var tanh(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);

// Full reduction to a 1x1 scalar.
Var sum(Var a);
Var mean(Var a);
// axis 0 reduces rows (result 1 x cols), axis 1 reduces columns (rows x 1).
Var sum(Var a, int axis);
Var mean(Var a, int axis);
Var logsumexp(Var a, int axis);
Var log_softmax(Var a);  // along axis 1

// axis 0 stacks rows, axis 1 stacks columns.
Var concat(const std::vector<Var>& parts, int axis);
Var slice(Var a, int axis, std::size_t begin, std::size_t end);

// Row-segment reductions. `offsets` has nseg+1 entries, offsets[0] == 0 and
// offsets.back() == rows of the input; an empty segment yields a zero row.
Var segment_sum(Var x, std::span<const std::size_t> offsets);
// Multi-head scaled dot-product self-attention applied independently within
// each row segment. q, k, v are (total_rows x D) with D divisible by heads.
Var segment_attention(Var q, Var k, Var v, std::span<const std::size_t> offsets,
                      std::size_t heads);

Var gather_rows(Var table, std::span<const std::size_t> index);
// out(i, 0) = a(i, index[i])
Var pick(Var a, std::span<const std::size_t> index);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator+(Var a, double s) { return add_scalar(a, s); }
inline Var operator-(Var a, double s) { return add_scalar(a, -s); }

// Plain (tape-free) numerics shared by several modules.
double logsumexp(std::span<const double> x);
double sigmoid(double x);
double softplus(double x);
double logit(double p);

}  // namespace boed::grad
