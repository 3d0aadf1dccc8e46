#pragma once

#include "exstyle/tensor.hpp"

#include <functional>
#include <map>
#include <utility>

namespace exstyle {

// Ordered record of executed ops. Forward execution appends one backward
// closure per recorded op; backward() replays them in reverse, accumulating
// gradients additively across fan-out.
class Tape {
  public:
    void record(std::function<void()> backfn) { entries_.push_back(std::move(backfn)); }
    std::size_t size() const { return entries_.size(); }

    // loss must be scalar; seeds d(loss)/d(loss) = 1 and replays the tape.
    void backward(Tensor& loss);

  private:
    std::vector<std::function<void()>> entries_;
};

namespace ops {

// 2-D convolution over a [Cin,H,W] input with a [Cout,Cin,kh,kw] kernel and
// [Cout] bias, zero padding. Output [Cout,Hout,Wout].
Tensor conv2d(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
// Nearest-neighbour x2 upsampling of a [C,H,W] tensor.
Tensor upsample_nearest2x(Tape* tape, const Tensor& x);
// Per-channel (z - mu) / sqrt(var + eps) over the spatial axes of [C,H,W].
Tensor instance_norm(Tape* tape, const Tensor& x, double eps = 1e-5);
// out[c,:,:] = gamma[c] * x[c,:,:] + beta[c].
Tensor scale_shift(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta);
Tensor leaky_relu(Tape* tape, const Tensor& x, double alpha = 0.2);
Tensor relu(Tape* tape, const Tensor& x);
Tensor tanh(Tape* tape, const Tensor& x);
// Fully connected: w is [out,in], x is [in], b is [out].
Tensor linear(Tape* tape, const Tensor& w, const Tensor& x, const Tensor& b);
// [C,H,W] -> [C] spatial mean.
Tensor global_avg_pool(Tape* tape, const Tensor& x);
// L2 normalization along the last axis; rank 1 ([n]) or rank 2 ([m,n]).
Tensor l2_normalize(Tape* tape, const Tensor& x);
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor dot(Tape* tape, const Tensor& a, const Tensor& b);
Tensor exp(Tape* tape, const Tensor& x);
Tensor log(Tape* tape, const Tensor& x);
Tensor sum(Tape* tape, const Tensor& x);
Tensor mean(Tape* tape, const Tensor& x);
// log(sum(exp(x))) over all elements, max-shifted.
Tensor logsumexp(Tape* tape, const Tensor& x);
// Row-wise logsumexp of [m,n] -> [m].
Tensor logsumexp_rows(Tape* tape, const Tensor& x);
// Diagonal of a square [m,m] -> [m].
Tensor take_diag(Tape* tape, const Tensor& x);
// A [m,k] times B^T with B [n,k] -> [m,n].
Tensor matmul_nt(Tape* tape, const Tensor& a, const Tensor& b);
// Adds b [n] to every row of a [m,n].
Tensor add_rowvec(Tape* tape, const Tensor& a, const Tensor& b);
// Stack scalar tensors into a vector [n].
Tensor concat_scalars(Tape* tape, const std::vector<Tensor>& xs);
// Gather x[C,H,W] at spatial locations -> [S,C].
Tensor gather_hw(Tape* tape, const Tensor& x, const std::vector<std::pair<int, int>>& locations);
Tensor scale(Tape* tape, const Tensor& x, double c);
Tensor add_const(Tape* tape, const Tensor& x, double c);

}  // namespace ops

using OpAttrs = std::map<std::string, double>;

// String-keyed dispatcher over the registered op set. Unknown kinds and
// shape mismatches are rejected with a diagnostic naming the op.
Tensor forward_op(Tape* tape, const std::string& kind, const std::vector<Tensor>& inputs,
                  const OpAttrs& attrs = {});
const std::vector<std::string>& registered_ops();

// Central finite-difference check of d f / d x for every coordinate of every
// input with requires_grad set. Returns the max relative error
// |analytic - numeric| / (|analytic| + |numeric| + 1e-8).
using TensorFn = std::function<Tensor(Tape*, std::vector<Tensor>&)>;
double gradient_check(const TensorFn& f, std::vector<Tensor> xs, double eps = 1e-4);

}  // namespace exstyle
