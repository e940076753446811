#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "msui2i/core/tensor.hpp"

namespace msui2i {

// Reverse-mode autodiff over Tensor values. Graphs are built define-by-run;
// backward() walks the recorded tape once. Ops only record a backward
// closure when some input requires gradients and grad mode is on, so
// inference passes carry no tape.

class Node;
using Var = std::shared_ptr<Node>;

class Node {
 public:
  Tensor value;
  Tensor grad;  // empty until first accumulation
  bool requires_grad = false;
  std::string name;  // set for parameter leaves

  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.numel() == 0) grad = Tensor::zeros(value.shape());
  }
  void zero_grad() { grad = Tensor(); }
  bool has_grad() const { return grad.numel() != 0; }
};

Var make_leaf(Tensor value, std::string name = "");
Var make_const(Tensor value);
Var detach(const Var& v);

// Runs the tape rooted at a scalar node; accumulates into leaf grads.
void backward(const Var& root);

bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

enum class PadMode { Zero, Reflect };

// Elementwise
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var tanh_op(const Var& x);
Var abs_op(const Var& x);
Var square(const Var& x);
Var sqrt_shift(const Var& x, double eps);  // sqrt(x + eps)

// Shape / structure (CHW)
Var concat_channels(const std::vector<Var>& parts);
Var slice_channels(const Var& x, int from, int count);
Var channel_mean(const Var& x);  // (C,H,W) -> (1,H,W)
Var upsample_nearest(const Var& x, int factor);
Var upsample_nearest_to(const Var& x, int oh, int ow);
Var adaptive_avg_pool(const Var& x, int bh, int bw);

// Reductions
Var mean_all(const Var& x);  // -> scalar

// Conv / norm
// x: (Cin,H,W), w: (Cout,Cin,kh,kw), b: (Cout)
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad, PadMode mode);
// Same-size depthwise convolution with a fixed (non-learned) 2D kernel,
// reflect padding; used by the blur / edge operators.
Var depthwise_conv_fixed(const Var& x, const Tensor& kernel);
Var instance_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var softmax_channels(const Var& x);

// Mean over pixels of -log(max(prob[label], clamp)); prob: (C,H,W),
// labels: (H,W) tensor of integer class ids.
Var nll_indexed(const Var& prob, const Tensor& labels, double clamp);

// Output spatial size of a convolution.
inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace msui2i
