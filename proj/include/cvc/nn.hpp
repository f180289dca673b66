#ifndef CVC_NN_HPP
#define CVC_NN_HPP

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cvc/ops.hpp"

namespace cvc {

// A named trainable tensor. The leaf Node persists across forward passes so
// optimizer state and gradient accumulation attach to it.
struct Parameter {
  std::string name;
  Var node;
  Tensor adam_m, adam_v;  // AdamW state

  Tensor& value() { return node->val; }
  const Tensor& value() const { return node->val; }
  bool trainable() const { return node->requires_grad; }
  void set_trainable(bool on) { node->requires_grad = on; }
  uint64_t value_hash() const {
    return fnv1a64(node->val.v.data(), node->val.v.size() * sizeof(double));
  }
};

enum class Init {
  HeNormal,   // std = sqrt(2 / fan_in)
  Zero,
  One,
  Constant,   // uses init_value
};

// Owns every parameter of a model, keyed by hierarchical name
// ("flow_codec.enc1.w"). Iteration order is the sorted name order, which keeps
// optimizer traversal, hashing and checkpoints deterministic. Initialization
// draws from an RNG seeded by (master seed, parameter name), so values do not
// depend on construction order.
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed) : seed_(seed) {}

  Parameter* create(const std::string& name, Shape shape, Init init, double init_value = 0.0);
  Parameter* find(const std::string& name);

  std::vector<Parameter*> all();
  // Parameters whose name starts with any of the given prefixes.
  std::vector<Parameter*> with_prefix(const std::vector<std::string>& prefixes);

  void zero_grads();
  void set_trainable_all(bool on);
  int64_t total_elements() const;
  uint64_t values_hash() const;

  void save(std::ostream& out) const;
  void load(std::istream& in);  // shapes and names must match exactly

 private:
  uint64_t seed_;
  std::map<std::string, std::unique_ptr<Parameter>> params_;
};

// -- layers -------------------------------------------------------------------

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore& ps, const std::string& name, int c_in, int c_out, int k, int stride, int pad,
         Init init = Init::HeNormal);
  Var operator()(const Var& x) const { return conv2d(x, w_->node, b_->node, stride_, pad_); }

 private:
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
  int stride_ = 1, pad_ = 0;
};

// Transposed conv with kernel 2, stride 2: exact 2x upsampling.
class Upconv2x {
 public:
  Upconv2x() = default;
  Upconv2x(ParamStore& ps, const std::string& name, int c_in, int c_out);
  Var operator()(const Var& x) const { return conv2d_transpose(x, w_->node, b_->node, 2, 0); }

 private:
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
};

class DwConv2d {
 public:
  DwConv2d() = default;
  DwConv2d(ParamStore& ps, const std::string& name, int channels, int k);
  Var operator()(const Var& x) const { return dwconv2d(x, w_->node, b_->node, pad_); }

 private:
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
  int pad_ = 1;
};

// -- optimizer -----------------------------------------------------------------

// AdamW with decoupled weight decay. Decay is skipped for vector-shaped
// parameters (biases, norm affines, priors), i.e. anything shaped (1,C,1,1).
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, double lr, double weight_decay = 1e-4)
      : params_(std::move(params)), lr_(lr), weight_decay_(weight_decay) {}

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  void zero_grad();
  // Global-norm gradient clip followed by the update. Parameters with no
  // accumulated gradient this step are skipped.
  void step(double clip_norm = 1.0);

 private:
  std::vector<Parameter*> params_;
  double lr_;
  double weight_decay_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  int64_t t_ = 0;
};

}  // namespace cvc

#endif
