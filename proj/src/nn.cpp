#include "cvc/nn.hpp"

#include <cmath>
#include <istream>
#include <ostream>

namespace cvc {

namespace {

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("parameter blob truncated");
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

}  // namespace

Parameter* ParamStore::create(const std::string& name, Shape shape, Init init, double init_value) {
  check_contract(!params_.count(name), "duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  Tensor t(shape);
  switch (init) {
    case Init::Zero:
      break;
    case Init::One:
      for (auto& x : t.v) x = 1.0;
      break;
    case Init::Constant:
      for (auto& x : t.v) x = init_value;
      break;
    case Init::HeNormal: {
      Rng rng(seed_ ^ fnv1a64(name));
      const int fan_in = shape.c * shape.h * shape.w;
      const double stddev = std::sqrt(2.0 / double(fan_in));
      for (auto& x : t.v) x = stddev * rng.normal();
      break;
    }
  }
  p->node = make_leaf(std::move(t), true);
  p->node->requires_grad = true;  // independent of any NoGradGuard active now
  Parameter* raw = p.get();
  params_[name] = std::move(p);
  return raw;
}

Parameter* ParamStore::find(const std::string& name) {
  auto it = params_.find(name);
  return it == params_.end() ? nullptr : it->second.get();
}

std::vector<Parameter*> ParamStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& [k, v] : params_) out.push_back(v.get());
  return out;
}

std::vector<Parameter*> ParamStore::with_prefix(const std::vector<std::string>& prefixes) {
  std::vector<Parameter*> out;
  for (auto& [k, v] : params_)
    for (const auto& p : prefixes)
      if (k.rfind(p, 0) == 0) {
        out.push_back(v.get());
        break;
      }
  return out;
}

void ParamStore::zero_grads() {
  for (auto& [k, v] : params_) v->node->zero_grad();
}

void ParamStore::set_trainable_all(bool on) {
  for (auto& [k, v] : params_) v->set_trainable(on);
}

int64_t ParamStore::total_elements() const {
  int64_t n = 0;
  for (auto& [k, v] : params_) n += v->value().numel();
  return n;
}

uint64_t ParamStore::values_hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (auto& [k, v] : params_) {
    h = fnv1a64(k, h);
    h = fnv1a64(v->value().v.data(), v->value().v.size() * sizeof(double), h);
  }
  return h;
}

void ParamStore::save(std::ostream& out) const {
  write_u32(out, uint32_t(params_.size()));
  for (auto& [k, v] : params_) {
    write_u32(out, uint32_t(k.size()));
    out.write(k.data(), std::streamsize(k.size()));
    const Shape s = v->value().shape;
    write_u32(out, uint32_t(s.n));
    write_u32(out, uint32_t(s.c));
    write_u32(out, uint32_t(s.h));
    write_u32(out, uint32_t(s.w));
    out.write(reinterpret_cast<const char*>(v->value().v.data()),
              std::streamsize(v->value().v.size() * sizeof(double)));
  }
}

void ParamStore::load(std::istream& in) {
  const uint32_t count = read_u32(in);
  if (count != params_.size())
    throw DataError("parameter blob holds " + std::to_string(count) + " tensors, model has " +
                    std::to_string(params_.size()));
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t len = read_u32(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    Shape s{int(read_u32(in)), int(read_u32(in)), int(read_u32(in)), int(read_u32(in))};
    Parameter* p = find(name);
    if (!p) throw DataError("parameter blob names unknown tensor: " + name);
    if (!(p->value().shape == s))
      throw DataError("parameter " + name + " shape mismatch: blob " + s.str() + " vs model " +
                      p->value().shape.str());
    in.read(reinterpret_cast<char*>(p->value().v.data()),
            std::streamsize(p->value().v.size() * sizeof(double)));
    if (!in) throw DataError("parameter blob truncated while reading " + name);
  }
}

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int c_in, int c_out, int k, int stride,
               int pad, Init init)
    : stride_(stride), pad_(pad) {
  w_ = ps.create(name + ".w", Shape{c_out, c_in, k, k}, init);
  b_ = ps.create(name + ".b", Shape{1, c_out, 1, 1}, Init::Zero);
}

Upconv2x::Upconv2x(ParamStore& ps, const std::string& name, int c_in, int c_out) {
  w_ = ps.create(name + ".w", Shape{c_in, c_out, 2, 2}, Init::HeNormal);
  b_ = ps.create(name + ".b", Shape{1, c_out, 1, 1}, Init::Zero);
}

DwConv2d::DwConv2d(ParamStore& ps, const std::string& name, int channels, int k) : pad_((k - 1) / 2) {
  w_ = ps.create(name + ".w", Shape{channels, 1, k, k}, Init::HeNormal);
  b_ = ps.create(name + ".b", Shape{1, channels, 1, 1}, Init::Zero);
}

void AdamW::zero_grad() {
  for (auto* p : params_) p->node->zero_grad();
}

void AdamW::step(double clip_norm) {
  double sq = 0.0;
  for (auto* p : params_) {
    if (!p->node->grad_ready) continue;
    for (double g : p->node->grad.v) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  const double scale = (clip_norm > 0.0 && norm > clip_norm) ? clip_norm / norm : 1.0;

  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, double(t_));
  const double bc2 = 1.0 - std::pow(beta2_, double(t_));
  for (auto* p : params_) {
    if (!p->node->grad_ready) continue;
    Tensor& val = p->value();
    if (p->adam_m.numel() != val.numel()) {
      p->adam_m = Tensor::zeros(val.shape);
      p->adam_v = Tensor::zeros(val.shape);
    }
    const Shape s = val.shape;
    const bool decay = weight_decay_ > 0.0 && !(s.n == 1 && s.h == 1 && s.w == 1);
    const int64_t n = val.numel();
    for (int64_t i = 0; i < n; ++i) {
      const double g = p->node->grad.v[size_t(i)] * scale;
      double& m = p->adam_m.v[size_t(i)];
      double& v = p->adam_v.v[size_t(i)];
      m = beta1_ * m + (1.0 - beta1_) * g;
      v = beta2_ * v + (1.0 - beta2_) * g * g;
      double update = (m / bc1) / (std::sqrt(v / bc2) + eps_);
      if (decay) update += weight_decay_ * val.v[size_t(i)];
      val.v[size_t(i)] -= lr_ * update;
    }
  }
}

}  // namespace cvc
