#include "cvc/synth.hpp"

#include <cmath>

#include "cvc/common.hpp"

namespace cvc {

std::string to_string(MotionFamily f) {
  switch (f) {
    case MotionFamily::Translate: return "translate";
    case MotionFamily::Rotate: return "rotate";
    case MotionFamily::Elastic: return "elastic";
    case MotionFamily::Occlude: return "occlude";
  }
  return "?";
}

MotionFamily motion_family_from_string(const std::string& s) {
  if (s == "translate") return MotionFamily::Translate;
  if (s == "rotate") return MotionFamily::Rotate;
  if (s == "elastic") return MotionFamily::Elastic;
  if (s == "occlude") return MotionFamily::Occlude;
  throw DataError("unknown motion family '" + s + "' (translate|rotate|elastic|occlude)");
}

namespace {

double hash01(uint64_t seed, int64_t ix, int64_t iy, int oct, int ch) {
  uint64_t h = seed;
  h = fnv1a64(&ix, sizeof ix, h);
  h = fnv1a64(&iy, sizeof iy, h);
  h = fnv1a64(&oct, sizeof oct, h);
  h = fnv1a64(&ch, sizeof ch, h);
  return double(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }

// Continuous multi-octave value noise, defined on the whole plane.
double value_noise(uint64_t seed, double x, double y, int ch) {
  static const double kScale[3] = {24.0, 12.0, 6.0};
  static const double kAmp[3] = {1.0, 0.5, 0.25};
  double acc = 0.0;
  for (int o = 0; o < 3; ++o) {
    const double fx = x / kScale[o], fy = y / kScale[o];
    const int64_t x0 = int64_t(std::floor(fx)), y0 = int64_t(std::floor(fy));
    const double tx = smooth(fx - double(x0)), ty = smooth(fy - double(y0));
    const double v00 = hash01(seed, x0, y0, o, ch), v01 = hash01(seed, x0 + 1, y0, o, ch);
    const double v10 = hash01(seed, x0, y0 + 1, o, ch), v11 = hash01(seed, x0 + 1, y0 + 1, o, ch);
    acc += kAmp[o] * ((1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11));
  }
  return 0.1 + 0.8 * (acc / 1.75);
}

struct Vec2 {
  double x, y;
};

// Smooth per-step displacement field for the elastic family (value noise per
// component, zero-centered, rescaled to the requested amplitude).
Vec2 elastic_u(uint64_t seed, double x, double y, double amplitude) {
  const double ux = value_noise(seed ^ 0x9e3779b97f4a7c15ull, x, y, 7) - 0.5;
  const double uy = value_noise(seed ^ 0x3c6ef372fe94f82aull, x, y, 8) - 0.5;
  return Vec2{amplitude * ux / 0.4, amplitude * uy / 0.4};
}

}  // namespace

SyntheticClip generate_synthetic_clip(MotionFamily family, const SynthParams& p, uint64_t seed) {
  check_contract(p.frames >= 1 && p.height >= 8 && p.width >= 8, "generate_synthetic_clip: bad dims");
  SyntheticClip clip;
  clip.family = family;
  Rng rng(seed);

  const double cx = 0.5 * (p.width - 1), cy = 0.5 * (p.height - 1);
  Vec2 translate{0, 0};
  double omega = 0.0;
  Vec2 disc0{0, 0}, disc_vel{0, 0};
  double disc_r = 0.0;
  switch (family) {
    case MotionFamily::Translate:
      translate = Vec2{rng.uniform(-p.amplitude, p.amplitude), rng.uniform(-p.amplitude, p.amplitude)};
      break;
    case MotionFamily::Rotate:
      omega = p.amplitude / (0.5 * std::hypot(double(p.width), double(p.height)));
      if (rng.uniform() < 0.5) omega = -omega;
      break;
    case MotionFamily::Elastic:
      break;
    case MotionFamily::Occlude:
      translate = Vec2{rng.uniform(-p.amplitude, p.amplitude), rng.uniform(-p.amplitude, p.amplitude)};
      disc_r = 0.15 * std::min(p.width, p.height);
      disc0 = Vec2{rng.uniform(0.25, 0.75) * p.width, rng.uniform(0.25, 0.75) * p.height};
      disc_vel = Vec2{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
      break;
  }

  // Backward map for one step: source position of the content now at (x, y).
  auto psi = [&](double x, double y) -> Vec2 {
    switch (family) {
      case MotionFamily::Translate:
      case MotionFamily::Occlude:
        return Vec2{x + translate.x, y + translate.y};
      case MotionFamily::Rotate: {
        const double dx = x - cx, dy = y - cy;
        const double c = std::cos(omega), s = std::sin(omega);
        return Vec2{cx + c * dx - s * dy, cy + s * dx + c * dy};
      }
      case MotionFamily::Elastic: {
        Vec2 u = elastic_u(seed, x, y, p.amplitude);
        return Vec2{x + u.x, y + u.y};
      }
    }
    return Vec2{x, y};
  };

  auto disc_center = [&](int t) {
    return Vec2{disc0.x + t * disc_vel.x, disc0.y + t * disc_vel.y};
  };
  auto in_disc = [&](Vec2 c, double x, double y) {
    return std::hypot(x - c.x, y - c.y) <= disc_r;
  };

  for (int t = 0; t < p.frames; ++t) {
    Tensor frame(Shape{1, 3, p.height, p.width});
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x) {
        Vec2 q{double(x), double(y)};
        for (int k = 0; k < t; ++k) q = psi(q.x, q.y);
        for (int c = 0; c < 3; ++c) frame.at(0, c, y, x) = value_noise(seed, q.x, q.y, c);
        if (family == MotionFamily::Occlude && in_disc(disc_center(t), x, y)) {
          frame.at(0, 0, y, x) = 0.85;
          frame.at(0, 1, y, x) = 0.2;
          frame.at(0, 2, y, x) = 0.25;
        }
      }
    clip.frames.push_back(std::move(frame));

    if (t == 0) continue;
    Tensor flow(Shape{1, 2, p.height, p.width});
    Tensor valid(Shape{1, 1, p.height, p.width}, 1.0);
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x) {
        Vec2 src = psi(double(x), double(y));
        flow.at(0, 0, y, x) = src.x - x;
        flow.at(0, 1, y, x) = src.y - y;
        bool ok = src.x >= 0 && src.x <= p.width - 1 && src.y >= 0 && src.y <= p.height - 1;
        if (family == MotionFamily::Occlude)
          ok = ok && !in_disc(disc_center(t), x, y) && !in_disc(disc_center(t - 1), src.x, src.y);
        if (!ok) valid.at(0, 0, y, x) = 0.0;
      }
    clip.flows.push_back(std::move(flow));
    clip.valid.push_back(std::move(valid));
  }
  return clip;
}

}  // namespace cvc
