#include "attnmask/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "attnmask/random.hpp"

namespace attnmask {

std::size_t BinaryMask::area() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

std::optional<Box> BinaryMask::tight_box() const {
  int x0 = width, y0 = height, x1 = -1, y1 = -1;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!at(y, x)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) return std::nullopt;
  return Box::from_corners(x0, y0, x1 + 1, y1 + 1);
}

void SynthSpec::validate() const {
  if (canvas < 32 || canvas % 32 != 0) throw std::invalid_argument("synth: canvas must be a multiple of 32");
  if (num_classes < 1 || num_classes > 3) throw std::invalid_argument("synth: 1 to 3 classes supported");
  if (min_objects < 1 || max_objects < min_objects) throw std::invalid_argument("synth: bad object count range");
  if (min_size < 4 || max_size < min_size || max_size >= canvas) {
    throw std::invalid_argument("synth: bad object size range");
  }
}

namespace {

using Rgb = std::array<double, 3>;

constexpr std::array<Rgb, 3> kClassColours{{{0.85, 0.15, 0.15}, {0.15, 0.75, 0.20}, {0.20, 0.30, 0.90}}};
constexpr std::array<Rgb, 2> kDistractorColours{{{0.90, 0.85, 0.20}, {0.80, 0.20, 0.80}}};

enum class Shape { kRectangle, kDisk, kTriangle, kRing, kCross };

struct Placed {
  Shape shape;
  double cx, cy, w, h;
};

bool inside(const Placed& p, double px, double py) {
  const double dx = px - p.cx, dy = py - p.cy;
  switch (p.shape) {
    case Shape::kRectangle:
      return std::abs(dx) <= 0.5 * p.w && std::abs(dy) <= 0.5 * p.h;
    case Shape::kDisk:
      return dx * dx + dy * dy <= 0.25 * p.w * p.w;
    case Shape::kTriangle: {
      // Apex at the top, base at the bottom.
      const double t = (dy + 0.5 * p.h) / p.h;  // 0 at apex, 1 at base
      return t >= 0.0 && t <= 1.0 && std::abs(dx) <= 0.5 * p.w * t;
    }
    case Shape::kRing: {
      const double r2 = dx * dx + dy * dy;
      return r2 <= 0.25 * p.w * p.w && r2 >= 0.0625 * p.w * p.w;
    }
    case Shape::kCross:
      return (std::abs(dx) <= 0.5 * p.w && std::abs(dy) <= 0.12 * p.h) ||
             (std::abs(dy) <= 0.5 * p.h && std::abs(dx) <= 0.12 * p.w);
  }
  return false;
}

BinaryMask rasterize(const Placed& p, int size) {
  BinaryMask m(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) m.at(y, x) = inside(p, x + 0.5, y + 0.5) ? 1 : 0;
  }
  return m;
}

void paint(Tensor& img, const BinaryMask& m, const Rgb& colour) {
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = colour[c];
    }
  }
}

std::size_t overlap(const BinaryMask& a, const BinaryMask& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) n += (a.data[i] & b.data[i]);
  return n;
}

Placed random_placement(Shape shape, const SynthSpec& spec, Rng& rng) {
  const double w = rng.uniform_int(spec.min_size, spec.max_size);
  double h = w;
  if (shape == Shape::kRectangle) h = std::max<double>(spec.min_size / 2, std::round(w * rng.uniform(0.5, 1.0)));
  const double cx = rng.uniform(0.5 * w + 1, spec.canvas - 0.5 * w - 1);
  const double cy = rng.uniform(0.5 * h + 1, spec.canvas - 0.5 * h - 1);
  return Placed{shape, cx, cy, w, h};
}

Sample synth_one(const SynthSpec& spec, Rng& rng) {
  const int n = spec.canvas;
  Sample s;
  s.image = Tensor({3, n, n});
  const double base = rng.uniform(0.35, 0.6);
  for (double& v : s.image.data()) v = base;

  if (rng.bernoulli(spec.distractor_prob)) {
    const Shape shape = rng.bernoulli(0.5) ? Shape::kRing : Shape::kCross;
    const Placed p = random_placement(shape, spec, rng);
    paint(s.image, rasterize(p, n), kDistractorColours[shape == Shape::kRing ? 1 : 0]);
  }

  struct Obj {
    int cls;
    BinaryMask full;
    BinaryMask visible;
    Rgb colour;
  };
  std::vector<Obj> objs;
  const int count = rng.uniform_int(spec.min_objects, spec.max_objects);
  for (int k = 0; k < count; ++k) {
    const int cls = rng.uniform_int(1, spec.num_classes);
    const Shape shape = static_cast<Shape>(cls - 1);
    const bool occlude = !objs.empty() && rng.bernoulli(spec.occlusion_prob);
    const int target = occlude ? rng.uniform_int(0, static_cast<int>(objs.size()) - 1) : -1;
    for (int attempt = 0; attempt < 60; ++attempt) {
      const Placed p = random_placement(shape, spec, rng);
      BinaryMask m = rasterize(p, n);
      if (m.area() == 0) continue;
      bool ok = true;
      for (int j = 0; j < static_cast<int>(objs.size()); ++j) {
        if (j == target) {
          const double frac = static_cast<double>(overlap(m, objs[j].visible)) /
                              static_cast<double>(objs[j].full.area());
          ok = ok && frac >= 0.2 && frac <= 0.6;
        } else {
          // Disjoint boxes with a one-pixel gap.
          const Box a = *m.tight_box();
          const Box b = *objs[j].full.tight_box();
          const Box grown = Box::make(b.cx, b.cy, b.w + 2, b.h + 2);
          ok = ok && intersection_area(a, grown) == 0.0;
        }
      }
      if (!ok) continue;
      for (auto& o : objs) {
        for (std::size_t i = 0; i < m.data.size(); ++i) {
          if (m.data[i]) o.visible.data[i] = 0;
        }
      }
      Rgb colour = kClassColours[cls - 1];
      for (double& c : colour) c = std::clamp(c + rng.uniform(-0.08, 0.08), 0.0, 1.0);
      objs.push_back(Obj{cls, m, m, colour});
      break;
    }
  }

  for (const auto& o : objs) paint(s.image, o.full, o.colour);
  // Later objects are painted over earlier ones, matching the visible masks.
  for (const auto& o : objs) {
    if (o.visible.area() == 0) continue;
    s.boxes.push_back(*o.visible.tight_box());
    s.classes.push_back(o.cls);
    s.masks.push_back(o.visible);
  }
  for (double& v : s.image.data()) {
    v = std::clamp(v + rng.uniform(-spec.noise, spec.noise), 0.0, 1.0);
  }
  return s;
}

void fnv(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
}

}  // namespace

std::vector<Sample> synth_dataset(const SynthSpec& spec, std::uint64_t seed, int n) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("synth_dataset: n must be >= 1");
  Rng rng(seed);
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(synth_one(spec, rng));
  return out;
}

std::uint64_t dataset_hash(const std::vector<Sample>& samples) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& s : samples) {
    fnv(h, s.image.data().data(), s.image.size() * sizeof(double));
    for (const auto& b : s.boxes) fnv(h, &b, sizeof(Box));
    fnv(h, s.classes.data(), s.classes.size() * sizeof(int));
    for (const auto& m : s.masks) fnv(h, m.data.data(), m.data.size());
  }
  return h;
}

Sample augment(const Sample& s, AugmentOp op, const CropRegion& region) {
  const int c_n = s.image.channels(), h = s.height(), w = s.width();
  Sample out;
  switch (op) {
    case AugmentOp::kHFlip: {
      out.image = Tensor(s.image.shape());
      for (int c = 0; c < c_n; ++c) {
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) out.image.at(c, y, x) = s.image.at(c, y, w - 1 - x);
        }
      }
      for (std::size_t k = 0; k < s.masks.size(); ++k) {
        BinaryMask m(h, w);
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) m.at(y, x) = s.masks[k].at(y, w - 1 - x);
        }
        out.masks.push_back(std::move(m));
        out.classes.push_back(s.classes[k]);
        const Box& b = s.boxes[k];
        out.boxes.push_back(Box::make(w - b.cx, b.cy, b.w, b.h));
      }
      return out;
    }
    case AugmentOp::kRot90: {
      // Clockwise: source (x, y) lands at (h - 1 - y, x).
      out.image = Tensor({c_n, w, h});
      for (int c = 0; c < c_n; ++c) {
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) out.image.at(c, x, h - 1 - y) = s.image.at(c, y, x);
        }
      }
      for (std::size_t k = 0; k < s.masks.size(); ++k) {
        BinaryMask m(w, h);
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) m.at(x, h - 1 - y) = s.masks[k].at(y, x);
        }
        out.masks.push_back(std::move(m));
        out.classes.push_back(s.classes[k]);
        const Box& b = s.boxes[k];
        out.boxes.push_back(Box::make(h - b.cy, b.cx, b.h, b.w));
      }
      return out;
    }
    case AugmentOp::kCrop: {
      if (region.width < 1 || region.height < 1 || region.x < 0 || region.y < 0 ||
          region.x + region.width > w || region.y + region.height > h) {
        throw std::invalid_argument("augment: crop region outside the canvas");
      }
      out.image = Tensor({c_n, region.height, region.width});
      for (int c = 0; c < c_n; ++c) {
        for (int y = 0; y < region.height; ++y) {
          for (int x = 0; x < region.width; ++x) {
            out.image.at(c, y, x) = s.image.at(c, y + region.y, x + region.x);
          }
        }
      }
      for (std::size_t k = 0; k < s.masks.size(); ++k) {
        BinaryMask m(region.height, region.width);
        for (int y = 0; y < region.height; ++y) {
          for (int x = 0; x < region.width; ++x) m.at(y, x) = s.masks[k].at(y + region.y, x + region.x);
        }
        if (m.area() * 4 < s.masks[k].area() || m.area() == 0) continue;
        out.boxes.push_back(*m.tight_box());
        out.masks.push_back(std::move(m));
        out.classes.push_back(s.classes[k]);
      }
      return out;
    }
  }
  return out;
}

}  // namespace attnmask
