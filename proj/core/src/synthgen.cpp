#include "lgvi/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <set>
#include <sstream>
#include <stdexcept>

namespace lgvi::synth {

namespace {

struct NamedColor {
  const char* name;
  int r, g, b;
};

// Object palette is saturated, background palette is gray-family, so an
// object color never collides with the backdrop.
constexpr NamedColor kObjectPalette[] = {
    {"red", 220, 40, 40},    {"green", 40, 180, 70},   {"blue", 50, 90, 220},
    {"yellow", 230, 210, 50}, {"magenta", 200, 60, 200}, {"cyan", 60, 200, 200},
    {"orange", 240, 140, 40}, {"purple", 130, 60, 190},
};

constexpr int kBackgroundLevels[] = {40, 96, 160, 214};

std::array<double, 3> to_unit(int r, int g, int b) {
  return {r / 255.0, g / 255.0, b / 255.0};
}

double quantize255(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

double quarter(double v) { return std::round(v * 4.0) / 4.0; }

// Hard-edged coverage test at a pixel center. No anti-aliasing by design:
// masks are exact and triplet consistency is bit-level.
bool covers(const ObjectSpec& o, double cx, double cy, double px, double py) {
  double dx = px - cx, dy = py - cy;
  switch (o.shape) {
    case ShapeKind::circle:
      return dx * dx + dy * dy <= o.size * o.size;
    case ShapeKind::square:
      return std::abs(dx) <= o.size && std::abs(dy) <= o.size;
    case ShapeKind::triangle: {
      // equilateral, apex up, inscribed in the circle of radius size
      double ax = 0, ay = -o.size;
      double bx = -0.8660254037844386 * o.size, by = 0.5 * o.size;
      double cx2 = 0.8660254037844386 * o.size, cy2 = 0.5 * o.size;
      auto side = [&](double x1, double y1, double x2, double y2) {
        return (x2 - x1) * (dy - y1) - (y2 - y1) * (dx - x1);
      };
      double s1 = side(ax, ay, bx, by), s2 = side(bx, by, cx2, cy2), s3 = side(cx2, cy2, ax, ay);
      bool neg = s1 < 0 || s2 < 0 || s3 < 0;
      bool pos = s1 > 0 || s2 > 0 || s3 > 0;
      return !(neg && pos);
    }
  }
  return false;
}

void paint_background(const SceneSpec& s, int64_t t, VideoClip& clip) {
  for (int64_t y = 0; y < s.height; ++y) {
    for (int64_t x = 0; x < s.width; ++x) {
      std::array<double, 3> c{};
      switch (s.background) {
        case BackgroundKind::solid:
          c = s.bg_a;
          break;
        case BackgroundKind::gradient: {
          double a = s.width > 1 ? static_cast<double>(x) / (s.width - 1) : 0.0;
          for (int k = 0; k < 3; ++k) c[k] = quantize255(s.bg_a[k] + (s.bg_b[k] - s.bg_a[k]) * a);
          break;
        }
        case BackgroundKind::checker:
          c = ((x / s.checker_cell + y / s.checker_cell) % 2 == 0) ? s.bg_a : s.bg_b;
          break;
      }
      for (int k = 0; k < 3; ++k) clip.at(t, y, x, k) = static_cast<float>(c[k]);
    }
  }
}

void paint_objects(const SceneSpec& s, int64_t t, VideoClip& clip, int skip_index) {
  // painter's algorithm: later objects are in front
  for (size_t i = 0; i < s.objects.size(); ++i) {
    if (static_cast<int>(i) == skip_index) continue;
    const ObjectSpec& o = s.objects[i];
    double cx = o.x0 + o.vx * t, cy = o.y0 + o.vy * t;
    int64_t ylo = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cy - o.size - 1)));
    int64_t yhi = std::min<int64_t>(s.height - 1, static_cast<int64_t>(std::ceil(cy + o.size + 1)));
    int64_t xlo = std::max<int64_t>(0, static_cast<int64_t>(std::floor(cx - o.size - 1)));
    int64_t xhi = std::min<int64_t>(s.width - 1, static_cast<int64_t>(std::ceil(cx + o.size + 1)));
    for (int64_t y = ylo; y <= yhi; ++y)
      for (int64_t x = xlo; x <= xhi; ++x)
        if (covers(o, cx, cy, x + 0.5, y + 0.5))
          for (int k = 0; k < 3; ++k) clip.at(t, y, x, k) = static_cast<float>(o.rgb[k]);
  }
}

// Footprint area of the shape when fully inside the frame, in pixels; used to
// budget the size filter during generation (approximate, filter re-checks).
double nominal_area(const ObjectSpec& o) {
  switch (o.shape) {
    case ShapeKind::circle:
      return 3.14159265358979 * o.size * o.size;
    case ShapeKind::square:
      return 4.0 * o.size * o.size;
    case ShapeKind::triangle:
      return 3.0 * 0.8660254037844386 * o.size * o.size / 2.0 * 4.0 / 3.0;  // (3*sqrt(3)/4) r^2
  }
  return 0;
}

}  // namespace

const char* shape_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::circle: return "circle";
    case ShapeKind::square: return "square";
    case ShapeKind::triangle: return "triangle";
  }
  return "?";
}

const char* background_name(BackgroundKind k) {
  switch (k) {
    case BackgroundKind::solid: return "solid";
    case BackgroundKind::gradient: return "gradient";
    case BackgroundKind::checker: return "checker";
  }
  return "?";
}

const std::vector<int>& dilation_sweep() {
  static const std::vector<int> sweep = {0, 3, 5, 7, 10, 15};
  return sweep;
}

std::optional<std::string> object_side(const SceneSpec& scene, const ObjectSpec& obj) {
  double mean_x = obj.x0 + obj.vx * (scene.frames - 1) / 2.0;
  double mid = scene.width / 2.0;
  if (mean_x < mid - 1.0) return "left";
  if (mean_x > mid + 1.0) return "right";
  return std::nullopt;
}

std::optional<std::string> object_direction(const ObjectSpec& obj) {
  double ax = std::abs(obj.vx), ay = std::abs(obj.vy);
  if (std::max(ax, ay) < 0.25) return std::nullopt;
  if (ax >= ay) return obj.vx > 0 ? "right" : "left";
  return obj.vy > 0 ? "down" : "up";
}

void validate_scene(const SceneSpec& s) {
  if (s.frames < 2) throw std::invalid_argument("scene: T must be >= 2");
  if (s.objects.empty() || s.objects.size() > 4)
    throw std::invalid_argument("scene: need 1..4 objects");
  for (const auto& o : s.objects) {
    if (o.size < 2) throw std::invalid_argument("scene: object size < 2 px");
    for (double c : o.rgb)
      if (c < 0 || c > 1) throw std::invalid_argument("scene: rgb out of range");
    for (int64_t t = 0; t < s.frames; ++t) {
      double cx = o.x0 + o.vx * t, cy = o.y0 + o.vy * t;
      if (cx < 0 || cx > s.width - 1 || cy < 0 || cy > s.height - 1)
        throw std::invalid_argument("scene: object leaves the frame");
    }
  }
  // pairwise distinguishable by color, shape, or side
  std::set<std::string> keys;
  for (const auto& o : s.objects) {
    auto side = object_side(s, o);
    std::string key = o.color_name + "|" + shape_name(o.shape) + "|" + side.value_or("-");
    if (!keys.insert(key).second)
      throw std::invalid_argument("scene: objects not distinguishable (" + key + ")");
  }
}

SceneSpec generate_scene(uint64_t seed, const GeneratorConfig& cfg) {
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    Rng rng(hash_mix(hash_mix(seed, 0x5ce9e), attempt));
    SceneSpec s;
    s.seed = seed;
    s.frames = cfg.frames;
    s.height = cfg.height;
    s.width = cfg.width;
    s.background = static_cast<BackgroundKind>(rng.uniform_int(3));
    int la = static_cast<int>(rng.uniform_int(4));
    int lb = (la + 1 + static_cast<int>(rng.uniform_int(3))) % 4;
    s.bg_a = to_unit(kBackgroundLevels[la], kBackgroundLevels[la], kBackgroundLevels[la]);
    s.bg_b = to_unit(kBackgroundLevels[lb], kBackgroundLevels[lb], kBackgroundLevels[lb]);

    int n = cfg.min_objects +
            static_cast<int>(rng.uniform_int(cfg.max_objects - cfg.min_objects + 1));
    std::set<std::string> keys;
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      bool placed = false;
      for (int tries = 0; tries < cfg.max_retries; ++tries) {
        ObjectSpec o;
        o.shape = static_cast<ShapeKind>(rng.uniform_int(3));
        const NamedColor& col = kObjectPalette[rng.uniform_int(8)];
        o.color_name = col.name;
        o.rgb = to_unit(col.r, col.g, col.b);
        o.size = quarter(rng.uniform(cfg.min_size, cfg.max_size));
        if (rng.uniform() < 0.3) {
          o.vx = o.vy = 0;
        } else {
          o.vx = quarter(rng.uniform(-cfg.max_speed, cfg.max_speed));
          o.vy = quarter(rng.uniform(-cfg.max_speed, cfg.max_speed));
        }
        // keep the full footprint inside the frame at every t
        double span = (cfg.frames - 1);
        double xlo = o.size + 1 + std::max(0.0, -o.vx * span);
        double xhi = cfg.width - 2 - o.size - std::max(0.0, o.vx * span);
        double ylo = o.size + 1 + std::max(0.0, -o.vy * span);
        double yhi = cfg.height - 2 - o.size - std::max(0.0, o.vy * span);
        if (xlo > xhi || ylo > yhi) continue;
        o.x0 = quarter(rng.uniform(xlo, xhi));
        o.y0 = quarter(rng.uniform(ylo, yhi));

        SceneSpec probe = s;
        probe.objects.push_back(o);
        auto side = object_side(probe, o);
        std::string key = o.color_name + "|" + shape_name(o.shape) + "|" + side.value_or("-");
        if (keys.count(key)) continue;
        // leave headroom under the relative-size filter
        if (nominal_area(o) > kMaxRelativeMaskSize * cfg.width * cfg.height) continue;
        keys.insert(key);
        s.objects.push_back(o);
        placed = true;
        break;
      }
      if (!placed) ok = false;
    }
    if (!ok) continue;
    try {
      validate_scene(s);
      // the grammar cannot express "no side"; accept only scenes where every
      // object has some unique expression
      for (size_t i = 0; i < s.objects.size(); ++i)
        (void)make_referring_expression(s, static_cast<int>(i));
      return s;
    } catch (const std::exception&) {
      continue;
    }
  }
  throw std::runtime_error("generate_scene: unsatisfiable constraints for seed " +
                           std::to_string(seed));
}

uint64_t scene_digest(const SceneSpec& s) {
  std::ostringstream os;
  os << s.seed << "|" << background_name(s.background) << "|" << s.bg_a[0] << "," << s.bg_b[0]
     << "|" << s.frames << "x" << s.height << "x" << s.width;
  for (const auto& o : s.objects)
    os << "|" << shape_name(o.shape) << "," << o.color_name << "," << o.size << "," << o.x0 << ","
       << o.y0 << "," << o.vx << "," << o.vy;
  return hash_str(os.str());
}

RenderResult render(const SceneSpec& scene) {
  validate_scene(scene);
  RenderResult out;
  out.source = VideoClip(scene.frames, scene.height, scene.width);
  out.masks.assign(scene.objects.size(), MaskClip(scene.frames, scene.height, scene.width));
  out.flow = FlowField(scene.frames - 1, scene.height, scene.width);

  for (int64_t t = 0; t < scene.frames; ++t) {
    paint_background(scene, t, out.source);
    paint_objects(scene, t, out.source, -1);
    for (size_t i = 0; i < scene.objects.size(); ++i) {
      const ObjectSpec& o = scene.objects[i];
      double cx = o.x0 + o.vx * t, cy = o.y0 + o.vy * t;
      for (int64_t y = 0; y < scene.height; ++y)
        for (int64_t x = 0; x < scene.width; ++x)
          if (covers(o, cx, cy, x + 0.5, y + 0.5)) out.masks[i].at(t, y, x) = 1;
    }
    if (t < scene.frames - 1) {
      // topmost covering object owns the pixel's motion
      for (int64_t y = 0; y < scene.height; ++y)
        for (int64_t x = 0; x < scene.width; ++x) {
          for (int i = static_cast<int>(scene.objects.size()) - 1; i >= 0; --i) {
            if (out.masks[i].at(t, y, x)) {
              out.flow.at(t, y, x, 0) = static_cast<float>(scene.objects[i].vx);
              out.flow.at(t, y, x, 1) = static_cast<float>(scene.objects[i].vy);
              break;
            }
          }
        }
    }
  }
  return out;
}

VideoClip render_target(const SceneSpec& scene, int object_index) {
  validate_scene(scene);
  if (object_index < 0 || object_index >= static_cast<int>(scene.objects.size()))
    throw std::out_of_range("render_target: object index");
  VideoClip clip(scene.frames, scene.height, scene.width);
  for (int64_t t = 0; t < scene.frames; ++t) {
    paint_background(scene, t, clip);
    paint_objects(scene, t, clip, object_index);
  }
  return clip;
}

MaskClip dilate_mask(const MaskClip& mask, int d) {
  if (d < 0) throw std::invalid_argument("dilate_mask: d must be >= 0");
  if (d == 0) return mask;
  MaskClip out(mask.frames, mask.height, mask.width);
  const int64_t H = mask.height, W = mask.width;
  // separable: horizontal any-in-window via prefix sums, then vertical
  std::vector<int> pref(std::max(H, W) + 1);
  MaskClip tmp(mask.frames, H, W);
  for (int64_t t = 0; t < mask.frames; ++t) {
    for (int64_t y = 0; y < H; ++y) {
      pref[0] = 0;
      for (int64_t x = 0; x < W; ++x) pref[x + 1] = pref[x] + mask.at(t, y, x);
      for (int64_t x = 0; x < W; ++x) {
        int64_t lo = std::max<int64_t>(0, x - d), hi = std::min<int64_t>(W - 1, x + d);
        tmp.at(t, y, x) = pref[hi + 1] - pref[lo] > 0 ? 1 : 0;
      }
    }
    for (int64_t x = 0; x < W; ++x) {
      pref[0] = 0;
      for (int64_t y = 0; y < H; ++y) pref[y + 1] = pref[y] + tmp.at(t, y, x);
      for (int64_t y = 0; y < H; ++y) {
        int64_t lo = std::max<int64_t>(0, y - d), hi = std::min<int64_t>(H - 1, y + d);
        out.at(t, y, x) = pref[hi + 1] - pref[lo] > 0 ? 1 : 0;
      }
    }
  }
  return out;
}

RelativeSize relative_size(const MaskClip& mask) {
  RelativeSize r;
  double denom = static_cast<double>(mask.height * mask.width);
  for (int64_t t = 0; t < mask.frames; ++t)
    r.fraction = std::max(r.fraction, mask.area(t) / denom);
  r.accepted = !(r.fraction > kMaxRelativeMaskSize);
  return r;
}

int choose_dilation(const MaskClip& mask) {
  MaskClip ring = dilate_mask(mask, 1);
  for (int d : dilation_sweep()) {
    MaskClip dil = dilate_mask(mask, d);
    bool covers_ring = true;
    for (size_t i = 0; i < ring.data.size() && covers_ring; ++i)
      if (ring.data[i] && !dil.data[i]) covers_ring = false;
    if (covers_ring) return d;
  }
  return dilation_sweep().back();
}

std::string make_referring_expression(const SceneSpec& scene, int object_index) {
  validate_scene(scene);
  if (object_index < 0 || object_index >= static_cast<int>(scene.objects.size()))
    throw std::out_of_range("make_referring_expression: object index");
  const ObjectSpec& o = scene.objects[object_index];
  auto side = object_side(scene, o);
  auto dir = object_direction(o);

  std::vector<std::string> candidates;
  std::string base = "the " + o.color_name + " " + std::string(shape_name(o.shape));
  candidates.push_back(base);
  if (side) candidates.push_back(base + " on the " + *side);
  if (dir) candidates.push_back(base + " moving " + *dir);
  if (side && dir) candidates.push_back(base + " on the " + *side + " moving " + *dir);

  for (const auto& expr : candidates) {
    auto matches = match_expression(scene, parse_expression(expr));
    if (matches.size() == 1 && matches[0] == object_index) return expr;
  }
  throw std::runtime_error("make_referring_expression: no unique expression for object " +
                           std::to_string(object_index) + " in scene seed " +
                           std::to_string(scene.seed));
}

ParsedExpression parse_expression(const std::string& expr) {
  std::istringstream is(expr);
  std::vector<std::string> w{std::istream_iterator<std::string>(is),
                             std::istream_iterator<std::string>()};
  ParsedExpression p;
  size_t i = 0;
  if (i < w.size() && w[i] == "the") ++i;
  if (i < w.size()) p.color = w[i++];
  if (i < w.size()) p.shape = w[i++];
  while (i < w.size()) {
    if (w[i] == "on" && i + 2 < w.size() && w[i + 1] == "the") {
      p.side = w[i + 2];
      i += 3;
    } else if (w[i] == "moving" && i + 1 < w.size()) {
      p.direction = w[i + 1];
      i += 2;
    } else {
      throw std::invalid_argument("parse_expression: unexpected token '" + w[i] + "'");
    }
  }
  if (p.color.empty() || p.shape.empty())
    throw std::invalid_argument("parse_expression: missing color or shape");
  return p;
}

std::vector<int> match_expression(const SceneSpec& scene, const ParsedExpression& parsed) {
  std::vector<int> out;
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    const ObjectSpec& o = scene.objects[i];
    if (o.color_name != parsed.color) continue;
    if (shape_name(o.shape) != parsed.shape) continue;
    if (parsed.side && object_side(scene, o) != parsed.side) continue;
    if (parsed.direction && object_direction(o) != parsed.direction) continue;
    out.push_back(static_cast<int>(i));
  }
  return out;
}

std::optional<Sample> make_sample(const SceneSpec& scene, int object_index, uint64_t seed) {
  RenderResult r = render(scene);
  const MaskClip& mask = r.masks[object_index];
  if (!relative_size(mask).accepted) return std::nullopt;

  Sample s;
  std::ostringstream id;
  id << "s" << scene.seed << "_o" << object_index;
  s.id = id.str();
  s.source = std::move(r.source);
  s.target = render_target(scene, object_index);
  s.mask = mask;
  s.object_index = object_index;
  s.d_used = choose_dilation(mask);
  s.referring_expr = make_referring_expression(scene, object_index);
  s.dialog = make_dialog(scene, object_index, seed);

  // flow of the target scene: drop the removed object, reindex
  SceneSpec reduced = scene;
  reduced.objects.erase(reduced.objects.begin() + object_index);
  if (reduced.objects.empty()) {
    s.flow = FlowField(scene.frames - 1, scene.height, scene.width);
  } else {
    // reduced scenes may violate the distinguishability invariant; flow does
    // not depend on it, so render footprints directly
    s.flow = FlowField(scene.frames - 1, scene.height, scene.width);
    for (int64_t t = 0; t < scene.frames - 1; ++t)
      for (int64_t y = 0; y < scene.height; ++y)
        for (int64_t x = 0; x < scene.width; ++x)
          for (int i = static_cast<int>(reduced.objects.size()) - 1; i >= 0; --i) {
            const ObjectSpec& o = reduced.objects[i];
            if (covers(o, o.x0 + o.vx * t, o.y0 + o.vy * t, x + 0.5, y + 0.5)) {
              s.flow.at(t, y, x, 0) = static_cast<float>(o.vx);
              s.flow.at(t, y, x, 1) = static_cast<float>(o.vy);
              break;
            }
          }
  }
  return s;
}

}  // namespace lgvi::synth
