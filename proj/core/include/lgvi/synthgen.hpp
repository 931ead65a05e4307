#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "lgvi/rng.hpp"
#include "lgvi/video.hpp"

namespace lgvi::synth {

// Procedural generator of inpainting triplets: moving geometric shapes over
// static backgrounds, rendered with hard edges so masks and targets are
// exact. Every output is a pure function of (seed, config).

enum class ShapeKind { circle, square, triangle };
enum class BackgroundKind { solid, gradient, checker };

const char* shape_name(ShapeKind k);
const char* background_name(BackgroundKind k);

struct ObjectSpec {
  ShapeKind shape = ShapeKind::circle;
  std::string color_name;
  std::array<double, 3> rgb{};  // components on the k/255 grid
  double size = 4;              // radius or half-side, px
  double x0 = 0, y0 = 0;        // center at frame 0
  double vx = 0, vy = 0;        // px/frame
};

struct SceneSpec {
  uint64_t seed = 0;
  BackgroundKind background = BackgroundKind::solid;
  std::array<double, 3> bg_a{}, bg_b{};
  int checker_cell = 8;
  std::vector<ObjectSpec> objects;
  int64_t frames = 8, height = 64, width = 64;
};

struct GeneratorConfig {
  int64_t frames = 8;
  int64_t height = 64;
  int64_t width = 64;
  int min_objects = 1;
  int max_objects = 4;
  double min_size = 4.0;
  double max_size = 9.0;
  double max_speed = 2.0;
  int max_retries = 128;
};

// Dialog for the interactive task. The response embeds the referring phrase
// between <PROMPT> markers; the request never names the object directly.
struct DialogRecord {
  std::string description;
  std::string request;
  std::string response;
  std::string prompt_phrase;
};

struct Sample {
  std::string id;
  VideoClip source;
  VideoClip target;
  MaskClip mask;  // raw object footprint, undilated
  FlowField flow; // flow of the target scene (what an inpainted clip should obey)
  std::string referring_expr;
  DialogRecord dialog;
  int object_index = 0;
  int d_used = 0;
};

// The fixed mask-dilation sweep applied when picking d_used.
const std::vector<int>& dilation_sweep();

// Relative-size filter bound: samples whose mask exceeds this fraction of the
// frame on any frame are dropped.
inline constexpr double kMaxRelativeMaskSize = 0.25;

// --- scene construction -----------------------------------------------------

SceneSpec generate_scene(uint64_t seed, const GeneratorConfig& cfg);

// Content hash of a scene; distinct scenes get distinct digests whp.
uint64_t scene_digest(const SceneSpec& scene);

void validate_scene(const SceneSpec& scene);

// --- rendering ---------------------------------------------------------------

struct RenderResult {
  VideoClip source;
  std::vector<MaskClip> masks;  // per object, full footprint (occlusion ignored)
  FlowField flow;               // topmost moving object wins, background zero
};

RenderResult render(const SceneSpec& scene);

// Re-render with the object removed; revealed pixels are exact.
VideoClip render_target(const SceneSpec& scene, int object_index);

// --- mask operations ----------------------------------------------------------

// Morphological dilation with a square structuring element of side 2d+1,
// applied per frame and clipped at the borders.
MaskClip dilate_mask(const MaskClip& mask, int d);

struct RelativeSize {
  double fraction = 0;  // max over frames of area / (H*W)
  bool accepted = true; // rejected iff fraction > kMaxRelativeMaskSize
};
RelativeSize relative_size(const MaskClip& mask);

// Smallest sweep value whose dilation covers the mask's one-pixel boundary
// ring (the pixels an anti-aliased rasterizer would partially paint).
int choose_dilation(const MaskClip& mask);

// --- language ------------------------------------------------------------------

// Parsed form of a referring expression; absent qualifiers are unset.
struct ParsedExpression {
  std::string color;
  std::string shape;
  std::optional<std::string> side;      // "left" / "right"
  std::optional<std::string> direction; // "left"/"right"/"up"/"down"
};

std::string make_referring_expression(const SceneSpec& scene, int object_index);

ParsedExpression parse_expression(const std::string& expr);

// All object indices the expression matches; generation guarantees exactly one.
std::vector<int> match_expression(const SceneSpec& scene, const ParsedExpression& parsed);

DialogRecord make_dialog(const SceneSpec& scene, int object_index, uint64_t seed);

// Every word any template or attribute can emit; the tokenizer's closed
// vocabulary is built from this list.
std::vector<std::string> lexicon();

// --- sample assembly -------------------------------------------------------------

// Builds the full triplet for one object, or nullopt when the size filter
// rejects it. The id encodes (scene seed, object index).
std::optional<Sample> make_sample(const SceneSpec& scene, int object_index, uint64_t seed);

// Object attributes used by expressions; exposed for tests.
std::optional<std::string> object_side(const SceneSpec& scene, const ObjectSpec& obj);
std::optional<std::string> object_direction(const ObjectSpec& obj);

}  // namespace lgvi::synth
