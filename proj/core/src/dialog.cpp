#include <sstream>
#include <stdexcept>

#include "lgvi/synthgen.hpp"

namespace lgvi::synth {

namespace {

const char* kNumberWords[] = {"one", "two", "three", "four"};

// Request templates keep the reference indirect: the object is pointed at by
// a single attribute, never by its full name. Mirrors the chat-style requests
// of the interactive annotation pipeline.
std::string request_template(int idx, const std::string& ref) {
  switch (idx) {
    case 0:
      return "hi ! i am editing this clip . please remove " + ref + " for me .";
    case 1:
      return "i want viewers to focus on everything except " + ref +
             " . can you clean it up ?";
    default:
      return "there is something off about this video . could you get rid of " + ref + " ?";
  }
}

std::string response_template(int idx, const std::string& expr) {
  switch (idx) {
    case 0:
      return "sure . i will remove <PROMPT> " + expr + " </PROMPT> from the video .";
    default:
      return "no problem . removing <PROMPT> " + expr + " </PROMPT> now .";
  }
}

}  // namespace

DialogRecord make_dialog(const SceneSpec& scene, int object_index, uint64_t seed) {
  std::string expr = make_referring_expression(scene, object_index);
  ParsedExpression parsed = parse_expression(expr);

  // stage 1: deterministic scene description
  std::ostringstream desc;
  desc << "the scene shows " << kNumberWords[scene.objects.size() - 1] << " object"
       << (scene.objects.size() > 1 ? "s" : "") << " on a " << background_name(scene.background)
       << " background .";
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    const ObjectSpec& o = scene.objects[i];
    desc << " object " << kNumberWords[i] << " is a " << o.color_name << " "
         << shape_name(o.shape);
    if (auto side = object_side(scene, o)) desc << " on the " << *side;
    if (auto dir = object_direction(o)) desc << " moving " << *dir;
    desc << " .";
  }

  // stage 2: implicit user request. The reference points at the object by a
  // single unique attribute and never repeats the referring phrase itself.
  const ObjectSpec& target = scene.objects[static_cast<size_t>(object_index)];
  auto side = object_side(scene, target);
  auto dir = object_direction(target);
  int side_hits = 0, dir_hits = 0, color_hits = 0, shape_hits = 0;
  for (const auto& o : scene.objects) {
    if (side && object_side(scene, o) == side) ++side_hits;
    if (dir && object_direction(o) == dir) ++dir_hits;
    color_hits += (o.color_name == target.color_name);
    shape_hits += (o.shape == target.shape);
  }
  std::string ref;
  if (side && side_hits == 1)
    ref = "the distracting one on the " + *side;
  else if (dir && dir_hits == 1)
    ref = "the thing moving " + *dir;
  else if (color_hits == 1)
    ref = "the " + target.color_name + " one";
  else if (shape_hits == 1)
    ref = "the " + std::string(shape_name(target.shape));
  else
    ref = "that " + target.color_name + " thing shaped like a " +
          std::string(shape_name(target.shape));
  (void)parsed;

  Rng rng(hash_mix(hash_mix(seed, scene_digest(scene)), object_index));
  DialogRecord rec;
  rec.description = desc.str();
  rec.request = request_template(static_cast<int>(rng.uniform_int(3)), ref);
  rec.response = response_template(static_cast<int>(rng.uniform_int(2)), expr);
  rec.prompt_phrase = expr;
  return rec;
}

std::vector<std::string> lexicon() {
  std::vector<std::string> words = {
      // attributes
      "red", "green", "blue", "yellow", "magenta", "cyan", "orange", "purple",
      "circle", "square", "triangle",
      "left", "right", "up", "down",
      "one", "two", "three", "four",
      "solid", "gradient", "checker",
      // description
      "the", "scene", "shows", "object", "objects", "on", "a", "background", "is", "moving",
      // request
      "hi", "i", "am", "editing", "this", "clip", "please", "remove", "for", "me",
      "want", "viewers", "to", "focus", "everything", "except", "can", "you", "clean",
      "it", "there", "something", "off", "about", "video", "could", "get", "rid", "of",
      "distracting", "thing", "that", "shaped", "like",
      // response
      "sure", "will", "from", "no", "problem", "removing", "now",
      // punctuation tokens
      ".", "!", "?",
  };
  return words;
}

}  // namespace lgvi::synth
