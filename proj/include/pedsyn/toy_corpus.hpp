#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pedsyn/image.hpp"
#include "pedsyn/rng.hpp"

namespace pedsyn::toy {

// Named color used by the renderer and by the pixel analyzers.
struct NamedColor {
  const char* name;
  uint8_t r, g, b;
};

// Shared palettes; the analyzers classify pixels against these.
const std::vector<NamedColor>& garment_palette();     // 8 entries
const std::vector<NamedColor>& hair_palette();        // 4 entries
const std::vector<NamedColor>& shoe_palette();        // 4 entries
const std::vector<NamedColor>& background_palette();  // 6 entries, keyed by scene word
extern const std::array<const char*, 5> kWeathers;    // sunny first
extern const std::array<const char*, 6> kPostures;    // standing first

struct ToyAttributes {
  int shirt = 0;       // garment_palette index
  int pants = 1;       // garment_palette index
  int hair = 0;        // hair_palette index
  int shoes = 0;       // shoe_palette index
  int background = 0;  // background_palette index
  int weather = 0;     // kWeathers index
  int posture = 0;     // kPostures index
  float jitter_x = 0.f;
  float jitter_y = 0.f;
  float height = 40.f;  // glyph height in px

  // Render faults used by denoising tests.
  bool missing_legs = false;
  bool extra_head = false;
  bool second_person = false;
};

struct ToyKeypoint {
  std::string name;
  float x = 0.f, y = 0.f;
  float confidence = 0.f;
};

struct ToySample {
  Image image;                // 64x64 RGB
  std::vector<uint8_t> mask;  // 1 = glyph foreground
  ToyAttributes attrs;
  std::vector<ToyKeypoint> keypoints;  // ground truth, 17 entries
};

inline constexpr int kToySize = 64;
extern const std::array<const char*, 17> kSkeletonNames;

// Deterministic renderer.
ToySample render(const ToyAttributes& attrs);

// Seeded attribute draws. Weather is biased toward sunny so that appearance
// colors stay readable in most samples.
ToyAttributes attributes_from_seed(uint64_t seed);

// Conditioning-language prompt for a rendered sample. variant selects one of
// the sentence forms the denoiser is trained on (wrapped modulo the count).
std::string toy_prompt(const ToyAttributes& attrs, int variant);
int toy_prompt_variant_count();

// ------------------------------------------------------------ analysis ---

// Pixel-analysis results; all derived from the image alone so the same code
// serves rendered and diffusion-generated images.
struct GlyphAnalysis {
  int instance_count = 0;
  std::vector<uint8_t> foreground;  // union mask
  // Per detected instance: bounding box and estimated keypoints. Extra
  // duplicate-name keypoints appear when duplicated parts are detected.
  struct Instance {
    int x0, y0, x1, y1;  // inclusive bbox
    std::vector<ToyKeypoint> keypoints;
  };
  std::vector<Instance> instances;
};

GlyphAnalysis analyze_glyphs(const Image& img);

// Appearance attributes read back from pixels (what the caption stub sees).
struct ReadAttributes {
  std::string shirt, pants, hair, shoes;
  bool ok = false;
};
ReadAttributes read_attributes(const Image& img);

// Foreground mask as 0/1 bytes; IoU of two masks of equal size.
std::vector<uint8_t> foreground_mask(const Image& img);
double mask_iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b);

}  // namespace pedsyn::toy
