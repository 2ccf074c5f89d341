#include "pedsyn/toy_corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <map>

#include "pedsyn/error.hpp"

namespace pedsyn::toy {

const std::vector<NamedColor>& garment_palette() {
  static const std::vector<NamedColor> p = {
      {"red", 210, 35, 35},    {"green", 40, 170, 60},  {"blue", 40, 80, 210},
      {"yellow", 235, 205, 40}, {"purple", 150, 55, 190}, {"orange", 240, 130, 30},
      {"white", 240, 240, 240}, {"black", 20, 20, 20},
  };
  return p;
}

const std::vector<NamedColor>& hair_palette() {
  static const std::vector<NamedColor> p = {
      {"black", 22, 22, 22}, {"brown", 105, 65, 25}, {"yellow", 230, 200, 60}, {"gray", 175, 175, 182},
  };
  return p;
}

const std::vector<NamedColor>& shoe_palette() {
  static const std::vector<NamedColor> p = {
      {"black", 20, 20, 20}, {"white", 240, 240, 240}, {"red", 210, 35, 35}, {"blue", 40, 80, 210},
  };
  return p;
}

const std::vector<NamedColor>& background_palette() {
  static const std::vector<NamedColor> p = {
      {"street", 120, 120, 125}, {"desert", 205, 170, 95}, {"beach", 240, 220, 170},
      {"airport", 165, 195, 225}, {"farm", 90, 165, 75},    {"lake", 55, 135, 205},
  };
  return p;
}

const std::array<const char*, 5> kWeathers = {"sunny", "cloudy", "rainy", "foggy", "snowy"};
const std::array<const char*, 6> kPostures = {"standing",      "walking", "running",
                                              "raising hands", "sitting", "giving a thumbs up"};

const std::array<const char*, 17> kSkeletonNames = {
    "nose",        "left_eye",   "right_eye",   "left_ear",   "right_ear",  "left_shoulder",
    "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist", "left_hip",
    "right_hip",   "left_knee",  "right_knee",  "left_ankle", "right_ankle"};

namespace {

constexpr NamedColor kSkin{"skin", 235, 195, 160};

struct Canvas {
  Image* img;
  std::vector<uint8_t>* mask;

  void put(int x, int y, uint8_t r, uint8_t g, uint8_t b, bool fg) {
    if (x < 0 || y < 0 || x >= img->width || y >= img->height) return;
    uint8_t* p = img->px(x, y);
    p[0] = r;
    p[1] = g;
    p[2] = b;
    if (fg) (*mask)[static_cast<size_t>(y) * img->width + x] = 1;
  }

  void fill_rect(float x0, float y0, float x1, float y1, const NamedColor& c, bool fg = true) {
    int ix0 = static_cast<int>(std::lround(std::min(x0, x1)));
    int ix1 = static_cast<int>(std::lround(std::max(x0, x1)));
    int iy0 = static_cast<int>(std::lround(std::min(y0, y1)));
    int iy1 = static_cast<int>(std::lround(std::max(y0, y1)));
    for (int y = iy0; y <= iy1; ++y)
      for (int x = ix0; x <= ix1; ++x) put(x, y, c.r, c.g, c.b, fg);
  }

  void fill_circle(float cx, float cy, float rad, const NamedColor& c, bool upper_only = false) {
    int x0 = static_cast<int>(std::floor(cx - rad)), x1 = static_cast<int>(std::ceil(cx + rad));
    int y0 = static_cast<int>(std::floor(cy - rad)), y1 = static_cast<int>(std::ceil(cy + rad));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        float dx = x - cx, dy = y - cy;
        if (dx * dx + dy * dy > rad * rad) continue;
        if (upper_only && y > cy) continue;
        put(x, y, c.r, c.g, c.b, true);
      }
  }

  void thick_line(float x0, float y0, float x1, float y1, float width, const NamedColor& c) {
    float dx = x1 - x0, dy = y1 - y0;
    float len = std::sqrt(dx * dx + dy * dy);
    int n = std::max(2, static_cast<int>(len * 2));
    float hw = width * 0.5f;
    for (int i = 0; i <= n; ++i) {
      float t = static_cast<float>(i) / n;
      float px = x0 + t * dx, py = y0 + t * dy;
      for (int oy = static_cast<int>(-hw) - 1; oy <= static_cast<int>(hw) + 1; ++oy)
        for (int ox = static_cast<int>(-hw) - 1; ox <= static_cast<int>(hw) + 1; ++ox)
          if (ox * ox + oy * oy <= hw * hw + 0.5f)
            put(static_cast<int>(std::lround(px)) + ox, static_cast<int>(std::lround(py)) + oy, c.r, c.g, c.b, true);
    }
  }
};

struct FigureLayout {
  float cx, ground, height;
};

void draw_figure(Canvas& cv, const ToyAttributes& a, const FigureLayout& lay,
                 std::vector<ToyKeypoint>* kps) {
  const auto& shirt = garment_palette()[static_cast<size_t>(a.shirt)];
  const auto& pants = garment_palette()[static_cast<size_t>(a.pants)];
  const auto& hair = hair_palette()[static_cast<size_t>(a.hair)];
  const auto& shoes = shoe_palette()[static_cast<size_t>(a.shoes)];

  float H = lay.height;
  float cx = lay.cx;
  float ground = lay.ground;
  float r = H * 0.115f;
  float torso_h = H * 0.34f;
  float torso_w = H * 0.24f;
  float leg_l = H * 0.40f;
  float arm_l = H * 0.30f;
  float limb_w = std::max(2.5f, H * 0.075f);

  std::string posture = kPostures[static_cast<size_t>(a.posture)];
  bool sitting = posture == "sitting";

  float hip_y = sitting ? ground - leg_l * 0.45f : ground - leg_l;
  float torso_top = hip_y - torso_h;
  float head_cy = torso_top - r - 1.f;

  struct Pt {
    float x, y;
  };
  Pt l_hip{cx - torso_w * 0.28f, hip_y};
  Pt r_hip{cx + torso_w * 0.28f, hip_y};
  Pt l_knee, r_knee, l_ankle, r_ankle;

  if (sitting) {
    // Thighs go sideways, shins drop to the ground.
    l_knee = {cx - torso_w * 0.28f - leg_l * 0.45f, hip_y + 1.f};
    r_knee = {cx + torso_w * 0.28f + leg_l * 0.45f, hip_y + 1.f};
    l_ankle = {l_knee.x, ground};
    r_ankle = {r_knee.x, ground};
  } else {
    float spread;
    if (posture == "running") spread = leg_l * 0.55f;
    else if (posture == "walking") spread = leg_l * 0.3f;
    else spread = leg_l * 0.08f;
    l_knee = {l_hip.x - spread * 0.5f, hip_y + leg_l * 0.5f};
    r_knee = {r_hip.x + spread * 0.5f, hip_y + leg_l * 0.5f};
    l_ankle = {l_hip.x - spread, ground};
    r_ankle = {r_hip.x + spread, ground};
  }

  if (!a.missing_legs) {
    cv.thick_line(l_hip.x, l_hip.y, l_knee.x, l_knee.y, limb_w, pants);
    cv.thick_line(l_knee.x, l_knee.y, l_ankle.x, l_ankle.y, limb_w, pants);
    cv.thick_line(r_hip.x, r_hip.y, r_knee.x, r_knee.y, limb_w, pants);
    cv.thick_line(r_knee.x, r_knee.y, r_ankle.x, r_ankle.y, limb_w, pants);
    cv.fill_rect(l_ankle.x - 2.5f, l_ankle.y - 1.f, l_ankle.x + 1.5f, l_ankle.y + 1.5f, shoes);
    cv.fill_rect(r_ankle.x - 1.5f, r_ankle.y - 1.f, r_ankle.x + 2.5f, r_ankle.y + 1.5f, shoes);
  }

  // Torso.
  cv.fill_rect(cx - torso_w * 0.5f, torso_top, cx + torso_w * 0.5f, hip_y, shirt);

  // Arms.
  Pt l_sh{cx - torso_w * 0.5f, torso_top + 1.5f};
  Pt r_sh{cx + torso_w * 0.5f, torso_top + 1.5f};
  Pt l_elbow, r_elbow, l_wrist, r_wrist;
  if (posture == "raising hands") {
    l_elbow = {l_sh.x - arm_l * 0.3f, l_sh.y - arm_l * 0.45f};
    r_elbow = {r_sh.x + arm_l * 0.3f, r_sh.y - arm_l * 0.45f};
    l_wrist = {l_elbow.x - arm_l * 0.1f, l_elbow.y - arm_l * 0.5f};
    r_wrist = {r_elbow.x + arm_l * 0.1f, r_elbow.y - arm_l * 0.5f};
  } else if (posture == "giving a thumbs up") {
    l_elbow = {l_sh.x - arm_l * 0.15f, l_sh.y + arm_l * 0.5f};
    l_wrist = {l_elbow.x, l_elbow.y + arm_l * 0.45f};
    r_elbow = {r_sh.x + arm_l * 0.4f, r_sh.y - arm_l * 0.1f};
    r_wrist = {r_elbow.x + arm_l * 0.15f, r_elbow.y - arm_l * 0.55f};
  } else if (posture == "running") {
    l_elbow = {l_sh.x - arm_l * 0.5f, l_sh.y + arm_l * 0.25f};
    l_wrist = {l_elbow.x - arm_l * 0.2f, l_elbow.y - arm_l * 0.35f};
    r_elbow = {r_sh.x + arm_l * 0.5f, r_sh.y + arm_l * 0.25f};
    r_wrist = {r_elbow.x + arm_l * 0.2f, r_elbow.y - arm_l * 0.35f};
  } else {
    float sway = posture == "walking" ? arm_l * 0.2f : 0.f;
    l_elbow = {l_sh.x - sway * 0.5f - 0.5f, l_sh.y + arm_l * 0.5f};
    r_elbow = {r_sh.x + sway * 0.5f + 0.5f, r_sh.y + arm_l * 0.5f};
    l_wrist = {l_elbow.x - sway, l_elbow.y + arm_l * 0.45f};
    r_wrist = {r_elbow.x + sway, r_elbow.y + arm_l * 0.45f};
  }
  cv.thick_line(l_sh.x, l_sh.y, l_elbow.x, l_elbow.y, limb_w * 0.85f, shirt);
  cv.thick_line(l_elbow.x, l_elbow.y, l_wrist.x, l_wrist.y, limb_w * 0.85f, shirt);
  cv.thick_line(r_sh.x, r_sh.y, r_elbow.x, r_elbow.y, limb_w * 0.85f, shirt);
  cv.thick_line(r_elbow.x, r_elbow.y, r_wrist.x, r_wrist.y, limb_w * 0.85f, shirt);

  // Head, then hair cap.
  cv.fill_circle(cx, head_cy, r, kSkin);
  cv.fill_circle(cx, head_cy - r * 0.35f, r * 0.95f, hair, /*upper_only=*/true);
  if (a.extra_head) {
    float hx = cx + r * 2.6f;
    cv.fill_circle(hx, head_cy, r, kSkin);
    cv.fill_circle(hx, head_cy - r * 0.35f, r * 0.95f, hair, true);
  }

  if (kps) {
    auto put = [&](const char* name, float x, float y) {
      kps->push_back(ToyKeypoint{name, x, y, 1.f});
    };
    put("nose", cx, head_cy);
    put("left_eye", cx - r * 0.35f, head_cy - r * 0.25f);
    put("right_eye", cx + r * 0.35f, head_cy - r * 0.25f);
    put("left_ear", cx - r * 0.85f, head_cy);
    put("right_ear", cx + r * 0.85f, head_cy);
    put("left_shoulder", l_sh.x, l_sh.y);
    put("right_shoulder", r_sh.x, r_sh.y);
    put("left_elbow", l_elbow.x, l_elbow.y);
    put("right_elbow", r_elbow.x, r_elbow.y);
    put("left_wrist", l_wrist.x, l_wrist.y);
    put("right_wrist", r_wrist.x, r_wrist.y);
    put("left_hip", l_hip.x, l_hip.y);
    put("right_hip", r_hip.x, r_hip.y);
    if (a.missing_legs) {
      for (const char* nm : {"left_knee", "right_knee", "left_ankle", "right_ankle"})
        kps->push_back(ToyKeypoint{nm, 0.f, 0.f, 0.f});
    } else {
      put("left_knee", l_knee.x, l_knee.y);
      put("right_knee", r_knee.x, r_knee.y);
      put("left_ankle", l_ankle.x, l_ankle.y);
      put("right_ankle", r_ankle.x, r_ankle.y);
    }
  }
}

void apply_weather(Image& img, const std::vector<uint8_t>& mask, int weather, uint64_t speckle_seed) {
  auto scale_bg = [&](float fr, float fg2, float fb) {
    for (int i = 0; i < img.width * img.height; ++i) {
      if (mask[static_cast<size_t>(i)]) continue;
      uint8_t* p = img.rgb.data() + static_cast<size_t>(3) * i;
      p[0] = static_cast<uint8_t>(p[0] * fr);
      p[1] = static_cast<uint8_t>(p[1] * fg2);
      p[2] = static_cast<uint8_t>(p[2] * fb);
    }
  };
  auto blend_white_bg = [&](float t) {
    for (int i = 0; i < img.width * img.height; ++i) {
      if (mask[static_cast<size_t>(i)]) continue;
      uint8_t* p = img.rgb.data() + static_cast<size_t>(3) * i;
      for (int c = 0; c < 3; ++c) p[c] = static_cast<uint8_t>(p[c] + t * (255 - p[c]));
    }
  };
  switch (weather) {
    case 0:
      break;  // sunny
    case 1:
      scale_bg(0.72f, 0.72f, 0.75f);
      break;  // cloudy
    case 2:
      scale_bg(0.55f, 0.58f, 0.75f);
      break;  // rainy
    case 3:
      blend_white_bg(0.45f);
      break;  // foggy
    case 4: {  // snowy: brighten and speckle
      blend_white_bg(0.3f);
      Rng rng(mix64(speckle_seed, 0x5A0Dull));
      int n = 60;
      for (int i = 0; i < n; ++i) {
        int x = static_cast<int>(rng.next_below(static_cast<uint64_t>(img.width)));
        int y = static_cast<int>(rng.next_below(static_cast<uint64_t>(img.height)));
        if (mask[static_cast<size_t>(y) * img.width + x]) continue;
        uint8_t* p = img.px(x, y);
        p[0] = p[1] = p[2] = 250;
      }
      break;
    }
    default:
      break;
  }
}

int l1_dist(const uint8_t* p, const NamedColor& c) {
  return std::abs(static_cast<int>(p[0]) - c.r) + std::abs(static_cast<int>(p[1]) - c.g) +
         std::abs(static_cast<int>(p[2]) - c.b);
}

}  // namespace

ToySample render(const ToyAttributes& attrs) {
  ToySample s;
  s.attrs = attrs;
  s.image = Image(kToySize, kToySize);
  s.mask.assign(static_cast<size_t>(kToySize) * kToySize, 0);

  const auto& bg = background_palette()[static_cast<size_t>(attrs.background)];
  for (int i = 0; i < kToySize * kToySize; ++i) {
    s.image.rgb[static_cast<size_t>(3 * i) + 0] = bg.r;
    s.image.rgb[static_cast<size_t>(3 * i) + 1] = bg.g;
    s.image.rgb[static_cast<size_t>(3 * i) + 2] = bg.b;
  }

  Canvas cv{&s.image, &s.mask};
  FigureLayout lay{32.f + attrs.jitter_x, 57.f + attrs.jitter_y, attrs.height};
  draw_figure(cv, attrs, lay, &s.keypoints);
  if (attrs.second_person) {
    ToyAttributes b = attrs;
    b.second_person = false;
    FigureLayout lay2{lay.cx < 32.f ? lay.cx + 23.f : lay.cx - 23.f, lay.ground, attrs.height * 0.95f};
    draw_figure(cv, b, lay2, nullptr);
  }

  apply_weather(s.image, s.mask, attrs.weather,
                mix64(static_cast<uint64_t>(attrs.background), static_cast<uint64_t>(attrs.shirt * 97 + attrs.pants)));
  return s;
}

ToyAttributes attributes_from_seed(uint64_t seed) {
  Rng rng(mix64(seed, 0x70FFull));
  ToyAttributes a;
  a.shirt = static_cast<int>(rng.next_below(garment_palette().size()));
  a.pants = static_cast<int>(rng.next_below(garment_palette().size()));
  a.hair = static_cast<int>(rng.next_below(hair_palette().size()));
  a.shoes = static_cast<int>(rng.next_below(shoe_palette().size()));
  a.background = static_cast<int>(rng.next_below(background_palette().size()));
  // sunny-biased weather
  static const int weather_bag[9] = {0, 0, 0, 0, 0, 1, 2, 3, 4};
  a.weather = weather_bag[rng.next_below(9)];
  a.posture = static_cast<int>(rng.next_below(kPostures.size()));
  a.jitter_x = rng.next_uniform(-4.f, 4.f);
  a.jitter_y = rng.next_uniform(-2.f, 2.f);
  a.height = rng.next_uniform(37.f, 44.f);
  return a;
}

std::string toy_prompt(const ToyAttributes& attrs, int variant) {
  const std::string shirt = garment_palette()[static_cast<size_t>(attrs.shirt)].name;
  const std::string pants = garment_palette()[static_cast<size_t>(attrs.pants)].name;
  const std::string bg = background_palette()[static_cast<size_t>(attrs.background)].name;
  const std::string weather = kWeathers[static_cast<size_t>(attrs.weather)];
  const std::string posture = kPostures[static_cast<size_t>(attrs.posture)];
  switch (variant % toy_prompt_variant_count()) {
    case 0:
      return "a person";
    case 1:
      return "a person in the " + bg;
    case 2:
      return "a person on a " + weather + " day";
    case 3:
      return "a person, " + posture;
    case 4:
      return "a " + shirt + " shirt " + pants + " pants person";
    default:
      return "a " + shirt + " shirt " + pants + " pants person in the " + bg + " on a " + weather +
             " day, " + posture;
  }
}

int toy_prompt_variant_count() { return 6; }

// ------------------------------------------------------------- analysis --

std::vector<uint8_t> foreground_mask(const Image& img) {
  // Background reference = majority color vote over the border ring.
  std::map<uint32_t, int> votes;
  auto key = [](const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 16) | (static_cast<uint32_t>(p[1]) << 8) | p[2];
  };
  for (int x = 0; x < img.width; ++x) {
    ++votes[key(img.px(x, 0))];
    ++votes[key(img.px(x, img.height - 1))];
  }
  for (int y = 0; y < img.height; ++y) {
    ++votes[key(img.px(0, y))];
    ++votes[key(img.px(img.width - 1, y))];
  }
  uint32_t best = 0;
  int best_n = -1;
  for (auto& [k, n] : votes)
    if (n > best_n) {
      best_n = n;
      best = k;
    }
  NamedColor bg{"", static_cast<uint8_t>(best >> 16), static_cast<uint8_t>((best >> 8) & 0xFF),
                static_cast<uint8_t>(best & 0xFF)};
  std::vector<uint8_t> mask(static_cast<size_t>(img.width) * img.height, 0);
  for (int i = 0; i < img.width * img.height; ++i) {
    const uint8_t* p = img.rgb.data() + static_cast<size_t>(3) * i;
    if (l1_dist(p, bg) > 60) mask[static_cast<size_t>(i)] = 1;
  }
  return mask;
}

double mask_iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
  if (a.size() != b.size()) throw DimensionError("mask_iou: size mismatch");
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    bool x = a[i] != 0, y = b[i] != 0;
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

std::vector<std::vector<int>> connected_components(const std::vector<uint8_t>& mask, int w, int h,
                                                   int min_area) {
  std::vector<int> comp(static_cast<size_t>(w) * h, -1);
  std::vector<std::vector<int>> out;
  for (int start = 0; start < w * h; ++start) {
    if (!mask[static_cast<size_t>(start)] || comp[static_cast<size_t>(start)] >= 0) continue;
    std::vector<int> pix;
    std::deque<int> q{start};
    comp[static_cast<size_t>(start)] = static_cast<int>(out.size());
    while (!q.empty()) {
      int p = q.front();
      q.pop_front();
      pix.push_back(p);
      int x = p % w, y = p / w;
      const int nx[4] = {x - 1, x + 1, x, x};
      const int ny[4] = {y, y, y - 1, y + 1};
      for (int i = 0; i < 4; ++i) {
        if (nx[i] < 0 || ny[i] < 0 || nx[i] >= w || ny[i] >= h) continue;
        int np = ny[i] * w + nx[i];
        if (mask[static_cast<size_t>(np)] && comp[static_cast<size_t>(np)] < 0) {
          comp[static_cast<size_t>(np)] = static_cast<int>(out.size());
          q.push_back(np);
        }
      }
    }
    if (static_cast<int>(pix.size()) >= min_area) out.push_back(std::move(pix));
  }
  return out;
}

// Merge nearby components: limbs can detach from the torso by a pixel after
// editing. Components whose bboxes are within 3 px are unioned.
void merge_close(std::vector<std::vector<int>>& comps, int w) {
  auto bbox = [&](const std::vector<int>& c) {
    int x0 = 1 << 20, y0 = 1 << 20, x1 = -1, y1 = -1;
    for (int p : c) {
      int x = p % w, y = p / w;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
    return std::array<int, 4>{x0, y0, x1, y1};
  };
  bool merged = true;
  while (merged) {
    merged = false;
    for (size_t i = 0; i < comps.size() && !merged; ++i)
      for (size_t j = i + 1; j < comps.size() && !merged; ++j) {
        auto a = bbox(comps[i]), b = bbox(comps[j]);
        bool close = a[0] <= b[2] + 3 && b[0] <= a[2] + 3 && a[1] <= b[3] + 3 && b[1] <= a[3] + 3;
        if (close) {
          comps[i].insert(comps[i].end(), comps[j].begin(), comps[j].end());
          comps.erase(comps.begin() + static_cast<long>(j));
          merged = true;
        }
      }
  }
}

float window_density(const std::vector<uint8_t>& mask, int w, int h, float fx, float fy, int rad) {
  int cx = static_cast<int>(std::lround(fx)), cy = static_cast<int>(std::lround(fy));
  int n = 0, tot = 0;
  for (int y = cy - rad; y <= cy + rad; ++y)
    for (int x = cx - rad; x <= cx + rad; ++x) {
      ++tot;
      if (x < 0 || y < 0 || x >= w || y >= h) continue;
      if (mask[static_cast<size_t>(y) * w + x]) ++n;
    }
  return tot ? static_cast<float>(n) / static_cast<float>(tot) : 0.f;
}

}  // namespace

GlyphAnalysis analyze_glyphs(const Image& img) {
  GlyphAnalysis out;
  out.foreground = foreground_mask(img);
  auto comps = connected_components(out.foreground, img.width, img.height, 30);
  merge_close(comps, img.width);
  out.instance_count = static_cast<int>(comps.size());

  for (auto& comp : comps) {
    GlyphAnalysis::Instance inst;
    inst.x0 = inst.y0 = 1 << 20;
    inst.x1 = inst.y1 = -1;
    for (int p : comp) {
      int x = p % img.width, y = p / img.width;
      inst.x0 = std::min(inst.x0, x);
      inst.x1 = std::max(inst.x1, x);
      inst.y0 = std::min(inst.y0, y);
      inst.y1 = std::max(inst.y1, y);
    }
    float bw = static_cast<float>(inst.x1 - inst.x0 + 1);
    float bh = static_cast<float>(inst.y1 - inst.y0 + 1);
    float cx = inst.x0 + bw * 0.5f;

    // Skin clusters in the upper part of the instance locate heads.
    std::vector<uint8_t> skin_mask(out.foreground.size(), 0);
    for (int p : comp) {
      const uint8_t* px = img.rgb.data() + static_cast<size_t>(3) * p;
      int y = p / img.width;
      if (y <= inst.y0 + static_cast<int>(bh * 0.45f) && l1_dist(px, kSkin) < 110)
        skin_mask[static_cast<size_t>(p)] = 1;
    }
    auto heads = connected_components(skin_mask, img.width, img.height, 4);

    // Estimated figure proportions, assuming a mostly upright figure.
    float head_y = inst.y0 + bh * 0.08f;
    float shoulder_y = inst.y0 + bh * 0.30f;
    float hip_y = inst.y0 + bh * 0.58f;
    float knee_y = inst.y0 + bh * 0.78f;
    float ankle_y = inst.y0 + bh * 0.95f;
    float half_w = bw * 0.18f;

    auto add = [&](const char* name, float x, float y, float conf) {
      inst.keypoints.push_back(ToyKeypoint{name, x, y, conf});
    };

    if (!heads.empty()) {
      // Primary head drives the five head keypoints.
      auto centroid = [&](const std::vector<int>& c) {
        double sx = 0, sy = 0;
        for (int p : c) {
          sx += p % img.width;
          sy += p / img.width;
        }
        return std::pair<float, float>(static_cast<float>(sx / c.size()), static_cast<float>(sy / c.size()));
      };
      auto [hx, hy] = centroid(heads[0]);
      float hc = std::min(1.f, static_cast<float>(heads[0].size()) / 12.f);
      add("nose", hx, hy, hc);
      add("left_eye", hx - 1.2f, hy - 1.f, hc);
      add("right_eye", hx + 1.2f, hy - 1.f, hc);
      add("left_ear", hx - 2.2f, hy, hc * 0.9f);
      add("right_ear", hx + 2.2f, hy, hc * 0.9f);
      // Additional skin clusters = duplicated head parts.
      for (size_t extra = 1; extra < heads.size(); ++extra) {
        auto [ex, eyy] = centroid(heads[extra]);
        add("nose", ex, eyy, std::min(1.f, static_cast<float>(heads[extra].size()) / 12.f));
      }
    } else {
      add("nose", cx, head_y, window_density(out.foreground, img.width, img.height, cx, head_y, 2));
      add("left_eye", cx - 1, head_y, 0.f);
      add("right_eye", cx + 1, head_y, 0.f);
      add("left_ear", cx - 2, head_y, 0.f);
      add("right_ear", cx + 2, head_y, 0.f);
    }

    auto density_conf = [&](float x, float y) {
      return window_density(out.foreground, img.width, img.height, x, y, 2);
    };
    add("left_shoulder", cx - half_w, shoulder_y, density_conf(cx - half_w, shoulder_y));
    add("right_shoulder", cx + half_w, shoulder_y, density_conf(cx + half_w, shoulder_y));
    add("left_elbow", cx - half_w * 1.5f, (shoulder_y + hip_y) * 0.5f,
        density_conf(cx - half_w * 1.5f, (shoulder_y + hip_y) * 0.5f));
    add("right_elbow", cx + half_w * 1.5f, (shoulder_y + hip_y) * 0.5f,
        density_conf(cx + half_w * 1.5f, (shoulder_y + hip_y) * 0.5f));
    add("left_wrist", cx - half_w * 1.6f, hip_y, density_conf(cx - half_w * 1.6f, hip_y));
    add("right_wrist", cx + half_w * 1.6f, hip_y, density_conf(cx + half_w * 1.6f, hip_y));
    add("left_hip", cx - half_w * 0.7f, hip_y, density_conf(cx - half_w * 0.7f, hip_y));
    add("right_hip", cx + half_w * 0.7f, hip_y, density_conf(cx + half_w * 0.7f, hip_y));

    // Legs: look for foreground pixels below the hip line, split by side.
    float below_hip = 0.f;
    float lx_sum = 0.f, rx_sum = 0.f, ly_sum = 0.f, ry_sum = 0.f;
    int ln = 0, rn = 0;
    for (int p : comp) {
      int x = p % img.width, y = p / img.width;
      if (y > static_cast<int>(hip_y) + 1) {
        below_hip += 1.f;
        if (x < cx) {
          lx_sum += x;
          ly_sum += y;
          ++ln;
        } else {
          rx_sum += x;
          ry_sum += y;
          ++rn;
        }
      }
    }
    float area = static_cast<float>(comp.size());
    bool legs_present = below_hip > area * 0.06f;
    if (legs_present && ln > 3) {
      float lx = lx_sum / ln;
      add("left_knee", lx, knee_y, density_conf(lx, knee_y));
      add("left_ankle", lx, ankle_y, density_conf(lx, ankle_y));
    } else {
      add("left_knee", cx - half_w, knee_y, 0.f);
      add("left_ankle", cx - half_w, ankle_y, 0.f);
    }
    if (legs_present && rn > 3) {
      float rx = rx_sum / rn;
      add("right_knee", rx, knee_y, density_conf(rx, knee_y));
      add("right_ankle", rx, ankle_y, density_conf(rx, ankle_y));
    } else {
      add("right_knee", cx + half_w, knee_y, 0.f);
      add("right_ankle", cx + half_w, ankle_y, 0.f);
    }

    out.instances.push_back(std::move(inst));
  }
  return out;
}

ReadAttributes read_attributes(const Image& img) {
  ReadAttributes out;
  auto fg = foreground_mask(img);
  auto comps = connected_components(fg, img.width, img.height, 30);
  merge_close(comps, img.width);
  if (comps.empty()) return out;
  // Largest component is the subject.
  size_t best = 0;
  for (size_t i = 1; i < comps.size(); ++i)
    if (comps[i].size() > comps[best].size()) best = i;
  const auto& comp = comps[best];
  int y0 = 1 << 20, y1 = -1;
  for (int p : comp) {
    int y = p / img.width;
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
  float bh = static_cast<float>(y1 - y0 + 1);

  auto dominant = [&](const std::vector<NamedColor>& palette, float fy0, float fy1) -> std::string {
    std::vector<int> counts(palette.size(), 0);
    int lo = y0 + static_cast<int>(bh * fy0);
    int hi = y0 + static_cast<int>(bh * fy1);
    for (int p : comp) {
      int y = p / img.width;
      if (y < lo || y > hi) continue;
      const uint8_t* px = img.rgb.data() + static_cast<size_t>(3) * p;
      if (l1_dist(px, kSkin) < 90) continue;  // skip skin
      int bi = -1, bd = 1 << 20;
      for (size_t i = 0; i < palette.size(); ++i) {
        int d = l1_dist(px, palette[i]);
        if (d < bd) {
          bd = d;
          bi = static_cast<int>(i);
        }
      }
      if (bi >= 0 && bd < 180) ++counts[static_cast<size_t>(bi)];
    }
    int best_i = 0;
    for (size_t i = 1; i < counts.size(); ++i)
      if (counts[i] > counts[static_cast<size_t>(best_i)]) best_i = static_cast<int>(i);
    return palette[static_cast<size_t>(best_i)].name;
  };

  out.hair = dominant(hair_palette(), 0.0f, 0.10f);
  out.shirt = dominant(garment_palette(), 0.22f, 0.50f);
  out.pants = dominant(garment_palette(), 0.62f, 0.88f);
  out.shoes = dominant(shoe_palette(), 0.93f, 1.0f);
  out.ok = true;
  return out;
}

}  // namespace pedsyn::toy
