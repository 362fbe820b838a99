#include "glyphzero/glyphs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "glyphzero/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gz {

int layout_arity(Layout l) {
  switch (l) {
    case Layout::kSingle: return 1;
    case Layout::kLeftRight:
    case Layout::kTopBottom: return 2;
    case Layout::kLeftMiddleRight:
    case Layout::kTopMiddleBottom: return 3;
  }
  throw std::logic_error("layout_arity: bad layout");
}

std::string_view layout_name(Layout l) {
  switch (l) {
    case Layout::kSingle: return "single";
    case Layout::kLeftRight: return "left-right";
    case Layout::kTopBottom: return "top-bottom";
    case Layout::kLeftMiddleRight: return "left-middle-right";
    case Layout::kTopMiddleBottom: return "top-middle-bottom";
  }
  throw std::logic_error("layout_name: bad layout");
}

Layout layout_from_name(std::string_view name) {
  for (Layout l : kAllLayouts)
    if (layout_name(l) == name) return l;
  throw std::invalid_argument("unknown layout name: " + std::string(name));
}

std::string_view style_name(Style s) {
  switch (s) {
    case Style::kCanonical: return "canonical";
    case Style::kVariant: return "variant";
    case Style::kComplex: return "complex";
  }
  throw std::logic_error("style_name: bad style");
}

Style style_from_name(std::string_view name) {
  for (Style s : kAllStyles)
    if (style_name(s) == name) return s;
  throw std::invalid_argument("unknown style name: " + std::string(name));
}

std::string_view split_policy_name(SplitPolicy p) {
  return p == SplitPolicy::kRadicalCovered ? "radical-covered" : "radical-open";
}

SplitPolicy split_policy_from_name(std::string_view name) {
  if (name == "radical-covered") return SplitPolicy::kRadicalCovered;
  if (name == "radical-open") return SplitPolicy::kRadicalOpen;
  throw std::invalid_argument("unknown split policy: " + std::string(name));
}

namespace {

// 3x3 square brush centered on (x, y): strokes come out ~3px thick, which
// keeps them visible after one erosion.
void stamp_brush(std::vector<uint8_t>& g, int cell, int x, int y) {
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const int xx = x + dx, yy = y + dy;
      if (xx >= 0 && xx < cell && yy >= 0 && yy < cell) g[yy * cell + xx] = 1;
    }
  }
}

void draw_stroke(std::vector<uint8_t>& g, int cell, int x0, int y0, int x1, int y1) {
  const int steps = 2 * std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    stamp_brush(g, cell, static_cast<int>(std::lround(x0 + t * (x1 - x0))),
                static_cast<int>(std::lround(y0 + t * (y1 - y0))));
  }
}

std::vector<uint8_t> candidate_radical(RandomStream& rng, int cell) {
  std::vector<uint8_t> g(static_cast<size_t>(cell) * cell, 0);
  const int n_strokes = 2 + static_cast<int>(rng.uniform_int(2));
  const int min_len2 = (cell / 2) * (cell / 2);
  for (int s = 0; s < n_strokes; ++s) {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    for (int attempt = 0; attempt < 64; ++attempt) {
      x0 = 1 + static_cast<int>(rng.uniform_int(cell - 2));
      y0 = 1 + static_cast<int>(rng.uniform_int(cell - 2));
      x1 = 1 + static_cast<int>(rng.uniform_int(cell - 2));
      y1 = 1 + static_cast<int>(rng.uniform_int(cell - 2));
      const int d2 = (x1 - x0) * (x1 - x0) + (y1 - y0) * (y1 - y0);
      if (d2 >= min_len2) break;
    }
    draw_stroke(g, cell, x0, y0, x1, y1);
  }
  return g;
}

int ink_count(const std::vector<uint8_t>& g) {
  int n = 0;
  for (uint8_t v : g) n += v;
  return n;
}

int hamming(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
  int n = 0;
  for (size_t i = 0; i < a.size(); ++i) n += a[i] != b[i];
  return n;
}

// Cross-shaped structuring element; out-of-bounds treated as background.
std::vector<uint8_t> dilate3(const std::vector<uint8_t>& g, int side) {
  std::vector<uint8_t> out(g.size(), 0);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      uint8_t v = g[y * side + x];
      if (!v && x > 0) v = g[y * side + x - 1];
      if (!v && x + 1 < side) v = g[y * side + x + 1];
      if (!v && y > 0) v = g[(y - 1) * side + x];
      if (!v && y + 1 < side) v = g[(y + 1) * side + x];
      out[y * side + x] = v;
    }
  }
  return out;
}

std::vector<uint8_t> erode3(const std::vector<uint8_t>& g, int side) {
  std::vector<uint8_t> out(g.size(), 0);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      bool v = g[y * side + x] != 0;
      v = v && x > 0 && g[y * side + x - 1];
      v = v && x + 1 < side && g[y * side + x + 1];
      v = v && y > 0 && g[(y - 1) * side + x];
      v = v && y + 1 < side && g[(y + 1) * side + x];
      out[y * side + x] = v ? 1 : 0;
    }
  }
  return out;
}

struct Anchor {
  double fx, fy;  // region center as a fraction of image size
};

std::vector<Anchor> layout_anchors(Layout l) {
  switch (l) {
    case Layout::kSingle: return {{0.5, 0.5}};
    case Layout::kLeftRight: return {{0.25, 0.5}, {0.75, 0.5}};
    case Layout::kTopBottom: return {{0.5, 0.25}, {0.5, 0.75}};
    case Layout::kLeftMiddleRight: return {{1.0 / 6, 0.5}, {0.5, 0.5}, {5.0 / 6, 0.5}};
    case Layout::kTopMiddleBottom: return {{0.5, 1.0 / 6}, {0.5, 0.5}, {0.5, 5.0 / 6}};
  }
  throw std::logic_error("layout_anchors: bad layout");
}

float bilinear_at(const std::vector<float>& img, int side, double xs, double ys) {
  const int x0 = static_cast<int>(std::floor(xs));
  const int y0 = static_cast<int>(std::floor(ys));
  const double fx = xs - x0, fy = ys - y0;
  auto at = [&](int x, int y) -> double {
    if (x < 0 || x >= side || y < 0 || y >= side) return 0.0;
    return img[static_cast<size_t>(y) * side + x];
  };
  const double v = (1 - fy) * ((1 - fx) * at(x0, y0) + fx * at(x0 + 1, y0)) +
                   fy * ((1 - fx) * at(x0, y0 + 1) + fx * at(x0 + 1, y0 + 1));
  return static_cast<float>(v);
}

}  // namespace

RadicalAtlas build_radical_atlas(int n_radicals, int cell_px, uint64_t seed) {
  if (n_radicals < 2) {
    throw std::invalid_argument("build_radical_atlas: n_radicals must be >= 2, got " +
                                std::to_string(n_radicals));
  }
  if (cell_px < 8) {
    throw std::invalid_argument("build_radical_atlas: cell_px must be >= 8, got " +
                                std::to_string(cell_px));
  }
  const double area = static_cast<double>(cell_px) * cell_px;
  const double min_ink = 0.15 * area, max_ink = 0.60 * area;
  const double min_ham = 0.10 * area;

  RadicalAtlas atlas;
  atlas.n_radicals = n_radicals;
  atlas.cell_px = cell_px;
  atlas.seed = seed;
  atlas.bitmaps.reserve(n_radicals);
  for (int i = 0; i < n_radicals; ++i) {
    RandomStream rng(substream_seed(seed, "atlas." + std::to_string(i)));
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      std::vector<uint8_t> g = candidate_radical(rng, cell_px);
      const int ink = ink_count(g);
      if (ink < min_ink || ink > max_ink) continue;
      bool distinct = true;
      for (const auto& prev : atlas.bitmaps) {
        if (hamming(g, prev) < min_ham) {
          distinct = false;
          break;
        }
      }
      if (!distinct) continue;
      atlas.bitmaps.push_back(std::move(g));
      placed = true;
    }
    if (!placed) {
      throw std::runtime_error("build_radical_atlas: no acceptable bitmap for radical " +
                               std::to_string(i) + " after 1000 attempts (n_radicals=" +
                               std::to_string(n_radicals) + ", cell_px=" +
                               std::to_string(cell_px) + ")");
    }
  }
  return atlas;
}

std::vector<CharacterSpec> enumerate_characters(const RadicalAtlas& atlas, int n_chars,
                                                uint64_t seed,
                                                const std::vector<Layout>& layouts) {
  if (layouts.empty()) throw std::invalid_argument("enumerate_characters: no layouts allowed");
  const int n = atlas.n_radicals;
  int64_t capacity = 0;
  for (Layout l : layouts) {
    int64_t c = 1;
    for (int a = 0; a < layout_arity(l); ++a) c *= n;
    capacity += c;
  }
  if (n_chars > capacity) {
    throw std::invalid_argument("enumerate_characters: requested " + std::to_string(n_chars) +
                                " characters but only " + std::to_string(capacity) +
                                " distinct (layout, radicals) combinations exist");
  }

  RandomStream rng(substream_seed(seed, "chars"));
  std::vector<int64_t> usage(n, 0);
  std::set<std::pair<int, std::vector<int>>> used;
  std::vector<CharacterSpec> out;
  out.reserve(n_chars);

  auto pick_balanced = [&]() {
    // Keep radical frequencies close: draw from the radicals at (or one
    // above) the current minimum usage.
    const int64_t m = *std::min_element(usage.begin(), usage.end());
    std::vector<int> pool;
    for (int r = 0; r < n; ++r)
      if (usage[r] <= m + 1) pool.push_back(r);
    return pool[static_cast<size_t>(rng.uniform_int(pool.size()))];
  };

  for (int i = 0; i < n_chars; ++i) {
    CharacterSpec spec;
    spec.char_id = i;
    bool accepted = false;
    for (int attempt = 0; attempt < 1000 && !accepted; ++attempt) {
      const Layout layout = layouts[static_cast<size_t>(rng.uniform_int(layouts.size()))];
      const int arity = layout_arity(layout);
      std::vector<int> radicals;
      for (int a = 0; a < arity; ++a) {
        const int r = pick_balanced();
        radicals.push_back(r);
        ++usage[r];
      }
      if (used.emplace(static_cast<int>(layout), radicals).second) {
        spec.layout = layout;
        spec.radicals = std::move(radicals);
        accepted = true;
      } else {
        for (int r : radicals) --usage[r];
      }
    }
    if (!accepted) {
      // Capacity nearly exhausted; fall back to a deterministic scan for the
      // first unused combination.
      for (Layout layout : layouts) {
        const int arity = layout_arity(layout);
        std::vector<int> radicals(arity, 0);
        while (true) {
          if (used.emplace(static_cast<int>(layout), radicals).second) {
            spec.layout = layout;
            spec.radicals = radicals;
            for (int r : radicals) ++usage[r];
            accepted = true;
            break;
          }
          int pos = arity - 1;
          while (pos >= 0 && ++radicals[pos] == n) radicals[pos--] = 0;
          if (pos < 0) break;
        }
        if (accepted) break;
      }
    }
    if (!accepted) {
      throw std::logic_error("enumerate_characters: combination space exhausted early");
    }
    out.push_back(std::move(spec));
  }
  return out;
}

GlyphImage render_glyph(const CharacterSpec& spec, const RadicalAtlas& atlas, Style style,
                        int size, uint64_t seed) {
  const int arity = layout_arity(spec.layout);
  if (static_cast<int>(spec.radicals.size()) != arity) {
    throw std::invalid_argument("render_glyph: layout " + std::string(layout_name(spec.layout)) +
                                " needs " + std::to_string(arity) + " radicals, got " +
                                std::to_string(spec.radicals.size()));
  }
  for (int r : spec.radicals) {
    if (r < 0 || r >= atlas.n_radicals) {
      throw std::invalid_argument("render_glyph: radical id " + std::to_string(r) +
                                  " outside atlas of " + std::to_string(atlas.n_radicals));
    }
  }
  if (arity > 1 && size < 2 * atlas.cell_px) {
    throw std::invalid_argument("render_glyph: size " + std::to_string(size) +
                                " too small for a multi-radical layout (need >= " +
                                std::to_string(2 * atlas.cell_px) + ")");
  }

  const int cell = atlas.cell_px;
  std::vector<uint8_t> grid(static_cast<size_t>(size) * size, 0);
  const auto anchors = layout_anchors(spec.layout);
  for (int k = 0; k < arity; ++k) {
    const auto& bm = atlas.bitmaps[static_cast<size_t>(spec.radicals[k])];
    const int x0 = static_cast<int>(std::lround(anchors[k].fx * size - cell / 2.0));
    const int y0 = static_cast<int>(std::lround(anchors[k].fy * size - cell / 2.0));
    for (int y = 0; y < cell; ++y) {
      const int yy = y0 + y;
      if (yy < 0 || yy >= size) continue;
      for (int x = 0; x < cell; ++x) {
        const int xx = x0 + x;
        if (xx < 0 || xx >= size) continue;
        if (bm[static_cast<size_t>(y) * cell + x]) grid[static_cast<size_t>(yy) * size + xx] = 1;
      }
    }
  }

  GlyphImage img;
  img.side = size;
  img.style = style;
  img.char_id = spec.char_id;
  img.pixels.resize(grid.size());

  if (style == Style::kCanonical) {
    for (size_t i = 0; i < grid.size(); ++i) img.pixels[i] = grid[i] ? 1.0f : 0.0f;
    return img;
  }

  RandomStream rng(substream_seed(seed, "render." + std::to_string(spec.char_id) + "." +
                                            std::string(style_name(style))));
  // Draw order is fixed: morph coin, offset x, offset y, contrast,
  // then (complex only) shear angle and the per-pixel dropout sweep.
  grid = rng.coin() ? dilate3(grid, size) : erode3(grid, size);
  const int dx = static_cast<int>(rng.uniform_int(5)) - 2;
  const int dy = static_cast<int>(rng.uniform_int(5)) - 2;
  const float contrast = static_cast<float>(rng.uniform(0.8, 1.0));

  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const int sx = x - dx, sy = y - dy;
      const bool ink =
          sx >= 0 && sx < size && sy >= 0 && sy < size && grid[static_cast<size_t>(sy) * size + sx];
      img.pixels[static_cast<size_t>(y) * size + x] = ink ? contrast : 0.0f;
    }
  }

  if (style == Style::kComplex) {
    const double theta = rng.uniform(-10.0, 10.0) * M_PI / 180.0;
    const double t = std::tan(theta);
    const double c = (size - 1) / 2.0;
    std::vector<float> sheared(img.pixels.size());
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        sheared[static_cast<size_t>(y) * size + x] =
            bilinear_at(img.pixels, size, x + t * (y - c), y);
      }
    }
    img.pixels = std::move(sheared);
    for (auto& v : img.pixels) {
      if (v > 0.0f && rng.uniform() < 0.2) v = 0.0f;
    }
  }
  return img;
}

GlyphImage augment(const GlyphImage& img, double blur_sigma, double rot_lo, double rot_hi,
                   uint64_t seed) {
  if (blur_sigma < 0) {
    throw std::invalid_argument("augment: blur_sigma must be >= 0, got " +
                                std::to_string(blur_sigma));
  }
  if (std::abs(rot_lo + rot_hi) > 1e-9) {
    throw std::invalid_argument("augment: rotation range must be symmetric around zero, got [" +
                                std::to_string(rot_lo) + ", " + std::to_string(rot_hi) + "]");
  }
  const int side = img.side;
  GlyphImage out = img;

  if (blur_sigma > 0) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3 * blur_sigma)));
    std::vector<double> k(static_cast<size_t>(2 * radius + 1));
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
      k[static_cast<size_t>(i + radius)] = std::exp(-(i * i) / (2 * blur_sigma * blur_sigma));
      sum += k[static_cast<size_t>(i + radius)];
    }
    for (auto& v : k) v /= sum;

    std::vector<float> tmp(out.pixels.size(), 0.0f);
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          const int xx = x + i;
          if (xx >= 0 && xx < side)
            acc += k[static_cast<size_t>(i + radius)] * out.pixels[static_cast<size_t>(y) * side + xx];
        }
        tmp[static_cast<size_t>(y) * side + x] = static_cast<float>(acc);
      }
    }
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          const int yy = y + i;
          if (yy >= 0 && yy < side)
            acc += k[static_cast<size_t>(i + radius)] * tmp[static_cast<size_t>(yy) * side + x];
        }
        out.pixels[static_cast<size_t>(y) * side + x] = static_cast<float>(acc);
      }
    }
  }

  double angle = rot_lo;
  if (rot_hi > rot_lo) {
    RandomStream rng(substream_seed(seed, "augment"));
    angle = rng.uniform(rot_lo, rot_hi);
  }
  if (angle != 0.0) {
    const double rad = angle * M_PI / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double c = (side - 1) / 2.0;
    std::vector<float> rot(out.pixels.size());
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        const double ux = x - c, uy = y - c;
        rot[static_cast<size_t>(y) * side + x] =
            bilinear_at(out.pixels, side, c + cs * ux + sn * uy, c - sn * ux + cs * uy);
      }
    }
    out.pixels = std::move(rot);
  }

  out.blur_sigma = static_cast<float>(blur_sigma);
  out.rotation_deg = static_cast<float>(angle);
  return out;
}

LabelSet make_labels(const CharacterSpec& spec, int n_radicals) {
  LabelSet ls;
  ls.category = spec.char_id;
  ls.radical_counts.assign(static_cast<size_t>(n_radicals), 0);
  for (int r : spec.radicals) {
    if (r < 0 || r >= n_radicals) {
      throw std::invalid_argument("make_labels: radical id " + std::to_string(r) +
                                  " outside inventory of " + std::to_string(n_radicals));
    }
    ++ls.radical_counts[static_cast<size_t>(r)];
  }
  return ls;
}

SplitSpec split_dataset(const std::vector<CharacterSpec>& chars, int train_n, int val_n,
                        int test_n, SplitPolicy policy, uint64_t seed) {
  if (train_n < 0 || val_n < 0 || test_n < 0) {
    throw std::invalid_argument("split_dataset: negative split size");
  }
  const int total = train_n + val_n + test_n;
  if (total > static_cast<int>(chars.size())) {
    throw std::invalid_argument("split_dataset: requested " + std::to_string(total) +
                                " characters but only " + std::to_string(chars.size()) +
                                " exist");
  }
  int n_radicals = 0;
  for (const auto& c : chars)
    for (int r : c.radicals) n_radicals = std::max(n_radicals, r + 1);

  RandomStream rng(substream_seed(seed, "split"));
  std::vector<int> order(chars.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  SplitSpec split;
  split.policy = policy;

  if (policy == SplitPolicy::kRadicalCovered) {
    std::vector<char> covered(static_cast<size_t>(n_radicals), 0);
    std::vector<char> taken(chars.size(), 0);
    // Coverage-first: walk the shuffled order, taking characters that
    // introduce an uncovered radical.
    for (int idx : order) {
      if (static_cast<int>(split.train_ids.size()) >= train_n) break;
      bool adds = false;
      for (int r : chars[static_cast<size_t>(idx)].radicals) adds = adds || !covered[static_cast<size_t>(r)];
      if (!adds) continue;
      for (int r : chars[static_cast<size_t>(idx)].radicals) covered[static_cast<size_t>(r)] = 1;
      split.train_ids.push_back(chars[static_cast<size_t>(idx)].char_id);
      taken[static_cast<size_t>(idx)] = 1;
    }
    for (int idx : order) {
      if (static_cast<int>(split.train_ids.size()) >= train_n) break;
      if (taken[static_cast<size_t>(idx)]) continue;
      for (int r : chars[static_cast<size_t>(idx)].radicals) covered[static_cast<size_t>(r)] = 1;
      split.train_ids.push_back(chars[static_cast<size_t>(idx)].char_id);
      taken[static_cast<size_t>(idx)] = 1;
    }
    std::vector<int> rest;
    for (int idx : order)
      if (!taken[static_cast<size_t>(idx)]) rest.push_back(idx);
    size_t pos = 0;
    while (static_cast<int>(split.val_ids.size()) < val_n && pos < rest.size())
      split.val_ids.push_back(chars[static_cast<size_t>(rest[pos++])].char_id);
    std::set<int> blockers;
    while (static_cast<int>(split.test_ids.size()) < test_n && pos < rest.size()) {
      const auto& c = chars[static_cast<size_t>(rest[pos++])];
      bool ok = true;
      for (int r : c.radicals) {
        if (!covered[static_cast<size_t>(r)]) {
          ok = false;
          blockers.insert(r);
        }
      }
      if (ok) split.test_ids.push_back(c.char_id);
    }
    if (static_cast<int>(split.test_ids.size()) < test_n) {
      std::string ids;
      for (int r : blockers) ids += (ids.empty() ? "" : ", ") + std::to_string(r);
      throw std::runtime_error(
          "split_dataset: radical-covered split infeasible; radicals {" + ids +
          "} never make it into training with train_n=" + std::to_string(train_n));
    }
  } else {
    // Hold out a slice of radicals entirely from train/val; characters using
    // them can only appear in test.
    const int want_open = test_n > 0 ? (test_n + 9) / 10 : 0;
    std::vector<int> rad_order(static_cast<size_t>(n_radicals));
    std::iota(rad_order.begin(), rad_order.end(), 0);
    rng.shuffle(rad_order);

    std::vector<char> held(static_cast<size_t>(n_radicals), 0);
    std::vector<int> open_chars, closed_chars;
    bool feasible = false;
    for (int h = std::max(1, n_radicals / 8); h <= n_radicals && !feasible; ++h) {
      std::fill(held.begin(), held.end(), 0);
      for (int i = 0; i < h; ++i) held[static_cast<size_t>(rad_order[static_cast<size_t>(i)])] = 1;
      open_chars.clear();
      closed_chars.clear();
      for (int idx : order) {
        bool open = false;
        for (int r : chars[static_cast<size_t>(idx)].radicals) open = open || held[static_cast<size_t>(r)];
        (open ? open_chars : closed_chars).push_back(idx);
      }
      feasible = static_cast<int>(open_chars.size()) >= want_open &&
                 static_cast<int>(closed_chars.size()) >= train_n + val_n &&
                 static_cast<int>(open_chars.size() + closed_chars.size()) - train_n - val_n >=
                     test_n;
    }
    if (!feasible) {
      throw std::runtime_error(
          "split_dataset: radical-open split infeasible for these sizes (need >= " +
          std::to_string(want_open) + " open test characters)");
    }
    size_t pos = 0;
    while (static_cast<int>(split.train_ids.size()) < train_n)
      split.train_ids.push_back(chars[static_cast<size_t>(closed_chars[pos++])].char_id);
    while (static_cast<int>(split.val_ids.size()) < val_n)
      split.val_ids.push_back(chars[static_cast<size_t>(closed_chars[pos++])].char_id);
    size_t open_pos = 0;
    while (static_cast<int>(split.test_ids.size()) < test_n && open_pos < open_chars.size())
      split.test_ids.push_back(chars[static_cast<size_t>(open_chars[open_pos++])].char_id);
    while (static_cast<int>(split.test_ids.size()) < test_n && pos < closed_chars.size())
      split.test_ids.push_back(chars[static_cast<size_t>(closed_chars[pos++])].char_id);
  }
  return split;
}

Dataset generate_dataset(const DataGenParams& p, uint64_t seed) {
  Dataset ds;
  ds.seed = seed;
  ds.image_size = p.image_size;
  ds.atlas = build_radical_atlas(p.n_radicals, p.cell_px, substream_seed(seed, "data.atlas"));
  ds.chars = enumerate_characters(ds.atlas, p.n_chars, substream_seed(seed, "data.chars"));
  ds.labels.reserve(ds.chars.size());
  for (const auto& c : ds.chars) ds.labels.push_back(make_labels(c, p.n_radicals));
  ds.split = split_dataset(ds.chars, p.train_n, p.val_n, p.test_n, p.policy,
                           substream_seed(seed, "data.split"));
  return ds;
}

std::string manifest_json(const Dataset& ds) {
  json j;
  j["atlas"] = {{"cell_px", ds.atlas.cell_px},
                {"n_radicals", ds.atlas.n_radicals},
                {"seed", ds.atlas.seed}};
  j["image_size"] = ds.image_size;
  j["seed"] = ds.seed;
  json chars = json::array();
  for (size_t i = 0; i < ds.chars.size(); ++i) {
    const auto& c = ds.chars[i];
    chars.push_back({{"char_id", c.char_id},
                     {"layout", std::string(layout_name(c.layout))},
                     {"radical_counts", ds.labels[i].radical_counts},
                     {"radicals", c.radicals}});
  }
  j["characters"] = std::move(chars);
  j["split"] = {{"policy", std::string(split_policy_name(ds.split.policy))},
                {"test", ds.split.test_ids},
                {"train", ds.split.train_ids},
                {"val", ds.split.val_ids}};
  json styles = json::array();
  for (Style s : kAllStyles) styles.push_back(std::string(style_name(s)));
  j["styles"] = std::move(styles);
  return j.dump(2) + "\n";
}

void save_dataset(const Dataset& ds, const std::string& dir, bool force) {
  const fs::path root(dir);
  const fs::path manifest = root / "manifest.json";
  if (fs::exists(manifest) && !force) {
    throw std::runtime_error("save_dataset: " + manifest.string() +
                             " already exists (pass force to overwrite)");
  }
  fs::create_directories(root / "images");
  {
    std::ofstream f(manifest, std::ios::binary);
    if (!f) throw std::runtime_error("save_dataset: cannot write " + manifest.string());
    f << manifest_json(ds);
  }
  for (Style s : kAllStyles) {
    const fs::path sdir = root / "images" / std::string(style_name(s));
    fs::create_directories(sdir);
    for (const auto& c : ds.chars) {
      const GlyphImage img = render_glyph(c, ds.atlas, s, ds.image_size, ds.seed);
      write_pgm((sdir / (std::to_string(c.char_id) + ".pgm")).string(), img);
    }
  }
}

namespace {

json parse_manifest_file(const fs::path& manifest) {
  std::ifstream f(manifest, std::ios::binary);
  if (!f) throw std::runtime_error("missing manifest: " + manifest.string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed manifest " + manifest.string() + ": " + e.what());
  }
  return j;
}

}  // namespace

Dataset load_manifest(const std::string& dir) {
  const fs::path manifest = fs::path(dir) / "manifest.json";
  json j = parse_manifest_file(manifest);
  Dataset ds;
  try {
    const auto& atlas = j.at("atlas");
    ds.atlas = build_radical_atlas(atlas.at("n_radicals").get<int>(),
                                   atlas.at("cell_px").get<int>(),
                                   atlas.at("seed").get<uint64_t>());
    ds.image_size = j.at("image_size").get<int>();
    ds.seed = j.at("seed").get<uint64_t>();
    for (const auto& cj : j.at("characters")) {
      CharacterSpec c;
      c.char_id = cj.at("char_id").get<int>();
      c.layout = layout_from_name(cj.at("layout").get<std::string>());
      c.radicals = cj.at("radicals").get<std::vector<int>>();
      LabelSet ls;
      ls.category = c.char_id;
      ls.radical_counts = cj.at("radical_counts").get<std::vector<int>>();
      if (static_cast<int>(ls.radical_counts.size()) != ds.atlas.n_radicals) {
        throw std::runtime_error("manifest " + manifest.string() + ": char " +
                                 std::to_string(c.char_id) + " has " +
                                 std::to_string(ls.radical_counts.size()) +
                                 " radical counts but the atlas declares " +
                                 std::to_string(ds.atlas.n_radicals) + " radicals");
      }
      const LabelSet expect = make_labels(c, ds.atlas.n_radicals);
      if (expect.radical_counts != ls.radical_counts) {
        throw std::runtime_error("manifest " + manifest.string() + ": char " +
                                 std::to_string(c.char_id) +
                                 " radical counts disagree with its radical list");
      }
      ds.chars.push_back(std::move(c));
      ds.labels.push_back(std::move(ls));
    }
    const auto& sj = j.at("split");
    ds.split.policy = split_policy_from_name(sj.at("policy").get<std::string>());
    ds.split.train_ids = sj.at("train").get<std::vector<int>>();
    ds.split.val_ids = sj.at("val").get<std::vector<int>>();
    ds.split.test_ids = sj.at("test").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw std::runtime_error("manifest " + manifest.string() + ": " + e.what());
  }
  return ds;
}

LoadedDataset load_external_dataset(const std::string& dir) {
  LoadedDataset out;
  out.meta = load_manifest(dir);
  const fs::path manifest = fs::path(dir) / "manifest.json";
  json j = parse_manifest_file(manifest);
  std::vector<std::string> styles;
  try {
    styles = j.at("styles").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw std::runtime_error("manifest " + manifest.string() + ": " + e.what());
  }
  for (const auto& sname : styles) {
    const Style style = style_from_name(sname);
    out.styles.push_back(style);
    std::vector<GlyphImage> imgs;
    imgs.reserve(out.meta.chars.size());
    for (const auto& c : out.meta.chars) {
      const fs::path p =
          fs::path(dir) / "images" / sname / (std::to_string(c.char_id) + ".pgm");
      GlyphImage img = read_pgm(p.string());
      if (img.side != out.meta.image_size) {
        throw std::runtime_error("image " + p.string() + ": side " + std::to_string(img.side) +
                                 " does not match manifest image_size " +
                                 std::to_string(out.meta.image_size));
      }
      img.style = style;
      img.char_id = c.char_id;
      imgs.push_back(std::move(img));
    }
    out.images.push_back(std::move(imgs));
  }
  return out;
}

void write_pgm(const std::string& path, const GlyphImage& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_pgm: cannot open " + path);
  f << "P5\n" << img.side << " " << img.side << "\n255\n";
  std::vector<uint8_t> bytes(img.pixels.size());
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    const float v = std::clamp(img.pixels[i], 0.0f, 1.0f);
    bytes[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
  }
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write_pgm: short write to " + path);
}

GlyphImage read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_pgm: cannot open " + path);
  auto next_token = [&]() -> std::string {
    std::string tok;
    int ch;
    while ((ch = f.get()) != EOF) {
      if (ch == '#') {
        while ((ch = f.get()) != EOF && ch != '\n') {
        }
        continue;
      }
      if (std::isspace(ch)) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(static_cast<char>(ch));
    }
    if (tok.empty()) throw std::runtime_error("read_pgm: truncated header in " + path);
    return tok;
  };
  if (next_token() != "P5") throw std::runtime_error("read_pgm: " + path + " is not binary PGM");
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (w <= 0 || h <= 0 || w != h) {
    throw std::runtime_error("read_pgm: " + path + " has non-square size " + std::to_string(w) +
                             "x" + std::to_string(h));
  }
  if (maxval != 255) {
    throw std::runtime_error("read_pgm: " + path + " maxval " + std::to_string(maxval) +
                             " unsupported (want 255)");
  }
  std::vector<uint8_t> bytes(static_cast<size_t>(w) * h);
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (f.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw std::runtime_error("read_pgm: " + path + " truncated (expected " +
                             std::to_string(bytes.size()) + " pixel bytes, got " +
                             std::to_string(f.gcount()) + ")");
  }
  GlyphImage img;
  img.side = w;
  img.pixels.resize(bytes.size());
  for (size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = static_cast<float>(bytes[i]) / 255.0f;
  return img;
}

}  // namespace gz
