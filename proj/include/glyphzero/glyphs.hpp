#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace gz {

enum class Layout { kSingle, kLeftRight, kTopBottom, kLeftMiddleRight, kTopMiddleBottom };

constexpr std::array<Layout, 5> kAllLayouts = {Layout::kSingle, Layout::kLeftRight,
                                               Layout::kTopBottom, Layout::kLeftMiddleRight,
                                               Layout::kTopMiddleBottom};

int layout_arity(Layout l);
std::string_view layout_name(Layout l);
Layout layout_from_name(std::string_view name);

enum class Style { kCanonical, kVariant, kComplex };

constexpr std::array<Style, 3> kAllStyles = {Style::kCanonical, Style::kVariant, Style::kComplex};

std::string_view style_name(Style s);
Style style_from_name(std::string_view name);

// A bank of procedural binary sub-glyph bitmaps. Radicals are guaranteed
// mutually distinct (pairwise Hamming distance at least 10% of the cell area)
// and inked between 15% and 60% of the cell.
struct RadicalAtlas {
  int n_radicals = 0;
  int cell_px = 0;
  uint64_t seed = 0;
  std::vector<std::vector<uint8_t>> bitmaps;  // each cell_px*cell_px, values 0/1
};

// One character: a layout plus the radicals filling its slots (repeats
// allowed). Layout drives rendering only and never appears in labels.
struct CharacterSpec {
  int char_id = 0;
  Layout layout = Layout::kSingle;
  std::vector<int> radicals;
};

struct GlyphImage {
  int side = 0;
  std::vector<float> pixels;  // row-major, values in [0,1]
  Style style = Style::kCanonical;
  int char_id = 0;
  float blur_sigma = 0.0f;
  float rotation_deg = 0.0f;
};

// Structure-free supervision: the category id and how many times each
// radical occurs, with no ordering or layout information.
struct LabelSet {
  int category = 0;
  std::vector<int> radical_counts;
};

enum class SplitPolicy { kRadicalCovered, kRadicalOpen };

std::string_view split_policy_name(SplitPolicy p);
SplitPolicy split_policy_from_name(std::string_view name);

struct SplitSpec {
  SplitPolicy policy = SplitPolicy::kRadicalCovered;
  std::vector<int> train_ids, val_ids, test_ids;
};

RadicalAtlas build_radical_atlas(int n_radicals, int cell_px, uint64_t seed);

// Draws n_chars unique (layout, radical-tuple) combinations, keeping radical
// usage roughly uniform. `layouts` restricts the layout inventory.
std::vector<CharacterSpec> enumerate_characters(const RadicalAtlas& atlas, int n_chars,
                                                uint64_t seed,
                                                const std::vector<Layout>& layouts = {
                                                    kAllLayouts.begin(), kAllLayouts.end()});

// Canonical: exact bitmap placement per layout. Variant: one morphological
// dilation or erosion, a placement offset up to ±2px, and a contrast scale
// in [0.8, 1.0]. Complex: variant plus shear up to ±10° and 20% ink dropout.
// All randomness is a pure function of (seed, char_id, style).
GlyphImage render_glyph(const CharacterSpec& spec, const RadicalAtlas& atlas, Style style,
                        int size, uint64_t seed);

// Gaussian blur first, then rotation by an angle drawn uniformly from
// [rot_lo, rot_hi] (must be symmetric around zero), bilinear resampling with
// zero padding. blur_sigma == 0 and a [0,0] range are exact no-ops.
GlyphImage augment(const GlyphImage& img, double blur_sigma, double rot_lo, double rot_hi,
                   uint64_t seed);

LabelSet make_labels(const CharacterSpec& spec, int n_radicals);

// radical-covered: every radical used by a test character also appears in
// some training character. radical-open: at least 10% of test characters use
// a radical absent from training.
SplitSpec split_dataset(const std::vector<CharacterSpec>& chars, int train_n, int val_n,
                        int test_n, SplitPolicy policy, uint64_t seed);

// The manifest is the single source of truth; images are re-renderable.
struct Dataset {
  RadicalAtlas atlas;
  int image_size = 32;
  uint64_t seed = 0;
  std::vector<CharacterSpec> chars;    // indexed by char_id
  std::vector<LabelSet> labels;        // parallel to chars
  SplitSpec split;
};

struct DataGenParams {
  int n_radicals = 40;
  int cell_px = 12;
  int n_chars = 600;
  int image_size = 32;
  int train_n = 200;
  int val_n = 50;
  int test_n = 350;
  SplitPolicy policy = SplitPolicy::kRadicalCovered;
};

Dataset generate_dataset(const DataGenParams& p, uint64_t seed);

std::string manifest_json(const Dataset& ds);

// Writes manifest.json plus images/<style>/<char_id>.pgm for all styles.
// Refuses to touch an existing manifest unless force is set.
void save_dataset(const Dataset& ds, const std::string& dir, bool force);

// Reads back only the manifest (images are derivable).
Dataset load_manifest(const std::string& dir);

// Full loader for externally produced datasets: reads the manifest and every
// style directory it declares, validating images and labels.
struct LoadedDataset {
  Dataset meta;
  std::vector<Style> styles;
  // images[i][j] is style styles[i], character meta.chars[j].
  std::vector<std::vector<GlyphImage>> images;
};

LoadedDataset load_external_dataset(const std::string& dir);

void write_pgm(const std::string& path, const GlyphImage& img);
GlyphImage read_pgm(const std::string& path);

}  // namespace gz
