#include "killchain/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "killchain/image_io.hpp"
#include "killchain/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace killchain {

namespace {

struct GtsrbRow {
  std::string filename;
  int width = 0;
  int height = 0;
  int roi_x1 = 0;
  int roi_y1 = 0;
  int roi_x2 = 0;
  int roi_y2 = 0;
  int class_id = 0;
};

int parse_int_field(const std::string& s, const std::string& csv, int row) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw IngestError("malformed CSV row " + std::to_string(row) + " in " + csv +
                      ": bad integer '" + s + "'");
  }
  return value;
}

std::vector<GtsrbRow> parse_gtsrb_csv(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IngestError("missing annotation CSV: " + csv_path);
  std::vector<GtsrbRow> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("Filename", 0) == 0) continue;  // header
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ';')) fields.push_back(field);
    if (fields.size() != 8) {
      throw IngestError("malformed CSV row " + std::to_string(line_no) + " in " + csv_path +
                        ": expected 8 fields, got " + std::to_string(fields.size()));
    }
    GtsrbRow r;
    r.filename = fields[0];
    r.width = parse_int_field(fields[1], csv_path, line_no);
    r.height = parse_int_field(fields[2], csv_path, line_no);
    r.roi_x1 = parse_int_field(fields[3], csv_path, line_no);
    r.roi_y1 = parse_int_field(fields[4], csv_path, line_no);
    r.roi_x2 = parse_int_field(fields[5], csv_path, line_no);
    r.roi_y2 = parse_int_field(fields[6], csv_path, line_no);
    r.class_id = parse_int_field(fields[7], csv_path, line_no);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string find_class_csv(const fs::path& class_dir) {
  // Prefer GT-<dirname>.csv, else the single CSV present.
  const fs::path preferred = class_dir / ("GT-" + class_dir.filename().string() + ".csv");
  if (fs::exists(preferred)) return preferred.string();
  std::vector<std::string> csvs;
  for (const auto& e : fs::directory_iterator(class_dir)) {
    if (e.path().extension() == ".csv") csvs.push_back(e.path().string());
  }
  if (csvs.size() != 1) {
    throw IngestError("missing annotation CSV in " + class_dir.string());
  }
  return csvs.front();
}

}  // namespace

LabeledDataset load_gtsrb(const std::string& root_path,
                          const std::optional<std::vector<int>>& class_subset, int image_h,
                          int image_w) {
  if (!fs::is_directory(root_path)) {
    throw IngestError("GTSRB root is not a directory: " + root_path);
  }

  std::map<int, int> remap;  // original class id -> dense label
  if (class_subset) {
    for (std::size_t i = 0; i < class_subset->size(); ++i) {
      remap[(*class_subset)[i]] = static_cast<int>(i);
    }
  }

  // Numeric subdirectories, in class-id order for reproducibility.
  std::vector<std::pair<int, fs::path>> class_dirs;
  for (const auto& e : fs::directory_iterator(root_path)) {
    if (!e.is_directory()) continue;
    const std::string name = e.path().filename().string();
    int id = 0;
    const auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), id);
    if (ec == std::errc() && ptr == name.data() + name.size()) {
      class_dirs.emplace_back(id, e.path());
    }
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) {
    throw IngestError("no class subdirectories under " + root_path);
  }

  LabeledDataset ds;
  ds.label_kind = LabelKind::kClass;
  int max_class_seen = -1;
  for (const auto& [dir_class, dir] : class_dirs) {
    if (class_subset && !remap.count(dir_class)) continue;
    const std::string csv = find_class_csv(dir);
    for (const auto& row : parse_gtsrb_csv(csv)) {
      const fs::path img_path = dir / row.filename;
      if (!fs::exists(img_path)) {
        throw IngestError("image listed in " + csv + " is missing: " + img_path.string());
      }
      RawImage raw = read_ppm(img_path.string());
      // ROI corners are inclusive pixel coordinates.
      RawImage roi = crop(raw, row.roi_x1, row.roi_y1, row.roi_x2, row.roi_y2);
      ds.images.push_back(resize_bilinear(to_float(roi), image_h, image_w));
      const int label = class_subset ? remap.at(row.class_id) : row.class_id;
      ds.labels.push_back(HardLabel{label});
      max_class_seen = std::max(max_class_seen, label);
    }
  }
  ds.num_classes =
      class_subset ? static_cast<int>(class_subset->size()) : max_class_seen + 1;
  ds.validate();
  return ds;
}

LabeledDataset make_synthetic_pd_dataset(int n, int image_h, int image_w, std::uint64_t seed) {
  if (n <= 0) throw Error("make_synthetic_pd_dataset: n must be positive");
  Rng rng(seed ^ 0x70640000u);
  LabeledDataset ds;
  ds.label_kind = LabelKind::kBox;
  ds.images.reserve(n);
  ds.labels.reserve(n);

  for (int i = 0; i < n; ++i) {
    Image img(image_h, image_w, 3);

    // Textured background: mid-tone base with a soft diagonal ramp and noise.
    const float base = rng.uniform(0.45f, 0.75f);
    const float ramp = rng.uniform(-0.15f, 0.15f);
    const float tint_r = rng.uniform(-0.05f, 0.05f);
    const float tint_b = rng.uniform(-0.05f, 0.05f);
    for (int y = 0; y < image_h; ++y) {
      for (int x = 0; x < image_w; ++x) {
        const float g = base + ramp * (static_cast<float>(x + y) / (image_h + image_w)) +
                        rng.uniform(-0.06f, 0.06f);
        img.at(y, x, 0) = g + tint_r;
        img.at(y, x, 1) = g;
        img.at(y, x, 2) = g + tint_b;
      }
    }

    // One upright high-contrast rectangle; regenerate degenerate sizes.
    int bw = 0;
    int bh = 0;
    do {
      bw = static_cast<int>(std::lround(rng.uniform(kPdMinWFrac, kPdMaxWFrac) * image_w));
      bh = static_cast<int>(std::lround(rng.uniform(kPdMinHFrac, kPdMaxHFrac) * image_h));
    } while (bw < 2 || bh < 2);
    const int x0 = rng.uniform_int(0, image_w - bw);
    const int y0 = rng.uniform_int(0, image_h - bh);

    // Dark figure on a light background keeps the contrast high.
    const float body = rng.uniform(0.02f, 0.18f);
    for (int y = y0; y < y0 + bh; ++y) {
      for (int x = x0; x < x0 + bw; ++x) {
        const float shade = body + rng.uniform(0.0f, 0.05f);
        img.at(y, x, 0) = shade;
        img.at(y, x, 1) = shade;
        img.at(y, x, 2) = shade + rng.uniform(0.0f, 0.03f);
      }
    }

    // Snap to the 8-bit grid and clamp into [0,1].
    for (float& v : img.pixels) {
      v = std::clamp(v, 0.0f, 1.0f);
      v = std::round(v * 255.0f) / 255.0f;
    }

    BoundingBox box;
    box.x_min = static_cast<float>(x0) / image_w;
    box.y_min = static_cast<float>(y0) / image_h;
    box.x_max = static_cast<float>(x0 + bw) / image_w;
    box.y_max = static_cast<float>(y0 + bh) / image_h;
    box.validate();

    ds.images.push_back(std::move(img));
    ds.labels.push_back(box);
  }
  ds.validate();
  return ds;
}

namespace {

enum class SignShape { kCircle, kSquare, kDiamond, kTriangleUp, kTriangleDown, kOctagon };

struct SignStyle {
  SignShape shape;
  std::array<float, 3> color;
};

// Distinct hue/shape combinations; hue carries most of the class signal.
const std::array<SignStyle, 10> kSignStyles = {{
    {SignShape::kCircle, {0.86f, 0.12f, 0.12f}},      // red circle
    {SignShape::kCircle, {0.12f, 0.24f, 0.86f}},      // blue circle
    {SignShape::kDiamond, {0.92f, 0.78f, 0.12f}},     // yellow diamond
    {SignShape::kCircle, {0.16f, 0.71f, 0.24f}},      // green circle
    {SignShape::kOctagon, {0.94f, 0.51f, 0.08f}},     // orange octagon
    {SignShape::kSquare, {0.78f, 0.16f, 0.71f}},      // magenta square
    {SignShape::kTriangleUp, {0.16f, 0.78f, 0.86f}},  // cyan triangle
    {SignShape::kTriangleDown, {0.92f, 0.92f, 0.92f}},// white triangle
    {SignShape::kSquare, {0.47f, 0.16f, 0.78f}},      // purple square
    {SignShape::kDiamond, {0.55f, 0.27f, 0.12f}},     // brown diamond
}};

bool inside_shape(SignShape shape, float dx, float dy, float r) {
  switch (shape) {
    case SignShape::kCircle:
      return dx * dx + dy * dy <= r * r;
    case SignShape::kSquare:
      return std::max(std::fabs(dx), std::fabs(dy)) <= r * 0.88f;
    case SignShape::kDiamond:
      return std::fabs(dx) + std::fabs(dy) <= r * 1.18f;
    case SignShape::kTriangleUp:
      return dy >= -r && dy <= r * 0.85f && std::fabs(dx) <= (dy + r) * 0.62f;
    case SignShape::kTriangleDown:
      return dy <= r && dy >= -r * 0.85f && std::fabs(dx) <= (r - dy) * 0.62f;
    case SignShape::kOctagon:
      return std::max(std::fabs(dx), std::fabs(dy)) <= r * 0.92f &&
             std::fabs(dx) + std::fabs(dy) <= r * 1.30f;
  }
  return false;
}

struct RenderedSign {
  RawImage image;
  int roi_x1, roi_y1, roi_x2, roi_y2;
};

RenderedSign render_sign(int class_id, Rng& rng) {
  const SignStyle& style = kSignStyles[class_id];
  const int size = rng.uniform_int(30, 54);
  const float cx = size * rng.uniform(0.42f, 0.58f);
  const float cy = size * rng.uniform(0.42f, 0.58f);
  const float r = size * rng.uniform(0.30f, 0.42f);
  const float brightness = rng.uniform(0.55f, 1.15f);

  std::array<float, 3> color = style.color;
  for (float& ch : color) ch = std::clamp(ch + rng.uniform(-0.06f, 0.06f), 0.0f, 1.0f);

  // Dull background with vertical shading, as if photographed outdoors.
  const float bg = rng.uniform(0.25f, 0.55f);
  const float bg_ramp = rng.uniform(-0.1f, 0.1f);

  RawImage img;
  img.h = size;
  img.w = size;
  img.c = 3;
  img.pixels.resize(static_cast<std::size_t>(size) * size * 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const float dx = x - cx;
      const float dy = y - cy;
      std::array<float, 3> px;
      if (inside_shape(style.shape, dx, dy, r)) {
        const bool border = !inside_shape(style.shape, dx * 1.18f, dy * 1.18f, r);
        for (int ch = 0; ch < 3; ++ch) px[ch] = border ? color[ch] * 0.55f : color[ch];
      } else {
        const float g = bg + bg_ramp * (static_cast<float>(y) / size) +
                        rng.uniform(-0.03f, 0.03f);
        px = {g, g * rng.uniform(0.95f, 1.05f), g};
      }
      for (int ch = 0; ch < 3; ++ch) {
        float v = px[ch] * brightness + rng.normal(0.0f, 0.035f);
        v = std::clamp(v, 0.0f, 1.0f);
        img.pixels[(static_cast<std::size_t>(y) * size + x) * 3 + ch] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }

  RenderedSign out;
  out.image = std::move(img);
  const int margin = rng.uniform_int(2, 4);
  out.roi_x1 = std::max(0, static_cast<int>(cx - r) - margin);
  out.roi_y1 = std::max(0, static_cast<int>(cy - r) - margin);
  out.roi_x2 = std::min(size - 1, static_cast<int>(cx + r) + margin);
  out.roi_y2 = std::min(size - 1, static_cast<int>(cy + r) + margin);
  return out;
}

}  // namespace

int make_synthetic_gtsrb_root(const std::string& root, int num_classes, int images_per_class,
                              std::uint64_t seed) {
  if (num_classes < 1 || num_classes > kMaxSyntheticSignClasses) {
    throw Error("make_synthetic_gtsrb_root: supports 1.." +
                std::to_string(kMaxSyntheticSignClasses) + " classes");
  }
  fs::create_directories(root);
  int written = 0;
  for (int cls = 0; cls < num_classes; ++cls) {
    char dirname[16];
    std::snprintf(dirname, sizeof(dirname), "%05d", cls);
    const fs::path class_dir = fs::path(root) / dirname;
    fs::create_directories(class_dir);
    std::ofstream csv(class_dir / ("GT-" + std::string(dirname) + ".csv"));
    csv << "Filename;Width;Height;Roi.X1;Roi.Y1;Roi.X2;Roi.Y2;ClassId\n";
    Rng rng(seed + 1000003ULL * cls);
    for (int i = 0; i < images_per_class; ++i) {
      RenderedSign sign = render_sign(cls, rng);
      char filename[32];
      std::snprintf(filename, sizeof(filename), "%05d_%05d.ppm", cls, i);
      write_ppm((class_dir / filename).string(), sign.image);
      csv << filename << ';' << sign.image.w << ';' << sign.image.h << ';' << sign.roi_x1 << ';'
          << sign.roi_y1 << ';' << sign.roi_x2 << ';' << sign.roi_y2 << ';' << cls << "\n";
      ++written;
    }
  }
  return written;
}

namespace {

// Anchor points whose nearest-neighbor regions define the three classes.
const std::array<std::array<float, 2>, 3> kToyAnchors = {{
    {0.25f, 0.25f},
    {0.75f, 0.35f},
    {0.40f, 0.80f},
}};

int toy_label(float u, float v) {
  int best = 0;
  float best_d = 1e9f;
  for (int k = 0; k < 3; ++k) {
    const float du = u - kToyAnchors[k][0];
    const float dv = v - kToyAnchors[k][1];
    const float d = du * du + dv * dv;
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

}  // namespace

LabeledDataset make_toy2d_dataset(int n, std::uint64_t seed) {
  if (n <= 0) throw Error("make_toy2d_dataset: n must be positive");
  Rng rng(seed ^ 0x70790000u);
  LabeledDataset ds;
  ds.label_kind = LabelKind::kClass;
  ds.num_classes = 3;
  for (int i = 0; i < n; ++i) {
    Image img(1, 1, 2);
    img.pixels[0] = rng.uniform();
    img.pixels[1] = rng.uniform();
    ds.images.push_back(std::move(img));
    ds.labels.push_back(HardLabel{toy_label(ds.images.back().pixels[0],
                                            ds.images.back().pixels[1])});
  }
  ds.validate();
  return ds;
}

std::vector<Image> toy2d_grid(int res) {
  std::vector<Image> grid;
  grid.reserve(static_cast<std::size_t>(res) * res);
  for (int i = 0; i < res; ++i) {
    for (int j = 0; j < res; ++j) {
      Image img(1, 1, 2);
      img.pixels[0] = (j + 0.5f) / res;
      img.pixels[1] = (i + 0.5f) / res;
      grid.push_back(std::move(img));
    }
  }
  return grid;
}

void save_dataset(const std::string& dir, const LabeledDataset& ds) {
  fs::create_directories(dir);
  json index;
  index["num_classes"] = ds.num_classes;
  index["label_kind"] = ds.label_kind == LabelKind::kClass ? "class" : "box";
  index["split"] = ds.split;
  index["examples"] = json::array();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img_%06zu.png", i);
    write_png((fs::path(dir) / name).string(), to_u8(ds.images[i]));
    json entry;
    entry["file"] = name;
    if (ds.label_kind == LabelKind::kClass) {
      entry["label"] = ds.class_label(i).class_id;
    } else {
      const auto& b = ds.box_label(i);
      entry["label"] = {b.x_min, b.y_min, b.x_max, b.y_max};
    }
    index["examples"].push_back(std::move(entry));
  }
  std::ofstream out(fs::path(dir) / "index.json");
  out << index.dump(2) << "\n";
}

LabeledDataset load_dataset(const std::string& dir) {
  const fs::path index_path = fs::path(dir) / "index.json";
  std::ifstream in(index_path);
  if (!in) throw IngestError("missing dataset index: " + index_path.string());
  json index;
  try {
    in >> index;
  } catch (const json::exception& e) {
    throw IngestError("bad dataset index " + index_path.string() + ": " + e.what());
  }
  LabeledDataset ds;
  ds.num_classes = index.value("num_classes", 0);
  ds.label_kind = index.value("label_kind", "class") == "box" ? LabelKind::kBox
                                                              : LabelKind::kClass;
  ds.split = index.value("split", "");
  for (const auto& entry : index.at("examples")) {
    const std::string file = entry.at("file").get<std::string>();
    ds.images.push_back(to_float(read_png((fs::path(dir) / file).string())));
    if (ds.label_kind == LabelKind::kClass) {
      ds.labels.push_back(HardLabel{entry.at("label").get<int>()});
    } else {
      const auto arr = entry.at("label");
      ds.labels.push_back(BoundingBox{arr.at(0).get<float>(), arr.at(1).get<float>(),
                                      arr.at(2).get<float>(), arr.at(3).get<float>()});
    }
  }
  ds.validate();
  return ds;
}

}  // namespace killchain
