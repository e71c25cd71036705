#include "citygo/io.hpp"

#include <json.hpp>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace citygo {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path.string() + ": cannot open");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path.string() + ": cannot write");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(path.string() + ": write failed");
}

std::uint64_t fnv1a(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------- PLY

namespace {

enum class PlyType { I8, U8, I16, U16, I32, U32, F32, F64 };

int type_size(PlyType t) {
  switch (t) {
    case PlyType::I8:
    case PlyType::U8: return 1;
    case PlyType::I16:
    case PlyType::U16: return 2;
    case PlyType::I32:
    case PlyType::U32:
    case PlyType::F32: return 4;
    case PlyType::F64: return 8;
  }
  return 0;
}

bool parse_type(const std::string& s, PlyType& t) {
  static const std::pair<const char*, PlyType> names[] = {
      {"char", PlyType::I8},    {"int8", PlyType::I8},     {"uchar", PlyType::U8},   {"uint8", PlyType::U8},
      {"short", PlyType::I16},  {"int16", PlyType::I16},   {"ushort", PlyType::U16}, {"uint16", PlyType::U16},
      {"int", PlyType::I32},    {"int32", PlyType::I32},   {"uint", PlyType::U32},   {"uint32", PlyType::U32},
      {"float", PlyType::F32},  {"float32", PlyType::F32}, {"double", PlyType::F64}, {"float64", PlyType::F64}};
  for (const auto& [n, v] : names)
    if (s == n) {
      t = v;
      return true;
    }
  return false;
}

double load_value(const std::uint8_t* p, PlyType t) {
  switch (t) {
    case PlyType::I8: return static_cast<std::int8_t>(*p);
    case PlyType::U8: return *p;
#define CITYGO_LOAD(T)  \
  {                     \
    T v;                \
    std::memcpy(&v, p, sizeof v); \
    return static_cast<double>(v); \
  }
    case PlyType::I16: CITYGO_LOAD(std::int16_t)
    case PlyType::U16: CITYGO_LOAD(std::uint16_t)
    case PlyType::I32: CITYGO_LOAD(std::int32_t)
    case PlyType::U32: CITYGO_LOAD(std::uint32_t)
    case PlyType::F32: CITYGO_LOAD(float)
    case PlyType::F64: CITYGO_LOAD(double)
#undef CITYGO_LOAD
  }
  return 0.0;
}

struct PlyProperty {
  std::string name;
  PlyType type;
};

// Vertex columns by property name.
struct PlyTable {
  std::size_t count = 0;
  std::vector<PlyProperty> props;
  std::vector<std::vector<double>> columns;

  const std::vector<double>* find(const std::string& name) const {
    for (std::size_t i = 0; i < props.size(); ++i)
      if (props[i].name == name) return &columns[i];
    return nullptr;
  }
  const std::vector<double>& need(const std::string& name, const std::string& file) const {
    const auto* c = find(name);
    if (!c) throw Error(file + ": missing vertex property '" + name + "'");
    return *c;
  }
};

PlyTable read_ply_table(const fs::path& path) {
  const std::string file = path.string();
  const std::vector<std::uint8_t> bytes = read_file(path);
  std::size_t pos = 0;
  int line_no = 0;
  auto next_line = [&]() {
    const std::size_t end = std::find(bytes.begin() + pos, bytes.end(), '\n') - bytes.begin();
    if (end >= bytes.size()) throw Error(file + ": header is not terminated by end_header");
    std::string line(bytes.begin() + pos, bytes.begin() + end);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = end + 1;
    ++line_no;
    return line;
  };
  auto fail = [&](const std::string& what) {
    throw Error(file + ": header line " + std::to_string(line_no) + ": " + what);
  };
  if (next_line() != "ply") fail("missing 'ply' magic");
  PlyTable t;
  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> props;
    bool has_list = false;
  };
  std::vector<Element> elements;
  bool format_ok = false;
  for (;;) {
    const std::string line = next_line();
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key.empty() || key == "comment" || key == "obj_info") continue;
    if (key == "end_header") break;
    if (key == "format") {
      std::string fmt, ver;
      ss >> fmt >> ver;
      if (fmt != "binary_little_endian") fail("unsupported format '" + fmt + "'");
      format_ok = true;
    } else if (key == "element") {
      Element e;
      long long n = -1;
      ss >> e.name >> n;
      if (!ss || n < 0) fail("bad element declaration");
      e.count = static_cast<std::size_t>(n);
      elements.push_back(e);
    } else if (key == "property") {
      if (elements.empty()) fail("property before any element");
      std::string type;
      ss >> type;
      if (type == "list") {
        elements.back().has_list = true;
        continue;
      }
      PlyProperty p;
      ss >> p.name;
      if (!parse_type(type, p.type) || p.name.empty()) fail("bad property declaration");
      elements.back().props.push_back(p);
    } else {
      fail("unknown keyword '" + key + "'");
    }
  }
  if (!format_ok) throw Error(file + ": missing format line");
  if (elements.empty() || elements.front().name != "vertex")
    throw Error(file + ": the first element must be 'vertex'");
  const Element& v = elements.front();
  if (v.has_list) throw Error(file + ": list properties on vertices are not supported");
  std::size_t stride = 0;
  for (const auto& p : v.props) stride += type_size(p.type);
  if (v.count > 0 && stride > 0 && (bytes.size() - pos) / stride < v.count)
    throw Error(file + ": vertex count " + std::to_string(v.count) + " exceeds the data (" +
                std::to_string((bytes.size() - pos) / std::max<std::size_t>(stride, 1)) + " records)");
  t.count = v.count;
  t.props = v.props;
  t.columns.assign(v.props.size(), std::vector<double>(v.count));
  const std::uint8_t* p = bytes.data() + pos;
  for (std::size_t i = 0; i < v.count; ++i)
    for (std::size_t c = 0; c < v.props.size(); ++c) {
      t.columns[c][i] = load_value(p, v.props[c].type);
      p += type_size(v.props[c].type);
    }
  return t;
}

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* b = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), b, b + sizeof(T));
}

void put_header(std::vector<std::uint8_t>& out, std::size_t n, const std::vector<std::string>& props) {
  std::string h = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(n) + "\n";
  for (const auto& p : props) h += "property " + p + "\n";
  h += "end_header\n";
  out.insert(out.end(), h.begin(), h.end());
}

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

PointCloud read_ply_points(const fs::path& path) {
  const std::string file = path.string();
  const PlyTable t = read_ply_table(path);
  const auto &x = t.need("x", file), &y = t.need("y", file), &z = t.need("z", file);
  PointCloud c;
  c.positions.resize(t.count);
  for (std::size_t i = 0; i < t.count; ++i) {
    c.positions[i] = Point3(x[i], y[i], z[i]);
    if (!c.positions[i].allFinite()) throw Error(file + ": point " + std::to_string(i) + " has a non-finite coordinate");
  }
  if (const auto* id = t.find("building_id")) {
    c.labels.resize(t.count);
    for (std::size_t i = 0; i < t.count; ++i) {
      const double v = (*id)[i];
      if (!(v >= 0 && v <= 4294967295.0) || v != std::floor(v))
        throw Error(file + ": point " + std::to_string(i) + " has an invalid building_id");
      c.labels[i] = static_cast<std::uint32_t>(v);
    }
  }
  const auto *r = t.find("red"), *g = t.find("green"), *b = t.find("blue");
  if (r && g && b) {
    c.colors.resize(t.count);
    for (std::size_t i = 0; i < t.count; ++i) c.colors[i] = Vec3((*r)[i], (*g)[i], (*b)[i]) / 255.0;
  }
  return c;
}

void write_ply_points(const fs::path& path, const PointCloud& c) {
  if (!c.colors.empty() && c.colors.size() != c.size()) throw Error(path.string() + ": color count mismatch");
  if (!c.labels.empty() && c.labels.size() != c.size()) throw Error(path.string() + ": label count mismatch");
  std::vector<std::string> props{"double x", "double y", "double z"};
  if (!c.labels.empty()) props.push_back("uint32 building_id");
  if (!c.colors.empty()) {
    props.push_back("uchar red");
    props.push_back("uchar green");
    props.push_back("uchar blue");
  }
  std::vector<std::uint8_t> out;
  put_header(out, c.size(), props);
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (int k = 0; k < 3; ++k) put(out, c.positions[i][k]);
    if (!c.labels.empty()) put(out, c.labels[i]);
    if (!c.colors.empty())
      for (int k = 0; k < 3; ++k) put(out, to_u8(c.colors[i][k]));
  }
  write_file(path, out);
}

namespace {
const char* kGaussianProps[] = {"x",     "y",     "z",     "scale_0", "scale_1", "scale_2", "rot_0",
                                "rot_1", "rot_2", "rot_3", "opacity", "red",     "green",   "blue"};
}

std::vector<Gaussian3D> read_ply_gaussians(const fs::path& path) {
  const std::string file = path.string();
  const PlyTable t = read_ply_table(path);
  std::vector<const std::vector<double>*> cols;
  for (const char* n : kGaussianProps) cols.push_back(&t.need(n, file));
  const auto* id = t.find("building_id");
  std::vector<Gaussian3D> out(t.count);
  for (std::size_t i = 0; i < t.count; ++i) {
    auto v = [&](int k) { return (*cols[k])[i]; };
    Gaussian3D& g = out[i];
    g.position = Vec3(v(0), v(1), v(2));
    g.scale = Vec3(v(3), v(4), v(5));
    g.rotation = Quat(v(6), v(7), v(8), v(9));
    g.opacity = v(10);
    g.color = Vec3(v(11), v(12), v(13));
    g.building_id = id ? static_cast<std::uint32_t>((*id)[i]) : 0;
    try {
      validate(g);
    } catch (const Error& e) {
      throw Error(file + ": Gaussian " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

void write_ply_gaussians(const fs::path& path, const std::vector<Gaussian3D>& gs) {
  std::vector<std::string> props;
  for (const char* n : kGaussianProps) props.push_back(std::string("float ") + n);
  props.push_back("uint32 building_id");
  std::vector<std::uint8_t> out;
  put_header(out, gs.size(), props);
  for (const Gaussian3D& g : gs) {
    const double v[14] = {g.position.x(), g.position.y(), g.position.z(), g.scale.x(),    g.scale.y(),
                          g.scale.z(),    g.rotation.w(), g.rotation.x(), g.rotation.y(), g.rotation.z(),
                          g.opacity,      g.color.x(),    g.color.y(),    g.color.z()};
    for (double x : v) put(out, static_cast<float>(x));
    put(out, g.building_id);
  }
  write_file(path, out);
}

// ---------------------------------------------------------------- PNG

Raster quantize_rgb8(const Raster& image) {
  Raster out = image;
  for (double& v : out.data) v = to_u8(v) / 255.0;
  return out;
}

Raster read_png(const fs::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  const std::vector<std::uint8_t> bytes = read_file(path);
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw Error(path.string() + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw Error(path.string() + ": " + msg);
  }
  Raster r(static_cast<int>(img.width), static_cast<int>(img.height), 3);
  for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] = buf[i] / 255.0;
  return r;
}

void write_png(const fs::path& path, const Raster& image) {
  if (image.channels != 3 || image.empty()) throw Error(path.string() + ": PNG export needs an RGB raster");
  std::vector<std::uint8_t> buf(image.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_u8(image.data[i]);
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buf.data(), 0, nullptr))
    throw Error(path.string() + ": " + img.message);
}

// ---------------------------------------------------------------- cameras

std::vector<CameraView> read_cameras(const fs::path& path, bool load_images) {
  const std::string file = path.string();
  json j;
  try {
    std::ifstream in(path);
    if (!in) throw Error(file + ": cannot open");
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(file + ": " + e.what());
  }
  if (!j.contains("views") || !j["views"].is_array()) throw Error(file + ": missing 'views' array");
  std::vector<CameraView> out;
  const fs::path dir = path.parent_path();
  for (std::size_t i = 0; i < j["views"].size(); ++i) {
    const json& v = j["views"][i];
    const std::string where = file + ": view " + std::to_string(i);
    try {
      CameraView c;
      const auto& e = v.at("extrinsic");
      if (!e.is_array() || e.size() != 12) throw Error(where + ": 'extrinsic' needs 12 numbers");
      for (int r = 0; r < 3; ++r) {
        for (int k = 0; k < 3; ++k) c.extrinsics.rotation(r, k) = e[r * 4 + k].get<double>();
        c.extrinsics.translation[r] = e[r * 4 + 3].get<double>();
      }
      c.intrinsics = {v.at("fx").get<double>(), v.at("fy").get<double>(), v.at("cx").get<double>(),
                      v.at("cy").get<double>()};
      c.width = v.at("width").get<int>();
      c.height = v.at("height").get<int>();
      if (v.contains("image")) c.image_path = v["image"].get<std::string>();
      validate(c);
      if (load_images && !c.image_path.empty()) {
        Raster img = read_png(dir / c.image_path);
        if (img.width != c.width || img.height != c.height) throw Error(where + ": image size differs from the camera");
        c.image = std::move(img);
      }
      out.push_back(std::move(c));
    } catch (const json::exception& e) {
      throw Error(where + ": " + e.what());
    } catch (const Error& e) {
      const std::string msg = e.what();
      throw Error(msg.rfind(file, 0) == 0 ? msg : where + ": " + msg);
    }
  }
  return out;
}

void write_cameras(const fs::path& path, const std::vector<CameraView>& views) {
  json j;
  j["views"] = json::array();
  for (const CameraView& c : views) {
    json v;
    std::vector<double> e;
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) e.push_back(c.extrinsics.rotation(r, k));
      e.push_back(c.extrinsics.translation[r]);
    }
    v["extrinsic"] = e;
    v["fx"] = c.intrinsics.fx;
    v["fy"] = c.intrinsics.fy;
    v["cx"] = c.intrinsics.cx;
    v["cy"] = c.intrinsics.cy;
    v["width"] = c.width;
    v["height"] = c.height;
    if (!c.image_path.empty()) {
      v["image"] = c.image_path;
      if (c.image) write_png(path.parent_path() / c.image_path, *c.image);
    }
    j["views"].push_back(v);
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(1) << '\n';
  if (!out) throw Error(path.string() + ": write failed");
}

// ---------------------------------------------------------------- footprints

std::map<std::uint32_t, geo2d::Polygon> read_footprints(const fs::path& path) {
  const std::string file = path.string();
  json j;
  try {
    std::ifstream in(path);
    if (!in) throw Error(file + ": cannot open");
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(file + ": " + e.what());
  }
  std::map<std::uint32_t, geo2d::Polygon> out;
  if (!j.contains("features") || !j["features"].is_array()) throw Error(file + ": missing 'features' array");
  for (std::size_t i = 0; i < j["features"].size(); ++i) {
    const std::string where = file + ": feature " + std::to_string(i);
    try {
      const json& f = j["features"][i];
      const json& idv = f.at("properties").at("id");
      if (!idv.is_number_integer() || idv.get<long long>() <= 0 || idv.get<long long>() > 0xffffffffLL)
        throw Error(where + ": 'id' must be a positive integer");
      const auto id = static_cast<std::uint32_t>(idv.get<long long>());
      const json& geom = f.at("geometry");
      if (geom.at("type").get<std::string>() != "Polygon") throw Error(where + ": only Polygon geometry is supported");
      geo2d::Polygon ring;
      for (const json& p : geom.at("coordinates").at(0)) ring.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
      if (ring.size() > 1 && ring.front() == ring.back()) ring.pop_back();
      if (ring.size() < 3) throw Error(where + ": ring needs at least 3 vertices");
      for (const Vec2& p : ring)
        if (!p.allFinite()) throw Error(where + ": non-finite coordinate");
      if (!out.emplace(id, ring).second) throw Error(where + ": duplicate id " + std::to_string(id));
    } catch (const json::exception& e) {
      throw Error(where + ": " + e.what());
    }
  }
  return out;
}

void write_footprints(const fs::path& path, const std::map<std::uint32_t, geo2d::Polygon>& footprints) {
  json j;
  j["type"] = "FeatureCollection";
  j["features"] = json::array();
  for (const auto& [id, ring] : footprints) {
    json coords = json::array();
    for (const Vec2& p : ring) coords.push_back({p.x(), p.y()});
    coords.push_back({ring.front().x(), ring.front().y()});
    j["features"].push_back({{"type", "Feature"},
                             {"properties", {{"id", id}}},
                             {"geometry", {{"type", "Polygon"}, {"coordinates", json::array({coords})}}}});
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(1) << '\n';
  if (!out) throw Error(path.string() + ": write failed");
}

// ---------------------------------------------------------------- scene file

std::size_t HybridScene::triangle_count() const {
  std::size_t n = 0;
  for (const auto& m : meshes) n += m.faces.size();
  return n;
}

void validate(const HybridScene& s) {
  if (s.mesh_building_ids.size() != s.meshes.size()) throw Error("scene: one building id per mesh required");
  for (std::uint32_t id : s.mesh_building_ids)
    if (id == 0) throw Error("scene: mesh with building id 0");
  for (std::size_t k = 0; k < s.residual.size(); ++k)
    if (s.residual[k].building_id == 0) throw Error("scene: residual Gaussian " + std::to_string(k) + " has no building id");
  for (const auto& m : s.meshes) validate(m);
}

namespace {

constexpr char kMagic[8] = {'C', 'I', 'T', 'Y', 'G', 'O', 'S', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_gaussians(std::vector<std::uint8_t>& out, const std::vector<Gaussian3D>& gs) {
  put(out, static_cast<std::uint32_t>(gs.size()));
  for (const Gaussian3D& g : gs) {
    const double v[14] = {g.position.x(), g.position.y(), g.position.z(), g.scale.x(),    g.scale.y(),
                          g.scale.z(),    g.rotation.w(), g.rotation.x(), g.rotation.y(), g.rotation.z(),
                          g.opacity,      g.color.x(),    g.color.y(),    g.color.z()};
    for (double x : v) put(out, static_cast<float>(x));
    put(out, g.building_id);
  }
}

struct Reader {
  const std::vector<std::uint8_t>& b;
  std::size_t pos = 0;

  template <class T>
  T get() {
    if (b.size() - pos < sizeof(T)) throw Error("scene: truncated at byte " + std::to_string(pos));
    T v;
    std::memcpy(&v, b.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::size_t count(std::size_t record) {
    const auto n = get<std::uint32_t>();
    if (record && (b.size() - pos) / record < n) throw Error("scene: count " + std::to_string(n) + " exceeds the data");
    return n;
  }
};

std::vector<Gaussian3D> get_gaussians(Reader& r) {
  std::vector<Gaussian3D> gs(r.count(14 * 4 + 4));
  for (Gaussian3D& g : gs) {
    float v[14];
    for (float& x : v) x = r.get<float>();
    g.position = Vec3(v[0], v[1], v[2]);
    g.scale = Vec3(v[3], v[4], v[5]);
    g.rotation = Quat(v[6], v[7], v[8], v[9]);
    g.opacity = v[10];
    g.color = Vec3(v[11], v[12], v[13]);
    g.building_id = r.get<std::uint32_t>();
  }
  return gs;
}

}  // namespace

std::vector<std::uint8_t> serialize_scene(const HybridScene& s) {
  validate(s);
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put(out, kVersion);
  put(out, s.guard);
  for (int k = 0; k < 3; ++k) put(out, s.background[k]);
  put(out, static_cast<std::uint32_t>(s.meshes.size()));
  for (std::size_t m = 0; m < s.meshes.size(); ++m) {
    const TexturedMesh& mesh = s.meshes[m];
    put(out, s.mesh_building_ids[m]);
    put(out, static_cast<std::uint32_t>(mesh.vertices.size()));
    for (const Vec3& v : mesh.vertices)
      for (int k = 0; k < 3; ++k) put(out, static_cast<float>(v[k]));
    put(out, static_cast<std::uint32_t>(mesh.faces.size()));
    for (const auto& f : mesh.faces)
      for (int k = 0; k < 3; ++k) put(out, static_cast<std::int32_t>(f[k]));
    put(out, static_cast<std::uint8_t>(mesh.uvs.empty() ? 0 : 1));
    for (const auto& f : mesh.uvs)
      for (const Vec2& uv : f) {
        put(out, static_cast<float>(uv.x()));
        put(out, static_cast<float>(uv.y()));
      }
    put(out, static_cast<std::uint32_t>(mesh.texture.width));
    put(out, static_cast<std::uint32_t>(mesh.texture.height));
    for (double v : mesh.texture.data) out.push_back(to_u8(v));
  }
  put_gaussians(out, s.residual);
  put_gaussians(out, s.surround);
  return out;
}

HybridScene deserialize_scene(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw Error("scene: bad magic");
  Reader r{bytes, 8};
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw Error("scene: unsupported version " + std::to_string(version));
  HybridScene s;
  s.guard = r.get<double>();
  for (int k = 0; k < 3; ++k) s.background[k] = r.get<double>();
  const std::size_t meshes = r.count(0);
  for (std::size_t m = 0; m < meshes; ++m) {
    TexturedMesh mesh;
    s.mesh_building_ids.push_back(r.get<std::uint32_t>());
    mesh.vertices.resize(r.count(12));
    for (Vec3& v : mesh.vertices)
      for (int k = 0; k < 3; ++k) v[k] = r.get<float>();
    mesh.faces.resize(r.count(12));
    for (auto& f : mesh.faces)
      for (int k = 0; k < 3; ++k) f[k] = r.get<std::int32_t>();
    if (r.get<std::uint8_t>()) {
      mesh.uvs.resize(mesh.faces.size());
      for (auto& f : mesh.uvs)
        for (Vec2& uv : f) {
          uv.x() = r.get<float>();
          uv.y() = r.get<float>();
        }
    }
    const auto w = r.get<std::uint32_t>(), h = r.get<std::uint32_t>();
    if (w > 65536 || h > 65536 || bytes.size() - r.pos < std::size_t(w) * h * 3) throw Error("scene: bad texture size");
    if (w && h) {
      mesh.texture = Raster(static_cast<int>(w), static_cast<int>(h), 3);
      for (double& v : mesh.texture.data) v = r.get<std::uint8_t>() / 255.0;
    }
    s.meshes.push_back(std::move(mesh));
  }
  s.residual = get_gaussians(r);
  s.surround = get_gaussians(r);
  if (r.pos != bytes.size()) throw Error("scene: trailing bytes");
  validate(s);
  return s;
}

void save_scene(const fs::path& path, const HybridScene& scene) { write_file(path, serialize_scene(scene)); }

HybridScene load_scene_file(const fs::path& path) {
  try {
    return deserialize_scene(read_file(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace citygo
