#include "nspl/scene_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/LU>

#include "json.hpp"

namespace nspl {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void Dataset::validate() const {
  if (cameras.size() != images.size()) throw std::invalid_argument("Dataset: camera and image counts differ");
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    if (images[i].width != cameras[i].width || images[i].height != cameras[i].height) {
      throw std::invalid_argument("Dataset: image " + std::to_string(i) + " does not match its camera size");
    }
  }
  for (const auto* split : {&train, &test}) {
    for (std::size_t i : *split) {
      if (i >= cameras.size()) throw std::invalid_argument("Dataset: split index out of range");
    }
  }
  const auto same_size = [&](const std::vector<std::size_t>& idx) {
    for (std::size_t i : idx) {
      if (!images[i].same_shape(images[idx.front()])) return false;
    }
    return true;
  };
  if ((!train.empty() && !same_size(train)) || (!test.empty() && !same_size(test))) {
    throw std::invalid_argument("Dataset: images within a split differ in size");
  }
}

// ---------------------------------------------------------------------------
// Bounding sphere

namespace {

bool inside(const Sphere& s, const Vec3& p) { return (p - s.center).norm() <= s.radius * (1.0 + 1e-12) + 1e-12; }

Sphere ball2(const Vec3& a, const Vec3& b) { return {0.5 * (a + b), 0.5 * (a - b).norm()}; }

std::optional<Sphere> circumcircle(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a;
  const Vec3 n = ab.cross(ac);
  const double n2 = n.squaredNorm();
  if (n2 <= 1e-24 * ab.squaredNorm() * ac.squaredNorm()) return std::nullopt;
  const Vec3 off = (ac.squaredNorm() * n.cross(ab) + ab.squaredNorm() * ac.cross(n)) / (2.0 * n2);
  return Sphere{a + off, off.norm()};
}

std::optional<Sphere> circumsphere(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  Mat3 m;
  m.row(0) = b - a;
  m.row(1) = c - a;
  m.row(2) = d - a;
  const double det = m.determinant();
  const double scale = m.row(0).norm() * m.row(1).norm() * m.row(2).norm();
  if (std::abs(det) <= 1e-12 * scale) return std::nullopt;
  const Vec3 rhs(0.5 * m.row(0).squaredNorm(), 0.5 * m.row(1).squaredNorm(), 0.5 * m.row(2).squaredNorm());
  const Vec3 off = m.partialPivLu().solve(rhs);
  return Sphere{a + off, off.norm()};
}

// Smallest ball containing a handful of points, by enumerating spheres
// through pairs and triples. Only used for degenerate support sets.
Sphere brute_ball(const std::vector<Vec3>& pts) {
  Sphere best{pts.front(), std::numeric_limits<double>::infinity()};
  const auto all_in = [&](const Sphere& s) {
    return std::all_of(pts.begin(), pts.end(), [&](const Vec3& p) { return inside(s, p); });
  };
  const auto offer = [&](const Sphere& s) {
    if (s.radius < best.radius && all_in(s)) best = s;
  };
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      offer(ball2(pts[i], pts[j]));
      for (std::size_t k = j + 1; k < pts.size(); ++k) {
        if (auto s = circumcircle(pts[i], pts[j], pts[k])) offer(*s);
      }
    }
  }
  if (!std::isfinite(best.radius)) best = Sphere{pts.front(), 0.0};
  return best;
}

Sphere ball3(const Vec3& a, const Vec3& b, const Vec3& c) {
  if (auto s = circumcircle(a, b, c)) return *s;
  return brute_ball({a, b, c});
}

Sphere ball4(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  if (auto s = circumsphere(a, b, c, d)) return *s;
  return brute_ball({a, b, c, d});
}

}  // namespace

Sphere min_enclosing_sphere(std::span<const Vec3> points) {
  if (points.empty()) return {};
  std::vector<Vec3> p(points.begin(), points.end());
  std::mt19937_64 rng(0x5eed);
  std::shuffle(p.begin(), p.end(), rng);

  Sphere s{p[0], 0.0};
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (inside(s, p[i])) continue;
    s = Sphere{p[i], 0.0};
    for (std::size_t j = 0; j < i; ++j) {
      if (inside(s, p[j])) continue;
      s = ball2(p[i], p[j]);
      for (std::size_t k = 0; k < j; ++k) {
        if (inside(s, p[k])) continue;
        s = ball3(p[i], p[j], p[k]);
        for (std::size_t l = 0; l < k; ++l) {
          if (inside(s, p[l])) continue;
          s = ball4(p[i], p[j], p[k], p[l]);
        }
      }
    }
  }
  return s;
}

double camera_extent(std::span<const Camera> cameras) {
  std::vector<Vec3> centers;
  centers.reserve(cameras.size());
  for (const Camera& c : cameras) centers.push_back(c.position());
  const double r = min_enclosing_sphere(centers).radius;
  return r < 1e-6 ? 1.0 : r;
}

// ---------------------------------------------------------------------------
// Datasets

namespace {

Image load_image(const fs::path& path, const Rgb& background) {
  if (!fs::exists(path)) throw std::runtime_error("missing image " + path.string());
  if (path.extension() == ".nsrf") return read_raw(path);
  return read_png(path, background);
}

void finish_dataset(Dataset& d, int downscale) {
  if (downscale < 1) throw std::invalid_argument("downscale factor must be >= 1");
  if (downscale > 1) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      d.images[i] = nspl::downscale(d.images[i], downscale);
      d.cameras[i] = d.cameras[i].downscaled(downscale);
    }
  }
  d.extent = camera_extent(d.cameras);
  d.validate();
}

}  // namespace

Dataset load_nerf_blender(const fs::path& dir, const LoadOptions& opts) {
  Dataset d;
  d.background = opts.background.value_or(Rgb::Ones());
  bool any = false;
  for (const char* split : {"train", "test"}) {
    const fs::path file = dir / (std::string("transforms_") + split + ".json");
    if (!fs::exists(file)) continue;
    any = true;
    std::ifstream in(file);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw std::runtime_error(file.string() + ": malformed JSON: " + e.what());
    }
    const auto field = [&](const nlohmann::json& obj, const char* name) -> const nlohmann::json& {
      if (!obj.is_object() || !obj.contains(name)) {
        throw std::runtime_error(file.string() + ": missing field '" + name + "'");
      }
      return obj.at(name);
    };
    double angle = 0.0;
    try {
      angle = field(j, "camera_angle_x").get<double>();
    } catch (const nlohmann::json::exception&) {
      throw std::runtime_error(file.string() + ": field 'camera_angle_x' is not a number");
    }
    const auto& frames = field(j, "frames");
    if (!frames.is_array() || frames.empty()) throw std::runtime_error(file.string() + ": 'frames' is empty");

    for (std::size_t f = 0; f < frames.size(); ++f) {
      const auto& fr = frames[f];
      const std::string where = file.string() + ": frames[" + std::to_string(f) + "]";
      std::string rel;
      Eigen::Matrix4d m;
      try {
        rel = field(fr, "file_path").get<std::string>();
        const auto& tm = field(fr, "transform_matrix");
        if (!tm.is_array() || tm.size() != 4) throw std::runtime_error("");
        for (int r = 0; r < 4; ++r) {
          if (!tm[r].is_array() || tm[r].size() != 4) throw std::runtime_error("");
          for (int c = 0; c < 4; ++c) m(r, c) = tm[r][c].get<double>();
        }
      } catch (const nlohmann::json::exception&) {
        throw std::runtime_error(where + ": malformed file_path or transform_matrix");
      } catch (const std::runtime_error& e) {
        if (std::string(e.what()).empty()) throw std::runtime_error(where + ".transform_matrix: expected 4x4 array");
        throw;
      }
      if (rel.rfind("./", 0) == 0) rel = rel.substr(2);
      fs::path img_path = dir / rel;
      if (!img_path.has_extension()) img_path += ".png";

      Image img = load_image(img_path, d.background);
      Camera cam;
      cam.name = rel;
      cam.width = img.width;
      cam.height = img.height;
      cam.fx = cam.fy = 0.5 * img.width / std::tan(0.5 * angle);
      cam.cx = 0.5 * img.width;
      cam.cy = 0.5 * img.height;
      // Files store OpenGL-style cameras (looking down -z, y up).
      cam.rotation = m.topLeftCorner<3, 3>() * Vec3(1.0, -1.0, -1.0).asDiagonal();
      cam.translation = m.topRightCorner<3, 1>();
      if (fr.contains("time")) cam.time = fr.at("time").get<double>();
      cam.validate();

      (std::string(split) == "train" ? d.train : d.test).push_back(d.cameras.size());
      d.cameras.push_back(std::move(cam));
      d.images.push_back(std::move(img));
    }
  }
  if (!any) throw std::runtime_error(dir.string() + ": no transforms_train.json or transforms_test.json");
  finish_dataset(d, opts.downscale);
  return d;
}

std::vector<Camera> read_camera_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open camera file " + path.string());
  std::vector<Camera> out;
  std::vector<std::string> bad;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::vector<std::string> tok;
    for (std::string t; ss >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    try {
      if (tok.size() != 19 && tok.size() != 20) throw std::invalid_argument("expected 19 or 20 fields");
      std::vector<double> v;
      for (std::size_t i = 1; i < tok.size(); ++i) {
        std::size_t used = 0;
        v.push_back(std::stod(tok[i], &used));
        if (used != tok[i].size()) throw std::invalid_argument("bad number '" + tok[i] + "'");
      }
      Camera c;
      c.name = tok[0];
      if (v[0] != std::floor(v[0]) || v[1] != std::floor(v[1])) throw std::invalid_argument("non-integer size");
      c.width = int(v[0]);
      c.height = int(v[1]);
      c.fx = v[2];
      c.fy = v[3];
      c.cx = v[4];
      c.cy = v[5];
      for (int r = 0; r < 3; ++r) {
        for (int k = 0; k < 3; ++k) c.rotation(r, k) = v[6 + 3 * r + k];
      }
      c.translation = Vec3(v[15], v[16], v[17]);
      if (v.size() == 19) c.time = v[18];
      c.validate();
      out.push_back(std::move(c));
    } catch (const std::exception& e) {
      bad.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!bad.empty()) {
    std::string msg = path.string() + ": unreadable camera entries";
    for (const auto& b : bad) msg += "\n  " + b;
    throw std::runtime_error(msg);
  }
  return out;
}

void write_camera_file(const fs::path& path, std::span<const Camera> cameras) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write camera file " + path.string());
  out << "# name w h fx fy cx cy r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz time\n";
  out << std::setprecision(17);
  for (const Camera& c : cameras) {
    if (c.name.empty() || c.name.find_first_of(" \t\n#") != std::string::npos) {
      throw std::invalid_argument("camera names must be non-empty without whitespace or '#'");
    }
    out << c.name << ' ' << c.width << ' ' << c.height << ' ' << c.fx << ' ' << c.fy << ' ' << c.cx << ' ' << c.cy;
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) out << ' ' << c.rotation(r, k);
    }
    out << ' ' << c.translation.x() << ' ' << c.translation.y() << ' ' << c.translation.z() << ' ' << c.time << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Dataset load_colmap_like(const fs::path& dir, const LoadOptions& opts) {
  Dataset d;
  d.background = opts.background.value_or(Rgb::Zero());
  d.cameras = read_camera_file(dir / "cameras.txt");
  if (d.cameras.empty()) throw std::runtime_error((dir / "cameras.txt").string() + ": no cameras");
  for (const Camera& c : d.cameras) {
    Image img = load_image(dir / "images" / c.name, d.background);
    if (img.width != c.width || img.height != c.height) {
      throw std::runtime_error("image " + c.name + " is " + std::to_string(img.width) + "x" +
                               std::to_string(img.height) + ", camera says " + std::to_string(c.width) + "x" +
                               std::to_string(c.height));
    }
    d.images.push_back(std::move(img));
  }

  const fs::path split = dir / "split.txt";
  if (fs::exists(split)) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < d.size(); ++i) index[d.cameras[i].name] = i;
    std::ifstream in(split);
    std::string line;
    int lineno = 0;
    std::vector<int> assigned(d.size(), 0);
    while (std::getline(in, line)) {
      ++lineno;
      std::istringstream ss(line);
      std::string name, which;
      if (!(ss >> name)) continue;
      ss >> which;
      const auto it = index.find(name);
      if (it == index.end() || (which != "train" && which != "test")) {
        throw std::runtime_error(split.string() + ": line " + std::to_string(lineno) + " is not 'name train|test'");
      }
      (which == "train" ? d.train : d.test).push_back(it->second);
      assigned[it->second] = 1;
    }
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!assigned[i]) d.train.push_back(i);
    }
    std::sort(d.train.begin(), d.train.end());
    std::sort(d.test.begin(), d.test.end());
  } else {
    for (std::size_t i = 0; i < d.size(); ++i) {
      (d.size() > 1 && i % 8 == 0 ? d.test : d.train).push_back(i);
    }
  }
  finish_dataset(d, opts.downscale);
  return d;
}

Dataset load_dataset(const fs::path& dir, const LoadOptions& opts) {
  if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir.string());
  if (fs::exists(dir / "transforms_train.json") || fs::exists(dir / "transforms_test.json")) {
    return load_nerf_blender(dir, opts);
  }
  if (fs::exists(dir / "cameras.txt")) return load_colmap_like(dir, opts);
  throw std::runtime_error(dir.string() + ": neither transforms_*.json nor cameras.txt found");
}

void write_dataset(const fs::path& dir, const Dataset& data) {
  data.validate();
  fs::create_directories(dir / "images");
  write_camera_file(dir / "cameras.txt", data.cameras);
  std::vector<int> is_test(data.size(), 0);
  for (std::size_t i : data.test) is_test[i] = 1;
  std::ofstream split(dir / "split.txt");
  for (std::size_t i = 0; i < data.size(); ++i) {
    split << data.cameras[i].name << ' ' << (is_test[i] ? "test" : "train") << '\n';
    write_png(dir / "images" / data.cameras[i].name, data.images[i]);
  }
  if (!split) throw std::runtime_error("failed writing " + (dir / "split.txt").string());
}

// ---------------------------------------------------------------------------
// Point clouds

namespace {

std::vector<Vec3> read_ply_ascii(std::istream& in, const fs::path& path) {
  const auto fail = [&](const std::string& m) { throw std::runtime_error(path.string() + ": " + m); };
  std::string line;
  std::getline(in, line);
  if (line.rfind("ply", 0) != 0) fail("missing 'ply' magic");

  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> props;
  };
  std::vector<Element> elements;
  bool ascii = false, ended = false;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string kw;
    ss >> kw;
    if (kw == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt != "ascii") fail("only ASCII PLY is supported (format " + fmt + ")");
      ascii = true;
    } else if (kw == "element") {
      Element e;
      if (!(ss >> e.name >> e.count)) fail("malformed element line: " + line);
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty()) fail("property before any element");
      std::vector<std::string> tok;
      for (std::string t; ss >> t;) tok.push_back(t);
      if (tok.empty()) fail("malformed property line: " + line);
      elements.back().props.push_back(tok.back());
    } else if (kw == "end_header") {
      ended = true;
      break;
    } else if (kw != "comment" && kw != "obj_info" && !kw.empty()) {
      fail("unexpected header line: " + line);
    }
  }
  if (!ascii) fail("missing format line");
  if (!ended) fail("missing end_header");

  std::vector<Vec3> pts;
  bool have_vertex = false;
  for (const Element& e : elements) {
    if (e.name != "vertex") {
      for (std::size_t i = 0; i < e.count; ++i) {
        if (!std::getline(in, line)) fail("truncated body in element " + e.name);
      }
      continue;
    }
    have_vertex = true;
    int ix = -1, iy = -1, iz = -1;
    for (std::size_t k = 0; k < e.props.size(); ++k) {
      if (e.props[k] == "x") ix = int(k);
      if (e.props[k] == "y") iy = int(k);
      if (e.props[k] == "z") iz = int(k);
    }
    if (ix < 0 || iy < 0 || iz < 0) fail("vertex element lacks x/y/z properties");
    pts.reserve(e.count);
    for (std::size_t i = 0; i < e.count; ++i) {
      if (!std::getline(in, line)) fail("truncated vertex list at vertex " + std::to_string(i));
      std::istringstream ss(line);
      std::vector<double> v;
      for (double x; ss >> x;) v.push_back(x);
      if (v.size() < e.props.size()) fail("vertex " + std::to_string(i) + " has too few values");
      pts.emplace_back(v[ix], v[iy], v[iz]);
    }
    break;
  }
  if (!have_vertex) fail("no vertex element");
  return pts;
}

std::vector<Vec3> read_xyz(std::istream& in, const fs::path& path) {
  std::vector<Vec3> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::vector<double> v;
    for (double x; ss >> x;) v.push_back(x);
    if (v.empty() && ss.eof()) continue;
    if (v.size() < 3 || (!ss.eof())) {
      throw std::runtime_error(path.string() + ": line " + std::to_string(lineno) + " is not 'x y z ...'");
    }
    pts.emplace_back(v[0], v[1], v[2]);
  }
  return pts;
}

}  // namespace

std::vector<Vec3> subsample_points(std::span<const Vec3> points, std::size_t count, std::uint64_t seed) {
  if (count >= points.size()) return {points.begin(), points.end()};
  std::vector<Vec3> out;
  out.reserve(count);
  std::mt19937_64 rng(seed);
  std::sample(points.begin(), points.end(), std::back_inserter(out), count, rng);
  return out;
}

std::vector<Vec3> load_points(const fs::path& path, std::size_t subsample, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open point file " + path.string());
  const int first = in.peek();
  std::vector<Vec3> pts;
  if (first == 'p') {
    pts = read_ply_ascii(in, path);
  } else {
    pts = read_xyz(in, path);
  }
  if (pts.empty()) throw std::runtime_error(path.string() + ": no points");
  return subsample > 0 ? subsample_points(pts, subsample, seed) : pts;
}

void write_points_ply(const fs::path& path, std::span<const Vec3> points) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  out << std::setprecision(17);
  for (const Vec3& p : points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f32(double v) {
    const float f = static_cast<float>(v);
    raw(&f, 4);
  }
  void bytes(const char* s, std::size_t n) { raw(s, n); }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint32_t u32(const char* what) { return get<std::uint32_t>(what); }
  std::uint64_t u64(const char* what) { return get<std::uint64_t>(what); }
  float f32(const char* what) { return get<float>(what); }
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }
  void need(std::size_t n, const std::string& what) const {
    if (remaining() < n) {
      throw std::runtime_error("checkpoint truncated at byte " + std::to_string(b_.size()) + " while reading " +
                               what + " (needs " + std::to_string(n) + " bytes from offset " +
                               std::to_string(pos_) + ")");
    }
  }

 private:
  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

[[noreturn]] void bad_field(std::size_t offset, const std::string& msg) {
  throw std::runtime_error("checkpoint: " + msg + " at byte " + std::to_string(offset));
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Scene& scene) {
  const PrimitiveConfig& c = scene.config;
  c.validate();
  const ParamLayout l = scene.layout();
  Writer w;
  w.bytes("NSPL", 4);
  w.u32(kCheckpointVersion);
  w.u32(std::uint32_t(kCheckpointHeaderBytes));
  w.u32(std::uint32_t(l.size));
  w.u32(std::uint32_t(c.hidden));
  w.f32(c.omega);
  w.u32(std::uint32_t(c.sh_degree));
  w.u32(c.temporal ? 1u : 0u);
  w.u32(std::uint32_t(c.poly_order));
  w.u32(std::uint32_t(c.fourier_order));
  for (int k = 0; k < 3; ++k) w.f32(scene.background[k]);
  w.f32(scene.extent);
  w.u64(scene.size());
  for (double v : scene.flatten()) w.f32(v);
  return w.take();
}

Scene decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), "NSPL", 4) != 0) bad_field(0, "bad magic (expected \"NSPL\")");
  r.u32("magic");
  std::size_t at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) bad_field(at, "unsupported version " + std::to_string(version));
  at = r.offset();
  const std::uint32_t header_bytes = r.u32("header size");
  if (header_bytes != kCheckpointHeaderBytes) bad_field(at, "unexpected header size " + std::to_string(header_bytes));
  const std::size_t record_at = r.offset();
  const std::uint32_t record = r.u32("record length");

  PrimitiveConfig c;
  c.hidden = int(r.u32("hidden width"));
  c.omega = r.f32("omega");
  c.sh_degree = int(r.u32("sh degree"));
  at = r.offset();
  const std::uint32_t flags = r.u32("flags");
  if (flags & ~1u) bad_field(at, "unknown flag bits");
  c.temporal = flags & 1u;
  c.poly_order = int(r.u32("poly order"));
  c.fourier_order = int(r.u32("fourier order"));
  Rgb bg;
  for (int k = 0; k < 3; ++k) bg[k] = r.f32("background");
  const double extent = r.f32("extent");
  const std::size_t count_at = r.offset();
  const std::uint64_t count = r.u64("count");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    bad_field(kCheckpointPreambleBytes, e.what());
  }
  const ParamLayout l(c);
  if (record != std::uint32_t(l.size)) {
    bad_field(record_at, "record length " + std::to_string(record) + " does not match the header config (" +
                             std::to_string(l.size) + ")");
  }
  if (count > r.remaining() / (4 * std::size_t(l.size))) {
    throw std::runtime_error("checkpoint truncated at byte " + std::to_string(bytes.size()) + ": count " +
                             std::to_string(count) + " (byte " + std::to_string(count_at) + ") needs " +
                             std::to_string(count * 4 * l.size) + " record bytes from byte " +
                             std::to_string(r.offset()));
  }
  const std::size_t n = std::size_t(count) * l.size;
  std::vector<double> flat(n);
  for (std::size_t i = 0; i < n; ++i) flat[i] = r.f32("record");
  if (r.remaining() != 0) bad_field(r.offset(), "trailing bytes after the last record");
  return Scene::from_flat(c, flat, bg, extent);
}

void save_checkpoint(const Scene& scene, const fs::path& path) {
  const auto bytes = encode_checkpoint(scene);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Scene load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void quantize_to_float(Scene& scene) {
  std::vector<double> flat = scene.flatten();
  for (double& v : flat) v = double(float(v));
  PrimitiveConfig cfg = scene.config;
  cfg.omega = double(float(cfg.omega));
  const Rgb bg = scene.background.unaryExpr([](double v) { return double(float(v)); });
  scene = Scene::from_flat(cfg, flat, bg, double(float(scene.extent)));
}

}  // namespace nspl
