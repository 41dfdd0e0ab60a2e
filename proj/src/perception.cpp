#include "ladderbot/perception.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include "ladderbot/errors.hpp"
#include "ladderbot/kernels.hpp"

namespace ladderbot::perception {

Mat3 CameraIntrinsics::matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Pixel CameraIntrinsics::project(const Vec3& p) const {
  return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || width <= 0 || height <= 0) {
    throw Error(ErrorCode::ConfigInvalid, "camera focal lengths and image size must be positive");
  }
  if (cx < 0.0 || cx > width || cy < 0.0 || cy > height) {
    throw Error(ErrorCode::ConfigInvalid, "principal point outside the image");
  }
}

std::array<Vec3, 4> marker_object_corners(double marker_size) {
  const double h = 0.5 * marker_size;
  return {Vec3(-h, -h, 0.0), Vec3(h, -h, 0.0), Vec3(h, h, 0.0), Vec3(-h, h, 0.0)};
}

Corners project_marker(const CameraIntrinsics& intrinsics, const Pose& cam_marker, double marker_size) {
  Corners out;
  const auto obj = marker_object_corners(marker_size);
  for (int k = 0; k < 4; ++k) {
    const Vec3 p = cam_marker.apply(obj[k]);
    if (p.z() <= 1e-6) {
      throw Error(ErrorCode::MarkerBehindCamera, "marker corner at z = " + std::to_string(p.z()));
    }
    out[k] = intrinsics.project(p);
  }
  return out;
}

namespace {

double cross2(const Pixel& a, const Pixel& b) { return a.x() * b.y() - a.y() * b.x(); }

double polygon_area(const Corners& q) {
  double twice = 0.0;
  for (int k = 0; k < 4; ++k) {
    twice += cross2(q[k], q[(k + 1) % 4]);
  }
  return 0.5 * twice;
}

// Signed distance of p to each edge, positive inside.
struct QuadEdges {
  std::array<Pixel, 4> origin;
  std::array<Pixel, 4> normal;

  explicit QuadEdges(const Corners& q) {
    const double orient = polygon_area(q) >= 0.0 ? 1.0 : -1.0;
    for (int k = 0; k < 4; ++k) {
      const Pixel e = q[(k + 1) % 4] - q[k];
      origin[k] = q[k];
      normal[k] = orient * Pixel(-e.y(), e.x()) / e.norm();
    }
  }

  double min_distance(const Pixel& p) const {
    double d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 4; ++k) {
      d = std::min(d, normal[k].dot(p - origin[k]));
    }
    return d;
  }
};

double pixel_coverage(const QuadEdges& edges, int i, int j) {
  const double d = edges.min_distance(Pixel(i + 0.5, j + 0.5));
  if (d >= 0.75) {
    return 1.0;
  }
  if (d <= -0.75) {
    return 0.0;
  }
  constexpr int kSub = 8;
  int inside = 0;
  for (int sy = 0; sy < kSub; ++sy) {
    for (int sx = 0; sx < kSub; ++sx) {
      const Pixel p(i + (sx + 0.5) / kSub, j + (sy + 0.5) / kSub);
      if (edges.min_distance(p) >= 0.0) {
        ++inside;
      }
    }
  }
  return static_cast<double>(inside) / (kSub * kSub);
}

}  // namespace

Frame render_frame(const CameraIntrinsics& intrinsics, const Pose& cam_marker, double marker_size,
                   double illumination, std::uint64_t noise_seed, int frame_index, const RenderModel& model) {
  intrinsics.validate();
  if (!(marker_size > 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "marker size must be positive");
  }
  if (!(illumination >= 0.0 && illumination <= 1.0)) {
    throw Error(ErrorCode::ConfigInvalid, "illumination must lie in [0, 1]");
  }
  const Corners quad = project_marker(intrinsics, cam_marker, marker_size);
  const QuadEdges edges(quad);

  Frame frame;
  frame.width = intrinsics.width;
  frame.height = intrinsics.height;
  frame.illumination = illumination;
  frame.frame_index = frame_index;
  frame.pixels.resize(static_cast<std::size_t>(frame.width) * frame.height);

  double umin = quad[0].x(), umax = quad[0].x(), vmin = quad[0].y(), vmax = quad[0].y();
  for (const auto& c : quad) {
    umin = std::min(umin, c.x());
    umax = std::max(umax, c.x());
    vmin = std::min(vmin, c.y());
    vmax = std::max(vmax, c.y());
  }
  const int i0 = static_cast<int>(std::floor(umin)) - 1;
  const int i1 = static_cast<int>(std::ceil(umax)) + 1;
  const int j0 = static_cast<int>(std::floor(vmin)) - 1;
  const int j1 = static_cast<int>(std::ceil(vmax)) + 1;

  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int j = 0; j < frame.height; ++j) {
    for (int i = 0; i < frame.width; ++i) {
      double coverage = 0.0;
      if (i >= i0 && i <= i1 && j >= j0 && j <= j1) {
        coverage = pixel_coverage(edges, i, j);
      }
      const double base = coverage * model.marker_intensity + (1.0 - coverage) * model.background_intensity;
      // One draw per pixel keeps the noise field independent of the marker geometry.
      const double n = model.noise_sigma * noise(rng);
      const double value = std::round(illumination * (base + n));
      frame.pixels[static_cast<std::size_t>(j) * frame.width + i] =
          static_cast<std::uint8_t>(std::clamp(value, 0.0, 255.0));
    }
  }
  return frame;
}

// ---------------------------------------------------------------------------
// Detection

namespace {

struct Line {
  Pixel point;
  Pixel direction;  // unit
  double rms = 0.0;
};

std::optional<Line> fit_line(const std::vector<Pixel>& pts) {
  if (pts.size() < 4) {
    return std::nullopt;
  }
  Pixel mean = Pixel::Zero();
  for (const auto& p : pts) {
    mean += p;
  }
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) {
    const Pixel d = p - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  Line line{mean, eig.eigenvectors().col(1), 0.0};
  line.rms = std::sqrt(std::max(0.0, eig.eigenvalues()(0)) / static_cast<double>(pts.size()));
  return line;
}

std::optional<Pixel> intersect(const Line& a, const Line& b) {
  const double det = cross2(a.direction, b.direction);
  if (std::abs(det) < 1e-9) {
    return std::nullopt;
  }
  const double t = cross2(b.point - a.point, b.direction) / det;
  return a.point + t * a.direction;
}

double segment_distance(const Pixel& p, const Pixel& a, const Pixel& b) {
  const Pixel ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (a + t * ab - p).norm();
}

std::vector<Pixel> convex_hull(std::vector<Pixel> pts) {
  std::sort(pts.begin(), pts.end(), [](const Pixel& a, const Pixel& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  if (pts.size() < 3) {
    return pts;
  }
  std::vector<Pixel> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross2(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0.0) {
      --k;
    }
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    const auto& p = pts[i];
    while (k >= t && cross2(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0.0) {
      --k;
    }
    hull[k++] = p;
  }
  hull.resize(k - 1);
  return hull;
}

bool strictly_convex(const Corners& q, double min_cross) {
  int sign = 0;
  for (int k = 0; k < 4; ++k) {
    const double c = cross2(q[(k + 1) % 4] - q[k], q[(k + 2) % 4] - q[(k + 1) % 4]);
    if (std::abs(c) < min_cross) {
      return false;
    }
    const int s = c > 0.0 ? 1 : -1;
    if (sign != 0 && s != sign) {
      return false;
    }
    sign = s;
  }
  return true;
}

Corners order_clockwise_from_top_left(Corners q) {
  Pixel centroid = Pixel::Zero();
  for (const auto& p : q) {
    centroid += p;
  }
  centroid /= 4.0;
  std::sort(q.begin(), q.end(), [&](const Pixel& a, const Pixel& b) {
    return std::atan2(a.y() - centroid.y(), a.x() - centroid.x()) <
           std::atan2(b.y() - centroid.y(), b.x() - centroid.x());
  });
  return q;
}

// Sub-pixel crossing between a dark member pixel and its outside neighbour.
// The crossing level is the local midpoint of the intensity profile, so the
// edge estimate does not shift with the binarization threshold.
Pixel edge_crossing(const Frame& f, int x, int y, int dx, int dy) {
  auto sample = [&](int sx, int sy, int fx, int fy) {
    if (sx < 0 || sy < 0 || sx >= f.width || sy >= f.height) {
      return static_cast<double>(f.at(fx, fy));
    }
    return static_cast<double>(f.at(sx, sy));
  };
  const double s0 = sample(x - dx, y - dy, x, y);
  const double s1 = f.at(x, y);
  const double s2 = f.at(x + dx, y + dy);
  const double s3 = sample(x + 2 * dx, y + 2 * dy, x + dx, y + dy);
  double t = 0.5;
  if (s3 - s0 > 4.0) {
    const double m = 0.5 * (s0 + s3);
    if (m >= s1 && m <= s2 && s2 > s1) {
      t = (m - s1) / (s2 - s1);
    } else if (m < s1 && s1 > s0) {
      t = -1.0 + (m - s0) / (s1 - s0);
    } else if (m > s2 && s3 > s2) {
      t = 1.0 + (m - s2) / (s3 - s2);
    }
    t = std::clamp(t, -1.0, 2.0);
  }
  return {x + 0.5 + t * dx, y + 0.5 + t * dy};
}

// Bilinear sample with pixel centres at (i + 0.5, j + 0.5), clamped to the frame.
double sample_bilinear(const Frame& f, double x, double y) {
  const double u = std::clamp(x - 0.5, 0.0, f.width - 1.0);
  const double v = std::clamp(y - 0.5, 0.0, f.height - 1.0);
  const int i = std::min(static_cast<int>(u), f.width - 2);
  const int j = std::min(static_cast<int>(v), f.height - 2);
  const double a = u - i;
  const double b = v - j;
  return (1 - a) * (1 - b) * f.at(i, j) + a * (1 - b) * f.at(i + 1, j) + (1 - a) * b * f.at(i, j + 1) +
         a * b * f.at(i + 1, j + 1);
}

double median(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

// Re-fits each side to the mid-level crossings of intensity profiles taken
// across it. The binary outline moves with the threshold; these crossings do not.
std::optional<Corners> refine_edges(const Frame& f, const Corners& quad) {
  constexpr double kHalf = 4.0;
  constexpr double kStep = 0.25;
  Pixel centroid = Pixel::Zero();
  for (const auto& p : quad) {
    centroid += p;
  }
  centroid /= 4.0;

  std::array<Line, 4> lines;
  for (int k = 0; k < 4; ++k) {
    const Pixel a = quad[k];
    const Pixel b = quad[(k + 1) % 4];
    const double len = (b - a).norm();
    if (len < 16.0) {
      return std::nullopt;
    }
    const Pixel dir = (b - a) / len;
    Pixel normal(-dir.y(), dir.x());
    if (normal.dot(0.5 * (a + b) - centroid) < 0.0) {
      normal = -normal;  // outward
    }
    std::vector<std::vector<double>> profiles;
    std::vector<Pixel> anchors;
    std::vector<double> dark, bright;
    for (double s = 0.15 * len; s <= 0.85 * len; s += 1.0) {
      const Pixel p0 = a + s * dir;
      std::vector<double> prof;
      for (double o = -kHalf; o <= kHalf + 1e-9; o += kStep) {
        const Pixel q = p0 + o * normal;
        prof.push_back(sample_bilinear(f, q.x(), q.y()));
      }
      dark.push_back(prof.front());
      bright.push_back(prof.back());
      profiles.push_back(std::move(prof));
      anchors.push_back(p0);
    }
    const double lo = median(dark);
    const double hi = median(bright);
    if (hi - lo < 8.0) {
      return std::nullopt;
    }
    const double mid = 0.5 * (lo + hi);
    std::vector<Pixel> pts;
    for (std::size_t n = 0; n < profiles.size(); ++n) {
      const auto& prof = profiles[n];
      // Crossing nearest the current edge estimate.
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i + 1 < prof.size(); ++i) {
        if ((prof[i] - mid) * (prof[i + 1] - mid) > 0.0 || prof[i] == prof[i + 1]) {
          continue;
        }
        const double o = -kHalf + kStep * (i + (mid - prof[i]) / (prof[i + 1] - prof[i]));
        if (std::abs(o) < std::abs(best)) {
          best = o;
        }
      }
      if (std::isfinite(best)) {
        pts.push_back(anchors[n] + best * normal);
      }
    }
    auto line = fit_line(pts);
    if (!line || pts.size() < profiles.size() / 2) {
      return std::nullopt;
    }
    lines[k] = *line;
  }
  Corners out;
  for (int k = 0; k < 4; ++k) {
    auto p = intersect(lines[(k + 3) % 4], lines[k]);
    if (!p || (*p - quad[k]).norm() > 3.0) {
      return std::nullopt;
    }
    out[k] = *p;
  }
  return out;
}

}  // namespace

std::optional<Corners> detect(const Frame& f, int c) {
  const int w = f.width;
  const int h = f.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (n == 0) {
    return std::nullopt;
  }
  constexpr std::array<int, 4> kDx{1, -1, 0, 0};
  constexpr std::array<int, 4> kDy{0, 0, 1, -1};

  // Largest 4-connected component of pixels darker than c.
  std::vector<std::uint8_t> visited(n, 0);
  std::vector<int> best;
  std::vector<int> current;
  std::vector<int> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (visited[start] || f.pixels[start] >= c) {
      continue;
    }
    current.clear();
    stack.assign(1, static_cast<int>(start));
    visited[start] = 1;
    while (!stack.empty()) {
      const int idx = stack.back();
      stack.pop_back();
      current.push_back(idx);
      const int x = idx % w;
      const int y = idx / w;
      for (int k = 0; k < 4; ++k) {
        const int nx = x + kDx[k];
        const int ny = y + kDy[k];
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) {
          continue;
        }
        const int nidx = ny * w + nx;
        if (!visited[nidx] && f.pixels[nidx] < c) {
          visited[nidx] = 1;
          stack.push_back(nidx);
        }
      }
    }
    if (current.size() > best.size()) {
      best.swap(current);
    }
  }
  const double frame_area = static_cast<double>(n);
  // Loose prefilter; the exact area bounds are applied to the fitted quad.
  if (best.size() < 0.0005 * frame_area || best.size() > 0.7 * frame_area) {
    return std::nullopt;
  }

  std::vector<std::uint8_t> member(n, 0);
  for (int idx : best) {
    const int x = idx % w;
    const int y = idx / w;
    if (x == 0 || y == 0 || x == w - 1 || y == h - 1) {
      return std::nullopt;  // marker must be fully inside the frame
    }
    member[idx] = 1;
  }

  // Pixels connected to the border without crossing the component.
  std::vector<std::uint8_t> outside(n, 0);
  stack.clear();
  auto seed_outside = [&](int x, int y) {
    const int idx = y * w + x;
    if (!member[idx] && !outside[idx]) {
      outside[idx] = 1;
      stack.push_back(idx);
    }
  };
  for (int x = 0; x < w; ++x) {
    seed_outside(x, 0);
    seed_outside(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    seed_outside(0, y);
    seed_outside(w - 1, y);
  }
  std::size_t outside_count = stack.size();
  while (!stack.empty()) {
    const int idx = stack.back();
    stack.pop_back();
    const int x = idx % w;
    const int y = idx / w;
    for (int k = 0; k < 4; ++k) {
      const int nx = x + kDx[k];
      const int ny = y + kDy[k];
      if (nx < 0 || ny < 0 || nx >= w || ny >= h) {
        continue;
      }
      const int nidx = ny * w + nx;
      if (!member[nidx] && !outside[nidx]) {
        outside[nidx] = 1;
        ++outside_count;
        stack.push_back(nidx);
      }
    }
  }
  const double filled_area = frame_area - static_cast<double>(outside_count);

  std::vector<Pixel> cracks;
  for (int idx : best) {
    const int x = idx % w;
    const int y = idx / w;
    for (int k = 0; k < 4; ++k) {
      const int nidx = (y + kDy[k]) * w + (x + kDx[k]);
      if (outside[nidx]) {
        cracks.push_back(edge_crossing(f, x, y, kDx[k], kDy[k]));
      }
    }
  }
  if (cracks.size() < 16) {
    return std::nullopt;
  }

  // Rough quad: farthest hull pair as one diagonal, extreme points on either side as the other.
  const auto hull = convex_hull(cracks);
  if (hull.size() < 4) {
    return std::nullopt;
  }
  std::size_t ia = 0, ic = 0;
  double far = -1.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    for (std::size_t j = i + 1; j < hull.size(); ++j) {
      const double d = (hull[i] - hull[j]).squaredNorm();
      if (d > far) {
        far = d;
        ia = i;
        ic = j;
      }
    }
  }
  const Pixel a = hull[ia];
  const Pixel cpt = hull[ic];
  const Pixel diag = (cpt - a).normalized();
  double dmax = 0.0, dmin = 0.0;
  Pixel b = a, d = a;
  for (const auto& p : hull) {
    const double s = cross2(diag, p - a);
    if (s > dmax) {
      dmax = s;
      b = p;
    }
    if (s < dmin) {
      dmin = s;
      d = p;
    }
  }
  if (dmax < 2.0 || -dmin < 2.0) {
    return std::nullopt;
  }
  const Corners rough{a, b, cpt, d};

  std::array<std::vector<Pixel>, 4> sides;
  std::array<double, 4> trim{};
  for (int k = 0; k < 4; ++k) {
    trim[k] = std::max(2.0, 0.12 * (rough[(k + 1) % 4] - rough[k]).norm());
  }
  for (const auto& p : cracks) {
    int side = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 4; ++k) {
      const double dist = segment_distance(p, rough[k], rough[(k + 1) % 4]);
      if (dist < best_dist) {
        best_dist = dist;
        side = k;
      }
    }
    if ((p - rough[side]).norm() < trim[side] || (p - rough[(side + 1) % 4]).norm() < trim[side]) {
      continue;
    }
    sides[side].push_back(p);
  }

  std::array<Line, 4> lines;
  for (int k = 0; k < 4; ++k) {
    auto line = fit_line(sides[k]);
    if (!line || line->rms > 1.0) {
      return std::nullopt;
    }
    lines[k] = *line;
  }
  Corners refined;
  for (int k = 0; k < 4; ++k) {
    auto p = intersect(lines[(k + 3) % 4], lines[k]);
    if (!p) {
      return std::nullopt;
    }
    const double tolerance = std::max(3.0, 0.1 * (rough[(k + 1) % 4] - rough[k]).norm());
    if ((*p - rough[k]).norm() > tolerance) {
      return std::nullopt;
    }
    refined[k] = *p;
  }
  for (int pass = 0; pass < 2; ++pass) {
    auto better = refine_edges(f, refined);
    if (!better) {
      return std::nullopt;
    }
    refined = *better;
  }
  if (!strictly_convex(refined, 1e-6)) {
    return std::nullopt;
  }
  const double quad_area = std::abs(polygon_area(refined));
  if (quad_area < 0.001 * frame_area || quad_area > 0.6 * frame_area) {
    return std::nullopt;
  }
  if (std::abs(filled_area - quad_area) > 0.15 * quad_area) {
    return std::nullopt;
  }
  return order_clockwise_from_top_left(refined);
}

// ---------------------------------------------------------------------------
// Pose estimation

namespace {

using Residual = Eigen::Matrix<double, 8, 1>;

Residual reprojection_residual(const CameraIntrinsics& intr, const Pose& pose, const std::array<Vec3, 4>& obj,
                               const Corners& corners) {
  Residual r;
  for (int k = 0; k < 4; ++k) {
    const Vec3 p = pose.apply(obj[k]);
    const Pixel uv = intr.project(p);
    r.segment<2>(2 * k) = uv - corners[k];
  }
  return r;
}

Pose perturb(const Pose& pose, const Eigen::Matrix<double, 6, 1>& delta) {
  return {rotation_exp(delta.head<3>()) * pose.rotation, pose.translation + delta.tail<3>()};
}

Pose initial_from_homography(const CameraIntrinsics& intr, const Corners& corners, double marker_size) {
  // Object corners scaled to the unit square [-1, 1]^2 for conditioning.
  const double scale = 0.5 * marker_size;
  const auto obj = marker_object_corners(2.0);
  Eigen::Matrix<double, 8, 9> a;
  for (int k = 0; k < 4; ++k) {
    const double x = (corners[k].x() - intr.cx) / intr.fx;
    const double y = (corners[k].y() - intr.cy) / intr.fy;
    const double X = obj[k].x();
    const double Y = obj[k].y();
    a.row(2 * k) << X, Y, 1.0, 0.0, 0.0, 0.0, -x * X, -x * Y, -x;
    a.row(2 * k + 1) << 0.0, 0.0, 0.0, X, Y, 1.0, -y * X, -y * Y, -y;
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, 8, 9>> svd(a, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Mat3 hm;
  hm << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  double lambda = 2.0 / (hm.col(0).norm() + hm.col(1).norm());
  if (lambda * hm(2, 2) < 0.0) {
    lambda = -lambda;  // marker must be in front of the camera
  }
  const Vec3 r1 = lambda * hm.col(0);
  const Vec3 r2 = lambda * hm.col(1);
  Mat3 r;
  r.col(0) = r1;
  r.col(1) = r2;
  r.col(2) = r1.cross(r2);
  return {project_to_rotation(r), lambda * hm.col(2) * scale};
}

}  // namespace

double max_reprojection_error(const CameraIntrinsics& intrinsics, const Pose& cam_marker, double marker_size,
                              const Corners& corners) {
  const auto r = reprojection_residual(intrinsics, cam_marker, marker_object_corners(marker_size), corners);
  double worst = 0.0;
  for (int k = 0; k < 4; ++k) {
    worst = std::max(worst, r.segment<2>(2 * k).norm());
  }
  return worst;
}

Pose estimate_marker_pose(const CameraIntrinsics& intrinsics, const Corners& corners, double marker_size) {
  if (!(marker_size > 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "marker size must be positive");
  }
  if (!strictly_convex(corners, 1.0)) {
    throw Error(ErrorCode::DegenerateCorners, "corners are collinear or not a convex quad");
  }
  for (int k = 0; k < 4; ++k) {
    const double twice = cross2(corners[(k + 1) % 4] - corners[k], corners[(k + 2) % 4] - corners[k]);
    if (std::abs(twice) < 2.0) {
      throw Error(ErrorCode::DegenerateCorners, "corner triangle area below one pixel");
    }
  }

  const auto obj = marker_object_corners(marker_size);
  Pose pose = initial_from_homography(intrinsics, corners, marker_size);
  double mu = 1e-3;
  Residual r = reprojection_residual(intrinsics, pose, obj, corners);
  double cost = r.squaredNorm();
  for (int iter = 0; iter < 100 && cost > 1e-20; ++iter) {
    Eigen::Matrix<double, 8, 6> j;
    for (int p = 0; p < 6; ++p) {
      Eigen::Matrix<double, 6, 1> step = Eigen::Matrix<double, 6, 1>::Zero();
      const double eps = p < 3 ? 1e-7 : 1e-7 * std::max(1.0, pose.translation.norm());
      step(p) = eps;
      j.col(p) = (reprojection_residual(intrinsics, perturb(pose, step), obj, corners) -
                  reprojection_residual(intrinsics, perturb(pose, -step), obj, corners)) /
                 (2.0 * eps);
    }
    const Eigen::Matrix<double, 6, 6> jtj = j.transpose() * j;
    const Eigen::Matrix<double, 6, 1> g = j.transpose() * r;
    bool improved = false;
    for (int attempt = 0; attempt < 10 && !improved; ++attempt) {
      Eigen::Matrix<double, 6, 6> lhs = jtj;
      lhs.diagonal() += mu * jtj.diagonal().cwiseMax(1e-12);
      const Eigen::Matrix<double, 6, 1> delta = lhs.ldlt().solve(-g);
      const Pose candidate = perturb(pose, delta);
      const Residual rc = reprojection_residual(intrinsics, candidate, obj, corners);
      if (rc.squaredNorm() < cost) {
        pose = candidate;
        r = rc;
        const double gain = cost - rc.squaredNorm();
        cost = rc.squaredNorm();
        mu = std::max(mu * 0.3, 1e-9);
        improved = true;
        if (gain < 1e-18) {
          iter = 1000;
        }
      } else {
        mu *= 10.0;
      }
    }
    if (!improved) {
      break;
    }
  }
  pose.rotation = project_to_rotation(pose.rotation);
  return pose;
}

// ---------------------------------------------------------------------------
// Threshold search

ThresholdState broad_tune(const FrameSource& frames, std::uint64_t rng_seed, int max_trials) {
  if (max_trials < 1) {
    throw Error(ErrorCode::ConfigInvalid, "broad tuning needs max_trials >= 1");
  }
  std::mt19937_64 rng(rng_seed);
  std::uniform_int_distribution<int> pick(0, 255);
  ThresholdState state;
  state.stage = TuneStage::Broad;
  for (int trial = 0; trial < max_trials; ++trial) {
    const Frame frame = frames(trial);
    const int c = pick(rng);
    const bool ok = detection_indicator(frame, c);
    state.trial_log.push_back({c, frame.frame_index, ok});
    if (ok) {
      state.stage = TuneStage::Fine;
      state.current_c = c;
      return state;
    }
  }
  throw Error(ErrorCode::NoDetection, "no threshold succeeded within " + std::to_string(max_trials) + " trials");
}

std::vector<int> fine_candidates(int current_c, std::span<const int> offsets) {
  std::vector<int> out;
  for (int off : offsets) {
    out.push_back(std::clamp(current_c + off, 0, 255));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<int> fine_candidates(int current_c) {
  static constexpr std::array<int, 9> kOffsets{-20, -15, -10, -5, 0, 5, 10, 15, 20};
  return fine_candidates(current_c, kOffsets);
}

int select_threshold(std::span<const int> candidates, std::span<const int> counts, int current_c) {
  int best = candidates.front();
  int best_count = counts.front();
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    const int c = candidates[k];
    const int n = counts[k];
    const int dist = std::abs(c - current_c);
    const int best_dist = std::abs(best - current_c);
    if (n > best_count || (n == best_count && (dist < best_dist || (dist == best_dist && c < best)))) {
      best = c;
      best_count = n;
    }
  }
  return best;
}

ThresholdState fine_tune(ThresholdState state, const FrameSource& frames, std::span<const int> candidates,
                         int window) {
  if (state.stage != TuneStage::Fine) {
    throw Error(ErrorCode::IllegalTransition, "fine tuning requires a state that finished broad tuning");
  }
  if (candidates.empty() || window < 1) {
    throw Error(ErrorCode::ConfigInvalid, "fine tuning needs candidates and window >= 1");
  }
  std::vector<Frame> batch;
  batch.reserve(static_cast<std::size_t>(window));
  for (int i = 0; i < window; ++i) {
    batch.push_back(frames(i));
  }
  const auto success = kernels::parallel::detection_matrix(batch, candidates);
  std::vector<int> counts(candidates.size(), 0);
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    for (int i = 0; i < window; ++i) {
      const bool ok = success[k * batch.size() + i] != 0;
      counts[k] += ok ? 1 : 0;
      state.trial_log.push_back({candidates[k], batch[i].frame_index, ok});
    }
  }
  const int chosen = select_threshold(candidates, counts, state.current_c);
  state.window = window;
  state.optimal_c = chosen;
  state.current_c = chosen;
  return state;
}

// ---------------------------------------------------------------------------
// Export

void write_pgm(const std::filesystem::path& path, const Frame& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::ConfigInvalid, "cannot write " + path.string());
  }
  out << "P5\n" << frame.width << ' ' << frame.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(frame.pixels.data()), static_cast<std::streamsize>(frame.pixels.size()));
}

Frame read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  int maxval = 0;
  Frame frame;
  in >> magic >> frame.width >> frame.height >> maxval;
  if (!in || magic != "P5" || maxval != 255 || frame.width <= 0 || frame.height <= 0) {
    throw Error(ErrorCode::ConfigInvalid, "not an 8-bit binary PGM: " + path.string());
  }
  in.get();
  frame.pixels.resize(static_cast<std::size_t>(frame.width) * frame.height);
  in.read(reinterpret_cast<char*>(frame.pixels.data()), static_cast<std::streamsize>(frame.pixels.size()));
  if (!in) {
    throw Error(ErrorCode::ConfigInvalid, "truncated PGM: " + path.string());
  }
  return frame;
}

void write_trial_log_csv(std::ostream& out, const ThresholdState& state) {
  out << "trial,c,frame_index,success\n";
  for (std::size_t i = 0; i < state.trial_log.size(); ++i) {
    const auto& t = state.trial_log[i];
    out << i << ',' << t.c << ',' << t.frame_index << ',' << (t.success ? 1 : 0) << '\n';
  }
}

}  // namespace ladderbot::perception
