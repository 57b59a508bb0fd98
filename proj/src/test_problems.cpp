#include "unmatched/test_problems.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include <Eigen/QR>

#include "unmatched/dense_oracle.hpp"
#include "unmatched/errors.hpp"

namespace unmatched {

namespace {

// Separate streams for the different random objects drawn from one seed.
enum class Stream : std::uint64_t { left = 1, right = 2, transpose = 3, noise = 4 };

Matrix gaussian_matrix(Index rows, Index cols, std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal;
  Matrix g(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) g(i, j) = normal(rng);
  return g;
}

// k leading DCT-II vectors of length n, slightly perturbed and orthonormalized.
Matrix oscillating_basis(Index n, Index k, std::uint64_t seed, Stream stream) {
  Matrix c(n, k);
  for (Index j = 0; j < k; ++j) {
    for (Index i = 0; i < n; ++i) {
      c(i, j) = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.5) *
                         static_cast<double>(j) / static_cast<double>(n));
    }
    c.col(j).normalize();
  }
  c += (1e-3 / std::sqrt(static_cast<double>(n))) * gaussian_matrix(n, k, seed, stream);

  Eigen::HouseholderQR<Matrix> qr(c);
  Matrix q = qr.householderQ() * Matrix::Identity(n, k);
  const Matrix r = qr.matrixQR().topLeftCorner(k, k);
  for (Index j = 0; j < k; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

struct Frame {
  double cos_t;
  double sin_t;
};

Frame angle_frame(const CtGeometry& g, Index a) {
  const double theta = std::numbers::pi * static_cast<double>(a) / static_cast<double>(g.num_angles);
  return {std::cos(theta), std::sin(theta)};
}

double detector_spacing(const CtGeometry& g) {
  return g.detector_length * static_cast<double>(g.image_side) /
         static_cast<double>(g.num_detector_pixels);
}

double detector_offset(const CtGeometry& g, Index d) {
  return (static_cast<double>(d) + 0.5 - 0.5 * static_cast<double>(g.num_detector_pixels)) *
         detector_spacing(g);
}

// Interval of the dominant coordinate over which the transverse coordinate
// p0 + slope * u stays inside [-h, h]; also clipped to [-h, h].
bool inside_interval(double p0, double slope, double h, double& lo, double& hi) {
  lo = -h;
  hi = h;
  if (slope == 0.0) return std::abs(p0) <= h;
  double u1 = (-h - p0) / slope;
  double u2 = (h - p0) / slope;
  if (u1 > u2) std::swap(u1, u2);
  lo = std::max(lo, u1);
  hi = std::min(hi, u2);
  return hi > lo;
}

// Calls emit(pixel, weight) for every nonzero of one Joseph ray.
template <typename Emit>
void joseph_ray(const CtGeometry& g, Index ray, Emit&& emit) {
  const Index big_n = g.image_side;
  const double h = 0.5 * static_cast<double>(big_n);
  const double center = 0.5 * static_cast<double>(big_n - 1);
  const Index a = ray / g.num_detector_pixels;
  const Index d = ray % g.num_detector_pixels;
  const Frame f = angle_frame(g, a);
  const double s = detector_offset(g, d);

  // Points on the ray: s * (-sin, cos) + t * (cos, sin).
  const bool along_x = std::abs(f.cos_t) >= std::abs(f.sin_t);
  // Transverse coordinate as p0 + slope * u, u the dominant coordinate.
  const double p0 = along_x ? s / f.cos_t : -s / f.sin_t;
  const double slope = along_x ? f.sin_t / f.cos_t : f.cos_t / f.sin_t;
  const double stretch = 1.0 / (along_x ? std::abs(f.cos_t) : std::abs(f.sin_t));

  double lo = 0.0;
  double hi = 0.0;
  if (!inside_interval(p0, slope, h, lo, hi)) return;

  for (Index k = 0; k < big_n; ++k) {
    // Dominant coordinate of the k-th pixel line: x for columns, y for rows.
    const double u = along_x ? static_cast<double>(k) - center : center - static_cast<double>(k);
    const double overlap = std::min(hi, u + 0.5) - std::max(lo, u - 0.5);
    if (overlap <= 0.0) continue;
    const double weight = overlap * stretch;
    const double p = p0 + slope * u;
    // Fractional index of the transverse pixel: rows count down in y,
    // columns count up in x.
    double frac = along_x ? center - p : p + center;
    frac = std::clamp(frac, 0.0, static_cast<double>(big_n - 1));
    const Index lo_idx = std::min(static_cast<Index>(std::floor(frac)), big_n - 1);
    const double w_hi = frac - static_cast<double>(lo_idx);
    auto pixel = [&](Index transverse) {
      return along_x ? transverse * big_n + k : k * big_n + transverse;
    };
    if (w_hi < 1.0) emit(pixel(lo_idx), weight * (1.0 - w_hi));
    if (w_hi > 0.0 && lo_idx + 1 < big_n) emit(pixel(lo_idx + 1), weight * w_hi);
  }
}

// Calls emit(ray, weight) for every detector contribution to one pixel.
template <typename Emit>
void pixel_driven_back(const CtGeometry& g, Index pixel, Emit&& emit) {
  const Index big_n = g.image_side;
  const double center = 0.5 * static_cast<double>(big_n - 1);
  const Index r = pixel / big_n;
  const Index c = pixel % big_n;
  const double x = static_cast<double>(c) - center;
  const double y = center - static_cast<double>(r);
  const double ds = detector_spacing(g);
  const double half = 0.5 * static_cast<double>(g.num_detector_pixels);
  const Index nd = g.num_detector_pixels;
  for (Index a = 0; a < g.num_angles; ++a) {
    const Frame f = angle_frame(g, a);
    const double s = -x * f.sin_t + y * f.cos_t;
    const double frac = s / ds + half - 0.5;
    const double fl = std::floor(frac);
    const Index d0 = static_cast<Index>(fl);
    const double w1 = frac - fl;
    if (d0 >= 0 && d0 < nd && w1 < 1.0) emit(a * nd + d0, (1.0 - w1) / ds);
    if (d0 + 1 >= 0 && d0 + 1 < nd && w1 > 0.0) emit(a * nd + d0 + 1, w1 / ds);
  }
}

}  // namespace

std::vector<double> logspace(double from, double to, std::size_t count) {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    out[i] = std::pow(10.0, from + t * (to - from));
  }
  return out;
}

Matrix make_ill_posed_matrix(const IllPosedMatrixSpec& spec) {
  if (spec.m < 1 || spec.n < 1) throw DomainError("make_ill_posed_matrix: empty shape");
  const Index k = std::min(spec.m, spec.n);
  if (static_cast<Index>(spec.singular_values.size()) != k) {
    throw ShapeError("make_ill_posed_matrix: need " + std::to_string(k) +
                     " singular values, got " + std::to_string(spec.singular_values.size()));
  }
  for (std::size_t i = 0; i < spec.singular_values.size(); ++i) {
    const double s = spec.singular_values[i];
    if (!(s > 0.0) || (i > 0 && s > spec.singular_values[i - 1])) {
      throw DomainError("make_ill_posed_matrix: singular values must be positive and nonincreasing");
    }
  }
  const Matrix u = oscillating_basis(spec.m, k, spec.seed, Stream::left);
  const Matrix v = oscillating_basis(spec.n, k, spec.seed, Stream::right);
  const Vector s = Eigen::Map<const Vector>(spec.singular_values.data(), k);
  return u * s.asDiagonal() * v.transpose();
}

Matrix make_unmatched_transpose(const Matrix& a, double relative_norm, std::uint64_t seed) {
  if (!(relative_norm >= 0.0)) throw DomainError("make_unmatched_transpose: relative_norm < 0");
  Matrix b = a.transpose();
  if (relative_norm == 0.0) return b;
  Matrix e = gaussian_matrix(a.cols(), a.rows(), seed, Stream::transpose);
  e *= relative_norm * spectral_norm(a) / spectral_norm(e);
  b += e;
  return b;
}

Vector make_two_hump_solution(Index n) {
  if (n < 2) throw DomainError("make_two_hump_solution: n must be at least 2");
  Vector x(n);
  const double h = std::numbers::pi / static_cast<double>(n);
  for (Index i = 0; i < n; ++i) {
    const double t = -std::numbers::pi / 2.0 + (static_cast<double>(i) + 0.5) * h;
    x[i] = 2.0 * std::exp(-6.0 * (t - 0.8) * (t - 0.8)) + std::exp(-2.0 * (t + 0.5) * (t + 0.5));
  }
  return x;
}

Index count_sign_changes(const Vector& v) {
  Index changes = 0;
  int last = 0;
  for (Index i = 0; i < v.size(); ++i) {
    const int sign = (v[i] > 0.0) - (v[i] < 0.0);
    if (sign == 0) continue;
    if (last != 0 && sign != last) ++changes;
    last = sign;
  }
  return changes;
}

void validate(const CtGeometry& geom) {
  if (geom.image_side < 1 || geom.num_angles < 1 || geom.num_detector_pixels < 1) {
    throw DomainError("CT geometry needs a positive image side, angle count and detector count");
  }
  if (!(geom.detector_length > 0.0)) throw DomainError("CT detector length must be positive");
}

SparseMatrix ct_forward_matrix(const CtGeometry& geom) {
  validate(geom);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(geom.data_size() * 2 * geom.image_side));
  for (Index ray = 0; ray < geom.data_size(); ++ray) {
    joseph_ray(geom, ray, [&](Index pix, double w) { trips.emplace_back(ray, pix, w); });
  }
  SparseMatrix a(geom.data_size(), geom.image_size());
  a.setFromTriplets(trips.begin(), trips.end());
  a.makeCompressed();
  return a;
}

SparseMatrix ct_back_matrix(const CtGeometry& geom) {
  validate(geom);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(geom.image_size() * 2 * geom.num_angles));
  for (Index pix = 0; pix < geom.image_size(); ++pix) {
    pixel_driven_back(geom, pix, [&](Index ray, double w) { trips.emplace_back(pix, ray, w); });
  }
  SparseMatrix b(geom.image_size(), geom.data_size());
  b.setFromTriplets(trips.begin(), trips.end());
  b.makeCompressed();
  return b;
}

UnmatchedPair make_ct_pair(const CtGeometry& geom, CtRealization realization, CtBackModel back) {
  validate(geom);
  const Index m = geom.data_size();
  const Index n = geom.image_size();

  if (realization == CtRealization::sparse || back == CtBackModel::matched) {
    SparseMatrix a = ct_forward_matrix(geom);
    SparseMatrix b = back == CtBackModel::matched ? SparseMatrix(a.transpose()) : ct_back_matrix(geom);
    if (realization == CtRealization::sparse) {
      return UnmatchedPair(make_sparse_map(std::move(a)), make_sparse_map(std::move(b)));
    }
    // Matched matrix-free: the transpose is computed on the fly from the rays.
    LinearMap fwd(m, n, [geom](const Vector& x, Vector& y) {
      for (Index ray = 0; ray < geom.data_size(); ++ray) {
        double acc = 0.0;
        joseph_ray(geom, ray, [&](Index pix, double w) { acc += w * x[pix]; });
        y[ray] = acc;
      }
    });
    LinearMap bck(n, m, [geom](const Vector& r, Vector& z) {
      z.setZero();
      for (Index ray = 0; ray < geom.data_size(); ++ray) {
        const double v = r[ray];
        joseph_ray(geom, ray, [&](Index pix, double w) { z[pix] += w * v; });
      }
    });
    return UnmatchedPair(fwd, bck);
  }

  LinearMap fwd(m, n, [geom](const Vector& x, Vector& y) {
    for (Index ray = 0; ray < geom.data_size(); ++ray) {
      double acc = 0.0;
      joseph_ray(geom, ray, [&](Index pix, double w) { acc += w * x[pix]; });
      y[ray] = acc;
    }
  });
  LinearMap bck(n, m, [geom](const Vector& r, Vector& z) {
    for (Index pix = 0; pix < geom.image_size(); ++pix) {
      double acc = 0.0;
      pixel_driven_back(geom, pix, [&](Index ray, double w) { acc += w * r[ray]; });
      z[pix] = acc;
    }
  });
  return UnmatchedPair(fwd, bck);
}

double ct_chord_length(const CtGeometry& geom, Index ray) {
  validate(geom);
  if (ray < 0 || ray >= geom.data_size()) throw ShapeError("ct_chord_length: ray out of range");
  const Frame f = angle_frame(geom, ray / geom.num_detector_pixels);
  const double s = detector_offset(geom, ray % geom.num_detector_pixels);
  const double h = 0.5 * static_cast<double>(geom.image_side);
  // Intersect the parameter t with both slabs.
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  auto slab = [&](double origin, double dir) {
    if (std::abs(dir) < 1e-15) {
      if (std::abs(origin) > h) hi = lo;
      return;
    }
    double t1 = (-h - origin) / dir;
    double t2 = (h - origin) / dir;
    if (t1 > t2) std::swap(t1, t2);
    lo = std::max(lo, t1);
    hi = std::min(hi, t2);
  };
  slab(-s * f.sin_t, f.cos_t);
  slab(s * f.cos_t, f.sin_t);
  return std::max(0.0, hi - lo);
}

Vector make_shepp_logan(Index n) {
  if (n < 16) throw DomainError("make_shepp_logan: N must be at least 16");
  struct Ellipse {
    double value, a, b, x0, y0, phi_deg;
  };
  static constexpr Ellipse table[] = {
      {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
      {-0.98, 0.6624, 0.874, 0.0, -0.0184, 0.0},
      {-0.02, 0.11, 0.31, 0.22, 0.0, -18.0},
      {-0.02, 0.16, 0.41, -0.22, 0.0, 18.0},
      {0.01, 0.21, 0.25, 0.0, 0.35, 0.0},
      {0.01, 0.046, 0.046, 0.0, 0.1, 0.0},
      {0.01, 0.046, 0.046, 0.0, -0.1, 0.0},
      {0.01, 0.046, 0.023, -0.08, -0.605, 0.0},
      {0.01, 0.023, 0.023, 0.0, -0.605, 0.0},
      {0.01, 0.023, 0.046, 0.06, -0.605, 0.0},
  };
  Vector img = Vector::Zero(n * n);
  // Pixel centers of the image square, scaled so the square is [-1, 1]^2.
  const double half = 0.5 * static_cast<double>(n);
  for (Index r = 0; r < n; ++r) {
    const double y = (half - static_cast<double>(r) - 0.5) / half;
    for (Index c = 0; c < n; ++c) {
      const double x = (static_cast<double>(c) + 0.5 - half) / half;
      double v = 0.0;
      for (const Ellipse& e : table) {
        const double phi = e.phi_deg * std::numbers::pi / 180.0;
        const double xr = (x - e.x0) * std::cos(phi) + (y - e.y0) * std::sin(phi);
        const double yr = -(x - e.x0) * std::sin(phi) + (y - e.y0) * std::cos(phi);
        if ((xr * xr) / (e.a * e.a) + (yr * yr) / (e.b * e.b) <= 1.0) v += e.value;
      }
      img[r * n + c] = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

Vector add_noise(const Vector& bbar, const NoiseSpec& spec) {
  if (!(spec.relative_level >= 0.0)) throw DomainError("add_noise: noise level must be >= 0");
  if (spec.relative_level == 0.0) return bbar;
  const double norm = bbar.norm();
  if (norm == 0.0) throw DomainError("add_noise: relative noise on zero data");
  Vector e = gaussian_matrix(bbar.size(), 1, spec.seed, Stream::noise).col(0);
  e *= spec.relative_level * norm / e.norm();
  return bbar + e;
}

void write_grid_csv(const std::string& path, const Vector& values, Index rows, Index cols) {
  if (values.size() != rows * cols) throw ShapeError("write_grid_csv: size mismatch");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  char buf[32];
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", values[r * cols + c]);
      out << (c ? "," : "") << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace unmatched
