#pragma once

// Patch dataset generation and ingestion: standard Gaussian patches, uniform
// unit-sphere patches, clustered unit-norm patches with a margin kept clear of
// a reference direction's decision boundary, and pre-extracted numeric files.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "relu_lab/linalg.hpp"
#include "relu_lab/parallel.hpp"
#include "relu_lab/rng.hpp"

namespace relu_lab {

enum class DistKind { StandardGaussian, UnitSphere, ClusteredPatches, FromFile };

inline std::string to_string(DistKind k) {
  switch (k) {
    case DistKind::StandardGaussian: return "gaussian";
    case DistKind::UnitSphere: return "sphere";
    case DistKind::ClusteredPatches: return "clustered";
    case DistKind::FromFile: return "file";
  }
  return "?";
}

struct DistributionSpec {
  DistKind kind = DistKind::StandardGaussian;
  int p = 1;
  int k = 1;
  double rho = 0.0;      // ClusteredPatches: max patch-to-average angle
  double mu = 0.0;       // ClusteredPatches: boundary-density bound
  Vec margin_dir;        // ClusteredPatches: direction the margin is kept from
  std::string path;      // FromFile

  void validate() const {
    if (p < 1 || k < 1) throw std::invalid_argument("DistributionSpec: p and k must be >= 1");
    if (kind == DistKind::ClusteredPatches) {
      if (rho < 0.0 || rho >= M_PI / 2) throw std::invalid_argument("DistributionSpec: rho outside [0, pi/2)");
      if (mu < 0.0) throw std::invalid_argument("DistributionSpec: mu < 0");
      if (static_cast<int>(margin_dir.size()) != p)
        throw std::invalid_argument("DistributionSpec: margin_dir must have dimension p");
      if (norm(margin_dir) == 0.0) throw std::invalid_argument("DistributionSpec: margin_dir is zero");
    }
    if (kind == DistKind::FromFile && path.empty())
      throw std::invalid_argument("DistributionSpec: FromFile requires a path");
  }
};

// Column-major view of one sample's k patches of dimension p.
struct PatchView {
  int p = 0, k = 0;
  const double* data = nullptr;
  const double* patch(int j) const { return data + static_cast<std::size_t>(j) * p; }
};

struct PatchSample {
  int p = 0, k = 0;
  std::vector<double> data;  // column-major, patch 0 first
  PatchView view() const { return {p, k, data.data()}; }
};

struct Dataset {
  DistributionSpec spec;
  std::uint64_t seed = 0;
  int p = 0, k = 0;
  std::size_t n = 0;
  std::vector<double> data;  // n * k * p, sample-major
  double gap = 0.0;          // clustered: enforced center-to-boundary clearance

  PatchView sample(std::size_t i) const {
    return {p, k, data.data() + i * static_cast<std::size_t>(k) * p};
  }
};

namespace detail {

inline void gauss_fill(Rng& rng, double* out, int n) {
  for (int i = 0; i < n; ++i) out[i] = rng.gauss();
}

inline void unit_sphere_fill(Rng& rng, double* out, int p) {
  double n2;
  do {
    gauss_fill(rng, out, p);
    n2 = 0.0;
    for (int i = 0; i < p; ++i) n2 += out[i] * out[i];
  } while (n2 < 1e-24);
  const double inv = 1.0 / std::sqrt(n2);
  for (int i = 0; i < p; ++i) out[i] *= inv;
}

// Unit vector orthogonal to the unit vector c.
inline void perp_dir(Rng& rng, const double* c, double* out, int p) {
  double n2;
  do {
    gauss_fill(rng, out, p);
    double proj = 0.0;
    for (int i = 0; i < p; ++i) proj += out[i] * c[i];
    n2 = 0.0;
    for (int i = 0; i < p; ++i) {
      out[i] -= proj * c[i];
      n2 += out[i] * out[i];
    }
  } while (n2 < 1e-24);
  const double inv = 1.0 / std::sqrt(n2);
  for (int i = 0; i < p; ++i) out[i] *= inv;
}

inline double clustered_gap(const DistributionSpec& spec) { return 1.5 * spec.rho; }

// One clustered sample: unit center away from the margin band, patches rotated
// off the center by at most rho/2, re-drawn until theta(Z_i, Z_avg) <= rho.
inline void clustered_one(const DistributionSpec& spec, const Vec& margin_unit, Rng& rng,
                          double* out) {
  const int p = spec.p, k = spec.k;
  const double gap = clustered_gap(spec);
  std::vector<double> c(p), u(p), zavg(p);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    double cosb;
    do {
      unit_sphere_fill(rng, c.data(), p);
      cosb = 0.0;
      for (int i = 0; i < p; ++i) cosb += c[i] * margin_unit[i];
    } while (std::abs(M_PI / 2 - std::acos(std::clamp(cosb, -1.0, 1.0))) < gap);

    for (int j = 0; j < k; ++j) {
      perp_dir(rng, c.data(), u.data(), p);
      const double a = rng.unit() * (spec.rho / 2.0);
      const double ca = std::cos(a), sa = std::sin(a);
      double* z = out + static_cast<std::size_t>(j) * p;
      for (int i = 0; i < p; ++i) z[i] = ca * c[i] + sa * u[i];
    }

    std::fill(zavg.begin(), zavg.end(), 0.0);
    for (int j = 0; j < k; ++j) {
      const double* z = out + static_cast<std::size_t>(j) * p;
      for (int i = 0; i < p; ++i) zavg[i] += z[i] / k;
    }
    double worst = 0.0;
    const double navg = norm(zavg);
    for (int j = 0; j < k; ++j) {
      const double* z = out + static_cast<std::size_t>(j) * p;
      double d = 0.0;
      for (int i = 0; i < p; ++i) d += z[i] * zavg[i];
      worst = std::max(worst, std::acos(std::clamp(d / navg, -1.0, 1.0)));
    }
    if (worst <= spec.rho) return;
  }
  throw std::runtime_error("clustered sampler: could not satisfy the angle constraint");
}

}  // namespace detail

// Fills one sample (k*p doubles) from the stream. FromFile is not generative.
inline void generate_one(const DistributionSpec& spec, Rng& rng, double* out) {
  switch (spec.kind) {
    case DistKind::StandardGaussian:
      detail::gauss_fill(rng, out, spec.p * spec.k);
      return;
    case DistKind::UnitSphere:
      for (int j = 0; j < spec.k; ++j)
        detail::unit_sphere_fill(rng, out + static_cast<std::size_t>(j) * spec.p, spec.p);
      return;
    case DistKind::ClusteredPatches: {
      const Vec m = normalized(spec.margin_dir);
      detail::clustered_one(spec, m, rng, out);
      return;
    }
    case DistKind::FromFile:
      throw std::logic_error("generate_one: FromFile is not generative");
  }
}

void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

// Deterministic in (spec, n, seed); generation is chunked with per-chunk
// derived seeds so the result is independent of thread count.
inline Dataset sample(const DistributionSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");

  if (spec.kind == DistKind::FromFile) {
    Dataset ds = read_dataset(spec.path);
    if (n > ds.n) throw std::invalid_argument("sample: FromFile dataset has fewer than n samples");
    ds.data.resize(n * static_cast<std::size_t>(ds.k) * ds.p);
    ds.n = n;
    ds.spec = spec;
    ds.spec.p = ds.p;
    ds.spec.k = ds.k;
    ds.seed = seed;
    return ds;
  }

  Dataset ds;
  ds.spec = spec;
  ds.seed = seed;
  ds.p = spec.p;
  ds.k = spec.k;
  ds.n = n;
  ds.data.resize(n * static_cast<std::size_t>(spec.k) * spec.p);
  if (spec.kind == DistKind::ClusteredPatches) ds.gap = detail::clustered_gap(spec);

  const std::size_t stride = static_cast<std::size_t>(spec.k) * spec.p;
  const Vec margin_unit =
      spec.kind == DistKind::ClusteredPatches ? normalized(spec.margin_dir) : Vec{};
  for_each_chunk(n, 1024, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
    Rng rng(derive_seed(seed, chunk));
    for (std::size_t i = begin; i < end; ++i) {
      double* out = ds.data.data() + i * stride;
      if (spec.kind == DistKind::ClusteredPatches)
        detail::clustered_one(spec, margin_unit, rng, out);
      else
        generate_one(spec, rng, out);
    }
  });
  return ds;
}

// Sliding-window patches: column i is x[i*stride : i*stride + patch_size].
inline PatchSample extract_patches(const Vec& x, int patch_size, int stride) {
  if (patch_size < 1 || stride < 1)
    throw std::invalid_argument("extract_patches: patch_size and stride must be >= 1");
  if (static_cast<std::size_t>(patch_size) > x.size())
    throw std::domain_error("extract_patches: patch_size exceeds input length");
  const int k = static_cast<int>((x.size() - patch_size) / stride) + 1;
  PatchSample s;
  s.p = patch_size;
  s.k = k;
  s.data.resize(static_cast<std::size_t>(k) * patch_size);
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < patch_size; ++i)
      s.data[static_cast<std::size_t>(j) * patch_size + i] = x[static_cast<std::size_t>(j) * stride + i];
  return s;
}

// Empirical fraction of patches whose angle to w_star lies within phi of pi/2.
inline double margin_mass(const Dataset& ds, const Vec& w_star, double phi) {
  if (ds.n == 0) throw std::domain_error("margin_mass: empty dataset");
  if (phi <= 0.0 || phi > M_PI / 2) throw std::invalid_argument("margin_mass: phi outside (0, pi/2]");
  const Vec ws = normalized(w_star);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.n; ++i) {
    const PatchView z = ds.sample(i);
    for (int j = 0; j < ds.k; ++j) {
      const double* zj = z.patch(j);
      double d = 0.0, n2 = 0.0;
      for (int c = 0; c < ds.p; ++c) {
        d += zj[c] * ws[c];
        n2 += zj[c] * zj[c];
      }
      if (n2 == 0.0) continue;
      const double theta = std::acos(std::clamp(d / std::sqrt(n2), -1.0, 1.0));
      if (std::abs(theta - M_PI / 2) <= phi) ++hits;
    }
  }
  return static_cast<double>(hits) / (static_cast<double>(ds.n) * ds.k);
}

// Text format: header "p k n", then n lines of p*k floats, column-major per patch.
inline void write_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_dataset: cannot open " + path);
  out << ds.p << ' ' << ds.k << ' ' << ds.n << '\n';
  char buf[32];
  const std::size_t stride = static_cast<std::size_t>(ds.k) * ds.p;
  for (std::size_t i = 0; i < ds.n; ++i) {
    const double* row = ds.data.data() + i * stride;
    for (std::size_t j = 0; j < stride; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", row[j]);
      out << buf << (j + 1 == stride ? '\n' : ' ');
    }
  }
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_dataset: cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("read_dataset: missing header");
  std::istringstream hs(header);
  long p = 0, k = 0, n = 0;
  if (!(hs >> p >> k >> n) || p < 1 || k < 1 || n < 1)
    throw std::runtime_error("read_dataset: malformed header (want: p k n)");

  Dataset ds;
  ds.p = static_cast<int>(p);
  ds.k = static_cast<int>(k);
  ds.n = static_cast<std::size_t>(n);
  ds.spec.kind = DistKind::FromFile;
  ds.spec.path = path;
  ds.spec.p = ds.p;
  ds.spec.k = ds.k;
  const std::size_t stride = static_cast<std::size_t>(k) * p;
  ds.data.resize(ds.n * stride);
  std::string line;
  for (std::size_t i = 0; i < ds.n; ++i) {
    if (!std::getline(in, line))
      throw std::runtime_error("read_dataset: truncated at row " + std::to_string(i));
    std::istringstream ls(line);
    for (std::size_t j = 0; j < stride; ++j) {
      if (!(ls >> ds.data[i * stride + j]))
        throw std::runtime_error("read_dataset: row " + std::to_string(i) +
                                 " has fewer than p*k values");
      if (!std::isfinite(ds.data[i * stride + j]))
        throw std::runtime_error("read_dataset: non-finite value at row " + std::to_string(i));
    }
    double extra;
    if (ls >> extra)
      throw std::runtime_error("read_dataset: row " + std::to_string(i) + " has extra values");
  }
  return ds;
}

}  // namespace relu_lab
