#include "reprscope/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "reprscope/error.hpp"
#include "reprscope/random.hpp"

namespace reprscope {

namespace {

using Vec = std::vector<double>;

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

Vec multiply(const Vec& m, std::size_t k, const Vec& v, double shift) {
  Vec out(k);
  for (std::size_t i = 0; i < k; ++i) {
    double s = shift * v[i];
    for (std::size_t j = 0; j < k; ++j) s += m[i * k + j] * v[j];
    out[i] = s;
  }
  return out;
}

Vec start_vector(std::size_t k, std::uint64_t which) {
  Rng rng(derive_seed(0x6d64735fULL, {which}));
  Vec v(k);
  for (double& x : v) x = rng.normal();
  return v;
}

// Orthonormalizes b against a (unit); falls back to fixed vectors when b collapses.
Vec orthonormal_to(const Vec& a, Vec b, std::size_t k) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    const double proj = dot(a, b);
    for (std::size_t i = 0; i < k; ++i) b[i] -= proj * a[i];
    const double n = norm(b);
    if (n > 1e-12 || attempt > 8) {
      if (n == 0.0) return b;
      for (double& x : b) x /= n;
      return b;
    }
    b = start_vector(k, 100 + attempt);
  }
}

Vec normalized(Vec v, std::size_t k, std::uint64_t fallback) {
  double n = norm(v);
  if (n <= 1e-300) {
    v = start_vector(k, fallback);
    n = norm(v);
  }
  for (double& x : v) x /= n;
  return v;
}

struct TopPairs {
  std::array<double, 2> values;
  std::array<Vec, 2> vectors;
};

// Two-vector subspace iteration with Rayleigh-Ritz on (m + shift I).
// Converges to the two eigenpairs of largest magnitude.
TopPairs subspace_iteration(const Vec& m, std::size_t k, double shift, const MdsOptions& opt) {
  double scale = 0.0;
  for (double x : m) scale += x * x;
  scale = std::sqrt(scale) + std::abs(shift) * std::sqrt(static_cast<double>(k));
  const double tol = opt.tolerance * std::max(scale, 1e-300);

  Vec v1 = normalized(start_vector(k, 0), k, 0);
  Vec v2 = orthonormal_to(v1, start_vector(k, 1), k);
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    const Vec w1 = multiply(m, k, v1, shift);
    const Vec w2 = multiply(m, k, v2, shift);
    const double a = dot(v1, w1);
    const double c = dot(v2, w2);
    const double b = 0.5 * (dot(v1, w2) + dot(v2, w1));
    const double mid = 0.5 * (a + c);
    const double rad = std::hypot(0.5 * (a - c), b);
    const double phi = 0.5 * std::atan2(2.0 * b, a - c);
    const double cs = std::cos(phi);
    const double sn = std::sin(phi);
    TopPairs out{{mid + rad, mid - rad}, {Vec(k), Vec(k)}};
    double residual = 0.0;
    for (int r = 0; r < 2; ++r) {
      const double y1 = r == 0 ? cs : -sn;
      const double y2 = r == 0 ? sn : cs;
      double res = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        out.vectors[r][i] = y1 * v1[i] + y2 * v2[i];
        const double mu = y1 * w1[i] + y2 * w2[i];
        res += (mu - out.values[r] * out.vectors[r][i]) * (mu - out.values[r] * out.vectors[r][i]);
      }
      residual = std::max(residual, std::sqrt(res));
    }
    if (residual <= tol) {
      out.values[0] -= shift;
      out.values[1] -= shift;
      return out;
    }
    v1 = normalized(w1, k, 2 + it);
    v2 = orthonormal_to(v1, w2, k);
  }
  fail(ErrorKind::NoConvergence, "MDS eigensolve did not converge in " +
                                     std::to_string(opt.max_iterations) + " iterations");
}

// Deterministic sign: the largest-magnitude component is positive.
void canonical_sign(Vec& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[best]) + 1e-12) best = i;
  if (v[best] < 0.0)
    for (double& x : v) x = -x;
}

}  // namespace

AtlasLayout classical_mds(const DistanceMatrix& d, const MdsOptions& options) {
  if (auto e = d.invariant_violation()) fail(ErrorKind::NotADistanceMatrix, *e);
  const std::size_t k = d.size();
  require(k >= 3, ErrorKind::TooFewPoints, "MDS needs at least 3 points");

  Vec sq(k * k);
  for (std::size_t i = 0; i < k * k; ++i) sq[i] = d.values()[i] * d.values()[i];
  Vec row_mean(k, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) row_mean[i] += sq[i * k + j];
    grand += row_mean[i];
    row_mean[i] /= static_cast<double>(k);
  }
  grand /= static_cast<double>(k * k);
  Vec b(k * k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      b[i * k + j] = -0.5 * (sq[i * k + j] - row_mean[i] - row_mean[j] + grand);

  double b_norm = 0.0;
  for (double x : b) b_norm += x * x;
  b_norm = std::sqrt(b_norm);

  TopPairs top = subspace_iteration(b, k, 0.0, options);
  const double most_negative = std::min(top.values[0], top.values[1]);
  if (most_negative < -1e-9 * b_norm) {
    // A large negative eigenvalue outranked a positive one in magnitude;
    // shifting by it makes the spectrum non-negative without reordering.
    top = subspace_iteration(b, k, -most_negative, options);
  }

  AtlasLayout layout;
  layout.source_tag = d.metric_tag();
  layout.coords.assign(k, {0.0, 0.0});
  for (int axis = 0; axis < 2; ++axis) {
    layout.eigenvalues[axis] = top.values[axis];
    // The centring vector always has eigenvalue 0, so a true zero shows up
    // here as rounding noise of either sign.
    if (top.values[axis] <= 1e-12 * b_norm) {
      layout.zeroed_axes[axis] = true;
      continue;
    }
    canonical_sign(top.vectors[axis]);
    const double s = std::sqrt(top.values[axis]);
    for (std::size_t i = 0; i < k; ++i) layout.coords[i][axis] = s * top.vectors[axis][i];
  }

  const DistanceMatrix emb = embedded_distances(layout);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      num += (emb(i, j) - d(i, j)) * (emb(i, j) - d(i, j));
      den += d(i, j) * d(i, j);
    }
  }
  layout.stress = den > 0.0 ? num / den : 0.0;
  return layout;
}

DistanceMatrix embedded_distances(const AtlasLayout& layout) {
  const auto& c = layout.coords;
  return DistanceMatrix::from_upper(
      c.size(),
      [&](std::size_t i, std::size_t j) { return std::hypot(c[i][0] - c[j][0], c[i][1] - c[j][1]); },
      "embedded(" + layout.source_tag + ")");
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoFailure, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::IoFailure, "write failed for " + path.string());
}

}  // namespace

void export_atlas(const AtlasLayout& layout, const std::vector<std::string>& labels,
                  const std::vector<HighlightSet>& highlights, const std::filesystem::path& dir) {
  const std::size_t k = layout.coords.size();
  require(labels.size() == k, ErrorKind::LengthMismatch,
          std::to_string(labels.size()) + " labels for " + std::to_string(k) + " points");
  std::vector<int> group(k, -1);
  for (std::size_t g = 0; g < highlights.size(); ++g) {
    for (std::size_t idx : highlights[g].members) {
      require(idx < k, ErrorKind::IndexOutOfRange, "highlight index " + std::to_string(idx));
      if (group[idx] < 0) group[idx] = static_cast<int>(g);
    }
  }

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::IoFailure, "cannot create " + dir.string());

  std::ostringstream csv;
  csv.precision(17);
  csv << "index,label,x,y,group\n";
  for (std::size_t i = 0; i < k; ++i) {
    csv << i << ',' << csv_field(labels[i]) << ',' << layout.coords[i][0] << ',' << layout.coords[i][1]
        << ',' << (group[i] >= 0 ? csv_field(highlights[static_cast<std::size_t>(group[i])].name) : "")
        << '\n';
  }
  write_text(dir / "atlas.csv", csv.str());

  double min_x = 0.0, max_x = 0.0, min_y = 0.0, max_y = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    min_x = std::min(min_x, layout.coords[i][0]);
    max_x = std::max(max_x, layout.coords[i][0]);
    min_y = std::min(min_y, layout.coords[i][1]);
    max_y = std::max(max_y, layout.coords[i][1]);
  }
  const double span = std::max({max_x - min_x, max_y - min_y, 1e-12});
  const double size = 600.0, margin = 40.0;
  auto px = [&](double x) { return margin + (x - min_x) / span * (size - 2 * margin); };
  auto py = [&](double y) { return size - margin - (y - min_y) / span * (size - 2 * margin); };

  std::ostringstream svg;
  svg.precision(6);
  svg << std::fixed;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << size + 200
      << "\" height=\"" << size << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < k; ++i) {
    const bool hl = group[i] >= 0;
    const char* fill = hl ? kPalette[static_cast<std::size_t>(group[i]) % std::size(kPalette)] : "#9e9e9e";
    svg << "<circle cx=\"" << px(layout.coords[i][0]) << "\" cy=\"" << py(layout.coords[i][1])
        << "\" r=\"" << (hl ? 6 : 4) << "\" fill=\"" << fill << "\""
        << (hl ? " stroke=\"black\" stroke-width=\"1.5\" class=\"highlight\"" : " class=\"rep\"")
        << "><title>" << i << ' ' << xml_escape(labels[i]) << "</title></circle>\n";
  }
  svg << "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n";
  double ly = margin;
  svg << "<circle cx=\"" << size + 20 << "\" cy=\"" << ly << "\" r=\"4\" fill=\"#9e9e9e\"/>"
      << "<text x=\"" << size + 32 << "\" y=\"" << ly + 4 << "\">representation</text>\n";
  for (std::size_t g = 0; g < highlights.size(); ++g) {
    ly += 20;
    svg << "<circle cx=\"" << size + 20 << "\" cy=\"" << ly << "\" r=\"6\" fill=\""
        << kPalette[g % std::size(kPalette)] << "\" stroke=\"black\"/>"
        << "<text x=\"" << size + 32 << "\" y=\"" << ly + 4 << "\">" << xml_escape(highlights[g].name)
        << "</text>\n";
  }
  svg << "</g>\n</svg>\n";
  write_text(dir / "atlas.svg", svg.str());
}

}  // namespace reprscope
