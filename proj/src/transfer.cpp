#include "palettediff/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "json.hpp"

#include "palettediff/error.hpp"

namespace palettediff {

std::string_view to_string(TransferMode mode) {
  return mode == TransferMode::color ? "color" : "negative-color";
}

TransferMode parse_transfer_mode(std::string_view text) {
  if (text == "color") return TransferMode::color;
  if (text == "negative-color") return TransferMode::negative_color;
  throw Error(Errc::invalid_argument, "mode must be color or negative-color");
}

double Assignment::total_cost(const CostMatrix& cost) const {
  double total = 0.0;
  for (std::size_t i = 0; i < mapping.size(); ++i) total += cost(static_cast<Eigen::Index>(i), mapping[i]);
  return total;
}

bool Assignment::is_bijection() const {
  std::vector<bool> hit(mapping.size(), false);
  for (int j : mapping) {
    if (j < 0 || j >= static_cast<int>(mapping.size()) || hit[static_cast<std::size_t>(j)]) return false;
    hit[static_cast<std::size_t>(j)] = true;
  }
  return true;
}

CostMatrix build_cost(const Palette& src, const Palette& tgt, TransferMode mode) {
  if (src.size() != tgt.size()) throw Error(Errc::size_mismatch, "palettes differ in size");
  const int n = src.size();
  CostMatrix cost(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double d = 0.0;
      for (int ch = 0; ch < 3; ++ch) {
        const double diff = double(src[i][ch]) - double(tgt[j][ch]);
        d += diff * diff;
      }
      cost(i, j) = mode == TransferMode::color ? d : -d;
    }
  }
  return cost;
}

namespace {

// Shortest-augmenting-path Hungarian method with row/column potentials.
struct HungarianResult {
  std::vector<int> row_to_col;
  Eigen::VectorXd u;
  Eigen::VectorXd v;
};

HungarianResult hungarian(const CostMatrix& a) {
  const int n = static_cast<int>(a.rows());
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n + 1), v = Eigen::VectorXd::Zero(n + 1);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    Eigen::VectorXd minv = Eigen::VectorXd::Constant(n + 1, inf);
    std::vector<bool> used(static_cast<std::size_t>(n) + 1, false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) minv[j] = cur, way[static_cast<std::size_t>(j)] = j0;
        if (minv[j] < delta) delta = minv[j], j1 = j;
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[p[static_cast<std::size_t>(j)]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  HungarianResult r;
  r.row_to_col.assign(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) r.row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  r.u = u.tail(n);
  r.v = v.tail(n);
  return r;
}

// Lexicographically smallest perfect matching in the equality subgraph of an
// optimal dual; every such matching is optimal and every optimum lives there.
class LexMatcher {
 public:
  LexMatcher(std::vector<std::vector<int>> tight, std::vector<int> row_to_col)
      : tight_(std::move(tight)), row_(std::move(row_to_col)), col_(row_.size()), fixed_(row_.size(), false) {
    for (std::size_t i = 0; i < row_.size(); ++i) col_[static_cast<std::size_t>(row_[i])] = static_cast<int>(i);
  }

  std::vector<int> run() {
    const int n = static_cast<int>(row_.size());
    for (int i = 0; i < n; ++i) {
      for (int j : tight_[static_cast<std::size_t>(i)]) {
        if (row_[static_cast<std::size_t>(i)] == j || force(i, j)) break;
      }
      fixed_[static_cast<std::size_t>(i)] = true;
    }
    return row_;
  }

 private:
  // Re-matches so that i -> j, by rerouting j's current row to i's freed column.
  bool force(int i, int j) {
    const int displaced = col_[static_cast<std::size_t>(j)];
    if (fixed_[static_cast<std::size_t>(displaced)]) return false;
    freed_ = row_[static_cast<std::size_t>(i)];
    blocked_row_ = i;
    blocked_col_ = j;
    seen_.assign(row_.size(), false);
    if (!augment(displaced)) return false;
    row_[static_cast<std::size_t>(i)] = j;
    col_[static_cast<std::size_t>(j)] = i;
    return true;
  }

  bool augment(int r) {
    for (int c : tight_[static_cast<std::size_t>(r)]) {
      if (c == blocked_col_ || seen_[static_cast<std::size_t>(c)]) continue;
      seen_[static_cast<std::size_t>(c)] = true;
      bool ok = false;
      if (c == freed_) {
        ok = true;
      } else {
        const int next = col_[static_cast<std::size_t>(c)];
        ok = next != blocked_row_ && !fixed_[static_cast<std::size_t>(next)] && augment(next);
      }
      if (ok) {
        row_[static_cast<std::size_t>(r)] = c;
        col_[static_cast<std::size_t>(c)] = r;
        return true;
      }
    }
    return false;
  }

  std::vector<std::vector<int>> tight_;
  std::vector<int> row_;
  std::vector<int> col_;
  std::vector<bool> fixed_;
  std::vector<bool> seen_;
  int freed_ = -1;
  int blocked_row_ = -1;
  int blocked_col_ = -1;
};

}  // namespace

Assignment solve_assignment(const CostMatrix& cost) {
  if (cost.rows() != cost.cols()) throw Error(Errc::size_mismatch, "cost matrix must be square");
  const int n = static_cast<int>(cost.rows());
  if (n == 0) return {};
  if (!cost.allFinite()) throw Error(Errc::invalid_argument, "cost matrix has non-finite entries");

  const HungarianResult h = hungarian(cost);
  const double tol = 1e-9 * (1.0 + cost.cwiseAbs().maxCoeff()) * n;
  std::vector<std::vector<int>> tight(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (std::abs(cost(i, j) - h.u[i] - h.v[j]) <= tol) tight[static_cast<std::size_t>(i)].push_back(j);
    }
  }
  return Assignment{LexMatcher(std::move(tight), h.row_to_col).run()};
}

IndexedImage transfer_palette(const IndexedImage& q, const Palette& tgt, TransferMode mode) {
  const Assignment a = solve_assignment(build_cost(q.palette(), tgt, mode));
  std::vector<Rgb> colors;
  colors.reserve(a.mapping.size());
  for (int j : a.mapping) colors.push_back(tgt[j]);
  return IndexedImage(q.width(), q.height(), q.indices(), Palette(std::move(colors)));
}

Palette resample_colormap(const std::vector<Rgb>& stops, int n) {
  if (stops.empty()) throw Error(Errc::invalid_argument, "colormap has no stops");
  if (n < 1 || n > 256) throw Error(Errc::invalid_argument, "sample count must lie in [1, 256]");
  std::vector<Rgb> out;
  std::set<Rgb> seen;
  const int m = static_cast<int>(stops.size());
  for (int k = 0; k < n; ++k) {
    Rgb c = stops.front();
    if (n > 1 && m > 1) {
      const double pos = static_cast<double>(k) / (n - 1) * (m - 1);
      const int i = std::min(static_cast<int>(std::floor(pos)), m - 2);
      const double frac = pos - i;
      for (int ch = 0; ch < 3; ++ch) {
        const double a = stops[static_cast<std::size_t>(i)][ch];
        const double b = stops[static_cast<std::size_t>(i) + 1][ch];
        c[ch] = to_channel(a + (b - a) * frac);
      }
    }
    while (seen.contains(c)) c[0] = static_cast<std::uint8_t>(c[0] + 1);
    seen.insert(c);
    out.push_back(c);
  }
  return Palette(std::move(out));
}

std::vector<Rgb> load_colormap(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::file_not_found, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::decode_error, std::string("colormap JSON: ") + e.what());
  }
  if (!j.is_array() || j.empty()) throw Error(Errc::decode_error, "colormap must be a nonempty array");
  std::vector<Rgb> stops;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 3) throw Error(Errc::decode_error, "colormap stops must be [r,g,b]");
    Rgb c{};
    for (int ch = 0; ch < 3; ++ch) {
      const int v = e[static_cast<std::size_t>(ch)].get<int>();
      if (v < 0 || v > 255) throw Error(Errc::decode_error, "colormap channel out of [0,255]");
      c[static_cast<std::size_t>(ch)] = static_cast<std::uint8_t>(v);
    }
    stops.push_back(c);
  }
  return stops;
}

}  // namespace palettediff
