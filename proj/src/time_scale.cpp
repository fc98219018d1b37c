#include "tsdde/time_scale.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tsdde {

namespace {

std::string num(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// TimeScale
// ---------------------------------------------------------------------------

std::shared_ptr<const TimeScale> TimeScale::create(std::vector<Segment> segments,
                                                   double membership_tol) {
  if (segments.empty())
    throw Error(ErrorCode::DegenerateScale, "time scale has no segments");
  std::sort(segments.begin(), segments.end(),
            [](const Segment& x, const Segment& y) { return x.a < y.a; });
  for (const Segment& s : segments) {
    if (!(s.a <= s.b) || !std::isfinite(s.a) || !std::isfinite(s.b))
      throw Error(ErrorCode::DegenerateScale,
                  "bad segment [" + num(s.a) + ", " + num(s.b) + "]");
    if (s.a < s.b && s.b - s.a <= membership_tol)
      throw Error(ErrorCode::DegenerateScale,
                  "interval [" + num(s.a) + ", " + num(s.b) +
                      "] is shorter than the membership tolerance; use a point");
  }
  for (std::size_t i = 1; i < segments.size(); ++i) {
    if (segments[i].a <= segments[i - 1].b + membership_tol)
      throw Error(ErrorCode::DegenerateScale,
                  "segments overlap or touch near t = " + num(segments[i].a));
  }
  auto ts = std::shared_ptr<TimeScale>(new TimeScale());
  ts->segments_ = std::move(segments);
  ts->t_min_ = ts->segments_.front().a;
  ts->t_max_ = ts->segments_.back().b;
  ts->membership_tol_ = membership_tol;
  return ts;
}

int TimeScale::find_segment(double t) const {
  // First segment with a <= t + tol, scanning backward from the partition point.
  auto it = std::upper_bound(segments_.begin(), segments_.end(), t + membership_tol_,
                             [](double v, const Segment& s) { return v < s.a; });
  if (it == segments_.begin()) return -1;
  --it;
  if (t <= it->b + membership_tol_) return static_cast<int>(it - segments_.begin());
  // t may sit within tol below the NEXT segment's start.
  ++it;
  if (it != segments_.end() && t >= it->a - membership_tol_)
    return static_cast<int>(it - segments_.begin());
  return -1;
}

bool TimeScale::contains(double t) const { return find_segment(t) >= 0; }

double TimeScale::snap(double t) const {
  int i = find_segment(t);
  if (i < 0) return t;
  const Segment& s = segments_[static_cast<std::size_t>(i)];
  if (std::abs(t - s.a) <= membership_tol_) return s.a;
  if (std::abs(t - s.b) <= membership_tol_) return s.b;
  return t;
}

double TimeScale::sigma(double t) const {
  int i = find_segment(t);
  if (i < 0)
    throw Error(ErrorCode::NotInScale, "sigma(" + num(t) + "): not a scale point");
  const Segment& s = segments_[static_cast<std::size_t>(i)];
  if (!s.is_point() && t < s.b - membership_tol_) return t;  // right-dense
  if (static_cast<std::size_t>(i) + 1 == segments_.size())
    throw Error(ErrorCode::HorizonExceeded, "sigma(" + num(t) + ") is beyond the horizon");
  return segments_[static_cast<std::size_t>(i) + 1].a;
}

double TimeScale::rho(double t) const {
  int i = find_segment(t);
  if (i < 0)
    throw Error(ErrorCode::NotInScale, "rho(" + num(t) + "): not a scale point");
  const Segment& s = segments_[static_cast<std::size_t>(i)];
  if (!s.is_point() && t > s.a + membership_tol_) return t;  // left-dense
  if (i == 0)
    throw Error(ErrorCode::HorizonExceeded, "rho(" + num(t) + ") is below the scale");
  return segments_[static_cast<std::size_t>(i) - 1].b;
}

double TimeScale::mu(double t) const {
  double st = sigma(t);
  double base = snap(t);
  return st - base;
}

bool TimeScale::is_right_scattered(double t) const {
  int i = find_segment(t);
  if (i < 0)
    throw Error(ErrorCode::NotInScale, "scattered(" + num(t) + "): not a scale point");
  const Segment& s = segments_[static_cast<std::size_t>(i)];
  if (!s.is_point() && t < s.b - membership_tol_) return false;
  // Right endpoint or isolated point: scattered unless it ends the horizon.
  return static_cast<std::size_t>(i) + 1 < segments_.size();
}

double TimeScale::project_down(double x) const {
  if (x < t_min_ - membership_tol_)
    throw Error(ErrorCode::NotInScale,
                "project_down(" + num(x) + "): below the scale minimum " + num(t_min_));
  int i = find_segment(x);
  if (i >= 0) {
    const Segment& s = segments_[static_cast<std::size_t>(i)];
    if (x < s.a) return s.a;  // within tol below the segment start
    return std::min(snap(x), s.b);
  }
  // x lies in a gap: last segment entirely below x.
  auto it = std::upper_bound(segments_.begin(), segments_.end(), x,
                             [](double v, const Segment& s) { return v < s.a; });
  --it;
  return std::min(it->b, t_max_);
}

std::shared_ptr<const TimeScale> TimeScale::reals(double a, double b) {
  return create({Segment::interval(a, b)});
}

std::shared_ptr<const TimeScale> TimeScale::integers(double lo, double hi) {
  return h_integers(1.0, lo, hi);
}

std::shared_ptr<const TimeScale> TimeScale::h_integers(double h, double lo, double hi) {
  if (h <= 0.0) throw Error(ErrorCode::DegenerateScale, "h_integers needs h > 0");
  std::vector<Segment> segs;
  long k0 = static_cast<long>(std::ceil(lo / h - 1e-12));
  long k1 = static_cast<long>(std::floor(hi / h + 1e-12));
  for (long k = k0; k <= k1; ++k) segs.push_back(Segment::point(static_cast<double>(k) * h));
  return create(std::move(segs));
}

std::shared_ptr<const TimeScale> TimeScale::q_scale(double q, double lo, double hi) {
  if (q <= 1.0) throw Error(ErrorCode::DegenerateScale, "q_scale needs q > 1");
  if (lo <= 0.0) lo = 1.0;
  std::vector<Segment> segs;
  long k0 = static_cast<long>(std::ceil(std::log(lo) / std::log(q) - 1e-9));
  long k1 = static_cast<long>(std::floor(std::log(hi) / std::log(q) + 1e-9));
  for (long k = k0; k <= k1; ++k) segs.push_back(Segment::point(std::pow(q, static_cast<double>(k))));
  return create(std::move(segs));
}

namespace {

// Clip [a,b] to [lo,hi] and append (as a point when it degenerates).
void push_clipped(std::vector<Segment>& segs, double a, double b, double lo, double hi) {
  double ca = std::max(a, lo), cb = std::min(b, hi);
  if (ca > cb) return;
  if (ca == cb)
    segs.push_back(Segment::point(ca));
  else
    segs.push_back(Segment::interval(ca, cb));
}

}  // namespace

std::shared_ptr<const TimeScale> TimeScale::p11(double lo, double hi) {
  std::vector<Segment> segs;
  long k0 = static_cast<long>(std::floor(lo / 2.0)) - 1;
  long k1 = static_cast<long>(std::ceil(hi / 2.0)) + 1;
  for (long k = k0; k <= k1; ++k)
    push_clipped(segs, 2.0 * static_cast<double>(k), 2.0 * static_cast<double>(k) + 1.0, lo, hi);
  return create(std::move(segs));
}

std::shared_ptr<const TimeScale> TimeScale::sinhcosh(double lo, double hi) {
  std::vector<Segment> segs;
  for (int n = 1; std::sinh(static_cast<double>(n)) <= hi; ++n)
    push_clipped(segs, std::sinh(static_cast<double>(n)), std::cosh(static_cast<double>(n)), lo, hi);
  return create(std::move(segs));
}

std::shared_ptr<const TimeScale> TimeScale::z_mod3(double lo, double hi) {
  std::vector<Segment> segs;
  long k0 = static_cast<long>(std::ceil(lo - 1e-12));
  long k1 = static_cast<long>(std::floor(hi + 1e-12));
  for (long k = k0; k <= k1; ++k)
    if (k % 3 != 0) segs.push_back(Segment::point(static_cast<double>(k)));
  return create(std::move(segs));
}

// ---------------------------------------------------------------------------
// Description parser
// ---------------------------------------------------------------------------

TimeScalePtr parse_time_scale(const std::string& text, double membership_tol) {
  std::vector<Segment> segs;
  std::string line;
  std::string normalized = text;
  std::replace(normalized.begin(), normalized.end(), ';', '\n');
  std::istringstream lines(normalized);
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream tok(line);
    std::string word;
    if (!(tok >> word)) continue;

    auto fail = [&](const std::string& msg) -> Error {
      return Error(ErrorCode::BadConfig,
                   "scale description line " + std::to_string(lineno) + ": " + msg);
    };

    if (word == "interval") {
      double a, b;
      if (!(tok >> a >> b)) throw fail("expected: interval a b");
      segs.push_back(Segment::interval(a, b));
    } else if (word == "point") {
      double p;
      if (!(tok >> p)) throw fail("expected: point p");
      segs.push_back(Segment::point(p));
    } else if (word == "generator") {
      std::string name;
      if (!(tok >> name)) throw fail("expected generator name");
      std::vector<std::string> rest;
      while (tok >> word) rest.push_back(word);
      double from = 0.0, upto = 0.0;
      bool have_from = false, have_upto = false;
      std::vector<double> params;
      for (std::size_t i = 0; i < rest.size(); ++i) {
        if (rest[i] == "from" || rest[i] == "upto") {
          if (i + 1 >= rest.size()) throw fail("missing value after '" + rest[i] + "'");
          double v = 0.0;
          try {
            v = std::stod(rest[i + 1]);
          } catch (...) {
            throw fail("bad number '" + rest[i + 1] + "'");
          }
          (rest[i] == "from" ? from : upto) = v;
          (rest[i] == "from" ? have_from : have_upto) = true;
          ++i;
        } else {
          try {
            params.push_back(std::stod(rest[i]));
          } catch (...) {
            throw fail("bad generator parameter '" + rest[i] + "'");
          }
        }
      }
      if (!have_upto) throw fail("generator needs 'upto T'");
      TimeScalePtr sub;
      if (name == "reals") {
        sub = TimeScale::reals(have_from ? from : 0.0, upto);
      } else if (name == "integers") {
        sub = TimeScale::integers(have_from ? from : 0.0, upto);
      } else if (name == "h_integers") {
        if (params.size() != 1) throw fail("h_integers needs one parameter h");
        sub = TimeScale::h_integers(params[0], have_from ? from : 0.0, upto);
      } else if (name == "q_scale") {
        if (params.size() != 1) throw fail("q_scale needs one parameter q");
        sub = TimeScale::q_scale(params[0], have_from ? from : 1.0, upto);
      } else if (name == "p11") {
        sub = TimeScale::p11(have_from ? from : 0.0, upto);
      } else if (name == "sinhcosh") {
        sub = TimeScale::sinhcosh(have_from ? from : 0.0, upto);
      } else if (name == "z_mod3") {
        sub = TimeScale::z_mod3(have_from ? from : 0.0, upto);
      } else {
        throw fail("unknown generator '" + name + "'");
      }
      for (const Segment& s : sub->segments()) segs.push_back(s);
    } else {
      throw fail("unknown directive '" + word + "'");
    }
  }
  return TimeScale::create(std::move(segs), membership_tol);
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

std::shared_ptr<const Grid> Grid::build(TimeScalePtr ts, double h_max,
                                        const std::vector<double>& anchors) {
  if (h_max <= 0.0) throw Error(ErrorCode::BadConfig, "h_max must be positive");
  if (!ts || ts->segments().empty())
    throw Error(ErrorCode::DegenerateScale, "grid over an empty scale");
  auto grid = std::shared_ptr<Grid>(new Grid());
  grid->ts_ = ts;
  grid->h_max_ = h_max;
  double tol = ts->membership_tol();

  auto subdivide = [&](double a, double b) {
    double len = b - a;
    // Even subdivision count keeps the midpoint an exact node.
    std::size_t m = 2 * std::max<std::size_t>(
                            1, static_cast<std::size_t>(std::ceil(len / (2.0 * h_max) - 1e-12)));
    for (std::size_t j = 0; j < m; ++j)
      grid->points_.push_back(
          {a + len * (static_cast<double>(j) / static_cast<double>(m)), PointKind::dense});
  };

  const auto& segs = ts->segments();
  for (std::size_t si = 0; si < segs.size(); ++si) {
    const Segment& s = segs[si];
    bool last = (si + 1 == segs.size());
    if (s.is_point()) {
      grid->points_.push_back({s.a, last ? PointKind::dense : PointKind::scattered});
      continue;
    }
    std::vector<double> cuts;
    for (double a : anchors)
      if (a > s.a + tol && a < s.b - tol) cuts.push_back(a);
    std::sort(cuts.begin(), cuts.end());
    double left = s.a;
    for (double c : cuts) {
      subdivide(left, c);
      left = c;
    }
    subdivide(left, s.b);
    grid->points_.push_back({s.b, last ? PointKind::dense : PointKind::scattered});
  }
  return grid;
}

double Grid::mu_at(std::size_t i) const {
  if (!scattered(i)) return 0.0;
  return points_[i + 1].t - points_[i].t;
}

int Grid::index_of(double t) const {
  double tol = ts_->membership_tol();
  auto it = std::lower_bound(points_.begin(), points_.end(), t - tol,
                             [](const Point& p, double v) { return p.t < v; });
  if (it != points_.end() && std::abs(it->t - t) <= tol)
    return static_cast<int>(it - points_.begin());
  return -1;
}

std::size_t Grid::index_le(double t) const {
  double tol = ts_->membership_tol();
  auto it = std::upper_bound(points_.begin(), points_.end(), t + tol,
                             [](double v, const Point& p) { return v < p.t; });
  if (it == points_.begin())
    throw Error(ErrorCode::NotInScale, "no grid node at or below " + num(t));
  return static_cast<std::size_t>(it - points_.begin()) - 1;
}

std::size_t Grid::index_ge(double t) const {
  double tol = ts_->membership_tol();
  auto it = std::lower_bound(points_.begin(), points_.end(), t - tol,
                             [](const Point& p, double v) { return p.t < v; });
  if (it == points_.end())
    throw Error(ErrorCode::HorizonExceeded, "no grid node at or above " + num(t));
  return static_cast<std::size_t>(it - points_.begin());
}

bool Grid::dense_link(std::size_t i) const {
  return i + 1 < points_.size() && points_[i].kind == PointKind::dense;
}

GridPtr build_grid(TimeScalePtr ts, double h_max, const std::vector<double>& anchors) {
  return Grid::build(std::move(ts), h_max, anchors);
}

// ---------------------------------------------------------------------------
// GridFunction
// ---------------------------------------------------------------------------

GridFunction::GridFunction(GridPtr grid, std::vector<double> values, Interp interp)
    : grid_(std::move(grid)), values_(std::move(values)), interp_(interp) {
  if (values_.size() != grid_->size())
    throw Error(ErrorCode::BadConfig, "grid function size mismatch");
  if (interp_ == Interp::cubic_hermite) ensure_derivs();
}

GridFunction::GridFunction(GridPtr grid, std::vector<double> values,
                           std::vector<double> derivs, Interp interp)
    : grid_(std::move(grid)),
      values_(std::move(values)),
      derivs_(std::move(derivs)),
      interp_(interp) {
  if (values_.size() != grid_->size() || derivs_.size() != values_.size())
    throw Error(ErrorCode::BadConfig, "grid function size mismatch");
}

GridFunction::GridFunction(GridPtr grid, std::vector<double> values,
                           std::vector<double> derivs_right, std::vector<double> derivs_left,
                           Interp interp)
    : grid_(std::move(grid)),
      values_(std::move(values)),
      derivs_(std::move(derivs_right)),
      derivs_left_(std::move(derivs_left)),
      interp_(interp) {
  if (values_.size() != grid_->size() || derivs_.size() != values_.size() ||
      derivs_left_.size() != values_.size())
    throw Error(ErrorCode::BadConfig, "grid function size mismatch");
}

GridFunction GridFunction::sample(GridPtr grid, const std::function<double(double)>& f,
                                  Interp interp) {
  std::vector<double> vals(grid->size());
  for (std::size_t i = 0; i < grid->size(); ++i) vals[i] = f(grid->t(i));
  return GridFunction(std::move(grid), std::move(vals), interp);
}

GridFunction GridFunction::constant(GridPtr grid, double c) {
  std::vector<double> vals(grid->size(), c);
  std::vector<double> der(grid->size(), 0.0);
  return GridFunction(std::move(grid), std::move(vals), std::move(der));
}

void GridFunction::ensure_derivs() {
  // Finite-difference nodal derivatives per dense run; second-order one-sided
  // at run edges. Scattered nodes get 0 (never used by interpolation).
  const Grid& g = *grid_;
  derivs_.assign(values_.size(), 0.0);
  std::size_t n = g.size();
  std::size_t run_start = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool run_ends = !g.dense_link(i);
    if (run_ends) {
      std::size_t lo = run_start, hi = i;  // nodes lo..hi share one dense run
      if (hi > lo) {
        for (std::size_t j = lo; j <= hi; ++j) {
          if (j > lo && j < hi) {
            double h0 = g.t(j) - g.t(j - 1), h1 = g.t(j + 1) - g.t(j);
            derivs_[j] = (values_[j + 1] - values_[j - 1]) / (h0 + h1);
          } else if (j == lo) {
            if (hi - lo >= 2) {
              double h = g.t(lo + 1) - g.t(lo);
              derivs_[j] = (-3.0 * values_[lo] + 4.0 * values_[lo + 1] - values_[lo + 2]) / (2.0 * h);
            } else {
              derivs_[j] = (values_[lo + 1] - values_[lo]) / (g.t(lo + 1) - g.t(lo));
            }
          } else {  // j == hi
            if (hi - lo >= 2) {
              double h = g.t(hi) - g.t(hi - 1);
              derivs_[j] = (3.0 * values_[hi] - 4.0 * values_[hi - 1] + values_[hi - 2]) / (2.0 * h);
            } else {
              derivs_[j] = (values_[hi] - values_[hi - 1]) / (g.t(hi) - g.t(hi - 1));
            }
          }
        }
      }
      run_start = i + 1;
    }
  }
}

double GridFunction::value_at(double t) const {
  const Grid& g = *grid_;
  int exact = g.index_of(t);
  if (exact >= 0) return values_[static_cast<std::size_t>(exact)];
  std::size_t i = g.index_le(t);
  if (i + 1 >= g.size() || !g.dense_link(i))
    throw Error(ErrorCode::NotInScale,
                "query at " + num(t) + " falls in a scattered gap or outside the grid");
  double t0 = g.t(i), t1 = g.t(i + 1), h = t1 - t0;
  double u = (t - t0) / h;
  if (interp_ == Interp::linear)
    return values_[i] * (1.0 - u) + values_[i + 1] * u;
  double f0 = values_[i], f1 = values_[i + 1];
  double d0 = derivs_[i] * h, d1 = left_slope(i + 1) * h;
  double u2 = u * u, u3 = u2 * u;
  return (2.0 * u3 - 3.0 * u2 + 1.0) * f0 + (u3 - 2.0 * u2 + u) * d0 +
         (-2.0 * u3 + 3.0 * u2) * f1 + (u3 - u2) * d1;
}

double GridFunction::cell_integral(std::size_t i, double x0, double x1) const {
  const Grid& g = *grid_;
  double t0 = g.t(i), t1 = g.t(i + 1), h = t1 - t0;
  double u0 = (x0 - t0) / h, u1 = (x1 - t0) / h;
  double f0 = values_[i], f1 = values_[i + 1];
  if (interp_ == Interp::linear) {
    auto F = [&](double u) { return h * (f0 * u + 0.5 * (f1 - f0) * u * u); };
    return F(u1) - F(u0);
  }
  // Cubic coefficients of p(u) = a + b u + c u^2 + d u^3 on [0,1].
  double d0 = derivs_[i] * h, d1 = left_slope(i + 1) * h;
  double a = f0;
  double b = d0;
  double c = 3.0 * (f1 - f0) - 2.0 * d0 - d1;
  double d = 2.0 * (f0 - f1) + d0 + d1;
  auto F = [&](double u) {
    return h * (a * u + b * u * u / 2.0 + c * u * u * u / 3.0 + d * u * u * u * u / 4.0);
  };
  return F(u1) - F(u0);
}

// ---------------------------------------------------------------------------
// Delta integral
// ---------------------------------------------------------------------------

double delta_integral_nodes(const GridFunction& f, std::size_t i0, std::size_t i1) {
  const Grid& g = *f.grid();
  if (i1 < i0) throw Error(ErrorCode::ReversedBounds, "integral bounds reversed");
  double acc = 0.0;
  for (std::size_t i = i0; i < i1; ++i) {
    if (g.scattered(i))
      acc += g.mu_at(i) * f.values()[i];
    else
      acc += f.cell_integral(i, g.t(i), g.t(i + 1));
  }
  return acc;
}

double delta_integral(const TimeScale& ts, const GridFunction& f, double s, double t) {
  if (t < s - ts.membership_tol())
    throw Error(ErrorCode::ReversedBounds,
                "integral bounds reversed: s = " + num(s) + ", t = " + num(t));
  if (!ts.contains(s))
    throw Error(ErrorCode::NotInScale, "integral bound s = " + num(s) + " not in the scale");
  if (!ts.contains(t))
    throw Error(ErrorCode::NotInScale, "integral bound t = " + num(t) + " not in the scale");
  const Grid& g = *f.grid();
  s = ts.snap(s);
  t = ts.snap(t);
  if (t <= s) return 0.0;

  std::size_t ia = g.index_le(s);
  std::size_t ib = g.index_le(t);
  double acc = 0.0;
  // Partial cell on the left when s is strictly inside [t_ia, t_{ia+1}).
  if (g.index_of(s) < 0) {
    if (!g.dense_link(ia))
      throw Error(ErrorCode::NotInScale, "integral bound " + num(s) + " inside a gap");
    double right = std::min(g.t(ia + 1), t);
    if (ib == ia)  // both bounds inside the same cell
      return f.cell_integral(ia, s, t);
    acc += f.cell_integral(ia, s, right);
    ia += 1;
  }
  // Full nodes in [ia, ib).
  acc += delta_integral_nodes(f, ia, ib);
  // Partial cell on the right when t is strictly inside [t_ib, t_{ib+1}).
  if (g.index_of(t) < 0) {
    if (!g.dense_link(ib))
      throw Error(ErrorCode::NotInScale, "integral bound " + num(t) + " inside a gap");
    acc += f.cell_integral(ib, g.t(ib), t);
  }
  return acc;
}

}  // namespace tsdde
