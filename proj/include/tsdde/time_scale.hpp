#ifndef TSDDE_TIME_SCALE_HPP
#define TSDDE_TIME_SCALE_HPP

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tsdde/errors.hpp"

namespace tsdde {

/// A segment of a time scale: either a closed interval [a,b] with a<b, or a
/// single isolated point.
struct Segment {
  double a = 0.0;
  double b = 0.0;

  bool is_point() const { return a == b; }

  static Segment interval(double a, double b) { return Segment{a, b}; }
  static Segment point(double p) { return Segment{p, p}; }
};

/// A finite-horizon time scale: an ordered list of pairwise disjoint segments.
/// The horizon end t_max stands in for "unbounded above"; every supremum or
/// limit computed against this scale is certified on [t_min, t_max] only.
///
/// Immutable after construction; all queries are pure and thread-safe.
class TimeScale {
 public:
  static std::shared_ptr<const TimeScale> create(std::vector<Segment> segments,
                                                 double membership_tol = 1e-9);

  const std::vector<Segment>& segments() const { return segments_; }
  double t_min() const { return t_min_; }
  double t_max() const { return t_max_; }
  double membership_tol() const { return membership_tol_; }

  bool contains(double t) const;

  /// Forward jump: inf of scale points strictly above t; t itself at
  /// right-dense points. Throws HorizonExceeded at t_max.
  double sigma(double t) const;

  /// Backward jump: sup of scale points strictly below t; t itself at
  /// left-dense points. Throws HorizonExceeded at t_min.
  double rho(double t) const;

  /// Graininess sigma(t) - t.
  double mu(double t) const;

  bool is_right_scattered(double t) const;

  /// Largest scale point <= x, or throws NotInScale if x < t_min - tol.
  double project_down(double x) const;

  /// Snaps t to an exact segment boundary / isolated point when it is within
  /// membership_tol of one; returns t unchanged for interior dense points.
  double snap(double t) const;

  // ---- common scales ----
  static std::shared_ptr<const TimeScale> reals(double a, double b);
  static std::shared_ptr<const TimeScale> integers(double lo, double hi);
  static std::shared_ptr<const TimeScale> h_integers(double h, double lo, double hi);
  static std::shared_ptr<const TimeScale> q_scale(double q, double lo, double hi);
  /// P_{1,1} = union of [2k, 2k+1] clipped to [lo, hi].
  static std::shared_ptr<const TimeScale> p11(double lo, double hi);
  /// union of [sinh n, cosh n], n >= 1, clipped to [lo, hi].
  static std::shared_ptr<const TimeScale> sinhcosh(double lo, double hi);
  /// Z \ 3Z: integers not divisible by 3, clipped to [lo, hi].
  static std::shared_ptr<const TimeScale> z_mod3(double lo, double hi);

 private:
  TimeScale() = default;

  // Index of the segment containing t (within tol), or -1.
  int find_segment(double t) const;

  std::vector<Segment> segments_;
  double t_min_ = 0.0;
  double t_max_ = 0.0;
  double membership_tol_ = 1e-9;
};

using TimeScalePtr = std::shared_ptr<const TimeScale>;

/// Parse a time-scale description. One directive per line (';' also accepted
/// as a line separator), '#' starts a comment. Directives:
///   interval a b
///   point p
///   generator <name> [<params>] [from L] upto T
/// with generator names: reals, integers, h_integers h, q_scale q, p11,
/// sinhcosh, z_mod3.
TimeScalePtr parse_time_scale(const std::string& text, double membership_tol = 1e-9);

enum class PointKind { scattered, dense };

/// Evaluation grid over a time scale: all right-scattered points plus a
/// uniform subdivision (step <= h_max) of each dense interval. Subdivision
/// counts are even so interval midpoints are exact grid nodes. Anchors
/// strictly inside a dense interval split it so they become exact nodes
/// (the solvers require the start point on the grid).
class Grid {
 public:
  struct Point {
    double t;
    PointKind kind;
  };

  static std::shared_ptr<const Grid> build(TimeScalePtr ts, double h_max,
                                           const std::vector<double>& anchors = {});

  const std::vector<Point>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  double t(std::size_t i) const { return points_[i].t; }
  PointKind kind(std::size_t i) const { return points_[i].kind; }
  bool scattered(std::size_t i) const { return points_[i].kind == PointKind::scattered; }
  double h_max() const { return h_max_; }
  const TimeScalePtr& scale() const { return ts_; }

  /// mu at grid node i (0 for dense nodes, gap width for scattered ones).
  double mu_at(std::size_t i) const;

  /// Index of the grid node equal to t within tolerance; -1 if t is off-grid.
  int index_of(double t) const;
  /// Largest index with t(i) <= t + tol.
  std::size_t index_le(double t) const;
  /// Smallest index with t(i) >= t - tol.
  std::size_t index_ge(double t) const;

  /// True when nodes i and i+1 lie in the same dense interval of the scale.
  bool dense_link(std::size_t i) const;

 private:
  Grid() = default;
  TimeScalePtr ts_;
  std::vector<Point> points_;
  double h_max_ = 0.0;
};

using GridPtr = std::shared_ptr<const Grid>;

enum class Interp { linear, cubic_hermite };

/// A sampled rd-continuous function on a grid. Queries at grid nodes return
/// the stored value exactly; queries strictly inside a dense interval
/// interpolate; queries inside a scattered gap are a domain error.
class GridFunction {
 public:
  GridFunction() = default;
  GridFunction(GridPtr grid, std::vector<double> values,
               Interp interp = Interp::cubic_hermite);
  GridFunction(GridPtr grid, std::vector<double> values, std::vector<double> derivs,
               Interp interp = Interp::cubic_hermite);
  /// Two-sided nodal slopes: cell [t_i, t_{i+1}] interpolates with the
  /// right-limit slope at t_i and the left-limit slope at t_{i+1}. Solutions
  /// of delay equations have genuine one-sided kinks at breaking points.
  GridFunction(GridPtr grid, std::vector<double> values, std::vector<double> derivs_right,
               std::vector<double> derivs_left, Interp interp);

  static GridFunction sample(GridPtr grid, const std::function<double(double)>& f,
                             Interp interp = Interp::cubic_hermite);
  static GridFunction constant(GridPtr grid, double c);

  const GridPtr& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }
  const std::vector<double>& derivs() const { return derivs_; }
  Interp interp() const { return interp_; }
  bool empty() const { return values_.empty(); }

  double value_at(double t) const;
  double operator()(double t) const { return value_at(t); }

  /// Integral of the interpolant over [x0,x1], both inside the dense link
  /// starting at node i (t_i <= x0 <= x1 <= t_{i+1}).
  double cell_integral(std::size_t i, double x0, double x1) const;

 private:
  void ensure_derivs();
  double left_slope(std::size_t i) const {
    return derivs_left_.empty() ? derivs_[i] : derivs_left_[i];
  }

  GridPtr grid_;
  std::vector<double> values_;
  std::vector<double> derivs_;       // nodal slopes (right-limits when two-sided)
  std::vector<double> derivs_left_;  // optional left-limit slopes
  Interp interp_ = Interp::cubic_hermite;
};

/// Delta-integral of f over [s,t]: sum of mu(eta)*f(eta) over right-scattered
/// nodes eta in [s,t) plus quadrature of the interpolant over dense parts.
/// Bounds may be any scale points covered by f's grid.
double delta_integral(const TimeScale& ts, const GridFunction& f, double s, double t);

/// Same, with grid-index bounds (both ends at grid nodes). Faster path used
/// by the solvers.
double delta_integral_nodes(const GridFunction& f, std::size_t i0, std::size_t i1);

GridPtr build_grid(TimeScalePtr ts, double h_max, const std::vector<double>& anchors = {});

}  // namespace tsdde

#endif  // TSDDE_TIME_SCALE_HPP
