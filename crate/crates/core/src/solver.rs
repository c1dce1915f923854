//! Jungck iteration `h_n = f(v_n) = K(v_{n+1})` and its uniqueness probe.

use rayon::prelude::*;
use serde::Serialize;

use crate::convergence::{certify_geometric_rate, OrbitTrace, RateCertificate};
use crate::error::{Error, InversionFailure, Result};
use crate::expr::MapSpec;
use crate::lattice::LatticeElement;
use crate::problem::{ProblemSpec, TheoremMode};
use crate::report::extended_float;
use crate::smetric::SMetricSpec;
use crate::space::{CarrierBox, Point};

/// Allowed `‖K(K⁻¹(y)) − y‖∞` for a user-supplied inverse, per unit of `max(1, ‖y‖∞)`.
pub const ANALYTIC_INVERSE_TOL: f64 = 1e-12;
/// Allowed residual of a bisection root, per unit of `max(1, |y|)`.
pub const BISECTION_INVERSE_TOL: f64 = 1e-10;
pub const BISECTION_ITERS: usize = 200;
pub const SCAN_INTERVALS: usize = 64;

/// Computes preimages under a forward map inside the carrier.
///
/// With an explicit inverse the result is verified against the forward map.
/// Without one (only when `d = 1`) the carrier is scanned on
/// [`SCAN_INTERVALS`] subintervals and the leftmost bracketed root is bisected.
#[derive(Debug, Clone)]
pub struct Inverter<'a> {
    forward: MapSpec,
    inverse: Option<MapSpec>,
    carrier: &'a CarrierBox,
}

impl<'a> Inverter<'a> {
    pub fn new(forward: MapSpec, inverse: Option<MapSpec>, carrier: &'a CarrierBox) -> Result<Self> {
        if inverse.is_none() && carrier.dim() != 1 {
            return Err(Error::Problem(format!(
                "an explicit inverse is required when the carrier dimension is {}",
                carrier.dim()
            )));
        }
        Ok(Self {
            forward,
            inverse,
            carrier,
        })
    }

    /// Inverter for `K`.
    pub fn for_k(problem: &'a ProblemSpec) -> Result<Self> {
        Self::new(problem.k().clone(), problem.k_inverse().cloned(), problem.carrier())
    }

    /// Inverter for `K∘K`, built from `K⁻¹∘K⁻¹` when an inverse is given.
    pub fn for_k_squared(problem: &'a ProblemSpec) -> Result<Self> {
        let kk = problem.k().compose(problem.k())?;
        let inv = problem.k_inverse().map(|i| i.compose(i)).transpose()?;
        Self::new(kk, inv, problem.carrier())
    }

    /// A point `y` in the carrier with `forward(y) ≈ target`.
    pub fn invert(&self, target: &Point, source: &Point) -> Result<Point> {
        target.check_dim(self.carrier.dim())?;
        let fail = |reason: String| {
            Error::Inversion(InversionFailure {
                source_point: source.clone(),
                target: target.clone(),
                reason,
            })
        };
        let scale = target.norm_inf().max(1.0);
        let y = match &self.inverse {
            Some(inv) => {
                let y = inv.eval(target)?;
                let err = self.forward.eval(&y)?.distance_inf(target);
                if err.is_nan() || err > ANALYTIC_INVERSE_TOL * scale {
                    return Err(fail(format!("supplied inverse misses the target by {err:e}")));
                }
                y
            }
            None => self.bisect(target.0[0], scale).map_err(|e| match e {
                Error::InvalidArgument(reason) => fail(reason),
                other => other,
            })?,
        };
        let slack = ANALYTIC_INVERSE_TOL * y.norm_inf().max(1.0);
        if !self.carrier.contains_within(&y, slack) {
            return Err(fail(format!("preimage {y} lies outside the carrier")));
        }
        Ok(self.carrier.clamp(&y))
    }

    fn residual(&self, y: f64, t: f64) -> Result<f64> {
        Ok(self.forward.eval(&Point::scalar(y))?.0[0] - t)
    }

    fn bisect(&self, t: f64, scale: f64) -> Result<Point> {
        let (lo, hi) = (self.carrier.lower[0], self.carrier.upper[0]);
        let tol = BISECTION_INVERSE_TOL * scale;
        let grid: Vec<f64> = (0..=SCAN_INTERVALS)
            .map(|j| if j == SCAN_INTERVALS { hi } else { lo + (hi - lo) * j as f64 / SCAN_INTERVALS as f64 })
            .collect();
        let values = grid.iter().map(|&y| self.residual(y, t)).collect::<Result<Vec<_>>>()?;
        for j in 0..grid.len() {
            if values[j] == 0.0 {
                return Ok(Point::scalar(grid[j]));
            }
            if j + 1 < grid.len() && values[j].signum() != values[j + 1].signum() && values[j + 1] != 0.0 {
                let (mut a, mut b, mut ga) = (grid[j], grid[j + 1], values[j]);
                let mut gb = values[j + 1];
                for _ in 0..BISECTION_ITERS {
                    let mid = a + (b - a) / 2.0;
                    if mid <= a || mid >= b {
                        break;
                    }
                    let gm = self.residual(mid, t)?;
                    if gm == 0.0 {
                        return Ok(Point::scalar(mid));
                    }
                    if gm.signum() == ga.signum() {
                        a = mid;
                        ga = gm;
                    } else {
                        b = mid;
                        gb = gm;
                    }
                }
                let (y, g) = if ga.abs() <= gb.abs() { (a, ga) } else { (b, gb) };
                if g.abs() <= tol {
                    return Ok(Point::scalar(y));
                }
                return Err(Error::InvalidArgument(format!(
                    "bracket [{a}, {b}] closes on a jump, not a root (residual {g:e})"
                )));
            }
        }
        let (j, g) = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(j, g)| (j, *g))
            .expect("grid is non-empty");
        if g.abs() <= tol {
            return Ok(Point::scalar(grid[j]));
        }
        Err(Error::InvalidArgument(format!(
            "forward map minus target has no sign change on {SCAN_INTERVALS} subintervals of [{lo}, {hi}]"
        )))
    }
}

/// One Jungck step from `v`: returns `(next_v, h)` with `h = f(v) ≈ K(next_v)`.
pub fn jungck_step(problem: &ProblemSpec, v: &Point) -> Result<(Point, Point)> {
    step_with(problem, &Inverter::for_k(problem)?, v)
}

fn step_with(problem: &ProblemSpec, inverter: &Inverter<'_>, v: &Point) -> Result<(Point, Point)> {
    v.check_dim(problem.dim())?;
    if !problem.carrier().contains(v) {
        return Err(Error::InvalidArgument(format!("{v} lies outside the carrier")));
    }
    let h = problem.f().eval(v)?;
    let next = inverter.invert(&h, v)?;
    Ok((next, h))
}

/// `(S(fx, fx, x), S(Kx, Kx, x))`.
pub fn residuals(problem: &ProblemSpec, x: &Point) -> Result<(LatticeElement, LatticeElement)> {
    x.check_dim(problem.dim())?;
    let s = problem.metric();
    let fx = problem.f().eval(x)?;
    let kx = problem.k().eval(x)?;
    Ok((s.dist(&fx, x)?, s.dist(&kx, x)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub tol: f64,
    /// Attach a [`RateCertificate`] at this rate when the trace has at least 3 points.
    pub certify_alpha: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-9,
            certify_alpha: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The latest step value fell below `tol` in every coordinate.
    StepBelowTol,
    /// Both residuals at the current candidate are within `tol`.
    ResidualsBelowTol,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub mode: TheoremMode,
    pub x0: Point,
    pub tol: f64,
    pub max_iters: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub fixed_point: Point,
    pub residual_f: LatticeElement,
    #[serde(rename = "residual_K")]
    pub residual_k: LatticeElement,
    pub iterations: usize,
    #[serde(with = "extended_float")]
    pub observed_sigma: f64,
    pub trace: OrbitTrace,
    pub certificate: Option<RateCertificate>,
}

fn candidate(problem: &ProblemSpec, tracked: &Point) -> Result<Point> {
    match problem.mode() {
        TheoremMode::Thm24 => problem.f().eval(&problem.k().eval(tracked)?),
        _ => Ok(tracked.clone()),
    }
}

fn within(e: &LatticeElement, tol: f64) -> bool {
    e.norm_inf() <= tol
}

/// Iterates [`jungck_step`] from `x0`.
///
/// The trace records `h_n` (or `p_n = f(h_n)` in thm24 mode, starting from
/// `K(x0)`). Iteration stops once a step value is below `tol` or the
/// residuals at the current candidate are; `converged` requires the latter.
pub fn solve(problem: &ProblemSpec, x0: &Point, opts: &SolveOptions) -> Result<SolveReport> {
    if opts.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    if !(opts.tol >= 0.0 && opts.tol.is_finite()) {
        return Err(Error::InvalidArgument(format!("tol must be finite and non-negative, got {}", opts.tol)));
    }
    x0.check_dim(problem.dim())?;
    if !problem.carrier().contains(x0) {
        return Err(Error::InvalidArgument(format!("x0 = {x0} lies outside the carrier")));
    }
    let inverter = Inverter::for_k(problem)?;
    let metric = problem.metric();
    let mut v = match problem.mode() {
        TheoremMode::Thm24 => {
            let kx = problem.k().eval(x0)?;
            if !problem.carrier().contains_within(&kx, ANALYTIC_INVERSE_TOL) {
                return Err(Error::InvalidArgument(format!("K(x0) = {kx} lies outside the carrier")));
            }
            problem.carrier().clamp(&kx)
        }
        _ => x0.clone(),
    };

    let mut trace = OrbitTrace::empty();
    let mut iterations = 0;
    let mut stop_reason = StopReason::MaxIters;
    let mut cand = v.clone();
    let mut res = residuals(problem, &cand)?;
    for i in 0..opts.max_iters {
        let (next, h) = step_with(problem, &inverter, &v).map_err(|e| e.at_iteration(i))?;
        iterations = i + 1;
        let tracked = match problem.mode() {
            TheoremMode::Thm24 => problem.f().eval(&h).map_err(|e| e.at_iteration(i))?,
            _ => h,
        };
        let small_step = trace
            .push(tracked.clone(), metric)?
            .is_some_and(|s| s.max_coord() < opts.tol);
        cand = candidate(problem, &tracked).map_err(|e| e.at_iteration(i))?;
        res = residuals(problem, &cand).map_err(|e| e.at_iteration(i))?;
        if within(&res.0, opts.tol) && within(&res.1, opts.tol) {
            stop_reason = StopReason::ResidualsBelowTol;
            break;
        }
        if small_step {
            stop_reason = StopReason::StepBelowTol;
            break;
        }
        v = next;
    }

    let certificate = match opts.certify_alpha {
        Some(alpha) if trace.len() >= 3 => Some(certify_geometric_rate(&trace, alpha, metric)?),
        _ => None,
    };
    let converged = within(&res.0, opts.tol) && within(&res.1, opts.tol);
    Ok(SolveReport {
        mode: problem.mode(),
        x0: x0.clone(),
        tol: opts.tol,
        max_iters: opts.max_iters,
        converged,
        stop_reason,
        fixed_point: cand,
        residual_f: res.0,
        residual_k: res.1,
        iterations,
        observed_sigma: trace.observed_sigma(),
        trace,
        certificate,
    })
}

/// Outcome of one start inside [`multi_start`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartOutcome {
    pub index: usize,
    pub start: Point,
    pub converged: bool,
    pub fixed_point: Option<Point>,
    pub iterations: usize,
    pub error: Option<String>,
    pub inversion_failure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cluster {
    pub representative: Point,
    /// Start indices whose fixed points joined this cluster.
    pub members: Vec<usize>,
    /// Largest `‖S(a, a, b)‖∞` between member fixed points.
    pub diameter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub starts: usize,
    pub converged: usize,
    pub cluster_radius: f64,
    pub cluster_count: usize,
    pub clusters: Vec<Cluster>,
    pub max_diameter: f64,
    /// Starts that did not converge, with the reason.
    pub failures: Vec<StartOutcome>,
}

/// Solves from every start and clusters the converged fixed points.
///
/// A fixed point joins the first cluster whose representative lies within
/// `cluster_radius` (in `‖S(rep, rep, p)‖∞`); otherwise it starts a new one.
pub fn multi_start(
    problem: &ProblemSpec,
    starts: &[Point],
    opts: &SolveOptions,
    cluster_radius: f64,
) -> Result<UniquenessReport> {
    if starts.is_empty() {
        return Err(Error::InvalidArgument("at least one start is required".into()));
    }
    if cluster_radius.is_nan() || cluster_radius < 0.0 {
        return Err(Error::InvalidArgument(format!("cluster_radius must be non-negative, got {cluster_radius}")));
    }
    let outcomes: Vec<StartOutcome> = starts
        .par_iter()
        .enumerate()
        .map(|(index, start)| match solve(problem, start, opts) {
            Ok(r) => StartOutcome {
                index,
                start: start.clone(),
                converged: r.converged,
                fixed_point: Some(r.fixed_point),
                iterations: r.iterations,
                error: (!r.converged).then(|| "did not converge".to_string()),
                inversion_failure: false,
            },
            Err(e) => StartOutcome {
                index,
                start: start.clone(),
                converged: false,
                fixed_point: None,
                iterations: 0,
                inversion_failure: e.is_inversion_failure(),
                error: Some(e.to_string()),
            },
        })
        .collect();

    let metric = problem.metric();
    let mut clusters: Vec<(Cluster, Vec<Point>)> = Vec::new();
    for o in outcomes.iter().filter(|o| o.converged) {
        let p = o.fixed_point.as_ref().expect("converged starts carry a fixed point");
        let mut joined = false;
        for (c, members) in clusters.iter_mut() {
            if s_dist(metric, &c.representative, p)? <= cluster_radius {
                for m in members.iter() {
                    c.diameter = c.diameter.max(s_dist(metric, m, p)?);
                }
                c.members.push(o.index);
                members.push(p.clone());
                joined = true;
                break;
            }
        }
        if !joined {
            clusters.push((
                Cluster {
                    representative: p.clone(),
                    members: vec![o.index],
                    diameter: 0.0,
                },
                vec![p.clone()],
            ));
        }
    }
    let clusters: Vec<Cluster> = clusters.into_iter().map(|(c, _)| c).collect();
    let converged = outcomes.iter().filter(|o| o.converged).count();
    Ok(UniquenessReport {
        starts: starts.len(),
        converged,
        cluster_radius,
        cluster_count: clusters.len(),
        max_diameter: clusters.iter().map(|c| c.diameter).fold(0.0, f64::max),
        clusters,
        failures: outcomes.into_iter().filter(|o| !o.converged).collect(),
    })
}

/// `max(‖S(a, a, b)‖∞, ‖S(b, b, a)‖∞)`, symmetric even for custom metrics.
fn s_dist(metric: &SMetricSpec, a: &Point, b: &Point) -> Result<f64> {
    Ok(metric.dist(a, b)?.norm_inf().max(metric.dist(b, a)?.norm_inf()))
}
