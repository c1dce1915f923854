//! Sampled checks of the hypotheses behind the common fixed point theorems.

use rayon::prelude::*;
use serde::Serialize;

use crate::convergence::contraction_ratio;
use crate::error::{Error, Result};
use crate::expr::MapSpec;
use crate::lattice::LatticeElement;
use crate::problem::{ProblemSpec, TheoremMode};
use crate::report::extended_float;
use crate::solver::Inverter;
use crate::space::{CarrierBox, Point, Sampler};

/// Contraction constants must lie below this for the theorems to apply.
pub const Q_THRESHOLD: f64 = 1.0 / 3.0;
/// Default step ladder for the continuity probe.
pub const DEFAULT_H_LADDER: [f64; 5] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
/// Moduli at or below this count as zero in the continuity probe.
pub const CONTINUITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommuteCheck {
    pub pass: bool,
    /// Largest `‖S(fKx, fKx, Kfx)‖∞` over the sample.
    pub max_deviation: f64,
    pub witness: Option<Point>,
    pub samples: usize,
    pub tol: f64,
}

/// Measures `fK = Kf` through `S(fKx, fKx, Kfx)` on `n` sampled points.
pub fn check_commutes(problem: &ProblemSpec, sampler: &dyn Sampler, n: usize, tol: f64) -> Result<CommuteCheck> {
    require_samples(n)?;
    let points = sampler.draw(n);
    let deviations = points
        .par_iter()
        .map(|x| {
            let fk = problem.f().eval(&problem.k().eval(x)?)?;
            let kf = problem.k().eval(&problem.f().eval(x)?)?;
            Ok(problem.metric().dist(&fk, &kf)?.norm_inf())
        })
        .collect::<Vec<Result<f64>>>();
    let mut max_deviation = 0.0;
    let mut worst = None;
    for (x, d) in points.iter().zip(deviations) {
        let d = d?;
        if worst.is_none() || d > max_deviation {
            max_deviation = d;
            worst = Some(x);
        }
    }
    let pass = max_deviation <= tol;
    Ok(CommuteCheck {
        pass,
        max_deviation,
        witness: if pass { None } else { worst.cloned() },
        samples: n,
        tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeCheck {
    pub pass: bool,
    /// `"f(R) ⊆ K(R)"` or `"fK(R) ⊆ K²(R)"`.
    pub relation: &'static str,
    /// First sampled point whose image could not be matched.
    pub witness: Option<Point>,
    pub target: Option<Point>,
    pub reason: Option<String>,
    /// Largest `‖forward(y) − target‖∞` over successful inversions.
    pub max_residual: f64,
    pub samples: usize,
    pub tol: f64,
}

/// Inverts `f(x)` under `K` (or `fK(x)` under `K²` in thm24 mode) for `n` sampled `x`.
pub fn check_range_containment(problem: &ProblemSpec, sampler: &dyn Sampler, n: usize, tol: f64) -> RangeCheck {
    let thm24 = problem.mode() == TheoremMode::Thm24;
    let relation = if thm24 { "fK(R) ⊆ K²(R)" } else { "f(R) ⊆ K(R)" };
    let mut report = RangeCheck {
        pass: true,
        relation,
        witness: None,
        target: None,
        reason: None,
        max_residual: 0.0,
        samples: n,
        tol,
    };
    let inverter = if thm24 { Inverter::for_k_squared(problem) } else { Inverter::for_k(problem) };
    let inverter = match inverter {
        Ok(i) => i,
        Err(e) => {
            report.pass = false;
            report.reason = Some(e.to_string());
            return report;
        }
    };
    let forward = if thm24 { problem.k().compose(problem.k()).ok() } else { Some(problem.k().clone()) };
    let points = sampler.draw(n);
    let outcomes: Vec<std::result::Result<f64, (Option<Point>, String)>> = points
        .par_iter()
        .map(|x| {
            let target = if thm24 { problem.k().eval(x).and_then(|k| problem.f().eval(&k)) } else { problem.f().eval(x) };
            let target = target.map_err(|e| (None, e.to_string()))?;
            let fail = |e: Error| (Some(target.clone()), e.to_string());
            let y = inverter.invert(&target, x).map_err(fail)?;
            let forward = forward.as_ref().expect("composition of self-maps succeeds");
            let err = forward.eval(&y).map_err(fail)?.distance_inf(&target);
            if err > tol {
                return Err((Some(target.clone()), format!("preimage {y} misses the target by {err:e}")));
            }
            Ok(err)
        })
        .collect();
    for (x, o) in points.iter().zip(outcomes) {
        match o {
            Ok(err) => report.max_residual = report.max_residual.max(err),
            Err((target, reason)) => {
                report.pass = false;
                report.witness = Some(x.clone());
                report.target = target;
                report.reason = Some(reason);
                break;
            }
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateQ {
    pub candidate: &'static str,
    /// Largest ratio against this candidate alone.
    #[serde(with = "extended_float")]
    pub q_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QEstimate {
    pub mode: TheoremMode,
    /// Largest per-pair minimum ratio: a lower bound on any valid `q`.
    #[serde(with = "extended_float")]
    pub q_hat: f64,
    pub argmax_pair: Option<(Point, Point)>,
    pub per_candidate: Vec<CandidateQ>,
    pub samples: usize,
    pub vertex_pairs: usize,
}

const U_KX_KY: &str = "S(Kx,Kx,Ky)";
const U_KX_FX: &str = "S(Kx,Kx,fx)";
const U_KY_FY: &str = "S(Ky,Ky,fy)";
const U_KX_FY: &str = "S(Kx,Kx,fy)";
const U_KY_FX: &str = "S(Ky,Ky,fx)";
const U_AVERAGED: &str = "(S(Kx,Kx,fy)+S(Ky,Ky,fx))/3";

/// Names of the comparison terms for `mode`, in evaluation order.
pub fn candidate_names(mode: TheoremMode) -> &'static [&'static str] {
    match mode {
        TheoremMode::Cor23 => &[U_KX_KY],
        TheoremMode::Thm22 => &[U_KX_KY, U_KX_FX, U_KY_FY, U_KX_FY, U_KY_FX],
        TheoremMode::Thm24 => &[U_KX_KY, U_KX_FX, U_KY_FY, U_AVERAGED],
    }
}

/// Ratios of `S(fx, fx, fy)` against each comparison term of the problem's mode.
pub fn pair_ratios(problem: &ProblemSpec, x: &Point, y: &Point) -> Result<Vec<f64>> {
    let s = problem.metric();
    let (fx, fy) = (problem.f().eval(x)?, problem.f().eval(y)?);
    let (kx, ky) = (problem.k().eval(x)?, problem.k().eval(y)?);
    let num = s.dist(&fx, &fy)?;
    let term = |name: &str| -> Result<LatticeElement> {
        match name {
            U_KX_KY => s.dist(&kx, &ky),
            U_KX_FX => s.dist(&kx, &fx),
            U_KY_FY => s.dist(&ky, &fy),
            U_KX_FY => s.dist(&kx, &fy),
            U_KY_FX => s.dist(&ky, &fx),
            _ => s.dist(&kx, &fy)?.try_add(&s.dist(&ky, &fx)?)?.scale(1.0 / 3.0),
        }
    };
    candidate_names(problem.mode())
        .iter()
        .map(|name| contraction_ratio(&num, &term(name)?))
        .collect()
}

/// Largest carrier dimension whose vertex pairs are added to the q sample.
pub const MAX_VERTEX_DIM: usize = 4;

/// Ordered pairs of distinct carrier vertices, for `d ≤ MAX_VERTEX_DIM`.
pub fn vertex_pairs(carrier: &CarrierBox) -> Vec<Point> {
    let d = carrier.dim();
    if d > MAX_VERTEX_DIM {
        return Vec::new();
    }
    let vertices: Vec<Point> = (0..1usize << d)
        .map(|mask| {
            Point((0..d).map(|i| if mask >> i & 1 == 1 { carrier.upper[i] } else { carrier.lower[i] }).collect())
        })
        .collect();
    let mut out = Vec::new();
    for a in &vertices {
        for b in &vertices {
            if a != b {
                out.push(a.clone());
                out.push(b.clone());
            }
        }
    }
    out
}

/// Estimates the contraction constant over `n` sampled pairs plus the
/// ordered pairs of carrier vertices.
///
/// Each pair's ratio is the minimum over the mode's comparison terms.
pub fn estimate_q(problem: &ProblemSpec, sampler: &dyn Sampler, n: usize) -> Result<QEstimate> {
    require_samples(n)?;
    let mut points = sampler.draw(2 * n);
    let vertex_points = vertex_pairs(problem.carrier());
    let vertex_count = vertex_points.len() / 2;
    points.extend(vertex_points);
    let ratios = points
        .par_chunks_exact(2)
        .map(|p| pair_ratios(problem, &p[0], &p[1]))
        .collect::<Vec<Result<Vec<f64>>>>();
    let names = candidate_names(problem.mode());
    let mut per = vec![0.0f64; names.len()];
    let mut q_hat = 0.0f64;
    let mut argmax = None;
    for (p, r) in points.chunks_exact(2).zip(ratios) {
        let r = r?;
        let q = r.iter().copied().fold(f64::INFINITY, f64::min);
        if argmax.is_none() || q > q_hat {
            q_hat = q;
            argmax = Some((p[0].clone(), p[1].clone()));
        }
        for (acc, v) in per.iter_mut().zip(&r) {
            *acc = acc.max(*v);
        }
    }
    Ok(QEstimate {
        mode: problem.mode(),
        q_hat,
        argmax_pair: argmax,
        per_candidate: names
            .iter()
            .zip(per)
            .map(|(candidate, q_hat)| CandidateQ { candidate, q_hat })
            .collect(),
        samples: n,
        vertex_pairs: vertex_count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusRung {
    pub h: f64,
    /// Largest `‖map(b) − map(a)‖∞` found with `‖b − a‖∞ ≤ h`.
    pub modulus: f64,
    pub witness: Option<(Point, Point)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuityReport {
    /// Always true: continuity cannot be decided from samples.
    pub advisory: bool,
    /// Whether every modulus is below the previous one (or both are ~0).
    pub advisory_pass: bool,
    pub modulus_table: Vec<ModulusRung>,
    pub samples: usize,
}

struct Probe {
    jump: f64,
    pair: (Point, Point),
}

fn jump(map: &MapSpec, a: &Point, b: &Point) -> Result<f64> {
    Ok(map.eval(a)?.distance_inf(&map.eval(b)?))
}

fn lerp(a: &Point, b: &Point, t: f64) -> Point {
    Point(a.0.iter().zip(&b.0).map(|(x, y)| x + (y - x) * t).collect())
}

/// Narrows the segment `[a, b]` toward its largest change and returns a
/// window of length `h` centred on it.
fn zoom(map: &MapSpec, carrier: &CarrierBox, a: &Point, b: &Point, h: f64) -> Result<Option<Probe>> {
    let len = a.distance_inf(b);
    if len == 0.0 {
        return Ok(None);
    }
    let (mut lo, mut hi) = (a.clone(), b.clone());
    while lo.distance_inf(&hi) > h / 4.0 {
        let mid = lerp(&lo, &hi, 0.5);
        if mid == lo || mid == hi {
            break;
        }
        if jump(map, &lo, &mid)? >= jump(map, &mid, &hi)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let centre = lerp(&lo, &hi, 0.5);
    // Unit step along the segment's direction, scaled to length h/2.
    let dir: Vec<f64> = a.0.iter().zip(&b.0).map(|(x, y)| (y - x) / len * h / 2.0).collect();
    let shift = |sign: f64| Point(centre.0.iter().zip(&dir).map(|(c, d)| c + sign * d).collect());
    let (mut start, mut end) = (shift(-1.0), shift(1.0));
    if !carrier.contains(&start) || !carrier.contains(&end) {
        start = carrier.clamp(&start);
        end = carrier.clamp(&end);
    }
    if start.distance_inf(&end) > h * (1.0 + 1e-12) {
        return Ok(None);
    }
    Ok(Some(Probe {
        jump: jump(map, &start, &end)?,
        pair: (start, end),
    }))
}

/// Estimates the modulus of continuity of `map` at each step of `h_ladder`.
///
/// Each rung probes `x ± h·e_i` from every sampled `x`, then zooms into the
/// previous rung's worst segment so that jumps narrower than the sampling
/// grid are still found.
pub fn check_continuity(
    map: &MapSpec,
    carrier: &CarrierBox,
    sampler: &dyn Sampler,
    n: usize,
    h_ladder: &[f64],
) -> Result<ContinuityReport> {
    require_samples(n)?;
    if h_ladder.is_empty()
        || h_ladder.iter().any(|h| !(h.is_finite() && *h > 0.0))
        || h_ladder.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::InvalidArgument("h_ladder must be strictly decreasing and positive".into()));
    }
    if map.in_dim() != carrier.dim() {
        return Err(Error::DimensionMismatch {
            expected: carrier.dim(),
            found: map.in_dim(),
        });
    }
    let base: Vec<Point> = sampler.draw(n).into_iter().filter(|x| carrier.contains(x)).collect();
    let mut table: Vec<ModulusRung> = Vec::with_capacity(h_ladder.len());
    let mut previous: Option<(Point, Point)> = None;
    for &h in h_ladder {
        let probes = base
            .par_iter()
            .map(|x| {
                let mut best: Option<Probe> = None;
                for axis in 0..carrier.dim() {
                    for sign in [1.0, -1.0] {
                        let y = x.offset(axis, sign * h);
                        if !carrier.contains(&y) {
                            continue;
                        }
                        let j = jump(map, x, &y)?;
                        if best.as_ref().is_none_or(|b| j > b.jump) {
                            best = Some(Probe {
                                jump: j,
                                pair: (x.clone(), y),
                            });
                        }
                    }
                }
                Ok(best)
            })
            .collect::<Vec<Result<Option<Probe>>>>();
        let mut best: Option<Probe> = None;
        for p in probes {
            if let Some(p) = p? {
                if best.as_ref().is_none_or(|b| p.jump > b.jump) {
                    best = Some(p);
                }
            }
        }
        if let Some((a, b)) = &previous {
            if let Some(z) = zoom(map, carrier, a, b, h)? {
                if best.as_ref().is_none_or(|b| z.jump > b.jump) {
                    best = Some(z);
                }
            }
        }
        previous = best.as_ref().map(|b| b.pair.clone());
        table.push(ModulusRung {
            h,
            modulus: best.as_ref().map_or(0.0, |b| b.jump),
            witness: best.map(|b| b.pair),
        });
    }
    let advisory_pass = table
        .windows(2)
        .all(|w| w[1].modulus < w[0].modulus || w[1].modulus <= CONTINUITY_FLOOR);
    Ok(ContinuityReport {
        advisory: true,
        advisory_pass,
        modulus_table: table,
        samples: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QRelation {
    pub below_one_third: bool,
    pub below_one: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub mode: TheoremMode,
    pub samples: usize,
    pub seed: Option<u64>,
    pub tol: f64,
    pub commutes: CommuteCheck,
    pub range_ok: RangeCheck,
    /// Continuity of `K` (of `K²` in thm24 mode); advisory only.
    pub continuity: ContinuityReport,
    #[serde(with = "extended_float")]
    pub q_hat: f64,
    pub q_threshold: f64,
    pub q_relation: QRelation,
    pub q_claimed: Option<f64>,
    pub q_estimate: QEstimate,
    /// Recorded assumption; never checked.
    pub v_complete_assumed: bool,
    pub applicable: bool,
}

/// Runs every sub-check for the problem's theorem mode.
///
/// `applicable` is `commutes ∧ range ∧ q_hat < 1/3`; continuity is reported but advisory.
pub fn check_applicability(problem: &ProblemSpec, sampler: &dyn Sampler, n: usize, tol: f64) -> Result<CheckReport> {
    let commutes = check_commutes(problem, sampler, n, tol)?;
    let range_ok = check_range_containment(problem, sampler, n, tol);
    let continuous_map = match problem.mode() {
        TheoremMode::Thm24 => problem.k().compose(problem.k())?,
        _ => problem.k().clone(),
    };
    let continuity = check_continuity(&continuous_map, problem.carrier(), sampler, n, &DEFAULT_H_LADDER)?;
    let q_estimate = estimate_q(problem, sampler, n)?;
    let q_hat = q_estimate.q_hat;
    let applicable = commutes.pass && range_ok.pass && q_hat < Q_THRESHOLD;
    Ok(CheckReport {
        mode: problem.mode(),
        samples: n,
        seed: sampler.seed(),
        tol,
        commutes,
        range_ok,
        continuity,
        q_hat,
        q_threshold: Q_THRESHOLD,
        q_relation: QRelation {
            below_one_third: q_hat < Q_THRESHOLD,
            below_one: q_hat < 1.0,
        },
        q_claimed: problem.q_claimed(),
        q_estimate,
        v_complete_assumed: problem.v_complete_assumed(),
        applicable,
    })
}

fn require_samples(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("at least one sample is required".into()));
    }
    Ok(())
}
