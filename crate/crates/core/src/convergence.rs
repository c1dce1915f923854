//! V-convergence, V-Cauchy detection and geometric rate certificates.
//!
//! All verdicts are over a recorded finite trace. A sequence V-converges to
//! `limit` when the residuals `r_n = S(x_n, x_n, limit)` are dominated by a
//! sequence `μ_n ↓ 0`; here `μ` is the tail supremum of the residuals and
//! `↓ 0` means "non-increasing with last term ⪯ tol".
//!
//! A geometric step `S(h_n, h_n, h_{n+1}) ⪯ α·S(h_{n-1}, h_{n-1}, h_n)` with
//! `α < 1` gives, for `ℓ < n`,
//!
//! ```text
//! S(h_ℓ, h_ℓ, h_n) ⪯ 2·α^ℓ / (1 − α) · S(h_0, h_0, h_1)
//! ```
//!
//! and [`certify_geometric_rate`] checks both the hypothesis and this bound.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{approx_le, tail_supremum, DominatingSequence, LatticeElement, ABS_SLACK};
use crate::problem::MetricConfig;
use crate::report::{extended_float, SCHEMA_VERSION};
use crate::smetric::SMetricSpec;
use crate::space::Point;

/// Smallest `q ≥ 0` with `num ⪯ q·den`, coordinatewise.
///
/// Uses `0/0 → 0` and `positive/0 → +∞`.
pub fn contraction_ratio(num: &LatticeElement, den: &LatticeElement) -> Result<f64> {
    if num.dim() != den.dim() {
        return Err(Error::DimensionMismatch {
            expected: num.dim(),
            found: den.dim(),
        });
    }
    Ok(num
        .coords()
        .iter()
        .zip(den.coords())
        .map(|(&n, &d)| {
            if n <= 0.0 {
                0.0
            } else if d <= 0.0 {
                f64::INFINITY
            } else {
                n / d
            }
        })
        .fold(0.0, f64::max))
}

/// The sequence `h_0, h_1, …` and its step values `S(h_n, h_n, h_{n+1})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitTrace {
    points: Vec<Point>,
    step_values: Vec<LatticeElement>,
}

impl OrbitTrace {
    pub fn empty() -> Self {
        Self {
            points: Vec::new(),
            step_values: Vec::new(),
        }
    }

    pub fn from_points(points: Vec<Point>, spec: &SMetricSpec) -> Result<Self> {
        let mut trace = Self::empty();
        for p in points {
            trace.push(p, spec)?;
        }
        Ok(trace)
    }

    /// Builds a trace from stored values, checking the structural invariants.
    pub fn new(points: Vec<Point>, step_values: Vec<LatticeElement>) -> Result<Self> {
        if step_values.len() + 1 != points.len() {
            return Err(Error::InvalidArgument(format!(
                "{} points need {} step values, found {}",
                points.len(),
                points.len().saturating_sub(1),
                step_values.len()
            )));
        }
        if let Some(i) = step_values.iter().position(|s| !s.is_nonnegative()) {
            return Err(Error::InvalidArgument(format!("step value {i} is negative")));
        }
        Ok(Self { points, step_values })
    }

    /// Appends `p`, recording `S(last, last, p)`; returns the new step value.
    pub fn push(&mut self, p: Point, spec: &SMetricSpec) -> Result<Option<&LatticeElement>> {
        if let Some(last) = self.points.last() {
            let step = spec.dist(last, &p)?;
            self.step_values.push(step);
        }
        self.points.push(p);
        Ok(self.step_values.last())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn step_values(&self) -> &[LatticeElement] {
        &self.step_values
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Option<&Point> {
        self.points.last()
    }

    /// Whether the stored step values equal the ones recomputed from the points.
    pub fn steps_match(&self, spec: &SMetricSpec) -> Result<bool> {
        for (i, w) in self.points.windows(2).enumerate() {
            if spec.dist(&w[0], &w[1])? != self.step_values[i] {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Largest step ratio over the trace; zero for fewer than two steps.
    pub fn observed_sigma(&self) -> f64 {
        self.step_values
            .windows(2)
            .map(|w| contraction_ratio(&w[1], &w[0]).expect("uniform codomain"))
            .fold(0.0, f64::max)
    }
}

/// A verdict plus the dominating sequence that witnesses it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceVerdict {
    pub holds: bool,
    pub witness: DominatingSequence,
}

fn verdict(residuals: &[LatticeElement], tol: f64) -> Result<ConvergenceVerdict> {
    let mut witness = tail_supremum(residuals)?;
    witness.tolerance = tol;
    Ok(ConvergenceVerdict {
        holds: witness.reaches_zero(),
        witness,
    })
}

/// Decides `x_n → limit` on the finite trace, with `r_n = S(x_n, x_n, limit)`.
pub fn is_v_convergent(
    points: &[Point],
    limit: &Point,
    spec: &SMetricSpec,
    tol: f64,
) -> Result<ConvergenceVerdict> {
    if points.is_empty() {
        return Err(Error::EmptySequence);
    }
    let residuals = points
        .iter()
        .map(|x| spec.dist(x, limit))
        .collect::<Result<Vec<_>>>()?;
    verdict(&residuals, tol)
}

/// Decides the V-Cauchy property with gaps `1..=horizon`.
///
/// `c_n = sup_{1 ≤ q ≤ horizon} S(x_n, x_n, x_{n+q})` is formed for every `n`
/// whose full window fits in the trace; the witness is the tail supremum of `c`.
pub fn is_v_cauchy(
    points: &[Point],
    spec: &SMetricSpec,
    tol: f64,
    horizon: usize,
) -> Result<ConvergenceVerdict> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if points.len() <= horizon {
        return Err(Error::TraceTooShort {
            len: points.len(),
            required: horizon + 1,
        });
    }
    let window_sups = (0..points.len() - horizon)
        .map(|n| {
            let mut c = spec.dist(&points[n], &points[n + 1])?;
            for q in 2..=horizon {
                c = c.sup(&spec.dist(&points[n], &points[n + q])?)?;
            }
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    verdict(&window_sups, tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCertificate {
    pub alpha: f64,
    /// Every step value is `⪯ α` times the previous one.
    pub step_ok: bool,
    /// Every pair obeys the `2·α^ℓ/(1 − α)·S(h_0, h_0, h_1)` bound.
    pub pair_bound_ok: bool,
    #[serde(with = "extended_float")]
    pub worst_step_ratio: f64,
    /// Smallest coordinatewise `bound − S(h_ℓ, h_ℓ, h_n)`; negative means violated.
    #[serde(with = "extended_float")]
    pub worst_pair_slack: f64,
    /// Last index of the trace.
    pub horizon: usize,
}

impl RateCertificate {
    pub fn passed(&self) -> bool {
        self.step_ok && self.pair_bound_ok
    }
}

/// Checks the geometric-step hypothesis at `alpha` and the pairwise bound it implies.
///
/// Comparisons allow `1e-12` plus 4 ulps of the larger operand.
pub fn certify_geometric_rate(trace: &OrbitTrace, alpha: f64, spec: &SMetricSpec) -> Result<RateCertificate> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    if trace.len() < 3 {
        return Err(Error::TraceTooShort {
            len: trace.len(),
            required: 3,
        });
    }
    let steps = trace.step_values();
    let mut step_ok = true;
    let mut worst_step_ratio = 0.0f64;
    for w in steps.windows(2) {
        let scaled = w[0].scale(alpha)?;
        step_ok &= w[1].leq_with_slack(&scaled, ABS_SLACK)?;
        worst_step_ratio = worst_step_ratio.max(contraction_ratio(&w[1], &w[0])?);
    }

    let first = &steps[0];
    let points = trace.points();
    let mut pair_bound_ok = true;
    let mut worst_pair_slack = f64::INFINITY;
    for l in 0..points.len() - 1 {
        let bound = first.scale(2.0 * alpha.powi(l as i32) / (1.0 - alpha))?;
        for n in l + 1..points.len() {
            let lhs = spec.dist(&points[l], &points[n])?;
            for (&a, &b) in lhs.coords().iter().zip(bound.coords()) {
                pair_bound_ok &= approx_le(a, b, ABS_SLACK);
                worst_pair_slack = worst_pair_slack.min(b - a);
            }
        }
    }

    Ok(RateCertificate {
        alpha,
        step_ok,
        pair_bound_ok,
        worst_step_ratio,
        worst_pair_slack,
        horizon: points.len() - 1,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceHeader {
    schema_version: u32,
    kind: String,
    carrier_dim: usize,
    metric: MetricConfig,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceRecord {
    index: usize,
    point: Vec<f64>,
    step: Option<LatticeElement>,
}

const TRACE_KIND: &str = "orbit_trace";

/// Writes `trace` as JSON lines: a header naming the metric, then one record per index.
pub fn write_trace<W: Write>(trace: &OrbitTrace, spec: &SMetricSpec, mut out: W) -> std::io::Result<()> {
    let header = TraceHeader {
        schema_version: SCHEMA_VERSION,
        kind: TRACE_KIND.into(),
        carrier_dim: spec.carrier_dim(),
        metric: MetricConfig::from_spec(spec),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for (index, p) in trace.points().iter().enumerate() {
        let record = TraceRecord {
            index,
            point: p.coords().to_vec(),
            step: trace.step_values().get(index).cloned(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a trace written by [`write_trace`], checking indices and stored step values.
pub fn read_trace<R: BufRead>(input: R) -> Result<(OrbitTrace, SMetricSpec)> {
    let mut lines = input
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let bad = |line: usize, msg: String| Error::InvalidArgument(format!("trace line {}: {msg}", line + 1));

    let (hline, header) = lines.next().ok_or(Error::EmptySequence)?;
    let header = header.map_err(|e| bad(hline, e.to_string()))?;
    let header: TraceHeader = serde_json::from_str(&header).map_err(|e| bad(hline, e.to_string()))?;
    if header.kind != TRACE_KIND || header.schema_version != SCHEMA_VERSION {
        return Err(bad(
            hline,
            format!("unsupported trace header {} v{}", header.kind, header.schema_version),
        ));
    }
    let spec = header.metric.build(header.carrier_dim)?;

    let mut points = Vec::new();
    let mut steps = Vec::new();
    let mut missing_step_at = None;
    for (line, text) in lines {
        let text = text.map_err(|e| bad(line, e.to_string()))?;
        let record: TraceRecord = serde_json::from_str(&text).map_err(|e| bad(line, e.to_string()))?;
        if record.index != points.len() {
            return Err(bad(line, format!("expected index {}, found {}", points.len(), record.index)));
        }
        if let Some(at) = missing_step_at {
            return Err(bad(line, format!("record {at} has no step value but is not last")));
        }
        let p = Point::new(record.point);
        p.check_dim(header.carrier_dim)?;
        if !p.is_finite() {
            return Err(bad(line, "point has non-finite coordinates".into()));
        }
        points.push(p);
        match record.step {
            Some(s) => steps.push(s),
            None => missing_step_at = Some(record.index),
        }
    }
    if points.is_empty() {
        return Err(Error::EmptySequence);
    }
    if missing_step_at.is_none() {
        return Err(Error::InvalidArgument("last trace record must not carry a step value".into()));
    }
    let trace = OrbitTrace::new(points, steps)?;
    if !trace.steps_match(&spec)? {
        return Err(Error::InvalidArgument(
            "stored step values disagree with the metric evaluated at the stored points".into(),
        ));
    }
    Ok((trace, spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[f64]) -> Vec<Point> {
        v.iter().map(|&x| Point::scalar(x)).collect()
    }

    fn abs() -> SMetricSpec {
        SMetricSpec::abs_sum(1)
    }

    fn el(v: &[f64]) -> LatticeElement {
        LatticeElement::new(v.to_vec()).unwrap()
    }

    /// h_n = 2^(−n−2), the h-orbit of f = x/4, K = x/2 from 1.
    fn halving_orbit(len: usize) -> Vec<Point> {
        (0..len).map(|n| Point::scalar(0.5f64.powi(n as i32 + 2))).collect()
    }

    #[test]
    fn ratio_conventions() {
        assert_eq!(contraction_ratio(&el(&[0.0]), &el(&[0.0])).unwrap(), 0.0);
        assert_eq!(contraction_ratio(&el(&[1.0]), &el(&[0.0])).unwrap(), f64::INFINITY);
        assert_eq!(contraction_ratio(&el(&[1.0, 3.0]), &el(&[4.0, 4.0])).unwrap(), 0.75);
        assert!(contraction_ratio(&el(&[1.0]), &el(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn v_convergence_examples() {
        let c = pts(&[0.3; 5]);
        let v = is_v_convergent(&c, &Point::scalar(0.3), &abs(), 1e-12).unwrap();
        assert!(v.holds);
        assert!(v.witness.values.iter().all(|m| m.is_zero()));

        let geo: Vec<Point> = (0..40).map(|n| Point::scalar(0.5f64.powi(n))).collect();
        let v = is_v_convergent(&geo, &Point::scalar(0.0), &abs(), 1e-6).unwrap();
        assert!(v.holds);
        // r_n = 2·2^(−n) is already non-increasing, so μ_n = r_n.
        for (n, m) in v.witness.values.iter().enumerate() {
            assert_eq!(m.coords(), &[2.0 * 0.5f64.powi(n as i32)]);
        }

        let osc: Vec<Point> = (0..41).map(|n| Point::scalar(1.0 + (-1f64).powi(n))).collect();
        assert!(!is_v_convergent(&osc, &Point::scalar(0.0), &abs(), 1e-6).unwrap().holds);

        assert_eq!(is_v_convergent(&[], &Point::scalar(0.0), &abs(), 1.0), Err(Error::EmptySequence));
        assert!(is_v_convergent(&c, &Point::new(vec![0.0, 0.0]), &abs(), 1.0).is_err());
    }

    #[test]
    fn v_cauchy_examples() {
        assert!(is_v_cauchy(&pts(&[2.0; 10]), &abs(), 0.0, 3).unwrap().holds);

        let geo: Vec<Point> = (0..64).map(|n| Point::scalar(0.5f64.powi(n))).collect();
        let v = is_v_cauchy(&geo, &abs(), 1e-6, 16).unwrap();
        assert!(v.holds);
        // Oracle: c_n = S(x_n, x_n, x_{n+16}) = 2·(2^(−n) − 2^(−n−16)) by direct summation.
        for (n, c) in v.witness.values.iter().enumerate() {
            let expected = 2.0 * (0.5f64.powi(n as i32) - 0.5f64.powi(n as i32 + 16));
            assert!((c[0] - expected).abs() <= 1e-15 * expected.max(1e-300), "n = {n}");
            assert!(c[0] <= 2.0 * 0.5f64.powi(n as i32) * 2.0);
        }

        let div: Vec<Point> = (0..30).map(|n| Point::scalar(n as f64)).collect();
        assert!(!is_v_cauchy(&div, &abs(), 1e-6, 4).unwrap().holds);

        assert_eq!(
            is_v_cauchy(&pts(&[1.0; 4]), &abs(), 1e-6, 4),
            Err(Error::TraceTooShort { len: 4, required: 5 })
        );
        assert!(is_v_cauchy(&pts(&[1.0; 4]), &abs(), 1e-6, 0).is_err());
    }

    #[test]
    fn certificate_examples() {
        let constant = OrbitTrace::from_points(pts(&[0.7; 6]), &abs()).unwrap();
        for alpha in [0.0, 0.3, 0.99] {
            let c = certify_geometric_rate(&constant, alpha, &abs()).unwrap();
            assert!(c.step_ok && c.pair_bound_ok);
            assert_eq!(c.worst_step_ratio, 0.0);
        }

        let orbit = OrbitTrace::from_points(halving_orbit(30), &abs()).unwrap();
        // step_values[n] = 2·|2^(−n−2) − 2^(−n−3)| = 2^(−n−2), exact.
        for (n, s) in orbit.step_values().iter().enumerate() {
            assert_eq!(s.coords(), &[0.5f64.powi(n as i32 + 2)]);
        }
        let c = certify_geometric_rate(&orbit, 0.5, &abs()).unwrap();
        assert!(c.step_ok && c.pair_bound_ok, "{c:?}");
        assert_eq!(c.worst_step_ratio, 0.5);
        assert_eq!(c.horizon, 29);
        assert!(c.worst_pair_slack >= 0.0);

        let c = certify_geometric_rate(&orbit, 0.4, &abs()).unwrap();
        assert!(!c.step_ok);

        assert!(certify_geometric_rate(&orbit, 1.0, &abs()).is_err());
        assert!(certify_geometric_rate(&orbit, -0.1, &abs()).is_err());
        let short = OrbitTrace::from_points(pts(&[1.0, 0.5]), &abs()).unwrap();
        assert!(matches!(
            certify_geometric_rate(&short, 0.5, &abs()),
            Err(Error::TraceTooShort { len: 2, required: 3 })
        ));
    }

    #[test]
    fn pair_bound_catches_a_late_jump() {
        // Steps shrink by 1/2 until a final jump, so the ratio check also fails;
        // the pair bound must fail on its own at the jump too.
        let mut v: Vec<f64> = (0..8).map(|n| 0.5f64.powi(n)).collect();
        v.push(5.0);
        let trace = OrbitTrace::from_points(pts(&v), &abs()).unwrap();
        let c = certify_geometric_rate(&trace, 0.5, &abs()).unwrap();
        assert!(!c.step_ok);
        assert!(!c.pair_bound_ok);
        assert!(c.worst_pair_slack < 0.0);
        assert_eq!(c.worst_step_ratio, contraction_ratio(&trace.step_values()[7], &trace.step_values()[6]).unwrap());
    }

    #[test]
    fn trace_invariants() {
        assert!(OrbitTrace::new(pts(&[1.0, 2.0]), vec![]).is_err());
        assert!(OrbitTrace::new(pts(&[1.0, 2.0]), vec![el(&[-1.0])]).is_err());
        let t = OrbitTrace::from_points(pts(&[1.0, 0.5, 0.25]), &abs()).unwrap();
        assert!(t.steps_match(&abs()).unwrap());
        assert_eq!(t.observed_sigma(), 0.5);
        let forged = OrbitTrace::new(t.points().to_vec(), vec![el(&[1.0]), el(&[1.0])]).unwrap();
        assert!(!forged.steps_match(&abs()).unwrap());
    }

    #[test]
    fn trace_file_round_trip() {
        let spec = SMetricSpec::weighted_pair(1, 2.0, 0.5).unwrap();
        let trace = OrbitTrace::from_points(halving_orbit(6), &spec).unwrap();
        let mut buf = Vec::new();
        write_trace(&trace, &spec, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 7);
        let (back, back_spec) = read_trace(buf.as_slice()).unwrap();
        assert_eq!(back, trace);
        assert_eq!(back_spec, spec);
    }

    #[test]
    fn trace_file_rejects_tampering() {
        let spec = abs();
        let trace = OrbitTrace::from_points(halving_orbit(4), &spec).unwrap();
        let mut buf = Vec::new();
        write_trace(&trace, &spec, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();

        let tampered = text.replacen("\"step\":[0.25]", "\"step\":[0.3]", 1);
        assert_ne!(tampered, text);
        assert!(read_trace(tampered.as_bytes()).is_err());

        let reordered = text.replacen("\"index\":1", "\"index\":2", 1);
        assert!(read_trace(reordered.as_bytes()).is_err());

        let no_header: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
        assert!(read_trace(no_header.as_bytes()).is_err());
        assert!(read_trace(&b""[..]).is_err());
    }
}
