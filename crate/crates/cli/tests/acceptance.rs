//! Acceptance criteria 1-8, one PASS/FAIL line each.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use jungck_core::checker::{check_commutes, estimate_q};
use jungck_core::convergence::{certify_geometric_rate, is_v_cauchy, OrbitTrace};
use jungck_core::expr::{format, parse, BinaryOp, Expr, UnaryOp};
use jungck_core::smetric::{check_symmetry, validate_axioms, AxiomCVariant};
use jungck_core::solver::{multi_start, residuals, solve, SolveOptions};
use jungck_core::{catalog, BoxSampler, CarrierBox, FixedSample, Point, ProblemSpec, SMetricSpec, Sampler, TheoremMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn builtin(name: &str) -> ProblemSpec {
    catalog::load(name).expect("builtin exists").expect("builtin parses").problem.expect("builtin has maps")
}

fn criterion_1() -> Outcome {
    let carrier = CarrierBox::interval(-10.0, 10.0).unwrap();
    let sampler = BoxSampler::new(carrier, 1);
    let start = Instant::now();
    for spec in [SMetricSpec::abs_sum(1), SMetricSpec::weighted_pair(1, 1.0, 1.0).unwrap()] {
        for variant in [AxiomCVariant::Literal, AxiomCVariant::Standard] {
            let r = validate_axioms(&spec, &sampler, 10_000, 0.0, variant);
            for c in &r.checks {
                ensure(c.violations == 0, || format!("{} {} has {} violation(s)", r.metric, c.axiom, c.violations))?;
            }
        }
        let s = check_symmetry(&spec, &sampler, 10_000, 0.0);
        ensure(s.pass && s.max_deviation == 0.0, || format!("symmetry deviation {}", s.max_deviation))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("0 violations on 10^4 quadruples per metric in {:.2?}", elapsed))
}

fn criterion_2() -> Outcome {
    let problem = builtin("example_2_6");
    let opts = SolveOptions {
        max_iters: 100,
        tol: 1e-9,
        certify_alpha: Some(0.5),
    };
    let r = solve(&problem, &Point::scalar(1.0), &opts).map_err(|e| e.to_string())?;
    ensure(r.converged, || "not converged".into())?;
    ensure(r.iterations <= 40, || format!("{} iterations", r.iterations))?;
    ensure(r.fixed_point.0[0].abs() <= 1e-9, || format!("fixed point {}", r.fixed_point))?;
    ensure((r.observed_sigma - 0.5).abs() <= 1e-9, || format!("sigma {}", r.observed_sigma))?;
    // Closed form: v_n = 2^(−n), h_n = 2^(−n−2).
    for (n, h) in r.trace.points().iter().enumerate() {
        let oracle = 0.5f64.powi(n as i32 + 2);
        ensure(h.0[0] == oracle, || format!("h_{n} = {} but closed form gives {oracle}", h.0[0]))?;
    }
    let c = r.certificate.ok_or("no certificate")?;
    ensure(c.step_ok && c.pair_bound_ok, || format!("certificate {c:?}"))?;
    Ok(format!("{} iterations, |fixed point| = {:e}, sigma = {}", r.iterations, r.fixed_point.0[0], r.observed_sigma))
}

/// Closed-form candidates for f = x/4, K = x/2 under |x − z| + |y − z|.
fn ex26_q_oracle(x: f64, y: f64, five: bool) -> f64 {
    let s = |a: f64, b: f64| 2.0 * (a - b).abs();
    let ratio = |n: f64, u: f64| if n == 0.0 { 0.0 } else if u == 0.0 { f64::INFINITY } else { n / u };
    let n = s(x / 4.0, y / 4.0);
    let mut cands = vec![s(x / 2.0, y / 2.0)];
    if five {
        cands.extend([s(x / 2.0, x / 4.0), s(y / 2.0, y / 4.0), s(x / 2.0, y / 4.0), s(y / 2.0, x / 4.0)]);
    }
    cands.into_iter().map(|u| ratio(n, u)).fold(f64::INFINITY, f64::min)
}

fn criterion_3() -> Outcome {
    let base = builtin("example_2_6");
    let sampler = BoxSampler::new(base.carrier().clone(), 3);
    let cor = estimate_q(&base.clone().with_mode(TheoremMode::Cor23), &sampler, 10_000).map_err(|e| e.to_string())?;
    let thm = estimate_q(&base.with_mode(TheoremMode::Thm22), &sampler, 10_000).map_err(|e| e.to_string())?;

    let mut pts = sampler.draw(20_000);
    pts.extend([0.0, 1.0, 1.0, 0.0].map(Point::scalar));
    let oracle = |five| pts.chunks_exact(2).map(|p| ex26_q_oracle(p[0].0[0], p[1].0[0], five)).fold(0.0, f64::max);
    let (oracle_cor, oracle_thm) = (oracle(false), oracle(true));
    ensure((oracle_thm - 0.5).abs() <= 1e-6, || format!("oracle thm22 q = {oracle_thm}"))?;
    ensure((cor.q_hat - oracle_cor).abs() <= 1e-12, || format!("cor23 {} vs oracle {oracle_cor}", cor.q_hat))?;
    ensure((thm.q_hat - oracle_thm).abs() <= 1e-12, || format!("thm22 {} vs oracle {oracle_thm}", thm.q_hat))?;
    ensure((cor.q_hat - 0.5).abs() <= 1e-9, || format!("cor23 q_hat {}", cor.q_hat))?;
    ensure((thm.q_hat - 0.5).abs() <= 1e-6, || format!("thm22 q_hat {}", thm.q_hat))?;
    Ok(format!("cor23 q_hat = {}, thm22 q_hat = {} (oracle agrees)", cor.q_hat, thm.q_hat))
}

fn criterion_4() -> Outcome {
    let problem = builtin("example_2_5");
    let one = check_commutes(&problem, &FixedSample(vec![Point::scalar(1.0)]), 1, 1e-9).map_err(|e| e.to_string())?;
    ensure(!one.pass && one.max_deviation >= 63.0, || format!("deviation at 1: {}", one.max_deviation))?;
    ensure(one.witness == Some(Point::scalar(1.0)), || format!("witness {:?}", one.witness))?;

    let starts = BoxSampler::new(problem.carrier().clone(), 4).draw(20);
    let opts = SolveOptions::default();
    for x0 in &starts {
        let r = solve(&problem, x0, &opts).map_err(|e| e.to_string())?;
        ensure(!r.converged, || format!("converged from {x0}"))?;
        // f(c) − c = c² − c + 5 ≥ 4.75 for every real c.
        let c = r.fixed_point.0[0];
        let oracle = c * c - c + 5.0;
        for &v in r.residual_f.coords() {
            ensure(v >= 4.75 && (v - oracle).abs() <= 1e-9 * oracle, || format!("residual {v} at {c}"))?;
        }
        let (rf, _) = residuals(&problem, &r.fixed_point).map_err(|e| e.to_string())?;
        ensure(rf == r.residual_f, || "residual not reproducible".into())?;
    }
    let u = multi_start(&problem, &starts, &opts, 1e-6).map_err(|e| e.to_string())?;
    ensure(u.cluster_count == 0, || format!("{} clusters", u.cluster_count))?;
    Ok(format!("deviation {} at x = 1; 20/20 starts unconverged; 0 clusters", one.max_deviation))
}

fn criterion_5() -> Outcome {
    let spec = SMetricSpec::abs_sum(1);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut certified, mut counterexamples) = (0, 0);
    for _ in 0..100 {
        let alpha: f64 = rng.random_range(0.05..=0.9);
        let first: f64 = rng.random_range(1e-3..=10.0);
        let start: f64 = rng.random_range(-10.0..=10.0);
        let mut x = start;
        let points: Vec<Point> = (0..64)
            .map(|k| {
                let p = Point::scalar(x);
                x += first * alpha.powi(k);
                p
            })
            .collect();
        let trace = OrbitTrace::from_points(points.clone(), &spec).map_err(|e| e.to_string())?;
        if !certify_geometric_rate(&trace, alpha, &spec).map_err(|e| e.to_string())?.step_ok {
            continue;
        }
        certified += 1;
        let s01 = spec.dist(&points[0], &points[1]).map_err(|e| e.to_string())?.norm_inf();
        let tol = 2.0 * alpha.powi(32) / (1.0 - alpha) * s01;
        if !is_v_cauchy(&points, &spec, tol, 16).map_err(|e| e.to_string())?.holds {
            counterexamples += 1;
        }
    }
    ensure(certified > 0, || "no trace passed step_ok".into())?;
    ensure(counterexamples == 0, || format!("{counterexamples} counterexample(s)"))?;
    Ok(format!("{certified}/100 traces step_ok, 0 counterexamples at L = 32, horizon 16"))
}

fn criterion_6() -> Outcome {
    let problem = builtin("example_2_6");
    let starts = BoxSampler::new(problem.carrier().clone(), 6).draw(100);
    let u = multi_start(&problem, &starts, &SolveOptions::default(), 1e-6).map_err(|e| e.to_string())?;
    ensure(u.cluster_count == 1, || format!("{} clusters", u.cluster_count))?;
    ensure(u.max_diameter <= 1e-8, || format!("diameter {}", u.max_diameter))?;
    ensure(u.clusters[0].members.len() == 100, || "not all starts converged".into())?;
    Ok(format!("1 cluster, diameter {:e}", u.max_diameter))
}

fn random_const(rng: &mut ChaCha8Rng) -> f64 {
    match rng.random_range(0..3) {
        0 => f64::from(rng.random_range(-20i32..20)),
        1 => f64::from(rng.random_range(1u32..1000)) / 64.0,
        _ => {
            let v: f64 = rng.random_range(-1.0..1.0);
            v * 10f64.powi(rng.random_range(-8..12))
        }
    }
}

fn random_expr(rng: &mut ChaCha8Rng, depth: u32) -> Expr {
    if depth == 0 || rng.random_bool(0.25) {
        return if rng.random_bool(0.5) { Expr::Const(random_const(rng)) } else { Expr::Var(rng.random_range(0..10)) };
    }
    let sub = |rng: &mut ChaCha8Rng| random_expr(rng, depth - 1);
    match rng.random_range(0..9) {
        0 => Expr::unary(UnaryOp::Neg, sub(rng)),
        1 => Expr::unary(UnaryOp::Abs, sub(rng)),
        2 => {
            let base = sub(rng);
            let exp = if rng.random_bool(0.3) {
                Expr::binary(BinaryOp::Pow, Expr::Const(random_const(rng)), Expr::Const(random_const(rng)))
            } else {
                Expr::Const(random_const(rng))
            };
            Expr::binary(BinaryOp::Pow, base, exp)
        }
        k => {
            let op = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div, BinaryOp::Min, BinaryOp::Max][k - 3];
            Expr::binary(op, sub(rng), sub(rng))
        }
    }
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..1000 {
        let e = random_expr(&mut rng, 6);
        let text = format(&e);
        let back = parse(&text).map_err(|err| format!("AST {i}: {text:?} fails to parse: {err}"))?;
        ensure(back == e, || format!("AST {i}: {text:?} parses to a different tree"))?;
    }
    let (x0, x1, x2) = (Expr::Var(0), Expr::Var(1), Expr::Var(2));
    let fixtures = [
        ("x0+x1*x2", Expr::binary(BinaryOp::Add, x0.clone(), Expr::binary(BinaryOp::Mul, x1.clone(), x2.clone()))),
        ("x0-x1-x2", Expr::binary(BinaryOp::Sub, Expr::binary(BinaryOp::Sub, x0.clone(), x1), x2)),
        (
            "x0^2^3",
            Expr::binary(BinaryOp::Pow, x0, Expr::binary(BinaryOp::Pow, Expr::Const(2.0), Expr::Const(3.0))),
        ),
    ];
    for (text, expected) in fixtures {
        let got = parse(text).map_err(|e| format!("{text}: {e}"))?;
        ensure(got == expected, || format!("{text} parses as {got:?}"))?;
    }
    Ok("1000 random ASTs round-trip; 3 precedence fixtures hold".into())
}

fn run_to_file(args: &[&str], out: &Path, threads: Option<&str>) -> Result<Vec<u8>, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_jungck"));
    cmd.args(args).arg("--out").arg(out);
    if let Some(t) = threads {
        cmd.env("RAYON_NUM_THREADS", t);
    }
    let status = cmd.output().map_err(|e| e.to_string())?.status;
    ensure(status.code().is_some_and(|c| c <= 1), || format!("{args:?} exited with {status}"))?;
    std::fs::read(out).map_err(|e| e.to_string())
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let trace = dir.path().join("trace.jsonl");
    let trace = trace.to_str().unwrap();
    let commands: Vec<Vec<&str>> = vec![
        vec!["validate-space", "--builtin", "example_1_9", "--seed", "8"],
        vec!["check", "--builtin", "example_2_5", "--seed", "8", "--samples", "2000"],
        vec!["check", "--builtin", "example_2_6", "--seed", "8", "--samples", "2000"],
        vec!["solve", "--builtin", "example_2_6", "--x0", "1", "--certify-alpha", "0.5", "--trace-out", trace],
        vec!["probe", "--builtin", "example_2_6", "--starts", "50", "--seed", "8"],
        vec!["probe", "--builtin", "example_2_5", "--starts", "20", "--seed", "8"],
        vec!["certify", "--trace", trace, "--alpha", "0.5"],
    ];
    for args in &commands {
        let runs = [None, None, Some("1")]
            .iter()
            .enumerate()
            .map(|(i, threads)| run_to_file(args, &dir.path().join(format!("run{i}.json")), *threads))
            .collect::<Result<Vec<_>, _>>()?;
        ensure(runs[0] == runs[1] && runs[0] == runs[2], || format!("{args:?} output differs between runs"))?;
    }
    Ok(format!("{} commands byte-identical across 3 runs (incl. 1 thread)", commands.len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("axiom suite", criterion_1),
        ("example_2_6 convergence", criterion_2),
        ("example_2_6 q-estimation", criterion_3),
        ("example_2_5 refutation", criterion_4),
        ("geometric rate implies Cauchy", criterion_5),
        ("uniqueness", criterion_6),
        ("parser", criterion_7),
        ("determinism", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
