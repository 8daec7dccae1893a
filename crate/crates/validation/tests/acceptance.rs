//! Acceptance criteria, one line each. Exits nonzero if any criterion fails.

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wup_core::builders::{self, build_pcf, IfsSpec};
use wup_core::functionals::{
    energy, gradients, modified_poincare_quotient, moment_nash_functional, nash_functional, poincare_quotient,
    variance,
};
use wup_core::io;
use wup_core::optimizer::{brute_force_min, minimize_product, OptimizerOptions, BRUTE_FORCE_MAX_FREE};
use wup_core::report::{run_experiment, ExperimentConfig};
use wup_core::resistance::{effective_resistance, resistance_matrix};
use wup_core::space::{ball, ball_average, local_average_function, METRIC_TOL};
use wup_core::verifier::{
    check_doubling, estimate_poincare_constant, proof_trace, theorem_lower_bound, verify, Theorem, TheoremParams,
    VerifyOptions,
};
use wup_core::{Edge, FunctionOnSpace, MetricMeasureSpace, MetricSource, ProductVariant, SpaceParts};

const SG_DIMENSION: f64 = 2.150_660_159_800_849;

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Self {
            pass,
            summary: summary.into(),
            details: Vec::new(),
        }
    }

    fn with_details(mut self, details: Vec<String>) -> Self {
        self.details = details;
        self
    }
}

fn space(measure: Vec<f64>, edges: Vec<Edge>) -> MetricMeasureSpace {
    MetricMeasureSpace::new(SpaceParts::new(measure, edges, MetricSource::EffectiveResistance)).unwrap()
}

fn small_builder_outputs() -> Vec<(String, MetricMeasureSpace)> {
    let mut out = vec![
        ("interval(11)".to_string(), builders::build_interval(11, 10.0, false).unwrap()),
        ("interval(21, dirichlet)".to_string(), builders::build_interval(21, 2.0, true).unwrap()),
        ("interval(201, dirichlet)".to_string(), builders::build_interval(201, 20.0, true).unwrap()),
        ("lattice_group(1, 9)".to_string(), builders::build_lattice_group(1, 9).unwrap()),
        ("lattice_group(2, 5)".to_string(), builders::build_lattice_group(2, 5).unwrap()),
        ("lattice_group(3, 4)".to_string(), builders::build_lattice_group(3, 4).unwrap()),
        ("pcf interval(6)".to_string(), build_pcf(&IfsSpec::unit_interval(6)).unwrap()),
        ("pcf gasket(3)".to_string(), build_pcf(&IfsSpec::sierpinski_gasket(3)).unwrap()),
    ];
    for m in 0..=3 {
        out.push((format!("sg({m})"), builders::build_sg(m).unwrap()));
    }
    for m in 1..=3 {
        out.push((format!("sg_lattice({m})"), builders::build_sg_lattice(m).unwrap()));
    }
    out
}

fn random_function(n: usize, rng: &mut ChaCha8Rng) -> FunctionOnSpace {
    FunctionOnSpace::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn heisenberg_interval() -> Outcome {
    let s = builders::build_interval(201, 20.0, true).unwrap();
    let r = minimize_product(&s, 2.0, ProductVariant::Unbounded, &OptimizerOptions::default()).unwrap();
    let trace = proof_trace(&s, &r.minimizer, 2.0).unwrap();
    let peak = r.minimizer.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mass_at_peak = r
        .minimizer
        .values()
        .iter()
        .zip(s.measure())
        .map(|(v, m)| v * v * m)
        .fold(0.0, f64::max);
    let pass = r.product >= 0.125 && (r.product - 0.5).abs() <= 0.025;
    Outcome::new(
        pass,
        format!("product {:.6e} (need >= 0.125 and within 5% of 0.5)", r.product),
    )
    .with_details(vec![
        format!(
            "variance {:.3e}, energy {:.3e}, converged {}, iterations {}",
            r.variance, r.energy, r.converged, r.iterations
        ),
        format!(
            "largest |u| {peak:.3e}, largest vertex mass u^2 mu {mass_at_peak:.6}, proof radius r = {:.3e}",
            trace.r
        ),
    ])
}

fn resistance_exactness() -> Outcome {
    let mut worst = 0.0f64;
    let path = builders::build_interval(51, 50.0, false).unwrap();
    for k in 0..51 {
        worst = worst.max((effective_resistance(&path, 0, k).unwrap() - k as f64).abs());
    }
    let k3 = space(
        vec![1.0; 3],
        vec![Edge::new(0, 1, 1.0), Edge::new(1, 2, 1.0), Edge::new(0, 2, 1.0)],
    );
    for (x, y) in [(0, 1), (1, 2), (0, 2)] {
        worst = worst.max((effective_resistance(&k3, x, y).unwrap() - 2.0 / 3.0).abs());
    }
    let mut failures = Vec::new();
    let mut checked = 0;
    for (name, s) in small_builder_outputs() {
        if s.len() > 200 {
            continue;
        }
        checked += 1;
        if let Err(e) = s.distance().unwrap().check_metric(METRIC_TOL, 200, 0) {
            failures.push(format!("{name}: {e}"));
        }
        if let Err(e) = resistance_matrix(&s).unwrap().as_distance().check_metric(METRIC_TOL, 200, 0) {
            failures.push(format!("{name} (resistance): {e}"));
        }
    }
    Outcome::new(
        worst <= 1e-10 && failures.is_empty(),
        format!("max error {worst:.1e}, metric axioms on {checked} builder outputs, {} failures", failures.len()),
    )
    .with_details(failures)
}

fn renormalization() -> Outcome {
    let r0 = effective_resistance(&builders::build_sg(0).unwrap(), 0, 1).unwrap();
    let mut worst = 0.0f64;
    for m in 1..=3 {
        let s = builders::build_sg(m).unwrap();
        let coords = s.coordinates().unwrap();
        let find = |p: [f64; 2]| {
            coords
                .iter()
                .position(|q| (q[0] - p[0]).hypot(q[1] - p[1]) < 1e-12)
                .unwrap()
        };
        let c = [find([0.0, 0.0]), find([1.0, 0.0]), find([0.5, 3f64.sqrt() / 2.0])];
        for (x, y) in [(c[0], c[1]), (c[1], c[2]), (c[0], c[2])] {
            worst = worst.max((effective_resistance(&s, x, y).unwrap() - r0).abs());
        }
    }
    Outcome::new(worst <= 1e-9, format!("corner resistance {r0:.12}, max drift {worst:.1e} over m = 0..3"))
}

fn dimension_fit() -> Outcome {
    let s = builders::build_sg_lattice(3).unwrap();
    let report = verify(&s, &VerifyOptions::default()).unwrap();
    let rel = (report.b - SG_DIMENSION).abs() / SG_DIMENSION;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("residuals.csv");
    io::write_residuals_csv(fs::File::create(&path).unwrap(), &report.residuals).unwrap();
    let rows = fs::read_to_string(&path).unwrap().lines().count() - 1;
    Outcome::new(
        rel <= 0.25 && rows > 0,
        format!(
            "b = {:.4} ({:.1}% from {SG_DIMENSION:.4}) over r in [{:.3}, {:.3}], {rows} residual rows",
            report.b,
            100.0 * rel,
            report.radius_range.0,
            report.radius_range.1
        ),
    )
}

fn certification() -> Outcome {
    let mut details = Vec::new();
    let mut violations = 0;
    let cases: Vec<(String, MetricMeasureSpace, Theorem)> = (1..=4)
        .map(|m| (format!("sg({m})"), builders::build_sg(m).unwrap(), Theorem::BoundedResistance))
        .chain((2..=3).map(|m| (format!("sg_lattice({m})"), builders::build_sg_lattice(m).unwrap(), Theorem::GraphResistance)))
        .collect();
    for (name, s, theorem) in cases {
        let report = verify(&s, &VerifyOptions::default()).unwrap();
        let bound = theorem_lower_bound(&report, theorem, &TheoremParams::default()).unwrap();
        let gamma = report.b + 1.0;
        let r = minimize_product(&s, gamma, theorem.variant(), &OptimizerOptions::default()).unwrap();
        let trace = proof_trace(&s, &r.minimizer, gamma).unwrap();
        let ok = r.product >= bound;
        if !ok {
            violations += 1;
        }
        details.push(format!(
            "{name} {theorem}: product {:.3e} vs bound {bound:.3e} [{}] (Var {:.2e}, E {:.2e}, proof radius {:.2e})",
            r.product,
            if ok { "ok" } else { "VIOLATION" },
            r.variance,
            r.energy,
            trace.r
        ));
    }
    Outcome::new(violations == 0, format!("{violations} violations in 6 cases")).with_details(details)
}

fn oracle_spaces() -> Vec<(String, MetricMeasureSpace)> {
    vec![
        ("two-point".into(), space(vec![0.5, 0.5], vec![Edge::new(0, 1, 1.0)])),
        (
            "weighted path(3)".into(),
            space(vec![1.0, 2.0, 1.0], vec![Edge::new(0, 1, 1.0), Edge::new(1, 2, 2.0)]),
        ),
        (
            "triangle".into(),
            space(
                vec![1.0; 3],
                vec![Edge::new(0, 1, 1.0), Edge::new(1, 2, 1.0), Edge::new(0, 2, 1.0)],
            ),
        ),
        ("sg(0)".into(), builders::build_sg(0).unwrap()),
        ("interval(4, dirichlet)".into(), builders::build_interval(4, 3.0, true).unwrap()),
        ("interval(5, dirichlet)".into(), builders::build_interval(5, 2.0, true).unwrap()),
        ("sg_lattice(1)".into(), builders::build_sg_lattice(1).unwrap()),
        ("lattice_group(1, 5)".into(), builders::build_lattice_group(1, 5).unwrap()),
        ("lattice_group(2, 3)".into(), builders::build_lattice_group(2, 3).unwrap()),
    ]
}

fn oracle_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let mut cases = 0;
    for (name, s) in oracle_spaces() {
        assert!(s.free_vertices().len() <= BRUTE_FORCE_MAX_FREE);
        for variant in [ProductVariant::Unbounded, ProductVariant::BoundedEnergy, ProductVariant::BoundedVariance] {
            for gamma in [1.5, 2.0, 3.0] {
                let opt = minimize_product(&s, gamma, variant, &OptimizerOptions::default()).unwrap();
                let grid = if s.free_vertices().len() == 3 { 1500 } else { 200_000 };
                let (brute, _) = brute_force_min(&s, gamma, variant, grid).unwrap();
                let err = (opt.product - brute).abs() / brute.abs().max(1.0);
                worst = worst.max(err);
                cases += 1;
                if err > 1e-4 {
                    failures.push(format!(
                        "{name} {variant} gamma {gamma}: optimizer {:.8e}, brute force {brute:.8e}",
                        opt.product
                    ));
                }
            }
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!("{cases} cases, max deviation {worst:.1e} (need <= 1e-4)"),
    )
    .with_details(failures)
}

fn gradient_checks() -> Outcome {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut samples = 0;
    for (_, s) in small_builder_outputs() {
        for _ in 0..20 {
            let u = random_function(s.len(), &mut rng);
            let (eg, vg) = gradients(&s, &u, 2.0).unwrap();
            let mut w = u.values().to_vec();
            let mut fd_e = vec![0.0; s.len()];
            let mut fd_v = vec![0.0; s.len()];
            for i in 0..s.len() {
                let orig = w[i];
                w[i] = orig + H;
                let up = FunctionOnSpace::new(w.clone()).unwrap();
                w[i] = orig - H;
                let down = FunctionOnSpace::new(w.clone()).unwrap();
                w[i] = orig;
                fd_e[i] = (energy(&s, &up).unwrap() - energy(&s, &down).unwrap()) / (2.0 * H);
                fd_v[i] = (variance(&s, &up, 2.0).unwrap() - variance(&s, &down, 2.0).unwrap()) / (2.0 * H);
            }
            for (a, b) in [(eg.values(), &fd_e), (vg.values(), &fd_v)] {
                let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let err = a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale;
                worst = worst.max(err);
            }
            samples += 1;
        }
    }
    Outcome::new(worst < 1e-6, format!("{samples} random functions, max relative error {worst:.1e}"))
}

fn functional_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut nash_drift = 0.0f64;
    let mut shift_drift = 0.0f64;
    for (_, s) in small_builder_outputs() {
        if s.len() > 200 {
            continue;
        }
        for _ in 0..5 {
            let u = FunctionOnSpace::new((0..s.len()).map(|_| rng.random_range(0.01..1.0)).collect()).unwrap();
            for theta in [0.5, 1.0, 1.5, 3.0] {
                let base = nash_functional(&s, &u, theta, false).unwrap();
                let moment = moment_nash_functional(&s, &u, theta, false).unwrap();
                for lambda in [1e-3, 1.0, 1e3] {
                    let v = u.scaled(lambda);
                    nash_drift = nash_drift.max((nash_functional(&s, &v, theta, false).unwrap() - base).abs() / base);
                    nash_drift =
                        nash_drift.max((moment_nash_functional(&s, &v, theta, false).unwrap() - moment).abs() / moment);
                }
            }
            let e = energy(&s, &u).unwrap();
            let shifted = FunctionOnSpace::new(u.values().iter().map(|x| x + 3.7).collect()).unwrap();
            shift_drift = shift_drift.max((energy(&s, &shifted).unwrap() - e).abs() / e);
        }
    }

    let doubling: Vec<(MetricMeasureSpace, f64)> = vec![
        (builders::build_interval(41, 4.0, false).unwrap(), 2.0),
        (builders::build_sg(2).unwrap(), 3.15),
        (builders::build_sg(3).unwrap(), 3.15),
        (builders::build_sg_lattice(2).unwrap(), 3.15),
        (builders::build_lattice_group(2, 5).unwrap(), 2.0),
    ];
    let mut chain_failures = 0;
    let mut pairs = 0;
    for (s, gamma) in &doubling {
        let n = s.len();
        let d = s.distance().unwrap();
        let all: Vec<usize> = (0..n).collect();
        for _ in 0..100 {
            let u = random_function(n, &mut rng);
            let y = rng.random_range(0..n);
            let r = rng.random_range(d.min_separation()..=d.diameter() / 2.0);
            let e = energy(s, &u).unwrap();
            let b = ball(s, y, r).unwrap();
            let modified = modified_poincare_quotient(s, &u, r, y).unwrap();
            let i2 = poincare_quotient(s, &u, &b).unwrap();
            let local = local_average_function(s, &u, r).unwrap();
            let mean = ball_average(s, &u, &b).unwrap();
            let j2 = b.members.iter().map(|&x| (local[x] - mean).powi(2) * s.measure()[x]).sum::<f64>() / e;
            let c = check_doubling(s, &all, &[r]).unwrap();
            let j2_cap = match estimate_poincare_constant(s, *gamma, &all, &[2.0 * r]) {
                Ok(p) => 4.0 * 2f64.powf(*gamma) * c * p.c1_p * r.powf(*gamma),
                Err(_) => f64::INFINITY,
            };
            let chain = (i2.sqrt() + j2.sqrt()).powi(2);
            if modified > chain * (1.0 + 1e-10) + 1e-12 || j2 > j2_cap * (1.0 + 1e-9) {
                chain_failures += 1;
            }
            pairs += 1;
        }
    }
    Outcome::new(
        nash_drift < 1e-12 && shift_drift < 1e-12 && chain_failures == 0,
        format!(
            "Nash scale drift {nash_drift:.1e}, energy shift drift {shift_drift:.1e}, doubling chain {chain_failures}/{pairs} failures"
        ),
    )
}

fn determinism() -> Outcome {
    let json = r#"{"space": {"builder": "sg", "level": 2}, "theorems": ["bounded-resistance", "bounded-poincare"], "seed": 11}"#;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let reports: Vec<Vec<u8>> = dirs
        .iter()
        .map(|d| {
            let mut c = ExperimentConfig::from_json(json).unwrap();
            c.output.dir = d.path().to_path_buf();
            run_experiment(&c).unwrap();
            fs::read(d.path().join("report.json")).unwrap()
        })
        .collect();
    Outcome::new(
        reports[0] == reports[1],
        format!("two runs, {} bytes each, identical: {}", reports[0].len(), reports[0] == reports[1]),
    )
}

/// Not a numbered criterion: refining the interval at fixed spacing should
/// leave the unbounded minimum stable.
fn interval_refinement() -> Outcome {
    let products: Vec<f64> = [(101, 10.0), (201, 20.0)]
        .iter()
        .map(|&(n, l)| {
            let s = builders::build_interval(n, l, true).unwrap();
            minimize_product(&s, 2.0, ProductVariant::Unbounded, &OptimizerOptions::default())
                .unwrap()
                .product
        })
        .collect();
    let change = (products[1] - products[0]).abs() / products[0].abs().max(products[1].abs());
    Outcome::new(
        change < 0.02,
        format!("products {:.3e} and {:.3e}, relative change {change:.2}", products[0], products[1]),
    )
}

fn main() -> ExitCode {
    let criteria: Vec<(&str, &str, Duration, fn() -> Outcome)> = vec![
        ("1", "Heisenberg on the interval", Duration::from_secs(30), heisenberg_interval),
        ("2", "resistance exactness", Duration::from_secs(10), resistance_exactness),
        ("3", "gasket renormalization", Duration::from_secs(60), renormalization),
        ("4", "lattice dimension fit", Duration::from_secs(120), dimension_fit),
        ("5", "certification suite", Duration::from_secs(600), certification),
        ("6", "brute-force oracle", Duration::from_secs(60), oracle_equivalence),
        ("7", "gradient checks", Duration::from_secs(30), gradient_checks),
        ("8", "functional invariants", Duration::from_secs(60), functional_invariants),
        ("9", "determinism", Duration::MAX, determinism),
        ("-", "interval refinement stability", Duration::MAX, interval_refinement),
    ];
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_time = elapsed < limit;
        let pass = outcome.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget = if limit == Duration::MAX {
            String::new()
        } else {
            format!(" / {}s", limit.as_secs())
        };
        println!(
            "criterion {id} [{}] {name}: {} ({:.1}s{budget})",
            if pass { "PASS" } else { "FAIL" },
            outcome.summary,
            elapsed.as_secs_f64()
        );
        for d in &outcome.details {
            println!("    {d}");
        }
    }
    if failed == 0 {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} failing");
        ExitCode::FAILURE
    }
}
