//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use kernelbundle::contour::{singular_part_eval, try_count_zeros, try_locate_zeros, Circle, LocatedZero, SampledFunction, DEFAULT_NODES};
use kernelbundle::family::{branching_family, indicial_family, jordan_family, FamilyChart, SturmLiouvilleSpec};
use kernelbundle::frames::{laurent_coefficients, make_germ, FrameOptions, Germ};
use kernelbundle::linalg::{self, CMatrix, CVector, C64, I};
use kernelbundle::pairing::reduced_pairing_matrix;
use kernelbundle::reduction::{build_base_point, local_multiplicity, BaseOptions};
use kernelbundle::shell::{germ_from_trace, sweep, trace_from_germ, Bundle, ParameterGrid, ProbeSection, ProbeSpec, SweepOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);
type Eigenvalues = Box<dyn Fn(f64) -> Vec<f64>>;

fn s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn bundle(chart: FamilyChart, eps: Option<f64>, u_grid: Vec<Vec<f64>>) -> Result<Bundle, String> {
    let opts = BaseOptions {
        eps,
        u_grid,
        ..Default::default()
    };
    Bundle::build(chart, &[0.0], &opts, FrameOptions::default()).map_err(s)
}

fn sl_constant() -> Result<FamilyChart, String> {
    SturmLiouvilleSpec::constant_scalar(1, 0.25, 4, 1, 0.4)
        .and_then(|sl| sl.chart())
        .map_err(s)
}

/// `a(y) = y [[0.3, 0.15], [0.15, -0.3]]` on `C^2`, four sine modes.
fn sl_coupled() -> Result<SturmLiouvilleSpec, String> {
    let m = linalg::from_rows(&[&[c(0.3, 0.0), c(0.15, 0.0)], &[c(0.15, 0.0), c(-0.3, 0.0)]]);
    SturmLiouvilleSpec::from_terms(2, 1, vec![(vec![1], m)], 4, 1, 0.4).map_err(s)
}

fn c1_spectrum() -> Outcome {
    let t = Instant::now();
    let chart = sl_constant()?;
    let opts = BaseOptions {
        u_grid: vec![vec![0.0]],
        ..Default::default()
    };
    let (base, _) = build_base_point(&chart, &[0.0], &opts).map_err(s)?;
    let dt = t.elapsed().as_secs_f64();
    let root = 1.25f64.sqrt();
    let expected = [c(0.0, root), c(0.0, -root)];
    let got: Vec<C64> = base.clusters.iter().map(|cl| cl.sigma).collect();
    let mut err: f64 = 0.0;
    for e in &expected {
        err = err.max(got.iter().map(|g| (g - e).norm()).fold(f64::INFINITY, f64::min));
    }
    for g in &got {
        err = err.max(expected.iter().map(|e| (g - e).norm()).fold(f64::INFINITY, f64::min));
    }
    check(
        got.len() == 2 && err < 1e-8 && dt < 5.0,
        format!("{} points, max error {err:.2e}, {dt:.2} s", got.len()),
    )
}

/// Singular points of `D^2 + a + sigma^2` with eigenvalues `lam` of `a`:
/// `+-i sqrt(k^2 + lam)` for every mode `k`.
fn sl_oracle(lams: &[f64], kmax: usize, half_width: f64) -> usize {
    let mut count = 0;
    for k in 1..=kmax {
        for &l in lams {
            if ((k * k) as f64 + l).sqrt() < half_width {
                count += 2;
            }
        }
    }
    count
}

fn c2_strip_safety() -> Outcome {
    let ys: Vec<Vec<f64>> = (0..=40).map(|i| vec![-1.0 + 0.05 * i as f64]).collect();
    let half = 2.5f64.sqrt();
    let coupled = sl_coupled()?;
    let mut cases: Vec<(SturmLiouvilleSpec, Eigenvalues)> = Vec::new();
    let nrm = (0.09f64 + 0.0225).sqrt();
    cases.push((coupled, Box::new(move |y| vec![nrm * y, -nrm * y])));
    for mu in [0.39, -0.39] {
        let sl = SturmLiouvilleSpec::constant_scalar(1, mu, 4, 1, 0.4).map_err(s)?;
        cases.push((sl, Box::new(move |_| vec![mu])));
    }
    let mut closest = f64::INFINITY;
    let mut points = 0;
    for (sl, lams) in &cases {
        sl.check_bound(&ys).map_err(s)?;
        let chart = sl.chart().map_err(s)?;
        let (lo, hi) = match chart.sigma {
            kernelbundle::family::SigmaRegion::Strip { im, .. } => (im[0], im[1]),
            _ => return Err("expected a strip".into()),
        };
        if (hi - half).abs() > 1e-12 || (lo + half).abs() > 1e-12 {
            return Err(format!("strip is ({lo}, {hi})"));
        }
        let rect = chart.sigma.search_rect();
        for y in &ys {
            let z = try_locate_zeros(&|w| chart.det(y, w), &rect, 1e-6 * rect.diameter()).map_err(s)?;
            let total: usize = z.zeros.iter().map(|p| p.multiplicity).sum();
            let want = sl_oracle(&lams(y[0]), sl.mode_cutoff, half);
            if total != want {
                return Err(format!("y = {}: {total} singular points, expected {want}", y[0]));
            }
            for p in &z.zeros {
                closest = closest.min(chart.sigma.boundary_distance(p.location));
            }
            points += total;
        }
    }
    check(
        closest >= 0.05,
        format!("{points} points over {} parameter values, min distance to boundary {closest:.4}", 3 * ys.len()),
    )
}

fn c3_multiplicity() -> Outcome {
    let grid = ParameterGrid::parse("-0.2:0.2:101").map_err(s)?;
    let b = bundle(branching_family(), Some(0.5), grid.points.clone())?;
    if b.base.clusters.len() != 1 {
        return Err(format!("{} clusters at y0", b.base.clusters.len()));
    }
    let cl = &b.base.clusters[0];
    let ev = b.primal_ev(0);
    let from_chains = b.roots[0].total_length();
    let circle = Circle::new(cl.sigma, cl.eps, DEFAULT_NODES).map_err(s)?;
    for y in &grid.points {
        let from_q = local_multiplicity(&ev, y, cl.eps).map_err(s)?;
        let from_det = try_count_zeros(&|z| b.chart.det(y, z), &circle).map_err(s)?;
        if !(from_q == 2 && from_chains == 2 && from_det == 2) {
            return Err(format!("y = {}: q {from_q}, chains {from_chains}, det {from_det}", y[0]));
        }
    }
    Ok(format!("d_s = 2 three ways at all {} points", grid.len()))
}

fn c4_base_pairing() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut lengths = Vec::new();
    for (chart, expected) in [
        (jordan_family(), linalg::from_rows(&[&[c(0.0, 0.0), I], &[I, c(0.0, 0.0)]])),
        (branching_family(), linalg::from_rows(&[&[I, c(0.0, 0.0)], &[c(0.0, 0.0), I]])),
    ] {
        let b = bundle(chart, Some(0.5), vec![vec![0.0]])?;
        let mut l: Vec<usize> = b.roots[0].chains.iter().map(|ch| ch.length).collect();
        l.sort_unstable();
        lengths.push(l);
        let fr = b.frames(&[0.0]).map_err(s)?;
        let red = reduced_pairing_matrix(
            &b.chart,
            &b.base,
            &[0.0],
            &fr.primal_reduced,
            &fr.dual_reduced,
            b.frame_options.nodes,
        )
        .map_err(s)?;
        if red.shape() != (2, 2) {
            return Err(format!("pairing matrix has shape {:?}", red.shape()));
        }
        worst = worst.max(linalg::max_abs(&(red - expected)));
    }
    check(
        lengths == vec![vec![2], vec![1, 1]] && worst < 1e-8,
        format!("chain lengths {lengths:?}, max deviation {worst:.2e}"),
    )
}

fn c5_nondegenerate() -> Outcome {
    let mut worst: f64 = 0.0;
    let sl = bundle(sl_constant()?, None, vec![vec![0.0]])?;
    worst = worst.max(sl.pairing(&[0.0]).map_err(s)?.cond);
    let grid = ParameterGrid::parse("-0.2:0.2:101").map_err(s)?;
    let b = bundle(branching_family(), Some(0.5), grid.points.clone())?;
    let r = sweep(&b, &grid, &[], SweepOptions::default()).map_err(s)?;
    let mut missing = 0;
    for pt in &r.points {
        match pt.pairing_cond {
            Some(k) => worst = worst.max(k),
            None => missing += 1,
        }
    }
    missing += grid.len() - r.points.len();
    check(
        missing == 0 && worst < 1e8,
        format!("max condition number {worst:.3e} over {} points, {missing} missing", 1 + grid.len()),
    )
}

/// Inverse of `[[z, y], [y, z]]`.
fn branching_inverse(y: f64, z: C64) -> CMatrix {
    let d = z * z - y * y;
    linalg::from_rows(&[&[z / d, -y / d], &[-y / d, z / d]])
}

fn c6_transition_smoothness() -> Outcome {
    let grid = ParameterGrid::parse("-0.2:0.2:101").map_err(s)?;
    let b = bundle(branching_family(), Some(0.5), grid.points.clone())?;
    // φ(y) = (1 + y^2) φ_0 + sin(y) φ_1, each entry the singular part of
    // P(y, .)^{-1} R^perp beta_j, with the inverse in closed form.
    let probe = ProbeSection::new("phi", |b: &Bundle, y: &[f64]| {
        let ev = b.primal_ev(0);
        let cl = &b.base.clusters[0];
        let root = &b.roots[0];
        let (a0, a1) = (1.0 + y[0] * y[0], y[0].sin());
        let g = make_germ(
            |z| {
                let b0 = root.beta_at(&ev, b.y0(), 0, z)?;
                let b1 = root.beta_at(&ev, b.y0(), 1, z)?;
                let rhs = &cl.rperp_basis * (b0 * c(a0, 0.0) + b1 * c(a1, 0.0));
                Ok(branching_inverse(y[0], z) * rhs)
            },
            0,
            cl.sigma,
            b.carrier_radius(0),
            b.frame_options.nodes,
        )?;
        Ok(vec![g])
    });
    let r = sweep(&b, &grid, &[probe], SweepOptions::default()).map_err(s)?;
    if !r.dimension_constant || r.failure_count() > 0 || r.points.len() != grid.len() {
        return Err(format!("sweep incomplete: {} failures", r.failure_count()));
    }
    let mut err: f64 = 0.0;
    for pt in &r.points {
        let y = pt.y[0];
        let cv = pt.coefficients[0].as_ref().ok_or("missing coefficients")?;
        err = err.max((cv.values[0] - c(1.0 + y * y, 0.0)).norm());
        err = err.max((cv.values[1] - c(y.sin(), 0.0)).norm());
    }
    // |f''| <= 2 for 1 + y^2 and <= sin(0.2) for sin y on the grid
    let bounds = [2.0, 0.2f64.sin()];
    let mut ratio: f64 = 0.0;
    for sm in &r.smoothness {
        ratio = ratio.max(sm.max_second_difference / bounds[sm.coefficient]);
    }
    let through_zero = grid.points.iter().any(|p| p[0].abs() < 1e-12);
    check(
        err < 1e-6 && ratio <= 10.0 && through_zero && r.smoothness.len() == 2,
        format!("max coefficient error {err:.2e}, second differences at most {ratio:.3} x bound"),
    )
}

struct Rational {
    poles: Vec<(C64, Vec<CMatrix>)>,
    entire: [CMatrix; 2],
}

impl Rational {
    fn singular(&self, z: C64) -> CMatrix {
        let mut acc = CMatrix::zeros(2, 2);
        for (p, coeffs) in &self.poles {
            for (k, a) in coeffs.iter().enumerate() {
                acc += a / (z - p).powu(k as u32 + 1);
            }
        }
        acc
    }

    fn eval(&self, z: C64) -> CMatrix {
        self.singular(z) + &self.entire[0] + &self.entire[1] * z * z
    }
}

fn random_matrix(rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(2, 2, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn random_rational(rng: &mut ChaCha8Rng) -> Rational {
    let count = rng.random_range(1..=3);
    let mut poles: Vec<(C64, Vec<CMatrix>)> = Vec::new();
    while poles.len() < count {
        let z = C64::from_polar(rng.random_range(0.0..0.5), rng.random_range(0.0..2.0 * PI));
        if poles.iter().any(|(p, _)| (p - z).norm() < 0.25) {
            continue;
        }
        let order = rng.random_range(1..=3);
        poles.push((z, (0..order).map(|_| random_matrix(rng)).collect()));
    }
    Rational {
        poles,
        entire: [random_matrix(rng), random_matrix(rng)],
    }
}

fn c7_singular_part_calculus() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let nodes = 128;
    let rho = 1.0;
    let probes: Vec<C64> = (0..8).map(|t| C64::from_polar(1.6, 0.3 + t as f64 * PI / 4.0)).collect();
    let (mut e_extract, mut e_germ, mut e_laurent): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..20 {
        let f = random_rational(&mut rng);
        let circle = Circle::new(c(0.0, 0.0), rho, nodes).map_err(s)?;
        let sampled = SampledFunction::from_fn(circle, |z| f.eval(z)).map_err(s)?;
        let scale = probes.iter().map(|&z| linalg::max_abs(&f.singular(z))).fold(0.0, f64::max);
        for &z in &probes {
            let got = singular_part_eval(&sampled, z).map_err(s)?;
            e_extract = e_extract.max(linalg::max_abs(&(got - f.singular(z))) / scale);
        }
        let poles: Vec<LocatedZero> = f
            .poles
            .iter()
            .map(|(p, a)| LocatedZero {
                location: *p,
                multiplicity: a.len(),
            })
            .collect();
        let coeff_scale = f.poles.iter().flat_map(|(_, a)| a.iter().map(linalg::max_abs)).fold(0.0, f64::max);
        for col in 0..2 {
            let g: Germ = make_germ(|z| Ok(f.eval(z).column(col).into_owned()), 0, c(0.0, 0.0), rho, nodes).map_err(s)?;
            for &z in &probes {
                let want: CVector = f.singular(z).column(col).into_owned();
                e_germ = e_germ.max((g.eval(z).map_err(s)? - want).norm() / scale);
            }
            let parts = laurent_coefficients(&g, &poles).map_err(s)?;
            for (part, (p, a)) in parts.iter().zip(&f.poles) {
                if (part.pole - p).norm() > 0.0 || part.coefficients.len() != a.len() {
                    return Err("Laurent data does not match the poles".into());
                }
                for (got, want) in part.coefficients.iter().zip(a) {
                    e_laurent = e_laurent.max((got - want.column(col)).norm() / coeff_scale);
                }
            }
        }
    }
    check(
        e_extract < 1e-8 && e_germ < 1e-8 && e_laurent < 1e-8,
        format!("20 functions: extraction {e_extract:.2e}, germs {e_germ:.2e}, Laurent {e_laurent:.2e}"),
    )
}

fn c8_trace() -> Outcome {
    let b = bundle(indicial_family(2, 0.5).map_err(s)?, None, vec![vec![0.0]])?;
    let y = [0.0];
    let probe = ProbeSpec {
        cluster: None,
        vector: vec![c(1.0, 0.0)],
    };
    let germs = b.probe_germs(&probe, &y).map_err(s)?;
    let poles = germs
        .iter()
        .map(|g| b.poles(&y, g.cluster))
        .collect::<Result<Vec<_>, _>>()
        .map_err(s)?;
    let radius: Vec<f64> = germs.iter().map(|g| b.base.clusters[g.cluster].eps).collect();
    let t = trace_from_germ(&germs, &poles, &radius, 0.5, 2).map_err(s)?;

    // 1 / ((sigma + i) sigma) has residues -i at 0 and i at -i, so the
    // trace is i(-i) x^0 + i(i) x^1 = 1 - x.
    let exponents = [(c(0.0, 0.0), c(1.0, 0.0)), (c(0.0, -1.0), c(-1.0, 0.0))];
    let mut e_terms: f64 = 0.0;
    for (sigma, a) in exponents {
        let hits: Vec<_> = t.terms.iter().filter(|term| (term.sigma - sigma).norm() < 1e-8).collect();
        if hits.len() != 1 || hits[0].log_power != 0 {
            return Err(format!("terms at {sigma}: {:?}", hits));
        }
        e_terms = e_terms.max((hits[0].coefficient[0] - a).norm());
    }
    if t.terms.len() != 2 {
        return Err(format!("{} trace terms, expected 2", t.terms.len()));
    }
    let multiplicities: Vec<usize> = poles.iter().flatten().map(|p| p.multiplicity).collect();

    let back = germ_from_trace(&t);
    let mut e_round: f64 = 0.0;
    for (g, p) in germs.iter().zip(&poles) {
        for part in laurent_coefficients(g, p).map_err(s)? {
            let other = back
                .iter()
                .find(|q| (q.pole - part.pole).norm() < 1e-12)
                .ok_or("pole lost in round trip")?;
            for (a, bb) in part.coefficients.iter().zip(&other.coefficients) {
                e_round = e_round.max((a - bb).norm());
            }
            for k in 0..8 {
                let z = g.carrier().center + C64::from_polar(1.3 * g.carrier().radius, 0.2 + k as f64 * PI / 4.0);
                let mut rebuilt = CVector::zeros(1);
                for q in back.iter().filter(|q| g.carrier().contains(q.pole)) {
                    rebuilt += q.eval(z);
                }
                e_round = e_round.max((rebuilt - g.eval(z).map_err(s)?).norm());
            }
        }
    }
    let agreement = t.agreement.ok_or("no symbolic terms")?;
    let mut e_closed: f64 = 0.0;
    for smp in &t.samples {
        e_closed = e_closed.max((smp.value[0] - c(1.0 - smp.x, 0.0)).norm());
    }
    check(
        e_terms < 1e-8 && multiplicities == vec![1, 1] && e_round < 1e-10 && agreement < 1e-8 && e_closed < 1e-8,
        format!(
            "terms at {{0, -i}} error {e_terms:.2e}, round trip {e_round:.2e}, symbolic vs numeric {agreement:.2e}, numeric vs 1 - x {e_closed:.2e}"
        ),
    )
}

fn c9_reduced_equals_full() -> Outcome {
    let grid = ParameterGrid::parse("-0.2:0.2:9").map_err(s)?;
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for chart in [jordan_family(), branching_family()] {
        let b = bundle(chart, Some(0.5), grid.points.clone())?;
        for y in &grid.points {
            let fr = b.frames(y).map_err(s)?;
            let full = b.pairing(y).map_err(s)?.entries;
            let red = reduced_pairing_matrix(&b.chart, &b.base, y, &fr.primal_reduced, &fr.dual_reduced, b.frame_options.nodes)
                .map_err(s)?;
            if full.shape() != red.shape() {
                return Err(format!("shapes {:?} and {:?}", full.shape(), red.shape()));
            }
            worst = worst.max(linalg::max_abs(&(full - red)));
            pairs += fr.primal.len() * fr.dual.len();
        }
    }
    check(worst < 1e-8, format!("{pairs} pairs, max difference {worst:.2e}"))
}

fn c10_performance() -> Outcome {
    let t = Instant::now();
    let grid = ParameterGrid::parse("-0.5:0.5:101").map_err(s)?;
    let sl = sl_coupled()?;
    sl.check_bound(&grid.points).map_err(s)?;
    let b = bundle(sl.chart().map_err(s)?, None, grid.points.clone())?;
    let mut e1 = vec![c(0.0, 0.0); b.n()];
    e1[0] = c(1.0, 0.0);
    let probe = ProbeSection::resolvent("e1", ProbeSpec { cluster: None, vector: e1 });
    let r = sweep(&b, &grid, &[probe], SweepOptions { parallel: false }).map_err(s)?;
    let dt = t.elapsed().as_secs_f64();
    let solved = r.points.iter().filter(|p| p.coefficients[0].is_some()).count();
    check(
        b.n() == 8 && r.points.len() == 101 && solved == 101 && r.failure_count() == 0 && dt < 60.0,
        format!(
            "n = {}, {solved}/101 points solved, {} failures, {dt:.1} s single-threaded",
            b.n(),
            r.failure_count()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("Sturm-Liouville spectrum", c1_spectrum),
        ("strip safety", c2_strip_safety),
        ("multiplicity constancy", c3_multiplicity),
        ("base-point pairing", c4_base_pairing),
        ("nondegeneracy", c5_nondegenerate),
        ("transition-function smoothness", c6_transition_smoothness),
        ("singular-part calculus", c7_singular_part_calculus),
        ("trace correspondence", c8_trace),
        ("reduced/full pairing equality", c9_reduced_equals_full),
        ("performance", c10_performance),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|m| m.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(d) => println!("PASS {:>2} {name}: {d}", k + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
