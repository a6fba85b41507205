//! End-to-end acceptance run: one line per criterion, nonzero exit if any
//! fails. Pass criterion numbers as arguments to run a subset.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use tnl_core::ideal::{self, MultilinearMap, SummingConfig};
use tnl_core::injective::{self, EpsilonConfig, EpsilonNorm};
use tnl_core::maximize::{AscentConfig, Family};
use tnl_core::projective::{self, ProjectiveConfig, ProjectiveNorm};
use tnl_core::sigma::{self, BetaNorm, SigmaConfig, SigmaNorm};
use tnl_core::verify::{self, RepresentationPair, SuiteConfig, Verdict};
use tnl_core::tensors::random_tensor;
use tnl_core::{rng, Exponent, NormedSpace, RandomStyle, Tensor, TensorNormEvaluator, TensorSpace};

struct Outcome {
    passed: bool,
    detail: String,
}

fn ex(p: f64) -> Exponent {
    Exponent::new(p).unwrap()
}

fn smoothness_cfg(samples: usize, tolerance: f64) -> SuiteConfig {
    SuiteConfig {
        samples,
        seed: 2024,
        shapes: vec![vec![2, 2], vec![2, 3], vec![3, 3], vec![2, 2, 2]],
        tolerance,
        ..SuiteConfig::default()
    }
}

fn timed_suite(rep: verify::Report, start: Instant, limit: Duration) -> Outcome {
    let took = start.elapsed();
    Outcome {
        passed: rep.verdict == Verdict::Pass && took <= limit,
        detail: format!(
            "{} samples, max deviation {:.3e} (tol {:.0e}), {:.1}s of {}s",
            rep.samples.len(),
            rep.max_deviation,
            rep.tolerance,
            took.as_secs_f64(),
            limit.as_secs()
        ),
    }
}

fn c1() -> Outcome {
    let start = Instant::now();
    let rep = verify::check_smoothness(&EpsilonNorm::default(), &smoothness_cfg(200, 1e-6)).unwrap();
    timed_suite(rep, start, Duration::from_secs(60))
}

fn c2() -> Outcome {
    let start = Instant::now();
    let rep = verify::check_smoothness(&ProjectiveNorm::default(), &smoothness_cfg(200, 1e-9)).unwrap();
    timed_suite(rep, start, Duration::from_secs(120))
}

fn c3() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut passed = true;
    let mut n = 0;
    for p in [1.0, 1.5, 2.0] {
        let rep = verify::check_smoothness(&SigmaNorm::new(p).unwrap(), &smoothness_cfg(200, 1e-5)).unwrap();
        worst = worst.max(rep.max_deviation);
        passed &= rep.verdict == Verdict::Pass;
        n += rep.samples.len();
    }
    let took = start.elapsed();
    Outcome {
        passed: passed && took <= Duration::from_secs(180),
        detail: format!("{n} samples over p = 1, 1.5, 2, max deviation {worst:.3e}, {:.1}s of 180s", took.as_secs_f64()),
    }
}

fn c4() -> Outcome {
    let s = TensorSpace::ellp(&[3, 3], 2.0).unwrap();
    let mut worst_eps = 0.0f64;
    let mut worst_gap = 0.0f64;
    let mut contained = true;
    for seed in 0..50 {
        let z = random_tensor(&s, 5000 + seed, RandomStyle::Dense);
        // Oracle: singular values straight from the coefficient matrix.
        let sv = DMatrix::from_row_slice(3, 3, z.coeffs()).singular_values();
        let (top, nuclear) = (sv.max(), sv.sum());
        let e = injective::epsilon_estimate(&z, &EpsilonConfig::default()).unwrap();
        worst_eps = worst_eps.max((e.lower - top).abs() / top);
        let pi = projective::pi_estimate(&z, &ProjectiveConfig::default()).unwrap();
        contained &= pi.lower <= nuclear * (1.0 + 1e-9) && nuclear <= pi.upper * (1.0 + 1e-9);
        worst_gap = worst_gap.max((pi.upper - pi.lower) / nuclear);
    }
    Outcome {
        passed: worst_eps <= 1e-6 && contained && worst_gap <= 1e-3,
        detail: format!("eps max rel error {worst_eps:.3e}, pi bracket contains nuclear norm: {contained}, max gap {worst_gap:.3e}"),
    }
}

/// Extreme points of the dual unit ball of an unweighted ℓ1 or ℓ∞ space.
fn dual_extremes(s: &NormedSpace) -> Vec<Vec<f64>> {
    let d = s.dim();
    if s.p().is_one() {
        (0..1u32 << d).map(|m| (0..d).map(|k| if m >> k & 1 == 1 { -1.0 } else { 1.0 }).collect()).collect()
    } else {
        let mut out = Vec::new();
        for k in 0..d {
            for sgn in [1.0, -1.0] {
                let mut v = vec![0.0; d];
                v[k] = sgn;
                out.push(v);
            }
        }
        out
    }
}

fn enumerate_oracle(z: &Tensor) -> f64 {
    let f = z.space().factors();
    let pts: Vec<Vec<Vec<f64>>> = f.iter().map(dual_extremes).collect();
    let mut idx = vec![0usize; f.len()];
    let mut best = 0.0f64;
    loop {
        let fs: Vec<Vec<f64>> = idx.iter().enumerate().map(|(l, &i)| pts[l][i].clone()).collect();
        best = best.max(z.eval_functionals(&fs).unwrap().abs());
        let mut l = 0;
        loop {
            if l == idx.len() {
                return best;
            }
            idx[l] += 1;
            if idx[l] < pts[l].len() {
                break;
            }
            idx[l] = 0;
            l += 1;
        }
    }
}

fn c5() -> Outcome {
    let mut r = rng::rng(55);
    let mut worst = 0.0f64;
    for k in 0..50u64 {
        let n = 2 + rng::index(&mut r, 2);
        let factors: Vec<NormedSpace> = (0..n)
            .map(|_| {
                let d = 2 + rng::index(&mut r, 2);
                let p = if rng::index(&mut r, 2) == 0 { 1.0 } else { f64::INFINITY };
                NormedSpace::ellp(d, p).unwrap()
            })
            .collect();
        let z = random_tensor(&TensorSpace::new(factors).unwrap(), 700 + k, RandomStyle::Dense);
        let oracle = enumerate_oracle(&z);
        let alt = injective::epsilon_search(&z, &EpsilonConfig::default()).value;
        worst = worst.max((alt - oracle).abs() / oracle);
    }
    let i2 = Tensor::new(TensorSpace::ellp(&[2, 2], 1.0).unwrap(), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let v = injective::epsilon_estimate(&i2, &EpsilonConfig::default()).unwrap();
    Outcome {
        passed: worst <= 1e-9 && v.lower == 2.0 && v.upper == 2.0,
        detail: format!("alternating vs enumeration max rel error {worst:.3e}; I2 on l1 x l1 gives [{}, {}]", v.lower, v.upper),
    }
}

fn c6() -> Outcome {
    let norms: Vec<Box<dyn TensorNormEvaluator>> = vec![
        Box::new(EpsilonNorm::default()),
        Box::new(ProjectiveNorm::default()),
        Box::new(SigmaNorm::new(1.5).unwrap()),
    ];
    let mut worst_elem = 0.0f64;
    let mut sandwich = true;
    let cfg = smoothness_cfg(100, 1e-6);
    let sig = SigmaNorm::new(1.5).unwrap();
    for b in &norms {
        let rep = verify::check_crossnorm(b.as_ref(), &SuiteConfig { samples: 20, ..cfg.clone() }).unwrap();
        for s in rep.samples.iter().filter(|s| s.kind == "elementary") {
            worst_elem = worst_elem.max(s.deviation);
        }
    }
    for seed in 0..100 {
        let shape = &cfg.shapes[seed % cfg.shapes.len()];
        let p = [1.0, 1.5, 2.0, 3.0][seed % 4];
        let z = random_tensor(&TensorSpace::ellp(shape, p).unwrap(), 900 + seed as u64, RandomStyle::Dense);
        let e = injective::epsilon_search(&z, &EpsilonConfig::default()).value;
        let pi = projective::pi_upper(&z, &ProjectiveConfig::default()).unwrap().value;
        let s = sig.value(&z).unwrap();
        sandwich &= e <= s + 1e-9 && e <= pi + 1e-9;
    }
    Outcome {
        passed: worst_elem <= 1e-6 && sandwich,
        detail: format!("elementary max rel error {worst_elem:.3e} over eps, pi, sigma_1.5; sandwich on 100 samples: {sandwich}"),
    }
}

fn c7() -> Outcome {
    let cfg = SuiteConfig {
        samples: 50,
        seed: 77,
        shapes: vec![vec![2], vec![3], vec![2, 2], vec![2, 3], vec![3, 3], vec![2, 2, 2], vec![3, 2, 3]],
        tolerance: 1e-4,
        ..SuiteConfig::default()
    };
    let rep = verify::check_representation(RepresentationPair::SupPi, &cfg).unwrap();
    Outcome {
        passed: rep.verdict == Verdict::Pass,
        detail: format!("{} maps, max deviation {:.3e}", rep.samples.len(), rep.max_deviation),
    }
}

fn c8() -> Outcome {
    let mut lines = Vec::new();
    let mut passed = true;
    let suites: Vec<(Box<dyn TensorNormEvaluator>, f64)> = vec![
        (Box::new(ProjectiveNorm::default()), 1e-9),
        (Box::new(EpsilonNorm::default()), 1e-6),
        (Box::new(SigmaNorm::new(2.0).unwrap()), 1e-5),
    ];
    for (b, tol) in &suites {
        let rep = verify::check_property_b(b.as_ref(), &smoothness_cfg(12, *tol)).unwrap();
        passed &= rep.verdict == Verdict::Pass;
        lines.push(format!("{} {:.1e}", b.name(), rep.max_deviation));
    }
    let mut exact = true;
    for n in 1..=4 {
        let e = ideal::sup_norm(&MultilinearMap::multiplication(n).unwrap(), &EpsilonConfig::default()).unwrap();
        exact &= e.lower == 1.0 && e.upper == 1.0;
    }
    Outcome {
        passed: passed && exact,
        detail: format!("max deviations {}; multiplication form exactly 1: {exact}", lines.join(", ")),
    }
}

fn c9() -> Outcome {
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let pool = [1.0, 1.5, 2.0, f64::INFINITY];
    let cfg = SigmaConfig { restarts: 2, family_max: 3, iters: 300, ..SigmaConfig::default() };
    let check = AscentConfig { restarts: 32, max_iters: 2000, tol: 1e-13, seed: 1 };
    for k in 0..20u64 {
        let mut r = rng::rng(9000 + k);
        let p = [1.0, 1.5, 2.0][k as usize % 3];
        let factors: Vec<NormedSpace> =
            (0..2).map(|_| NormedSpace::ellp(2, pool[rng::index(&mut r, pool.len())]).unwrap()).collect();
        let s = TensorSpace::new(factors.clone()).unwrap();
        let a = random_tensor(&s, 9100 + k, RandomStyle::Dense);
        let c = sigma::sigma_p_dual(&a, ex(p), &cfg).unwrap().value;
        for _ in 0..50 {
            let m = 1 + rng::index(&mut r, 4);
            let fam = Family {
                vectors: factors.iter().map(|f| (0..m).map(|_| rng::normal_vec(&mut r, f.dim())).collect()).collect(),
            };
            let lhs: f64 = {
                let vals: Vec<f64> = (0..m)
                    .map(|j| a.eval_functionals(&[fam.vectors[0][j].clone(), fam.vectors[1][j].clone()]).unwrap())
                    .collect();
                tnl_core::spaces::lp_norm(&vals, ex(p))
            };
            let mp = sigma::family_modulus_p(&fam, &factors, ex(p), &check, 1 << 16).unwrap().lower;
            let excess = lhs - c * mp;
            worst = worst.max(excess / (c * mp));
            if excess > 1e-9 * (c * mp).max(1.0) {
                violations += 1;
            }
        }
    }
    // 20 maps x 50 families = 1000 families.
    Outcome {
        passed: violations == 0,
        detail: format!("1000 families, {violations} violations, worst relative slack {worst:.3e}"),
    }
}

fn c10() -> Outcome {
    let two = ex(2.0);
    let cfg = SummingConfig::default();
    let l2 = NormedSpace::ellp(2, 2.0).unwrap();
    let id = MultilinearMap::new(vec![l2.clone()], l2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let v = ideal::sm_pq_norm(&id, two, two, &cfg).unwrap().lower;
    let mut dominated = true;
    let small = SummingConfig { family_budget: 2, restarts: 1, iters: 40, ..cfg };
    for k in 0..6u64 {
        let p = [1.5, 2.0, 3.0][k as usize % 3];
        let s = TensorSpace::ellp(&[2, 2], p).unwrap();
        let a = MultilinearMap::from_form(&random_tensor(&s, 1000 + k, RandomStyle::Dense));
        let sm = ideal::sm_pq_norm(&a, two, ex(1.5), &small).unwrap().lower;
        let sup = ideal::sup_norm(&a, &EpsilonConfig::default()).unwrap().lower;
        dominated &= sm >= sup - 1e-9;
    }
    let zero = MultilinearMap::scalar(vec![NormedSpace::ellp(2, 2.0).unwrap()], vec![0.0, 0.0]).unwrap();
    let z = ideal::sm_pq_norm(&zero, two, two, &cfg).unwrap().lower;
    Outcome {
        passed: dominated && (v - 2f64.sqrt()).abs() <= 2e-2 && z == 0.0,
        detail: format!("identity on l2^2 gives {v:.5} (sqrt 2 = 1.41421); sm >= sup on all samples: {dominated}"),
    }
}

fn c11() -> Outcome {
    let cfg = smoothness_cfg(8, 1e-6);
    let pi = ProjectiveNorm::default();
    let eps = EpsilonNorm::default();
    let sig = SigmaNorm::new(1.5).unwrap();
    let run = || -> Vec<String> {
        let reports = vec![
            verify::check_crossnorm(&eps, &cfg).unwrap(),
            verify::check_metric_mapping(&pi, &cfg).unwrap(),
            verify::check_smoothness(&sig, &cfg).unwrap(),
            verify::check_property_b(&eps, &cfg).unwrap(),
            verify::check_representation(RepresentationPair::SupPi, &cfg).unwrap(),
            verify::check_bidual(&pi, &SuiteConfig { samples: 4, ..cfg.clone() }).unwrap(),
        ];
        let mut out: Vec<String> = reports.iter().map(|r| r.to_json().unwrap()).collect();
        out.push(verify::reports_to_csv(&reports).unwrap());
        out
    };
    let first = run();
    let second = run();
    Outcome {
        passed: first == second,
        detail: format!("{} reports and a CSV summary, byte-identical on rerun: {}", first.len() - 1, first == second),
    }
}

fn c12() -> Outcome {
    let s = TensorSpace::ellp(&[2, 2], 1.5).unwrap();
    let controls: Vec<(Box<dyn TensorNormEvaluator>, f64)> = vec![
        (Box::new(ProjectiveNorm::default()), 1e-9),
        (Box::new(EpsilonNorm::default()), 1e-6),
        (Box::new(SigmaNorm::new(1.5).unwrap()), 1e-5),
    ];
    let mut passed = true;
    let mut lines = Vec::new();
    for (b, tol) in &controls {
        let rec = verify::witness_search_nonsmooth(b.as_ref(), &s, 16, 12).unwrap();
        passed &= rec.max_violation <= *tol;
        lines.push(format!("{} {:.1e}", b.name(), rec.max_violation));
    }
    let rec = verify::witness_search_nonsmooth(&BetaNorm::new(2.0).unwrap(), &s, 8, 12).unwrap();
    let recorded = rec.to_json().is_ok() && rec.best.is_some();
    Outcome {
        passed: passed && recorded,
        detail: format!("controls {}; beta_2 best violation {:.3e} recorded", lines.join(", "), rec.max_violation),
    }
}

fn main() {
    let criteria: Vec<(u32, &str, fn() -> Outcome)> = vec![
        (1, "eps smoothness", c1),
        (2, "pi smoothness", c2),
        (3, "sigma_p smoothness", c3),
        (4, "matrix oracles", c4),
        (5, "polyhedral exactness", c5),
        (6, "crossnorm and sandwich", c6),
        (7, "representation of L by pi", c7),
        (8, "property [B] and smoothness", c8),
        (9, "si,p soundness", c9),
        (10, "sm(p,q) sanity", c10),
        (11, "determinism", c11),
        (12, "witness negative controls", c12),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, name, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&k) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        let tag = if out.passed { "PASS" } else { "FAIL" };
        println!("criterion {k:>2} {tag} {name}: {} [{:.1}s]", out.detail, start.elapsed().as_secs_f64());
        if !out.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
