//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero if any fails.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::time::Instant;

use drfs_core::dataset::{parse_libsvm, standardize, synth, SynthParams};
use drfs_core::grid::{lambda_from_ratio, run_grid, GridRow, GridSpec};
use drfs_core::oracle::{brute_force_max, brute_force_v, verify_no_false_elimination};
use drfs_core::screening::{build_reference, dg_radius, dr_upper_bound, screen, ub_for_weight};
use drfs_core::solver::{dual_objective, duality_gap, primal_objective, recover_dual};
use drfs_core::{
    fit_weighted_erm, lambda_max, Dataset, DesignMatrix, FitConfig, GapTolerance, LossKind,
    SampleMode, Task, WeightBox,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const RATIOS: [f64; 2] = [0.1, 0.3];
const VS: [f64; 3] = [0.01, 0.1, 1.0];

fn synth_pair() -> Vec<(Dataset, LossKind)> {
    [
        (Task::Regression, LossKind::Squared),
        (Task::BinaryClassification, LossKind::Logistic),
    ]
    .into_iter()
    .map(|(task, loss)| {
        let ds = synth(&SynthParams {
            task,
            n: 40,
            d: 15,
            sparsity: 3,
            noise: 0.1,
            seed: 1,
        })
        .unwrap()
        .dataset;
        (ds, loss)
    })
    .collect()
}

struct Config {
    ds: Dataset,
    loss: LossKind,
    ratio: f64,
    v: f64,
}

fn configs() -> Vec<Config> {
    let mut out = Vec::new();
    for (ds, loss) in synth_pair() {
        for ratio in RATIOS {
            for v in VS {
                out.push(Config {
                    ds: ds.clone(),
                    loss,
                    ratio,
                    v,
                });
            }
        }
    }
    out
}

fn label(c: &Config) -> String {
    format!("{} ratio={} V={}", c.loss, c.ratio, c.v)
}

fn reference_for(c: &Config, tol: GapTolerance) -> (f64, WeightBox, drfs_core::ReferencePair) {
    let ones = vec![1.0; c.ds.n()];
    let lmax = lambda_max(&c.ds, &ones, c.loss).unwrap();
    let lambda = lambda_from_ratio(c.ratio, lmax).unwrap();
    let model = fit_weighted_erm(
        &c.ds,
        &ones,
        c.loss,
        lambda,
        &FitConfig::default().with_gap_tolerance(tol),
    )
    .unwrap();
    let wbox = WeightBox::from_v(c.v, c.ds.n()).unwrap();
    let reference = build_reference(&model, &c.ds, c.loss, &wbox).unwrap();
    (lambda, wbox, reference)
}

fn safety() -> Outcome {
    let mut removed_total = 0;
    let mut trials_total = 0;
    for c in configs() {
        let (lambda, wbox, reference) = reference_for(&c, FitConfig::default().gap_tolerance);
        let rep = screen(&c.ds, &reference, lambda, &wbox).map_err(|e| e.to_string())?;
        let out = verify_no_false_elimination(&c.ds, c.loss, lambda, &wbox, &rep, 500, 17)
            .map_err(|e| e.to_string())?;
        if !out.violations.is_empty() {
            let v = &out.violations[0];
            return Err(format!(
                "{}: {} violations, first feature {} |b|={:e}",
                label(&c),
                out.violations.len(),
                v.feature,
                v.coefficient
            ));
        }
        if !out.inconclusive.is_empty() {
            return Err(format!(
                "{}: {} inconclusive trials",
                label(&c),
                out.inconclusive.len()
            ));
        }
        removed_total += rep.removed_count();
        trials_total += out.trials;
    }
    Ok(format!(
        "{trials_total} re-solves, {removed_total} removed features checked"
    ))
}

fn polytope() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for n in 2..=8 {
        for delta in [0.05, 0.3, 0.9] {
            let b = WeightBox::new(n, delta).unwrap();
            for _ in 0..100 {
                let c: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
                let e1 =
                    (b.max_linear(&c).unwrap() - brute_force_max(&c, &b, false).unwrap()).abs();
                let e2 = (b.max_linear_squared(&c).unwrap()
                    - brute_force_max(&c, &b, true).unwrap())
                .abs();
                worst = worst.max(e1).max(e2);
            }
            let ev = (brute_force_v(&b).unwrap() - b.v()).abs();
            worst = worst.max(ev);
        }
    }
    if worst <= 1e-12 {
        Ok(format!("max deviation {worst:e}"))
    } else {
        Err(format!("max deviation {worst:e} > 1e-12"))
    }
}

fn dominance() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for (k, c) in configs().into_iter().enumerate() {
        let (_, wbox, reference) = reference_for(&c, FitConfig::default().gap_tolerance);
        let bounds: Vec<f64> = (0..c.ds.d())
            .map(|j| dr_upper_bound(j, &reference, &c.ds, &wbox).unwrap())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        for s in 0..1000 {
            let mode = if s % 2 == 0 {
                SampleMode::Corner
            } else {
                SampleMode::Interior
            };
            let w = wbox.sample(&mut rng, mode);
            for (j, &b) in bounds.iter().enumerate() {
                let u =
                    ub_for_weight(j, &w, &reference, &c.ds, &wbox).map_err(|e| e.to_string())?;
                worst = worst.max(u - b);
                if u > b + 1e-9 {
                    return Err(format!("{}: feature {j} {u} > {b}", label(&c)));
                }
            }
        }
    }
    Ok(format!("max excess {worst:e}"))
}

fn ball_containment() -> Outcome {
    let mut worst_ratio = 0.0f64;
    let cfg = FitConfig::default().with_gap_tolerance(GapTolerance::Absolute(1e-11));
    for (k, c) in configs().into_iter().enumerate() {
        let (lambda, wbox, reference) = reference_for(&c, FitConfig::default().gap_tolerance);
        let mut rng = ChaCha8Rng::seed_from_u64(200 + k as u64);
        for s in 0..50 {
            let mode = if s % 2 == 0 {
                SampleMode::Corner
            } else {
                SampleMode::Interior
            };
            let w = wbox.sample(&mut rng, mode);
            let m = fit_weighted_erm(&c.ds, &w, c.loss, lambda, &cfg).map_err(|e| e.to_string())?;
            let alpha_hat = reference.scaled_dual(&w);
            let g = duality_gap(
                &c.ds,
                &w,
                c.loss,
                lambda,
                &reference.b,
                reference.b0,
                &alpha_hat,
            )
            .map_err(|e| e.to_string())?;
            let r = dg_radius(g, c.loss.nu(), wbox.delta()).unwrap();
            let dist = m
                .alpha
                .iter()
                .zip(&alpha_hat)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            if dist > r * (1.0 + 1e-6) {
                return Err(format!("{}: distance {dist:e} > radius {r:e}", label(&c)));
            }
            if r > 0.0 {
                worst_ratio = worst_ratio.max(dist / r);
            }
        }
    }
    Ok(format!("max distance/radius {worst_ratio:.4}"))
}

fn endpoints() -> Outcome {
    let mut notes = Vec::new();
    for (ds, loss) in synth_pair() {
        let ones = vec![1.0; ds.n()];
        let lmax = lambda_max(&ds, &ones, loss).unwrap();
        let at = fit_weighted_erm(&ds, &ones, loss, lmax, &FitConfig::default())
            .map_err(|e| e.to_string())?;
        let peak = at.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 1e-8 {
            return Err(format!("{loss}: ||b||_inf = {peak:e} at lambda_max"));
        }
        let below = fit_weighted_erm(&ds, &ones, loss, 0.99 * lmax, &FitConfig::default())
            .map_err(|e| e.to_string())?;
        let peak_below = below.b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak_below <= 0.0 {
            return Err(format!("{loss}: zero solution at 0.99 lambda_max"));
        }
        let c = Config {
            ds,
            loss,
            ratio: 1.0,
            v: 0.0,
        };
        let (lambda, wbox, reference) = reference_for(&c, FitConfig::default().gap_tolerance);
        let rep = screen(&c.ds, &reference, lambda, &wbox).map_err(|e| e.to_string())?;
        if rep.removed_ratio() != 1.0 {
            return Err(format!(
                "{loss}: removed ratio {} at lambda_max",
                rep.removed_ratio()
            ));
        }
        notes.push(format!("{loss}: ||b|| below = {peak_below:.3e}"));
    }
    Ok(notes.join("; "))
}

fn delta_zero() -> Outcome {
    let mut checked = 0;
    for (ds, loss) in synth_pair() {
        for ratio in [0.05, 0.1, 0.3, 0.7] {
            let c = Config {
                ds: ds.clone(),
                loss,
                ratio,
                v: 0.0,
            };
            let (lambda, wbox, reference) = reference_for(&c, GapTolerance::Absolute(1e-10));
            if reference.gap > 1e-10 {
                return Err(format!("{}: reference gap {:e}", label(&c), reference.gap));
            }
            let rep = screen(&c.ds, &reference, lambda, &wbox).map_err(|e| e.to_string())?;
            for j in 0..ds.d() {
                let corr: f64 = reference
                    .alpha_star
                    .iter()
                    .zip(ds.x().column(j))
                    .map(|(a, x)| a * x)
                    .sum::<f64>()
                    .abs();
                let classic = corr < lambda * (1.0 - 1e-12);
                if classic != rep.removed[j] {
                    return Err(format!(
                        "{}: feature {j} classic={classic} screened={} (|c|/lambda = {})",
                        label(&c),
                        rep.removed[j],
                        corr / lambda
                    ));
                }
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} fits, sets identical"))
}

fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn load(name: &str, task: Task) -> Dataset {
    let f = File::open(data_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    let raw = parse_libsvm(BufReader::new(f), task).unwrap();
    standardize(&raw).unwrap().0
}

fn ratio_at(rows: &[GridRow], v: f64, ratio: f64) -> f64 {
    rows.iter()
        .find(|r| r.v == v && r.lambda_ratio == ratio)
        .map(|r| r.removed_ratio)
        .unwrap()
}

fn figure_grid() -> Outcome {
    let mut notes = Vec::new();
    for (name, task, loss, n, d) in [
        (
            "housing.libsvm",
            Task::Regression,
            LossKind::Squared,
            506,
            13,
        ),
        (
            "australian.libsvm",
            Task::BinaryClassification,
            LossKind::Logistic,
            690,
            14,
        ),
    ] {
        let ds = load(name, task);
        if (ds.n(), ds.d()) != (n, d) {
            return Err(format!("{name}: shape {}x{}", ds.n(), ds.d()));
        }
        let spec = GridSpec::standard(loss);
        let rows = run_grid(&ds, &spec, &FitConfig::default()).map_err(|e| e.to_string())?;
        if rows.len() != spec.v_values.len() * spec.lambda_ratios.len() {
            return Err(format!("{name}: {} rows", rows.len()));
        }
        if let Some(r) = rows
            .iter()
            .find(|r| !(0.0..=1.0).contains(&r.removed_ratio))
        {
            return Err(format!("{name}: ratio {} out of range", r.removed_ratio));
        }
        for &ratio in &spec.lambda_ratios {
            let series: Vec<f64> = spec
                .v_values
                .iter()
                .map(|&v| ratio_at(&rows, v, ratio))
                .collect();
            if loss == LossKind::Squared && series.windows(2).any(|p| p[1] > p[0]) {
                return Err(format!(
                    "{name}: ratio increases with V at lambda ratio {ratio}: {series:?}"
                ));
            }
            if series.last().unwrap() > &series[0] {
                return Err(format!(
                    "{name}: ratio at V=1 exceeds V=0 at lambda ratio {ratio}"
                ));
            }
        }
        if ratio_at(&rows, 0.0, 1.0) != 1.0 {
            return Err(format!(
                "{name}: ratio at (V=0, lambda_max) is {}",
                ratio_at(&rows, 0.0, 1.0)
            ));
        }
        let summary: Vec<String> = spec
            .lambda_ratios
            .iter()
            .map(|&r| {
                format!(
                    "{:.2}->{:.2}",
                    ratio_at(&rows, 0.0, r),
                    ratio_at(&rows, 1.0, r)
                )
            })
            .collect();
        notes.push(format!("{name} [{}]", summary.join(" ")));
    }
    Ok(notes.join("; "))
}

fn numerics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sign = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };

    let mut fy_worst = 0.0f64;
    for k in 0..1000 {
        let loss = if k % 2 == 0 {
            LossKind::Squared
        } else {
            LossKind::Logistic
        };
        let y = if loss == LossKind::Squared {
            rng.random_range(-5.0..5.0)
        } else {
            sign(&mut rng)
        };
        let t: f64 = rng.random_range(-10.0..10.0);
        let a = loss.dual_from_margin(y, t).unwrap();
        let e = (loss.value(y, t).unwrap() + loss.conjugate_neg(y, a).unwrap() + a * t).abs();
        fy_worst = fy_worst.max(e);
    }
    if fy_worst > 1e-10 {
        return Err(format!("Fenchel-Young residual {fy_worst:e}"));
    }

    let mut wd_worst = f64::INFINITY;
    for k in 0..1000 {
        let loss = if k % 2 == 0 {
            LossKind::Squared
        } else {
            LossKind::Logistic
        };
        let (n, d) = (rng.random_range(3..12), rng.random_range(1..6));
        let cols: Vec<Vec<f64>> = (0..d)
            .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let mut y: Vec<f64> = (0..n)
            .map(|_| {
                if loss == LossKind::Squared {
                    rng.random_range(-3.0..3.0)
                } else {
                    sign(&mut rng)
                }
            })
            .collect();
        if loss == LossKind::Logistic {
            y[0] = 1.0;
            y[1] = -1.0;
        }
        let task = if loss == LossKind::Squared {
            Task::Regression
        } else {
            Task::BinaryClassification
        };
        let ds = Dataset::new(DesignMatrix::from_columns(cols).unwrap(), y, None, task).unwrap();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let lambda = rng.random_range(0.05..3.0);
        let b: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b0 = rng.random_range(-1.0..1.0);
        let bd: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let alpha = recover_dual(&ds, &w, loss, lambda, &bd, rng.random_range(-1.0..1.0)).unwrap();
        let p = primal_objective(&ds, &w, loss, lambda, &b, b0).unwrap();
        let dv = dual_objective(&ds, &w, loss, &alpha).unwrap().value();
        // The logistic repaired point only satisfies the equality constraint
        // approximately, so the b0 term is accounted for explicitly.
        let drift = b0 * alpha.iter().zip(&w).map(|(a, w)| a * w).sum::<f64>();
        wd_worst = wd_worst.min(p - dv + drift);
    }
    if wd_worst < -1e-10 {
        return Err(format!("weak duality violated by {wd_worst:e}"));
    }

    let mut lip_worst = 0.0f64;
    for k in 0..1000 {
        let loss = if k % 2 == 0 {
            LossKind::Squared
        } else {
            LossKind::Logistic
        };
        let y = if loss == LossKind::Squared {
            rng.random_range(-5.0..5.0)
        } else {
            sign(&mut rng)
        };
        let (t1, t2): (f64, f64) = (rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        let lhs = (loss.derivative(y, t1).unwrap() - loss.derivative(y, t2).unwrap()).abs();
        lip_worst = lip_worst.max(lhs - loss.nu() * (t1 - t2).abs());
    }
    if lip_worst > 1e-12 {
        return Err(format!(
            "derivative Lipschitz bound exceeded by {lip_worst:e}"
        ));
    }

    for _ in 0..1000 {
        let y = sign(&mut rng);
        for p in [0.0, 1.0] {
            if LossKind::Logistic.conjugate_neg(y, p * y).unwrap() != 0.0 {
                return Err(format!("conjugate at y*alpha={p} is not 0"));
            }
        }
        let outside = if rng.random_bool(0.5) {
            rng.random_range(1.0001..5.0)
        } else {
            -rng.random_range(1e-4..5.0)
        };
        if LossKind::Logistic.conjugate_neg(y, outside * y).is_ok() {
            return Err(format!("conjugate accepted y*alpha={outside}"));
        }
    }
    Ok(format!(
        "FY {fy_worst:.1e}, min gap {wd_worst:.1e}, Lipschitz slack ok"
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("safety under sampled weights", safety),
        ("polytope maximization matches enumeration", polytope),
        ("uniform bound dominates per-weight bounds", dominance),
        (
            "weighted dual optimum lies in the gap ball",
            ball_containment,
        ),
        ("lambda_max endpoints", endpoints),
        ("delta = 0 reduces to classic gap screening", delta_zero),
        ("removed-ratio grid on housing and australian", figure_grid),
        ("loss numerics", numerics),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let res = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(msg) => println!("PASS [{}] {name} ({secs:.1}s): {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL [{}] {name} ({secs:.1}s): {msg}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
