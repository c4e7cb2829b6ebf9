use drfs_core::dataset::{synth, SynthParams};
use drfs_core::grid::lambda_from_ratio;
use drfs_core::oracle::verify_no_false_elimination;
use drfs_core::screening::{build_reference, screen};
use drfs_core::solver::{dual_objective, primal_objective};
use drfs_core::{fit_weighted_erm, lambda_max, FitConfig, LossKind, Task, WeightBox};
use proptest::prelude::*;

fn setup(task: Task, n: usize, d: usize, seed: u64) -> (drfs_core::Dataset, LossKind) {
    let loss = if task == Task::Regression {
        LossKind::Squared
    } else {
        LossKind::Logistic
    };
    let ds = synth(&SynthParams {
        task,
        n,
        d,
        sparsity: 2.min(d),
        noise: 0.2,
        seed,
    })
    .unwrap()
    .dataset;
    (ds, loss)
}

fn task_strategy() -> impl Strategy<Value = Task> {
    prop_oneof![Just(Task::Regression), Just(Task::BinaryClassification)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Small n: the oracle enumerates every corner of the box.
    #[test]
    fn no_false_elimination_on_every_corner(
        task in task_strategy(),
        seed in 0u64..1000,
        ratio in 0.05f64..1.0,
        v in 0.0f64..3.0,
    ) {
        let (ds, loss) = setup(task, 10, 6, seed);
        let ones = vec![1.0; ds.n()];
        let lam = lambda_from_ratio(ratio, lambda_max(&ds, &ones, loss).unwrap()).unwrap();
        let m = fit_weighted_erm(&ds, &ones, loss, lam, &FitConfig::default()).unwrap();
        let wbox = WeightBox::from_v(v, ds.n()).unwrap();
        let r = build_reference(&m, &ds, loss, &wbox).unwrap();
        let rep = screen(&ds, &r, lam, &wbox).unwrap();
        let out = verify_no_false_elimination(&ds, loss, lam, &wbox, &rep, 1, seed).unwrap();
        prop_assert_eq!(out.trials as u128, wbox.corner_count());
        prop_assert!(out.passed(), "{:?} {:?}", out.violations, out.inconclusive);
    }

    #[test]
    fn optimum_certifies_its_gap(task in task_strategy(), seed in 0u64..1000, ratio in 0.02f64..1.0) {
        let (ds, loss) = setup(task, 30, 8, seed);
        let ones = vec![1.0; ds.n()];
        let lam = ratio * lambda_max(&ds, &ones, loss).unwrap();
        let m = fit_weighted_erm(&ds, &ones, loss, lam, &FitConfig::default()).unwrap();
        let p = primal_objective(&ds, &ones, loss, lam, &m.b, m.b0).unwrap();
        let dv = dual_objective(&ds, &ones, loss, &m.alpha).unwrap().value();
        prop_assert!(m.gap <= m.gap_tolerance);
        prop_assert!(p - dv >= -1e-10);
        prop_assert!(p - dv <= m.gap_tolerance + 1e-9 * p.abs());
    }

    #[test]
    fn squared_removed_set_shrinks_with_v(seed in 0u64..1000, ratio in 0.05f64..1.0) {
        let (ds, loss) = setup(Task::Regression, 30, 8, seed);
        let ones = vec![1.0; ds.n()];
        let lam = lambda_from_ratio(ratio, lambda_max(&ds, &ones, loss).unwrap()).unwrap();
        let m = fit_weighted_erm(&ds, &ones, loss, lam, &FitConfig::default()).unwrap();
        let mut prev: Option<Vec<bool>> = None;
        for v in [0.0, 0.001, 0.01, 0.1, 1.0, 10.0] {
            let wbox = WeightBox::from_v(v, ds.n()).unwrap();
            let r = build_reference(&m, &ds, loss, &wbox).unwrap();
            let rep = screen(&ds, &r, lam, &wbox).unwrap();
            if let Some(p) = &prev {
                for (a, b) in p.iter().zip(&rep.removed) {
                    prop_assert!(!(*b && !*a));
                }
            }
            prev = Some(rep.removed);
        }
    }
}
