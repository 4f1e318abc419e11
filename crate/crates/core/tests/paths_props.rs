use fracbd::linear::{p1j_classical, LinearParams};
use fracbd::mlf::FracOrder;
use fracbd::model::RateSchedule;
use fracbd::paths::{estimate_pmfs, simulate_renewal, SimMethod};
use fracbd::stable::RngStream;
use proptest::prelude::*;

#[test]
fn unit_order_simulation_matches_closed_form() {
    let p = LinearParams::new(0.5, 1.0).unwrap();
    for method in [SimMethod::Renewal, SimMethod::Timechange] {
        let pmfs = estimate_pmfs(method, &p.rates(), FracOrder::ONE, 1, &[0.5, 2.0], 40_000, 17).unwrap();
        for pmf in &pmfs {
            for j in 1..=4 {
                let want = p1j_classical(&p, j, pmf.time).unwrap();
                let se = pmf.binomial_se(want);
                assert!((pmf.get(j) - want).abs() <= 4.0 * se, "{method:?} t={} j={j}", pmf.time);
            }
        }
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let r = RateSchedule::linear(0.5, 1.0).unwrap();
    let a = FracOrder::new(0.7).unwrap();
    let run = |w| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .unwrap()
            .install(|| estimate_pmfs(SimMethod::Timechange, &r, a, 2, &[1.0, 3.0], 3000, 99).unwrap())
    };
    assert_eq!(run(1), run(4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn renewal_paths_are_nearest_neighbour(
        l in 0.1f64..2.0, m in 0.1f64..2.0, a in 0.2f64..=1.0, i0 in 1usize..6, seed in any::<u64>()
    ) {
        let r = RateSchedule::linear(l, m).unwrap();
        let path = simulate_renewal(&r, FracOrder::new(a).unwrap(), i0, 5.0, &mut RngStream::new(seed, 0).rng())
            .unwrap();
        prop_assert_eq!(path.states[0], i0);
        for w in path.states.windows(2) {
            prop_assert_eq!(w[0].abs_diff(w[1]), 1);
        }
        for w in path.epochs.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
        prop_assert_eq!(path.absorbed, *path.states.last().unwrap() == 0);
        prop_assert!(path.states[..path.states.len() - 1].iter().all(|&s| s > 0));
    }
}
