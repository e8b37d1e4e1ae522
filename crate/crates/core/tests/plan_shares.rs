use std::time::Instant;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tunekg::check::random_plan;
use tunekg::embed::{compute_operator_shares, compute_plan_shares};
use tunekg::PlanTree;

/// Direct evaluation of the broadcast sums, one column at a time.
fn brute_force(plan: &PlanTree, columns: &[tunekg::ColumnRef]) -> (Vec<f64>, Vec<f64>) {
    let cost_total: f64 = plan.nodes.iter().map(|n| n.est_cost).sum();
    let rows_total: f64 = plan.nodes.iter().map(|n| n.est_rows).sum();
    let mut cost = Vec::new();
    let mut rows = Vec::new();
    for u in columns {
        let mut c = 0.0;
        let mut r = 0.0;
        for p in &plan.nodes {
            if p.column_set.contains(u) {
                if cost_total > 0.0 {
                    c += p.est_cost / cost_total;
                }
                if rows_total > 0.0 {
                    r += p.est_rows / rows_total;
                }
            }
        }
        cost.push(c.min(1.0));
        rows.push(r.min(1.0));
    }
    (cost, rows)
}

#[test]
fn plan_shares_match_brute_force_on_random_plans() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xE01);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let rp = random_plan(&mut rng, 12, 8, false);
        let got = compute_plan_shares(&rp.plan, &rp.universe).unwrap();
        let (cost, rows) = brute_force(&rp.plan, &rp.universe.columns);
        for (a, b) in got.cost.iter().zip(&cost).chain(got.rows.iter().zip(&rows)) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst <= 1e-12, "max deviation {worst:e}");
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn singleton_partition_sums_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xE02);
    let mut checked = 0;
    for _ in 0..500 {
        let rp = random_plan(&mut rng, 12, 8, true);
        if rp.plan.total_cost() <= 0.0 {
            continue;
        }
        checked += 1;
        let s = compute_plan_shares(&rp.plan, &rp.universe).unwrap();
        let sum: f64 = s.cost.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-9, "sum {sum}");
    }
    assert!(checked > 400);
}

proptest! {
    #[test]
    fn operator_shares_partition_unity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rp = random_plan(&mut rng, 12, 8, false);
        let ops = compute_operator_shares(&rp.plan, &rp.universe).unwrap();
        let sum: f64 = ops.by_operator.values().sum();
        if rp.plan.total_cost() > 0.0 {
            prop_assert!((sum - 1.0).abs() <= 1e-9, "sum {}", sum);
        } else {
            prop_assert_eq!(sum, 0.0);
            prop_assert!(ops.degenerate);
        }
    }

    #[test]
    fn shares_are_scale_invariant(seed in any::<u64>(), k in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rp = random_plan(&mut rng, 12, 8, false);
        let mut scaled = rp.plan.clone();
        for n in &mut scaled.nodes {
            n.est_cost *= k;
        }
        let a = compute_plan_shares(&rp.plan, &rp.universe).unwrap();
        let b = compute_plan_shares(&scaled, &rp.universe).unwrap();
        for (x, y) in a.cost.iter().zip(&b.cost) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
        let oa = compute_operator_shares(&rp.plan, &rp.universe).unwrap();
        let ob = compute_operator_shares(&scaled, &rp.universe).unwrap();
        for (x, y) in oa.by_operator.values().zip(ob.by_operator.values()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn shares_stay_in_unit_interval(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rp = random_plan(&mut rng, 12, 8, false);
        let s = compute_plan_shares(&rp.plan, &rp.universe).unwrap();
        for v in s.cost.iter().chain(&s.rows) {
            prop_assert!((0.0..=1.0).contains(v));
        }
    }
}
