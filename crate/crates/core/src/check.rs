//! Built-in verification suite behind `tunekg check`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::column::ColumnRef;
use crate::embed::{
    compute_operator_shares, compute_plan_shares, ChannelRegistry, ColumnUniverse, DEFAULT_C_MAX,
};
use crate::model::{gradient_check_with, train, Architecture, RewardModel, Sample, TrainConfig};
use crate::plan::{from_document, PlanDocument, PlanTree};
use crate::scaler::{complement, LogMinMaxScaler};
use crate::sim::synth::{generate, Fixture};
use crate::sim::{parse_trace, Trace};

pub const ROUND_TRIP_PAIRS: usize = 100_000;
pub const PLAN_CASES: usize = 500;
pub const GRADIENT_TOLERANCE: f64 = 1e-4;
pub const PARTITION_TOLERANCE: f64 = 1e-9;

const NODE_TYPES: [&str; 10] = [
    "Seq Scan",
    "Index Scan",
    "Hash Join",
    "Merge Join",
    "Nested Loop",
    "Sort",
    "Aggregate",
    "Hash",
    "Limit",
    "Materialize",
];

/// Deliberate defects the suite can be run against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Scales every analytic gradient entry by 1.5 before comparison.
    Gradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// A random plan over `universe`. With `partition`, node `i` carries exactly
/// column `i` of the universe, so the universe has as many columns as nodes.
pub struct RandomPlan {
    pub plan: PlanTree,
    pub universe: ColumnUniverse,
}

fn column_name(i: usize) -> ColumnRef {
    ColumnRef::new(format!("t{}", i / 3), format!("c{}", i % 3))
}

/// Draws a tree of at most `max_nodes` nodes. Costs and rows are positive
/// except for occasional zeros; columns are drawn from at most `max_cols`.
pub fn random_plan<R: Rng>(
    rng: &mut R,
    max_nodes: usize,
    max_cols: usize,
    partition: bool,
) -> RandomPlan {
    let n = rng.random_range(1..=max_nodes);
    let ncols = if partition {
        n
    } else {
        rng.random_range(1..=max_cols)
    };
    let mut cols: Vec<ColumnRef> = (0..ncols).map(column_name).collect();
    cols.sort();

    let mut docs: Vec<PlanDocument> = (0..n)
        .map(|i| {
            let ty = NODE_TYPES[rng.random_range(0..NODE_TYPES.len())];
            let cost = if rng.random_bool(0.05) {
                0.0
            } else {
                rng.random_range(0.01..1e4)
            };
            let rows = rng.random_range(0.0..1e6);
            let set: Vec<String> = if partition {
                vec![cols[i].to_string()]
            } else {
                cols.iter()
                    .filter(|_| rng.random_bool(0.3))
                    .map(ToString::to_string)
                    .collect()
            };
            PlanDocument::leaf(ty, None, cost, rows).with_columns(set)
        })
        .collect();
    // attach node i > 0 under a random earlier node, building bottom-up
    let mut parent = vec![0usize; n];
    for (i, p) in parent.iter_mut().enumerate().skip(1) {
        *p = rng.random_range(0..i);
    }
    for i in (1..n).rev() {
        let child = docs[i].clone();
        docs[parent[i]].children.insert(0, child);
    }
    let plan = from_document("random", &docs[0], &cols).expect("generated plans are well formed");
    RandomPlan {
        plan,
        universe: ColumnUniverse { columns: cols },
    }
}

fn check_round_trip(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut worst = 0.0f64;
    let mut monotone = true;
    for _ in 0..ROUND_TRIP_PAIRS / 2 {
        let l_min = rng.random_range(0.0..5.0);
        let l_max = l_min + rng.random_range(0.1..12.0);
        let s = LogMinMaxScaler::from_bounds(l_min, l_max).expect("valid bounds");
        let (lo, hi) = (s.min_runtime(), s.max_runtime());
        let a = rng.random_range(lo..=hi);
        let b = rng.random_range(lo..=hi);
        for y in [a, b] {
            let back = s.phi_inv(s.phi(y).expect("in range")).expect("unit range");
            worst = worst.max((back - y).abs() / (1.0 + y));
        }
        let (pa, pb) = (s.phi(a).unwrap(), s.phi(b).unwrap());
        if (a < b && pa > pb) || (a > b && pa < pb) {
            monotone = false;
        }
    }
    CheckOutcome {
        name: "scaler round trip",
        passed: worst <= 1e-9 && monotone,
        detail: format!(
            "{ROUND_TRIP_PAIRS} pairs, max |φ⁻¹(φ(y)) − y|/(1+y) = {worst:e}, monotone = {monotone}"
        ),
    }
}

fn check_involution(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut failures = 0usize;
    let fixed = [0.0, 1.0, 0.5, 0.25, 2f64.powi(-53)];
    let draws = (0..ROUND_TRIP_PAIRS).map(|_| rng.random::<f64>());
    let mut total = 0usize;
    for x in fixed.into_iter().chain(draws) {
        total += 1;
        let jj = complement(complement(x).expect("unit")).expect("unit");
        if jj != x {
            failures += 1;
        }
    }
    CheckOutcome {
        name: "complement involution",
        passed: failures == 0,
        detail: format!("{total} values, {failures} with J(J(x)) ≠ x"),
    }
}

fn check_partition(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut worst_plan = 0.0f64;
    let mut worst_op = 0.0f64;
    let mut positive = 0usize;
    for _ in 0..PLAN_CASES {
        let rp = random_plan(rng, 12, 8, true);
        if rp.plan.total_cost() <= 0.0 {
            continue;
        }
        positive += 1;
        let shares = compute_plan_shares(&rp.plan, &rp.universe).expect("shares");
        worst_plan = worst_plan.max((shares.cost.iter().sum::<f64>() - 1.0).abs());
        let ops = compute_operator_shares(&rp.plan, &rp.universe).expect("shares");
        worst_op = worst_op.max((ops.by_operator.values().sum::<f64>() - 1.0).abs());
    }
    CheckOutcome {
        name: "plan share partition",
        passed: worst_plan <= PARTITION_TOLERANCE && worst_op <= PARTITION_TOLERANCE,
        detail: format!(
            "{positive} plans, max |Σ_u cost share − 1| = {worst_plan:e}, max |Σ_o share − 1| = {worst_op:e}"
        ),
    }
}

/// The favorable fixture parsed at the default width.
pub fn fixture_trace() -> Trace {
    parse_trace(&generate(Fixture::Favorable), DEFAULT_C_MAX).expect("packaged fixture parses")
}

/// One sample per (entry, arm) with rewards from a scaler fit on every runtime.
pub fn fixture_samples(trace: &Trace) -> Vec<Sample> {
    let all: Vec<f64> = trace
        .entries
        .iter()
        .flat_map(|e| e.runtimes_ms.iter().copied())
        .collect();
    let scaler = LogMinMaxScaler::fit(&all).expect("fixture runtimes vary");
    trace
        .entries
        .iter()
        .flat_map(|e| {
            e.runtimes_ms.iter().enumerate().map(|(arm, &y)| Sample {
                input: e.features.clone(),
                arm,
                target: scaler.reward_from_runtime(y).expect("in range"),
            })
        })
        .collect()
}

fn check_gradient(fault: Fault) -> CheckOutcome {
    let trace = fixture_trace();
    let samples = fixture_samples(&trace);
    let arch = Architecture::new(ChannelRegistry::v1().len(), DEFAULT_C_MAX, trace.arms.len());
    let init = RewardModel::init(arch, 7).expect("architecture is valid");
    let trained = train(
        &init,
        &samples[..80],
        &TrainConfig {
            epochs: 10,
            batch_size: 8,
            learning_rate: 0.05,
            seed: 7,
        },
    )
    .expect("training runs")
    .model;
    debug_assert_eq!(trained.steps, 100);

    let mut worst = 0.0f64;
    let mut passed = true;
    let mut detail = Vec::new();
    for (label, model) in [("init", &init), ("100 steps", &trained)] {
        for (k, s) in samples.iter().step_by(97).take(3).enumerate() {
            let r = gradient_check_with(model, s, GRADIENT_TOLERANCE, k as u64, |g| {
                if fault == Fault::Gradient {
                    g.iter_mut().for_each(|v| *v *= 1.5);
                }
            })
            .expect("shapes match");
            worst = worst.max(r.max_rel_error);
            passed &= r.passed();
            detail.push(format!("{label}#{k}: {} params", r.checked));
        }
    }
    CheckOutcome {
        name: "gradient check",
        passed,
        detail: format!(
            "max relative error {worst:e} (tolerance {GRADIENT_TOLERANCE:e}); {}",
            detail.join(", ")
        ),
    }
}

/// Runs every check with a fixed seed.
pub fn run_checks(fault: Fault) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e57);
    vec![
        check_round_trip(&mut rng),
        check_involution(&mut rng),
        check_partition(&mut rng),
        check_gradient(fault),
    ]
}
