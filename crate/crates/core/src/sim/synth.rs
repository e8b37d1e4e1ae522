//! Synthetic traces over a small question-and-answer schema.
//!
//! Each template fixes a SQL shape, a join tree, and per-arm runtime
//! multipliers. Plans are derived per arm from the knob each arm flips, so
//! the default arm's plan (which feeds the feature matrix) differs between
//! templates the way real EXPLAIN output would.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::trace::{default_environment, EntryDoc, TraceLine};
use crate::column::ColumnRef;
use crate::embed::{Catalog, ColumnTraits};
use crate::kg::ArmSpec;
use crate::plan::PlanDocument;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    /// Two long-tail templates stall under the default arm; arm 2 avoids it.
    Favorable,
    /// Arm 3 is best on common templates and catastrophic on rare ones.
    Adversarial,
    /// Arm 1 is never chosen by the optimizer's estimate, so batch 0 never runs it.
    UnseenArm,
}

impl Fixture {
    pub const ALL: [Fixture; 3] = [Fixture::Favorable, Fixture::Adversarial, Fixture::UnseenArm];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Favorable => "favorable",
            Fixture::Adversarial => "adversarial",
            Fixture::UnseenArm => "unseen_arm",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Join {
    Hash,
    Nested,
}

#[derive(Clone, Copy)]
enum Top {
    Aggregate(&'static [&'static str]),
    Sort(&'static [&'static str]),
    Limit,
}

struct Template {
    id: &'static str,
    /// Scanned relations, left-deep join order, with estimated rows.
    scans: &'static [(&'static str, f64)],
    /// Join keys for joins 1..n, as `(left column, right column)`.
    keys: &'static [(&'static str, &'static str)],
    join: Join,
    /// Applied bottom-up above the join tree.
    tops: &'static [Top],
    base_ms: f64,
    sql: fn(&mut ChaCha8Rng) -> String,
}

const CITIES: [&str; 6] = ["berlin", "london", "paris", "austin", "pune", "oslo"];
const BADGES: [&str; 5] = ["teacher", "editor", "critic", "scholar", "supporter"];
const TAGS: [&str; 6] = ["sql", "rust", "python", "java", "postgresql", "regex"];

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs[rng.random_range(0..xs.len())]
}

const RECENT: Template = Template {
    id: "recent_questions",
    scans: &[("posts", 4000.0)],
    keys: &[],
    join: Join::Hash,
    tops: &[Top::Sort(&["posts.score"]), Top::Limit],
    base_ms: 12.0,
    sql: |r| {
        format!(
            "SELECT p.id, p.title, p.score FROM posts p WHERE p.post_type_id = 1 AND p.creation_date > '2013-{:02}-01' ORDER BY p.score DESC LIMIT 20",
            r.random_range(1..=12)
        )
    },
};

const USER_REP: Template = Template {
    id: "user_reputation",
    scans: &[("users", 900.0)],
    keys: &[],
    join: Join::Hash,
    tops: &[Top::Sort(&["users.reputation"])],
    base_ms: 8.0,
    sql: |r| {
        format!(
            "SELECT u.display_name, u.reputation FROM users u WHERE u.location LIKE '%{}%' AND u.reputation > {} ORDER BY u.reputation DESC",
            pick(r, &CITIES),
            r.random_range(100..5000)
        )
    },
};

const POST_COMMENTS: Template = Template {
    id: "post_comments",
    scans: &[("posts", 300.0), ("comments", 2500.0)],
    keys: &[("comments.post_id", "posts.id")],
    join: Join::Hash,
    tops: &[Top::Aggregate(&["posts.id"])],
    base_ms: 25.0,
    sql: |r| {
        format!(
            "SELECT p.id, count(*) FROM posts p JOIN comments c ON c.post_id = p.id WHERE p.owner_user_id = {} GROUP BY p.id",
            r.random_range(1..100000)
        )
    },
};

const BADGE_HOLDERS: Template = Template {
    id: "badge_holders",
    scans: &[("badges", 1500.0)],
    keys: &[],
    join: Join::Hash,
    tops: &[Top::Aggregate(&["badges.user_id"])],
    base_ms: 6.0,
    sql: |r| {
        format!(
            "SELECT DISTINCT b.user_id FROM badges b WHERE b.name = '{}'",
            pick(r, &BADGES)
        )
    },
};

const VOTE_STALL: Template = Template {
    id: "vote_stall",
    scans: &[("posts", 20000.0), ("votes", 80000.0), ("users", 5000.0)],
    keys: &[
        ("votes.post_id", "posts.id"),
        ("users.id", "posts.owner_user_id"),
    ],
    join: Join::Nested,
    tops: &[Top::Aggregate(&["posts.id"])],
    base_ms: 90.0,
    sql: |r| {
        format!(
            "SELECT p.id, count(*) FROM posts p JOIN votes v ON v.post_id = p.id JOIN users u ON u.id = p.owner_user_id WHERE v.vote_type_id = {} AND u.reputation > {} GROUP BY p.id",
            r.random_range(1..=4),
            r.random_range(10..2000)
        )
    },
};

const ANSWER_CHAIN: Template = Template {
    id: "answer_chain",
    scans: &[
        ("posts", 15000.0),
        ("posts", 30000.0),
        ("comments", 60000.0),
    ],
    keys: &[
        ("posts.parent_id", "posts.id"),
        ("comments.post_id", "posts.id"),
    ],
    join: Join::Nested,
    tops: &[Top::Sort(&["comments.score"])],
    base_ms: 130.0,
    sql: |r| {
        format!(
            "SELECT q.id, a.id, c.score FROM posts q JOIN posts a ON a.parent_id = q.id JOIN comments c ON c.post_id = a.id WHERE q.tags LIKE '%{}%' ORDER BY c.score DESC",
            pick(r, &TAGS)
        )
    },
};

const REP_RANK: Template = Template {
    id: "reputation_rank",
    scans: &[("users", 12000.0)],
    keys: &[],
    join: Join::Hash,
    tops: &[Top::Sort(&["users.reputation"])],
    base_ms: 40.0,
    sql: |r| {
        format!(
            "SELECT u.id, rank() OVER (ORDER BY u.reputation DESC) FROM users u WHERE u.creation_date > '20{:02}-01-01'",
            r.random_range(9..=16)
        )
    },
};

const BADGE_POSTS: Template = Template {
    id: "badge_posts",
    scans: &[("posts", 8000.0), ("badges", 3000.0)],
    keys: &[("posts.owner_user_id", "badges.user_id")],
    join: Join::Hash,
    tops: &[],
    base_ms: 55.0,
    sql: |r| {
        format!(
            "SELECT p.id FROM posts p WHERE p.owner_user_id IN (SELECT b.user_id FROM badges b WHERE b.name = '{}')",
            pick(r, &BADGES)
        )
    },
};

fn arms(k: usize) -> Vec<ArmSpec> {
    let all: [(&str, &[(&str, &str)]); 5] = [
        ("default", &[]),
        ("no_hashjoin", &[("enable_hashjoin", "off")]),
        ("no_nestloop", &[("enable_nestloop", "off")]),
        ("no_seqscan", &[("enable_seqscan", "off")]),
        (
            "no_mergejoin_big_mem",
            &[("enable_mergejoin", "off"), ("work_mem", "64MB")],
        ),
    ];
    all.iter()
        .take(k)
        .enumerate()
        .map(|(i, (name, kv))| ArmSpec {
            arm_id: i,
            name: name.to_string(),
            settings: kv
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        })
        .collect()
}

fn catalog() -> Catalog {
    let spec: [(&str, &str, bool, bool); 24] = [
        ("posts", "id", true, true),
        ("posts", "owner_user_id", true, true),
        ("posts", "parent_id", true, true),
        ("posts", "post_type_id", true, false),
        ("posts", "score", true, false),
        ("posts", "creation_date", false, true),
        ("posts", "title", false, false),
        ("posts", "tags", false, false),
        ("users", "id", true, true),
        ("users", "reputation", true, false),
        ("users", "display_name", false, false),
        ("users", "location", false, false),
        ("users", "creation_date", false, false),
        ("comments", "id", true, true),
        ("comments", "post_id", true, true),
        ("comments", "score", true, false),
        ("votes", "id", true, true),
        ("votes", "post_id", true, true),
        ("votes", "vote_type_id", true, false),
        ("badges", "id", true, true),
        ("badges", "user_id", true, true),
        ("badges", "name", false, false),
        ("tags", "id", true, true),
        ("tags", "tag_name", false, true),
    ];
    Catalog {
        columns: spec
            .iter()
            .map(|&(t, c, numeric, indexed)| {
                (ColumnRef::new(t, c), ColumnTraits { numeric, indexed })
            })
            .collect(),
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn plan_for(t: &Template, arm: usize, jitter: f64) -> PlanDocument {
    let scan = |rel: &str, rows: f64| {
        let (kind, c) = if arm == 3 {
            ("Index Scan", 0.006)
        } else {
            ("Seq Scan", 0.01)
        };
        PlanDocument::leaf(kind, Some(rel), round3(rows * c * jitter), rows)
    };
    let mut node = scan(t.scans[0].0, t.scans[0].1);
    let mut rows = t.scans[0].1;
    for (i, &(rel, r)) in t.scans.iter().enumerate().skip(1) {
        let (lk, rk) = t.keys[i - 1];
        let right = scan(rel, r);
        let out_rows = (rows.max(r) * 0.5).round();
        let keys = [lk, rk];
        node = match (t.join, arm) {
            (Join::Nested, 2) | (Join::Hash, 0 | 2 | 3 | 4) => {
                let hash = PlanDocument::leaf("Hash", None, round3(r * 0.002), r)
                    .with_children(vec![right]);
                PlanDocument::leaf(
                    "Hash Join",
                    None,
                    round3(out_rows * 0.02 * jitter),
                    out_rows,
                )
                .with_columns(keys)
                .with_children(vec![node, hash])
            }
            (Join::Hash, 1) => {
                let sl = PlanDocument::leaf("Sort", None, round3(rows * 0.015), rows)
                    .with_columns([lk])
                    .with_children(vec![node]);
                let sr = PlanDocument::leaf("Sort", None, round3(r * 0.015), r)
                    .with_columns([rk])
                    .with_children(vec![right]);
                PlanDocument::leaf(
                    "Merge Join",
                    None,
                    round3(out_rows * 0.01 * jitter),
                    out_rows,
                )
                .with_columns(keys)
                .with_children(vec![sl, sr])
            }
            _ => PlanDocument::leaf(
                "Nested Loop",
                None,
                round3(rows * r * 1e-5 * jitter),
                out_rows,
            )
            .with_columns(keys)
            .with_children(vec![node, right]),
        };
        rows = out_rows;
    }
    for top in t.tops {
        node = match top {
            Top::Aggregate(cols) => {
                let out = (rows * 0.1).round().max(1.0);
                PlanDocument::leaf("HashAggregate", None, round3(rows * 0.004), out)
                    .with_columns(cols.iter().copied())
                    .with_children(vec![node])
            }
            Top::Sort(cols) => PlanDocument::leaf("Sort", None, round3(rows * 0.012), rows)
                .with_columns(cols.iter().copied())
                .with_children(vec![node]),
            Top::Limit => PlanDocument::leaf("Limit", None, 0.05, 20.0).with_children(vec![node]),
        };
        if let Top::Aggregate(_) = top {
            rows = (rows * 0.1).round().max(1.0);
        }
    }
    node
}

struct Mix {
    template: &'static Template,
    count: usize,
    multipliers: &'static [f64],
    /// Given the query's ordinal within its template, the optimizer's pick.
    estimate: fn(usize) -> usize,
}

fn mixes(f: Fixture) -> (usize, Vec<Mix>, u64) {
    const REG: [f64; 5] = [1.0, 1.6, 1.4, 2.2, 1.8];
    const STALL_A: [f64; 5] = [10.0, 9.0, 1.0, 12.0, 6.0];
    const STALL_B: [f64; 5] = [10.0, 4.0, 1.0, 11.0, 10.0];
    const COMMON: [f64; 5] = [1.0, 1.5, 1.3, 0.5, 1.4];
    const RARE: [f64; 5] = [1.0, 1.2, 1.1, 12.0, 1.3];
    const UNSEEN: [f64; 3] = [1.0, 0.4, 1.3];
    const UNSEEN_STALL: [f64; 3] = [6.0, 0.5, 1.0];
    let default = |_| 0;
    match f {
        Fixture::Favorable => (
            5,
            vec![
                Mix {
                    template: &RECENT,
                    count: 11,
                    multipliers: &REG,
                    estimate: default,
                },
                Mix {
                    template: &USER_REP,
                    count: 11,
                    multipliers: &REG,
                    estimate: default,
                },
                Mix {
                    template: &POST_COMMENTS,
                    count: 11,
                    multipliers: &REG,
                    estimate: default,
                },
                Mix {
                    template: &BADGE_HOLDERS,
                    count: 11,
                    multipliers: &REG,
                    estimate: default,
                },
                Mix {
                    template: &VOTE_STALL,
                    count: 8,
                    multipliers: &STALL_A,
                    estimate: |i| if i % 3 == 1 { 2 } else { 0 },
                },
                Mix {
                    template: &ANSWER_CHAIN,
                    count: 8,
                    multipliers: &STALL_B,
                    estimate: |i| if i % 3 == 2 { 2 } else { 0 },
                },
            ],
            0xFA40,
        ),
        Fixture::Adversarial => (
            5,
            vec![
                Mix {
                    template: &RECENT,
                    count: 13,
                    multipliers: &COMMON,
                    estimate: |i| if i % 2 == 1 { 3 } else { 0 },
                },
                Mix {
                    template: &USER_REP,
                    count: 13,
                    multipliers: &COMMON,
                    estimate: |i| if i % 2 == 0 { 3 } else { 0 },
                },
                Mix {
                    template: &POST_COMMENTS,
                    count: 13,
                    multipliers: &COMMON,
                    estimate: |i| if i % 2 == 1 { 3 } else { 0 },
                },
                Mix {
                    template: &BADGE_HOLDERS,
                    count: 13,
                    multipliers: &COMMON,
                    estimate: |i| if i % 2 == 0 { 3 } else { 0 },
                },
                Mix {
                    template: &REP_RANK,
                    count: 4,
                    multipliers: &RARE,
                    estimate: default,
                },
                Mix {
                    template: &BADGE_POSTS,
                    count: 4,
                    multipliers: &RARE,
                    estimate: default,
                },
            ],
            0xAD50,
        ),
        Fixture::UnseenArm => (
            3,
            vec![
                Mix {
                    template: &RECENT,
                    count: 8,
                    multipliers: &UNSEEN,
                    estimate: default,
                },
                Mix {
                    template: &USER_REP,
                    count: 8,
                    multipliers: &UNSEEN,
                    estimate: default,
                },
                Mix {
                    template: &POST_COMMENTS,
                    count: 8,
                    multipliers: &UNSEEN,
                    estimate: default,
                },
                Mix {
                    template: &BADGE_HOLDERS,
                    count: 8,
                    multipliers: &UNSEEN,
                    estimate: default,
                },
                Mix {
                    template: &VOTE_STALL,
                    count: 8,
                    multipliers: &UNSEEN_STALL,
                    estimate: |i| if i % 2 == 0 { 2 } else { 0 },
                },
            ],
            0x0A11,
        ),
    }
}

/// The trace for `f` as newline-delimited JSON. Deterministic.
pub fn generate(f: Fixture) -> String {
    let (k, mixes, seed) = mixes(f);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Deterministic interleaving of templates.
    let mut slots: Vec<(usize, usize)> = Vec::new();
    for (m, mix) in mixes.iter().enumerate() {
        for i in 0..mix.count {
            slots.push((m, i));
        }
    }
    for i in (1..slots.len()).rev() {
        let j = rng.random_range(0..=i);
        slots.swap(i, j);
    }

    let mut lines: Vec<TraceLine> = arms(k).into_iter().map(TraceLine::Arm).collect();
    lines.push(TraceLine::Catalog(catalog()));
    lines.push(TraceLine::Env(default_environment()));
    for (n, &(m, i)) in slots.iter().enumerate() {
        let mix = &mixes[m];
        let t = mix.template;
        let scale: f64 = rng.random_range(0.8..1.25);
        let mut runtimes = BTreeMap::new();
        let mut plans = BTreeMap::new();
        for arm in 0..k {
            let wiggle: f64 = rng.random_range(0.95..1.05);
            runtimes.insert(
                arm,
                round3(t.base_ms * scale * mix.multipliers[arm] * wiggle),
            );
            let doc = plan_for(t, arm, scale);
            plans.insert(arm, serde_json::to_value(doc).expect("plan serializes"));
        }
        lines.push(TraceLine::Entry(EntryDoc {
            query_id: format!("q{:03}", n + 1),
            template_id: t.id.to_string(),
            sql: (t.sql)(&mut rng),
            runtimes_ms: runtimes,
            plans,
            estimated_best_arm: (mix.estimate)(i),
        }));
    }
    let mut out = String::new();
    for l in lines {
        out.push_str(&serde_json::to_string(&l).expect("trace line serializes"));
        out.push('\n');
    }
    out
}
