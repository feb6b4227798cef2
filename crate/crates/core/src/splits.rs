//! Whole-log dataset splits.
//!
//! * `ssl`: every multi-traversal log.
//! * `val`: single-traversal logs drawn at random until they hold at least
//!   `val_frac` of all poses.
//! * `sup p`: the remaining single-traversal logs are shuffled once; the
//!   subset for fraction `p` is the shortest prefix of that order holding at
//!   least `p` of all poses. Smaller subsets are therefore prefixes, and
//!   subsets, of larger ones.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::classify::{TraversalClass, TraversalKind};
use crate::ingest::Dataset;
use crate::rng::{SeededRng, GENERATOR_NAME};

pub const MANIFEST_VERSION: u32 = 1;
pub const DEFAULT_PERCENTS: [f64; 4] = [0.025, 0.05, 0.10, 0.20];
pub const DEFAULT_VAL_FRAC: f64 = 0.10;

// Absorbs rounding in `frac * total` (0.025 * 1000 = 25.000000000000004).
const TARGET_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("insufficient single-traversal data for {split}: need {needed} poses, pool holds {available}")]
    InsufficientData {
        split: String,
        needed: usize,
        available: usize,
    },
    #[error("invalid split parameters: {0}")]
    InvalidParameters(String),
    #[error("classification does not match dataset: {0}")]
    ClassesMismatch(String),
    #[error("malformed manifest: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupSubset {
    pub fraction: f64,
    /// Prefix order of the supervised shuffle.
    pub logs: Vec<String>,
    /// Subsets that deliberately draw on the SSL pool (trend-only splits).
    /// Never produced by [`generate_splits`].
    pub overlaps_ssl: bool,
}

impl SupSubset {
    pub fn name(&self) -> String {
        format!("sup_{}", self.fraction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub generator: String,
    pub dataset_hash: String,
    pub total_poses: usize,
    pub val_frac: f64,
    /// Sorted.
    pub ssl_logs: Vec<String>,
    /// Draw order.
    pub val_logs: Vec<String>,
    /// Ascending fraction.
    pub sup_subsets: Vec<SupSubset>,
    /// Split name → pose count.
    pub pose_counts: BTreeMap<String, usize>,
}

/// Smallest whole pose count meeting `frac` of `total`.
pub fn pose_target(frac: f64, total: usize) -> usize {
    let raw = frac * total as f64 - TARGET_SLACK;
    if raw <= 0.0 {
        0
    } else {
        raw.ceil() as usize
    }
}

fn shortest_prefix(order: &[String], counts: &BTreeMap<String, usize>, target: usize) -> Option<usize> {
    let mut cum = 0;
    if target == 0 {
        return Some(0);
    }
    for (i, log) in order.iter().enumerate() {
        cum += counts[log];
        if cum >= target {
            return Some(i + 1);
        }
    }
    None
}

fn count_of(logs: &[String], counts: &BTreeMap<String, usize>) -> usize {
    logs.iter().map(|l| counts.get(l).copied().unwrap_or(0)).sum()
}

fn check_fraction(name: &str, f: f64) -> Result<(), SplitError> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(SplitError::InvalidParameters(format!("{name} = {f} not in (0, 1)")))
    }
}

pub fn generate_splits(
    d: &Dataset,
    classes: &[TraversalClass],
    percents: &[f64],
    val_frac: f64,
    seed: u64,
) -> Result<SplitManifest, SplitError> {
    check_fraction("val_frac", val_frac)?;
    for &p in percents {
        check_fraction("percent", p)?;
    }
    if percents.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SplitError::InvalidParameters(
            "percents must be strictly ascending".into(),
        ));
    }
    let counts = d.pose_counts();
    let mut kinds: BTreeMap<&str, TraversalKind> = BTreeMap::new();
    for c in classes {
        if !counts.contains_key(&c.log_id) {
            return Err(SplitError::ClassesMismatch(format!("unknown log {}", c.log_id)));
        }
        if kinds.insert(c.log_id.as_str(), c.class).is_some() {
            return Err(SplitError::ClassesMismatch(format!("log {} classified twice", c.log_id)));
        }
    }
    if let Some(missing) = counts.keys().find(|l| !kinds.contains_key(l.as_str())) {
        return Err(SplitError::ClassesMismatch(format!("log {missing} has no class")));
    }

    let total = d.total_poses;
    let ssl_logs: Vec<String> = kinds
        .iter()
        .filter(|(_, &k)| k == TraversalKind::Multi)
        .map(|(l, _)| l.to_string())
        .collect();
    let mut pool: Vec<String> = kinds
        .iter()
        .filter(|(_, &k)| k == TraversalKind::Single)
        .map(|(l, _)| l.to_string())
        .collect();

    let mut rng = SeededRng::new(seed);
    rng.shuffle(&mut pool);
    let pool_poses = count_of(&pool, &counts);
    let val_target = pose_target(val_frac, total);
    let val_len = shortest_prefix(&pool, &counts, val_target).ok_or(SplitError::InsufficientData {
        split: "val".into(),
        needed: val_target,
        available: pool_poses,
    })?;
    let val_logs = pool[..val_len].to_vec();
    let mut rest = pool[val_len..].to_vec();
    rng.shuffle(&mut rest);
    let rest_poses = count_of(&rest, &counts);

    let mut sup_subsets = Vec::with_capacity(percents.len());
    for &p in percents.iter().rev() {
        let target = pose_target(p, total);
        let len = shortest_prefix(&rest, &counts, target).ok_or(SplitError::InsufficientData {
            split: format!("sup_{p}"),
            needed: target,
            available: rest_poses,
        })?;
        sup_subsets.push(SupSubset {
            fraction: p,
            logs: rest[..len].to_vec(),
            overlaps_ssl: false,
        });
    }
    sup_subsets.reverse();

    let mut pose_counts = BTreeMap::new();
    pose_counts.insert("ssl".to_string(), count_of(&ssl_logs, &counts));
    pose_counts.insert("val".to_string(), count_of(&val_logs, &counts));
    for s in &sup_subsets {
        pose_counts.insert(s.name(), count_of(&s.logs, &counts));
    }

    Ok(SplitManifest {
        seed,
        generator: GENERATOR_NAME.to_string(),
        dataset_hash: d.content_hash(),
        total_poses: total,
        val_frac,
        ssl_logs,
        val_logs,
        sup_subsets,
        pose_counts,
    })
}

impl SplitManifest {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "manifest_version {MANIFEST_VERSION}");
        let _ = writeln!(out, "generator {}", self.generator);
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "dataset_sha256 {}", self.dataset_hash);
        let _ = writeln!(out, "total_poses {}", self.total_poses);
        let _ = writeln!(out, "val_frac {}", self.val_frac);
        let mut block = |header: String, name: &str, logs: &[String]| {
            let poses = self.pose_counts.get(name).copied().unwrap_or(0);
            let _ = writeln!(out, "{header} poses {poses} logs {}", logs.len());
            for l in logs {
                let _ = writeln!(out, "log {l}");
            }
        };
        block("split ssl".into(), "ssl", &self.ssl_logs);
        block("split val".into(), "val", &self.val_logs);
        for s in &self.sup_subsets {
            let flag = if s.overlaps_ssl { " overlaps_ssl" } else { "" };
            block(format!("split sup {}{flag}", s.fraction), &s.name(), &s.logs);
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SplitError> {
        let bad = |m: String| SplitError::Malformed(m);
        let mut lines = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut kv = |key: &str| -> Result<String, SplitError> {
            let line = lines.next().ok_or_else(|| bad(format!("missing {key}")))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| bad(format!("expected `{key}`, got `{line}`")))
        };
        let num = |s: String, key: &str| -> Result<f64, SplitError> {
            s.parse().map_err(|_| bad(format!("bad {key} `{s}`")))
        };
        let version = kv("manifest_version")?;
        if version != MANIFEST_VERSION.to_string() {
            return Err(bad(format!("unsupported manifest version {version}")));
        }
        let generator = kv("generator")?;
        let seed_s = kv("seed")?;
        let seed = seed_s.parse().map_err(|_| bad(format!("bad seed `{seed_s}`")))?;
        let dataset_hash = kv("dataset_sha256")?;
        let total_s = kv("total_poses")?;
        let total_poses = total_s
            .parse()
            .map_err(|_| bad(format!("bad total_poses `{total_s}`")))?;
        let val_frac = num(kv("val_frac")?, "val_frac")?;

        let mut m = SplitManifest {
            seed,
            generator,
            dataset_hash,
            total_poses,
            val_frac,
            ssl_logs: Vec::new(),
            val_logs: Vec::new(),
            sup_subsets: Vec::new(),
            pose_counts: BTreeMap::new(),
        };
        let mut saw_end = false;
        let mut current: Option<(String, usize)> = None;
        let rest: Vec<&str> = lines.collect();
        let mut seen_names = HashSet::new();
        for line in rest {
            if saw_end {
                return Err(bad("content after `end`".into()));
            }
            if line == "end" {
                saw_end = true;
                continue;
            }
            if let Some(log) = line.strip_prefix("log ") {
                let Some((name, _)) = &current else {
                    return Err(bad("log line outside a split".into()));
                };
                let list = if name == "ssl" {
                    &mut m.ssl_logs
                } else if name == "val" {
                    &mut m.val_logs
                } else {
                    &mut m.sup_subsets.last_mut().unwrap().logs
                };
                list.push(log.to_string());
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if let Some((prev, expected)) = current.take() {
                check_block_len(&m, &prev, expected)?;
            }
            let (name, tail) = match parts.as_slice() {
                ["split", "ssl", tail @ ..] => ("ssl".to_string(), tail),
                ["split", "val", tail @ ..] => ("val".to_string(), tail),
                ["split", "sup", frac, tail @ ..] => {
                    let fraction = num(frac.to_string(), "fraction")?;
                    let overlaps_ssl = tail.first() == Some(&"overlaps_ssl");
                    m.sup_subsets.push(SupSubset {
                        fraction,
                        logs: Vec::new(),
                        overlaps_ssl,
                    });
                    let tail = if overlaps_ssl { &tail[1..] } else { tail };
                    (m.sup_subsets.last().unwrap().name(), tail)
                }
                _ => return Err(bad(format!("unexpected line `{line}`"))),
            };
            let ["poses", poses, "logs", n] = tail else {
                return Err(bad(format!("malformed split header `{line}`")));
            };
            let poses: usize = poses.parse().map_err(|_| bad(format!("bad count in `{line}`")))?;
            let n: usize = n.parse().map_err(|_| bad(format!("bad count in `{line}`")))?;
            if !seen_names.insert(name.clone()) {
                return Err(bad(format!("duplicate split {name}")));
            }
            m.pose_counts.insert(name.clone(), poses);
            current = Some((name, n));
        }
        if !saw_end {
            return Err(bad("truncated manifest (no `end`)".into()));
        }
        if let Some((prev, expected)) = current {
            check_block_len(&m, &prev, expected)?;
        }
        Ok(m)
    }

    pub fn sup(&self, fraction: f64) -> Option<&SupSubset> {
        self.sup_subsets.iter().find(|s| s.fraction == fraction)
    }
}

fn check_block_len(m: &SplitManifest, name: &str, expected: usize) -> Result<(), SplitError> {
    let actual = match name {
        "ssl" => m.ssl_logs.len(),
        "val" => m.val_logs.len(),
        _ => m.sup_subsets.last().map(|s| s.logs.len()).unwrap_or(0),
    };
    if actual != expected {
        return Err(SplitError::Malformed(format!(
            "split {name} declares {expected} logs, lists {actual}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: &str, problems: Vec<String>) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            passed: problems.is_empty(),
            detail: problems.join("; "),
        });
    }
}

/// Leakage and consistency audit. Failures are report entries, never errors.
pub fn verify_manifest(m: &SplitManifest, d: &Dataset, classes: &[TraversalClass]) -> VerifyReport {
    let counts = d.pose_counts();
    let total = d.total_poses;
    let mut report = VerifyReport::default();

    let mut all_lists: Vec<(String, &[String])> = vec![
        ("ssl".into(), m.ssl_logs.as_slice()),
        ("val".into(), m.val_logs.as_slice()),
    ];
    for s in &m.sup_subsets {
        all_lists.push((s.name(), s.logs.as_slice()));
    }

    let mut problems = Vec::new();
    if m.dataset_hash != d.content_hash() {
        problems.push("dataset hash differs".to_string());
    }
    if m.total_poses != total {
        problems.push(format!("total_poses {} vs dataset {total}", m.total_poses));
    }
    for (name, logs) in &all_lists {
        for l in logs.iter() {
            if !counts.contains_key(l) {
                problems.push(format!("{name}: unknown log {l}"));
            }
        }
        let uniq: HashSet<&String> = logs.iter().collect();
        if uniq.len() != logs.len() {
            problems.push(format!("{name}: repeated log"));
        }
    }
    report.push("dataset_consistency", problems);

    let mut problems = Vec::new();
    let ssl: HashSet<&String> = m.ssl_logs.iter().collect();
    let val: HashSet<&String> = m.val_logs.iter().collect();
    for l in val.intersection(&ssl) {
        problems.push(format!("{l} in ssl and val"));
    }
    for s in &m.sup_subsets {
        for l in &s.logs {
            if val.contains(l) {
                problems.push(format!("{l} in val and {}", s.name()));
            }
            if !s.overlaps_ssl && ssl.contains(l) {
                problems.push(format!("{l} in ssl and {}", s.name()));
            }
        }
    }
    report.push("disjointness", problems);

    let mut problems = Vec::new();
    let mut sorted: Vec<&SupSubset> = m.sup_subsets.iter().filter(|s| !s.overlaps_ssl).collect();
    sorted.sort_by(|a, b| a.fraction.total_cmp(&b.fraction));
    for w in sorted.windows(2) {
        let (small, big) = (w[0], w[1]);
        if small.fraction == big.fraction {
            problems.push(format!("duplicate fraction {}", small.fraction));
        } else if big.logs.len() < small.logs.len() || big.logs[..small.logs.len()] != small.logs[..] {
            problems.push(format!("{} is not a prefix of {}", small.name(), big.name()));
        }
    }
    report.push("nesting", problems);

    let mut problems = Vec::new();
    let multi: BTreeSet<&str> = classes
        .iter()
        .filter(|c| c.class == TraversalKind::Multi)
        .map(|c| c.log_id.as_str())
        .collect();
    let ssl_set: BTreeSet<&str> = m.ssl_logs.iter().map(String::as_str).collect();
    if multi != ssl_set {
        let missing: Vec<_> = multi.difference(&ssl_set).collect();
        let extra: Vec<_> = ssl_set.difference(&multi).collect();
        problems.push(format!("missing multi logs {missing:?}, extra {extra:?}"));
    }
    report.push("ssl_equals_multi", problems);

    let mut problems = Vec::new();
    let mut minimal_problems = Vec::new();
    let mut thresholds: Vec<(String, &[String], f64)> =
        vec![("val".into(), m.val_logs.as_slice(), m.val_frac)];
    for s in &sorted {
        thresholds.push((s.name(), s.logs.as_slice(), s.fraction));
    }
    for (name, logs, frac) in thresholds {
        let target = pose_target(frac, total);
        let have = count_of(logs, &counts);
        if have < target {
            problems.push(format!("{name}: {have} poses < target {target}"));
        }
        if let Some((_, head)) = logs.split_last() {
            let without_last = count_of(head, &counts);
            if without_last >= target {
                minimal_problems.push(format!(
                    "{name}: {without_last} poses without last log already meet {target}"
                ));
            }
        }
    }
    report.push("pose_thresholds", problems);
    report.push("minimality", minimal_problems);

    let mut problems = Vec::new();
    for (name, logs) in &all_lists {
        let actual = count_of(logs, &counts);
        match m.pose_counts.get(name) {
            Some(&c) if c == actual => {}
            Some(&c) => problems.push(format!("{name}: recorded {c}, actual {actual}")),
            None => problems.push(format!("{name}: no recorded count")),
        }
    }
    report.push("pose_counts", problems);

    report
}
