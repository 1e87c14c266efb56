//! Island-model genetic expansion of seed rules.
//!
//! Each canonical class forms an island. A generation grows the population
//! towards `N₀ · g^t` rules, where `g` is `offspring_per_generation`; the
//! shortfall is split across islands in proportion to their size (largest
//! remainder). Offspring come from mutation or crossover of uniformly drawn
//! parents on the same island. Children that fail validation consume a retry;
//! children whose id already exists are discarded. After every
//! `migration_period`-th generation a fraction of all rules moves to other
//! islands.
//!
//! All randomness is derived from `rng_seed` with labels that name the
//! generation, island and attempt, so islands can be processed in parallel
//! and a run resumed from any checkpoint reproduces the uninterrupted run.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::{ProviderError, ProviderSet};
use crate::rule::{validate_rule, CanonicalClass, Operator, Parent, Rule, ValidationReport};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Island {
    pub class: CanonicalClass,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    pub generations: u32,
    /// Population growth factor per generation.
    pub offspring_per_generation: f64,
    pub migration_period: u32,
    pub migration_rate: f64,
    /// Probability that an offspring comes from mutation rather than crossover.
    pub mutation_vs_crossover_mix: f64,
    pub rng_seed: u64,
    /// Extra provider calls allowed when a child fails validation.
    pub retry_budget: u32,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            generations: 10,
            offspring_per_generation: 25f64.powf(0.1),
            migration_period: 3,
            migration_rate: 0.10,
            mutation_vs_crossover_mix: 0.5,
            rng_seed: 0,
            retry_budget: 3,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        let bad = |m: &str| Err(EvolutionError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.migration_rate) {
            return bad("migration_rate must lie in [0, 1]");
        }
        if self.migration_period < 1 {
            return bad("migration_period must be ≥ 1");
        }
        if !(0.0..=1.0).contains(&self.mutation_vs_crossover_mix) {
            return bad("mutation_vs_crossover_mix must lie in [0, 1]");
        }
        if !(self.offspring_per_generation >= 1.0) || !self.offspring_per_generation.is_finite() {
            return bad("offspring_per_generation must be a finite factor ≥ 1");
        }
        Ok(())
    }

    /// Population target after generation `t` for `n0` seeds.
    pub fn target(&self, n0: usize, t: u32) -> usize {
        (n0 as f64 * self.offspring_per_generation.powi(t as i32)).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvolutionError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("seed {id} is invalid: {report:?}")]
    InvalidSeed { id: String, report: ValidationReport },
    #[error("island {0:?} has no members")]
    IslandEmptied(CanonicalClass),
    #[error("parents {a} and {b} are not on the same island")]
    CrossIsland { a: String, b: String },
    #[error("migration needs at least two islands")]
    TooFewIslands,
    #[error("no valid child after {attempts} attempts")]
    RetriesExhausted { attempts: u32 },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Number of bullets that differ between two lists, counted as a multiset
/// edit: the larger of "removed from parent" and "new in child".
pub fn bullet_changes(parent: &[String], child: &[String]) -> usize {
    let mut pool: Vec<&String> = parent.iter().collect();
    let mut added = 0;
    for b in child {
        match pool.iter().position(|p| *p == b) {
            Some(i) => {
                pool.swap_remove(i);
            }
            None => added += 1,
        }
    }
    added.max(pool.len())
}

/// Mutates `parent`, retrying with fresh seeds while the child is invalid or
/// edits zero or more than two bullets.
pub fn mutate(parent: &Rule, providers: &ProviderSet, seed: u64, retry_budget: u32) -> Result<Rule, EvolutionError> {
    for attempt in 0..=retry_budget {
        let bullets = providers.mutate(parent, seed::derive(seed, &format!("retry/{attempt}")))?;
        let changes = bullet_changes(&parent.bullets, &bullets);
        let child = Rule::with_lineage(
            parent.class,
            bullets,
            parent.generation + 1,
            vec![Parent { id: parent.id.clone(), op: Operator::Mutation }],
        );
        if (1..=2).contains(&changes) && validate_rule(&child).is_valid() {
            return Ok(child);
        }
    }
    Err(EvolutionError::RetriesExhausted { attempts: retry_budget + 1 })
}

/// Crosses two rules living on `island`. The child takes the first parent's
/// class.
pub fn crossover(
    a: &Rule,
    b: &Rule,
    island: &Island,
    providers: &ProviderSet,
    seed: u64,
    retry_budget: u32,
) -> Result<Rule, EvolutionError> {
    if !island.members.contains(&a.id) || !island.members.contains(&b.id) {
        return Err(EvolutionError::CrossIsland { a: a.id.clone(), b: b.id.clone() });
    }
    for attempt in 0..=retry_budget {
        let bullets = providers.crossover(a, b, seed::derive(seed, &format!("retry/{attempt}")))?;
        let child = Rule::with_lineage(
            a.class,
            bullets,
            a.generation.max(b.generation) + 1,
            vec![Parent { id: a.id.clone(), op: Operator::Crossover }, Parent { id: b.id.clone(), op: Operator::Crossover }],
        );
        if validate_rule(&child).is_valid() {
            return Ok(child);
        }
    }
    Err(EvolutionError::RetriesExhausted { attempts: retry_budget + 1 })
}

/// Moves `floor(rate × total)` distinct rules, each to a uniformly chosen
/// island other than its own. Moved rules are appended to their destination.
pub fn migrate(islands: &[Island], rate: f64, rng: &mut impl Rng) -> Result<Vec<Island>, EvolutionError> {
    if islands.len() < 2 {
        return Err(EvolutionError::TooFewIslands);
    }
    let all: Vec<(usize, String)> =
        islands.iter().enumerate().flat_map(|(i, isl)| isl.members.iter().map(move |m| (i, m.clone()))).collect();
    let movers = ((rate.clamp(0.0, 1.0) * all.len() as f64) + 1e-9).floor() as usize;
    let mut picks: Vec<usize> = (0..all.len()).collect();
    picks.shuffle(rng);
    picks.truncate(movers);
    picks.sort_unstable();
    let mut out: Vec<Island> = islands.to_vec();
    let moving: HashSet<&str> = picks.iter().map(|&p| all[p].1.as_str()).collect();
    for isl in &mut out {
        isl.members.retain(|m| !moving.contains(m.as_str()));
    }
    for &p in &picks {
        let (from, id) = &all[p];
        let mut to = rng.random_range(0..islands.len() - 1);
        if to >= *from {
            to += 1;
        }
        out[to].members.push(id.clone());
    }
    Ok(out)
}

/// Splits `needed` across islands proportionally to `sizes` using the
/// largest-remainder method; ties go to the earlier island.
fn apportion(sizes: &[usize], needed: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let exact: Vec<f64> = sizes.iter().map(|&s| needed as f64 * s as f64 / total as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let missing = needed - quota.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        quota[i] += 1;
    }
    quota
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: u32,
    pub target: usize,
    pub total: usize,
    pub rejected: usize,
    pub duplicates: usize,
    pub migrated: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionOutcome {
    /// Seeds first, then offspring in the order they were committed.
    pub pool: Vec<Rule>,
    pub islands: Vec<Island>,
    pub stats: Vec<GenerationStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    generation: u32,
    config: EvolutionConfig,
    seeds: usize,
    /// Seed for the next generation's derivations; kept so a resumed run
    /// can be checked against the configuration it continues.
    next_seed: u64,
    islands: Vec<Island>,
    stats: Vec<GenerationStats>,
}

pub fn checkpoint_path(dir: &Path, generation: u32) -> PathBuf {
    dir.join(format!("gen-{generation:02}.jsonl"))
}

fn write_checkpoint(dir: &Path, header: &CheckpointHeader, pool: &[Rule]) -> Result<(), EvolutionError> {
    let err = |e: std::io::Error| EvolutionError::Checkpoint(e.to_string());
    std::fs::create_dir_all(dir).map_err(err)?;
    let path = checkpoint_path(dir, header.generation);
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut out = BufWriter::new(std::fs::File::create(&tmp).map_err(err)?);
        let line = serde_json::to_string(&serde_json::json!({ "header": header })).expect("header serializes");
        writeln!(out, "{line}").map_err(err)?;
        for rule in pool {
            writeln!(out, "{}", serde_json::to_string(rule).expect("rule serializes")).map_err(err)?;
        }
        out.flush().map_err(err)?;
    }
    std::fs::rename(&tmp, &path).map_err(err)
}

fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, Vec<Rule>), EvolutionError> {
    let err = |e: String| EvolutionError::Checkpoint(format!("{}: {e}", path.display()));
    let file = std::fs::File::open(path).map_err(|e| err(e.to_string()))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines.next().ok_or_else(|| err("empty file".into()))?.map_err(|e| err(e.to_string()))?;
    let mut value: serde_json::Value = serde_json::from_str(&first).map_err(|e| err(e.to_string()))?;
    let header: CheckpointHeader =
        serde_json::from_value(value["header"].take()).map_err(|e| err(e.to_string()))?;
    let mut pool = Vec::new();
    for line in lines {
        let line = line.map_err(|e| err(e.to_string()))?;
        if !line.trim().is_empty() {
            pool.push(serde_json::from_str(&line).map_err(|e| err(e.to_string()))?);
        }
    }
    Ok((header, pool))
}

/// Latest checkpoint in `dir` written with the same configuration and seed
/// count, if any.
fn latest_checkpoint(dir: &Path, cfg: &EvolutionConfig, seeds: usize) -> Option<(CheckpointHeader, Vec<Rule>)> {
    (1..=cfg.generations).rev().find_map(|g| {
        let path = checkpoint_path(dir, g);
        let (header, pool) = read_checkpoint(&path).ok()?;
        (header.config == *cfg && header.seeds == seeds).then_some((header, pool))
    })
}

pub fn evolve(seeds: &[Rule], cfg: &EvolutionConfig, providers: &ProviderSet) -> Result<EvolutionOutcome, EvolutionError> {
    evolve_with_checkpoints(seeds, cfg, providers, None, false)
}

/// Runs the island model. With `checkpoint_dir`, each generation is written
/// to `gen-NN.jsonl`; with `resume`, the run continues from the latest
/// matching checkpoint.
pub fn evolve_with_checkpoints(
    seeds: &[Rule],
    cfg: &EvolutionConfig,
    providers: &ProviderSet,
    checkpoint_dir: Option<&Path>,
    resume: bool,
) -> Result<EvolutionOutcome, EvolutionError> {
    cfg.validate()?;
    for s in seeds {
        let report = validate_rule(s);
        if !report.is_valid() || s.generation != 0 {
            return Err(EvolutionError::InvalidSeed { id: s.id.clone(), report });
        }
    }

    let mut islands: Vec<Island> = Vec::new();
    for class in CanonicalClass::ALL {
        let mut members: Vec<String> = Vec::new();
        for s in seeds {
            if s.canonical().ok() == Some(class) && !members.contains(&s.id) {
                members.push(s.id.clone());
            }
        }
        if !members.is_empty() {
            islands.push(Island { class, members });
        }
    }
    let mut pool: Vec<Rule> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for s in seeds {
        if seen.insert(s.id.clone()) {
            pool.push(s.clone());
        }
    }
    let n0 = pool.len();
    let mut stats = Vec::new();
    let mut start = 1;

    if let (Some(dir), true) = (checkpoint_dir, resume) {
        if let Some((header, saved)) = latest_checkpoint(dir, cfg, n0) {
            start = header.generation + 1;
            islands = header.islands;
            stats = header.stats;
            seen = saved.iter().map(|r| r.id.clone()).collect();
            pool = saved;
        }
    }

    for t in start..=cfg.generations {
        if let Some(empty) = islands.iter().find(|i| i.members.is_empty()) {
            return Err(EvolutionError::IslandEmptied(empty.class));
        }
        let target = cfg.target(n0, t);
        let needed = target.saturating_sub(pool.len());
        let sizes: Vec<usize> = islands.iter().map(|i| i.members.len()).collect();
        let quotas = apportion(&sizes, needed);
        let index: BTreeMap<&str, &Rule> = pool.iter().map(|r| (r.id.as_str(), r)).collect();
        let gen_seed = seed::derive(cfg.rng_seed, &format!("gen/{t}"));

        let jobs: Vec<(usize, usize)> = quotas.iter().copied().enumerate().collect();
        let results = crate::par::map(&jobs, |&(i, quota)| {
            breed_island(&islands[i], quota, &index, &seen, cfg, providers, seed::derive(gen_seed, &format!("island/{i}")))
        });

        let mut rejected = 0;
        let mut duplicates = 0;
        for (i, result) in results.into_iter().enumerate() {
            let (children, rej, dup) = result?;
            rejected += rej;
            duplicates += dup;
            for child in children {
                if seen.insert(child.id.clone()) {
                    islands[i].members.push(child.id.clone());
                    pool.push(child);
                } else {
                    duplicates += 1;
                }
            }
        }

        let mut migrated = 0;
        if t % cfg.migration_period == 0 && islands.len() >= 2 {
            let before = islands.clone();
            let mut rng = seed::rng(seed::derive(cfg.rng_seed, &format!("migrate/{t}")));
            islands = migrate(&islands, cfg.migration_rate, &mut rng)?;
            migrated = before
                .iter()
                .zip(&islands)
                .map(|(b, a)| a.members.iter().filter(|m| !b.members.contains(m)).count())
                .sum();
        }
        stats.push(GenerationStats { generation: t, target, total: pool.len(), rejected, duplicates, migrated });

        if let Some(dir) = checkpoint_dir {
            let header = CheckpointHeader {
                generation: t,
                config: *cfg,
                seeds: n0,
                next_seed: seed::derive(cfg.rng_seed, &format!("gen/{}", t + 1)),
                islands: islands.clone(),
                stats: stats.clone(),
            };
            write_checkpoint(dir, &header, &pool)?;
        }
    }
    Ok(EvolutionOutcome { pool, islands, stats })
}

type Bred = Result<(Vec<Rule>, usize, usize), EvolutionError>;

/// Produces up to `quota` new children from the island's current members.
fn breed_island(
    island: &Island,
    quota: usize,
    index: &BTreeMap<&str, &Rule>,
    existing: &HashSet<String>,
    cfg: &EvolutionConfig,
    providers: &ProviderSet,
    island_seed: u64,
) -> Bred {
    let mut children: Vec<Rule> = Vec::new();
    let mut ids: HashSet<String> = HashSet::new();
    let (mut rejected, mut duplicates) = (0, 0);
    let max_attempts = quota * 20 + 20;
    let members: Vec<&Rule> = island.members.iter().filter_map(|m| index.get(m.as_str()).copied()).collect();
    if members.is_empty() {
        return Err(EvolutionError::IslandEmptied(island.class));
    }
    let mut attempt = 0;
    while children.len() < quota && attempt < max_attempts {
        let s = seed::derive(island_seed, &format!("attempt/{attempt}"));
        attempt += 1;
        let mut rng = seed::rng(s);
        let use_mutation = members.len() < 2 || rng.random_bool(cfg.mutation_vs_crossover_mix);
        let result = if use_mutation {
            let parent = members.choose(&mut rng).expect("non-empty");
            mutate(parent, providers, s, cfg.retry_budget)
        } else {
            let picked: Vec<&&Rule> = members.choose_multiple(&mut rng, 2).collect();
            crossover(picked[0], picked[1], island, providers, s, cfg.retry_budget)
        };
        match result {
            Ok(child) => {
                if existing.contains(&child.id) || !ids.insert(child.id.clone()) {
                    duplicates += 1;
                } else {
                    children.push(child);
                }
            }
            Err(EvolutionError::RetriesExhausted { .. }) => rejected += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((children, rejected, duplicates))
}

/// Checks that every lineage chain in `pool` ends at generation-0 rules of
/// the pool and that generations are one more than the oldest parent's.
pub fn lineage_is_sound(pool: &[Rule]) -> bool {
    let index: BTreeMap<&str, &Rule> = pool.iter().map(|r| (r.id.as_str(), r)).collect();
    pool.iter().all(|r| {
        if r.generation == 0 {
            return r.lineage.is_empty();
        }
        let parents: Option<Vec<&&Rule>> = r.lineage.iter().map(|p| index.get(p.id.as_str())).collect();
        match parents {
            Some(ps) if !ps.is_empty() => ps.iter().map(|p| p.generation).max() == Some(r.generation - 1),
            _ => false,
        }
    })
}

/// Generation-0 ancestors of `id`.
pub fn root_seeds(pool: &[Rule], id: &str) -> Vec<String> {
    let index: BTreeMap<&str, &Rule> = pool.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut roots = Vec::new();
    let mut stack = vec![id.to_string()];
    let mut visited = HashSet::new();
    while let Some(cur) = stack.pop() {
        if !visited.insert(cur.clone()) {
            continue;
        }
        if let Some(r) = index.get(cur.as_str()) {
            if r.generation == 0 {
                roots.push(cur);
            } else {
                stack.extend(r.lineage.iter().map(|p| p.id.clone()));
            }
        }
    }
    roots.sort();
    roots
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::stub::{MutationOp, StubAnnotator, StubEmbedder, StubSolver, StubTransformer, SolverMode};
    use crate::providers::RetryPolicy;
    use crate::rule::{ReasoningStyle, RuleClass, VisualPattern};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn providers(t: StubTransformer) -> ProviderSet {
        ProviderSet {
            transformer: Arc::new(t),
            embedder: Arc::new(StubEmbedder::default()),
            annotator: Arc::new(StubAnnotator::default()),
            solver: Arc::new(StubSolver::new(SolverMode::Random)),
            retry: RetryPolicy { attempts: 1, base_delay_ms: 0 },
        }
    }

    fn hsq() -> RuleClass {
        RuleClass::new(VisualPattern::HorizontalSquare, ReasoningStyle::Deductive)
    }

    fn rule(bullets: &[&str]) -> Rule {
        Rule::seed(hsq(), bullets.iter().map(|s| s.to_string()).collect())
    }

    fn toy_islands(sizes: &[usize]) -> Vec<Island> {
        let mut n = 0;
        sizes
            .iter()
            .enumerate()
            .map(|(i, &s)| Island {
                class: CanonicalClass::ALL[i],
                members: (0..s)
                    .map(|_| {
                        n += 1;
                        format!("r{n}")
                    })
                    .collect(),
            })
            .collect()
    }

    fn ids(islands: &[Island]) -> Vec<String> {
        let mut all: Vec<String> = islands.iter().flat_map(|i| i.members.clone()).collect();
        all.sort();
        all
    }

    #[test]
    fn migrate_moves_floor_of_rate() {
        let islands = toy_islands(&[8, 8, 8]);
        let out = migrate(&islands, 0.10, &mut seed::rng(4)).unwrap();
        let moved: usize = islands
            .iter()
            .zip(&out)
            .map(|(b, a)| a.members.iter().filter(|m| !b.members.contains(m)).count())
            .sum();
        assert_eq!(moved, 2);
        assert_eq!(ids(&out), ids(&islands));
        assert_eq!(migrate(&islands, 0.0, &mut seed::rng(4)).unwrap(), islands);
    }

    #[test]
    fn full_migration_relocates_everything() {
        let islands = toy_islands(&[2, 2, 2]);
        let out = migrate(&islands, 1.0, &mut seed::rng(11)).unwrap();
        assert_eq!(ids(&out), ids(&islands));
        for (i, isl) in islands.iter().enumerate() {
            for m in &isl.members {
                assert!(!out[i].members.contains(m));
            }
        }
        assert_eq!(migrate(&islands[..1], 0.5, &mut seed::rng(1)), Err(EvolutionError::TooFewIslands));
    }

    #[test]
    fn apportion_sums_and_is_proportional() {
        assert_eq!(apportion(&[10, 10, 20], 8), vec![2, 2, 4]);
        assert_eq!(apportion(&[1, 1, 1], 2), vec![1, 1, 0]);
        assert_eq!(apportion(&[3, 1], 0), vec![0, 0]);
    }

    #[test]
    fn rewrite_mutation_changes_one_bullet() {
        let parent = rule(&["a one", "b two", "Each panel shows small solid circles.", "d four", "e five"]);
        let child = mutate(&parent, &providers(StubTransformer::with_op(MutationOp::Rewrite { index: 2 })), 1, 3).unwrap();
        assert_eq!(child.lineage, vec![Parent { id: parent.id.clone(), op: Operator::Mutation }]);
        assert_eq!(child.generation, 1);
        assert_eq!(child.class, parent.class);
        assert_eq!(bullet_changes(&parent.bullets, &child.bullets), 1);
        assert_eq!(child.bullets[0], "a one");
        assert_ne!(child.bullets[2], parent.bullets[2]);
    }

    #[test]
    fn add_mutation_grows_and_delete_on_four_is_rejected() {
        let parent = rule(&["a one", "b two", "c three", "d four"]);
        let child = mutate(&parent, &providers(StubTransformer::with_op(MutationOp::Add)), 1, 0).unwrap();
        assert_eq!(child.bullets.len(), 5);
        let err = mutate(&parent, &providers(StubTransformer::with_op(MutationOp::Delete)), 1, 2).unwrap_err();
        assert_eq!(err, EvolutionError::RetriesExhausted { attempts: 3 });
    }

    #[test]
    fn crossover_rules() {
        let a = rule(&["a1", "a2", "a3", "a4", "a5"]);
        let b = rule(&["b1", "b2", "b3", "b4", "b5"]);
        let island = Island { class: CanonicalClass::HorizontalSquareDeductive, members: vec![a.id.clone(), b.id.clone()] };
        let p = providers(StubTransformer::default());
        // Retry seeds are derived, so search for a base seed whose first derived seed is even.
        let base = (0..).find(|s| seed::derive(*s, "retry/0").is_multiple_of(2)).unwrap();
        let child = crossover(&a, &b, &island, &p, base, 0).unwrap();
        assert_eq!(child.bullets, ["a1", "b2", "a3", "b4", "a5"]);
        assert_eq!(child.lineage.len(), 2);
        let selfie = crossover(&a, &a, &island, &p, 3, 0).unwrap();
        assert_eq!(selfie.bullets, a.bullets);
        assert!(selfie.lineage.iter().all(|l| l.id == a.id && l.op == Operator::Crossover));
        let other = Island { class: CanonicalClass::Others, members: vec![b.id.clone()] };
        assert!(matches!(crossover(&a, &b, &other, &p, 0, 0), Err(EvolutionError::CrossIsland { .. })));
    }

    #[test]
    fn zero_generations_returns_seeds() {
        let seeds = vec![rule(&["a one", "b two", "c three", "d four"])];
        let cfg = EvolutionConfig { generations: 0, ..Default::default() };
        let out = evolve(&seeds, &cfg, &providers(StubTransformer::default())).unwrap();
        assert_eq!(out.pool, seeds);
    }

    #[test]
    fn config_ranges() {
        assert!(EvolutionConfig { migration_rate: 1.5, ..Default::default() }.validate().is_err());
        assert!(EvolutionConfig { migration_period: 0, ..Default::default() }.validate().is_err());
        assert!((EvolutionConfig::default().offspring_per_generation.powi(10) - 25.0).abs() < 1e-9);
        assert_eq!(EvolutionConfig::default().target(24, 10), 600);
    }

    proptest! {
        #[test]
        fn migration_conserves_population(sizes in prop::collection::vec(1usize..12, 2..6), rate in 0.0f64..=1.0, s in any::<u64>()) {
            let islands = toy_islands(&sizes);
            let out = migrate(&islands, rate, &mut seed::rng(s)).unwrap();
            prop_assert_eq!(ids(&out), ids(&islands));
            let total: usize = sizes.iter().sum();
            let stayed: usize = islands.iter().zip(&out).map(|(b, a)| a.members.iter().filter(|m| b.members.contains(m)).count()).sum();
            prop_assert_eq!(total - stayed, ((rate * total as f64) + 1e-9).floor() as usize);
        }
    }
}
