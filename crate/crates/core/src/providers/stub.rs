//! Deterministic offline providers. Every response is a pure function of the
//! request, so pipeline runs with stubs are reproducible.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::phrasebook;
use super::{parse_bullets, Provider, ProviderError, ProviderRequest, ProviderResponse, RequestKind, Usage};
use crate::rule::{bullet_block, MAX_BULLETS};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum MutationOp {
    /// Replace bullet `index` with a fresh phrase of the same kind.
    Rewrite { index: usize },
    Add,
    Delete,
}

/// Rule transformer driven by a controlled phrase vocabulary.
///
/// * mutation: one rewrite, addition or deletion (chosen from the request
///   seed unless `fixed_op` is set);
/// * crossover: alternating interleave of the two parents, starting with the
///   first parent when `seed` is even;
/// * program: keyword translation of the bullets.
#[derive(Debug, Clone, Default)]
pub struct StubTransformer {
    pub fixed_op: Option<MutationOp>,
}

impl StubTransformer {
    pub fn with_op(op: MutationOp) -> Self {
        Self { fixed_op: Some(op) }
    }

    fn mutate(&self, parent: &[String], seed: u64) -> Vec<String> {
        let mut rng = seed::rng(seed);
        let op = self.fixed_op.unwrap_or_else(|| {
            let roll: f64 = rng.random();
            if roll < 0.6 || parent.is_empty() {
                MutationOp::Rewrite { index: rng.random_range(0..parent.len().max(1)) }
            } else if roll < 0.8 {
                MutationOp::Add
            } else {
                MutationOp::Delete
            }
        });
        let mut child = parent.to_vec();
        match op {
            MutationOp::Rewrite { index } if index < child.len() => {
                child[index] = phrasebook::rewrite(&child[index], parent, &mut rng);
            }
            MutationOp::Rewrite { .. } => {}
            MutationOp::Add => {
                let at = rng.random_range(0..=child.len());
                child.insert(at, phrasebook::addition(parent, &mut rng));
            }
            MutationOp::Delete => {
                if !child.is_empty() {
                    let at = rng.random_range(0..child.len());
                    child.remove(at);
                }
            }
        }
        child
    }
}

/// Alternating interleave: position `i` comes from the first parent when
/// `i + phase` is even, falling back to the other parent when the preferred
/// one is too short.
pub fn interleave(a: &[String], b: &[String], phase: usize) -> Vec<String> {
    let n = a.len().max(b.len()).min(MAX_BULLETS);
    (0..n)
        .map(|i| {
            let (first, second) = if (i + phase).is_multiple_of(2) { (a, b) } else { (b, a) };
            first.get(i).or_else(|| second.get(i)).expect("index below the longer parent").clone()
        })
        .collect()
}

fn bullets_binding(req: &ProviderRequest, name: &str) -> Result<Vec<String>, ProviderError> {
    let block = req.bindings.get(name).ok_or_else(|| ProviderError::UnboundVariable(name.to_string()))?;
    parse_bullets(block)
}

fn respond(req: &ProviderRequest, raw: String) -> Result<ProviderResponse, ProviderError> {
    let prompt = req.prompt()?;
    Ok(ProviderResponse {
        usage: Usage { prompt_chars: prompt.chars().count() as u64, completion_chars: raw.chars().count() as u64 },
        raw,
        embedding: None,
    })
}

impl Provider for StubTransformer {
    fn call(&self, req: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        match req.kind {
            RequestKind::Mutate => {
                let child = self.mutate(&bullets_binding(req, "rule_set")?, req.seed);
                respond(req, format!("<analysis>\nstub\n</analysis>\n<mutated_rules>\n{}\n</mutated_rules>", bullet_block(&child)))
            }
            RequestKind::Crossover => {
                let a = bullets_binding(req, "first_rule_set")?;
                let b = bullets_binding(req, "second_rule_set")?;
                let child = interleave(&a, &b, (req.seed % 2) as usize);
                respond(
                    req,
                    format!(
                        "<comparative_analysis>\nstub\n</comparative_analysis>\n<synthesis>\nstub\n</synthesis>\n<crossover_rules>\n{}\n</crossover_rules>",
                        bullet_block(&child)
                    ),
                )
            }
            RequestKind::Program => {
                let bullets = bullets_binding(req, "rules")?;
                respond(req, format!("<rule_program>\n{}</rule_program>", phrasebook::synthesize_program(&bullets)))
            }
            other => Err(ProviderError::Unsupported(other)),
        }
    }
}

/// Bag-of-hashed-tokens embedder: each lowercase alphanumeric token adds ±1
/// to one of `dim` coordinates chosen by its SHA-256; the sum is normalised.
#[derive(Debug, Clone)]
pub struct StubEmbedder {
    pub dim: usize,
}

impl Default for StubEmbedder {
    fn default() -> Self {
        Self { dim: 64 }
    }
}

impl StubEmbedder {
    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim.max(1)];
        let lower = text.to_lowercase();
        for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let digest = Sha256::digest(token.as_bytes());
            let h = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
            let idx = (h % v.len() as u64) as usize;
            v[idx] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            v[0] = 1.0;
        } else {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Provider for StubEmbedder {
    fn call(&self, req: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        match req.kind {
            RequestKind::Embed => {
                let text = req.bindings.get("text").map(String::as_str).unwrap_or("");
                Ok(ProviderResponse { raw: String::new(), embedding: Some(self.embed_text(text)), usage: Usage::default() })
            }
            other => Err(ProviderError::Unsupported(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StubAnnotator {
    pub readability: u8,
    pub coherence: u8,
}

impl Default for StubAnnotator {
    fn default() -> Self {
        Self { readability: 4, coherence: 4 }
    }
}

impl Provider for StubAnnotator {
    fn call(&self, req: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        match req.kind {
            RequestKind::Annotate => respond(
                req,
                format!(
                    "<reasonableness_evaluation>\nScore: {c}\n</reasonableness_evaluation>\n<readability_evaluation>\nScore: {r}\n</readability_evaluation>\n<final_scores>\nReasonableness: {c}\nReadability: {r}\n</final_scores>",
                    c = self.coherence,
                    r = self.readability
                ),
            ),
            other => Err(ProviderError::Unsupported(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SolverMode {
    /// Always answers correctly.
    Oracle,
    /// Uniform over the listed options.
    Random,
    /// Always picks a wrong option.
    Adversarial,
    /// Correct with probability `accuracy`, otherwise a uniform wrong option.
    Noisy { accuracy: f64 },
}

/// Solver stub. Modes that need the answer look it up by the request
/// subject in a key supplied at construction; the request itself never
/// carries the answer.
#[derive(Debug, Clone)]
pub struct StubSolver {
    pub mode: SolverMode,
    answers: BTreeMap<String, String>,
}

impl StubSolver {
    pub fn new(mode: SolverMode) -> Self {
        Self { mode, answers: BTreeMap::new() }
    }

    pub fn with_answers(mode: SolverMode, answers: BTreeMap<String, String>) -> Self {
        Self { mode, answers }
    }
}

impl Provider for StubSolver {
    fn call(&self, req: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        if req.kind != RequestKind::Solve {
            return Err(ProviderError::Unsupported(req.kind));
        }
        let labels: Vec<String> = req
            .bindings
            .get("options")
            .map(|o| o.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
            .unwrap_or_default();
        if labels.is_empty() {
            return Err(ProviderError::Parse("no options listed".into()));
        }
        let mut rng = seed::rng(req.seed);
        let answer = || {
            self.answers
                .get(&req.subject)
                .cloned()
                .ok_or_else(|| ProviderError::Transport(format!("stub solver has no answer for `{}`", req.subject)))
        };
        let wrong = |rng: &mut rand_chacha::ChaCha8Rng, correct: &str| {
            let others: Vec<&String> = labels.iter().filter(|l| *l != correct).collect();
            others.choose(rng).map(|s| s.to_string()).unwrap_or_else(|| correct.to_string())
        };
        let pick = match self.mode {
            SolverMode::Random => labels.choose(&mut rng).expect("non-empty").clone(),
            SolverMode::Oracle => answer()?,
            SolverMode::Adversarial => wrong(&mut rng, &answer()?),
            SolverMode::Noisy { accuracy } => {
                let correct = answer()?;
                if rng.random_bool(accuracy.clamp(0.0, 1.0)) {
                    correct
                } else {
                    wrong(&mut rng, &correct)
                }
            }
        };
        respond(req, format!("Looking at the sequence step by step, the answer is \\boxed{{{pick}}}."))
    }
}
