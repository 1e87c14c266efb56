//! External AI-backed services behind one request/response contract.
//!
//! Four roles use the contract: the rule *transformer* (mutation, crossover,
//! abstraction, rule-program writing), the *embedder*, the puzzle
//! *annotator* and the *solver*. Each has a deterministic stub in [`stub`];
//! an HTTP client (`HttpProvider`) lives behind the `http` feature.
//!
//! Prompts are stored as text assets under `templates/` with `{{name}}`
//! placeholders. Responses carry their structured output inside XML-like
//! tags, which [`parse_tagged`] extracts.

mod phrasebook;
pub mod stub;
pub mod http;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rule::{bullet_block, Rule, ScoreTriple};

pub use phrasebook::synthesize_program;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Mutate,
    Crossover,
    Abstract,
    Score,
    Annotate,
    Solve,
    Embed,
    /// Translate bullets into a rule program.
    Program,
}

impl RequestKind {
    pub fn takes_attachments(&self) -> bool {
        matches!(self, RequestKind::Annotate | RequestKind::Solve)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Crossover,
    Mutate,
    Score,
    Abstract,
    Annotate,
    Solve,
    Program,
    Style1,
    Style2,
    Style3,
}

impl TemplateId {
    pub const ALL: [TemplateId; 10] = [
        TemplateId::Crossover,
        TemplateId::Mutate,
        TemplateId::Score,
        TemplateId::Abstract,
        TemplateId::Annotate,
        TemplateId::Solve,
        TemplateId::Program,
        TemplateId::Style1,
        TemplateId::Style2,
        TemplateId::Style3,
    ];

    pub fn text(&self) -> &'static str {
        match self {
            TemplateId::Crossover => include_str!("../../templates/crossover.txt"),
            TemplateId::Mutate => include_str!("../../templates/mutate.txt"),
            TemplateId::Score => include_str!("../../templates/score.txt"),
            TemplateId::Abstract => include_str!("../../templates/abstract.txt"),
            TemplateId::Annotate => include_str!("../../templates/annotate.txt"),
            TemplateId::Solve => include_str!("../../templates/solve.txt"),
            TemplateId::Program => include_str!("../../templates/program.txt"),
            TemplateId::Style1 => include_str!("../../templates/style_1.txt"),
            TemplateId::Style2 => include_str!("../../templates/style_2.txt"),
            TemplateId::Style3 => include_str!("../../templates/style_3.txt"),
        }
    }

    /// Placeholder names in order of first appearance.
    pub fn variables(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        let text = self.text();
        let mut rest = text;
        while let Some(start) = rest.find("{{") {
            let after = &rest[start + 2..];
            match after.find("}}") {
                Some(end) => {
                    let name = after[..end].trim();
                    if is_identifier(name) && !out.contains(&name) {
                        out.push(name);
                    }
                    rest = &after[end + 2..];
                }
                None => break,
            }
        }
        out
    }

    pub fn for_kind(kind: RequestKind) -> Option<TemplateId> {
        match kind {
            RequestKind::Mutate => Some(TemplateId::Mutate),
            RequestKind::Crossover => Some(TemplateId::Crossover),
            RequestKind::Abstract => Some(TemplateId::Abstract),
            RequestKind::Score => Some(TemplateId::Score),
            RequestKind::Annotate => Some(TemplateId::Annotate),
            RequestKind::Solve => Some(TemplateId::Solve),
            RequestKind::Program => Some(TemplateId::Program),
            RequestKind::Embed => None,
        }
    }
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub type Bindings = BTreeMap<String, String>;

pub fn bindings<const N: usize>(pairs: [(&str, String); N]) -> Bindings {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("template variable `{0}` is unbound")]
    UnboundVariable(String),
    #[error("response has no <{0}> tag")]
    MissingTag(String),
    #[error("malformed bullet list: {0}")]
    MalformedBullets(String),
    #[error("could not parse response: {0}")]
    Parse(String),
    #[error("{0:?} requests cannot carry attachments")]
    UnexpectedAttachment(RequestKind),
    #[error("provider does not handle {0:?} requests")]
    Unsupported(RequestKind),
    #[error("transport: {0}")]
    Transport(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<ProviderError> },
}

/// Substitutes every `{{name}}` placeholder. Bindings that the template does
/// not use are ignored.
pub fn render_template(template: &str, vars: &Bindings) -> Result<String, ProviderError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else {
            out.push_str(&rest[start..]);
            return Ok(out);
        };
        let name = after[..end].trim();
        if is_identifier(name) {
            let value = vars.get(name).ok_or_else(|| ProviderError::UnboundVariable(name.to_string()))?;
            out.push_str(value);
        } else {
            out.push_str(&rest[start..start + 2 + end + 2]);
        }
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

pub fn render_prompt(template: TemplateId, vars: &Bindings) -> Result<String, ProviderError> {
    render_template(template.text(), vars)
}

/// Content of the innermost `<tag>…</tag>` pair that closes first, trimmed.
pub fn parse_tagged(text: &str, tag: &str) -> Result<String, ProviderError> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let end = text.find(&close).ok_or_else(|| ProviderError::MissingTag(tag.to_string()))?;
    let start = text[..end].rfind(&open).ok_or_else(|| ProviderError::MissingTag(tag.to_string()))?;
    Ok(text[start + open.len()..end].trim().to_string())
}

/// Splits a `- item` list. Blank lines are skipped; any other line not
/// starting with `-` is an error.
pub fn parse_bullets(content: &str) -> Result<Vec<String>, ProviderError> {
    let mut bullets = Vec::new();
    for line in content.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let item = line
            .strip_prefix("- ")
            .or_else(|| line.strip_prefix('-'))
            .ok_or_else(|| ProviderError::MalformedBullets(format!("line without `- `: {line:?}")))?
            .trim();
        if item.is_empty() {
            return Err(ProviderError::MalformedBullets("empty bullet".into()));
        }
        bullets.push(item.to_string());
    }
    if bullets.is_empty() {
        return Err(ProviderError::MalformedBullets("no bullets".into()));
    }
    Ok(bullets)
}

fn first_integer(text: &str) -> Option<u8> {
    let digits: String =
        text.chars().skip_while(|c| !c.is_ascii_digit()).take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}

/// Reads the three `## Final Score` tags of a scoring response.
pub fn parse_scores(text: &str) -> Result<ScoreTriple, ProviderError> {
    let read = |tag: &str| -> Result<u8, ProviderError> {
        let body = parse_tagged(text, tag)?;
        first_integer(&body).ok_or_else(|| ProviderError::Parse(format!("<{tag}> has no score")))
    };
    ScoreTriple::new(read("format_score")?, read("content_quality")?, read("feasibility")?)
        .map_err(|e| ProviderError::Parse(e.to_string()))
}

/// Reasonableness and readability from an annotation response's
/// `<final_scores>` block.
pub fn parse_annotation(text: &str) -> Result<(u8, u8), ProviderError> {
    let block = parse_tagged(text, "final_scores")?;
    let find = |key: &str| {
        block
            .lines()
            .find(|l| l.trim_start().to_ascii_lowercase().starts_with(key))
            .and_then(first_integer)
            .filter(|v| (1..=5).contains(v))
            .ok_or_else(|| ProviderError::Parse(format!("missing {key} score")))
    };
    Ok((find("reasonableness")?, find("readability")?))
}

/// The last `\boxed{…}` answer in a solver response.
pub fn parse_boxed(text: &str) -> Option<String> {
    let start = text.rfind("\\boxed{")? + "\\boxed{".len();
    let end = text[start..].find('}')? + start;
    Some(text[start..end].trim().to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub name: String,
    #[serde(skip)]
    pub png: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub kind: RequestKind,
    pub template: Option<TemplateId>,
    pub bindings: Bindings,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
    /// Sampling seed; stubs derive all randomness from it.
    pub seed: u64,
    /// Caller-side identifier (rule or puzzle id), for logging and stubs.
    #[serde(default)]
    pub subject: String,
}

impl ProviderRequest {
    pub fn new(kind: RequestKind, bindings: Bindings, seed: u64) -> Self {
        Self { kind, template: TemplateId::for_kind(kind), bindings, attachments: Vec::new(), seed, subject: String::new() }
    }

    pub fn with_subject(mut self, subject: &str) -> Self {
        self.subject = subject.to_string();
        self
    }

    pub fn with_attachment(mut self, name: &str, png: Vec<u8>) -> Self {
        self.attachments.push(Attachment { name: name.to_string(), png });
        self
    }

    /// Checks the attachment rule and renders the prompt text.
    pub fn prompt(&self) -> Result<String, ProviderError> {
        if !self.attachments.is_empty() && !self.kind.takes_attachments() {
            return Err(ProviderError::UnexpectedAttachment(self.kind));
        }
        match self.template {
            Some(t) => render_prompt(t, &self.bindings),
            None => Ok(self.bindings.get("text").cloned().unwrap_or_default()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_chars: u64,
    pub completion_chars: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub raw: String,
    #[serde(default)]
    pub embedding: Option<Vec<f64>>,
    #[serde(default)]
    pub usage: Usage,
}

impl ProviderResponse {
    pub fn text(raw: String) -> Self {
        Self { raw, embedding: None, usage: Usage::default() }
    }
}

pub trait Provider: Send + Sync {
    fn call(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, base_delay_ms: 500 }
    }
}

/// Calls `provider` and parses the response, retrying transport and parse
/// failures with exponential backoff. Unbound variables and unsupported
/// kinds fail immediately.
pub fn call_parsed<T>(
    provider: &dyn Provider,
    request: &ProviderRequest,
    policy: &RetryPolicy,
    parse: impl Fn(&ProviderResponse) -> Result<T, ProviderError>,
) -> Result<T, ProviderError> {
    request.prompt()?;
    let attempts = policy.attempts.max(1);
    let mut last = None;
    for attempt in 0..attempts {
        if attempt > 0 && policy.base_delay_ms > 0 {
            std::thread::sleep(std::time::Duration::from_millis(policy.base_delay_ms << (attempt - 1)));
        }
        let result = provider.call(request).and_then(|r| parse(&r));
        match result {
            Ok(v) => return Ok(v),
            Err(e @ (ProviderError::UnboundVariable(_) | ProviderError::Unsupported(_) | ProviderError::UnexpectedAttachment(_))) => {
                return Err(e)
            }
            Err(e) => last = Some(e),
        }
    }
    let last = last.expect("at least one attempt");
    if attempts == 1 {
        return Err(last);
    }
    Err(ProviderError::Exhausted { attempts, last: Box::new(last) })
}

/// The four provider roles used by the pipeline.
#[derive(Clone)]
pub struct ProviderSet {
    pub transformer: Arc<dyn Provider>,
    pub embedder: Arc<dyn Provider>,
    pub annotator: Arc<dyn Provider>,
    pub solver: Arc<dyn Provider>,
    pub retry: RetryPolicy,
}

impl ProviderSet {
    pub fn mutate(&self, parent: &Rule, seed: u64) -> Result<Vec<String>, ProviderError> {
        let req = ProviderRequest::new(RequestKind::Mutate, bindings([("rule_set", parent.bullet_block())]), seed)
            .with_subject(&parent.id);
        call_parsed(self.transformer.as_ref(), &req, &self.retry, |r| {
            parse_bullets(&parse_tagged(&r.raw, "mutated_rules")?)
        })
    }

    pub fn crossover(&self, a: &Rule, b: &Rule, seed: u64) -> Result<Vec<String>, ProviderError> {
        let req = ProviderRequest::new(
            RequestKind::Crossover,
            bindings([("first_rule_set", a.bullet_block()), ("second_rule_set", b.bullet_block())]),
            seed,
        )
        .with_subject(&format!("{}+{}", a.id, b.id));
        call_parsed(self.transformer.as_ref(), &req, &self.retry, |r| {
            parse_bullets(&parse_tagged(&r.raw, "crossover_rules")?)
        })
    }

    pub fn program(&self, rule: &Rule, seed: u64) -> Result<String, ProviderError> {
        let req = ProviderRequest::new(RequestKind::Program, bindings([("rules", rule.bullet_block())]), seed)
            .with_subject(&rule.id);
        call_parsed(self.transformer.as_ref(), &req, &self.retry, |r| parse_tagged(&r.raw, "rule_program"))
    }

    pub fn embed(&self, subject: &str, bullets: &[String]) -> Result<Vec<f64>, ProviderError> {
        let req = ProviderRequest::new(RequestKind::Embed, bindings([("text", bullet_block(bullets))]), 0)
            .with_subject(subject);
        call_parsed(self.embedder.as_ref(), &req, &self.retry, |r| {
            r.embedding.clone().ok_or_else(|| ProviderError::Parse("response carries no embedding".into()))
        })
    }

    /// Returns `(readability, coherence)`.
    pub fn annotate(&self, request: ProviderRequest) -> Result<(u8, u8), ProviderError> {
        call_parsed(self.annotator.as_ref(), &request, &self.retry, |r| {
            parse_annotation(&r.raw).map(|(reasonableness, readability)| (readability, reasonableness))
        })
    }

    pub fn solve(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        call_parsed(self.solver.as_ref(), request, &self.retry, |r| {
            parse_boxed(&r.raw).ok_or_else(|| ProviderError::Parse("no \\boxed{} answer".into()))
        })
    }
}

/// The solver instruction for a puzzle with the given option labels.
pub fn solve_bindings(labels: &[String]) -> Bindings {
    bindings([
        (
            "question",
            "Choose the option that should replace the question mark to continue the pattern shown in the top row."
                .to_string(),
        ),
        ("options", labels.join(", ")),
    ])
}
