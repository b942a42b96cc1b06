//! Binary "does this excerpt pertain to this activity?" classification over a
//! pluggable inference backend.

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::ordered_map;

pub const DECISION_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MAX_RETRIES: u32 = 2;

pub const TEXT_PLACEHOLDER: &str = "{TEXT}";
pub const ACTIVITY_PLACEHOLDER: &str = "{ACTIVITY}";

/// Appended to every rendered classification prompt.
pub const OUTPUT_INSTRUCTION: &str =
    "Answer with a single character: 1 if the excerpt pertains to the activity, 0 otherwise.";

pub const DEFAULT_TEMPLATE_ID: &str = "esg-activity-zero-shot-v1";
const DEFAULT_SYSTEM: &str = "You assess whether a company disclosure excerpt pertains to a specific EU taxonomy activity.";
const DEFAULT_BODY: &str = "EU taxonomy activity:\n{ACTIVITY}\n\nDisclosure excerpt:\n{TEXT}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Text,
    Activity,
}

/// A prompt with one `{TEXT}` and one `{ACTIVITY}` slot. The system text is
/// sent as the system message; the body becomes the user message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TemplateSpec", into = "TemplateSpec")]
pub struct PromptTemplate {
    template_id: String,
    system: String,
    body: String,
    segments: Vec<Segment>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TemplateSpec {
    template_id: String,
    system: String,
    body: String,
}

impl TryFrom<TemplateSpec> for PromptTemplate {
    type Error = Error;

    fn try_from(s: TemplateSpec) -> Result<Self> {
        PromptTemplate::new(s.template_id, s.system, s.body)
    }
}

impl From<PromptTemplate> for TemplateSpec {
    fn from(t: PromptTemplate) -> Self {
        TemplateSpec {
            template_id: t.template_id,
            system: t.system,
            body: t.body,
        }
    }
}

fn split_template(body: &str) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut rest = body;
    loop {
        let next = [
            (rest.find(TEXT_PLACEHOLDER), TEXT_PLACEHOLDER, Segment::Text),
            (rest.find(ACTIVITY_PLACEHOLDER), ACTIVITY_PLACEHOLDER, Segment::Activity),
        ]
        .into_iter()
        .filter_map(|(pos, ph, seg)| pos.map(|p| (p, ph, seg)))
        .min_by_key(|(p, _, _)| *p);
        match next {
            Some((pos, ph, seg)) => {
                if pos > 0 {
                    segments.push(Segment::Literal(rest[..pos].to_string()));
                }
                segments.push(seg);
                rest = &rest[pos + ph.len()..];
            }
            None => {
                if !rest.is_empty() {
                    segments.push(Segment::Literal(rest.to_string()));
                }
                return segments;
            }
        }
    }
}

impl PromptTemplate {
    pub fn new(
        template_id: impl Into<String>,
        system: impl Into<String>,
        body: impl Into<String>,
    ) -> Result<Self> {
        let template_id = template_id.into();
        let body = body.into();
        let segments = split_template(&body);
        for (seg, name) in [(Segment::Text, TEXT_PLACEHOLDER), (Segment::Activity, ACTIVITY_PLACEHOLDER)] {
            let n = segments.iter().filter(|s| **s == seg).count();
            if n != 1 {
                return Err(Error::Template {
                    template_id,
                    message: format!("placeholder {name} must appear exactly once (found {n})"),
                });
            }
        }
        Ok(PromptTemplate {
            template_id,
            system: system.into(),
            body,
            segments,
        })
    }

    pub fn template_id(&self) -> &str {
        &self.template_id
    }

    pub fn system_text(&self) -> &str {
        &self.system
    }

    /// Renders the user prompt in a single pass, so placeholder-like text in
    /// the inputs is never substituted.
    pub fn render(&self, chunk_text: &str, activity_text: &str) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(s) => out.push_str(s),
                Segment::Text => out.push_str(chunk_text),
                Segment::Activity => out.push_str(activity_text),
            }
        }
        out.push_str("\n\n");
        out.push_str(OUTPUT_INSTRUCTION);
        out
    }

    pub fn messages(&self, chunk_text: &str, activity_text: &str) -> Vec<ChatMessage> {
        vec![
            ChatMessage::new(Role::System, self.system.clone()),
            ChatMessage::new(Role::User, self.render(chunk_text, activity_text)),
        ]
    }

    /// Recovers `(chunk_text, activity_text)` from a rendered prompt. Fails when
    /// the prompt does not match or more than one split is possible.
    pub fn unrender(&self, prompt: &str) -> Result<(String, String)> {
        let mismatch = |m: &str| Error::Template {
            template_id: self.template_id.clone(),
            message: m.to_string(),
        };
        let body = prompt
            .strip_suffix(OUTPUT_INSTRUCTION)
            .and_then(|p| p.strip_suffix("\n\n"))
            .ok_or_else(|| mismatch("prompt lacks the output instruction"))?;
        let mut found: Option<(String, String)> = None;
        let mut count = 0;
        match_segments(&self.segments, body, None, None, &mut |t, a| {
            count += 1;
            found.get_or_insert_with(|| (t.to_string(), a.to_string()));
        });
        match (count, found) {
            (1, Some(pair)) => Ok(pair),
            (0, _) => Err(mismatch("prompt does not match the template")),
            _ => Err(mismatch("prompt splits ambiguously")),
        }
    }
}

fn match_segments<'a>(
    segs: &[Segment],
    rest: &'a str,
    text: Option<&'a str>,
    activity: Option<&'a str>,
    emit: &mut dyn FnMut(&str, &str),
) {
    let Some((head, tail)) = segs.split_first() else {
        if rest.is_empty() {
            if let (Some(t), Some(a)) = (text, activity) {
                emit(t, a);
            }
        }
        return;
    };
    match head {
        Segment::Literal(lit) => {
            if let Some(r) = rest.strip_prefix(lit.as_str()) {
                match_segments(tail, r, text, activity, emit);
            }
        }
        slot => {
            // candidate split points: where the next literal occurs, or the end
            let cuts: Vec<usize> = match tail.first() {
                None => vec![rest.len()],
                Some(Segment::Literal(lit)) => rest.match_indices(lit.as_str()).map(|(i, _)| i).collect(),
                Some(_) => rest
                    .char_indices()
                    .map(|(i, _)| i)
                    .chain(std::iter::once(rest.len()))
                    .collect(),
            };
            for i in cuts {
                let (value, r) = rest.split_at(i);
                if *slot == Segment::Text {
                    match_segments(tail, r, Some(value), activity, emit);
                } else {
                    match_segments(tail, r, text, Some(value), emit);
                }
            }
        }
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::new(DEFAULT_TEMPLATE_ID, DEFAULT_SYSTEM, DEFAULT_BODY)
            .expect("default template is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationRequest {
    pub chunk_text: String,
    pub activity_text: String,
    pub prompt_template_id: String,
    /// Identifiers of the pair, when known. Never sent to remote backends.
    #[serde(default)]
    pub chunk_id: Option<String>,
    #[serde(default)]
    pub activity_id: Option<String>,
}

impl ClassificationRequest {
    pub fn new(chunk_text: impl Into<String>, activity_text: impl Into<String>) -> Self {
        ClassificationRequest {
            chunk_text: chunk_text.into(),
            activity_text: activity_text.into(),
            prompt_template_id: DEFAULT_TEMPLATE_ID.into(),
            chunk_id: None,
            activity_id: None,
        }
    }

    pub fn with_ids(mut self, chunk_id: impl Into<String>, activity_id: impl Into<String>) -> Self {
        self.chunk_id = Some(chunk_id.into());
        self.activity_id = Some(activity_id.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: u8,
    #[serde(default)]
    pub probability: Option<f64>,
    pub raw_output: String,
    pub template_id: String,
}

/// What the backend is asked: rendered chat messages plus the pair ids for
/// backends that key on them.
#[derive(Debug, Clone)]
pub struct CompletionRequest {
    pub messages: Vec<ChatMessage>,
    pub chunk_id: Option<String>,
    pub activity_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub probability: Option<f64>,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Completion {
            text: text.into(),
            probability: None,
        }
    }
}

pub trait InferenceBackend: Send + Sync {
    fn backend_id(&self) -> String;

    fn complete(&self, req: &CompletionRequest) -> Result<Completion>;
}

/// Parses a model reply into a label. Strips surrounding whitespace and
/// punctuation, then accepts a leading standalone `1`/`0`/`yes`/`no`.
pub fn parse_verdict(raw: &str) -> Option<u8> {
    let trimmed = raw.trim_start_matches(|c: char| !c.is_alphanumeric());
    let end = trimmed
        .find(|c: char| !c.is_alphanumeric())
        .unwrap_or(trimmed.len());
    match trimmed[..end].to_ascii_lowercase().as_str() {
        "1" | "yes" => Some(1),
        "0" | "no" => Some(0),
        _ => None,
    }
}

pub struct Classifier<'a> {
    pub backend: &'a dyn InferenceBackend,
    pub template: &'a PromptTemplate,
    pub max_retries: u32,
}

impl<'a> Classifier<'a> {
    pub fn new(backend: &'a dyn InferenceBackend, template: &'a PromptTemplate) -> Self {
        Classifier {
            backend,
            template,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }

    pub fn classify(&self, req: &ClassificationRequest) -> Result<Verdict> {
        if req.chunk_text.trim().is_empty() || req.activity_text.trim().is_empty() {
            return Err(Error::InvalidArgument(
                "classification needs non-empty chunk and activity text".into(),
            ));
        }
        let completion_req = CompletionRequest {
            messages: self.template.messages(&req.chunk_text, &req.activity_text),
            chunk_id: req.chunk_id.clone(),
            activity_id: req.activity_id.clone(),
        };
        let attempts = self.max_retries + 1;
        let mut last_raw = String::new();
        for _ in 0..attempts {
            let out = self.backend.complete(&completion_req)?;
            let label = match out.probability {
                Some(p) if (0.0..=1.0).contains(&p) => Some(u8::from(p >= DECISION_THRESHOLD)),
                Some(p) => {
                    return Err(Error::Validation(format!("backend probability {p} outside [0, 1]")))
                }
                None => parse_verdict(&out.text),
            };
            if let Some(label) = label {
                return Ok(Verdict {
                    label,
                    probability: out.probability,
                    raw_output: out.text,
                    template_id: self.template.template_id.clone(),
                });
            }
            last_raw = out.text;
        }
        Err(Error::Unparseable {
            attempts,
            raw_output: last_raw,
        })
    }

    /// Order-preserving batch classification; failures are reported per item.
    pub fn classify_batch(
        &self,
        reqs: &[ClassificationRequest],
        parallelism: usize,
    ) -> Vec<Result<Verdict>> {
        ordered_map(reqs, parallelism, |r| self.classify(r))
    }
}

pub fn classify(
    req: &ClassificationRequest,
    backend: &dyn InferenceBackend,
    template: &PromptTemplate,
) -> Result<Verdict> {
    Classifier::new(backend, template).classify(req)
}

pub fn classify_batch(
    reqs: &[ClassificationRequest],
    backend: &dyn InferenceBackend,
    template: &PromptTemplate,
    parallelism: usize,
) -> Vec<Result<Verdict>> {
    Classifier::new(backend, template).classify_batch(reqs, parallelism)
}

/// Test/oracle backend: answers `1` for configured `(chunk_id, activity_id)`
/// pairs and a default label otherwise.
#[derive(Debug, Clone, Default)]
pub struct OracleBackend {
    labels: HashMap<(String, String), u8>,
    pub default_label: u8,
}

impl OracleBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_label(mut self, chunk_id: &str, activity_id: &str, label: u8) -> Self {
        self.insert(chunk_id, activity_id, label);
        self
    }

    pub fn insert(&mut self, chunk_id: &str, activity_id: &str, label: u8) {
        self.labels
            .insert((chunk_id.to_string(), activity_id.to_string()), label);
    }
}

impl InferenceBackend for OracleBackend {
    fn backend_id(&self) -> String {
        "oracle".into()
    }

    fn complete(&self, req: &CompletionRequest) -> Result<Completion> {
        let key = match (&req.chunk_id, &req.activity_id) {
            (Some(c), Some(a)) => Some((c.clone(), a.clone())),
            _ => None,
        };
        let label = key
            .and_then(|k| self.labels.get(&k).copied())
            .unwrap_or(self.default_label);
        Ok(Completion::text(label.to_string()))
    }
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Debug, Deserialize)]
struct ChatReply {
    content: String,
}

/// Chat-completion backend over HTTP (`{model, messages, temperature}` in,
/// `{choices: [{message: {content}}]}` out). Point `model` at a fine-tuned
/// model name to evaluate fine-tuned variants.
#[derive(Debug, Clone)]
pub struct RemoteChatBackend {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub temperature: f64,
    pub timeout: Duration,
}

impl RemoteChatBackend {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteChatBackend {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            temperature: 0.0,
            timeout: Duration::from_secs(120),
        }
    }

    /// Reads `INFER_ENDPOINT`, `INFER_MODEL` and optional `INFER_API_KEY`.
    pub fn from_env() -> Result<Self> {
        let var = |k: &str| {
            std::env::var(k).map_err(|_| Error::InvalidArgument(format!("{k} is not set")))
        };
        let mut b = RemoteChatBackend::new(var("INFER_ENDPOINT")?, var("INFER_MODEL")?);
        b.api_key = std::env::var("INFER_API_KEY").ok();
        Ok(b)
    }
}

impl InferenceBackend for RemoteChatBackend {
    fn backend_id(&self) -> String {
        format!("remote:{}", self.model)
    }

    fn complete(&self, req: &CompletionRequest) -> Result<Completion> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let mut call = agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let body = ChatRequest {
            model: &self.model,
            messages: &req.messages,
            temperature: self.temperature,
        };
        let mut resp = call
            .send_json(&body)
            .map_err(|e| Error::Transport(e.to_string()))?;
        let parsed: ChatResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::Transport(format!("bad chat response: {e}")))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| Error::Transport("chat response has no choices".into()))?;
        Ok(Completion::text(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Mutex;

    struct Scripted {
        replies: Vec<&'static str>,
        calls: AtomicU32,
    }

    impl Scripted {
        fn new(replies: Vec<&'static str>) -> Self {
            Scripted { replies, calls: AtomicU32::new(0) }
        }
    }

    impl InferenceBackend for Scripted {
        fn backend_id(&self) -> String {
            "scripted".into()
        }
        fn complete(&self, _: &CompletionRequest) -> Result<Completion> {
            let i = self.calls.fetch_add(1, Ordering::SeqCst) as usize;
            Ok(Completion::text(self.replies[i.min(self.replies.len() - 1)]))
        }
    }

    #[test]
    fn render_contains_inputs_once() {
        let t = PromptTemplate::default();
        let c = "Rail electrification of 120 km of regional lines.";
        let i = "Low-carbon rail transport of passengers.";
        let p = t.render(c, i);
        assert_eq!(p.matches(c).count(), 1);
        assert_eq!(p.matches(i).count(), 1);
        assert!(p.ends_with(OUTPUT_INSTRUCTION));
        assert_eq!(p, t.render(c, i));
        let msgs = t.messages(c, i);
        assert_eq!(msgs[0].role, Role::System);
        assert_eq!(msgs[1].content, p);
    }

    #[test]
    fn placeholders_in_inputs_are_not_expanded() {
        let t = PromptTemplate::default();
        let p = t.render("mentions {ACTIVITY} literally", "act");
        assert!(p.contains("mentions {ACTIVITY} literally"));
        assert_eq!(t.unrender(&p).unwrap(), ("mentions {ACTIVITY} literally".into(), "act".into()));
    }

    #[test]
    fn template_validation() {
        let missing = PromptTemplate::new("t", "sys", "only {TEXT}");
        assert!(matches!(missing, Err(Error::Template { .. })));
        let twice = PromptTemplate::new("t", "sys", "{TEXT} {TEXT} {ACTIVITY}");
        assert!(twice.is_err());
        let spec: std::result::Result<PromptTemplate, _> =
            serde_json::from_str(r#"{"template_id":"x","system":"s","body":"{TEXT}"}"#);
        assert!(spec.is_err());
    }

    #[test]
    fn parser_contract() {
        let cases = [
            ("1", Some(1)),
            ("0.", Some(0)),
            (" 1\n", Some(1)),
            ("No", Some(0)),
            ("YES, it does", Some(1)),
            ("\"0\"", Some(0)),
            ("1 - the excerpt describes electric trains", Some(1)),
            ("01", None),
            ("10", None),
            ("", None),
            ("the text is about biodiversity", None),
            ("Nope", None),
            ("2", None),
        ];
        for (raw, want) in cases {
            assert_eq!(parse_verdict(raw), want, "{raw:?}");
        }
    }

    #[test]
    fn classify_with_oracle() {
        let oracle = OracleBackend::new().with_label("c1", "i1", 1);
        let t = PromptTemplate::default();
        let hit = classify(&ClassificationRequest::new("text", "act").with_ids("c1", "i1"), &oracle, &t).unwrap();
        assert_eq!(hit.label, 1);
        assert_eq!(hit.template_id, DEFAULT_TEMPLATE_ID);
        let miss = classify(&ClassificationRequest::new("text", "act").with_ids("c2", "i1"), &oracle, &t).unwrap();
        assert_eq!(miss.label, 0);
    }

    #[test]
    fn retries_then_unparseable() {
        let t = PromptTemplate::default();
        let b = Scripted::new(vec!["the text is about biodiversity"]);
        match classify(&ClassificationRequest::new("c", "i"), &b, &t) {
            Err(Error::Unparseable { attempts, raw_output }) => {
                assert_eq!(attempts, DEFAULT_MAX_RETRIES + 1);
                assert_eq!(raw_output, "the text is about biodiversity");
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);

        let recovers = Scripted::new(vec!["hmm", "0."]);
        let v = classify(&ClassificationRequest::new("c", "i"), &recovers, &t).unwrap();
        assert_eq!((v.label, v.raw_output.as_str()), (0, "0."));
    }

    #[test]
    fn probability_decides_label() {
        struct Prob(f64);
        impl InferenceBackend for Prob {
            fn backend_id(&self) -> String {
                "prob".into()
            }
            fn complete(&self, _: &CompletionRequest) -> Result<Completion> {
                Ok(Completion { text: "p".into(), probability: Some(self.0) })
            }
        }
        let t = PromptTemplate::default();
        let req = ClassificationRequest::new("c", "i");
        assert_eq!(classify(&req, &Prob(0.5), &t).unwrap().label, 1);
        assert_eq!(classify(&req, &Prob(0.4999), &t).unwrap().label, 0);
        assert!(classify(&req, &Prob(1.5), &t).is_err());
    }

    #[test]
    fn empty_inputs_rejected() {
        let t = PromptTemplate::default();
        assert!(classify(&ClassificationRequest::new(" ", "i"), &OracleBackend::new(), &t).is_err());
    }

    /// Oracle stub with random completion delays and one poisoned pair.
    struct Jittery {
        oracle: OracleBackend,
        rng: Mutex<rand_chacha::ChaCha8Rng>,
        fail_chunk: String,
    }

    impl InferenceBackend for Jittery {
        fn backend_id(&self) -> String {
            "jittery".into()
        }
        fn complete(&self, req: &CompletionRequest) -> Result<Completion> {
            let us = self.rng.lock().unwrap().gen_range(0..400);
            std::thread::sleep(std::time::Duration::from_micros(us));
            if req.chunk_id.as_deref() == Some(self.fail_chunk.as_str()) {
                return Err(Error::Transport("boom".into()));
            }
            self.oracle.complete(req)
        }
    }

    fn jittery(seed: u64) -> Jittery {
        let mut oracle = OracleBackend::new();
        for i in (0..10).step_by(3) {
            oracle.insert(&format!("c{i}"), "a", 1);
        }
        Jittery {
            oracle,
            rng: Mutex::new(rand_chacha::ChaCha8Rng::seed_from_u64(seed)),
            fail_chunk: "c4".into(),
        }
    }

    fn reqs(n: usize) -> Vec<ClassificationRequest> {
        (0..n)
            .map(|i| ClassificationRequest::new(format!("text {i}"), "act").with_ids(format!("c{i}"), "a"))
            .collect()
    }

    #[test]
    fn batch_isolates_failures_and_keeps_order() {
        let t = PromptTemplate::default();
        let out = classify_batch(&reqs(10), &jittery(1), &t, 4);
        assert_eq!(out.len(), 10);
        assert_eq!(out.iter().filter(|r| r.is_err()).count(), 1);
        assert!(matches!(out[4], Err(Error::Transport(_))));
        let labels: Vec<Option<u8>> = out.iter().map(|r| r.as_ref().ok().map(|v| v.label)).collect();
        assert_eq!(
            labels,
            [Some(1), Some(0), Some(0), Some(1), None, Some(0), Some(1), Some(0), Some(0), Some(1)]
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn batch_is_parallelism_independent(seed in any::<u64>(), par in 1usize..9) {
            let t = PromptTemplate::default();
            let rs = reqs(12);
            let serial: Vec<_> = classify_batch(&rs, &jittery(seed), &t, 1)
                .into_iter().map(|r| r.ok()).collect();
            let parallel: Vec<_> = classify_batch(&rs, &jittery(seed ^ 0xff), &t, par)
                .into_iter().map(|r| r.ok()).collect();
            prop_assert_eq!(serial, parallel);
        }

        #[test]
        fn parser_is_total(raw in ".{0,40}") {
            let _ = parse_verdict(&raw);
        }

        #[test]
        fn unrender_inverts_render(c in "[a-zA-Z0-9 .,\n]{1,60}", a in "[a-zA-Z0-9 .,]{1,40}") {
            let t = PromptTemplate::default();
            let p = t.render(&c, &a);
            prop_assert_eq!(t.unrender(&p).unwrap(), (c, a));
        }
    }
}
