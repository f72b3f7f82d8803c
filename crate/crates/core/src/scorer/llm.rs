//! Blocking client for a completion endpoint that reports top log-probabilities.

use serde_json::{json, Value};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use super::prompt::{option_generation_prompt, parse_generated_options, McqaPrompt};
use super::LlmSpec;
use crate::error::{Error, Result};
use crate::label::{ConfidenceVector, Label};

/// Environment variable holding the bearer token, if the endpoint needs one.
pub const API_KEY_ENV: &str = "ASKHELP_API_KEY";

const GENERATION_MAX_TOKENS: u32 = 160;

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    available: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n.max(1)), available: Condvar::new() }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot lock poisoned");
        while *free == 0 {
            free = self.available.wait(free).expect("slot lock poisoned");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slot lock poisoned") += 1;
        self.0.available.notify_one();
    }
}

pub struct LlmClient {
    spec: LlmSpec,
    agent: ureq::Agent,
    api_key: Option<String>,
    slots: Slots,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient")
            .field("spec", &self.spec)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

enum Attempt {
    Retry(String),
    Fatal(Error),
}

impl LlmClient {
    pub fn new(spec: LlmSpec) -> Result<Self> {
        if !(spec.timeout_secs > 0.0 && spec.timeout_secs.is_finite()) {
            return Err(Error::argument("request timeout must be positive"));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(spec.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        let slots = Slots::new(spec.max_in_flight);
        Ok(Self { spec, agent, api_key, slots })
    }

    pub fn spec(&self) -> &LlmSpec {
        &self.spec
    }

    fn url(&self) -> String {
        format!("{}/completions", self.spec.endpoint.trim_end_matches('/'))
    }

    fn attempt(&self, body: &str) -> std::result::Result<Value, Attempt> {
        let mut request = self.agent.post(&self.url()).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send(body).map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&text)
                .map_err(|e| Attempt::Fatal(Error::Protocol(format!("response is not JSON: {e}")))),
            429 | 500..=599 => Err(Attempt::Retry(format!("HTTP {status}"))),
            _ => Err(Attempt::Fatal(Error::Protocol(format!("HTTP {status}: {text}")))),
        }
    }

    /// Posts one completion request, retrying transient failures.
    pub fn complete(&self, prompt: &str, max_tokens: u32, logprobs: Option<u32>) -> Result<Value> {
        let mut body = json!({
            "model": self.spec.model,
            "prompt": prompt,
            "max_tokens": max_tokens,
            "temperature": 0,
        });
        if let Some(n) = logprobs {
            body["logprobs"] = json!(n);
        }
        let body = body.to_string();
        let _slot = self.slots.acquire();
        let mut last = String::new();
        for attempt in 0..=self.spec.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(100 << attempt.min(6)));
            }
            match self.attempt(&body) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => last = msg,
            }
        }
        Err(Error::Transport(format!(
            "{} failed after {} attempts: {last}",
            self.url(),
            self.spec.retries + 1
        )))
    }

    /// Generated text of the first choice.
    pub fn complete_text(&self, prompt: &str, max_tokens: u32) -> Result<String> {
        let v = self.complete(prompt, max_tokens, None)?;
        v.pointer("/choices/0/text")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::Protocol("response has no choices[0].text".into()))
    }

    /// Next-token label probabilities in canonical order.
    pub fn score(&self, prompt: &McqaPrompt) -> Result<ConfidenceVector> {
        let response = self.complete(&prompt.text, 1, Some(5))?;
        parse_top_logprobs(&response, prompt)
    }

    /// Asks for four candidate next steps with the few-shot template.
    pub fn generate_options(&self, context: &str) -> Result<[String; 4]> {
        let text = self.complete_text(&option_generation_prompt(context), GENERATION_MAX_TOKENS)?;
        parse_generated_options(&text)
    }
}

fn label_position(token: &str) -> Option<Label> {
    let t = token.trim();
    let t = t.strip_suffix(')').unwrap_or(t).trim();
    let mut chars = t.chars();
    match (chars.next(), chars.next()) {
        (Some(c @ 'A'..='E'), None) => Label::from_index(c as usize - 'A' as usize),
        _ => None,
    }
}

/// Extracts label probabilities from a completion response. Tokens that map
/// to the same letter are summed; labels that never appear get zero, and the
/// remaining mass is renormalized.
pub fn parse_top_logprobs(response: &Value, prompt: &McqaPrompt) -> Result<ConfidenceVector> {
    let top = response
        .pointer("/choices/0/logprobs/top_logprobs/0")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::Protocol("response has no choices[0].logprobs.top_logprobs[0]".into()))?;
    let mut physical = [0.0; 5];
    for (token, logprob) in top {
        let lp = logprob
            .as_f64()
            .ok_or_else(|| Error::Protocol(format!("logprob for {token:?} is not a number")))?;
        if let Some(pos) = label_position(token) {
            physical[pos.index()] += lp.exp();
        }
    }
    let total: f64 = physical.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateResponse);
    }
    ConfidenceVector::from_weights(prompt.unpermute(physical))
}
