//! Batch translation of dataset text through a chat-completion endpoint.
//!
//! Each [`TranslationJob`] is rendered into the bundled prompt template,
//! looked up in the on-disk [`TranslationCache`], and only sent to the
//! [`CompletionClient`] on a miss. Transport failures are retried with
//! jittered exponential backoff; a job that exhausts its retries is marked
//! failed without affecting the rest of the batch.

mod cache;
mod client;
mod prompt;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use cache::{cache_key, CacheEntry, TranslationCache};
pub use client::{
    CompletionClient, CompletionError, HttpClientConfig, HttpCompletionClient, WireFormat,
};
pub use prompt::{
    render_prompt, system_template, user_template, TranslationPrompt, TEMPLATE_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationJob {
    pub job_id: String,
    pub source_text: String,
    pub target_language: String,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<String>,
    #[serde(default)]
    pub attempts: u32,
    /// Last error seen, kept for failed jobs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TranslationJob {
    pub fn new(
        job_id: impl Into<String>,
        source_text: impl Into<String>,
        target_language: impl Into<String>,
    ) -> Self {
        Self {
            job_id: job_id.into(),
            source_text: source_text.into(),
            target_language: target_language.into(),
            status: JobStatus::Pending,
            result: None,
            attempts: 0,
            error: None,
        }
    }

    pub fn cache_key(&self) -> String {
        cache_key(&self.target_language, &self.source_text, TEMPLATE_VERSION)
    }

    fn fail(mut self, error: String) -> Self {
        self.status = JobStatus::Failed;
        self.result = None;
        self.error = Some(error);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    /// Scale each delay by a uniform factor in `[0.5, 1.0)`.
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(60),
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// Un-jittered delay before retry number `retry` (1-based).
    pub fn nominal_delay(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry.saturating_sub(1));
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }

    fn delay(&self, retry: u32) -> Duration {
        let d = self.nominal_delay(retry);
        if self.jitter && !d.is_zero() {
            d.mul_f64(rand::thread_rng().gen_range(0.5..1.0))
        } else {
            d
        }
    }
}

/// Token-bucket limiter shared by all workers of a batch.
#[derive(Debug)]
pub struct RateLimiter {
    rate: f64,
    burst: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    /// `rate` requests per second with up to `burst` back to back.
    pub fn new(rate: f64, burst: u32) -> Self {
        assert!(rate > 0.0 && rate.is_finite(), "rate must be positive");
        let burst = f64::from(burst.max(1));
        Self {
            rate,
            burst,
            state: Mutex::new((burst, Instant::now())),
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().unwrap();
                let now = Instant::now();
                let (tokens, last) = *state;
                let tokens = (tokens + now.duration_since(last).as_secs_f64() * self.rate)
                    .min(self.burst);
                if tokens >= 1.0 {
                    *state = (tokens - 1.0, now);
                    return;
                }
                *state = (tokens, now);
                (1.0 - tokens) / self.rate
            };
            thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOptions {
    /// Maximum requests in flight.
    pub concurrency: usize,
    /// Requests per second across the whole batch; `None` is unlimited.
    pub rate_limit: Option<f64>,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            concurrency: 8,
            rate_limit: None,
        }
    }
}

struct Worker<'a> {
    client: &'a dyn CompletionClient,
    cache: &'a TranslationCache,
    policy: &'a RetryPolicy,
    limiter: Option<&'a RateLimiter>,
}

impl Worker<'_> {
    fn run(&self, mut job: TranslationJob) -> TranslationJob {
        if job.status == JobStatus::Done && job.result.is_some() {
            return job;
        }
        let key = job.cache_key();
        match self.cache.get(&key) {
            Ok(Some(entry)) => {
                debug!("cache hit for job {}", job.job_id);
                job.status = JobStatus::Done;
                job.result = Some(entry.result);
                job.error = None;
                return job;
            }
            Ok(None) => {}
            Err(e) => warn!("ignoring cache entry for job {}: {e}", job.job_id),
        }
        let prompt = match render_prompt(&job.target_language, &job.source_text) {
            Ok(p) => p,
            Err(e) => return job.fail(e.to_string()),
        };

        job.attempts = 0;
        let mut last_error = String::new();
        for attempt in 1..=self.policy.max_retries + 1 {
            if attempt > 1 {
                thread::sleep(self.policy.delay(attempt - 1));
            }
            if let Some(limiter) = self.limiter {
                limiter.acquire();
            }
            job.attempts = attempt;
            match self.client.complete(&prompt.system_text, &prompt.user_text) {
                Ok(text) if !text.trim().is_empty() => {
                    let entry = CacheEntry {
                        key,
                        result: text.clone(),
                        target_language: job.target_language.clone(),
                        template_version: TEMPLATE_VERSION.to_owned(),
                        attempts: attempt,
                    };
                    if let Err(e) = self.cache.put(&entry) {
                        warn!("failed to cache job {}: {e}", job.job_id);
                    }
                    job.status = JobStatus::Done;
                    job.result = Some(text);
                    job.error = None;
                    return job;
                }
                Ok(_) => last_error = CompletionError::Empty.to_string(),
                Err(e) => last_error = e.to_string(),
            }
            debug!("job {} attempt {attempt} failed: {last_error}", job.job_id);
        }
        warn!(
            "job {} failed after {} attempts: {last_error}",
            job.job_id, job.attempts
        );
        job.fail(last_error)
    }
}

/// Translates every job, returning them in input order.
pub fn translate_batch(
    jobs: Vec<TranslationJob>,
    client: &dyn CompletionClient,
    cache: &TranslationCache,
    policy: &RetryPolicy,
    options: &BatchOptions,
) -> Vec<TranslationJob> {
    if jobs.is_empty() {
        return jobs;
    }
    let limiter = options.rate_limit.map(|r| RateLimiter::new(r, 1));
    let worker = Worker {
        client,
        cache,
        policy,
        limiter: limiter.as_ref(),
    };
    let threads = options.concurrency.clamp(1, jobs.len());
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<TranslationJob>>> =
        jobs.into_iter().map(|j| Mutex::new(Some(j))).collect();
    let (tx, rx) = mpsc::channel();

    thread::scope(|scope| {
        for _ in 0..threads {
            let tx = tx.clone();
            let (worker, next, slots) = (&worker, &next, &slots);
            scope.spawn(move || loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                let Some(slot) = slots.get(idx) else { break };
                let job = slot.lock().unwrap().take().expect("each slot taken once");
                let done = worker.run(job);
                if tx.send((idx, done)).is_err() {
                    break;
                }
            });
        }
    });
    drop(tx);

    let mut out: Vec<Option<TranslationJob>> = (0..slots.len()).map(|_| None).collect();
    for (idx, job) in rx {
        out[idx] = Some(job);
    }
    out.into_iter()
        .map(|j| j.expect("every job produces a result"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy::default();
        assert_eq!(p.nominal_delay(1), Duration::from_secs(1));
        assert_eq!(p.nominal_delay(2), Duration::from_secs(2));
        assert_eq!(p.nominal_delay(3), Duration::from_secs(4));
        assert_eq!(p.nominal_delay(40), Duration::from_secs(60));
        for _ in 0..50 {
            let d = p.delay(2);
            assert!(d >= Duration::from_secs(1) && d < Duration::from_secs(2));
        }
    }

    #[test]
    fn rate_limiter_spaces_requests() {
        let limiter = RateLimiter::new(200.0, 1);
        let start = Instant::now();
        for _ in 0..11 {
            limiter.acquire();
        }
        // First token is free; ten more need at least 50 ms at 200/s.
        assert!(start.elapsed() >= Duration::from_millis(45));
    }

    #[test]
    fn job_serialization_skips_absent_fields() {
        let job = TranslationJob::new("1", "hello", "Chinese");
        let v = serde_json::to_value(&job).unwrap();
        assert_eq!(v["status"], "pending");
        assert!(v.get("result").is_none());
    }
}
