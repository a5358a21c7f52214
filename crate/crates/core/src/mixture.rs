//! Manifest loading and weighted task-mixture sampling.
//!
//! Sampling is bucket-first with replacement: a task bucket is drawn by
//! weight, then a record is drawn uniformly inside it. The generator is
//! ChaCha8 seeded through `SeedableRng::seed_from_u64`; bucket selection
//! takes one `f64` in `[0, 1)` against the cumulative normalized weights and
//! record selection takes one `gen_range(0..bucket_len)`. Both are stable
//! across platforms for a given `rand`/`rand_chacha` release.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Captioning,
    Detection,
    OcrLarge,
    OcrSmall,
    GeneralQa,
    Science,
    Chart,
    Mathematics,
    Knowledge,
    OcrFt,
    Document,
    Grounding,
    Conversation,
    TextOnly,
}

impl Task {
    pub const ALL: [Task; 14] = [
        Task::Captioning,
        Task::Detection,
        Task::OcrLarge,
        Task::OcrSmall,
        Task::GeneralQa,
        Task::Science,
        Task::Chart,
        Task::Mathematics,
        Task::Knowledge,
        Task::OcrFt,
        Task::Document,
        Task::Grounding,
        Task::Conversation,
        Task::TextOnly,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Captioning => "captioning",
            Task::Detection => "detection",
            Task::OcrLarge => "ocr_large",
            Task::OcrSmall => "ocr_small",
            Task::GeneralQa => "general_qa",
            Task::Science => "science",
            Task::Chart => "chart",
            Task::Mathematics => "mathematics",
            Task::Knowledge => "knowledge",
            Task::OcrFt => "ocr_ft",
            Task::Document => "document",
            Task::Grounding => "grounding",
            Task::Conversation => "conversation",
            Task::TextOnly => "text_only",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidMixture(format!("unknown task `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    En,
    Zh,
    EnZh,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub path: String,
    pub task: Task,
    pub language: Language,
    pub dataset_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub task: Task,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub buckets: Vec<Bucket>,
}

impl MixtureSpec {
    /// Validates and normalizes raw weights so they sum to one.
    pub fn new(buckets: Vec<Bucket>) -> Result<Self> {
        if buckets.is_empty() {
            return Err(Error::InvalidMixture("no buckets".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for b in &buckets {
            if !b.weight.is_finite() || b.weight < 0.0 {
                return Err(Error::InvalidMixture(format!(
                    "weight for `{}` must be finite and nonnegative, got {}",
                    b.task, b.weight
                )));
            }
            if !seen.insert(b.task) {
                return Err(Error::InvalidMixture(format!(
                    "task `{}` listed twice",
                    b.task
                )));
            }
        }
        let total: f64 = buckets.iter().map(|b| b.weight).sum();
        if total <= 0.0 {
            return Err(Error::InvalidMixture("weights sum to zero".into()));
        }
        Ok(Self {
            buckets: buckets
                .into_iter()
                .map(|b| Bucket {
                    task: b.task,
                    weight: b.weight / total,
                })
                .collect(),
        })
    }

    /// Pre-training task mixture: captioning, detection, large- and
    /// small-scale OCR.
    pub fn pretrain_default() -> Self {
        Self::new(
            PRETRAIN_WEIGHTS
                .iter()
                .map(|&(task, weight)| Bucket { task, weight })
                .collect(),
        )
        .expect("built-in weights are valid")
    }

    /// Weights proportional to how many records each task has.
    pub fn uniform_by_record(records: &[ManifestRecord]) -> Result<Self> {
        let mut counts: BTreeMap<Task, usize> = BTreeMap::new();
        for r in records {
            *counts.entry(r.task).or_default() += 1;
        }
        Self::new(
            counts
                .into_iter()
                .map(|(task, n)| Bucket {
                    task,
                    weight: n as f64,
                })
                .collect(),
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: MixtureSpec = serde_json::from_str(text)?;
        Self::new(raw.buckets)
    }

    pub fn weight(&self, task: Task) -> f64 {
        self.buckets
            .iter()
            .find(|b| b.task == task)
            .map_or(0.0, |b| b.weight)
    }
}

pub const PRETRAIN_WEIGHTS: [(Task, f64); 4] = [
    (Task::Captioning, 0.539),
    (Task::Detection, 0.052),
    (Task::OcrLarge, 0.320),
    (Task::OcrSmall, 0.089),
];

/// Reads a JSONL manifest. Blank lines are skipped.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading manifest {}", path.display()), e))?;
    parse_manifest(&text, path)
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<ManifestRecord>> {
    let mut records = Vec::new();
    let mut offset = 0;
    for (idx, line) in text.split_inclusive('\n').enumerate() {
        let start = offset;
        offset += line.len();
        let body = line.trim_end_matches(['\n', '\r']);
        if body.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::ManifestParse {
            path: path.to_path_buf(),
            line: idx + 1,
            offset: start,
            message,
        };
        let record: ManifestRecord =
            serde_json::from_str(body).map_err(|e| err(e.to_string()))?;
        if record.path.is_empty() {
            return Err(err("empty `path`".into()));
        }
        records.push(record);
    }
    Ok(records)
}

/// Draws `n` records according to `spec`, deterministically in `seed`.
pub fn sample(
    records: &[ManifestRecord],
    spec: &MixtureSpec,
    n: usize,
    seed: u64,
) -> Result<Vec<ManifestRecord>> {
    let spec = MixtureSpec::new(spec.buckets.clone())?;
    let mut pools: Vec<(f64, Vec<&ManifestRecord>)> = Vec::new();
    for bucket in spec.buckets.iter().filter(|b| b.weight > 0.0) {
        let pool: Vec<_> = records.iter().filter(|r| r.task == bucket.task).collect();
        if pool.is_empty() {
            return Err(Error::EmptyBucket(bucket.task.to_string()));
        }
        pools.push((bucket.weight, pool));
    }
    let mut cumulative = Vec::with_capacity(pools.len());
    let mut acc = 0.0;
    for (w, _) in &pools {
        acc += w;
        cumulative.push(acc);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen::<f64>() * acc;
        let bucket = cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(pools.len() - 1);
        let pool = &pools[bucket].1;
        out.push(pool[rng.gen_range(0..pool.len())].clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskShare {
    pub count: usize,
    pub fraction: f64,
}

pub fn mixture_report(samples: &[ManifestRecord]) -> BTreeMap<Task, TaskShare> {
    let mut counts: BTreeMap<Task, usize> = BTreeMap::new();
    for s in samples {
        *counts.entry(s.task).or_default() += 1;
    }
    let total = samples.len() as f64;
    counts
        .into_iter()
        .map(|(task, count)| {
            (
                task,
                TaskShare {
                    count,
                    fraction: count as f64 / total,
                },
            )
        })
        .collect()
}

/// Aligned text rendering of a [`mixture_report`].
pub fn format_report_table(report: &BTreeMap<Task, TaskShare>) -> String {
    let width = report
        .keys()
        .map(|t| t.as_str().len())
        .max()
        .unwrap_or(0)
        .max("task".len());
    let mut out = format!("{:<width$}  {:>10}  {:>8}\n", "task", "count", "percent");
    for (task, share) in report {
        out.push_str(&format!(
            "{:<width$}  {:>10}  {:>7.3}%\n",
            task.as_str(),
            share.count,
            share.fraction * 100.0
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn record(id: usize, task: Task) -> ManifestRecord {
        ManifestRecord {
            sample_id: format!("s{id}"),
            path: format!("images/{id}.jpg"),
            task,
            language: Language::En,
            dataset_name: "synthetic".into(),
        }
    }

    fn corpus() -> Vec<ManifestRecord> {
        let mut v = Vec::new();
        for (i, task) in [
            Task::Captioning,
            Task::Detection,
            Task::OcrLarge,
            Task::OcrSmall,
        ]
        .into_iter()
        .enumerate()
        {
            for j in 0..(i + 2) {
                v.push(record(i * 10 + j, task));
            }
        }
        v
    }

    #[test]
    fn default_weights_sum_to_one() {
        let raw: f64 = PRETRAIN_WEIGHTS.iter().map(|(_, w)| w).sum();
        assert!((raw - 1.0).abs() < 1e-12);
        let spec = MixtureSpec::pretrain_default();
        let sum: f64 = spec.buckets.iter().map(|b| b.weight).sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!((spec.weight(Task::OcrLarge) - 0.320).abs() < 1e-12);
    }

    #[test]
    fn normalizes_and_validates() {
        let spec = MixtureSpec::new(vec![
            Bucket {
                task: Task::Chart,
                weight: 3.0,
            },
            Bucket {
                task: Task::Science,
                weight: 1.0,
            },
        ])
        .unwrap();
        assert_eq!(spec.weight(Task::Chart), 0.75);
        assert!(MixtureSpec::new(vec![]).is_err());
        let neg = Bucket {
            task: Task::Chart,
            weight: -1.0,
        };
        assert!(MixtureSpec::new(vec![neg]).is_err());
        let zero = Bucket {
            task: Task::Chart,
            weight: 0.0,
        };
        assert!(MixtureSpec::new(vec![zero]).is_err());
        let dup = Bucket {
            task: Task::Chart,
            weight: 1.0,
        };
        assert!(MixtureSpec::new(vec![dup, dup]).is_err());
    }

    #[test]
    fn parses_three_lines_and_empty() {
        let text = corpus()
            .iter()
            .take(3)
            .map(|r| serde_json::to_string(r).unwrap() + "\n")
            .collect::<String>();
        let recs = parse_manifest(&text, Path::new("m.jsonl")).unwrap();
        assert_eq!(recs.len(), 3);
        assert!(parse_manifest("", Path::new("m.jsonl")).unwrap().is_empty());
    }

    #[test]
    fn missing_task_names_line_and_offset() {
        let good = serde_json::to_string(&record(1, Task::Chart)).unwrap();
        let bad = r#"{"sample_id":"x","path":"p","language":"en","dataset_name":"d"}"#;
        let text = format!("{good}\n{bad}\n");
        let err = parse_manifest(&text, Path::new("m.jsonl")).unwrap_err();
        match err {
            Error::ManifestParse {
                line,
                offset,
                ref message,
                ..
            } => {
                assert_eq!(line, 2);
                assert_eq!(offset, good.len() + 1);
                assert!(message.contains("task"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().starts_with("m.jsonl:2"));
    }

    #[test]
    fn rejects_unknown_enum_and_empty_path() {
        let bad = r#"{"sample_id":"x","path":"p","task":"juggling","language":"en","dataset_name":"d"}"#;
        assert!(parse_manifest(bad, Path::new("m")).is_err());
        let bad = r#"{"sample_id":"x","path":"","task":"chart","language":"en","dataset_name":"d"}"#;
        assert!(parse_manifest(bad, Path::new("m")).is_err());
    }

    #[test]
    fn load_manifest_reports_missing_file() {
        let err = load_manifest(&PathBuf::from("/nonexistent/manifest.jsonl")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn single_bucket_spec() {
        let spec = MixtureSpec::new(vec![Bucket {
            task: Task::OcrSmall,
            weight: 1.0,
        }])
        .unwrap();
        let out = sample(&corpus(), &spec, 500, 7).unwrap();
        assert!(out.iter().all(|r| r.task == Task::OcrSmall));
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = MixtureSpec::pretrain_default();
        let a = sample(&corpus(), &spec, 2000, 42).unwrap();
        let b = sample(&corpus(), &spec, 2000, 42).unwrap();
        assert_eq!(a, b);
        let c = sample(&corpus(), &spec, 2000, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn starved_bucket_is_named() {
        let recs: Vec<_> = corpus()
            .into_iter()
            .filter(|r| r.task != Task::Detection)
            .collect();
        let err = sample(&recs, &MixtureSpec::pretrain_default(), 10, 0).unwrap_err();
        assert!(matches!(err, Error::EmptyBucket(ref t) if t == "detection"));
    }

    #[test]
    fn zero_weight_bucket_may_be_empty() {
        let spec = MixtureSpec::new(vec![
            Bucket {
                task: Task::Captioning,
                weight: 1.0,
            },
            Bucket {
                task: Task::Knowledge,
                weight: 0.0,
            },
        ])
        .unwrap();
        assert_eq!(sample(&corpus(), &spec, 10, 1).unwrap().len(), 10);
    }

    #[test]
    fn report_edge_cases() {
        assert!(mixture_report(&[]).is_empty());
        let ten: Vec<_> = (0..10).map(|i| record(i, Task::Captioning)).collect();
        let r = mixture_report(&ten);
        assert_eq!(r.len(), 1);
        assert_eq!(
            r[&Task::Captioning],
            TaskShare {
                count: 10,
                fraction: 1.0
            }
        );
        let table = format_report_table(&r);
        assert!(table.contains("captioning"));
        assert!(table.contains("100.000%"));
    }

    #[test]
    fn uniform_by_record_follows_counts() {
        let spec = MixtureSpec::uniform_by_record(&corpus()).unwrap();
        // corpus sizes 2, 3, 4, 5
        assert!((spec.weight(Task::OcrSmall) - 5.0 / 14.0).abs() < 1e-12);
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = MixtureSpec::pretrain_default();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(MixtureSpec::from_json(&json).unwrap(), spec);
        assert!(MixtureSpec::from_json(r#"{"buckets":[{"task":"chart","weight":-2}]}"#).is_err());
    }
}
