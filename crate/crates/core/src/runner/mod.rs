//! Dataset runs: job orchestration, persistence and reports.
//!
//! A run writes `records.jsonl` (one record per sample, measure and repeat,
//! in manifest order), `summary.csv`, `meta.json` and optionally
//! `heatmaps/*.svg` into its output directory. Records are keyed by a hash
//! of the sample and the run configuration, so rerunning an identical
//! configuration reuses what is already on disk.

mod backend;
mod heatmap;
mod store;
mod summary;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use backend::{open_backend, BackendSpec, BRIDGE_CMD_ENV};
pub use heatmap::{color, render_heatmap, write_heatmap, HeatmapData, NEUTRAL};
pub use store::ResultStore;
pub use summary::{summarize, write_summary, SummaryRow, SUMMARY_COLUMNS};

use crate::bridge::{Bridge, ImageMaskPolicy, MaskPolicy, TilingConfig};
use crate::ccshap::{self, ExplanationMode, Similarity};
use crate::consistency::{EditTester, WordLists, DEFAULT_MAX_ATTEMPTS};
use crate::error::{Error, Result};
use crate::mmshap::{score_episode, AggregationMode};
use crate::session::{GenerationLimits, Session};
use crate::shapley::{attribute, EstimatorProvenance, ShapleyConfig, DEFAULT_BUDGET};
use crate::tasks::{
    build_alignment_prompt, build_pairwise_prompt, id_salt, load_manifest, short_answer_matches, ManifestSample,
    MetricRecord, Setting, TaskItem, TaskSetting,
};
use crate::types::{AttributionMatrix, ConsistencyRecord, MeasureKind, ModalityScore, TranscriptEntry};

pub const DEFAULT_LIMIT: usize = 100;

/// A quantity a run can compute per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum RunMeasure {
    MmShap,
    Consistency(MeasureKind),
    Metrics,
}

impl RunMeasure {
    pub fn slug(&self) -> &'static str {
        match self {
            RunMeasure::MmShap => "mm-shap",
            RunMeasure::Consistency(k) => k.slug(),
            RunMeasure::Metrics => "metrics",
        }
    }

    pub fn all_consistency() -> Vec<RunMeasure> {
        MeasureKind::ALL.iter().map(|&k| RunMeasure::Consistency(k)).collect()
    }

    pub fn edit_tests() -> Vec<RunMeasure> {
        MeasureKind::EDIT_TESTS.iter().map(|&k| RunMeasure::Consistency(k)).collect()
    }
}

impl std::str::FromStr for RunMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mm-shap" => Ok(RunMeasure::MmShap),
            "metrics" => Ok(RunMeasure::Metrics),
            _ => MeasureKind::ALL
                .iter()
                .find(|k| k.slug() == s)
                .map(|&k| RunMeasure::Consistency(k))
                .ok_or_else(|| Error::invalid(format!("unknown measure {s:?}"))),
        }
    }
}

impl std::fmt::Display for RunMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.slug())
    }
}

impl From<RunMeasure> for String {
    fn from(m: RunMeasure) -> String {
        m.slug().to_string()
    }
}

impl TryFrom<String> for RunMeasure {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub backend: BackendSpec,
    pub fixture: Option<PathBuf>,
    pub manifest: PathBuf,
    pub setting: TaskSetting,
    pub measures: Vec<RunMeasure>,
    pub budget: usize,
    pub seed: u64,
    pub repeat: usize,
    pub limit: usize,
    pub out_dir: PathBuf,
    pub agg_mode: AggregationMode,
    /// Fixed patch-grid side; negotiated from the prompt length when absent.
    pub patches: Option<usize>,
    pub similarity: Similarity,
    pub max_attempts: usize,
    /// Directory overriding the bundled word lists.
    pub words_dir: Option<PathBuf>,
    pub image_mask: ImageMaskPolicy,
    pub heatmaps: bool,
    /// Worker threads; all cores when absent. Not part of the fingerprint.
    pub workers: Option<usize>,
    /// Ignore records already on disk.
    pub fresh: bool,
}

impl RunConfig {
    pub fn new(backend: BackendSpec, manifest: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            backend,
            fixture: None,
            manifest: manifest.into(),
            setting: TaskSetting::default(),
            measures: vec![RunMeasure::MmShap],
            budget: DEFAULT_BUDGET,
            seed: 0,
            repeat: 1,
            limit: DEFAULT_LIMIT,
            out_dir: out_dir.into(),
            agg_mode: AggregationMode::default(),
            patches: None,
            similarity: Similarity::default(),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            words_dir: None,
            image_mask: ImageMaskPolicy::default(),
            heatmaps: false,
            workers: None,
            fresh: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeat == 0 {
            return Err(Error::invalid("repeat must be at least 1"));
        }
        if self.limit == 0 {
            return Err(Error::invalid("sample limit must be at least 1"));
        }
        if self.measures.is_empty() {
            return Err(Error::invalid("no measures selected"));
        }
        if self.max_attempts == 0 {
            return Err(Error::invalid("max attempts must be at least 1"));
        }
        if self.patches == Some(0) {
            return Err(Error::invalid("patch grid side must be at least 1"));
        }
        Ok(())
    }

    fn tiling(&self) -> TilingConfig {
        match self.patches {
            Some(side) => TilingConfig::fixed(side),
            None => TilingConfig::default(),
        }
    }

    /// Hash of everything that can change a record's content.
    pub fn fingerprint(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Fingerprint<'a> {
            version: &'a str,
            backend: String,
            fixture: Option<String>,
            setting: TaskSetting,
            budget: usize,
            agg_mode: AggregationMode,
            patches: Option<usize>,
            similarity: Similarity,
            max_attempts: usize,
            words: Option<String>,
            image_mask: ImageMaskPolicy,
            limits: (usize, usize),
        }
        let limits = GenerationLimits::default();
        let fp = Fingerprint {
            version: env!("CARGO_PKG_VERSION"),
            backend: self.backend.to_string(),
            fixture: self.fixture.as_deref().map(hash_path).transpose()?,
            setting: self.setting,
            budget: self.budget,
            agg_mode: self.agg_mode,
            patches: self.patches,
            similarity: self.similarity,
            max_attempts: self.max_attempts,
            words: self.words_dir.as_deref().map(hash_path).transpose()?,
            image_mask: self.image_mask,
            limits: (limits.answer, limits.explanation),
        };
        Ok(sha256_hex(serde_json::to_string(&fp)?.as_bytes()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Content hash of a file, or of the sorted files of a directory.
fn hash_path(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        entries.sort();
        for p in entries.iter().filter(|p| p.is_file()) {
            hasher.update(p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
            hasher.update(std::fs::read(p)?);
        }
    } else if path.exists() {
        hasher.update(std::fs::read(path)?);
    } else {
        hasher.update(path.to_string_lossy().as_bytes());
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Attribution of the answer to one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmShapRecord {
    pub prompt: String,
    pub output_tokens: Vec<String>,
    pub text_tokens: Vec<String>,
    pub grid_side: usize,
    pub attribution: AttributionMatrix,
    pub aggregated: Vec<f64>,
    pub score: ModalityScore,
    pub agg_mode: AggregationMode,
    pub provenance: EstimatorProvenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub metrics: Vec<MetricRecord>,
    pub transcript: Vec<TranscriptEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordBody {
    MmShap(MmShapRecord),
    Consistency(ConsistencyRecord),
    Benchmark(BenchRecord),
    Failed { error: String },
}

/// One line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub key: String,
    pub dataset: String,
    pub sample_id: String,
    pub measure: RunMeasure,
    pub repeat: usize,
    pub seed: u64,
    pub result: RecordBody,
}

impl RunRecord {
    pub fn is_failed(&self) -> bool {
        matches!(self.result, RecordBody::Failed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub records: PathBuf,
    pub summary: PathBuf,
    pub meta: PathBuf,
    pub heatmaps: Vec<PathBuf>,
    pub computed: usize,
    pub reused: usize,
    pub failed: usize,
    pub warnings: Vec<String>,
}

struct Job<'a> {
    key: String,
    sample: &'a ManifestSample,
    item: Option<TaskItem>,
    measure: RunMeasure,
    repeat: usize,
}

impl Job<'_> {
    fn sample_id(&self) -> String {
        self.item.as_ref().map_or_else(|| self.sample.id().to_string(), |i| i.id.clone())
    }
}

/// Keeps at most `limit` samples, chosen by `seed`, in manifest order.
pub fn select_samples(samples: Vec<ManifestSample>, limit: usize, seed: u64) -> Vec<ManifestSample> {
    if samples.len() <= limit {
        return samples;
    }
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut keep: Vec<usize> = idx.into_iter().take(limit).collect();
    keep.sort_unstable();
    let mut samples: Vec<Option<ManifestSample>> = samples.into_iter().map(Some).collect();
    keep.into_iter().filter_map(|i| samples[i].take()).collect()
}

pub fn dataset_name(manifest: &Path) -> String {
    manifest
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn job_seed(base: u64, repeat: usize) -> u64 {
    base.wrapping_add(repeat as u64)
}

fn build_jobs<'a>(config: &RunConfig, samples: &'a [ManifestSample], fingerprint: &str) -> Result<Vec<Job<'a>>> {
    let mut jobs = Vec::new();
    for sample in samples {
        let sample_json = serde_json::to_string(sample)?;
        for &measure in &config.measures {
            let items: Vec<Option<TaskItem>> = match measure {
                RunMeasure::Metrics => vec![None],
                _ => TaskItem::from_manifest(sample, config.setting, config.seed)
                    .into_iter()
                    .map(Some)
                    .collect(),
            };
            for item in items {
                for repeat in 0..config.repeat {
                    let item_id = item.as_ref().map_or("", |i| i.id.as_str());
                    let key = sha256_hex(
                        format!("{fingerprint}\n{sample_json}\n{item_id}\n{measure}\n{}", job_seed(config.seed, repeat))
                            .as_bytes(),
                    );
                    jobs.push(Job {
                        key,
                        sample,
                        item: item.clone(),
                        measure,
                        repeat,
                    });
                }
            }
        }
    }
    Ok(jobs)
}

struct Engine<'a> {
    config: &'a RunConfig,
    bridge: &'a Bridge,
    tester: EditTester,
}

impl Engine<'_> {
    fn session(&self, seed: u64) -> Session<'_> {
        let mut s = Session::new(self.bridge);
        s.shapley = ShapleyConfig {
            budget: self.config.budget,
            seed,
        };
        s.tiling = self.config.tiling();
        s.agg_mode = self.config.agg_mode;
        s
    }

    fn execute(&self, job: &Job, seed: u64) -> Result<RecordBody> {
        let session = self.session(seed);
        match (job.measure, &job.item) {
            (RunMeasure::MmShap, Some(item)) => Ok(RecordBody::MmShap(mm_shap_item(&session, item)?)),
            (RunMeasure::Consistency(kind), Some(item)) => {
                let record = match kind {
                    MeasureKind::CcShapPosthoc => {
                        ccshap::measure(&session, item, ExplanationMode::PostHoc, self.config.similarity)
                    }
                    MeasureKind::CcShapCot => ccshap::measure(&session, item, ExplanationMode::Cot, self.config.similarity),
                    edit => self.tester.run(&session, item, edit)?,
                };
                Ok(RecordBody::Consistency(record))
            }
            (RunMeasure::Metrics, _) => Ok(RecordBody::Benchmark(bench_sample(&session, job.sample, seed)?)),
            (_, None) => Err(Error::invalid("per-item measure scheduled without an item")),
        }
    }
}

/// Generates the answer to an item and attributes it.
pub fn mm_shap_item(session: &Session, item: &TaskItem) -> Result<MmShapRecord> {
    let prompt = item.answer_prompt(session.template()?);
    let generation = session.generate(&prompt, &item.image, session.limits.answer, None)?;
    let episode = session.episode(&generation, &item.image)?;
    let attribution = attribute(&episode, session.bridge, &session.shapley)?;
    let (agg, score) = score_episode(&attribution.matrix, &episode.input, session.agg_mode)?;
    Ok(MmShapRecord {
        prompt,
        output_tokens: episode.output_tokens.clone(),
        text_tokens: episode.input.surfaces(),
        grid_side: episode.input.grid_side(),
        attribution: attribution.matrix,
        aggregated: agg.phi_bar,
        score,
        agg_mode: session.agg_mode,
        provenance: attribution.provenance,
    })
}

/// Scores one manifest sample in every applicable benchmark setting.
/// Prompts are sent verbatim, without a chat template.
pub fn bench_sample(session: &Session, sample: &ManifestSample, seed: u64) -> Result<BenchRecord> {
    let mut metrics = Vec::new();
    let mut transcript = Vec::new();
    let mut ask = |label: &str, prompt: &str, image: &str| -> Result<String> {
        let g = session.generate(prompt, image, session.limits.answer, None)?;
        transcript.push(TranscriptEntry::new(label, prompt, g.text()));
        Ok(g.text())
    };
    match sample {
        ManifestSample::Foil(f) => {
            let (prompt, key) = build_pairwise_prompt(f, seed ^ id_salt(&f.id));
            let answer = ask("pairwise", &prompt, &f.image)?;
            metrics.push(MetricRecord::judge(&f.id, Setting::Pairwise, &answer, key));
            for (setting, sentence) in [(Setting::AlignmentCaption, &f.caption), (Setting::AlignmentFoil, &f.foil)] {
                let prompt = build_alignment_prompt(sentence)?;
                let label = if setting == Setting::AlignmentCaption { "alignment-caption" } else { "alignment-foil" };
                let answer = ask(label, &prompt, &f.image)?;
                metrics.push(MetricRecord::judge(&f.id, setting, &answer, crate::tasks::alignment_key(setting)));
            }
        }
        ManifestSample::Qa(q) => {
            let item = TaskItem::from_manifest(sample, TaskSetting::default(), seed).remove(0);
            let prompt = item.answer_prompt(session.template()?);
            let answer = ask("short-answer", &prompt, &q.image)?;
            let judgement = if short_answer_matches(&answer, &q.answers) {
                crate::tasks::Judgement::Correct
            } else {
                crate::tasks::Judgement::Incorrect
            };
            metrics.push(MetricRecord {
                sample_id: q.id.clone(),
                setting: Setting::ShortAnswer,
                judgement,
            });
        }
    }
    Ok(BenchRecord { metrics, transcript })
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn file_stem_for(record: &RunRecord) -> String {
    let id: String = record
        .sample_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{id}.{}.r{}", record.measure, record.repeat)
}

/// Heatmap panels for a record, with a file-name suffix each.
pub fn heatmaps_for(record: &RunRecord) -> Vec<(String, HeatmapData)> {
    let stem = file_stem_for(record);
    match &record.result {
        RecordBody::MmShap(m) => {
            let n_text = m.text_tokens.len();
            vec![(
                format!("{stem}.svg"),
                HeatmapData {
                    title: format!("{} {} (T-SHAP {})", record.sample_id, record.measure, fmt_pct(m.score.t_shap())),
                    tokens: m.text_tokens.clone(),
                    text_values: m.aggregated[..n_text.min(m.aggregated.len())].to_vec(),
                    grid_side: m.grid_side,
                    patch_values: m.aggregated[n_text.min(m.aggregated.len())..].to_vec(),
                },
            )]
        }
        RecordBody::Consistency(c) => match &c.details {
            Some(d) => {
                let nq = d.question_tokens.len();
                [("prediction", &d.prediction), ("explanation", &d.explanation)]
                    .into_iter()
                    .filter(|(_, v)| v.values.len() >= nq)
                    .map(|(which, v)| {
                        (
                            format!("{stem}.{which}.svg"),
                            HeatmapData {
                                title: format!("{} {} {which}", record.sample_id, record.measure),
                                tokens: d.question_tokens.clone(),
                                text_values: v.values[..nq].to_vec(),
                                grid_side: d.grid_side,
                                patch_values: v.values[nq..].to_vec(),
                            },
                        )
                    })
                    .collect()
            }
            None => Vec::new(),
        },
        _ => Vec::new(),
    }
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |v| format!("{:.1}%", 100.0 * v))
}

/// Writes heatmaps for every record that has contributions.
pub fn write_heatmaps(records: &[RunRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for r in records {
        for (name, data) in heatmaps_for(r) {
            let path = dir.join(name);
            write_heatmap(&data, &path)?;
            paths.push(path);
        }
    }
    Ok(paths)
}

/// Runs every configured measure over the manifest.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let started = Instant::now();
    let started_at = unix_now();
    let samples = select_samples(load_manifest(&config.manifest)?, config.limit, config.seed);
    let dataset = dataset_name(&config.manifest);

    let backend = open_backend(&config.backend, config.fixture.as_deref())?;
    let bridge = Bridge::new(backend).with_mask_policy(MaskPolicy {
        image: config.image_mask,
        ..MaskPolicy::default()
    });
    let handshake = bridge
        .handshake()
        .map_err(|e| Error::BackendLaunch(format!("handshake with {} failed: {e}", config.backend)))?
        .clone();

    let words = match &config.words_dir {
        Some(dir) => WordLists::from_dir(dir)?,
        None => WordLists::bundled(),
    };
    let mut tester = EditTester::new(words);
    tester.max_attempts = config.max_attempts;

    let fingerprint = config.fingerprint()?;
    let jobs = build_jobs(config, &samples, &fingerprint)?;
    std::fs::create_dir_all(&config.out_dir)?;
    let store = ResultStore::open(&config.out_dir, !config.fresh)?;

    let engine = Engine {
        config,
        bridge: &bridge,
        tester,
    };
    let reused = AtomicUsize::new(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
    let records: Vec<RunRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|job| -> Result<RunRecord> {
                if let Some(r) = store.get(&job.key) {
                    reused.fetch_add(1, Ordering::Relaxed);
                    return Ok(r.clone());
                }
                let seed = job_seed(config.seed, job.repeat);
                let result = engine
                    .execute(job, seed)
                    .unwrap_or_else(|e| RecordBody::Failed { error: e.to_string() });
                let record = RunRecord {
                    key: job.key.clone(),
                    dataset: dataset.clone(),
                    sample_id: job.sample_id(),
                    measure: job.measure,
                    repeat: job.repeat,
                    seed,
                    result,
                };
                store.append(&record)?;
                Ok(record)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    store.finalize(&records)?;

    let warnings: Vec<String> = records
        .iter()
        .filter_map(|r| match &r.result {
            RecordBody::Failed { error } => Some(format!("{} {}: {error}", r.sample_id, r.measure)),
            _ => None,
        })
        .collect();
    let summary_path = config.out_dir.join("summary.csv");
    write_summary(&summarize(&records, config.repeat), &summary_path)?;
    let heatmaps = if config.heatmaps {
        write_heatmaps(&records, &config.out_dir.join("heatmaps"))?
    } else {
        Vec::new()
    };

    let reused = reused.into_inner();
    let output = RunOutput {
        records: store.path().to_path_buf(),
        summary: summary_path,
        meta: config.out_dir.join("meta.json"),
        heatmaps,
        computed: records.len() - reused,
        reused,
        failed: warnings.len(),
        warnings,
    };
    let meta = serde_json::json!({
        "fingerprint": fingerprint,
        "config": config,
        "handshake": handshake,
        "dataset": dataset,
        "samples": samples.len(),
        "records": records.len(),
        "computed": output.computed,
        "reused": output.reused,
        "failed": output.failed,
        "warnings": output.warnings,
        "started_at_unix": started_at,
        "elapsed_seconds": started.elapsed().as_secs_f64(),
    });
    std::fs::write(&output.meta, serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(output)
}

/// Rebuilds `summary.csv` (and heatmaps, if asked) from a run's records.
pub fn report(out_dir: &Path, heatmaps: bool) -> Result<(PathBuf, Vec<PathBuf>)> {
    let records = load_records(out_dir)?;
    let summary = out_dir.join("summary.csv");
    write_summary(&summarize(&records, 1), &summary)?;
    let svgs = if heatmaps {
        write_heatmaps(&records, &out_dir.join("heatmaps"))?
    } else {
        Vec::new()
    };
    Ok((summary, svgs))
}

/// Reads the records of a finished run.
pub fn load_records(out_dir: &Path) -> Result<Vec<RunRecord>> {
    store::read_records(&out_dir.join(store::RECORDS_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::QaSample;

    fn qa(n: usize) -> Vec<ManifestSample> {
        (0..n)
            .map(|i| {
                ManifestSample::Qa(QaSample {
                    id: format!("{i}"),
                    image: "img".into(),
                    question: "Where?".into(),
                    answers: vec![],
                })
            })
            .collect()
    }

    #[test]
    fn measure_names() {
        for m in [RunMeasure::MmShap, RunMeasure::Metrics]
            .into_iter()
            .chain(RunMeasure::all_consistency())
        {
            assert_eq!(m.slug().parse::<RunMeasure>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.slug()));
        }
        assert!("bogus".parse::<RunMeasure>().is_err());
    }

    #[test]
    fn sample_selection_is_seeded_and_ordered() {
        let picked = select_samples(qa(300), 100, 5);
        assert_eq!(picked.len(), 100);
        let ids: Vec<usize> = picked.iter().map(|s| s.id().parse().unwrap()).collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(picked, select_samples(qa(300), 100, 5));
        assert_ne!(picked, select_samples(qa(300), 100, 6));
        assert_eq!(select_samples(qa(3), 100, 0).len(), 3);
    }

    #[test]
    fn config_validation() {
        let mut c = RunConfig::new(BackendSpec::MockLinear, "m.jsonl", "out");
        assert!(c.validate().is_ok());
        c.repeat = 0;
        assert!(c.validate().is_err());
        c.repeat = 1;
        c.limit = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn fingerprint_tracks_budget_not_workers() {
        let a = RunConfig::new(BackendSpec::MockLinear, "m.jsonl", "out");
        let mut b = a.clone();
        b.workers = Some(3);
        assert_eq!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
        b.budget = 512;
        assert_ne!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
    }
}
