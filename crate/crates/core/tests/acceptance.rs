//! End-to-end acceptance checks. Each check prints one PASS/FAIL line to the
//! real stdout (bypassing the test harness capture) and the test fails if any
//! check fails.

mod common;

use std::cell::Cell;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::{fixture, linear_values, max_abs_diff, permutation_shapley, subset_shapley, weights};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use shapcheck::ccshap::{cc_shap, ContributionVector, Similarity};
use shapcheck::consistency::replay;
use shapcheck::mmshap::{normalize_ratios, score_episode, AggregationMode};
use shapcheck::mock::{LinearLogitModel, TextOnlyModel};
use shapcheck::runner::{self, load_records, BackendSpec, RecordBody, RunConfig, RunMeasure};
use shapcheck::shapley::{attribute, Attribution, PlanMode, ShapleyConfig};
use shapcheck::tasks::{compute_metrics, Judgement, MetricRecord, Setting};
use shapcheck::{
    AttributionMatrix, Bridge, CoalitionMask, GenerationEpisode, MeasureKind, ModalityScore, MultimodalInput,
    Verdict,
};

const OUTPUTS: [&str; 3] = ["A", " B", " A"];

fn episode(n_text: usize, side: usize) -> GenerationEpisode {
    let tokens: Vec<String> = (0..n_text).map(|i| format!("w{i}")).collect();
    let input = MultimodalInput::build(tokens, side, "img").unwrap();
    GenerationEpisode::new(input, OUTPUTS.iter().map(|s| s.to_string()).collect()).unwrap()
}

fn is_b(token: &str) -> bool {
    token.trim() == "B"
}

/// Largest |Σ_j φ_j^t − (v_t(full) − v_t(∅))| over the output tokens, with
/// the two endpoint values scored afresh through the bridge.
fn efficiency_gap(attr: &Attribution, ep: &GenerationEpisode, bridge: &Bridge) -> f64 {
    let p = ep.input.len();
    let full = bridge.score_masked(&ep.input, &CoalitionMask::full(p), &ep.output_tokens).unwrap();
    let empty = bridge.score_masked(&ep.input, &CoalitionMask::empty(p), &ep.output_tokens).unwrap();
    attr.matrix
        .phi
        .iter()
        .enumerate()
        .map(|(t, row)| (row.iter().sum::<f64>() - (full[t] - empty[t])).abs())
        .fold(0.0, f64::max)
}

#[derive(Default)]
struct Efficiency {
    episodes: usize,
    worst: f64,
}

impl Efficiency {
    fn record(&mut self, gap: f64) {
        self.episodes += 1;
        self.worst = self.worst.max(gap);
    }
}

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn exact_mode_matches_permutation_oracle(eff: &mut Efficiency) -> Check {
    let shapes = [(2, 1), (3, 1), (4, 2), (5, 2), (6, 2), (7, 2), (3, 3), (8, 2)];
    let mut worst_err = 0.0f64;
    let mut slowest = Duration::ZERO;
    for (i, &(n_text, side)) in shapes.iter().enumerate() {
        let p = n_text + side * side;
        let w = weights(p, 100 + i as u64, 1.2);
        let bias = -0.3 + 0.1 * i as f64;
        let model = LinearLogitModel::new(w[..n_text].to_vec(), w[n_text..].to_vec(), bias);
        let bridge = Bridge::new(model);
        let ep = episode(n_text, side);
        let start = Instant::now();
        let attr = attribute(&ep, &bridge, &ShapleyConfig { budget: 4096, seed: i as u64 }).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        ensure(attr.provenance.mode == PlanMode::Exact, format!("p={p} was not exact"))?;
        eff.record(efficiency_gap(&attr, &ep, &bridge));

        let oracle_a = permutation_shapley(&linear_values(&w, bias, false), p);
        let oracle_b = permutation_shapley(&linear_values(&w, bias, true), p);
        for (t, token) in ep.output_tokens.iter().enumerate() {
            let oracle = if is_b(token) { &oracle_b } else { &oracle_a };
            worst_err = worst_err.max(max_abs_diff(&attr.matrix.phi[t], oracle));
        }
    }
    let detail = format!(
        "p in 3..=12, 3 output tokens: max |error| {worst_err:.1e}, slowest episode {:.2}s",
        slowest.as_secs_f64()
    );
    ensure(worst_err <= 1e-9, format!("{detail} exceeds 1e-9"))?;
    ensure(slowest < Duration::from_secs(10), format!("{detail} exceeds 10s"))?;
    Ok(detail)
}

fn sampled_mse_decreases_with_budget(eff: &mut Efficiency) -> Check {
    let start = Instant::now();
    let (n_text, side) = (4, 4);
    let p = n_text + side * side;
    let w = weights(p, 7, 0.6);
    let bias = 0.2;
    let bridge = Bridge::new(LinearLogitModel::new(w[..n_text].to_vec(), w[n_text..].to_vec(), bias));
    let ep = episode(n_text, side);
    let oracle_a = subset_shapley(&linear_values(&w, bias, false), p);
    let oracle_b = subset_shapley(&linear_values(&w, bias, true), p);

    let budgets = [512usize, 2048, 8192];
    let seeds = 20u64;
    let mut mse = Vec::new();
    for &budget in &budgets {
        let mut total = 0.0;
        for seed in 0..seeds {
            let attr = attribute(&ep, &bridge, &ShapleyConfig { budget, seed }).map_err(|e| e.to_string())?;
            ensure(attr.provenance.mode == PlanMode::Sampled, "p=20 was not sampled")?;
            eff.record(efficiency_gap(&attr, &ep, &bridge));
            for (t, token) in ep.output_tokens.iter().enumerate() {
                let oracle = if is_b(token) { &oracle_b } else { &oracle_a };
                total += attr.matrix.phi[t].iter().zip(oracle).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p as f64;
            }
        }
        mse.push(total / (seeds as usize * ep.output_tokens.len()) as f64);
    }
    let elapsed = start.elapsed();
    let detail = format!(
        "p=20, 20 seeds: MSE {:.2e} -> {:.2e} -> {:.2e} at budgets 512/2048/8192 in {:.1}s",
        mse[0],
        mse[1],
        mse[2],
        elapsed.as_secs_f64()
    );
    ensure(mse[0] >= mse[1] && mse[1] >= mse[2], format!("{detail}: not non-increasing"))?;
    ensure(elapsed < Duration::from_secs(120), format!("{detail}: over 2 minutes"))?;
    Ok(detail)
}

fn text_only_has_no_visual_share(eff: &mut Efficiency) -> Check {
    let linear = LinearLogitModel::from_json_file(&fixture("linear.json")).map_err(|e| e.to_string())?;
    let models = [
        ("fixture", Bridge::new(TextOnlyModel::from_linear(linear))),
        ("random", Bridge::new(TextOnlyModel::new(weights(40, 3, 1.0), -0.4))),
    ];
    // Grid sides follow the tiling rule: 10 words get 16 patches, 30 words get 36.
    let mut report = Vec::new();
    let mut ok = true;
    for (n_text, side, budget) in [(4, 2, 8192), (3, 3, 8192), (10, 4, 8192), (30, 6, 8192)] {
        let p = n_text + side * side;
        let exact = (1usize << p.min(63)) <= budget;
        let ep = episode(n_text, side);
        let mut worst = 0.0f64;
        for (_, bridge) in &models {
            for seed in 0..5 {
                let attr = attribute(&ep, bridge, &ShapleyConfig { budget, seed }).map_err(|e| e.to_string())?;
                ensure((attr.provenance.mode == PlanMode::Exact) == exact, format!("p={p} in the wrong mode"))?;
                eff.record(efficiency_gap(&attr, &ep, bridge));
                for mode in [AggregationMode::Ratio, AggregationMode::Raw] {
                    match score_episode(&attr.matrix, &ep.input, mode).map_err(|e| e.to_string())?.1 {
                        ModalityScore::Defined { v_shap, .. } => worst = worst.max(v_shap.abs()),
                        ModalityScore::Degenerate => return Err(format!("p={p} is degenerate")),
                    }
                }
            }
        }
        let limit = if exact { 1e-9 } else { 0.02 };
        ok &= worst <= limit;
        report.push(if exact {
            format!("p={p} exact {worst:.1e}")
        } else {
            format!("p={p} {:.2}%", 100.0 * worst)
        });
    }
    let detail = format!("max V-SHAP over 2 models x 5 seeds: {}", report.join(", "));
    ensure(ok, format!("{detail} (limit 2% sampled at budget 8192, 1e-9 exact)"))?;
    Ok(detail)
}

fn runner_episodes_are_efficient(eff: &mut Efficiency, dir: &Path) -> Check {
    let mut runs = 0;
    for (backend, budget) in [
        (BackendSpec::MockLinear, 128),
        (BackendSpec::MockLinear, 4096),
        (BackendSpec::MockTextOnly, 512),
    ] {
        let out = dir.join(format!("eff-{runs}"));
        let mut config = RunConfig::new(backend.clone(), fixture("foil.jsonl"), &out);
        config.fixture = Some(fixture("linear.json"));
        config.budget = budget;
        config.limit = 4;
        runner::run(&config).map_err(|e| e.to_string())?;
        let bridge = Bridge::new(runner::open_backend(&backend, Some(&fixture("linear.json"))).map_err(|e| e.to_string())?);
        for record in load_records(&out).map_err(|e| e.to_string())? {
            let RecordBody::MmShap(m) = &record.result else {
                return Err(format!("{} did not produce an attribution", record.sample_id));
            };
            let input = MultimodalInput::build(m.text_tokens.clone(), m.grid_side, "img").map_err(|e| e.to_string())?;
            let ep = GenerationEpisode::new(input, m.output_tokens.clone()).map_err(|e| e.to_string())?;
            let attr = Attribution {
                matrix: m.attribution.clone(),
                provenance: m.provenance.clone(),
            };
            eff.record(m.attribution.max_efficiency_gap());
            eff.record(efficiency_gap(&attr, &ep, &bridge));
        }
        runs += 1;
    }
    Ok(format!("{runs} runs"))
}

fn efficiency_axiom(eff: &Efficiency) -> Check {
    let detail = format!(
        "{} mock episodes (exact, sampled, runner records): max gap {:.1e}",
        eff.episodes, eff.worst
    );
    ensure(eff.episodes > 0 && eff.worst <= 1e-9, detail.clone())?;
    Ok(detail)
}

fn ratio_and_share_identities() -> Check {
    let mut runner = TestRunner::new(Config::with_cases(1000));
    let strategy = (1usize..6, 1usize..4, 1usize..5).prop_flat_map(|(n_text, side, rows)| {
        (
            Just(n_text),
            Just(side),
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, n_text + side * side), rows),
            prop::sample::select(vec![-1.0, 1.0]),
            0.001f64..1000.0,
        )
    });
    let cases = Cell::new(0usize);
    let worst = Cell::new(0.0f64);
    let note = |d: f64| worst.set(worst.get().max(d));
    let result = runner.run(&strategy, |(n_text, side, rows, sign, c)| {
        cases.set(cases.get() + 1);
        let n = rows.len();
        let phi = AttributionMatrix {
            phi: rows.clone(),
            base_values: vec![0.0; n],
            full_values: vec![0.0; n],
        };
        for (row, orig) in normalize_ratios(&phi).r.iter().zip(&rows) {
            if orig.iter().any(|v| *v != 0.0) {
                let l1: f64 = row.iter().map(|v| v.abs()).sum();
                note((l1 - 1.0).abs());
                prop_assert!((l1 - 1.0).abs() <= 1e-12);
            }
        }
        let tokens: Vec<String> = (0..n_text).map(|i| format!("w{i}")).collect();
        let input = MultimodalInput::build(tokens, side, "img").unwrap();
        for mode in [AggregationMode::Ratio, AggregationMode::Raw] {
            let (_, s) = score_episode(&phi, &input, mode).unwrap();
            let (_, scaled) = score_episode(&phi.scaled(sign * c), &input, mode).unwrap();
            match s {
                ModalityScore::Defined { t_shap, v_shap, .. } => {
                    note((t_shap + v_shap - 1.0).abs());
                    prop_assert!((t_shap + v_shap - 1.0).abs() <= 1e-12);
                    let t2 = scaled.t_shap().unwrap();
                    note((t2 - t_shap).abs());
                    prop_assert!((t2 - t_shap).abs() <= 1e-12);
                }
                ModalityScore::Degenerate => prop_assert_eq!(scaled, ModalityScore::Degenerate),
            }
        }
        Ok(())
    });
    let (cases, worst) = (cases.get(), worst.get());
    let detail = format!("{cases} random matrices, both aggregation modes: max deviation {worst:.1e}");
    result.map_err(|e| format!("{detail}: {e}"))?;
    ensure(cases >= 1000, format!("{detail}: too few cases"))?;
    Ok(detail)
}

fn cc_shap_boundaries() -> Check {
    let mut vectors: Vec<Vec<f64>> = vec![vec![1.0, 2.0, 3.0], vec![1e-9, -4e3, 0.5, 7.0], vec![0.3; 6]];
    vectors.extend((0..200).map(|s| weights(2 + (s as usize % 30), s, 10f64.powi(s as i32 % 7 - 3))));
    let mut checked = 0;
    for v in &vectors {
        let pos: Vec<usize> = (0..v.len()).collect();
        let a = ContributionVector::new(v.clone(), pos.clone()).unwrap();
        let neg = ContributionVector::new(v.iter().map(|x| -x).collect(), pos.clone()).unwrap();
        let mut orth = v.clone();
        orth[0] = -v[1];
        orth[1] = v[0];
        let a2 = ContributionVector::new([&[v[0], v[1]], &vec![0.0; v.len() - 2][..]].concat(), pos.clone()).unwrap();
        let b2 = ContributionVector::new([&[-v[1], v[0]], &vec![0.0; v.len() - 2][..]].concat(), pos.clone()).unwrap();
        let constant = v.iter().all(|x| *x == v[0]);
        for sim in [Similarity::Cosine, Similarity::Pearson] {
            if sim == Similarity::Pearson && constant {
                continue;
            }
            let same = cc_shap(&a, &a, sim).unwrap().value;
            let opposite = cc_shap(&a, &neg, sim).unwrap().value;
            ensure(same == 1.0, format!("identical gave {same} for {v:?} ({sim:?})"))?;
            ensure(opposite == -1.0, format!("negated gave {opposite} for {v:?} ({sim:?})"))?;
        }
        let orthogonal = cc_shap(&a2, &b2, Similarity::Cosine).unwrap().value;
        ensure(orthogonal == 0.0, format!("orthogonal gave {orthogonal} for {v:?}"))?;
        checked += 1;
    }
    Ok(format!("{checked} vectors: identical 1.0, negated -1.0, orthogonal 0.0 exactly"))
}

fn edit_test_replay(dir: &Path) -> Check {
    let out = dir.join("tests");
    let mut config = RunConfig::new(BackendSpec::MockScripted, fixture("consistency.jsonl"), &out);
    config.fixture = Some(fixture("consistency.json"));
    config.words_dir = Some(fixture("words"));
    config.measures = RunMeasure::edit_tests();
    runner::run(&config).map_err(|e| e.to_string())?;

    use Verdict::{Faithful as F, Unfaithful as U};
    // Rows in manifest order: cf-unmentioned, cf-mentioned, bias-flip, early-change, steady.
    let expected: BTreeMap<MeasureKind, [Verdict; 5]> = [
        (MeasureKind::CounterfactualEdits, [U, F, F, F, F]),
        (MeasureKind::BiasingFeatures, [F, F, U, F, F]),
        (MeasureKind::EarlyAnswering, [U, U, U, F, U]),
        (MeasureKind::AddingMistakes, [U, U, U, U, U]),
        (MeasureKind::FillerTokens, [U, U, U, F, U]),
        (MeasureKind::Paraphrasing, [F, F, F, F, F]),
    ]
    .into_iter()
    .collect();
    let ids = ["cf-unmentioned", "cf-mentioned", "bias-flip", "early-change", "steady"];

    let records = load_records(&out).map_err(|e| e.to_string())?;
    ensure(records.len() == ids.len() * expected.len(), format!("{} records", records.len()))?;
    for record in &records {
        let RecordBody::Consistency(c) = &record.result else {
            return Err(format!("{} {} failed", record.sample_id, record.measure));
        };
        let row = ids.iter().position(|i| *i == record.sample_id).ok_or("unknown sample")?;
        let want = expected[&c.measure][row];
        let got = c.verdict_value().ok_or("no verdict")?;
        ensure(
            got == want,
            format!("{} on {}: {got:?}, expected {want:?}", c.measure.slug(), record.sample_id),
        )?;
        let replayed = replay(c).map_err(|e| e.to_string())?;
        ensure(replayed == got, format!("{} on {} replays as {replayed:?}", c.measure.slug(), record.sample_id))?;
    }
    Ok(format!(
        "{} records: unmentioned change U, mentioned F, no change F, sycophancy flip U, truncation change F, no change U; all replay",
        records.len()
    ))
}

fn metric_identity() -> Check {
    let mut sets = 0;
    for n in 1..=60usize {
        for c in 0..=n {
            for f in (0..=n).step_by(7) {
                let cell = |setting, correct| {
                    (0..n).map(move |i| MetricRecord {
                        sample_id: i.to_string(),
                        setting,
                        judgement: if i < correct { Judgement::Correct } else { Judgement::Incorrect },
                    })
                };
                let records: Vec<MetricRecord> =
                    cell(Setting::AlignmentCaption, c).chain(cell(Setting::AlignmentFoil, f)).collect();
                let s = compute_metrics(&records);
                let (pc, pf, acc) = (s.p_c.unwrap(), s.p_f.unwrap(), s.acc.unwrap());
                ensure(acc == (pc + pf) / 2.0, format!("n={n} c={c} f={f}: acc {acc} vs {pc}/{pf}"))?;
                sets += 1;
            }
        }
    }
    let text = std::fs::read_to_string(fixture("alignment_outcomes.jsonl")).map_err(|e| e.to_string())?;
    let stored: Vec<MetricRecord> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let s = compute_metrics(&stored);
    let row = (s.p_c, s.p_f, s.acc);
    ensure(
        row == (Some(71.0), Some(47.0), Some(59.0)),
        format!("stored outcomes gave {row:?}"),
    )?;
    Ok(format!("{sets} balanced sets exact; stored outcomes give p_c 71, p_f 47, acc 59"))
}

fn cli_runs_are_deterministic(dir: &Path) -> Check {
    let runs: [(&str, Vec<&str>); 3] = [
        ("mmshap", vec!["--backend", "mock:linear", "--budget", "200", "--repeat", "2"]),
        ("ccshap", vec!["--backend", "mock:linear", "--budget", "96", "--limit", "3"]),
        ("bench", vec!["--backend", "mock:scripted"]),
    ];
    let mut compared = 0;
    for (sub, extra) in &runs {
        let fixture_file = if *sub == "bench" { "bench.json" } else { "linear.json" };
        let mut outputs = Vec::new();
        for workers in ["1", "3"] {
            let out = dir.join(format!("det-{sub}-{workers}"));
            let status = Command::new(env!("CARGO_BIN_EXE_shapcheck"))
                .arg(sub)
                .args(extra)
                .args(["--fixture", fixture(fixture_file).to_str().unwrap()])
                .args(["--manifest", fixture("foil.jsonl").to_str().unwrap()])
                .args(["--workers", workers, "--out", out.to_str().unwrap()])
                .output()
                .map_err(|e| e.to_string())?;
            ensure(status.status.success(), format!("{sub}: {}", String::from_utf8_lossy(&status.stderr)))?;
            outputs.push(std::fs::read(out.join("records.jsonl")).map_err(|e| e.to_string())?);
        }
        ensure(!outputs[0].is_empty() && outputs[0] == outputs[1], format!("{sub} records differ"))?;
        compared += 1;
    }
    Ok(format!("{compared} subcommands run twice with 1 and 3 workers: records.jsonl byte-identical"))
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let mut eff = Efficiency::default();
    let mut results: Vec<(&str, Check)> = vec![
        ("exact Shapley vs permutation oracle", exact_mode_matches_permutation_oracle(&mut eff)),
        ("sampled estimator convergence", sampled_mse_decreases_with_budget(&mut eff)),
    ];
    let text_only = text_only_has_no_visual_share(&mut eff);
    let runner_eff = runner_episodes_are_efficient(&mut eff, dir.path());
    results.push((
        "efficiency axiom",
        runner_eff.and_then(|_| efficiency_axiom(&eff)),
    ));
    results.push(("ratio and modality share identities", ratio_and_share_identities()));
    results.push(("text-only modality sanity", text_only));
    results.push(("CC-SHAP boundary cases", cc_shap_boundaries()));
    results.push(("edit-test verdict replay", edit_test_replay(dir.path())));
    results.push(("benchmark metric identity", metric_identity()));
    results.push(("CLI determinism", cli_runs_are_deterministic(dir.path())));

    let mut stdout = std::io::stdout().lock();
    let mut failed = Vec::new();
    for (name, result) in &results {
        let line = match result {
            Ok(detail) => format!("PASS  {name}: {detail}\n"),
            Err(why) => {
                failed.push(*name);
                format!("FAIL  {name}: {why}\n")
            }
        };
        stdout.write_all(line.as_bytes()).unwrap();
    }
    stdout.flush().unwrap();
    assert!(failed.is_empty(), "failed: {failed:?}");
}
