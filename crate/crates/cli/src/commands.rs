use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;

use imis_core::fixtures;
use imis_core::granularity::{
    apply_quality_policy, correct_with_gt, CorrectionParams, QualityPolicy, SubsetMasks,
};
use imis_core::ingest::{ingest_dataset, IngestConfig, SynonymTable};
use imis_core::interact::{robustness_sweep, run_session, Strategy, SweepConfig, SweepImage};
use imis_core::maskcore::{LabeledMask, Source, UNCATEGORIZED};
use imis_core::metrics::{aggregate, dataset_stats, EvalRecord};
use imis_core::proposer::{
    generate_interactive_masks, serve_stdio, CandidateMask, GenerationParams, ReferenceSegmenter,
    StageCounts, DEFAULT_TOLERANCE,
};
use imis_core::seed::{derive, hash_str};
use imis_core::storage::{discover, ContainerEntry, Dataset, ImageRecord, MaskContainer, Split};
use imis_core::taxonomy::anatomy_group;

use crate::args::*;
use crate::segmenters::{Engine, OracleBank};
use crate::Failure;

pub const REPORT_FILE: &str = "ingest_report.json";
pub const SIMULATION_DIR: &str = "simulations";

pub fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Data(e.to_string()))?;
    }
    let data = cli.data.as_deref();
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::GenMasks(a) => gen_masks(&resolve(a.dataset.as_deref(), data)?, &a),
        Command::Qc(a) => qc(&resolve(a.dataset.as_deref(), data)?, &a),
        Command::Stats(a) => stats(&resolve(a.dataset.as_deref(), data)?, &a),
        Command::Simulate(a) => simulate(&resolve(a.dataset.as_deref(), data)?, &a),
        Command::Sweep(a) => sweep(&resolve(a.dataset.as_deref(), data)?, &a),
        Command::Eval(a) => eval(a, data),
        Command::Serve(a) => serve(a, data),
        Command::Worker(a) => worker(a),
        Command::MakeFixture(a) => make_fixture(a),
    }
}

/// An explicit path wins; a bare name is looked up under the data root.
fn resolve(arg: Option<&Path>, data: Option<&Path>) -> Result<PathBuf, Failure> {
    match (arg, data) {
        (Some(p), _) if p.exists() => Ok(p.to_owned()),
        (Some(p), Some(root)) if root.join(p).exists() => Ok(root.join(p)),
        (Some(p), _) => Err(Failure::Data(format!("{}: no such dataset", p.display()))),
        (None, Some(root)) => Ok(root.to_owned()),
        (None, None) => Err(Failure::Usage(
            "no dataset given and IMIS_DATA is not set".into(),
        )),
    }
}

fn open_all(root: &Path) -> Result<Vec<Dataset>, Failure> {
    let datasets = discover(root)?;
    if datasets.is_empty() {
        return Err(Failure::Data(format!(
            "{}: no datasets found",
            root.display()
        )));
    }
    Ok(datasets)
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Data(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn check_fraction(name: &str, v: f64) -> Result<(), Failure> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "{name} must lie in [0, 1], got {v}"
        )))
    }
}

fn ingest(a: IngestArgs) -> Result<(), Failure> {
    let mut table = if a.no_builtin_synonyms {
        SynonymTable::empty()
    } else {
        SynonymTable::builtin()
    };
    if let Some(path) = &a.synonyms {
        table.extend(SynonymTable::read(path)?);
    }
    let cfg = IngestConfig {
        max_aspect_ratio: a.max_aspect,
        min_foreground_fraction: a.min_fg,
        train_fraction: a.train_fraction,
        test_cap: a.test_cap,
        seed: a.seed,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let report = ingest_dataset(&a.src, &a.dst, &cfg, &table)?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Data(e.to_string()))?;
    let path = a.dst.join(REPORT_FILE);
    fs::write(&path, format!("{text}\n"))
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    if a.json {
        println!("{text}");
    } else {
        println!(
            "images: {} seen, {} kept; masks: {} seen, {} kept",
            report.images_seen, report.images_kept, report.masks_seen, report.masks_kept
        );
        for (reason, n) in report.image_drops.iter().chain(&report.mask_drops) {
            println!(
                "dropped {n}: {}",
                serde_json::to_string(reason).unwrap_or_default()
            );
        }
        if !report.unresolved.is_empty() {
            let names: Vec<_> = report.unresolved.iter().cloned().collect();
            println!("unresolved categories: {}", names.join(", "));
        }
        if let Some(s) = report.splits {
            println!(
                "split: {} train, {} test ({} overflow)",
                s.train, s.test, s.overflow
            );
        }
    }
    Ok(())
}

fn ground_truth_of(container: &MaskContainer) -> Result<Vec<LabeledMask>, Failure> {
    Ok(container
        .labeled_masks()?
        .into_iter()
        .filter(LabeledMask::is_ground_truth)
        .collect())
}

#[derive(Debug, Default, Serialize)]
struct GenReport {
    dataset: String,
    images: usize,
    ground_truth: usize,
    interactive: usize,
    failed_points: usize,
    stages: StageCounts,
}

fn gen_masks(root: &Path, a: &GenArgs) -> Result<(), Failure> {
    if a.grid == 0 {
        return Err(Failure::Usage("--grid must be at least 1".into()));
    }
    for (name, v) in [
        ("--conf", a.conf),
        ("--nms", a.nms),
        ("--maxcover", a.maxcover),
    ] {
        check_fraction(name, v)?;
    }
    let datasets = open_all(root)?;
    let engine = Engine::build(&a.segmenter)?;
    let mut reports = Vec::new();
    for ds in &datasets {
        let mut rep = GenReport {
            dataset: ds.name().to_owned(),
            ..Default::default()
        };
        for rec in &ds.manifest.images {
            let image = ds.load_image(rec)?;
            let stored = ds.load_masks(rec)?;
            let gt = ground_truth_of(&stored)?;
            let segmenter = engine.for_image(&gt);
            let params = GenerationParams {
                grid: a.grid,
                min_confidence: a.conf,
                nms_iou: a.nms,
                max_cover: a.maxcover,
                seed: derive(a.seed, &[hash_str(ds.name()), hash_str(&rec.id)]),
            };
            let generation = generate_interactive_masks(&image, segmenter.as_ref(), &params);
            if generation.counts.pooled == 0 && !generation.failures.is_empty() {
                tracing::warn!(image = %rec.id, "every grid point failed");
            }
            let mut out = MaskContainer::new(stored.height, stored.width);
            out.entries = stored
                .entries
                .iter()
                .filter(|e| e.source == Source::GroundTruth)
                .cloned()
                .collect();
            for c in &generation.masks {
                out.entries.push(ContainerEntry::from_mask(
                    &c.mask,
                    UNCATEGORIZED,
                    Source::Interactive,
                ));
            }
            ds.save_masks(rec, &out)?;
            let s = generation.counts;
            rep.images += 1;
            rep.ground_truth += gt.len();
            rep.interactive += generation.masks.len();
            rep.failed_points += generation.failures.len();
            rep.stages.pooled += s.pooled;
            rep.stages.after_confidence += s.after_confidence;
            rep.stages.after_nms += s.after_nms;
            rep.stages.after_background += s.after_background;
        }
        reports.push(rep);
    }
    if a.json {
        return print_json(&reports);
    }
    for r in &reports {
        println!(
            "{}: {} images, {} interactive masks ({} pooled, {} confident, {} after nms); {} failed points",
            r.dataset, r.images, r.interactive, r.stages.pooled, r.stages.after_confidence, r.stages.after_nms, r.failed_points
        );
    }
    Ok(())
}

fn read_flagged(path: &Path) -> Result<Vec<String>, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect())
}

#[derive(Debug, Serialize)]
struct QcReport {
    dataset: String,
    flagged: bool,
    images: usize,
    ground_truth: usize,
    interactive_in: usize,
    /// Generated regions that matched a ground-truth box and took its category.
    matched: usize,
    /// Ground-truth masks that had to stand in for a missing match.
    substituted: usize,
    interactive_out: usize,
    policy_dropped: usize,
}

fn qc(root: &Path, a: &QcArgs) -> Result<(), Failure> {
    check_fraction("--fg-rate", a.fg_rate)?;
    check_fraction("--overlap", a.overlap)?;
    let datasets = open_all(root)?;
    let flagged = match &a.flagged {
        Some(p) => read_flagged(p)?,
        None => Vec::new(),
    };
    let known: BTreeSet<&str> = datasets.iter().map(Dataset::name).collect();
    if let Some(bad) = flagged.iter().find(|f| !known.contains(f.as_str())) {
        return Err(imis_core::Error::UnknownSubset(bad.clone()).into());
    }
    let params = CorrectionParams {
        threshold: a.overlap,
        measure: a.measure.into(),
        clean_radius: a.clean_radius,
    };
    let policy = QualityPolicy {
        min_fg_rate: a.fg_rate,
        mode: a.mode.into(),
    };
    let mut reports = Vec::new();
    for ds in &datasets {
        let corrected: Vec<(Vec<LabeledMask>, usize, usize, usize)> = ds
            .manifest
            .images
            .par_iter()
            .map(|rec| correct_image(ds, rec, &params))
            .collect::<Result<_, Failure>>()?;
        let mut subset = SubsetMasks {
            name: ds.name().to_owned(),
            images: Vec::with_capacity(corrected.len()),
        };
        let (mut interactive_in, mut matched, mut substituted) = (0, 0, 0);
        for (masks, n_in, n_match, n_sub) in corrected {
            subset.images.push(masks);
            interactive_in += n_in;
            matched += n_match;
            substituted += n_sub;
        }
        let mine: Vec<String> = flagged
            .iter()
            .filter(|f| f.as_str() == ds.name())
            .cloned()
            .collect();
        let mut subsets = [subset];
        let outcome = apply_quality_policy(&mut subsets, &mine, &policy)?;
        let [subset] = subsets;
        let mut ground_truth = 0;
        let mut interactive_out = 0;
        for (rec, masks) in ds.manifest.images.iter().zip(&subset.images) {
            let stored = ds.load_masks(rec)?;
            let out = MaskContainer::from_labeled(stored.height, stored.width, masks)?;
            ground_truth += masks.iter().filter(|m| m.is_ground_truth()).count();
            interactive_out += masks.iter().filter(|m| !m.is_ground_truth()).count();
            ds.save_masks(rec, &out)?;
        }
        reports.push(QcReport {
            dataset: ds.name().to_owned(),
            flagged: !mine.is_empty(),
            images: ds.manifest.images.len(),
            ground_truth,
            interactive_in,
            matched,
            substituted,
            interactive_out,
            policy_dropped: outcome.total_dropped(),
        });
    }
    if a.json {
        return print_json(&reports);
    }
    for r in &reports {
        println!(
            "{}{}: {} ground truth, {} interactive in, {} matched, {} substituted, {} dropped, {} interactive out",
            r.dataset,
            if r.flagged { " (flagged)" } else { "" },
            r.ground_truth,
            r.interactive_in,
            r.matched,
            r.substituted,
            r.policy_dropped,
            r.interactive_out
        );
    }
    Ok(())
}

/// Ground truth followed by the corrected interactive masks of one image.
/// Ground truth that the correction emits as a stand-in is already stored
/// as ground truth, so only interactive output is kept beside it.
fn correct_image(
    ds: &Dataset,
    rec: &ImageRecord,
    params: &CorrectionParams,
) -> Result<(Vec<LabeledMask>, usize, usize, usize), Failure> {
    let all = ds.load_masks(rec)?.labeled_masks()?;
    let (gt, generated): (Vec<_>, Vec<_>) = all.into_iter().partition(LabeledMask::is_ground_truth);
    let n_in = generated.len();
    let candidates: Vec<CandidateMask> = generated
        .into_iter()
        .map(|m| CandidateMask::new(m.mask, 1.0))
        .collect::<imis_core::Result<_>>()?;
    let corrected = correct_with_gt(&candidates, &gt, params)?;
    let substituted = corrected.iter().filter(|m| m.is_ground_truth()).count();
    let interactive: Vec<LabeledMask> = corrected
        .into_iter()
        .filter(|m| !m.is_ground_truth())
        .collect();
    let matched = interactive
        .iter()
        .filter(|m| m.category_id != UNCATEGORIZED)
        .count();
    let mut out = gt;
    out.extend(interactive);
    Ok((out, n_in, matched, substituted))
}

fn stats(root: &Path, a: &StatsArgs) -> Result<(), Failure> {
    let report = dataset_stats(&open_all(root)?)?;
    if a.json {
        print_json(&report)
    } else if a.csv {
        print!("{}", report.to_csv());
        Ok(())
    } else {
        print!("{}", report.to_text());
        Ok(())
    }
}

fn strategy_of(s: &SessionArgs) -> Result<Strategy, Failure> {
    if s.rounds == 0 {
        return Err(Failure::Usage("--rounds must be at least 1".into()));
    }
    Ok(Strategy {
        initial: s.strategy,
        rounds: s.rounds,
        jitter: s.jitter,
        placement: s.placement.into(),
    })
}

fn selected<'a>(ds: &'a Dataset, split: SplitArg) -> impl Iterator<Item = &'a ImageRecord> + 'a {
    ds.manifest.images.iter().filter(move |r| match split {
        SplitArg::All => true,
        SplitArg::Train => r.split == Split::Train,
        SplitArg::Test => r.split == Split::Test,
    })
}

fn category_name(ds: &Dataset, id: u32) -> String {
    ds.manifest
        .category_name(id)
        .map(str::to_owned)
        .unwrap_or_else(|| format!("category {id}"))
}

fn simulate_dataset(
    ds: &Dataset,
    engine: &Engine,
    s: &SessionArgs,
    strategy: &Strategy,
) -> Result<Vec<EvalRecord>, Failure> {
    let recs: Vec<&ImageRecord> = selected(ds, s.split).collect();
    let per_image: Vec<Vec<EvalRecord>> = recs
        .par_iter()
        .map(|rec| {
            let image = ds.load_image(rec)?;
            let gt = ground_truth_of(&ds.load_masks(rec)?)?;
            let segmenter = engine.for_image(&gt);
            let mut out = Vec::with_capacity(gt.len());
            for (t, target) in gt.iter().enumerate() {
                let seed = derive(s.seed, &[hash_str(ds.name()), hash_str(&rec.id), t as u64]);
                let session = run_session(&image, target, segmenter.as_ref(), strategy, seed)
                    .map_err(|e| {
                        Failure::Data(format!("{}/{} target {t}: {e}", ds.name(), rec.id))
                    })?;
                let category = category_name(ds, target.category_id);
                out.push(EvalRecord {
                    dataset: ds.name().to_owned(),
                    image_id: rec.id.clone(),
                    anatomy: anatomy_group(&category),
                    category,
                    modality: ds.manifest.modality.clone(),
                    strategy: strategy.initial.as_str().to_owned(),
                    dice: *session.dice_trace.last().expect("at least one round"),
                });
            }
            Ok(out)
        })
        .collect::<Result<_, Failure>>()?;
    Ok(per_image.into_iter().flatten().collect())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Failure> {
    let err = |e: std::io::Error| Failure::Data(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(err)?;
    }
    let mut buf = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut buf, row).map_err(|e| Failure::Data(e.to_string()))?;
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(err)
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    file: PathBuf,
    targets: usize,
    mean_dice: f64,
}

fn simulate(root: &Path, a: &SimulateArgs) -> Result<(), Failure> {
    let strategy = strategy_of(&a.session)?;
    let datasets = open_all(root)?;
    let engine = Engine::build(&a.session.segmenter)?;
    let mut outputs: Vec<(PathBuf, Vec<EvalRecord>)> = Vec::new();
    for ds in &datasets {
        let records = simulate_dataset(ds, &engine, &a.session, &strategy)?;
        match (&a.out, outputs.last_mut()) {
            (Some(_), Some((_, all))) => all.extend(records),
            (Some(out), None) => outputs.push((out.clone(), records)),
            (None, _) => {
                let file = ds
                    .root()
                    .join(SIMULATION_DIR)
                    .join(format!("{}.jsonl", strategy.initial.as_str()));
                outputs.push((file, records));
            }
        }
    }
    let mut reports = Vec::new();
    for (file, records) in &outputs {
        write_jsonl(file, records)?;
        let mean = if records.is_empty() {
            0.0
        } else {
            records.iter().map(|r| r.dice).sum::<f64>() / records.len() as f64
        };
        reports.push(SimulateReport {
            file: file.clone(),
            targets: records.len(),
            mean_dice: mean,
        });
    }
    if a.json {
        return print_json(&reports);
    }
    for r in &reports {
        println!(
            "{}: {} targets, mean dice {:.4}",
            r.file.display(),
            r.targets,
            r.mean_dice
        );
    }
    Ok(())
}

fn sweep(root: &Path, a: &SweepArgs) -> Result<(), Failure> {
    let base = strategy_of(&a.session)?;
    if a.max_interactions == 0 {
        return Err(Failure::Usage(
            "--max-interactions must be at least 1".into(),
        ));
    }
    let datasets = open_all(root)?;
    let engine = Engine::build(&a.session.segmenter)?;
    let mut images = Vec::new();
    let mut bank = OracleBank::default();
    for ds in &datasets {
        for rec in selected(ds, a.session.split) {
            let image = ds.load_image(rec)?;
            let targets = ground_truth_of(&ds.load_masks(rec)?)?;
            if matches!(engine, Engine::Oracle) {
                bank.insert(&image, &targets);
            }
            images.push(SweepImage {
                id: format!("{}/{}", ds.name(), rec.id),
                image,
                targets,
            });
        }
    }
    let cfg = SweepConfig {
        base,
        max_interactions: a.max_interactions,
        jitters: a.jitters.clone(),
        seed: a.session.seed,
    };
    let report = match engine.shared() {
        Some(s) => robustness_sweep(&images, s.as_ref(), a.protocol, &cfg)?,
        None => robustness_sweep(&images, &bank, a.protocol, &cfg)?,
    };
    if let Some(path) = &a.records {
        write_jsonl(path, &report.records)?;
    }
    if a.json {
        return print_json(&report);
    }
    println!("protocol {}", report.protocol);
    for arm in &report.arms {
        println!(
            "{:<12} image-level {:.4}  mask-level {:.4}  n={}",
            arm.name, arm.mean_dice_image_level, arm.mean_dice_mask_level, arm.n
        );
    }
    Ok(())
}

fn record_files(input: &Path) -> Result<Vec<PathBuf>, Failure> {
    if input.is_file() {
        return Ok(vec![input.to_owned()]);
    }
    let mut files = Vec::new();
    for ds in open_all(input)? {
        let dir = ds.root().join(SIMULATION_DIR);
        let Ok(entries) = fs::read_dir(&dir) else {
            continue;
        };
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        found.sort();
        files.extend(found);
    }
    Ok(files)
}

fn read_records(path: &Path) -> Result<Vec<EvalRecord>, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Failure::Data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn eval(a: EvalArgs, data: Option<&Path>) -> Result<(), Failure> {
    let inputs = if a.inputs.is_empty() {
        vec![resolve(None, data)?]
    } else {
        a.inputs
            .iter()
            .map(|p| resolve(Some(p), data))
            .collect::<Result<_, _>>()?
    };
    let mut records = Vec::new();
    for input in &inputs {
        for file in record_files(input)? {
            records.extend(read_records(&file)?);
        }
    }
    if records.is_empty() {
        return Err(Failure::Data("no evaluation records found".into()));
    }
    let report = aggregate(&records, a.group_by);
    if a.json {
        print_json(&report)
    } else {
        print!("{}", report.to_text());
        Ok(())
    }
}

fn serve(a: ServeArgs, data: Option<&Path>) -> Result<(), Failure> {
    let segmenter = match Engine::build(&a.segmenter)? {
        Engine::Shared(s) => s,
        Engine::Oracle => {
            return Err(Failure::Usage(
                "the service needs ref or proc:COMMAND".into(),
            ));
        }
    };
    let config = imis_service::ServiceConfig {
        max_upload_bytes: a.max_upload_mb << 20,
        idle_timeout: Duration::from_secs(a.idle_minutes.max(1) * 60),
        data_dir: data.map(Path::to_owned),
        static_dir: a.static_dir,
        snapshot_dir: a.snapshots,
        cors_origin: a.cors_origin,
        ..Default::default()
    };
    let state = imis_service::AppState::new(config, segmenter)?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    let addr = std::net::SocketAddr::new(a.host, a.port);
    eprintln!("listening on http://{addr}");
    rt.block_on(imis_service::serve(addr, state))?;
    Ok(())
}

fn worker(a: WorkerArgs) -> Result<(), Failure> {
    let segmenter = ReferenceSegmenter::new(a.tolerance.unwrap_or(DEFAULT_TOLERANCE));
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout().lock();
    serve_stdio(&segmenter, stdin.lock(), &mut stdout)?;
    stdout.flush()?;
    Ok(())
}

fn make_fixture(a: FixtureArgs) -> Result<(), Failure> {
    match a.kind {
        FixtureKind::DemoSource => fixtures::write_demo_source(&a.dir)?,
        FixtureKind::Stats => {
            fixtures::write_stats_fixture(&a.dir)?;
        }
        FixtureKind::Disk => {
            fixtures::write_disk_dataset(&a.dir)?;
        }
    }
    Ok(())
}
