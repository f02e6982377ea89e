//! Subcommand implementations.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use ceb_core::classifier::{
    load_model, read_external_scores, save_model, train, Scorer, ScorerConfig,
};
use ceb_core::matching::lp_listing;
use ceb_core::metrics::{evaluate_with, format_table, write_csv};
use ceb_core::pipeline::{
    analyze_frame, gi_problem, label_analysis, segment_frame_at, Mode, PipelineConfig,
};
use ceb_core::raster::{
    read_labelmap, read_probmap, write_labelmap, write_probmap, write_probmap_pgm,
};
use ceb_core::seeds::{generate_seeds, FOREGROUND_FLOOR};
use ceb_core::signature::{export_signatures, read_manifest};
use ceb_core::synth::synth_video;
use ceb_core::temporal::segment_video;
use ceb_core::watershed::{flood, Flood};

use crate::{
    Cmd, DumpArgs, EvaluateArgs, ExtractArgs, MakeTrainingArgs, ProbFormat, ScoreArgs, ScorerArgs,
    SegmentArgs, SegmentVideoArgs, SynthArgs, TrainArgs,
};

/// Invalid combination of arguments; reported with exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Segment(a) => segment(a),
        Cmd::SegmentVideo(a) => segment_video_cmd(a),
        Cmd::MakeTraining(a) => make_training(a),
        Cmd::ExtractSignatures(a) => extract(a),
        Cmd::Train(a) => train_cmd(a),
        Cmd::Score(a) => score(a),
        Cmd::Evaluate(a) => evaluate_cmd(a),
        Cmd::Synth(a) => synth(a),
        Cmd::Seeds(a) => seeds(a),
        Cmd::Watershed(a) => watershed(a),
    }
}

fn load_scorer(args: &ScorerArgs) -> Result<Option<Scorer>> {
    if let Some(p) = &args.model {
        return Ok(Some(Scorer::Builtin(Box::new(load_model(p)?))));
    }
    if let Some(p) = &args.oracle {
        return Ok(Some(Scorer::oracle_from(&read_manifest(p)?)));
    }
    if let Some(p) = &args.scores {
        return Ok(Some(Scorer::External(read_external_scores(p)?)));
    }
    Ok(None)
}

fn scorer_for(args: &ScorerArgs, cfg: &PipelineConfig) -> Result<Option<Scorer>> {
    let scorer = load_scorer(args)?;
    if scorer.is_none() && cfg.mode == Mode::Ceb {
        return Err(Usage(
            "a scorer is required: pass --model, --oracle or --scores, or use --mode wo-cls".into(),
        )
        .into());
    }
    Ok(scorer)
}

fn validated(cfg: PipelineConfig) -> Result<PipelineConfig> {
    cfg.validate().map_err(|e| Usage(e.to_string()))?;
    Ok(cfg)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn segment(a: SegmentArgs) -> Result<()> {
    let cfg = validated(a.pipeline.config())?;
    let scorer = scorer_for(&a.scorer, &cfg)?;
    let p = read_probmap(&a.probmap)?;
    let labels = segment_frame_at(&p, a.frame, scorer.as_ref(), &cfg)?;
    ensure_parent(&a.out)?;
    write_labelmap(&labels, &a.out)?;
    log::info!(
        "{} instances written to {}",
        labels.instance_ids().len(),
        a.out.display()
    );
    Ok(())
}

/// Regular files of `dir`, sorted by file name.
fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading frame directory {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .with_context(|| format!("listing {}", dir.display()))?;
    files.retain(|p| p.is_file());
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    if files.is_empty() {
        anyhow::bail!("no frames in {}", dir.display());
    }
    Ok(files)
}

fn segment_video_cmd(a: SegmentVideoArgs) -> Result<()> {
    let pcfg = validated(a.pipeline.config())?;
    let tcfg = a.temporal.config(pcfg.caps);
    tcfg.validate().map_err(|e| Usage(e.to_string()))?;
    let scorer = scorer_for(&a.scorer, &pcfg)?;
    let files = frame_files(&a.frames)?;
    let frames = files
        .iter()
        .map(read_probmap)
        .collect::<ceb_core::Result<Vec<_>>>()?;
    let out = segment_video(&frames, scorer.as_ref(), &pcfg, &tcfg)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (f, labels) in files.iter().zip(&out) {
        let stem = f.file_stem().unwrap_or_default().to_string_lossy();
        write_labelmap(labels, a.out.join(format!("{stem}.pgm")))?;
    }
    log::info!("{} frames written to {}", out.len(), a.out.display());
    Ok(())
}

fn make_training(a: MakeTrainingArgs) -> Result<()> {
    if a.probmap.len() != a.gt.len() {
        return Err(Usage(format!(
            "{} probability maps but {} ground-truth maps",
            a.probmap.len(),
            a.gt.len()
        ))
        .into());
    }
    let cfg = validated(a.pipeline.config())?;
    let mut records = Vec::new();
    let mut listing = String::new();
    for (k, (pp, gp)) in a.probmap.iter().zip(&a.gt).enumerate() {
        let frame = a.first_frame + k;
        let p = read_probmap(pp)?;
        let gt = read_labelmap(gp)?;
        let analysis = analyze_frame(&p, frame, &cfg)?;
        if a.dump_model.is_some() {
            let problem = gi_problem(&analysis, &gt, cfg.caps)?;
            let resources: Vec<Vec<u32>> = problem
                .candidates
                .iter()
                .map(|c| c.regions.clone())
                .collect();
            listing.push_str(&lp_listing(
                &format!("frame{frame}"),
                &problem.scores,
                &resources,
                cfg.solver.min_score,
            ));
            listing.push('\n');
        }
        let (recs, _) = label_analysis(&analysis, &gt, &cfg)?;
        records.extend(recs);
    }
    let manifest = export_signatures(&records, &a.out)?;
    if let Some(path) = &a.dump_model {
        ensure_parent(path)?;
        fs::write(path, listing).with_context(|| format!("writing {}", path.display()))?;
    }
    let positives = records.iter().filter(|r| r.label == Some(true)).count();
    println!(
        "{} signatures ({} TRUE, {} FALSE) -> {}",
        records.len(),
        positives,
        records.len() - positives,
        manifest.display()
    );
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<()> {
    let cfg = validated(a.pipeline.config())?;
    let p = read_probmap(&a.probmap)?;
    let analysis = analyze_frame(&p, a.frame, &cfg)?;
    let manifest = export_signatures(&analysis.signatures, &a.out)?;
    println!(
        "{} signatures -> {}",
        analysis.signatures.len(),
        manifest.display()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let cfg = ScorerConfig {
        hidden: a.hidden,
        learning_rate: a.learning_rate,
        momentum: a.momentum,
        epochs: a.epochs,
        batch_size: a.batch_size,
        gamma: a.gamma,
        alpha: a.alpha,
        seed: a.seed,
        input_side: a.input_side,
    };
    cfg.validate().map_err(|e| Usage(e.to_string()))?;
    let mut records = Vec::new();
    for m in &a.manifest {
        records.extend(read_manifest(m)?);
    }
    let model = train(&records, &cfg)?;
    ensure_parent(&a.out)?;
    save_model(&model, &a.out)?;
    if let Some(path) = &a.loss_curve {
        ensure_parent(path)?;
        let mut w =
            csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(["epoch", "loss"])?;
        for (e, l) in model.loss_curve.iter().enumerate() {
            w.write_record([e.to_string(), l.to_string()])?;
        }
        w.flush()?;
    }
    println!(
        "trained on {} signatures; loss {:.6} -> {:.6}; model {}",
        records.iter().filter(|r| r.label.is_some()).count(),
        model.loss_curve[0],
        model.loss_curve.last().copied().unwrap_or(f64::NAN),
        a.out.display()
    );
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    let scorer = load_scorer(&a.scorer)?
        .ok_or_else(|| Usage("a scorer is required: pass --model, --oracle or --scores".into()))?;
    let records = read_manifest(&a.manifest)?;
    ensure_parent(&a.out)?;
    let mut w =
        csv::Writer::from_path(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    w.write_record(["signature_id", "score"])?;
    for r in &records {
        w.write_record([r.id.clone(), scorer.score(r)?.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    if a.pred.len() != a.gt.len() {
        return Err(Usage(format!(
            "{} predictions but {} ground-truth maps",
            a.pred.len(),
            a.gt.len()
        ))
        .into());
    }
    let mut rows = Vec::new();
    for (pp, gp) in a.pred.iter().zip(&a.gt) {
        let pred = read_labelmap(pp)?;
        let gt = read_labelmap(gp)?;
        let report = evaluate_with(&pred, &gt, a.protocol.into())
            .with_context(|| format!("evaluating {} against {}", pp.display(), gp.display()))?;
        let name = pp
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .to_string();
        rows.push((name, report));
    }
    if let Some(out) = &a.out {
        ensure_parent(out)?;
        let f = fs::File::create(out).with_context(|| format!("writing {}", out.display()))?;
        write_csv(&rows, f)?;
    }
    let mut stdout = std::io::stdout().lock();
    write!(stdout, "{}", format_table(&rows))?;
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = a.spec();
    spec.validate().map_err(|e| Usage(e.to_string()))?;
    let (maps, gts) = synth_video(&spec)?;
    let (pdir, gdir) = (a.out.join("prob"), a.out.join("gt"));
    for d in [&pdir, &gdir] {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    for (w, (p, g)) in maps.iter().zip(&gts).enumerate() {
        match a.format {
            ProbFormat::Cebp => write_probmap(p, pdir.join(format!("frame_{w:03}.cebp")))?,
            ProbFormat::Pgm => write_probmap_pgm(p, pdir.join(format!("frame_{w:03}.pgm")))?,
        }
        write_labelmap(g, gdir.join(format!("frame_{w:03}.pgm")))?;
    }
    println!("{} frames -> {}", maps.len(), a.out.display());
    Ok(())
}

fn seeds(a: DumpArgs) -> Result<()> {
    let cfg = validated(a.pipeline.config())?;
    let p = read_probmap(&a.probmap)?;
    let s = generate_seeds(&p, cfg.step, cfg.min_area, cfg.connectivity)?;
    ensure_parent(&a.dump)?;
    write_labelmap(&s.to_labelmap(p.width(), p.height()), &a.dump)?;
    println!("{} seeds -> {}", s.len(), a.dump.display());
    Ok(())
}

fn watershed(a: DumpArgs) -> Result<()> {
    let cfg = validated(a.pipeline.config())?;
    let p = read_probmap(&a.probmap)?;
    let fg = p.foreground(FOREGROUND_FLOOR);
    let s = generate_seeds(&p, cfg.step, cfg.min_area, cfg.connectivity)?;
    let f = if s.is_empty() {
        Flood::unseeded(p.width(), p.height(), &fg)
    } else {
        flood(&p, &fg, &s, cfg.connectivity)?
    };
    ensure_parent(&a.dump)?;
    write_labelmap(&f.to_dump(), &a.dump)?;
    println!(
        "{} regions, {} boundaries -> {}",
        f.regions.len(),
        f.boundaries.len(),
        a.dump.display()
    );
    Ok(())
}
