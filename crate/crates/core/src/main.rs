use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use geotrav::classify::{
    build_log_graph, classes_from_csv, classes_to_csv, classify, histogram_to_csv,
    intersection_histogram, TraversalKind,
};
use geotrav::config::{parse_plan_entry, ConfigError, RunConfig};
use geotrav::contrastive::{
    gclr_loss, gradcheck, load_embeddings, save_embeddings, ContrastiveError, EmbeddingMatrix,
    NegativeMode, ProjectionHead,
};
use geotrav::correspondence::{
    cell_center_global, parse_pair_file, sample_pairs, write_pair_file, CorrespondenceError,
};
use geotrav::ingest::{parse_pose_file, Dataset, IngestError, PoseFormat};
use geotrav::pose_graph::{build_pose_graph, load_graph, save_graph, GraphError};
use geotrav::rng::SeededRng;
use geotrav::splits::{generate_splits, verify_manifest, SplitError};
use geotrav::synth::{generate_scene, truth_from_text, truth_to_text, SynthError};

const GRADCHECK_TOL: f64 = 1e-5;

#[derive(Parser)]
#[command(name = "geotrav", version, about = "Multi-traversal overlap analysis and contrastive pair tooling")]
struct Cli {
    /// TOML run configuration; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-traversal dataset and its ground truth.
    Synth(SynthArgs),
    /// Classify logs as single- or multi-traversal.
    Classify(ClassifyArgs),
    /// Build the spatial pose graph.
    Graph(GraphArgs),
    /// Generate SSL, validation and supervised splits.
    Split(SplitArgs),
    /// Sample anchor, positive and negative BEV cells for graph edges.
    SamplePairs(SamplePairsArgs),
    /// Evaluate the contrastive loss on stored embeddings and check gradients.
    LossCheck(LossCheckArgs),
    /// Per-log and pose-graph statistics.
    Stats(StatsArgs),
}

#[derive(Args)]
struct FootprintFlags {
    #[arg(long)]
    lat_extent: Option<f64>,
    #[arg(long)]
    lon_extent: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    /// Pose CSV to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth sidecar to write.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Use an explicit plan instead of a random scene.
    #[arg(long, value_delimiter = ',')]
    plan: Option<Vec<String>>,
    #[arg(long)]
    logs: Option<usize>,
    #[arg(long)]
    poses_per_log: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    poses: Option<PathBuf>,
    /// Classification CSV to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Histogram CSV (intersecting-log count to number of logs).
    #[arg(long)]
    hist: Option<PathBuf>,
    #[command(flatten)]
    footprint: FootprintFlags,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    poses: Option<PathBuf>,
    /// Output graph; a `.bin` extension selects the binary format.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    iou_min: Option<f64>,
    #[arg(long)]
    iou_max: Option<f64>,
    /// Also link poses of the same log.
    #[arg(long)]
    all_pairs: bool,
    #[command(flatten)]
    footprint: FootprintFlags,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    poses: Option<PathBuf>,
    /// Classification CSV; computed from the poses when omitted.
    #[arg(long)]
    classes: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    percents: Option<Vec<f64>>,
    #[arg(long)]
    val_frac: Option<f64>,
}

#[derive(Args)]
struct SamplePairsArgs {
    #[arg(long)]
    poses: Option<PathBuf>,
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Pair file to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth sidecar used to derive cell embeddings.
    #[arg(long, requires = "embeddings_out")]
    truth: Option<PathBuf>,
    #[arg(long, requires = "truth")]
    embeddings_out: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    anchors: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
}

#[derive(Args)]
struct LossCheckArgs {
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Text report with per-anchor losses.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    poses: Option<PathBuf>,
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Per-log CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Edge IoU histogram CSV; needs `--graph`.
    #[arg(long, requires = "graph")]
    iou_hist: Option<PathBuf>,
}

/// Error raised when a computed artifact breaks one of its own invariants.
#[derive(Debug, thiserror::Error)]
#[error("internal invariant violated: {0}")]
struct InvariantViolation(String);

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<InvariantViolation>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<SplitError>() {
            return if matches!(e, SplitError::InsufficientData { .. }) { 2 } else { 1 };
        }
        if let Some(e) = cause.downcast_ref::<CorrespondenceError>() {
            return match e {
                CorrespondenceError::Exhausted { .. } | CorrespondenceError::NoOverlap { .. } => 2,
                _ => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<SynthError>() {
            return if matches!(e, SynthError::InfeasiblePlan(_)) { 2 } else { 1 };
        }
        if let Some(e) = cause.downcast_ref::<ContrastiveError>() {
            return if matches!(e, ContrastiveError::Divergence { .. }) { 2 } else { 1 };
        }
        if cause.is::<IngestError>()
            || cause.is::<GraphError>()
            || cause.is::<ConfigError>()
            || cause.is::<std::io::Error>()
            || cause.is::<clap::Error>()
        {
            return 1;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| ConfigError::Invalid(format!("missing required --{flag}")).into())
}

fn apply_footprint(cfg: &mut RunConfig, f: &FootprintFlags) {
    if let Some(v) = f.lat_extent {
        cfg.footprint.lat_extent = v;
    }
    if let Some(v) = f.lon_extent {
        cfg.footprint.lon_extent = v;
    }
}

fn apply_overrides(cfg: &mut RunConfig, cmd: &Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => {
            if let Some(plan) = &a.plan {
                for p in plan {
                    parse_plan_entry(p)?;
                }
                cfg.synth.plan = plan.clone();
                cfg.synth.random = false;
            }
            if let Some(n) = a.logs {
                cfg.synth.n_logs = n;
                cfg.synth.max_logs = n;
            }
            if let Some(n) = a.poses_per_log {
                cfg.synth.poses_per_log = n;
                cfg.synth.max_poses_per_log = n;
            }
            if let Some(n) = a.noise {
                cfg.synth.noise = n;
            }
        }
        Command::Classify(a) => apply_footprint(cfg, &a.footprint),
        Command::Graph(a) => {
            apply_footprint(cfg, &a.footprint);
            if let Some(v) = a.iou_min {
                cfg.graph.iou_min = v;
            }
            if let Some(v) = a.iou_max {
                cfg.graph.iou_max = v;
            }
            if a.all_pairs {
                cfg.graph.cross_only = false;
            }
        }
        Command::Split(a) => {
            if let Some(p) = &a.percents {
                cfg.split.percents = p.clone();
            }
            if let Some(v) = a.val_frac {
                cfg.split.val_frac = v;
            }
        }
        Command::SamplePairs(a) => {
            if let Some(v) = a.pairs {
                cfg.sampling.pairs = v;
            }
            if let Some(v) = a.anchors {
                cfg.sampling.anchors = v;
            }
            if let Some(v) = a.negatives {
                cfg.sampling.negatives = v;
            }
        }
        Command::LossCheck(a) => {
            if let Some(v) = a.tau {
                cfg.loss.tau = v;
            }
        }
        Command::Stats(_) => {}
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(cmd) = &cli.command {
        apply_overrides(&mut cfg, cmd)?;
    }
    cfg.validate()?;
    if cli.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let Some(cmd) = cli.command else {
        return Err(ConfigError::Invalid("no command given; see --help".into()).into());
    };
    let header = format!("# geotrav {} config_sha256={}\n", env!("CARGO_PKG_VERSION"), cfg.hash());
    let summary = match cmd {
        Command::Synth(a) => cmd_synth(&cfg, &header, &a)?,
        Command::Classify(a) => cmd_classify(&cfg, &header, &a)?,
        Command::Graph(a) => cmd_graph(&cfg, &header, &a)?,
        Command::Split(a) => cmd_split(&cfg, &header, &a)?,
        Command::SamplePairs(a) => cmd_sample_pairs(&cfg, &header, &a)?,
        Command::LossCheck(a) => cmd_loss_check(&cfg, &header, &a)?,
        Command::Stats(a) => cmd_stats(&header, &a)?,
    };
    println!("{summary}");
    Ok(())
}

fn write_text(path: &Path, header: &str, body: &str) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(header.as_bytes())?;
    f.write_all(body.as_bytes())?;
    Ok(())
}

fn load_poses(path: &Path) -> Result<Dataset> {
    parse_pose_file(path, PoseFormat::from_path(path)).with_context(|| format!("reading {}", path.display()))
}

fn cmd_synth(cfg: &RunConfig, header: &str, a: &SynthArgs) -> Result<serde_json::Value> {
    let out = required(&a.out, "out")?;
    let spec = cfg.synth.scene_spec(cfg.seed)?;
    let scene = generate_scene(&spec)?;
    write_text(out, header, &scene.dataset.to_csv_string())?;
    if let Some(t) = &a.truth {
        write_text(t, header, &truth_to_text(&scene))?;
    }
    Ok(json!({
        "command": "synth",
        "logs": scene.dataset.traversals.len(),
        "poses": scene.dataset.total_poses,
        "truth_edges": scene.truth.edges.len(),
        "dataset_sha256": scene.dataset.content_hash(),
    }))
}

fn cmd_classify(cfg: &RunConfig, header: &str, a: &ClassifyArgs) -> Result<serde_json::Value> {
    let poses = required(&a.poses, "poses")?;
    let out = required(&a.out, "out")?;
    let d = match parse_pose_file(poses, PoseFormat::from_path(poses)) {
        Ok(d) => d,
        Err(IngestError::EmptyFile) => Dataset::from_traversals(Vec::new())?,
        Err(e) => return Err(anyhow::Error::new(e).context(format!("reading {}", poses.display()))),
    };
    let graph = build_log_graph(&d, &cfg.footprint());
    let classes = classify(&graph);
    let hist = intersection_histogram(&classes);
    write_text(out, header, &classes_to_csv(&classes))?;
    if let Some(h) = &a.hist {
        write_text(h, header, &histogram_to_csv(&hist))?;
    }
    let single = classes.iter().filter(|c| c.class == TraversalKind::Single).count();
    Ok(json!({
        "command": "classify",
        "logs": classes.len(),
        "single": single,
        "multi": classes.len() - single,
        "log_edges": graph.edges.len(),
        "histogram": hist.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>(),
    }))
}

fn cmd_graph(cfg: &RunConfig, header: &str, a: &GraphArgs) -> Result<serde_json::Value> {
    cfg.check_iou_range()?;
    let d = load_poses(required(&a.poses, "poses")?)?;
    let out = required(&a.out, "out")?;
    let g = build_pose_graph(&d, &cfg.footprint(), cfg.graph.iou_min, cfg.graph.iou_max, cfg.graph.cross_only)?;
    g.validate().map_err(|e| InvariantViolation(format!("built pose graph: {e}")))?;
    if geotrav::pose_graph::is_binary_path(out) {
        save_graph(&g, out)?;
    } else {
        write_text(out, header, &g.to_text())?;
    }
    let connected = {
        let mut seen = vec![false; g.vertices.len()];
        for e in &g.edges {
            seen[e.i] = true;
            seen[e.j] = true;
        }
        seen.iter().filter(|s| **s).count()
    };
    Ok(json!({
        "command": "graph",
        "vertices": g.vertices.len(),
        "edges": g.edges.len(),
        "connected_vertices": connected,
        "iou_min": g.iou_min,
        "iou_max": g.iou_max,
        "cross_only": g.cross_only,
    }))
}

fn cmd_split(cfg: &RunConfig, header: &str, a: &SplitArgs) -> Result<serde_json::Value> {
    let d = load_poses(required(&a.poses, "poses")?)?;
    let out = required(&a.out, "out")?;
    let classes = match &a.classes {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            classes_from_csv(&text).map_err(SplitError::ClassesMismatch)?
        }
        None => classify(&build_log_graph(&d, &cfg.footprint())),
    };
    let m = generate_splits(&d, &classes, &cfg.split.percents, cfg.split.val_frac, cfg.seed)?;
    let report = verify_manifest(&m, &d, &classes);
    if !report.all_passed() {
        let failed: Vec<String> = report.failures().map(|c| format!("{}: {}", c.name, c.detail)).collect();
        return Err(InvariantViolation(format!("split manifest checks failed: {}", failed.join("; "))).into());
    }
    write_text(out, header, &m.to_text())?;
    let counts = d.pose_counts();
    let poses = |logs: &[String]| logs.iter().map(|l| counts[l]).sum::<usize>();
    Ok(json!({
        "command": "split",
        "ssl_logs": m.ssl_logs.len(),
        "ssl_poses": poses(&m.ssl_logs),
        "val_logs": m.val_logs.len(),
        "val_poses": poses(&m.val_logs),
        "sup": m.sup_subsets.iter().map(|s| json!({
            "fraction": s.fraction,
            "logs": s.logs.len(),
            "poses": poses(&s.logs),
        })).collect::<Vec<_>>(),
        "dataset_sha256": m.dataset_hash,
    }))
}

fn cmd_sample_pairs(cfg: &RunConfig, header: &str, a: &SamplePairsArgs) -> Result<serde_json::Value> {
    let d = load_poses(required(&a.poses, "poses")?)?;
    let graph_path = required(&a.graph, "graph")?;
    let out = required(&a.out, "out")?;
    let g = load_graph(graph_path).with_context(|| format!("reading {}", graph_path.display()))?;
    let wanted = if cfg.sampling.pairs == 0 { g.edges.len() } else { cfg.sampling.pairs };
    if g.edges.len() < wanted {
        return Err(CorrespondenceError::Exhausted {
            what: "pose-graph edges",
            needed: wanted,
            available: g.edges.len(),
        }
        .into());
    }
    let mut rng = SeededRng::new(cfg.seed);
    let mut edges = rng.sample_without_replacement(&g.edges, wanted);
    edges.sort_by_key(|e| (e.i, e.j));
    let grid = cfg.grid();
    let footprint = cfg.footprint();
    let sampling = cfg.sampling();
    let mut batches = Vec::with_capacity(edges.len());
    for e in &edges {
        let (ka, kb) = g.edge_keys(e);
        let pose = |k| d.pose(k).ok_or_else(|| GraphError::UnknownPose(k.clone()));
        batches.push(sample_pairs(pose(ka)?, pose(kb)?, &grid, &footprint, &sampling, rng.next_u64())?);
    }
    write_text(out, header, &write_pair_file(&batches))?;

    let mut rows = 0;
    if let (Some(truth_path), Some(emb_path)) = (&a.truth, &a.embeddings_out) {
        let truth = truth_from_text(&fs::read_to_string(truth_path)?)?;
        let mut values = Vec::new();
        for b in &batches {
            for c in b.anchors.iter().chain(&b.positives).chain(&b.negatives) {
                let p = d.pose(&c.pose).ok_or_else(|| GraphError::UnknownPose(c.pose.clone()))?;
                values.extend(truth.field.eval(cell_center_global(p, &grid, c.row, c.col)?));
                rows += 1;
            }
        }
        let m = EmbeddingMatrix::new(rows, truth.field.dim, values)?;
        save_embeddings(&m, emb_path)?;
    }
    let mean_dist = {
        let all: Vec<f64> = batches.iter().flat_map(|b| b.distances.iter().copied()).collect();
        if all.is_empty() { 0.0 } else { all.iter().sum::<f64>() / all.len() as f64 }
    };
    Ok(json!({
        "command": "sample-pairs",
        "batches": batches.len(),
        "anchors": batches.iter().map(|b| b.anchors.len()).sum::<usize>(),
        "negatives": batches.iter().map(|b| b.negatives.len()).sum::<usize>(),
        "mean_match_dist_m": mean_dist,
        "embedding_rows": rows,
    }))
}

fn cmd_loss_check(cfg: &RunConfig, header: &str, a: &LossCheckArgs) -> Result<serde_json::Value> {
    let pairs_path = required(&a.pairs, "pairs")?;
    let emb_path = required(&a.embeddings, "embeddings")?;
    let records = parse_pair_file(&fs::read_to_string(pairs_path)?)?;
    let emb = load_embeddings(emb_path).with_context(|| format!("reading {}", emb_path.display()))?;
    let needed: usize = records.iter().map(|r| 2 * r.anchors.len() + r.negatives.len()).sum();
    if needed != emb.rows {
        return Err(ContrastiveError::ShapeMismatch(format!(
            "pair file needs {needed} embedding rows, file has {}",
            emb.rows
        ))
        .into());
    }
    let tau = cfg.loss.tau;
    let mut report = String::new();
    let mut per_anchor = Vec::new();
    let mut degenerate = 0;
    let mut total = 0.0;
    let mut first = None;
    let mut off = 0;
    for (bi, r) in records.iter().enumerate() {
        let n = r.anchors.len();
        let za = emb.slice_rows(off, off + n);
        let zp = emb.slice_rows(off + n, off + 2 * n);
        let zn = emb.slice_rows(off + 2 * n, off + 2 * n + r.negatives.len());
        off += 2 * n + r.negatives.len();
        let out = gclr_loss(&za, &zp, &zn, tau, NegativeMode::Shared)?;
        for (i, l) in out.per_anchor.iter().enumerate() {
            let _ = writeln!(report, "anchor {bi} {i} {l}");
        }
        total += out.total;
        degenerate += out.degenerate;
        per_anchor.extend(out.per_anchor);
        if first.is_none() {
            first = Some((za, zp, zn));
        }
    }
    if degenerate > 0 {
        log::warn!("{degenerate} similarity evaluations involved zero-norm embeddings");
    }

    let grad = match first {
        Some((za, zp, zn)) => {
            let na = cfg.loss.gradcheck_anchors.min(za.rows);
            let nk = cfg.loss.gradcheck_negatives.min(zn.rows);
            let head = ProjectionHead::with_default_dims(emb.dim, cfg.seed);
            let rep = gradcheck(
                &head,
                &za.slice_rows(0, na),
                &zp.slice_rows(0, na),
                &zn.slice_rows(0, nk),
                tau,
                NegativeMode::Shared,
                cfg.loss.gradcheck_step,
            )?;
            if !rep.passes(GRADCHECK_TOL) {
                return Err(InvariantViolation(format!(
                    "gradient check failed: max relative error {:e} ({})",
                    rep.max_rel_err, rep.worst
                ))
                .into());
            }
            Some(rep)
        }
        None => None,
    };
    let mean = if per_anchor.is_empty() { 0.0 } else { total / per_anchor.len() as f64 };
    if let Some(out) = &a.out {
        let mut body = format!("loss {total}\nmean_loss {mean}\ntau {tau}\n");
        body.push_str(&report);
        if let Some(g) = &grad {
            let _ = writeln!(
                body,
                "gradcheck checked {} skipped_kinks {} max_abs_err {:e} max_rel_err {:e}",
                g.checked, g.skipped_kinks, g.max_abs_err, g.max_rel_err
            );
        }
        write_text(out, header, &body)?;
    }
    Ok(json!({
        "command": "loss-check",
        "batches": records.len(),
        "anchors": per_anchor.len(),
        "tau": tau,
        "loss": total,
        "mean_loss": mean,
        "per_anchor": per_anchor,
        "degenerate": degenerate,
        "gradcheck": grad.map(|g| json!({
            "checked": g.checked,
            "skipped_kinks": g.skipped_kinks,
            "max_abs_err": g.max_abs_err,
            "max_rel_err": g.max_rel_err,
            "tolerance": GRADCHECK_TOL,
        })),
    }))
}

fn cmd_stats(header: &str, a: &StatsArgs) -> Result<serde_json::Value> {
    let d = load_poses(required(&a.poses, "poses")?)?;
    let mut body = String::from("log_id,area_id,poses,path_length_m,duration_s\n");
    for t in &d.traversals {
        let length: f64 = t
            .poses
            .windows(2)
            .map(|w| libm::hypot(w[1].x - w[0].x, w[1].y - w[0].y))
            .sum();
        let duration = t.poses.last().map_or(0.0, |l| l.t - t.poses[0].t);
        let _ = writeln!(body, "{},{},{},{},{}", t.log_id, t.area_id, t.poses.len(), length, duration);
    }
    if let Some(out) = &a.out {
        write_text(out, header, &body)?;
    }
    let areas: std::collections::BTreeSet<&str> = d.traversals.iter().map(|t| t.area_id.as_str()).collect();
    let mut summary = json!({
        "command": "stats",
        "logs": d.traversals.len(),
        "poses": d.total_poses,
        "areas": areas.len(),
    });
    if let Some(gp) = &a.graph {
        let g = load_graph(gp).with_context(|| format!("reading {}", gp.display()))?;
        const BINS: usize = 20;
        let mut hist = [0usize; BINS];
        for e in &g.edges {
            hist[((e.iou * BINS as f64) as usize).min(BINS - 1)] += 1;
        }
        if let Some(path) = &a.iou_hist {
            let mut h = String::from("iou_lo,iou_hi,edges\n");
            for (i, n) in hist.iter().enumerate() {
                let _ = writeln!(h, "{},{},{n}", i as f64 / BINS as f64, (i + 1) as f64 / BINS as f64);
            }
            write_text(path, header, &h)?;
        }
        let mean = if g.edges.is_empty() {
            0.0
        } else {
            g.edges.iter().map(|e| e.iou).sum::<f64>() / g.edges.len() as f64
        };
        summary["graph_edges"] = json!(g.edges.len());
        summary["mean_edge_iou"] = json!(mean);
    }
    Ok(summary)
}
