use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use decipher::annotator::{AnnotationStore, WeightMode};
use decipher::config::{Config, SCHEMA_VERSIONS};
use decipher::decomposer::{segment_coarse, segment_fine, MaskFile, MaskSet, MaskSource};
use decipher::embedder::{embed_mask, train_projection, LrSchedule, Projection, Tau, TrainConfig};
use decipher::evaluator::{ablation_matrix, build_holdout, score, HoldoutPlan, KnnComposeRunner};
use decipher::glyph_data::{
    load_glyph_bitmap, load_manifest, synthetic_dictionary, Glyph, Jitter, Manifest, ManifestRecord, Period,
    PeriodSpec, RadicalAtlas, SynthDictSpec, SyntheticCorpus,
};
use decipher::ids::{load_dict, parse_ids, serialize_ids, tokenize, CharDict};
use decipher::predictor::{
    annotate_corpus, augment_radicals, choose_masks, import_predictions, predict_all, predictions_jsonl,
    write_augmented, PredictParams, TokenSeq,
};
use decipher::reconstructor::{match_sequence, CandidateLine, QueryForm};

#[derive(Parser)]
#[command(
    name = "decipher",
    about = "Radical-based glyph decipherment pipeline",
    disable_version_flag = true,
    arg_required_else_help = true
)]
struct Cli {
    /// Print the tool version and the schema version of every file format.
    #[arg(long)]
    version: bool,
    /// TOML config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for per-glyph stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(flatten)]
    over: Overrides,
    #[command(subcommand)]
    cmd: Option<Cmd>,
}

#[derive(Args)]
struct Overrides {
    #[arg(long, global = true)]
    merge_dist: Option<f64>,
    #[arg(long, global = true)]
    max_piece_area: Option<usize>,
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// Neighbours per KNN query.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// inverse | literal | neg
    #[arg(long, global = true)]
    weight: Option<WeightMode>,
    #[arg(long, global = true)]
    fuzz: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Binarization threshold for input images.
    #[arg(long, global = true)]
    threshold: Option<u8>,
    /// Do not retry rejected glyphs with the target's own radicals.
    #[arg(long, global = true)]
    no_relabel: bool,
    /// Let propagated items serve as neighbours within the same pass.
    #[arg(long, global = true)]
    chain: bool,
    #[arg(long, global = true)]
    dict: Option<PathBuf>,
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    #[arg(long, global = true)]
    projection: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse IDS strings and query the dictionary.
    Ids {
        #[command(subcommand)]
        action: IdsCmd,
    },
    /// Per-period category and sample counts of a manifest.
    Stats,
    /// Render a synthetic multi-period corpus.
    Compose {
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated periods; the first uses the base atlas.
        #[arg(long, default_value = "OBI,Bronze")]
        periods: String,
        #[arg(long, default_value_t = 1)]
        samples: usize,
        /// Shear strength of each later period's atlas relative to the base.
        #[arg(long, default_value_t = 0.1)]
        strength: f64,
        #[arg(long, default_value_t = 0)]
        jitter: i64,
        /// Synthetic dictionary size when no --dict is given.
        #[arg(long, default_value_t = 12)]
        radicals: usize,
        #[arg(long, default_value_t = 48)]
        compounds: usize,
    },
    /// Segment one image (--in) or every manifest glyph into component masks.
    Segment {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SegMode::Coarse)]
        mode: SegMode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the projection on components accepted by the reconstruction filter.
    TrainEmbed {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 16)]
        batch: usize,
        /// Per-epoch loss as CSV.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Build the annotation store from deciphered glyphs.
    Annotate {
        /// Store JSONL.
        #[arg(long)]
        out: PathBuf,
        /// Filter log JSONL.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Also add undeciphered components and label them from their neighbours.
        #[arg(long)]
        propagate: bool,
    },
    /// Match IDS strings or prediction files against the dictionary.
    Reconstruct {
        #[arg(long, conflicts_with = "pred", required_unless_present = "pred")]
        ids: Option<String>,
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict token sequences for undeciphered (or held-out) glyphs.
    Predict {
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit accepted components as single-radical samples.
    Augment {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Draw the held-out categories.
    Holdout {
        #[arg(long, default_value_t = 15)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against a holdout plan.
    Score {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value_t = 1)]
        topk: usize,
        /// Report JSON; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        tsv: Option<PathBuf>,
    },
    /// Accuracy on the target period for several training-period subsets.
    Ablate {
        #[arg(long)]
        plan: PathBuf,
        /// A subset such as `OBI+Bronze`; repeatable. Defaults to growing
        /// subsets starting from the target period.
        #[arg(long = "subset")]
        subsets: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum IdsCmd {
    /// Print the tree and canonical form of an IDS string.
    Parse { ids: String },
    /// Characters whose decomposition matches an IDS string.
    Lookup { ids: String },
    /// Load a dictionary and report rejected lines.
    Check,
}

#[derive(Clone, Copy, ValueEnum)]
enum SegMode {
    Coarse,
    Fine,
    /// The masks the predictor would use.
    Chosen,
}

enum CliError {
    Usage(String),
    Domain(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Domain(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

struct Ctx {
    cfg: Config,
}

impl Ctx {
    fn new(config: Option<&Path>, over: Overrides) -> Result<Self, CliError> {
        let mut cfg = match config {
            Some(p) => Config::load(p).map_err(|e| usage(e.to_string()))?,
            None => Config::default(),
        };
        if let Some(v) = over.merge_dist {
            cfg.merge_dist = v;
        }
        if let Some(v) = over.max_piece_area {
            cfg.max_piece_area = v;
        }
        if let Some(v) = over.tau {
            cfg.tau = v;
        }
        if let Some(v) = over.k {
            cfg.knn_k = v;
        }
        if let Some(v) = over.weight {
            cfg.weight_mode = v;
        }
        if let Some(v) = over.fuzz {
            cfg.fuzz = v;
        }
        if let Some(v) = over.seed {
            cfg.seed = v;
        }
        if let Some(v) = over.threshold {
            cfg.threshold = v;
        }
        if over.no_relabel {
            cfg.relabel = false;
        }
        if over.chain {
            cfg.chain = true;
        }
        let paths = &mut cfg.paths;
        for (slot, v) in [
            (&mut paths.dict, over.dict),
            (&mut paths.manifest, over.manifest),
            (&mut paths.store, over.store),
            (&mut paths.projection, over.projection),
        ] {
            if v.is_some() {
                *slot = v;
            }
        }
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(Ctx { cfg })
    }

    fn params(&self) -> PredictParams {
        self.cfg.predict_params()
    }

    fn dict(&self) -> Result<CharDict, CliError> {
        let path = self
            .cfg
            .paths
            .dict
            .as_ref()
            .ok_or_else(|| usage("--dict is required"))?;
        let (dict, rejected) = load_dict(path).with_context(|| format!("loading {}", path.display()))?;
        if !rejected.is_empty() {
            eprintln!("{}: {} lines rejected", path.display(), rejected.len());
        }
        Ok(dict)
    }

    fn manifest(&self) -> Result<Manifest, CliError> {
        let path = self
            .cfg
            .paths
            .manifest
            .as_ref()
            .ok_or_else(|| usage("--manifest is required"))?;
        Ok(load_manifest(path).with_context(|| format!("loading {}", path.display()))?)
    }

    fn store(&self) -> Result<AnnotationStore, CliError> {
        let path = self
            .cfg
            .paths
            .store
            .as_ref()
            .ok_or_else(|| usage("--store is required"))?;
        Ok(AnnotationStore::load(path).with_context(|| format!("loading {}", path.display()))?)
    }

    /// The saved projection, or the seeded random one.
    fn projection(&self) -> Result<Projection, CliError> {
        match &self.cfg.paths.projection {
            Some(p) => Ok(Projection::load(p).with_context(|| format!("loading {}", p.display()))?),
            None => Ok(Projection::random(self.cfg.seed)),
        }
    }

    fn glyphs(&self, manifest: &Manifest, records: &[&ManifestRecord]) -> Result<Vec<Glyph>, CliError> {
        let mut glyphs = records
            .par_iter()
            .map(|r| {
                manifest
                    .load_glyph(r, self.cfg.threshold)
                    .with_context(|| format!("glyph {}", r.id))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        glyphs.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(glyphs)
    }
}

fn load_plan(path: Option<&PathBuf>) -> Result<Option<HoldoutPlan>, CliError> {
    path.map(|p| HoldoutPlan::load(p).with_context(|| format!("loading {}", p.display())))
        .transpose()
        .map_err(CliError::Domain)
}

/// Deciphered records: the plan's training split, or every labelled record.
fn train_records<'a>(manifest: &'a Manifest, plan: Option<&HoldoutPlan>) -> Vec<&'a ManifestRecord> {
    match plan {
        Some(p) => p.train_records(manifest, None),
        None => manifest.records().iter().filter(|r| r.category.is_some()).collect(),
    }
}

/// Undeciphered records: the plan's test split, or every unlabelled record.
fn query_records<'a>(manifest: &'a Manifest, plan: Option<&HoldoutPlan>) -> Vec<&'a ManifestRecord> {
    match plan {
        Some(p) => p.test_records(manifest),
        None => manifest.records().iter().filter(|r| r.category.is_none()).collect(),
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn parse_periods(s: &str, sep: char) -> Result<Vec<Period>, CliError> {
    s.split(sep)
        .map(|p| p.trim().parse::<Period>().map_err(|e| usage(e.to_string())))
        .collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.version {
        println!("decipher {}", env!("CARGO_PKG_VERSION"));
        for (format, v) in SCHEMA_VERSIONS {
            println!("{format}\tv{v}");
        }
        return Ok(());
    }
    let cmd = cli.cmd.ok_or_else(|| usage("a subcommand is required"))?;
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Domain(e.into()))?;
    }
    let ctx = Ctx::new(cli.config.as_deref(), cli.over)?;
    let seed = ctx.cfg.seed;
    match cmd {
        Cmd::Ids { action } => match action {
            IdsCmd::Parse { ids } => {
                let tree = parse_ids(&ids).context("parsing IDS")?;
                print!("{}", tree.pretty());
                println!("{}", serialize_ids(&tree));
            }
            IdsCmd::Lookup { ids } => {
                let dict = ctx.dict()?;
                let tree = parse_ids(&ids).context("parsing IDS")?;
                for c in dict.lookup_any(&serialize_ids(&tree)) {
                    println!("U+{:04X}\t{c}", c as u32);
                }
            }
            IdsCmd::Check => {
                let path = ctx.cfg.paths.dict.clone().ok_or_else(|| usage("--dict is required"))?;
                let (dict, rejected) = load_dict(&path).with_context(|| format!("loading {}", path.display()))?;
                for r in &rejected {
                    println!("rejected\t{}\t{}", r.line, r.reason);
                }
                println!("entries\t{}", dict.len());
            }
        },
        Cmd::Stats => print!("{}", ctx.manifest()?.stats_tsv()),
        Cmd::Compose {
            out,
            periods,
            samples,
            strength,
            jitter,
            radicals,
            compounds,
        } => {
            let periods = parse_periods(&periods, ',')?;
            if periods.is_empty() || samples == 0 {
                return Err(usage("need at least one period and one sample"));
            }
            if !(0.0..=1.0).contains(&strength) {
                return Err(usage("--strength must lie in [0, 1]"));
            }
            fs::create_dir_all(&out).context("creating output directory")?;
            let dict = match &ctx.cfg.paths.dict {
                Some(_) => ctx.dict()?,
                None => {
                    if radicals == 0 || radicals > 214 {
                        return Err(usage("--radicals must lie in [1, 214]"));
                    }
                    let dict = synthetic_dictionary(
                        &SynthDictSpec {
                            n_radicals: radicals,
                            n_compounds: compounds,
                            ..Default::default()
                        },
                        seed,
                    );
                    fs::write(out.join("dict.tsv"), dict.to_tsv()).context("writing dict.tsv")?;
                    dict
                }
            };
            let base = RadicalAtlas::generate(periods[0].name(), &dict.radical_vocabulary(), seed);
            let mut specs = Vec::new();
            for (i, &p) in periods.iter().enumerate() {
                let atlas = if i == 0 {
                    base.clone()
                } else {
                    base.evolve(p.name(), strength, seed.wrapping_add(i as u64))
                };
                atlas.save(out.join("atlas").join(p.name())).context("writing atlas")?;
                specs.push(PeriodSpec {
                    period: p,
                    atlas,
                    categories: None,
                    samples_per_category: samples,
                });
            }
            let corpus =
                SyntheticCorpus::build(&dict, &specs, Jitter { max_shift: jitter }, seed).context("rendering")?;
            let path = corpus.write(&out).context("writing corpus")?;
            println!("{}\t{} glyphs", path.display(), corpus.glyphs.len());
        }
        Cmd::Segment { input, mode, out } => {
            let params = ctx.params();
            let segment = |g: &Glyph| -> anyhow::Result<MaskFile> {
                let set = match mode {
                    SegMode::Coarse => segment_coarse(g, params.merge_dist)?,
                    SegMode::Fine => segment_fine(g, params.max_piece_area)?,
                    SegMode::Chosen => {
                        let masks = choose_masks(g, &params)?;
                        let source = masks.first().map_or(MaskSource::Coarse, |m| m.source);
                        MaskSet {
                            glyph_id: g.id.clone(),
                            source,
                            masks,
                        }
                    }
                };
                Ok(MaskFile::from_maskset(&set))
            };
            let text = match input {
                Some(path) => {
                    let bitmap = load_glyph_bitmap(&path, ctx.cfg.threshold)
                        .with_context(|| format!("loading {}", path.display()))?;
                    let id = path
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default();
                    let glyph = Glyph {
                        id,
                        period: Period::Obi,
                        category: None,
                        bitmap,
                    };
                    serde_json::to_string(&segment(&glyph)?).context("serializing masks")? + "\n"
                }
                None => {
                    let manifest = ctx.manifest()?;
                    let records: Vec<&ManifestRecord> = manifest.records().iter().collect();
                    let glyphs = ctx.glyphs(&manifest, &records)?;
                    let files = glyphs.par_iter().map(segment).collect::<anyhow::Result<Vec<_>>>()?;
                    files
                        .iter()
                        .map(|f| serde_json::to_string(f).map(|s| s + "\n"))
                        .collect::<Result<String, _>>()
                        .context("serializing masks")?
                }
            };
            emit(out.as_deref(), &text)?;
        }
        Cmd::TrainEmbed {
            out,
            plan,
            epochs,
            lr,
            batch,
            curve,
        } => {
            if epochs == 0 || batch < 2 || !(lr.is_finite() && lr > 0.0) {
                return Err(usage("need epochs ≥ 1, batch ≥ 2 and lr > 0"));
            }
            let dict = ctx.dict()?;
            let manifest = ctx.manifest()?;
            let plan = load_plan(plan.as_ref())?;
            let glyphs = ctx.glyphs(&manifest, &train_records(&manifest, plan.as_ref()))?;
            let ann = annotate_corpus(&glyphs, &dict, &ctx.projection()?, &ctx.params()).context("annotating")?;
            let samples: Vec<_> = ann
                .accepted
                .iter()
                .flat_map(|a| {
                    a.labelled
                        .set
                        .masks
                        .iter()
                        .zip(&a.labelled.labels)
                        .map(|(m, l)| (l.clone(), m.mask.clone()))
                })
                .collect();
            let cfg = TrainConfig {
                epochs,
                lr: LrSchedule::Cosine(lr),
                tau: Tau::new(ctx.cfg.tau).context("tau")?,
                batch_size: batch,
                jitter: Some(2),
                seed,
            };
            let outcome = train_projection(&samples, &cfg).context("training")?;
            outcome.projection.save(&out).context("writing projection")?;
            if let Some(c) = curve {
                fs::write(&c, outcome.curve_csv()).context("writing loss curve")?;
            }
            let first = outcome.loss_curve.first().copied().unwrap_or(0.0);
            let last = outcome.loss_curve.last().copied().unwrap_or(0.0);
            println!("samples\t{}\nloss\t{first:.6}\t{last:.6}", samples.len());
        }
        Cmd::Annotate {
            out,
            log,
            plan,
            propagate,
        } => {
            let dict = ctx.dict()?;
            let manifest = ctx.manifest()?;
            let plan = load_plan(plan.as_ref())?;
            let proj = ctx.projection()?;
            let params = ctx.params();
            let glyphs = ctx.glyphs(&manifest, &train_records(&manifest, plan.as_ref()))?;
            let mut ann = annotate_corpus(&glyphs, &dict, &proj, &params).context("annotating")?;
            if propagate {
                let queries = ctx.glyphs(&manifest, &query_records(&manifest, plan.as_ref()))?;
                let features = queries
                    .par_iter()
                    .map(|g| -> anyhow::Result<Vec<_>> {
                        let masks = choose_masks(g, &params)?;
                        let set = MaskSet {
                            glyph_id: g.id.clone(),
                            source: masks.first().map_or(MaskSource::Coarse, |m| m.source),
                            masks,
                        };
                        (0..set.len())
                            .map(|i| Ok((set.component_id(i), embed_mask(&set.masks[i].mask, &proj)?)))
                            .collect()
                    })
                    .collect::<anyhow::Result<Vec<_>>>()?;
                for (id, f) in features.into_iter().flatten() {
                    ann.store.insert_unlabeled(id, f);
                }
                let n = ann
                    .store
                    .propagate(params.k, params.mode, ctx.cfg.chain)
                    .context("propagating")?;
                eprintln!("propagated {n} components");
            }
            ann.store.save(&out).context("writing store")?;
            if let Some(l) = log {
                fs::write(&l, ann.log_jsonl()).context("writing filter log")?;
            }
            let accepted = ann.log.iter().filter(|r| r.accepted.is_some()).count();
            println!(
                "glyphs\t{}\naccepted\t{accepted}\nitems\t{}",
                ann.log.len(),
                ann.store.len()
            );
        }
        Cmd::Reconstruct { ids, pred, out } => {
            let dict = ctx.dict()?;
            let fuzz = ctx.cfg.fuzz;
            let text = match (ids, pred) {
                (Some(ids), _) => {
                    let query = QueryForm::Sequence(tokenize(&ids).context("tokenizing IDS")?);
                    let result = match_sequence(&query, &dict, fuzz).context("matching")?;
                    serde_json::to_string(&CandidateLine {
                        glyph_id: "query".into(),
                        candidates: result.candidates,
                    })
                    .context("serializing")?
                        + "\n"
                }
                (None, Some(path)) => {
                    let mut seqs = import_predictions(&path, &dict.radical_vocabulary())
                        .with_context(|| format!("loading {}", path.display()))?;
                    seqs.sort_by(|a, b| a.seq.glyph_id.cmp(&b.seq.glyph_id));
                    let mut text = String::new();
                    for s in seqs {
                        let candidates = match s.seq.query() {
                            Some(q) => match_sequence(&q, &dict, fuzz).context("matching")?.candidates,
                            None => Vec::new(),
                        };
                        let line = CandidateLine {
                            glyph_id: s.seq.glyph_id,
                            candidates,
                        };
                        text.push_str(&serde_json::to_string(&line).context("serializing")?);
                        text.push('\n');
                    }
                    text
                }
                (None, None) => return Err(usage("one of --ids or --pred is required")),
            };
            emit(out.as_deref(), &text)?;
        }
        Cmd::Predict { plan, out } => {
            let manifest = ctx.manifest()?;
            let store = ctx.store()?;
            let proj = ctx.projection()?;
            let plan = load_plan(plan.as_ref())?;
            let glyphs = ctx.glyphs(&manifest, &query_records(&manifest, plan.as_ref()))?;
            let preds: Vec<TokenSeq> = predict_all(&glyphs, &store, &proj, &ctx.params()).context("predicting")?;
            emit(out.as_deref(), &predictions_jsonl(&preds))?;
        }
        Cmd::Augment { out, plan } => {
            let dict = ctx.dict()?;
            let manifest = ctx.manifest()?;
            let plan = load_plan(plan.as_ref())?;
            let glyphs = ctx.glyphs(&manifest, &train_records(&manifest, plan.as_ref()))?;
            let ann = annotate_corpus(&glyphs, &dict, &ctx.projection()?, &ctx.params()).context("annotating")?;
            let samples = augment_radicals(&ann.accepted).context("augmenting")?;
            write_augmented(&samples, &out).context("writing samples")?;
            fs::write(out.join("filter_log.jsonl"), ann.log_jsonl()).context("writing filter log")?;
            println!("samples\t{}", samples.len());
        }
        Cmd::Holdout { n, out } => {
            let plan = build_holdout(&ctx.manifest()?, n, seed).context("building holdout")?;
            emit(out.as_deref(), &(plan.to_json() + "\n"))?;
        }
        Cmd::Score {
            pred,
            plan,
            topk,
            out,
            tsv,
        } => {
            let dict = ctx.dict()?;
            let manifest = ctx.manifest()?;
            let plan = HoldoutPlan::load(&plan).with_context(|| format!("loading {}", plan.display()))?;
            let preds: Vec<TokenSeq> = import_predictions(&pred, &dict.radical_vocabulary())
                .with_context(|| format!("loading {}", pred.display()))?
                .into_iter()
                .map(|s| s.seq)
                .collect();
            let report = score(&preds, &manifest, &dict, &plan, ctx.cfg.fuzz, topk).context("scoring")?;
            emit(out.as_deref(), &(report.to_json() + "\n"))?;
            if let Some(t) = tsv {
                fs::write(&t, report.to_tsv()).context("writing table")?;
            }
        }
        Cmd::Ablate { plan, subsets, out } => {
            let dict = ctx.dict()?;
            let manifest = ctx.manifest()?;
            let plan = HoldoutPlan::load(&plan).with_context(|| format!("loading {}", plan.display()))?;
            let target = plan.source_period;
            let subsets: Vec<BTreeSet<Period>> = if subsets.is_empty() {
                let mut order: Vec<Period> = manifest.periods().into_iter().filter(|&p| p != target).collect();
                order.insert(0, target);
                (1..=order.len())
                    .map(|n| order[..n].iter().copied().collect())
                    .collect()
            } else {
                subsets
                    .iter()
                    .map(|s| parse_periods(s, '+').map(|v| v.into_iter().collect()))
                    .collect::<Result<_, _>>()?
            };
            let mut records = plan.train_records(&manifest, None);
            records.extend(plan.test_records(&manifest));
            let glyphs = ctx.glyphs(&manifest, &records)?;
            let proj = ctx.projection()?;
            let runner = KnnComposeRunner::new(&glyphs, &dict, &proj, ctx.params());
            let table =
                ablation_matrix(&manifest, &dict, &plan, &subsets, &runner, ctx.cfg.fuzz).context("ablation")?;
            print!("{}", table.to_tsv());
            if let Some(o) = out {
                fs::write(&o, serde_json::to_string_pretty(&table).context("serializing")? + "\n")
                    .context("writing table")?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\nRun `decipher --help` for usage.");
            ExitCode::from(2)
        }
        Err(CliError::Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
