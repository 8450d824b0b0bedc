use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use raso_core::backend::ResponseCache;
use raso_core::metric::CoverageReport;
use raso_core::model::LoadOptions;
use raso_core::pipeline::{
    read_choices, read_rationales, read_selections, ShotSources, Stage, StageOutput, StagePlan,
    StageSummary, CHOICES, COTS, SELECTIONS,
};
use raso_core::{
    coverage, ensemble_choices, evaluate_run, Backend, BackendRegistry, ChoiceList, Dataset,
    Pipeline, PipelineError, Retriever, RunDir, RunManifest, Selector, Split, TemplateSet,
};

use crate::config::RunConfig;
use crate::{CacheAction, Cli, Command};

/// `println!` that reports a closed stdout instead of panicking.
macro_rules! outln {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        writeln!(std::io::stdout(), $($arg)*)?;
    }};
}

/// A command-line mistake; reported with exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

struct Ctx {
    config: RunConfig,
    backend: Option<String>,
    split: Split,
    shots: Option<usize>,
    dry_run: bool,
}

pub fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let mut config = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = g.out {
        config.out = Some(out);
    }
    if let Some(dir) = g.template_dir {
        config.template_dir = Some(dir);
    }
    if let Some(p) = g.parallel {
        if p == 0 {
            return Err(usage("--parallel must be at least 1"));
        }
        config.pipeline.parallel = p;
    }
    if g.seed.is_some() {
        config.seed = g.seed;
    }
    if g.run_id.is_some() {
        config.run_id = g.run_id;
    }
    if g.shots == Some(0) {
        return Err(usage("--shots must be at least 1"));
    }
    let dry_run_ok = matches!(
        cli.command,
        Command::GenChoices | Command::GenCot | Command::Cache { action: CacheAction::Warm }
    );
    if g.dry_run && !dry_run_ok {
        return Err(usage("--dry-run applies to gen-choices, gen-cot and cache warm"));
    }
    let ctx = Ctx {
        config,
        backend: g.backend,
        split: g.split,
        shots: g.shots,
        dry_run: g.dry_run,
    };

    match cli.command {
        Command::Ingest => ingest(&ctx),
        Command::GenChoices => generate(&ctx, Stage::Choices),
        Command::GenCot => generate(&ctx, Stage::Cots),
        Command::Select {
            selector,
            shots_from,
        } => select(&ctx, selector, shots_from.as_deref()),
        Command::Ensemble { runs } => ensemble(&ctx, &runs),
        Command::Coverage { runs } => coverage_cmd(&ctx, &runs),
        Command::Evaluate => evaluate(&ctx),
        Command::Cache { action } => cache(&ctx, action),
        Command::Retrieve { question } => retrieve(&ctx, question),
    }
}

impl Ctx {
    fn dataset(&self) -> Result<Dataset> {
        let paths = self
            .config
            .dataset
            .as_ref()
            .ok_or_else(|| usage("no [dataset] section; pass --config"))?;
        let (dataset, report) = Dataset::load(paths, &LoadOptions::default())?;
        for m in &report.missing {
            log::warn!("{m}");
        }
        Ok(dataset)
    }

    fn templates(&self) -> Result<TemplateSet> {
        match &self.config.template_dir {
            Some(dir) => Ok(TemplateSet::from_dir(dir)?),
            None => Ok(TemplateSet::builtin()),
        }
    }

    fn out_dir(&self) -> PathBuf {
        self.config.out_dir()
    }

    fn run_dir(&self) -> Result<RunDir> {
        let id = self
            .config
            .run_id
            .as_deref()
            .ok_or_else(|| usage("no run id; pass --run-id or set run_id in the config"))?;
        Ok(RunDir::create(&self.out_dir(), id)?)
    }

    /// A run id under `--out`, or a path to a run directory.
    fn resolve_run(&self, spec: &str) -> Result<RunDir> {
        let as_path = Path::new(spec);
        let dir = if as_path.is_dir() {
            as_path.to_path_buf()
        } else {
            self.out_dir().join(spec)
        };
        RunDir::open(&dir).with_context(|| format!("run `{spec}`"))
    }

    fn backend(&self) -> Result<Backend> {
        let decl = self.config.backend(self.backend.as_deref()).map_err(|e| usage(e.to_string()))?;
        let cache_dir = self.config.cache_dir();
        if !self.dry_run {
            fs::create_dir_all(&cache_dir)
                .with_context(|| format!("creating {}", cache_dir.display()))?;
        }
        let mut registry = BackendRegistry::with_cache_dir(cache_dir);
        Ok(registry.register(decl.name(), decl.to_spec()?)?)
    }

    fn pipeline_config(&self, stage: Option<Stage>) -> raso_core::PipelineConfig {
        let mut config = self.config.pipeline.clone();
        if let Some(n) = self.shots {
            match (stage, self.split) {
                (Some(Stage::Select), _) => config.select_shots = n,
                (_, Split::Test) => config.shots_test = n,
                (_, Split::Train) => config.shots_train = n,
            }
        }
        config
    }

    /// Merges one stage summary into the run manifest.
    fn record_stage(
        &self,
        run: &RunDir,
        templates: &TemplateSet,
        key: &str,
        summary: StageSummary,
    ) -> Result<()> {
        let mut manifest = run.read_manifest()?.unwrap_or_else(|| RunManifest {
            run_id: run.run_id().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            template_version: String::new(),
            cot_digest: String::new(),
            config: serde_json::Value::Null,
            stages: BTreeMap::new(),
        });
        manifest.tool_version = env!("CARGO_PKG_VERSION").to_string();
        manifest.template_version = templates.version.clone();
        manifest.cot_digest = templates.cot_digest();
        manifest.config = serde_json::to_value(&self.config)?;
        manifest.stages.insert(key.to_string(), summary);
        run.write_manifest(&manifest)?;
        Ok(())
    }
}

fn summarize<T>(out: &StageOutput<T>, backend: Option<&Backend>) -> StageSummary {
    StageSummary {
        backend: backend.map(|b| b.name().to_string()),
        model_id: backend.map(|b| b.model_id().to_string()),
        inputs: BTreeMap::new(),
        attempted: out.attempted,
        succeeded: out.results.len(),
        failed: out.failures(),
        flagged: out.flags(),
        requests: out.requests,
    }
}

fn print_summary(stage: &str, s: &StageSummary, backend: Option<&Backend>) -> Result<()> {
    let mut line = format!(
        "{stage}: {} attempted, {} succeeded, {} failed, {} flagged, {} requests",
        s.attempted, s.succeeded, s.failed, s.flagged, s.requests
    );
    if let Some(b) = backend {
        let st = b.stats();
        line.push_str(&format!(" ({} wire calls, {} cache hits)", st.wire_calls, st.cache_hits));
    }
    outln!("{line}");
    Ok(())
}

fn print_plan(stage: Stage, split: Split, plan: &StagePlan) -> Result<()> {
    outln!(
        "{stage} ({split}): {} questions, {} prompts, {} cached, {} estimated wire calls, {} unbuildable",
        plan.questions, plan.prompts, plan.cached, plan.wire_calls, plan.unbuildable
    );
    Ok(())
}

/// Records an aborted stage's errors before propagating.
fn on_abort(run: &RunDir, err: PipelineError) -> anyhow::Error {
    if let PipelineError::Aborted { stage, errors, .. } = &err {
        if let Err(e) = run.record_errors(*stage, errors) {
            log::error!("could not record errors: {e}");
        }
    }
    err.into()
}

fn ingest(ctx: &Ctx) -> Result<()> {
    let paths = ctx
        .config
        .dataset
        .as_ref()
        .ok_or_else(|| usage("no [dataset] section; pass --config"))?;
    let (_, report) = Dataset::load(paths, &LoadOptions::default())?;
    outln!(
        "train: {}\ntest: {}\ncontexts: {}\nimage embeddings: {}\nquestion embeddings: {}\nduplicate tags dropped: {}\nmissing inputs: {}",
        report.train,
        report.test,
        report.contexts,
        report.image_embeddings,
        report.question_embeddings,
        report.duplicate_tags_dropped,
        report.missing.len()
    );
    for m in &report.missing {
        outln!("  {m}");
    }
    Ok(())
}

fn generate(ctx: &Ctx, stage: Stage) -> Result<()> {
    let dataset = ctx.dataset()?;
    let templates = ctx.templates()?;
    let backend = ctx.backend()?;
    let pipeline = Pipeline::new(&dataset, &templates, ctx.pipeline_config(Some(stage)))?;
    if ctx.dry_run {
        let plan = match stage {
            Stage::Choices => pipeline.plan_choices(ctx.split, &backend)?,
            _ => pipeline.plan_cots(ctx.split, &backend)?,
        };
        print_plan(stage, ctx.split, &plan)?;
        return Ok(());
    }
    let run = ctx.run_dir()?;
    let mut summary = match stage {
        Stage::Choices => {
            let out = pipeline
                .generate_choices(ctx.split, &backend)
                .map_err(|e| on_abort(&run, e))?;
            run.write_choices(&out.results)?;
            run.record_errors(stage, &out.errors)?;
            summarize(&out, Some(&backend))
        }
        _ => {
            let out = pipeline
                .generate_cots(ctx.split, &backend)
                .map_err(|e| on_abort(&run, e))?;
            run.write_cots(&out.results)?;
            run.record_errors(stage, &out.errors)?;
            summarize(&out, Some(&backend))
        }
    };
    summary.inputs.insert("split".into(), ctx.split.to_string());
    summary
        .inputs
        .insert("shots".into(), pipeline.config().shots_for(ctx.split).to_string());
    ctx.record_stage(&run, &templates, &stage.to_string(), summary.clone())?;
    print_summary(&stage.to_string(), &summary, Some(&backend))?;
    Ok(())
}

fn select(ctx: &Ctx, selector: Selector, shots_from: Option<&str>) -> Result<()> {
    let dataset = ctx.dataset()?;
    let templates = ctx.templates()?;
    let run = ctx.run_dir()?;
    let pipeline = Pipeline::new(&dataset, &templates, ctx.pipeline_config(Some(Stage::Select)))?;
    let choices = read_choices(&run.file(CHOICES)).context("run has no choices; run gen-choices")?;
    let wants_rationales =
        selector == Selector::PromptSelect && pipeline.config().select_with_rationale;
    let rationales = if wants_rationales {
        Some(read_rationales(&run.file(COTS)).context("run has no rationales; run gen-cot")?)
    } else {
        None
    };

    let (shot_choices, shot_cots) = match shots_from {
        Some(spec) => {
            let src = ctx.resolve_run(spec)?;
            let c = src.file(CHOICES);
            let r = src.file(COTS);
            (
                c.exists().then(|| read_choices(&c)).transpose()?,
                r.exists().then(|| read_rationales(&r)).transpose()?,
            )
        }
        None => (None, None),
    };
    let sources = ShotSources {
        choices: shot_choices.as_ref(),
        rationales: shot_cots.as_ref(),
    };

    let backend = match selector {
        Selector::PromptSelect => Some(ctx.backend()?),
        _ => None,
    };
    let out = pipeline
        .select_answers(&choices, rationales.as_ref(), sources, selector, backend.as_ref())
        .map_err(|e| on_abort(&run, e))?;
    run.write_selections(&out.results)?;
    run.record_errors(Stage::Select, &out.errors)?;
    let mut summary = summarize(&out, backend.as_ref());
    summary.inputs.insert("selector".into(), selector.to_string());
    summary
        .inputs
        .insert("shots".into(), pipeline.config().select_shots.to_string());
    if let Some(spec) = shots_from {
        summary.inputs.insert("shots_from".into(), spec.to_string());
    }
    ctx.record_stage(&run, &templates, &Stage::Select.to_string(), summary.clone())?;
    print_summary("select", &summary, backend.as_ref())?;
    Ok(())
}

fn ensemble(ctx: &Ctx, specs: &[String]) -> Result<()> {
    let target = ctx.run_dir()?;
    let sources = specs
        .iter()
        .map(|s| ctx.resolve_run(s))
        .collect::<Result<Vec<_>>>()?;
    if sources
        .iter()
        .any(|r| fs::canonicalize(r.path()).ok() == fs::canonicalize(target.path()).ok())
    {
        return Err(usage("the ensemble output run cannot also be an input"));
    }
    let runs = sources
        .iter()
        .map(|r| Ok((r.run_id(), read_choices(&r.file(CHOICES))?)))
        .collect::<Result<Vec<(&str, BTreeMap<_, ChoiceList>)>>>()?;
    let borrowed: Vec<_> = runs.iter().map(|(n, m)| (*n, m)).collect();
    let merged = ensemble_choices(&borrowed)?;
    target.write_choices(&merged)?;

    let names: Vec<&str> = runs.iter().map(|(n, _)| *n).collect();
    let summary = StageSummary {
        inputs: BTreeMap::from([("runs".to_string(), names.join(","))]),
        attempted: merged.len(),
        succeeded: merged.len(),
        ..Default::default()
    };
    ctx.record_stage(&target, &ctx.templates()?, "ensemble", summary)?;
    outln!(
        "ensemble: {} questions from {} into {}",
        merged.len(),
        names.join(" + "),
        target.run_id()
    );
    Ok(())
}

fn coverage_cmd(ctx: &Ctx, specs: &[String]) -> Result<()> {
    let dataset = ctx.dataset()?;
    let runs = if specs.is_empty() {
        vec![ctx.run_dir()?]
    } else {
        specs
            .iter()
            .map(|s| ctx.resolve_run(s))
            .collect::<Result<Vec<_>>>()?
    };
    let mut reports: BTreeMap<String, CoverageReport> = BTreeMap::new();
    let mut table = CoverageReport::table_header();
    for run in &runs {
        let choices = read_choices(&run.file(CHOICES))
            .with_context(|| format!("run `{}` has no choices", run.run_id()))?;
        let report = coverage(&choices, &dataset)?;
        run.update_report("coverage", serde_json::to_value(&report)?)?;
        table.push('\n');
        table.push_str(&report.table_row(run.run_id()));
        reports.insert(run.run_id().to_string(), report);
    }
    outln!("{table}\n");
    outln!("{}", serde_json::to_string_pretty(&reports)?);
    Ok(())
}

fn evaluate(ctx: &Ctx) -> Result<()> {
    let dataset = ctx.dataset()?;
    let run = ctx.run_dir()?;
    let selections =
        read_selections(&run.file(SELECTIONS)).context("run has no selections; run select")?;
    let eval = evaluate_run(&selections, &dataset)?;
    let value = serde_json::to_value(eval)?;
    run.update_report("evaluation", value.clone())?;
    let fallbacks = selections
        .values()
        .filter(|s| s.matched_choice_rank.is_none())
        .count();
    outln!(
        "accuracy: {:.1}% over {} questions ({fallbacks} unmatched selector outputs)\n",
        eval.accuracy * 100.0,
        eval.n
    );
    outln!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn cache(ctx: &Ctx, action: CacheAction) -> Result<()> {
    match action {
        CacheAction::Stats | CacheAction::Verify => {
            let decls: Vec<_> = match &ctx.backend {
                Some(_) => vec![ctx
                    .config
                    .backend(ctx.backend.as_deref())
                    .map_err(|e| usage(e.to_string()))?],
                None => ctx.config.backends.iter().collect(),
            };
            if decls.is_empty() {
                return Err(usage("no backends declared in the config"));
            }
            let mut bad = Vec::new();
            outln!("{:<16} {:>8} {:>8} {:>10}  path", "backend", "records", "unique", "mismatched");
            for decl in decls {
                let path = ctx.config.cache_dir().join(format!("{}.jsonl", decl.name()));
                let report = if path.exists() {
                    ResponseCache::verify(&path)?
                } else {
                    raso_core::backend::VerifyReport {
                        records: 0,
                        unique_keys: 0,
                        mismatched_lines: Vec::new(),
                    }
                };
                outln!(
                    "{:<16} {:>8} {:>8} {:>10}  {}",
                    decl.name(),
                    report.records,
                    report.unique_keys,
                    report.mismatched_lines.len(),
                    path.display()
                );
                if !report.is_ok() {
                    bad.push(format!("{} (lines {:?})", decl.name(), report.mismatched_lines));
                }
            }
            if matches!(action, CacheAction::Verify) && !bad.is_empty() {
                anyhow::bail!("cache keys do not match their requests: {}", bad.join(", "));
            }
            Ok(())
        }
        CacheAction::Warm => warm(ctx),
    }
}

fn warm(ctx: &Ctx) -> Result<()> {
    let dataset = ctx.dataset()?;
    let templates = ctx.templates()?;
    let backend = ctx.backend()?;
    let pipeline = Pipeline::new(&dataset, &templates, ctx.pipeline_config(None))?;
    if ctx.dry_run {
        print_plan(Stage::Choices, ctx.split, &pipeline.plan_choices(ctx.split, &backend)?)?;
        print_plan(Stage::Cots, ctx.split, &pipeline.plan_cots(ctx.split, &backend)?)?;
        return Ok(());
    }
    let choices = pipeline.generate_choices(ctx.split, &backend)?;
    let cots = pipeline.generate_cots(ctx.split, &backend)?;
    let selections = pipeline.select_answers(
        &choices.results,
        Some(&cots.results),
        ShotSources::default(),
        Selector::PromptSelect,
        Some(&backend),
    )?;
    let stats = backend.stats();
    outln!(
        "warm ({}): {} requests, {} wire calls, {} cache hits, {} failures",
        ctx.split,
        choices.requests + cots.requests + selections.requests,
        stats.wire_calls,
        stats.cache_hits,
        stats.failures
    );
    Ok(())
}

fn retrieve(ctx: &Ctx, question: raso_core::QuestionId) -> Result<()> {
    let dataset = ctx.dataset()?;
    let target = dataset
        .instance(question)
        .ok_or_else(|| usage(format!("question {question} is not in the dataset")))?;
    let n = ctx
        .shots
        .unwrap_or_else(|| ctx.config.pipeline.shots_for(target.split));
    let found = Retriever::new(ctx.config.pipeline.retriever).retrieve(target, &dataset, n)?;
    outln!("{} question {}: {}", target.split, target.question_id, target.question);
    outln!("{:>4} {:>10} {:>8}  question", "rank", "id", "score");
    for (rank, s) in found.shots.iter().enumerate() {
        let inst = dataset
            .instance(s.train_question_id)
            .expect("retrieved ids come from the dataset");
        outln!(
            "{:>4} {:>10} {:>8.4}  {}",
            rank + 1,
            s.train_question_id,
            s.score,
            inst.question
        );
    }
    if found.skipped > 0 {
        outln!("skipped {} candidates without usable embeddings", found.skipped);
    }
    Ok(())
}
