use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde_json::Value;
use triage_core::calibration::{
    calibrate_categories, calibrate_relevance, CategoryCalibration, Estimator, SelectionMode, StagingRecord,
    ThresholdPolicy,
};
use triage_core::classifier::{
    examples_from_store, score_pending, train_and_evaluate, Featurizer, LinearScorer, RecordedScorer, TrainConfig,
};
use triage_core::ingest::{manual_upload, ConnectorConfig, CursorStore, Scheduler, UploadOutcome};
use triage_core::monitor::{
    audit_missing_labels, bucket_metrics, detect_drift, fresh_label_count, render_audit, retraining_trigger,
    reviewed_items, write_metrics_csv, write_series_csv, DriftRule, RetrainPolicy,
};
use triage_core::shadow::{category_discrepancy, comparison_report, shadow_run, CategoryEval, DiscrepancyRule, PipelineConfig, StageCounts};
use triage_core::store::{load_jsonl, Store, StoreData, ARTICLES, DECISIONS};
use triage_core::types::{Article, Category, Language, ModelArtifact, Prediction, ReviewDecision, Source, Stage};

use crate::{
    AuditArgs, CalibrateArgs, CliError, FixturesArgs, IngestArgs, MonitorArgs, Outcome, ReportArgs, ServeArgs,
    ShadowArgs, TrainArgs,
};

type CmdResult = Result<Outcome, CliError>;

fn parse<T: std::str::FromStr>(flag: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| CliError::invalid(format!("--{flag}: {e}")))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    if !path.exists() {
        return Err(CliError::invalid(format!("{}: no such file", path.display())));
    }
    load_jsonl(path).map_err(CliError::invalid)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(CliError::internal)?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
}

fn open_existing(dir: &Path) -> Result<Store, CliError> {
    if !dir.is_dir() {
        return Err(CliError::invalid(format!("{}: not a directory", dir.display())));
    }
    Store::open_read_only(dir).map_err(CliError::invalid)
}

fn resolve_artifact(store: &StoreData, requested: Option<String>) -> Result<String, CliError> {
    match requested {
        Some(id) => Ok(id),
        None => store
            .active_artifact(Stage::Prod)
            .map(|a| a.artifact_id.clone())
            .ok_or_else(|| CliError::invalid("no --artifact given and the store has no production artifact")),
    }
}

pub(crate) fn ingest(args: IngestArgs) -> CmdResult {
    let mut store = Store::open(&args.store).map_err(CliError::invalid)?;
    let scorer = if args.score {
        let artifact = resolve_artifact(&store, None)?;
        let bytes = store.artifact_weights(&artifact).map_err(CliError::internal)?;
        Some(LinearScorer::from_bytes(&bytes).map_err(CliError::internal)?)
    } else {
        None
    };
    let mut out = String::new();
    if !args.replay.is_empty() {
        let mut connectors = Vec::new();
        for path in &args.replay {
            if !path.is_file() {
                return Err(CliError::invalid(format!("{}: no such file", path.display())));
            }
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("replay");
            let c = ConnectorConfig::replay(id, path, args.rate).build().map_err(CliError::invalid)?;
            connectors.push(c);
        }
        let cursors = CursorStore::for_store(&store).map_err(CliError::internal)?;
        let mut scheduler = Scheduler::new(connectors, cursors).map_err(CliError::invalid)?;
        let report = scheduler.run_until_drained(&mut store, args.max_ticks).map_err(CliError::internal)?;
        out.push_str(&report.render());
    }
    if let Some(path) = &args.manual {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let outcomes = manual_upload(&mut store, &lines, Utc::now()).map_err(CliError::internal)?;
        let stored = outcomes.iter().filter(|o| matches!(o.outcome, UploadOutcome::Stored)).count();
        out.push_str(&format!("manual: {} records, {stored} stored\n", outcomes.len()));
        for o in outcomes.iter().filter(|o| !matches!(o.outcome, UploadOutcome::Stored)) {
            out.push_str(&format!("manual record {}: {}\n", o.index, serde_json::to_string(&o.outcome).unwrap_or_default()));
        }
    }
    if let Some(scorer) = &scorer {
        let report = score_pending(&mut store, scorer).map_err(CliError::internal)?;
        out.push_str(&format!("scored {} deferred {} failed {}\n", report.scored, report.deferred, report.failed));
    }
    Ok(Outcome::ok(out))
}

fn parse_categories(values: &[String]) -> Result<Vec<Category>, CliError> {
    values.iter().map(|v| parse("mask", v)).collect()
}

pub(crate) fn train(args: TrainArgs, seed: u64) -> CmdResult {
    let masked = parse_categories(&args.mask)?;
    let stage: Stage = parse("stage", &args.stage)?;
    let config = TrainConfig {
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        l2: args.l2,
        seed,
        hash_bits: args.hash_bits,
    };
    if !(1..=24).contains(&args.hash_bits) {
        return Err(CliError::invalid("--hash-bits: must lie within 1..=24"));
    }
    let data = open_existing(&args.data)?;
    let examples = examples_from_store(&data, &Featurizer::new(args.hash_bits), &masked);
    let (scorer, summary) = train_and_evaluate(examples, &config, args.train_fraction, &masked).map_err(CliError::invalid)?;
    if let Some(path) = &args.out {
        std::fs::write(path, scorer.to_bytes()).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))?;
    }
    if let Some(dir) = &args.publish {
        let mut store = Store::open(dir).map_err(CliError::invalid)?;
        let meta = ModelArtifact {
            artifact_id: scorer.id().to_owned(),
            stage,
            created_at: Utc::now(),
            config_digest: config.digest(),
            weights_ref: String::new(),
        };
        store.publish_artifact(meta, &scorer.to_bytes()).map_err(CliError::internal)?;
        store.activate(scorer.id(), stage).map_err(CliError::internal)?;
    }
    if let Some(path) = &args.json {
        write_json(path, &summary)?;
    }
    Ok(Outcome::ok(summary.render()).with_report(args.json))
}

fn load_policy(path: &Path) -> Result<ThresholdPolicy, CliError> {
    ThresholdPolicy::load(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

pub(crate) fn calibrate(args: CalibrateArgs) -> CmdResult {
    let estimator: Estimator = parse("estimator", &args.estimator)?;
    let mode = SelectionMode::parse(&args.mode, args.floor).map_err(|e| CliError::invalid(format!("--mode/--floor: {e}")))?;
    if args.window_days == 0 {
        return Err(CliError::invalid("--window-days: must be positive"));
    }
    let records: Vec<StagingRecord> = read_jsonl(&args.sample)?;
    let mut policy = match (&args.policy, args.apply) {
        (Some(p), true) => Some(load_policy(p)?),
        _ => None,
    };
    let (stdout, feasible, json): (String, bool, Value) = match args.scope.as_str() {
        "relevance" => {
            let language: Language = match &args.language {
                Some(l) => parse("language", l)?,
                None => return Err(CliError::invalid("--language is required for relevance calibration")),
            };
            if !language.is_scored() {
                return Err(CliError::invalid(format!("--language: `{language}` is not on the scoring path")));
            }
            let cal = calibrate_relevance(
                &records,
                language,
                mode,
                args.window_days,
                estimator,
                &args.options,
                args.baseline_weekly,
            )
            .map_err(CliError::invalid)?;
            if let Some(p) = policy.as_mut() {
                cal.apply_to(p);
            }
            let json = serde_json::json!({
                "language": language,
                "mode": mode,
                "labeled": cal.labeled,
                "options": cal.records(),
                "selected": cal.selection.as_ref().ok(),
                "error": cal.selection.as_ref().err().map(|e| e.to_string()),
            });
            (cal.render(), cal.selection.is_ok(), json)
        }
        "categories" => {
            if !matches!(mode, SelectionMode::MinPrecision(_)) {
                return Err(CliError::invalid("--mode: category calibration supports min-precision only"));
            }
            let cal: CategoryCalibration =
                calibrate_categories(&records, args.floor, args.window_days).map_err(CliError::invalid)?;
            if let Some(p) = policy.as_mut() {
                cal.apply_to(p);
            }
            let json = serde_json::json!({ "floor": cal.floor, "thresholds": cal.thresholds() });
            (cal.render(), cal.is_feasible(), json)
        }
        other => return Err(CliError::invalid(format!("--scope: unknown scope `{other}` (expected relevance or categories)"))),
    };
    if let (Some(p), Some(path)) = (&policy, &args.policy) {
        p.validate().map_err(CliError::invalid)?;
        p.save(path).map_err(CliError::internal)?;
    }
    if let Some(path) = &args.json {
        write_json(path, &json)?;
    }
    let outcome = if feasible {
        Outcome::ok(stdout)
    } else {
        Outcome::flagged(stdout, format!("error: no threshold reaches the {:.2} floor\n", args.floor))
    };
    Ok(outcome.with_report(args.json))
}

fn parse_sources(flag: &str, values: &[String]) -> Result<BTreeSet<Source>, CliError> {
    values.iter().map(|v| parse(flag, v)).collect()
}

fn decision_map(decisions: Vec<ReviewDecision>) -> HashMap<String, ReviewDecision> {
    // latest decision per article wins
    let mut map = HashMap::new();
    for d in decisions {
        map.insert(d.article_id.clone(), d);
    }
    map
}

pub(crate) fn shadow(args: ShadowArgs) -> CmdResult {
    let baseline_sources = parse_sources("baseline-sources", &args.baseline_sources)?;
    let candidate_sources = parse_sources("candidate-sources", &args.candidate_sources)?;
    if args.period_days.is_nan() || args.period_days <= 0.0 {
        return Err(CliError::invalid("--period-days: must be positive"));
    }
    let dir = &args.dir;
    let articles: Vec<Article> = read_jsonl(&dir.join(ARTICLES))?;
    let baseline_preds: Vec<Prediction> = read_jsonl(&dir.join("baseline_predictions.jsonl"))?;
    let candidate_preds: Vec<Prediction> = read_jsonl(&dir.join("candidate_predictions.jsonl"))?;
    let decisions = decision_map(read_jsonl(&dir.join(DECISIONS))?);
    let baseline_policy = load_policy(&dir.join("baseline_policy.json"))?;
    let candidate_policy = load_policy(&dir.join("candidate_policy.json"))?;

    let artifact_of = |preds: &[Prediction]| preds.first().map(|p| p.artifact_id.clone()).unwrap_or_default();
    let base_scorer = RecordedScorer::new(artifact_of(&baseline_preds), baseline_preds);
    let cand_scorer = RecordedScorer::new(artifact_of(&candidate_preds), candidate_preds);
    let baseline = PipelineConfig {
        label: "baseline".into(),
        scorer: &base_scorer,
        policy: baseline_policy,
        sources: baseline_sources,
    };
    let candidate = PipelineConfig {
        label: "candidate".into(),
        scorer: &cand_scorer,
        policy: candidate_policy,
        sources: candidate_sources,
    };
    let outcome = shadow_run(&articles, &decisions, &baseline, &candidate, args.period_days);
    let report = comparison_report(&outcome.baseline, &outcome.candidate).map_err(CliError::invalid)?;
    let mut stdout = report.render();
    if !outcome.excluded.is_empty() {
        stdout.push_str(&format!("excluded {} articles with scoring failures\n", outcome.excluded.len()));
    }
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out).map_err(|e| CliError::internal(format!("{}: {e}", out.display())))?;
        write_json(&out.join("baseline.json"), &outcome.baseline)?;
        write_json(&out.join("deployment.json"), &outcome.candidate)?;
    }
    Ok(Outcome::ok(stdout).with_report(args.out))
}

pub(crate) fn report(args: ReportArgs) -> CmdResult {
    if let (Some(b), Some(d)) = (&args.baseline, &args.deployment) {
        let baseline: StageCounts = read_json(b)?;
        let deployment: StageCounts = read_json(d)?;
        let report = comparison_report(&baseline, &deployment).map_err(CliError::invalid)?;
        if let Some(path) = &args.json {
            write_json(path, &report)?;
        }
        return Ok(Outcome::ok(report.render()).with_report(args.json));
    }
    if let (Some(o), Some(l)) = (&args.offline, &args.live) {
        if !(args.max_gap >= 0.0 && args.max_gap <= 1.0) {
            return Err(CliError::invalid("--max-gap: must lie within [0, 1]"));
        }
        let offline: CategoryEval = read_json(o)?;
        let live: CategoryEval = read_json(l)?;
        let rule = DiscrepancyRule { max_gap: args.max_gap, two_sided: args.two_sided };
        let report = category_discrepancy(&offline, &live, rule);
        if let Some(path) = &args.json {
            write_json(path, &report)?;
        }
        let outcome = if report.has_flags() {
            let n = report.flagged().count();
            Outcome::flagged(report.render(), format!("{n} cells flagged\n"))
        } else {
            Outcome::ok(report.render())
        };
        return Ok(outcome.with_report(args.json));
    }
    Err(CliError::invalid("give --baseline and --deployment, or --offline and --live"))
}

fn parse_instant(flag: &str, value: &str) -> Result<DateTime<Utc>, CliError> {
    DateTime::parse_from_rfc3339(value)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| CliError::invalid(format!("--{flag}: {e}")))
}

fn write_csv(path: &Path, f: impl FnOnce(std::fs::File) -> Result<(), triage_core::monitor::MonitorError>) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))?;
    f(file).map_err(CliError::internal)
}

pub(crate) fn monitor(args: MonitorArgs) -> CmdResult {
    if !(args.delta >= 0.0 && args.delta <= 1.0) {
        return Err(CliError::invalid("--delta: must lie within [0, 1]"));
    }
    let since = args.fresh_since.as_deref().map(|v| parse_instant("fresh-since", v)).transpose()?;
    let store = open_existing(&args.store)?;
    let policy = load_policy(&args.policy)?;
    let artifact = resolve_artifact(&store, args.artifact)?;
    let since = since.or_else(|| store.artifact(&artifact).map(|a| a.created_at));

    let buckets = bucket_metrics(&reviewed_items(&store, &artifact), &policy);
    let rule = DriftRule { delta: args.delta, min_history: args.min_history, min_support: args.min_support };
    let drift = detect_drift(&buckets, rule);
    let fresh = fresh_label_count(&store, since);
    let retrain = retraining_trigger(
        &drift.alerts,
        fresh,
        &RetrainPolicy { min_fresh_labels: args.min_fresh, ..RetrainPolicy::default() },
    );
    if let Some(path) = &args.metrics_csv {
        write_csv(path, |f| write_metrics_csv(&buckets, f))?;
    }
    if let Some(path) = &args.series_csv {
        write_csv(path, |f| write_series_csv(&buckets, f))?;
    }
    let stdout = drift.render() + &retrain.render();
    if drift.alerts.is_empty() {
        Ok(Outcome::ok(stdout))
    } else {
        Ok(Outcome::flagged(stdout, format!("{} drift alerts\n", drift.alerts.len())))
    }
}

pub(crate) fn audit(args: AuditArgs) -> CmdResult {
    let category: Category = parse("category", &args.category)?;
    let store = open_existing(&args.store)?;
    let artifact = resolve_artifact(&store, args.artifact)?;
    let predictions: Vec<Prediction> =
        store.predictions().iter().filter(|p| p.artifact_id == artifact).cloned().collect();
    let decisions: HashMap<String, ReviewDecision> =
        store.consensus_decisions().into_iter().map(|d| (d.article_id.clone(), d)).collect();
    let entries = audit_missing_labels(&predictions, &decisions, category, args.threshold).map_err(CliError::invalid)?;
    Ok(Outcome::ok(render_audit(&entries, category, args.threshold)))
}

pub(crate) fn serve(args: ServeArgs) -> CmdResult {
    let config = triage_service::ServiceConfig::load(&args.config).map_err(CliError::invalid)?;
    match triage_service::run(config) {
        Ok(()) => Ok(Outcome::ok(String::new())),
        Err(triage_service::ServeError::Config(e)) => Err(CliError::invalid(e)),
        Err(e @ triage_service::ServeError::Bind { .. }) => Err(CliError::invalid(e)),
        Err(e) => Err(CliError::internal(e)),
    }
}

pub(crate) fn fixtures(args: FixturesArgs, seed: u64) -> CmdResult {
    let n = triage_core::synth::write_fixtures(&args.out, seed)
        .map_err(|e| CliError::internal(format!("{}: {e}", args.out.display())))?;
    Ok(Outcome::ok(format!("wrote {n} files under {}\n", args.out.display())))
}
