//! Batch pipeline over a CSV bundle. Every report starts with `#` comment
//! lines carrying the seed and the config hash.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use happimeter_core::analytics::{
    correlation_matrix, descriptive_stats, hourly_profile, table3_columns, Direction, LevelStats,
};
use happimeter_core::domain::{ParticipantProfile, UserId};
use happimeter_core::featurize::LabeledExample;
use happimeter_core::forest::{
    accuracy, cohens_kappa, cross_validate, feature_importance, train_forest, Dataset, EvaluationReport, ForestModel,
    Scope, Target,
};
use happimeter_core::pipeline::{group_sensors, influence_scores, join_examples, zones_from_profiles, JoinOutput, WeatherTable};
use happimeter_core::sim::{simulate, Cohort, CohortSpec};
use happimeter_server::config::Config;
use happimeter_server::csvio::{read_bundle, write_bundle, Bundle};

use crate::CliError;

pub const MANIFEST_JSON: &str = "manifest.json";
pub const MODELS_DIR: &str = "models";

/// One output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub name: String,
    pub contents: String,
}

/// A loaded bundle joined to feature vectors under one config.
pub struct Inputs {
    pub config: Config,
    pub bundle: Bundle,
    pub joined: JoinOutput,
    pub profiles: HashMap<UserId, ParticipantProfile>,
}

impl Inputs {
    pub fn load(dir: &Path, config: Config) -> Result<Inputs, CliError> {
        Inputs::from_bundle(read_bundle(dir)?, config)
    }

    pub fn from_bundle(bundle: Bundle, config: Config) -> Result<Inputs, CliError> {
        let joined = join(&bundle, &config, config.featurize.vmc_window_hours)?;
        let profiles = bundle.profiles.iter().map(|p| (p.user.clone(), p.clone())).collect();
        Ok(Inputs { config, bundle, joined, profiles })
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.joined.examples
    }

    pub fn header(&self) -> String {
        format!("# seed: {}\n# config_hash: {}\n", self.config.forest.seed, self.config.hash())
    }

    fn report(&self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<Report, CliError> {
        self.report_with(name, "", header, rows)
    }

    fn report_with(&self, name: &str, comments: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<Report, CliError> {
        let mut w = csv::Writer::from_writer((self.header() + comments).into_bytes());
        let internal = |e: csv::Error| CliError::Internal(e.to_string());
        w.write_record(header).map_err(internal)?;
        for r in rows {
            w.write_record(&r).map_err(internal)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
        let contents = String::from_utf8(bytes).map_err(|e| CliError::Internal(e.to_string()))?;
        Ok(Report { name: name.into(), contents })
    }
}

fn join(bundle: &Bundle, config: &Config, vmc_window_hours: i64) -> Result<JoinOutput, CliError> {
    let zones = zones_from_profiles(&bundle.profiles)?;
    let sensors = group_sensors(&bundle.sensors);
    let weather = WeatherTable::new(bundle.weather.iter().cloned());
    let mut cfg = config.featurize.clone();
    cfg.vmc_window_hours = vmc_window_hours;
    Ok(join_examples(&bundle.moods, &sensors, &weather, &zones, &cfg)?)
}

fn f(x: f64) -> String {
    format!("{x:.6}")
}

/// Simulates a cohort and writes its bundle plus `manifest.json`.
pub fn simulate_to(spec: &CohortSpec, out: &Path) -> Result<Cohort, CliError> {
    let cohort = simulate(spec)?;
    write_bundle(out, &cohort_bundle(&cohort))?;
    let manifest = serde_json::to_string_pretty(&cohort.manifest).map_err(|e| CliError::Internal(e.to_string()))?;
    let path = out.join(MANIFEST_JSON);
    fs::write(&path, manifest + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(cohort)
}

pub fn cohort_bundle(c: &Cohort) -> Bundle {
    Bundle {
        sensors: c.sensors.clone(),
        moods: c.moods.clone(),
        weather: c.weather.clone(),
        profiles: c.profiles.clone(),
        friendships: c.friendships.clone(),
    }
}

/// Label distribution of every mood input in the bundle.
pub fn table2(inp: &Inputs) -> Result<Report, CliError> {
    let labels: Vec<_> = inp.bundle.moods.iter().map(|m| (m.pleasance, m.activation)).collect();
    let d = descriptive_stats(&labels).map_err(|e| CliError::Invalid(format!("table2: {e}")))?;
    let row = |name: &str, s: &LevelStats| {
        vec![
            name.to_string(),
            s.n().to_string(),
            s.high.to_string(),
            s.medium.to_string(),
            s.low.to_string(),
            f(s.pct_high),
            f(s.pct_medium),
            f(s.pct_low),
            f(s.mean),
            f(s.sd),
        ]
    };
    inp.report(
        "table2.csv",
        &["dimension", "n", "high", "medium", "low", "pct_high", "pct_medium", "pct_low", "mean", "sd"],
        vec![row("pleasance", &d.pleasance), row("activation", &d.activation)],
    )
}

/// Hourly means of the joined examples.
pub fn fig6(inp: &Inputs) -> Result<Report, CliError> {
    let p = hourly_profile(inp.examples());
    let rows = p
        .hours
        .iter()
        .map(|h| vec![h.hour.to_string(), f(h.mean_pleasance), f(h.mean_activation), h.n.to_string()])
        .collect();
    inp.report("fig6.csv", &["hour", "mean_pleasance", "mean_activation", "n"], rows)
}

/// Users with enough joined examples for an individual model, in id order.
pub fn individual_users(inp: &Inputs) -> Vec<(UserId, Vec<LabeledExample>)> {
    let mut by_user: std::collections::BTreeMap<UserId, Vec<LabeledExample>> = Default::default();
    for ex in inp.examples() {
        by_user.entry(ex.user.clone()).or_default().push(ex.clone());
    }
    by_user.into_iter().filter(|(_, v)| v.len() >= inp.config.min_train_examples).collect()
}

/// Cross-validation of the general model, plus per-user models pooled
/// into one confusion matrix.
pub struct Evaluation {
    pub general: Vec<EvaluationReport>,
    pub individual: Vec<PooledEvaluation>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PooledEvaluation {
    pub target: Target,
    pub n_users: usize,
    pub n_examples: usize,
    pub stratified: bool,
    pub accuracy: f64,
    pub kappa: f64,
    pub confusion: Vec<Vec<u64>>,
    pub per_user: Vec<EvaluationReport>,
}

pub fn evaluate(inp: &Inputs, targets: &[Target]) -> Result<Evaluation, CliError> {
    let hp = inp.config.forest;
    let k = inp.config.folds;
    let mut general = Vec::new();
    let mut individual = Vec::new();
    let users = individual_users(inp);
    for &target in targets {
        let data = Dataset::from_examples(inp.examples(), target);
        general.push(cross_validate(&data, target, Scope::General, &hp, k)?);

        let n = target.class_set().len();
        let mut confusion = vec![vec![0u64; n]; n];
        let mut per_user = Vec::new();
        for (user, exs) in &users {
            let data = Dataset::from_examples(exs, target);
            match cross_validate(&data, target, Scope::Individual(user.clone()), &hp, k) {
                Ok(r) => {
                    for (row, add) in confusion.iter_mut().zip(&r.confusion) {
                        for (c, a) in row.iter_mut().zip(add) {
                            *c += a;
                        }
                    }
                    per_user.push(r);
                }
                Err(e) => log::warn!("individual:{user} {}: {e}", target.as_str()),
            }
        }
        if per_user.is_empty() {
            continue;
        }
        individual.push(PooledEvaluation {
            target,
            n_users: per_user.len(),
            n_examples: confusion.iter().flatten().sum::<u64>() as usize,
            stratified: per_user.iter().all(|r| r.stratified),
            accuracy: accuracy(&confusion).map_err(|e| CliError::Internal(e.to_string()))?,
            kappa: cohens_kappa(&confusion).map_err(|e| CliError::Internal(e.to_string()))?,
            confusion,
            per_user,
        });
    }
    Ok(Evaluation { general, individual })
}

pub fn table4(inp: &Inputs, ev: &Evaluation) -> Result<Report, CliError> {
    let mut rows = Vec::new();
    for g in &ev.general {
        let n: u64 = g.confusion.iter().flatten().sum();
        rows.push(vec![
            g.target.as_str().into(),
            "general".into(),
            "1".into(),
            n.to_string(),
            g.k.to_string(),
            g.stratified.to_string(),
            f(g.accuracy),
            f(g.kappa),
        ]);
        if let Some(p) = ev.individual.iter().find(|p| p.target == g.target) {
            rows.push(vec![
                p.target.as_str().into(),
                "individual".into(),
                p.n_users.to_string(),
                p.n_examples.to_string(),
                g.k.to_string(),
                p.stratified.to_string(),
                f(p.accuracy),
                f(p.kappa),
            ]);
        }
    }
    inp.report(
        "table4.csv",
        &["target", "scope", "models", "n", "folds", "stratified", "accuracy", "kappa"],
        rows,
    )
}

/// Full evaluation detail, confusion matrices included.
pub fn evaluation_json(inp: &Inputs, ev: &Evaluation) -> Result<Report, CliError> {
    let v = serde_json::json!({
        "seed": inp.config.forest.seed,
        "config_hash": inp.config.hash(),
        "general": ev.general,
        "individual": ev.individual,
    });
    let s = serde_json::to_string_pretty(&v).map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(Report { name: "evaluation.json".into(), contents: s + "\n" })
}

/// General models on all joined examples, one per target.
pub fn train_general(inp: &Inputs, targets: &[Target]) -> Result<Vec<ForestModel>, CliError> {
    targets
        .iter()
        .map(|&t| Ok(train_forest(&Dataset::from_examples(inp.examples(), t), t, Scope::General, &inp.config.forest)?))
        .collect()
}

/// The given general models plus freshly trained individual ones, as
/// `models/<scope>_<target>.json`.
pub fn model_files(inp: &Inputs, targets: &[Target], general: &[ForestModel]) -> Result<Vec<Report>, CliError> {
    let mut out = Vec::new();
    for m in general {
        out.push(Report { name: format!("{MODELS_DIR}/general_{}.json", m.target.as_str()), contents: m.to_json() });
    }
    for (user, exs) in individual_users(inp) {
        for &t in targets {
            let m = train_forest(&Dataset::from_examples(&exs, t), t, Scope::Individual(user.clone()), &inp.config.forest)?;
            out.push(Report { name: format!("{MODELS_DIR}/individual_{user}_{}.json", t.as_str()), contents: m.to_json() });
        }
    }
    Ok(out)
}

/// fig7.csv (mean impurity decrease) and fig8.csv (node counts), ranked.
pub fn importance(inp: &Inputs, models: &[ForestModel], normalize: bool) -> Result<(Report, Report), CliError> {
    let mut decrease = Vec::new();
    let mut nodes = Vec::new();
    for m in models {
        let mut imp = feature_importance(m);
        if normalize {
            imp = imp.normalized();
        }
        let t = m.target.as_str();
        for (i, fi) in imp.ranked_by_decrease().into_iter().enumerate() {
            decrease.push(vec![t.into(), (i + 1).to_string(), fi.feature.clone(), format!("{:.9}", fi.mean_impurity_decrease)]);
        }
        for (i, fi) in imp.ranked_by_node_count().into_iter().enumerate() {
            nodes.push(vec![t.into(), (i + 1).to_string(), fi.feature.clone(), fi.node_count.to_string()]);
        }
    }
    Ok((
        inp.report("fig7.csv", &["target", "rank", "feature", "mean_impurity_decrease"], decrease)?,
        inp.report("fig8.csv", &["target", "rank", "feature", "node_count"], nodes)?,
    ))
}

/// Correlation matrix; cells are `r` with significance stars. Returns the
/// variables that had to be marked absent.
pub fn table3(inp: &Inputs) -> Result<(Report, Vec<String>), CliError> {
    let window = inp.config.correlation.vmc_window_hours;
    let rejoined;
    let examples = if window == inp.config.featurize.vmc_window_hours {
        inp.examples()
    } else {
        rejoined = join(&inp.bundle, &inp.config, window)?;
        &rejoined.examples
    };
    let (vars, cols) = table3_columns(examples, &inp.profiles);
    let m = correlation_matrix(vars, &cols);
    let absent: Vec<String> = m.absent_variables().into_iter().map(String::from).collect();
    let mut header = vec!["variable"];
    header.extend(m.variables.iter().map(String::as_str));
    let rows = m
        .variables
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut row = vec![v.clone()];
            for j in 0..m.variables.len() {
                row.push(match (m.r[i][j], m.stars[i][j]) {
                    (Some(r), Some(s)) => format!("{r:.3}{}", s.as_str()),
                    _ => String::new(),
                });
            }
            row
        })
        .collect();
    let comments = if absent.is_empty() { String::new() } else { format!("# absent: {}\n", absent.join(" ")) };
    Ok((inp.report_with("table3.csv", &comments, &header, rows)?, absent))
}

/// Ranked influencers per subject.
pub fn influence(inp: &Inputs) -> Result<Report, CliError> {
    let sensors = group_sensors(&inp.bundle.sensors);
    let scores = influence_scores(&inp.bundle.moods, &sensors, &inp.bundle.friendships, &inp.config.influence);
    let mut rows = Vec::new();
    for (subject, list) in &scores {
        for (i, s) in list.iter().enumerate() {
            rows.push(vec![
                subject.to_string(),
                (i + 1).to_string(),
                s.friend.to_string(),
                f(s.r),
                match s.direction {
                    Direction::Positive => "positive".into(),
                    Direction::Negative => "negative".into(),
                },
                s.n_events.to_string(),
                s.n_without.to_string(),
            ]);
        }
    }
    inp.report("influence.csv", &["subject", "rank", "friend", "r", "direction", "n_with", "n_without"], rows)
}

/// Everything `report` writes, in a fixed order.
pub fn full_report(inp: &Inputs, targets: &[Target], normalize: bool) -> Result<(Vec<Report>, Vec<String>), CliError> {
    let ev = evaluate(inp, targets)?;
    let general = train_general(inp, targets)?;
    let (fig7, fig8) = importance(inp, &general, normalize)?;
    let (t3, absent) = table3(inp)?;
    let mut out = vec![
        table2(inp)?,
        table4(inp, &ev)?,
        evaluation_json(inp, &ev)?,
        fig6(inp)?,
        fig7,
        fig8,
        t3,
        influence(inp)?,
    ];
    out.extend(model_files(inp, targets, &general)?);
    Ok((out, absent))
}

pub fn write_reports(out: &Path, reports: &[Report]) -> Result<(), CliError> {
    for r in reports {
        let path = out.join(&r.name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        fs::write(&path, &r.contents).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}
