//! End-to-end experiment: ingest → project → centrality → distribution →
//! samples → holdout per strategy, plus population-wide agreement between
//! the models trained on the first two strategies.

use std::collections::HashMap;
use std::fs;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::centrality::{self, EigenOptions, Metric, DEFAULT_NODE_LIMIT};
use crate::classifier::{repeated_holdout, train, HoldoutConfig, HoldoutRun, LinearModel, Stratify};
use crate::error::{Error, Result};
use crate::eval::{
    aggregate, agreement, disagreement_sample, render_score_table, AggregateReport, AgreementReport,
    DisagreementSample, EvalReport, DEFAULT_Z,
};
use crate::graph::{ForumGraph, PopulationGraph, SelectionRule};
use crate::num::Scalar;
use crate::scheme::CodingScheme;
use crate::strata::{self, ReusedLabel, SampleSpec, StratifiedSample, Strategy};
use crate::textpipe::{fit_transform, oversample, Document, Preprocessor, VectorSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HoldoutStrata {
    Class,
    Bins,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// JSON-lines corpus.
    pub corpus: PathBuf,
    /// Coding scheme; the bundled one when absent.
    pub scheme: Option<PathBuf>,
    /// `post_id,class` labels covering at least every sampled post.
    pub labels: PathBuf,
    pub output_dir: PathBuf,
    pub rule: SelectionRule,
    pub metric: Metric,
    pub eigen: EigenOptions<f64>,
    pub sample_size: usize,
    pub strategies: Vec<Strategy>,
    pub sample_seed: u64,
    /// Previously labeled `post_id,class` rows to reuse first.
    pub reuse: Option<PathBuf>,
    pub max_new_posts: Option<usize>,
    pub holdout: HoldoutConfig,
    pub holdout_strata: HoldoutStrata,
    pub seeds: Vec<u64>,
    pub z: f64,
    pub disagreement_per_class: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: PathBuf::from("corpus.jsonl"),
            scheme: None,
            labels: PathBuf::from("labels.csv"),
            output_dir: PathBuf::from("run"),
            rule: SelectionRule::all(),
            metric: Metric::PostDegree,
            eigen: EigenOptions::default(),
            sample_size: 1500,
            strategies: vec![Strategy::Proportional, Strategy::Uniform],
            sample_seed: 0,
            reuse: None,
            max_new_posts: None,
            holdout: HoldoutConfig::default(),
            holdout_strata: HoldoutStrata::Class,
            seeds: (0..30).collect(),
            z: DEFAULT_Z,
            disagreement_per_class: 100,
        }
    }
}

/// A failed stage, with the artifacts finished before it.
#[derive(Debug, thiserror::Error)]
#[error("stage `{stage}` failed: {source}")]
pub struct PipelineError {
    pub stage: &'static str,
    #[source]
    pub source: Error,
    pub completed: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: PathBuf,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// Per-run reports and their aggregate for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct HoldoutSummary<T> {
    pub strategy: Option<Strategy>,
    pub classes: Vec<String>,
    pub runs: Vec<(u64, EvalReport<T>)>,
    pub aggregate: AggregateReport<T>,
    /// Fraction of runs with at least one never-predicted test class.
    pub zero_prediction_run_rate: f64,
}

impl<T: Scalar> HoldoutSummary<T> {
    pub fn from_runs(strategy: Option<Strategy>, classes: &[String], runs: &[HoldoutRun<T>]) -> Result<Self> {
        let reports: Vec<EvalReport<T>> = runs.iter().map(|r| r.report.clone()).collect();
        let zero = runs.iter().filter(|r| r.has_zero_prediction_class()).count();
        Ok(HoldoutSummary {
            strategy,
            classes: classes.to_vec(),
            runs: runs.iter().map(|r| r.seed).zip(reports.iter().cloned()).collect(),
            aggregate: aggregate(&reports)?,
            zero_prediction_run_rate: zero as f64 / runs.len().max(1) as f64,
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_digest(path: &Path) -> Result<FileDigest> {
    let mut hasher = Sha256::new();
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(FileDigest {
        path: path.to_owned(),
        sha256: hex::encode(hasher.finalize()),
    })
}

/// Reads `post_id,class` rows.
pub fn read_label_csv<R: Read>(reader: R) -> Result<Vec<(String, String)>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in r.deserialize() {
        let (post_id, class): (String, String) = row?;
        out.push((post_id, class));
    }
    Ok(out)
}

/// Writes `post_id,class` rows.
pub fn write_label_csv<W: Write>(rows: &[(String, String)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["post_id", "class"])?;
    for (p, c) in rows {
        w.write_record([p, c])?;
    }
    w.flush()?;
    Ok(())
}

/// Classifier document for a population post.
pub fn population_document(pop: &PopulationGraph, post: usize, label: Option<usize>) -> Document {
    let r = pop.base().record(pop.base_post(post));
    Document::compose(r.post_id, &r.content, &r.thread_title, &r.board, label)
}

/// Unlabeled documents for every population post, in population order.
pub fn population_documents(pop: &PopulationGraph) -> Vec<Document> {
    (0..pop.post_count()).map(|i| population_document(pop, i, None)).collect()
}

/// Labeled documents for a sample. Every sampled post needs a label.
pub fn sample_documents(
    pop: &PopulationGraph,
    sample: &[strata::SampleEntry],
    labels: &HashMap<String, usize>,
) -> Result<Vec<Document>> {
    sample
        .iter()
        .map(|e| {
            let pos = pop
                .post_position(&e.post_id)
                .ok_or_else(|| Error::InvalidConfig(format!("sampled post `{}` is outside the population", e.post_id)))?;
            let label = *labels
                .get(&e.post_id)
                .ok_or_else(|| Error::InvalidConfig(format!("sampled post `{}` has no label", e.post_id)))?;
            Ok(population_document(pop, pos, Some(label)))
        })
        .collect()
}

/// Fits the vector space and model on a whole labeled sample.
pub fn train_on_sample<T: Scalar>(
    docs: &[Document],
    classes: &[String],
    config: &HoldoutConfig,
    seed: u64,
    pre: &Preprocessor,
) -> Result<(VectorSpace<T>, LinearModel<T>)> {
    let (space, mut m) = fit_transform::<T>(docs, config.tfidf, pre)?;
    if let Some(k) = config.smote_k {
        m = oversample(&m, k, seed)?.matrix;
    }
    let cfg = crate::classifier::TrainConfig {
        seed,
        ..config.train
    };
    let model = train(&m, classes, &cfg)?.with_vocabulary_hash(space.vocabulary_hash());
    Ok((space, model))
}

/// Predicted class per document.
pub fn predict_documents<T: Scalar>(
    space: &VectorSpace<T>,
    model: &LinearModel<T>,
    docs: &[Document],
    pre: &Preprocessor,
) -> Result<Vec<usize>> {
    Ok(model.predict(&space.transform(docs, pre))?.classes)
}

struct Run<'a> {
    dir: &'a Path,
    completed: Vec<PathBuf>,
}

impl Run<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.completed.push(path.clone());
        Ok(path)
    }

    fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }
}

/// Everything an experiment produced, in memory.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub samples: Vec<StratifiedSample<f64>>,
    pub holdouts: Vec<HoldoutSummary<f64>>,
    pub agreement: Option<AgreementReport<f64>>,
    pub disagreements: Option<DisagreementSample>,
    pub manifest: Manifest,
}

/// Runs the experiment and writes every stage's artifacts plus
/// `manifest.json` into `config.output_dir`.
pub fn run_experiment(config: &PipelineConfig) -> Result<ExperimentOutcome, PipelineError> {
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| PipelineError {
        stage: "setup",
        source: Error::io(&dir, e),
        completed: Vec::new(),
    })?;
    let mut run = Run {
        dir: &dir,
        completed: Vec::new(),
    };
    let mut stage = "setup";
    let result = execute(config, &mut run, &mut stage);
    result.map_err(|source| PipelineError {
        stage,
        source,
        completed: run.completed.clone(),
    })
}

fn execute(config: &PipelineConfig, run: &mut Run, stage: &mut &'static str) -> Result<ExperimentOutcome> {
    run.write_json("config.json", config)?;
    let scheme = match &config.scheme {
        Some(p) => CodingScheme::load(p)?,
        None => CodingScheme::default(),
    };
    let effective = scheme.effective();
    let classes = effective.ids();
    let names = effective.names();

    *stage = "ingest";
    let file = fs::File::open(&config.corpus).map_err(|e| Error::io(&config.corpus, e))?;
    let graph = Arc::new(ForumGraph::read_jsonl(BufReader::new(file))?);
    run.write("graph_stats.txt", graph.stats().render_table("All").as_bytes())?;

    *stage = "project";
    let pop = PopulationGraph::project(graph, config.rule.clone())?;
    run.write(
        "population_stats.txt",
        pop.stats().render_table(&config.rule.describe()).as_bytes(),
    )?;

    *stage = "centrality";
    let cv = centrality::compute::<f64>(&pop, config.metric, &config.eigen, DEFAULT_NODE_LIMIT)?;
    let mut csv_bytes = Vec::new();
    cv.write_csv(&mut csv_bytes)?;
    run.write("centrality.csv", &csv_bytes)?;

    *stage = "distribution";
    let dist = strata::merge_bins(&strata::induce(&pop, &cv)?, config.sample_size)?;
    run.write_json("distribution.json", &dist.summary())?;

    *stage = "labels";
    let raw = {
        let f = fs::File::open(&config.labels).map_err(|e| Error::io(&config.labels, e))?;
        read_label_csv(f)?
    };
    let mut labels = HashMap::with_capacity(raw.len());
    for (post, class) in &raw {
        labels.insert(post.clone(), scheme.label_index(class)?);
    }
    let reuse = match &config.reuse {
        Some(p) => {
            let f = fs::File::open(p).map_err(|e| Error::io(p, e))?;
            read_label_csv(f)?
                .into_iter()
                .map(|(post_id, label)| ReusedLabel { post_id, label })
                .collect()
        }
        None => Vec::new(),
    };

    let pre = Preprocessor::english();
    let mut samples = Vec::new();
    let mut holdouts = Vec::new();
    let mut models = Vec::new();
    for &strategy in &config.strategies {
        *stage = "sample";
        let spec = SampleSpec {
            strategy,
            size: config.sample_size,
            reuse_pool: reuse.clone(),
            max_new_posts: config.max_new_posts,
            seed: config.sample_seed,
        };
        let sample = strata::sample(&pop, &dist, &spec)?;
        let mut bytes = Vec::new();
        sample.write_csv(&mut bytes)?;
        run.write(&format!("sample_{strategy}.csv"), &bytes)?;

        *stage = "holdout";
        let docs = sample_documents(&pop, &sample.entries, &labels)?;
        let stratify = match config.holdout_strata {
            HoldoutStrata::Class => Stratify::ClassDistribution,
            HoldoutStrata::Bins => Stratify::CentralityBins(sample.entries.iter().map(|e| e.bin).collect()),
        };
        let runs = repeated_holdout::<f64>(&docs, &classes, &stratify, &config.seeds, &config.holdout, &pre)?;
        let summary = HoldoutSummary::from_runs(Some(strategy), &classes, &runs)?;
        run.write_json(&format!("holdout_{strategy}.json"), &summary)?;

        *stage = "train";
        let (space, model) = train_on_sample::<f64>(&docs, &classes, &config.holdout, config.sample_seed, &pre)?;
        run.write(&format!("model_{strategy}.bin"), &model.to_bytes())?;
        run.write(&format!("space_{strategy}.json"), space.to_json()?.as_bytes())?;

        samples.push(sample);
        holdouts.push(summary);
        models.push((strategy, space, model));
    }

    *stage = "report";
    let columns: Vec<(String, _)> = holdouts
        .iter()
        .map(|h| (h.strategy.map(|s| s.to_string()).unwrap_or_default(), h.aggregate.scores()))
        .collect();
    let column_refs: Vec<(&str, _)> = columns.iter().map(|(n, c)| (n.as_str(), c.clone())).collect();
    run.write("holdout_table.txt", render_score_table(&names, &column_refs).as_bytes())?;

    let mut agreement_report = None;
    let mut disagreements = None;
    if models.len() >= 2 {
        *stage = "predict";
        let docs = population_documents(&pop);
        let mut preds = Vec::new();
        for (strategy, space, model) in &models[..2] {
            let p = predict_documents(space, model, &docs, &pre)?;
            let rows: Vec<(String, String)> = docs
                .iter()
                .zip(&p)
                .map(|(d, &c)| (d.post_id.clone(), classes[c].clone()))
                .collect();
            let mut bytes = Vec::new();
            write_label_csv(&rows, &mut bytes)?;
            run.write(&format!("predictions_{strategy}.csv"), &bytes)?;
            preds.push(p);
        }

        *stage = "agreement";
        let report = agreement(&preds[0], &preds[1], classes.len(), config.z)?;
        run.write_json("agreement.json", &report)?;
        let (a, b) = (models[0].0.to_string(), models[1].0.to_string());
        run.write("agreement_table.txt", report.render_table(&names, &a, &b).as_bytes())?;
        let dis = disagreement_sample(
            &preds[0],
            &preds[1],
            classes.len(),
            config.disagreement_per_class,
            config.sample_seed,
        )?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["post_id", "class", a.as_str(), b.as_str()])?;
        for (class, positions) in &dis.per_class {
            for &i in positions {
                w.write_record([
                    docs[i].post_id.as_str(),
                    classes[*class].as_str(),
                    classes[preds[0][i]].as_str(),
                    classes[preds[1][i]].as_str(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::IoBare(e.into_error()))?;
        run.write("disagreements.csv", &bytes)?;
        agreement_report = Some(report);
        disagreements = Some(dis);
    }

    *stage = "manifest";
    let mut inputs = vec![file_digest(&config.corpus)?, file_digest(&config.labels)?];
    if let Some(p) = &config.scheme {
        inputs.push(file_digest(p)?);
    }
    if let Some(p) = &config.reuse {
        inputs.push(file_digest(p)?);
    }
    let outputs = run
        .completed
        .iter()
        .map(|p| {
            let mut d = file_digest(p)?;
            d.path = p.strip_prefix(run.dir).unwrap_or(p).to_owned();
            Ok(d)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        config: PathBuf::from("config.json"),
        inputs,
        outputs,
    };
    run.write_json("manifest.json", &manifest)?;
    Ok(ExperimentOutcome {
        samples,
        holdouts,
        agreement: agreement_report,
        disagreements,
        manifest,
    })
}
