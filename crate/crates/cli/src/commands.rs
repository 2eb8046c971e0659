use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use forumstrat::centrality::{self, EigenOptions};
use forumstrat::classifier::{repeated_holdout, HoldoutConfig, LinearModel, Stratify, TrainConfig};
use forumstrat::eval::{agreement, align_predictions, disagreement_sample, render_score_table};
use forumstrat::graph::{ForumGraph, PopulationGraph, SelectionRule};
use forumstrat::pipeline::{
    population_documents, predict_documents, read_label_csv, run_experiment, sample_documents, train_on_sample,
    write_label_csv, HoldoutSummary, PipelineConfig,
};
use forumstrat::scheme::CodingScheme;
use forumstrat::strata::{self, read_entries_csv, ReusedLabel, SampleSpec};
use forumstrat::synth::{generate, SynthConfig};
use forumstrat::textpipe::{Preprocessor, TfidfConfig, VectorSpace};
use forumstrat::InducedDistribution;
use forumstrat_annotate::ServiceConfig;

use crate::args::{Command, GraphInput, MetricArgs, ModelArgs, RuleArgs, SampleData, StrataArg};

/// A problem with the invocation itself; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Invalid(pub String);

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest { corpus, out } => ingest(&corpus, &out),
        Command::Stats { input, rule } => stats(&input, &rule),
        Command::Project { input, rule, out } => {
            let pop = population(&input, &rule)?;
            let mut w = create(&out)?;
            pop.as_graph().write_snapshot(&mut w)?;
            w.flush()?;
            println!("{}", pop.stats().render_table(&pop_rule(&rule)?.describe()));
            Ok(())
        }
        Command::Centrality {
            input,
            rule,
            metric,
            out,
        } => {
            let pop = population(&input, &rule)?;
            let cv = compute(&pop, &metric)?;
            let mut w = create(&out)?;
            cv.write_csv(&mut w)?;
            w.flush()?;
            let meta = out.with_extension("meta.json");
            fs::write(&meta, serde_json::to_vec_pretty(&cv.meta_json())?)
                .with_context(|| format!("writing {}", meta.display()))?;
            Ok(())
        }
        Command::Distribution {
            input,
            rule,
            metric,
            sample_size,
            out,
        } => {
            let pop = population(&input, &rule)?;
            let dist = distribution(&pop, &metric, sample_size)?;
            print!("{}", render_distribution(&dist));
            if let Some(out) = out {
                fs::write(&out, serde_json::to_vec_pretty(&dist.summary())?)
                    .with_context(|| format!("writing {}", out.display()))?;
            }
            Ok(())
        }
        Command::Sample {
            input,
            rule,
            metric,
            strategy,
            size,
            seed,
            reuse,
            max_new,
            out,
        } => {
            let pop = population(&input, &rule)?;
            let dist = distribution(&pop, &metric, Some(size))?;
            let reuse_pool = match reuse {
                Some(p) => read_label_csv(open(&p)?)?
                    .into_iter()
                    .map(|(post_id, label)| ReusedLabel { post_id, label })
                    .collect(),
                None => Vec::new(),
            };
            let spec = SampleSpec {
                strategy: strategy.into(),
                size,
                reuse_pool,
                max_new_posts: max_new,
                seed,
            };
            let sample = strata::sample(&pop, &dist, &spec)?;
            let mut w = create(&out)?;
            sample.write_csv(&mut w)?;
            w.flush()?;
            println!(
                "{} posts in {} bins, quotas {:?}, {} reused",
                sample.len(),
                dist.bins.len(),
                sample.quotas,
                sample.reused_count()
            );
            Ok(())
        }
        Command::Train {
            data,
            model,
            seed,
            out_model,
            out_space,
        } => {
            let loaded = load_sample(&data)?;
            let cfg = holdout_config(&model, 0.8);
            let (space, m) =
                train_on_sample::<f64>(&loaded.docs, &loaded.classes, &cfg, seed, &Preprocessor::english())?;
            fs::write(&out_model, m.to_bytes()).with_context(|| format!("writing {}", out_model.display()))?;
            fs::write(&out_space, space.to_json()?).with_context(|| format!("writing {}", out_space.display()))?;
            Ok(())
        }
        Command::Holdout {
            data,
            model,
            runs,
            split,
            strata,
            out,
        } => {
            let loaded = load_sample(&data)?;
            let stratify = match strata {
                StrataArg::Class => Stratify::ClassDistribution,
                StrataArg::Bins => Stratify::CentralityBins(loaded.bins.clone()),
            };
            let seeds: Vec<u64> = (0..runs).collect();
            let results = repeated_holdout::<f64>(
                &loaded.docs,
                &loaded.classes,
                &stratify,
                &seeds,
                &holdout_config(&model, split),
                &Preprocessor::english(),
            )?;
            let summary = HoldoutSummary::from_runs(None, &loaded.classes, &results)?;
            fs::write(&out, serde_json::to_vec_pretty(&summary)?).with_context(|| format!("writing {}", out.display()))?;
            let name = stem(&data.sample);
            print!(
                "{}",
                render_score_table(&loaded.names, &[(name.as_str(), summary.aggregate.scores())])
            );
            Ok(())
        }
        Command::Predict {
            input,
            rule,
            model,
            space,
            out,
        } => {
            let pop = population(&input, &rule)?;
            let m = LinearModel::<f64>::from_bytes(&fs::read(&model).with_context(|| format!("reading {}", model.display()))?)?;
            let text = fs::read_to_string(&space).with_context(|| format!("reading {}", space.display()))?;
            let vs = VectorSpace::<f64>::from_json(&text)?;
            if let Some(h) = &m.vocabulary_hash {
                if *h != vs.vocabulary_hash() {
                    return Err(Invalid(format!(
                        "{} was not trained in the vector space {}",
                        model.display(),
                        space.display()
                    ))
                    .into());
                }
            }
            let docs = population_documents(&pop);
            let preds = predict_documents(&vs, &m, &docs, &Preprocessor::english())?;
            let rows: Vec<(String, String)> = docs
                .iter()
                .zip(&preds)
                .map(|(d, &c)| (d.post_id.clone(), m.classes[c].clone()))
                .collect();
            let mut w = create(&out)?;
            write_label_csv(&rows, &mut w)?;
            w.flush()?;
            Ok(())
        }
        Command::Agree { a, b, scheme, z, out } => {
            let pair = load_predictions(&a, &b, scheme.as_deref())?;
            let report = agreement(&pair.a, &pair.b, pair.classes.len(), z)?;
            print!("{}", report.render_table(&pair.names, &stem(&a), &stem(&b)));
            if let Some(out) = out {
                fs::write(&out, serde_json::to_vec_pretty(&report)?).with_context(|| format!("writing {}", out.display()))?;
            }
            Ok(())
        }
        Command::DisagreeSample {
            a,
            b,
            scheme,
            per_class,
            seed,
            out,
        } => {
            let pair = load_predictions(&a, &b, scheme.as_deref())?;
            let dis = disagreement_sample(&pair.a, &pair.b, pair.classes.len(), per_class, seed)?;
            let mut w = csv::Writer::from_writer(create(&out)?);
            w.write_record(["post_id", "class", &stem(&a), &stem(&b)])?;
            for (class, positions) in &dis.per_class {
                for &i in positions {
                    w.write_record([
                        pair.ids[i].as_str(),
                        pair.classes[*class].as_str(),
                        pair.classes[pair.a[i]].as_str(),
                        pair.classes[pair.b[i]].as_str(),
                    ])?;
                }
            }
            w.flush()?;
            for (class, available) in &dis.shortfalls {
                eprintln!(
                    "warning: class {} has only {available} disagreements",
                    pair.classes[*class]
                );
            }
            println!("{} posts", dis.len());
            Ok(())
        }
        Command::AnnotateServe { config, bind } => {
            let mut cfg = ServiceConfig::load(&config)?;
            if let Some(b) = bind {
                cfg.bind = b;
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(forumstrat_annotate::serve(cfg))?;
            Ok(())
        }
        Command::Synth {
            config,
            seed,
            members,
            out,
            truth,
        } => {
            let mut cfg = match config {
                Some(p) => serde_json::from_reader(open(&p)?)
                    .map_err(|e| Invalid(format!("{}: {e}", p.display())))?,
                None => SynthConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(m) = members {
                cfg.n_members = m;
            }
            let corpus = generate(&cfg)?;
            let mut w = create(&out)?;
            corpus.write_jsonl(&mut w)?;
            w.flush()?;
            let mut w = create(&truth)?;
            corpus.write_truth_csv(&mut w)?;
            w.flush()?;
            println!("{} posts by {} members", corpus.records.len(), cfg.n_members);
            Ok(())
        }
        Command::Report { holdouts, scheme } => {
            let scheme = load_scheme(scheme.as_deref())?;
            let mut columns = Vec::new();
            let mut classes: Option<Vec<String>> = None;
            for p in &holdouts {
                let s: HoldoutSummary<f64> = serde_json::from_reader(open(p)?)
                    .map_err(|e| Invalid(format!("{}: {e}", p.display())))?;
                match &classes {
                    Some(c) if *c != s.classes => {
                        return Err(Invalid(format!("{} uses a different class list", p.display())).into())
                    }
                    _ => classes = Some(s.classes.clone()),
                }
                let name = s.strategy.map(|x| x.to_string()).unwrap_or_else(|| stem(p));
                columns.push((name, s.aggregate.scores()));
            }
            let names: Vec<String> = classes
                .unwrap_or_default()
                .iter()
                .map(|id| {
                    scheme
                        .index_of(id)
                        .map(|i| scheme.classes[i].name.clone())
                        .unwrap_or_else(|| id.clone())
                })
                .collect();
            let refs: Vec<(&str, _)> = columns.iter().map(|(n, c)| (n.as_str(), c.clone())).collect();
            print!("{}", render_score_table(&names, &refs));
            Ok(())
        }
        Command::Run { config, output_dir } => {
            let mut cfg: PipelineConfig = serde_json::from_reader(open(&config)?)
                .map_err(|e| Invalid(format!("{}: {e}", config.display())))?;
            let base = config.parent().unwrap_or(Path::new("."));
            // Absolute paths keep the archived config usable from anywhere.
            let fix = |p: &mut PathBuf| {
                if let Ok(abs) = std::path::absolute(base.join(&*p)) {
                    *p = abs;
                }
            };
            fix(&mut cfg.corpus);
            fix(&mut cfg.labels);
            fix(&mut cfg.output_dir);
            cfg.scheme.iter_mut().for_each(fix);
            cfg.reuse.iter_mut().for_each(fix);
            if let Some(d) = output_dir {
                cfg.output_dir = std::path::absolute(d)?;
            }
            let outcome = run_experiment(&cfg)?;
            let table = cfg.output_dir.join("holdout_table.txt");
            print!("{}", fs::read_to_string(&table).unwrap_or_default());
            println!(
                "{} artifacts in {}",
                outcome.manifest.outputs.len() + 1,
                cfg.output_dir.display()
            );
            Ok(())
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load_graph(path: &Path) -> Result<ForumGraph> {
    let reader = open(path)?;
    let graph = if path.extension().is_some_and(|e| e == "jsonl") {
        ForumGraph::read_jsonl(reader)?
    } else {
        ForumGraph::read_snapshot(reader)?
    };
    Ok(graph)
}

fn ingest(corpus: &Path, out: &Path) -> Result<()> {
    let graph = ForumGraph::read_jsonl(open(corpus)?)?;
    let mut w = create(out)?;
    graph.write_snapshot(&mut w)?;
    w.flush()?;
    println!("{}", graph.stats().render_table("All"));
    Ok(())
}

fn pop_rule(args: &RuleArgs) -> Result<SelectionRule> {
    let mut rule = match &args.rule {
        Some(p) => serde_json::from_reader(open(p)?).map_err(|e| Invalid(format!("{}: {e}", p.display())))?,
        None => SelectionRule::all(),
    };
    if args.trading {
        rule.post_types.extend(SelectionRule::trading().post_types);
    }
    rule.post_types.extend(args.post_types.iter().copied());
    if !args.boards.is_empty() {
        rule.boards
            .get_or_insert_with(BTreeSet::new)
            .extend(args.boards.iter().cloned());
    }
    if args.cutoff.is_some() {
        rule.cutoff = args.cutoff;
    }
    rule.excluded_members.extend(args.exclude_members.iter().cloned());
    Ok(rule)
}

fn population(input: &GraphInput, rule: &RuleArgs) -> Result<PopulationGraph> {
    let graph = Arc::new(load_graph(&input.graph)?);
    Ok(PopulationGraph::project(graph, pop_rule(rule)?)?)
}

fn stats(input: &GraphInput, rule: &RuleArgs) -> Result<()> {
    let graph = Arc::new(load_graph(&input.graph)?);
    println!("{}", graph.stats().render_table("All"));
    let rule = pop_rule(rule)?;
    if rule != SelectionRule::all() {
        let pop = PopulationGraph::project(graph, rule.clone())?;
        println!("{}", pop.stats().render_table(&rule.describe()));
    }
    Ok(())
}

fn compute(pop: &PopulationGraph, m: &MetricArgs) -> Result<forumstrat::CentralityVector> {
    let eigen = EigenOptions {
        tol: m.tol,
        max_iter: m.max_iter,
        weighted: m.weighted,
    };
    Ok(centrality::compute::<f64>(pop, m.metric, &eigen, m.node_limit)?)
}

fn distribution(pop: &PopulationGraph, m: &MetricArgs, sample_size: Option<usize>) -> Result<InducedDistribution> {
    let cv = compute(pop, m)?;
    let dist = strata::induce(pop, &cv)?;
    Ok(match sample_size {
        Some(s) => strata::merge_bins(&dist, s)?,
        None => dist,
    })
}

fn render_distribution(dist: &InducedDistribution) -> String {
    let mut out = format!("{:>4}  {:>14}  {:>10}  {:>8}\n", "Bin", "Upper bound", "# Posts", "Mass");
    for (i, b) in dist.bins.iter().enumerate() {
        out.push_str(&format!(
            "{i:>4}  {:>14}  {:>10}  {:>8.4}\n",
            format!("< {}", b.upper_bound),
            b.posts.len(),
            b.mass
        ));
    }
    if let Some(s) = dist.sample_size {
        let se = strata::proportion_std_error(0.5, s);
        out.push_str(&format!("sample size {s}; standard error of a proportion at most {se:.5}\n"));
    }
    out
}

fn load_scheme(path: Option<&Path>) -> Result<CodingScheme> {
    Ok(match path {
        Some(p) => CodingScheme::load(p)?,
        None => CodingScheme::default(),
    })
}

struct LoadedSample {
    docs: Vec<forumstrat::textpipe::Document>,
    bins: Vec<usize>,
    classes: Vec<String>,
    names: Vec<String>,
}

fn load_sample(data: &SampleData) -> Result<LoadedSample> {
    let scheme = load_scheme(data.scheme.as_deref())?;
    let effective = scheme.effective();
    let graph = Arc::new(load_graph(&data.corpus)?);
    let pop = PopulationGraph::project(graph, pop_rule(&data.rule)?)?;
    let entries = read_entries_csv(open(&data.sample)?)?;
    let mut labels = HashMap::new();
    for (post, class) in read_label_csv(open(&data.labels)?)? {
        labels.insert(post, scheme.label_index(&class)?);
    }
    Ok(LoadedSample {
        docs: sample_documents(&pop, &entries, &labels)?,
        bins: entries.iter().map(|e| e.bin).collect(),
        classes: effective.ids(),
        names: effective.names(),
    })
}

fn holdout_config(m: &ModelArgs, split: f64) -> HoldoutConfig {
    HoldoutConfig {
        split,
        tfidf: TfidfConfig {
            min_df: m.min_df,
            max_features: m.max_features,
        },
        train: TrainConfig {
            epochs: m.epochs,
            learning_rate: m.learning_rate,
            lambda: m.lambda,
            loss: m.loss,
            seed: 0,
        },
        smote_k: (m.smote_k > 0).then_some(m.smote_k),
    }
}

struct PredictionPair {
    ids: Vec<String>,
    a: Vec<usize>,
    b: Vec<usize>,
    classes: Vec<String>,
    names: Vec<String>,
}

fn load_predictions(a: &Path, b: &Path, scheme: Option<&Path>) -> Result<PredictionPair> {
    let scheme = load_scheme(scheme)?;
    let read = |p: &Path| -> Result<Vec<(String, usize)>> {
        read_label_csv(open(p)?)?
            .into_iter()
            .map(|(post, class)| Ok((post, scheme.label_index(&class)?)))
            .collect()
    };
    let (ids, pa, pb) = align_predictions(&read(a)?, &read(b)?)?;
    let effective = scheme.effective();
    Ok(PredictionPair {
        ids,
        a: pa,
        b: pb,
        classes: effective.ids(),
        names: effective.names(),
    })
}
