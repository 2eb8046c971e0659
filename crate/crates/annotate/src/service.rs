use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use forumstrat::eval::{cohen_kappa, fleiss_kappa, fleiss_table, KappaKind, KappaResult};
use forumstrat::graph::ForumGraph;
use forumstrat::scheme::{CodingScheme, SchemeClass};
use forumstrat::strata::{read_entries_csv, SampleEntry};
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};
use crate::store::{SampleLabels, Store, WriteOutcome};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorConfig {
    pub id: String,
    pub token: String,
}

/// A sample to serve: a corpus and the sample CSV drawn from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSource {
    pub id: String,
    pub corpus: PathBuf,
    pub entries: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    pub data_dir: PathBuf,
    pub scheme: Option<PathBuf>,
    /// Directory of the browser bundle, served at `/`.
    pub static_dir: Option<PathBuf>,
    pub annotators: Vec<AnnotatorConfig>,
    pub admin_tokens: Vec<String>,
    pub samples: Vec<SampleSource>,
    /// Journal entries between snapshots.
    pub snapshot_every: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("annotations"),
            scheme: None,
            static_dir: None,
            annotators: Vec::new(),
            admin_tokens: Vec::new(),
            samples: Vec::new(),
            snapshot_every: 256,
        }
    }
}

impl ServiceConfig {
    /// Reads a JSON config; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> ServiceResult<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: ServiceConfig = serde_json::from_str(&text)
            .map_err(|e| ServiceError::Validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.data_dir);
        cfg.scheme.iter_mut().for_each(fix);
        cfg.static_dir.iter_mut().for_each(fix);
        for s in &mut cfg.samples {
            fix(&mut s.corpus);
            fix(&mut s.entries);
        }
        Ok(cfg)
    }
}

/// What an annotator sees of a post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePost {
    pub post_id: String,
    pub content: String,
    pub thread_title: String,
    pub board_title: String,
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub posts: Vec<SamplePost>,
    index: HashMap<String, usize>,
}

impl Sample {
    pub fn new(id: impl Into<String>, posts: Vec<SamplePost>) -> ServiceResult<Self> {
        let mut index = HashMap::with_capacity(posts.len());
        for (i, p) in posts.iter().enumerate() {
            if index.insert(p.post_id.clone(), i).is_some() {
                return Err(ServiceError::Validation(format!("post `{}` appears twice", p.post_id)));
            }
        }
        Ok(Sample {
            id: id.into(),
            posts,
            index,
        })
    }

    /// Looks up sampled posts in an ingested corpus, keeping sample order.
    pub fn from_corpus(id: impl Into<String>, graph: &ForumGraph, entries: &[SampleEntry]) -> ServiceResult<Self> {
        let posts = entries
            .iter()
            .map(|e| {
                let i = graph
                    .post_index(&e.post_id)
                    .ok_or_else(|| ServiceError::Validation(format!("sampled post `{}` is not in the corpus", e.post_id)))?;
                let r = graph.record(i);
                Ok(SamplePost {
                    post_id: r.post_id,
                    content: r.content,
                    thread_title: r.thread_title,
                    board_title: r.board,
                })
            })
            .collect::<ServiceResult<Vec<_>>>()?;
        Sample::new(id, posts)
    }

    pub fn load(source: &SampleSource) -> ServiceResult<Self> {
        let graph = ForumGraph::read_jsonl(BufReader::new(File::open(&source.corpus)?))?;
        let entries = read_entries_csv(File::open(&source.entries)?)?;
        Sample::from_corpus(source.id.clone(), &graph, &entries)
    }

    pub fn contains(&self, post_id: &str) -> bool {
        self.index.contains_key(post_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Principal {
    Annotator(String),
    Admin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NextPost {
    Post {
        done: bool,
        ordinal: usize,
        total: usize,
        labeled: usize,
        post: SamplePost,
        scheme: Vec<SchemeClass>,
    },
    Done {
        done: bool,
        total: usize,
        labeled: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteAck {
    pub status: WriteOutcome,
    pub post_id: String,
    pub class_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub post_id: String,
    pub resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementView {
    pub kind: KappaKind,
    pub kappa: f64,
    pub band: String,
    pub substantial: bool,
    /// Posts labeled by every annotator.
    pub n_items: usize,
    pub annotators: Vec<String>,
    /// Posts whose labels differ; ids only.
    pub conflicts: Vec<Conflict>,
}

pub struct AnnotationService {
    scheme: CodingScheme,
    effective: CodingScheme,
    samples: BTreeMap<String, Sample>,
    tokens: HashMap<String, Principal>,
    annotators: BTreeSet<String>,
    store: Store,
}

impl AnnotationService {
    pub fn new(
        scheme: CodingScheme,
        samples: Vec<Sample>,
        annotators: &[AnnotatorConfig],
        admin_tokens: &[String],
        store: Store,
    ) -> ServiceResult<Self> {
        scheme.validate()?;
        let mut tokens = HashMap::new();
        let mut ids = BTreeSet::new();
        for a in annotators {
            if a.token.is_empty() || !ids.insert(a.id.clone()) {
                return Err(ServiceError::Validation(format!("annotator `{}` is duplicated or has no token", a.id)));
            }
            if tokens.insert(a.token.clone(), Principal::Annotator(a.id.clone())).is_some() {
                return Err(ServiceError::Validation("two principals share a token".into()));
            }
        }
        for t in admin_tokens {
            if t.is_empty() || tokens.insert(t.clone(), Principal::Admin).is_some() {
                return Err(ServiceError::Validation("admin tokens must be non-empty and unique".into()));
            }
        }
        let mut by_id = BTreeMap::new();
        for s in samples {
            let id = s.id.clone();
            if by_id.insert(id.clone(), s).is_some() {
                return Err(ServiceError::Validation(format!("sample `{id}` is configured twice")));
            }
        }
        Ok(AnnotationService {
            effective: scheme.effective(),
            scheme,
            samples: by_id,
            tokens,
            annotators: ids,
            store,
        })
    }

    pub fn from_config(config: &ServiceConfig) -> ServiceResult<Self> {
        let scheme = match &config.scheme {
            Some(p) => CodingScheme::load(p)?,
            None => CodingScheme::default(),
        };
        let samples = config.samples.iter().map(Sample::load).collect::<ServiceResult<Vec<_>>>()?;
        let store = Store::open(&config.data_dir, config.snapshot_every)?;
        Self::new(scheme, samples, &config.annotators, &config.admin_tokens, store)
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    /// The scheme annotators choose from, with merged classes removed.
    pub fn scheme(&self) -> &CodingScheme {
        &self.effective
    }

    pub fn authenticate(&self, token: &str) -> ServiceResult<Principal> {
        self.tokens.get(token).cloned().ok_or(ServiceError::Unauthorized)
    }

    /// Annotator a request acts for: the token's own, which an explicit
    /// `annotator` must match.
    pub fn acting_annotator(&self, principal: &Principal, requested: Option<&str>) -> ServiceResult<String> {
        if let Some(r) = requested {
            if !self.annotators.contains(r) {
                return Err(ServiceError::NotFound(format!("unknown annotator `{r}`")));
            }
        }
        match (principal, requested) {
            (Principal::Annotator(me), None) => Ok(me.clone()),
            (Principal::Annotator(me), Some(r)) if r == me => Ok(me.clone()),
            (Principal::Annotator(_), Some(_)) => Err(ServiceError::Forbidden("token belongs to another annotator".into())),
            (Principal::Admin, _) => Err(ServiceError::Forbidden("admin tokens cannot label".into())),
        }
    }

    fn sample(&self, id: &str) -> ServiceResult<&Sample> {
        self.samples
            .get(id)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown sample `{id}`")))
    }

    fn labels(&self, sample_id: &str) -> SampleLabels {
        self.store
            .state()
            .sample(sample_id)
            .cloned()
            .unwrap_or_default()
    }

    /// First post in sample order this annotator has not labeled.
    pub fn next(&self, sample_id: &str, annotator: &str) -> ServiceResult<NextPost> {
        let sample = self.sample(sample_id)?;
        let state = self.store.state();
        let labels = state.sample(sample_id);
        let has = |p: &str| labels.and_then(|s| s.labels.get(p)).is_some_and(|m| m.contains_key(annotator));
        let labeled = sample.posts.iter().filter(|p| has(&p.post_id)).count();
        let total = sample.posts.len();
        Ok(match sample.posts.iter().position(|p| !has(&p.post_id)) {
            Some(ordinal) => NextPost::Post {
                done: false,
                ordinal,
                total,
                labeled,
                post: sample.posts[ordinal].clone(),
                scheme: self.effective.classes.clone(),
            },
            None => NextPost::Done {
                done: true,
                total,
                labeled,
            },
        })
    }

    /// Maps a submitted class through the merge map.
    fn check_class(&self, class_id: &str) -> ServiceResult<String> {
        if self.scheme.index_of(class_id).is_none() {
            return Err(ServiceError::Validation(format!("unknown class `{class_id}`")));
        }
        Ok(self.scheme.resolve(class_id)?.to_owned())
    }

    fn check_post(&self, sample: &Sample, post_id: &str) -> ServiceResult<()> {
        if sample.contains(post_id) {
            Ok(())
        } else {
            Err(ServiceError::NotFound(format!("post `{post_id}` is not in sample `{}`", sample.id)))
        }
    }

    pub fn submit(&self, sample_id: &str, annotator: &str, post_id: &str, class_id: &str) -> ServiceResult<WriteAck> {
        let sample = self.sample(sample_id)?;
        let class_id = self.check_class(class_id)?;
        self.check_post(sample, post_id)?;
        let status = self.store.submit_label(sample_id, post_id, annotator, &class_id)?;
        Ok(WriteAck {
            status,
            post_id: post_id.to_owned(),
            class_id,
        })
    }

    pub fn resolve(&self, sample_id: &str, by: &str, post_id: &str, class_id: &str) -> ServiceResult<WriteAck> {
        let sample = self.sample(sample_id)?;
        let class_id = self.check_class(class_id)?;
        self.check_post(sample, post_id)?;
        let status = self.store.resolve(sample_id, post_id, &class_id, by)?;
        Ok(WriteAck {
            status,
            post_id: post_id.to_owned(),
            class_id,
        })
    }

    /// κ over posts labeled by every annotator who labeled anything in the
    /// sample: Cohen's for two annotators, Fleiss's for more.
    pub fn agreement(&self, sample_id: &str) -> ServiceResult<AgreementView> {
        let sample = self.sample(sample_id)?;
        let labels = self.labels(sample_id);
        let annotators: BTreeSet<&str> = labels
            .labels
            .values()
            .flat_map(|m| m.keys().map(String::as_str))
            .collect();
        if annotators.len() < 2 {
            return Err(ServiceError::InsufficientOverlap(format!(
                "{} annotator(s) have labeled this sample",
                annotators.len()
            )));
        }
        let annotators: Vec<&str> = annotators.into_iter().collect();
        let mut rows: Vec<Vec<&str>> = Vec::new();
        let mut conflicts = Vec::new();
        for p in &sample.posts {
            let Some(m) = labels.labels.get(&p.post_id) else {
                continue;
            };
            let first = m.values().next().map(|e| e.class_id.as_str());
            if m.len() >= 2 && m.values().any(|e| Some(e.class_id.as_str()) != first) {
                conflicts.push(Conflict {
                    post_id: p.post_id.clone(),
                    resolved: labels.resolutions.contains_key(&p.post_id),
                });
            }
            if annotators.iter().all(|a| m.contains_key(*a)) {
                rows.push(annotators.iter().map(|a| m[*a].class_id.as_str()).collect());
            }
        }
        if rows.is_empty() {
            return Err(ServiceError::InsufficientOverlap(format!(
                "no post is labeled by all of {}",
                annotators.join(", ")
            )));
        }
        let k: KappaResult<f64> = if annotators.len() == 2 {
            let a: Vec<&str> = rows.iter().map(|r| r[0]).collect();
            let b: Vec<&str> = rows.iter().map(|r| r[1]).collect();
            cohen_kappa(&a, &b)?
        } else {
            let ratings = rows
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|c| {
                            self.effective
                                .index_of(c)
                                .ok_or_else(|| ServiceError::Corrupt(format!("stored class `{c}` is not in the scheme")))
                        })
                        .collect::<ServiceResult<Vec<_>>>()
                })
                .collect::<ServiceResult<Vec<_>>>()?;
            fleiss_kappa(&fleiss_table(&ratings, self.effective.len())?)?
        };
        Ok(AgreementView {
            kind: k.kind,
            kappa: k.value,
            band: k.band().to_owned(),
            substantial: k.is_substantial(),
            n_items: k.n_items,
            annotators: annotators.into_iter().map(str::to_owned).collect(),
            conflicts,
        })
    }

    /// Two CSV sections separated by a blank line: every label as
    /// `post_id,annotator_id,class_id`, then `post_id,final_class` for posts
    /// with a resolution or at least two unanimous labels. Rows follow sample
    /// order, then annotator id.
    pub fn export(&self, sample_id: &str) -> ServiceResult<String> {
        let sample = self.sample(sample_id)?;
        let labels = self.labels(sample_id);
        let csv_err = |e: csv::Error| ServiceError::Corrupt(e.to_string());
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["post_id", "annotator_id", "class_id"]).map_err(csv_err)?;
        let mut finals = csv::Writer::from_writer(Vec::new());
        finals.write_record(["post_id", "final_class"]).map_err(csv_err)?;
        for p in &sample.posts {
            let m = labels.labels.get(&p.post_id);
            for (annotator, e) in m.into_iter().flatten() {
                w.write_record([p.post_id.as_str(), annotator, e.class_id.as_str()])
                    .map_err(csv_err)?;
            }
            let final_class = match labels.resolutions.get(&p.post_id) {
                Some(r) => Some(r.class_id.as_str()),
                None => m.filter(|m| m.len() >= 2).and_then(|m| {
                    let first = m.values().next()?.class_id.as_str();
                    m.values().all(|e| e.class_id == first).then_some(first)
                }),
            };
            if let Some(c) = final_class {
                finals.write_record([p.post_id.as_str(), c]).map_err(csv_err)?;
            }
        }
        let inner = |w: csv::Writer<Vec<u8>>| w.into_inner().map_err(|e| ServiceError::Corrupt(e.to_string()));
        let mut out = String::from_utf8(inner(w)?).expect("csv of utf-8 fields");
        out.push('\n');
        out.push_str(std::str::from_utf8(&inner(finals)?).expect("csv of utf-8 fields"));
        Ok(out)
    }
}
