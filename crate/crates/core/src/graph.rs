//! Typed forum graph and population projection.
//!
//! A [`ForumGraph`] holds forums, boards, threads and members as nodes.
//! Posts are member→thread edges carrying content, intent and timestamp;
//! interact edges aggregate them into per-(member, thread) weights. The graph
//! is immutable once built: exclusions and projections return new values.
//!
//! A [`PopulationGraph`] is the subgraph kept by a [`SelectionRule`], with
//! members and threads densely reindexed and the member×thread weight matrix
//! stored in compressed rows.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

/// Intent tag attached to a post.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PostType {
    Offer,
    Request,
    Exchange,
    Tutorial,
    Other,
}

impl PostType {
    pub const TRADING: [PostType; 4] = [
        PostType::Offer,
        PostType::Request,
        PostType::Exchange,
        PostType::Tutorial,
    ];

    /// Case-insensitive parse; unknown tags map to [`PostType::Other`].
    pub fn from_label(label: &str) -> Self {
        match label.trim().to_ascii_lowercase().as_str() {
            "offer" => PostType::Offer,
            "request" => PostType::Request,
            "exchange" => PostType::Exchange,
            "tutorial" => PostType::Tutorial,
            _ => PostType::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PostType::Offer => "offer",
            PostType::Request => "request",
            PostType::Exchange => "exchange",
            PostType::Tutorial => "tutorial",
            PostType::Other => "other",
        }
    }
}

impl FromStr for PostType {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(PostType::from_label(s))
    }
}

impl fmt::Display for PostType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One line of the JSON-lines ingestion format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostRecord {
    pub forum: String,
    pub board: String,
    pub thread_id: String,
    pub thread_title: String,
    pub member_id: String,
    pub post_id: String,
    pub content: String,
    pub post_type: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Forum,
    Board,
    Thread,
    Member,
}

/// Read-only view of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRef<'a> {
    pub kind: NodeKind,
    pub id: &'a str,
    pub label: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Forum {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Board {
    pub forum: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thread {
    pub board: usize,
    pub id: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub id: String,
}

/// Member→thread post edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub member: usize,
    pub thread: usize,
    pub content: String,
    pub post_type: PostType,
    pub timestamp: DateTime<Utc>,
}

/// Member→thread interact edge; `weight` is the number of posts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interact {
    pub member: usize,
    pub thread: usize,
    pub weight: u32,
}

#[derive(Debug, Clone, Default)]
struct GraphIndex {
    forum_by_name: HashMap<String, usize>,
    board_by_key: HashMap<(usize, String), usize>,
    thread_by_id: HashMap<String, usize>,
    member_by_id: HashMap<String, usize>,
    post_by_id: HashMap<String, usize>,
}

impl GraphIndex {
    fn build(
        forums: &[Forum],
        boards: &[Board],
        threads: &[Thread],
        members: &[Member],
        posts: &[Post],
    ) -> Self {
        GraphIndex {
            forum_by_name: forums
                .iter()
                .enumerate()
                .map(|(i, f)| (f.name.clone(), i))
                .collect(),
            board_by_key: boards
                .iter()
                .enumerate()
                .map(|(i, b)| ((b.forum, b.name.clone()), i))
                .collect(),
            thread_by_id: threads
                .iter()
                .enumerate()
                .map(|(i, t)| (t.id.clone(), i))
                .collect(),
            member_by_id: members
                .iter()
                .enumerate()
                .map(|(i, m)| (m.id.clone(), i))
                .collect(),
            post_by_id: posts
                .iter()
                .enumerate()
                .map(|(i, p)| (p.id.clone(), i))
                .collect(),
        }
    }
}

/// Immutable typed forum graph.
#[derive(Debug, Clone, Default)]
pub struct ForumGraph {
    forums: Vec<Forum>,
    boards: Vec<Board>,
    threads: Vec<Thread>,
    members: Vec<Member>,
    posts: Vec<Post>,
    interact: Vec<Interact>,
    index: GraphIndex,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    schema_version: u32,
    forums: Vec<Forum>,
    boards: Vec<Board>,
    threads: Vec<Thread>,
    members: Vec<Member>,
    posts: Vec<Post>,
}

#[derive(Default)]
struct GraphBuilder {
    forums: Vec<Forum>,
    boards: Vec<Board>,
    threads: Vec<Thread>,
    members: Vec<Member>,
    posts: Vec<Post>,
    index: GraphIndex,
}

impl GraphBuilder {
    fn push(&mut self, line: usize, rec: PostRecord) -> Result<()> {
        if self.index.post_by_id.contains_key(&rec.post_id) {
            return Err(Error::DuplicatePostId {
                line,
                post_id: rec.post_id,
            });
        }
        let forum = match self.index.forum_by_name.get(&rec.forum) {
            Some(&f) => f,
            None => {
                self.forums.push(Forum {
                    name: rec.forum.clone(),
                });
                self.index
                    .forum_by_name
                    .insert(rec.forum.clone(), self.forums.len() - 1);
                self.forums.len() - 1
            }
        };
        let board_key = (forum, rec.board.clone());
        let board = match self.index.board_by_key.get(&board_key) {
            Some(&b) => b,
            None => {
                self.boards.push(Board {
                    forum,
                    name: rec.board.clone(),
                });
                self.index.board_by_key.insert(board_key, self.boards.len() - 1);
                self.boards.len() - 1
            }
        };
        let thread = match self.index.thread_by_id.get(&rec.thread_id) {
            Some(&t) => {
                let existing = self.threads[t].board;
                if existing != board {
                    let b = &self.boards[existing];
                    return Err(Error::ThreadBoardConflict {
                        line,
                        thread_id: rec.thread_id,
                        existing: format!("{}/{}", self.forums[b.forum].name, b.name),
                        found: format!("{}/{}", rec.forum, rec.board),
                    });
                }
                t
            }
            None => {
                self.threads.push(Thread {
                    board,
                    id: rec.thread_id.clone(),
                    title: rec.thread_title.clone(),
                });
                self.index
                    .thread_by_id
                    .insert(rec.thread_id.clone(), self.threads.len() - 1);
                self.threads.len() - 1
            }
        };
        let member = match self.index.member_by_id.get(&rec.member_id) {
            Some(&m) => m,
            None => {
                self.members.push(Member {
                    id: rec.member_id.clone(),
                });
                self.index
                    .member_by_id
                    .insert(rec.member_id.clone(), self.members.len() - 1);
                self.members.len() - 1
            }
        };
        self.index
            .post_by_id
            .insert(rec.post_id.clone(), self.posts.len());
        self.posts.push(Post {
            id: rec.post_id,
            member,
            thread,
            content: rec.content,
            post_type: PostType::from_label(&rec.post_type),
            timestamp: rec.timestamp,
        });
        Ok(())
    }

    fn finish(self) -> ForumGraph {
        let interact = derive_interact(&self.posts);
        ForumGraph {
            forums: self.forums,
            boards: self.boards,
            threads: self.threads,
            members: self.members,
            posts: self.posts,
            interact,
            index: self.index,
        }
    }
}

/// Per-(member, thread) post counts, sorted by member then thread.
fn derive_interact(posts: &[Post]) -> Vec<Interact> {
    let mut pairs: Vec<(usize, usize)> = posts.iter().map(|p| (p.member, p.thread)).collect();
    pairs.sort_unstable();
    let mut out: Vec<Interact> = Vec::new();
    for (member, thread) in pairs {
        match out.last_mut() {
            Some(last) if last.member == member && last.thread == thread => last.weight += 1,
            _ => out.push(Interact {
                member,
                thread,
                weight: 1,
            }),
        }
    }
    out
}

impl ForumGraph {
    /// Builds a graph from post records. Line numbers in errors are 1-based
    /// positions in the iterator.
    pub fn ingest<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = PostRecord>,
    {
        let mut builder = GraphBuilder::default();
        for (i, rec) in records.into_iter().enumerate() {
            builder.push(i + 1, rec)?;
        }
        Ok(builder.finish())
    }

    /// Reads the JSON-lines ingestion format. Blank lines are skipped but still counted.
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut builder = GraphBuilder::default();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: PostRecord =
                serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                    line: line_no,
                    message: e.to_string(),
                })?;
            builder.push(line_no, rec)?;
        }
        Ok(builder.finish())
    }

    /// Recomputes interact edges from the post edges. Idempotent.
    pub fn build_interact(&self) -> ForumGraph {
        let mut g = self.clone();
        g.interact = derive_interact(&g.posts);
        g
    }

    /// New graph without the member and all of its post and interact edges.
    pub fn exclude_member(&self, member_id: &str) -> Result<ForumGraph> {
        let drop = *self
            .index
            .member_by_id
            .get(member_id)
            .ok_or_else(|| Error::UnknownMember(member_id.to_owned()))?;
        let members: Vec<Member> = self
            .members
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != drop)
            .map(|(_, m)| m.clone())
            .collect();
        let posts: Vec<Post> = self
            .posts
            .iter()
            .filter(|p| p.member != drop)
            .map(|p| Post {
                member: if p.member > drop { p.member - 1 } else { p.member },
                ..p.clone()
            })
            .collect();
        Ok(Self::from_parts(
            self.forums.clone(),
            self.boards.clone(),
            self.threads.clone(),
            members,
            posts,
        ))
    }

    fn from_parts(
        forums: Vec<Forum>,
        boards: Vec<Board>,
        threads: Vec<Thread>,
        members: Vec<Member>,
        posts: Vec<Post>,
    ) -> Self {
        let index = GraphIndex::build(&forums, &boards, &threads, &members, &posts);
        let interact = derive_interact(&posts);
        ForumGraph {
            forums,
            boards,
            threads,
            members,
            posts,
            interact,
            index,
        }
    }

    pub fn forums(&self) -> &[Forum] {
        &self.forums
    }

    pub fn boards(&self) -> &[Board] {
        &self.boards
    }

    pub fn threads(&self) -> &[Thread] {
        &self.threads
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn interact(&self) -> &[Interact] {
        &self.interact
    }

    pub fn node_count(&self) -> usize {
        self.forums.len() + self.boards.len() + self.threads.len() + self.members.len()
    }

    /// All nodes: forums, boards, threads, then members.
    pub fn nodes(&self) -> impl Iterator<Item = NodeRef<'_>> {
        let forums = self.forums.iter().map(|f| NodeRef {
            kind: NodeKind::Forum,
            id: &f.name,
            label: &f.name,
        });
        let boards = self.boards.iter().map(|b| NodeRef {
            kind: NodeKind::Board,
            id: &b.name,
            label: &b.name,
        });
        let threads = self.threads.iter().map(|t| NodeRef {
            kind: NodeKind::Thread,
            id: &t.id,
            label: &t.title,
        });
        let members = self.members.iter().map(|m| NodeRef {
            kind: NodeKind::Member,
            id: &m.id,
            label: &m.id,
        });
        forums.chain(boards).chain(threads).chain(members)
    }

    pub fn member_index(&self, member_id: &str) -> Option<usize> {
        self.index.member_by_id.get(member_id).copied()
    }

    pub fn post_index(&self, post_id: &str) -> Option<usize> {
        self.index.post_by_id.get(post_id).copied()
    }

    pub fn thread_index(&self, thread_id: &str) -> Option<usize> {
        self.index.thread_by_id.get(thread_id).copied()
    }

    pub fn board_of_thread(&self, thread: usize) -> &Board {
        &self.boards[self.threads[thread].board]
    }

    /// Reconstructs the record a post was ingested from.
    pub fn record(&self, post: usize) -> PostRecord {
        let p = &self.posts[post];
        let t = &self.threads[p.thread];
        let b = &self.boards[t.board];
        PostRecord {
            forum: self.forums[b.forum].name.clone(),
            board: b.name.clone(),
            thread_id: t.id.clone(),
            thread_title: t.title.clone(),
            member_id: self.members[p.member].id.clone(),
            post_id: p.id.clone(),
            content: p.content.clone(),
            post_type: p.post_type.as_str().to_owned(),
            timestamp: p.timestamp,
        }
    }

    pub fn write_snapshot<W: Write>(&self, writer: W) -> Result<()> {
        let snap = Snapshot {
            schema_version: SNAPSHOT_SCHEMA_VERSION,
            forums: self.forums.clone(),
            boards: self.boards.clone(),
            threads: self.threads.clone(),
            members: self.members.clone(),
            posts: self.posts.clone(),
        };
        serde_json::to_writer(writer, &snap)?;
        Ok(())
    }

    pub fn read_snapshot<R: std::io::Read>(reader: R) -> Result<Self> {
        let snap: Snapshot = serde_json::from_reader(reader)?;
        if snap.schema_version != SNAPSHOT_SCHEMA_VERSION {
            return Err(Error::SchemaVersion(snap.schema_version));
        }
        let n_members = snap.members.len();
        let n_threads = snap.threads.len();
        if let Some(p) = snap
            .posts
            .iter()
            .find(|p| p.member >= n_members || p.thread >= n_threads)
        {
            return Err(Error::MalformedRecord {
                line: 0,
                message: format!("post `{}` references a missing node", p.id),
            });
        }
        Ok(Self::from_parts(
            snap.forums,
            snap.boards,
            snap.threads,
            snap.members,
            snap.posts,
        ))
    }

    pub fn stats(&self) -> GraphStats {
        GraphStats {
            forums: self.forums.len(),
            boards: self.boards.len(),
            threads: self.threads.len(),
            members: self.members.len(),
            post_edges: self.posts.len(),
            interact_edges: self.interact.len(),
        }
    }
}

/// Node and edge counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub forums: usize,
    pub boards: usize,
    pub threads: usize,
    pub members: usize,
    pub post_edges: usize,
    pub interact_edges: usize,
}

impl GraphStats {
    /// Selection rule / nodes / edges table.
    pub fn render_table(&self, rule: &str) -> String {
        let nodes = format!("{} (member), {} (thread)", self.members, self.threads);
        let edges = format!("{} (post), {} (interact)", self.post_edges, self.interact_edges);
        let w0 = rule.len().max("Selection Rule".len());
        let w1 = nodes.len().max("# Nodes".len());
        let w2 = edges.len().max("# Edges".len());
        let rule_line = "-".repeat(w0 + w1 + w2 + 4);
        format!(
            "{rule_line}\n{:<w0$}  {:<w1$}  {:<w2$}\n{rule_line}\n{:<w0$}  {:<w1$}  {:<w2$}\n{rule_line}\n",
            "Selection Rule", "# Nodes", "# Edges", rule, nodes, edges
        )
    }
}

/// Filters that carve a population out of a forum graph.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionRule {
    /// Empty means all types. A non-empty filter never admits `Other`.
    #[serde(default)]
    pub post_types: BTreeSet<PostType>,
    /// Board names; `None` admits every board.
    #[serde(default)]
    pub boards: Option<BTreeSet<String>>,
    /// Posts strictly after this instant are dropped.
    #[serde(default)]
    pub cutoff: Option<DateTime<Utc>>,
    #[serde(default)]
    pub excluded_members: BTreeSet<String>,
}

impl SelectionRule {
    pub fn all() -> Self {
        Self::default()
    }

    /// Offer, Request, Exchange and Tutorial posts.
    pub fn trading() -> Self {
        SelectionRule {
            post_types: PostType::TRADING.into_iter().collect(),
            ..Self::default()
        }
    }

    fn admits(&self, graph: &ForumGraph, post: &Post) -> bool {
        if !self.post_types.is_empty()
            && (post.post_type == PostType::Other || !self.post_types.contains(&post.post_type))
        {
            return false;
        }
        if let Some(cutoff) = self.cutoff {
            if post.timestamp > cutoff {
                return false;
            }
        }
        if let Some(boards) = &self.boards {
            if !boards.contains(&graph.board_of_thread(post.thread).name) {
                return false;
            }
        }
        !self.excluded_members.contains(&graph.members[post.member].id)
    }

    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if self.post_types.is_empty() {
            parts.push("all post types".to_owned());
        } else {
            let types: Vec<&str> = self.post_types.iter().map(|t| t.as_str()).collect();
            parts.push(format!("post types {}", types.join("/")));
        }
        if let Some(boards) = &self.boards {
            parts.push(format!("{} board(s)", boards.len()));
        }
        if let Some(c) = self.cutoff {
            parts.push(format!("up to {}", c.to_rfc3339()));
        }
        if !self.excluded_members.is_empty() {
            parts.push(format!("{} excluded member(s)", self.excluded_members.len()));
        }
        parts.join(", ")
    }
}

/// Compressed sparse rows of positive integer weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseCounts {
    offsets: Vec<usize>,
    cols: Vec<u32>,
    weights: Vec<u32>,
}

impl SparseCounts {
    fn from_sorted_triples(rows: usize, triples: &[(u32, u32, u32)]) -> Self {
        let mut offsets = vec![0usize; rows + 1];
        for &(r, _, _) in triples {
            offsets[r as usize + 1] += 1;
        }
        for i in 0..rows {
            offsets[i + 1] += offsets[i];
        }
        SparseCounts {
            offsets,
            cols: triples.iter().map(|t| t.1).collect(),
            weights: triples.iter().map(|t| t.2).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// `(column, weight)` pairs of a row, columns ascending.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        let span = self.offsets[r]..self.offsets[r + 1];
        self.cols[span.clone()]
            .iter()
            .zip(&self.weights[span])
            .map(|(&c, &w)| (c as usize, w))
    }

    pub fn row_len(&self, r: usize) -> usize {
        self.offsets[r + 1] - self.offsets[r]
    }

    /// Weight at `(r, c)`, zero when absent.
    pub fn get(&self, r: usize, c: usize) -> u32 {
        let span = self.offsets[r]..self.offsets[r + 1];
        match self.cols[span.clone()].binary_search(&(c as u32)) {
            Ok(k) => self.weights[span.start + k],
            Err(_) => 0,
        }
    }
}

/// The projected population: retained posts and the member×thread
/// adjacency `A` and weight matrix `W` over them.
#[derive(Debug, Clone)]
pub struct PopulationGraph {
    base: Arc<ForumGraph>,
    rule: SelectionRule,
    posts: Vec<usize>,
    post_member: Vec<u32>,
    post_thread: Vec<u32>,
    members: Vec<usize>,
    threads: Vec<usize>,
    weights: SparseCounts,
    thread_members: SparseCounts,
}

impl PopulationGraph {
    /// Keeps posts passing every filter of `rule`; members and threads left
    /// without posts are dropped. Dense indices follow base-graph order.
    pub fn project(base: Arc<ForumGraph>, rule: SelectionRule) -> Result<Self> {
        let kept: Vec<usize> = base
            .posts
            .iter()
            .enumerate()
            .filter(|(_, p)| rule.admits(&base, p))
            .map(|(i, _)| i)
            .collect();
        if kept.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        const NONE: u32 = u32::MAX;
        let mut member_local = vec![NONE; base.members.len()];
        let mut thread_local = vec![NONE; base.threads.len()];
        for &p in &kept {
            member_local[base.posts[p].member] = 0;
            thread_local[base.posts[p].thread] = 0;
        }
        let mut members = Vec::new();
        for (i, slot) in member_local.iter_mut().enumerate() {
            if *slot != NONE {
                *slot = members.len() as u32;
                members.push(i);
            }
        }
        let mut threads = Vec::new();
        for (i, slot) in thread_local.iter_mut().enumerate() {
            if *slot != NONE {
                *slot = threads.len() as u32;
                threads.push(i);
            }
        }
        let post_member: Vec<u32> = kept
            .iter()
            .map(|&p| member_local[base.posts[p].member])
            .collect();
        let post_thread: Vec<u32> = kept
            .iter()
            .map(|&p| thread_local[base.posts[p].thread])
            .collect();

        let mut pairs: Vec<(u32, u32)> = post_member
            .iter()
            .copied()
            .zip(post_thread.iter().copied())
            .collect();
        pairs.sort_unstable();
        let mut triples: Vec<(u32, u32, u32)> = Vec::new();
        for (m, t) in pairs {
            match triples.last_mut() {
                Some(last) if last.0 == m && last.1 == t => last.2 += 1,
                _ => triples.push((m, t, 1)),
            }
        }
        let weights = SparseCounts::from_sorted_triples(members.len(), &triples);
        let mut transposed: Vec<(u32, u32, u32)> =
            triples.iter().map(|&(m, t, w)| (t, m, w)).collect();
        transposed.sort_unstable();
        let thread_members = SparseCounts::from_sorted_triples(threads.len(), &transposed);

        Ok(PopulationGraph {
            base,
            rule,
            posts: kept,
            post_member,
            post_thread,
            members,
            threads,
            weights,
            thread_members,
        })
    }

    pub fn base(&self) -> &Arc<ForumGraph> {
        &self.base
    }

    pub fn rule(&self) -> &SelectionRule {
        &self.rule
    }

    pub fn member_count(&self) -> usize {
        self.members.len()
    }

    pub fn thread_count(&self) -> usize {
        self.threads.len()
    }

    pub fn post_count(&self) -> usize {
        self.posts.len()
    }

    /// Member×thread weights `W`; the adjacency `A` is its sparsity pattern.
    pub fn weights(&self) -> &SparseCounts {
        &self.weights
    }

    /// Transpose of [`weights`](Self::weights): thread×member.
    pub fn thread_members(&self) -> &SparseCounts {
        &self.thread_members
    }

    pub fn member_id(&self, member: usize) -> &str {
        &self.base.members[self.members[member]].id
    }

    pub fn thread_id(&self, thread: usize) -> &str {
        &self.base.threads[self.threads[thread]].id
    }

    pub fn member_ids(&self) -> impl Iterator<Item = &str> + '_ {
        (0..self.members.len()).map(|m| self.member_id(m))
    }

    /// Base-graph index of a population post.
    pub fn base_post(&self, post: usize) -> usize {
        self.posts[post]
    }

    pub fn post(&self, post: usize) -> &Post {
        &self.base.posts[self.posts[post]]
    }

    /// Population-local member index of the post's author.
    pub fn post_member(&self, post: usize) -> usize {
        self.post_member[post] as usize
    }

    pub fn post_thread(&self, post: usize) -> usize {
        self.post_thread[post] as usize
    }

    /// Population-local index of a post id, if retained.
    pub fn post_position(&self, post_id: &str) -> Option<usize> {
        let base = self.base.post_index(post_id)?;
        self.posts.binary_search(&base).ok()
    }

    pub fn stats(&self) -> GraphStats {
        let mut boards: Vec<usize> = self
            .threads
            .iter()
            .map(|&t| self.base.threads[t].board)
            .collect();
        boards.sort_unstable();
        boards.dedup();
        let mut forums: Vec<usize> = boards.iter().map(|&b| self.base.boards[b].forum).collect();
        forums.sort_unstable();
        forums.dedup();
        GraphStats {
            forums: forums.len(),
            boards: boards.len(),
            threads: self.threads.len(),
            members: self.members.len(),
            post_edges: self.posts.len(),
            interact_edges: self.weights.nnz(),
        }
    }

    /// Materializes the population as a standalone graph holding only the
    /// retained posts and the nodes they touch, in base order.
    pub fn as_graph(&self) -> ForumGraph {
        let records = self.posts.iter().map(|&p| self.base.record(p));
        ForumGraph::ingest(records).expect("population posts are valid records")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn rec(thread: &str, member: &str, post: &str) -> PostRecord {
        PostRecord {
            forum: "f".into(),
            board: "b".into(),
            thread_id: thread.into(),
            thread_title: format!("title {thread}"),
            member_id: member.into(),
            post_id: post.into(),
            content: "hello".into(),
            post_type: "offer".into(),
            timestamp: Utc.with_ymd_and_hms(2018, 1, 1, 0, 0, 0).unwrap(),
        }
    }

    #[test]
    fn empty_stream_gives_empty_graph() {
        let g = ForumGraph::ingest(Vec::new()).unwrap();
        assert_eq!(g.node_count(), 0);
        assert!(g.posts().is_empty());
        assert!(g.interact().is_empty());
    }

    #[test]
    fn single_record() {
        let g = ForumGraph::ingest(vec![rec("t", "m", "p1")]).unwrap();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.posts().len(), 1);
        assert_eq!(
            g.interact(),
            &[Interact {
                member: 0,
                thread: 0,
                weight: 1
            }]
        );
    }

    #[test]
    fn duplicate_post_id_is_rejected() {
        let err = ForumGraph::ingest(vec![rec("t", "m", "p1"), rec("t", "m", "p1")]).unwrap_err();
        match err {
            Error::DuplicatePostId { line, post_id } => {
                assert_eq!(line, 2);
                assert_eq!(post_id, "p1");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let good = serde_json::to_string(&rec("t", "m", "p1")).unwrap();
        let input = format!("{good}\n\n{{\"forum\": 3}}\n");
        match ForumGraph::read_jsonl(input.as_bytes()).unwrap_err() {
            Error::MalformedRecord { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn thread_in_two_boards_is_rejected() {
        let mut second = rec("t", "m", "p2");
        second.board = "other".into();
        let err = ForumGraph::ingest(vec![rec("t", "m", "p1"), second]).unwrap_err();
        assert!(matches!(err, Error::ThreadBoardConflict { line: 2, .. }));
    }

    #[test]
    fn boards_are_scoped_by_forum() {
        let mut other = rec("t2", "m", "p2");
        other.forum = "g".into();
        let g = ForumGraph::ingest(vec![rec("t1", "m", "p1"), other]).unwrap();
        assert_eq!(g.boards().len(), 2);
        assert_eq!(g.forums().len(), 2);
    }

    #[test]
    fn interact_weights_count_posts() {
        let g = ForumGraph::ingest(vec![
            rec("t", "m", "p1"),
            rec("t", "m", "p2"),
            rec("t", "m", "p3"),
            rec("t1", "n", "p4"),
            rec("t2", "n", "p5"),
            rec("t2", "n", "p6"),
        ])
        .unwrap();
        let m = g.member_index("m").unwrap();
        let n = g.member_index("n").unwrap();
        let weights: Vec<(usize, u32)> = g
            .interact()
            .iter()
            .filter(|e| e.member == n)
            .map(|e| (e.thread, e.weight))
            .collect();
        assert_eq!(weights, vec![(1, 1), (2, 2)]);
        assert_eq!(
            g.interact().iter().find(|e| e.member == m).unwrap().weight,
            3
        );
        assert_eq!(g.build_interact().interact(), g.interact());
    }

    #[test]
    fn unknown_post_type_is_other_and_filtered() {
        let mut r = rec("t", "m", "p1");
        r.post_type = "Banter".into();
        let g = Arc::new(ForumGraph::ingest(vec![r, rec("t", "m", "p2")]).unwrap());
        assert_eq!(g.posts()[0].post_type, PostType::Other);
        let pop = PopulationGraph::project(g.clone(), SelectionRule::trading()).unwrap();
        assert_eq!(pop.post_count(), 1);
        let all = PopulationGraph::project(g, SelectionRule::all()).unwrap();
        assert_eq!(all.post_count(), 2);
    }

    #[test]
    fn rule_matching_nothing_is_an_error() {
        let g = Arc::new(ForumGraph::ingest(vec![rec("t", "m", "p1")]).unwrap());
        let rule = SelectionRule {
            cutoff: Some(Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap()),
            ..SelectionRule::default()
        };
        assert!(matches!(
            PopulationGraph::project(g, rule),
            Err(Error::EmptyPopulation)
        ));
    }

    #[test]
    fn exclude_sole_member() {
        let g = ForumGraph::ingest(vec![rec("t", "m", "p1")]).unwrap();
        let g2 = g.exclude_member("m").unwrap();
        assert!(g2.posts().is_empty());
        assert!(g2.interact().is_empty());
        assert_eq!(g2.members().len(), 0);
        assert!(matches!(
            g.exclude_member("ghost"),
            Err(Error::UnknownMember(_))
        ));
    }

    #[test]
    fn board_filter() {
        let mut other = rec("t2", "n", "p2");
        other.board = "market".into();
        let g = Arc::new(ForumGraph::ingest(vec![rec("t1", "m", "p1"), other]).unwrap());
        let rule = SelectionRule {
            boards: Some(["market".to_owned()].into_iter().collect()),
            ..SelectionRule::default()
        };
        let pop = PopulationGraph::project(g, rule).unwrap();
        assert_eq!(pop.member_count(), 1);
        assert_eq!(pop.member_id(0), "n");
        assert_eq!(pop.stats().boards, 1);
    }

    #[test]
    fn snapshot_roundtrip_and_version_check() {
        let g = ForumGraph::ingest(vec![rec("t", "m", "p1"), rec("u", "n", "p2")]).unwrap();
        let mut buf = Vec::new();
        g.write_snapshot(&mut buf).unwrap();
        let back = ForumGraph::read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back.posts(), g.posts());
        assert_eq!(back.interact(), g.interact());
        let mut v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        v["schema_version"] = 99.into();
        let bad = serde_json::to_vec(&v).unwrap();
        assert!(matches!(
            ForumGraph::read_snapshot(bad.as_slice()),
            Err(Error::SchemaVersion(99))
        ));
    }

    #[test]
    fn stats_table_layout() {
        let g = ForumGraph::ingest(vec![rec("t", "m", "p1")]).unwrap();
        let table = g.stats().render_table("all posts");
        assert!(table.contains("Selection Rule"));
        assert!(table.contains("1 (member), 1 (thread)"));
        assert!(table.contains("1 (post), 1 (interact)"));
    }
}
