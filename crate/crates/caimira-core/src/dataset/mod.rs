//! Question banks, cumulative-clue items, player logs, and the sparse
//! binary response matrix.
//!
//! A trivia question is a sequence of clues of decreasing difficulty. Each
//! question expands into cumulative-clue *items*: item `q31_2` is question
//! `q31` shown up to its second clue. Player log records are mapped onto
//! those items, rulings are refined by backfilling (a correct answer at clue
//! t implies correct at every later clue; an incorrect answer implies
//! incorrect at every earlier clue), and individual players are aggregated
//! into grouped agents by majority vote.

mod groups;
mod matching;

pub use groups::{apply_groups, form_groups, group_response, GroupSpec, GroupedAgent};
pub use matching::{normalize_answer, rule_answer, similarity, MatchConfig, Ruling};

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// A multi-clue question with its canonical answer and accepted aliases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Question {
    pub qid: String,
    pub clues: Vec<String>,
    pub answer: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub category: String,
    #[serde(default)]
    pub subcategory: Option<String>,
    #[serde(default)]
    pub wiki_summary: Option<String>,
}

impl Question {
    fn validate(&self) -> Result<()> {
        if self.qid.is_empty() {
            return Err(CoreError::Data("empty qid".into()));
        }
        if self.clues.is_empty() {
            return Err(CoreError::Data(format!("empty clues for qid {}", self.qid)));
        }
        if self.answer.is_empty() {
            return Err(CoreError::Data(format!("empty answer for qid {}", self.qid)));
        }
        Ok(())
    }
}

/// A cumulative-clue item: the first `clue_count` clues of one question.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Item {
    pub item_id: String,
    pub qid: String,
    pub clue_count: usize,
    pub text: String,
}

/// Item id for question `qid` truncated at clue `t` (1-based).
pub fn item_id(qid: &str, t: usize) -> String {
    format!("{qid}_{t}")
}

/// Expand a question into one item per clue prefix. Item `t` holds the
/// first `t` clues joined by single spaces.
pub fn expand_cumulative_items(q: &Question) -> Vec<Item> {
    let mut items = Vec::with_capacity(q.clues.len());
    let mut text = String::new();
    for (idx, clue) in q.clues.iter().enumerate() {
        if idx > 0 {
            text.push(' ');
        }
        text.push_str(clue);
        items.push(Item {
            item_id: item_id(&q.qid, idx + 1),
            qid: q.qid.clone(),
            clue_count: idx + 1,
            text: text.clone(),
        });
    }
    items
}

/// An ordered collection of questions with unique ids.
#[derive(Debug, Clone, Default)]
pub struct QuestionBank {
    questions: Vec<Question>,
    by_qid: HashMap<String, usize>,
}

impl QuestionBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, q: Question) -> Result<()> {
        q.validate()?;
        if self.by_qid.contains_key(&q.qid) {
            return Err(CoreError::Integrity(format!("duplicate qid {}", q.qid)));
        }
        self.by_qid.insert(q.qid.clone(), self.questions.len());
        self.questions.push(q);
        Ok(())
    }

    pub fn get(&self, qid: &str) -> Option<&Question> {
        self.by_qid.get(qid).map(|&i| &self.questions[i])
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Question> {
        self.questions.iter()
    }

    /// All items of all questions, in bank order with ascending clue count.
    pub fn expand_all(&self) -> Vec<Item> {
        self.questions.iter().flat_map(expand_cumulative_items).collect()
    }
}

/// Parse a line-delimited JSON question bank. Each line is one record with
/// fields qid, clues, answer and optional aliases/category/subcategory/
/// wiki_summary. Blank lines are ignored.
pub fn parse_question_bank<R: BufRead>(reader: R) -> Result<QuestionBank> {
    let mut bank = QuestionBank::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| CoreError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let q: Question = serde_json::from_str(&line).map_err(|e| CoreError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        q.validate().map_err(|e| CoreError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        bank.push(q)?;
    }
    Ok(bank)
}

pub fn load_question_bank(path: &Path) -> Result<QuestionBank> {
    let file = std::fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
    parse_question_bank(std::io::BufReader::new(file))
}

pub fn save_question_bank(bank: &QuestionBank, path: &Path) -> Result<()> {
    let mut out = String::new();
    for q in bank.iter() {
        out.push_str(&serde_json::to_string(q).expect("question serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| CoreError::io(path, e))
}

/// One row of a player log: a player answered question `qid` after seeing
/// `clue_position` clues.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlayerLogRecord {
    pub player_id: String,
    pub qid: String,
    pub clue_position: usize,
    #[serde(default)]
    pub answer_text: String,
    /// Correctness ruling from the source platform, when it recorded one.
    #[serde(default)]
    pub ruled_correct: Option<bool>,
    /// Milliseconds since epoch; used only to order duplicate records.
    #[serde(default)]
    pub timestamp: Option<i64>,
}

/// Read player logs from CSV (with header) or line-delimited JSON,
/// depending on file extension (`.csv` vs anything else).
pub fn load_player_logs(path: &Path) -> Result<Vec<PlayerLogRecord>> {
    let is_csv = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false);
    let file = std::fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    if is_csv {
        parse_player_logs_csv(reader)
    } else {
        parse_player_logs_jsonl(reader)
    }
}

pub fn parse_player_logs_csv<R: BufRead>(reader: R) -> Result<Vec<PlayerLogRecord>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let mut out = Vec::new();
    for (idx, rec) in rdr.deserialize::<PlayerLogRecord>().enumerate() {
        let rec = rec.map_err(|e| CoreError::Parse {
            line: idx + 2, // header is line 1
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn parse_player_logs_jsonl<R: BufRead>(reader: R) -> Result<Vec<PlayerLogRecord>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| CoreError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PlayerLogRecord = serde_json::from_str(&line).map_err(|e| CoreError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Provenance of a response-matrix entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    /// Directly observed in a log or supplied input.
    Observed,
    /// Imputed by the backfill refinement.
    Backfilled,
    /// Strict majority among a group's member votes.
    GroupMajority,
    /// Sampled to break a tied group vote.
    GroupSampled,
}

impl Origin {
    pub fn as_str(&self) -> &'static str {
        match self {
            Origin::Observed => "observed",
            Origin::Backfilled => "backfilled",
            Origin::GroupMajority => "group-majority",
            Origin::GroupSampled => "group-sampled",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "observed" => Ok(Origin::Observed),
            "backfilled" => Ok(Origin::Backfilled),
            "group-majority" => Ok(Origin::GroupMajority),
            "group-sampled" => Ok(Origin::GroupSampled),
            other => Err(CoreError::Format(format!("unknown origin {other:?}"))),
        }
    }

    /// Whether this entry counts as a direct observation for backfilling
    /// purposes (anything that is not itself a backfill product).
    pub fn is_direct(&self) -> bool {
        !matches!(self, Origin::Backfilled)
    }
}

/// A single 0/1 cell with provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixEntry {
    pub correct: bool,
    pub origin: Origin,
}

/// Sparse binary correctness observations over agents × items.
///
/// At most one entry exists per (agent, item); entries iterate in
/// (agent index, item index) order, so exports are deterministic.
#[derive(Debug, Clone)]
pub struct ResponseMatrix {
    agents: Vec<String>,
    items: Vec<String>,
    agent_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
    entries: BTreeMap<(u32, u32), MatrixEntry>,
}

impl ResponseMatrix {
    pub fn new(agents: Vec<String>, items: Vec<String>) -> Result<Self> {
        let mut agent_index = HashMap::with_capacity(agents.len());
        for (i, a) in agents.iter().enumerate() {
            if agent_index.insert(a.clone(), i).is_some() {
                return Err(CoreError::Integrity(format!("duplicate agent id {a}")));
            }
        }
        let mut item_index = HashMap::with_capacity(items.len());
        for (j, it) in items.iter().enumerate() {
            if item_index.insert(it.clone(), j).is_some() {
                return Err(CoreError::Integrity(format!("duplicate item id {it}")));
            }
        }
        Ok(ResponseMatrix {
            agents,
            items,
            agent_index,
            item_index,
            entries: BTreeMap::new(),
        })
    }

    pub fn agents(&self) -> &[String] {
        &self.agents
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn agent_index(&self, id: &str) -> Option<usize> {
        self.agent_index.get(id).copied()
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_index.get(id).copied()
    }

    pub fn n_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, agent: usize, item: usize) -> Option<MatrixEntry> {
        self.entries.get(&(agent as u32, item as u32)).copied()
    }

    fn check_bounds(&self, agent: usize, item: usize) -> Result<()> {
        if agent >= self.agents.len() || item >= self.items.len() {
            return Err(CoreError::Contract(format!(
                "entry ({agent},{item}) out of bounds for {}x{} matrix",
                self.agents.len(),
                self.items.len()
            )));
        }
        Ok(())
    }

    /// Insert an entry; rejects duplicates.
    pub fn insert(&mut self, agent: usize, item: usize, entry: MatrixEntry) -> Result<()> {
        self.check_bounds(agent, item)?;
        let key = (agent as u32, item as u32);
        if self.entries.contains_key(&key) {
            return Err(CoreError::Integrity(format!(
                "duplicate entry for agent {} item {}",
                self.agents[agent], self.items[item]
            )));
        }
        self.entries.insert(key, entry);
        Ok(())
    }

    /// Insert only when the cell is empty; returns the existing entry
    /// otherwise.
    pub fn insert_if_absent(
        &mut self,
        agent: usize,
        item: usize,
        entry: MatrixEntry,
    ) -> Result<Option<MatrixEntry>> {
        self.check_bounds(agent, item)?;
        let key = (agent as u32, item as u32);
        if let Some(existing) = self.entries.get(&key) {
            return Ok(Some(*existing));
        }
        self.entries.insert(key, entry);
        Ok(None)
    }

    /// Unconditional overwrite (bounds-checked). Used by backfill, which
    /// may revise previously imputed cells but never direct ones.
    pub fn put(&mut self, agent: usize, item: usize, entry: MatrixEntry) -> Result<()> {
        self.check_bounds(agent, item)?;
        self.entries.insert((agent as u32, item as u32), entry);
        Ok(())
    }

    /// Entries in (agent index, item index) order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, MatrixEntry)> + '_ {
        self.entries
            .iter()
            .map(|(&(a, i), &e)| (a as usize, i as usize, e))
    }

    /// Item indices answered by the given agent.
    pub fn answered_items(&self, agent: usize) -> Vec<usize> {
        let a = agent as u32;
        self.entries
            .range((a, 0)..(a + 1, 0))
            .map(|(&(_, i), _)| i as usize)
            .collect()
    }

    /// Write CSV triplets `agent_id,item_id,value,origin`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["agent_id", "item_id", "value", "origin"])
            .map_err(|e| CoreError::Format(e.to_string()))?;
        for (a, i, e) in self.iter() {
            w.write_record([
                self.agents[a].as_str(),
                self.items[i].as_str(),
                if e.correct { "1" } else { "0" },
                e.origin.as_str(),
            ])
            .map_err(|e| CoreError::Format(e.to_string()))?;
        }
        w.flush().map_err(|e| CoreError::Format(e.to_string()))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Read CSV triplets back. Agents and items are the sorted distinct ids
    /// present in the file.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows: Vec<(String, String, bool, Origin)> = Vec::new();
        for (idx, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| CoreError::Parse {
                line: idx + 2,
                msg: e.to_string(),
            })?;
            if rec.len() != 4 {
                return Err(CoreError::Parse {
                    line: idx + 2,
                    msg: format!("expected 4 fields, got {}", rec.len()),
                });
            }
            let value = match &rec[2] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(CoreError::Parse {
                        line: idx + 2,
                        msg: format!("value must be 0 or 1, got {other:?}"),
                    })
                }
            };
            let origin = Origin::parse(&rec[3]).map_err(|e| CoreError::Parse {
                line: idx + 2,
                msg: e.to_string(),
            })?;
            rows.push((rec[0].to_string(), rec[1].to_string(), value, origin));
        }
        let mut agents: Vec<String> = rows.iter().map(|r| r.0.clone()).collect();
        agents.sort();
        agents.dedup();
        let mut items: Vec<String> = rows.iter().map(|r| r.1.clone()).collect();
        items.sort();
        items.dedup();
        let mut matrix = ResponseMatrix::new(agents, items)?;
        for (agent, item, value, origin) in rows {
            let a = matrix.agent_index(&agent).expect("agent indexed");
            let i = matrix.item_index(&item).expect("item indexed");
            matrix.insert(
                a,
                i,
                MatrixEntry {
                    correct: value,
                    origin,
                },
            )?;
        }
        Ok(matrix)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Map player log records onto cumulative-clue items.
///
/// The matrix spans all bank items and the sorted distinct player ids.
/// Correctness comes from the platform ruling when present, otherwise from
/// fuzzy answer matching. Duplicate (player, item) records keep the first
/// occurrence after a stable sort by (player, qid, clue position,
/// timestamp); conflicting duplicates are logged.
pub fn map_player_responses(
    logs: &[PlayerLogRecord],
    bank: &QuestionBank,
    cfg: &MatchConfig,
) -> Result<ResponseMatrix> {
    for (idx, rec) in logs.iter().enumerate() {
        let q = bank.get(&rec.qid).ok_or_else(|| {
            CoreError::Integrity(format!("record {}: unknown qid {}", idx + 1, rec.qid))
        })?;
        if rec.clue_position < 1 || rec.clue_position > q.clues.len() {
            return Err(CoreError::Integrity(format!(
                "record {}: clue position {} out of range 1..={} for qid {}",
                idx + 1,
                rec.clue_position,
                q.clues.len(),
                rec.qid
            )));
        }
    }

    let mut players: Vec<String> = logs.iter().map(|r| r.player_id.clone()).collect();
    players.sort();
    players.dedup();

    let items: Vec<String> = bank.expand_all().into_iter().map(|it| it.item_id).collect();
    let mut matrix = ResponseMatrix::new(players, items)?;

    let mut order: Vec<usize> = (0..logs.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = &logs[a];
        let rb = &logs[b];
        (&ra.player_id, &ra.qid, ra.clue_position, ra.timestamp).cmp(&(
            &rb.player_id,
            &rb.qid,
            rb.clue_position,
            rb.timestamp,
        ))
    });

    for idx in order {
        let rec = &logs[idx];
        let q = bank.get(&rec.qid).expect("validated above");
        let correct = match rec.ruled_correct {
            Some(v) => v,
            None => rule_answer(&rec.answer_text, q, cfg).correct,
        };
        let a = matrix.agent_index(&rec.player_id).expect("player indexed");
        let i = matrix
            .item_index(&item_id(&rec.qid, rec.clue_position))
            .expect("bank item indexed");
        let existing = matrix.insert_if_absent(
            a,
            i,
            MatrixEntry {
                correct,
                origin: Origin::Observed,
            },
        )?;
        if let Some(prev) = existing {
            if prev.correct != correct {
                log::warn!(
                    "conflicting rulings for player {} on item {}: keeping first ({})",
                    rec.player_id,
                    item_id(&rec.qid, rec.clue_position),
                    if prev.correct { 1 } else { 0 }
                );
            }
        }
    }
    Ok(matrix)
}

/// Refine a matrix by propagating direct rulings along the clue axis.
///
/// For every agent and question: a direct correct ruling at clue t marks all
/// later positions correct, and a direct incorrect ruling at t marks all
/// earlier positions incorrect, unless a direct entry already occupies the
/// cell. Direct entries are never overwritten. When both propagation rules
/// reach the same empty cell, the correct ruling wins. Imputed cells are
/// derived from direct entries only, so the operation is idempotent.
pub fn backfill(matrix: &ResponseMatrix, bank: &QuestionBank) -> Result<ResponseMatrix> {
    // Item indices per question, position-ordered.
    let mut question_items: Vec<(usize, Vec<Option<usize>>)> = Vec::with_capacity(bank.len());
    for (qi, q) in bank.iter().enumerate() {
        let idxs: Vec<Option<usize>> = (1..=q.clues.len())
            .map(|t| matrix.item_index(&item_id(&q.qid, t)))
            .collect();
        question_items.push((qi, idxs));
    }

    let mut out = matrix.clone();
    for agent in 0..matrix.agents().len() {
        for (_, idxs) in &question_items {
            // Direct rulings at each position of this question.
            let direct: Vec<Option<bool>> = idxs
                .iter()
                .map(|slot| {
                    slot.and_then(|j| matrix.get(agent, j))
                        .filter(|e| e.origin.is_direct())
                        .map(|e| e.correct)
                })
                .collect();
            if direct.iter().all(|d| d.is_none()) {
                continue;
            }
            let first_correct = direct.iter().position(|d| *d == Some(true));
            let last_incorrect = direct.iter().rposition(|d| *d == Some(false));
            for (pos, slot) in idxs.iter().enumerate() {
                let Some(j) = slot else { continue };
                if direct[pos].is_some() {
                    continue;
                }
                let fill_correct = first_correct.is_some_and(|t| pos > t);
                let fill_incorrect = last_incorrect.is_some_and(|t| pos < t);
                let value = if fill_correct {
                    Some(true)
                } else if fill_incorrect {
                    Some(false)
                } else {
                    None
                };
                if let Some(correct) = value {
                    out.put(
                        agent,
                        *j,
                        MatrixEntry {
                            correct,
                            origin: Origin::Backfilled,
                        },
                    )?;
                }
            }
        }
    }
    Ok(out)
}
