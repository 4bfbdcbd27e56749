//! Terminal interview: ask the learned questions, recommend, then keep folding in
//! new ratings.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::data::{IdMap, Vote};
use crate::error::{Error, Result};
use crate::iam::{AnswerList, IamModel, Mode};

/// One folded-in rating and the representation before it.
#[derive(Debug, Clone)]
struct Step {
    item: usize,
    before: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub answers: AnswerList,
    pub representation: Vec<f64>,
    pub last_recommendations: Vec<usize>,
    /// Path given to `quit`, already written.
    pub saved_to: Option<String>,
}

pub struct Session<'a> {
    model: &'a IamModel,
    questions: Vec<usize>,
    item_ids: &'a IdMap,
    names: Option<&'a HashMap<String, String>>,
    top_k: usize,
    answers: AnswerList,
    rep: Vec<f64>,
    history: Vec<Step>,
    recommendations: Vec<usize>,
}

const HELP: &str = "commands: like <item> | dislike <item> | undo | recs | quit [path] | help";

impl<'a> Session<'a> {
    pub fn new(
        model: &'a IamModel,
        item_ids: &'a IdMap,
        names: Option<&'a HashMap<String, String>>,
        top_k: usize,
    ) -> Result<Self> {
        if model.mode == Mode::Warm {
            return Err(Error::Mode("the interview needs a cold-start or mixed model".into()));
        }
        let questions = model.interview()?.items;
        Ok(Session {
            model,
            questions,
            item_ids,
            names,
            top_k,
            answers: AnswerList::new(),
            rep: model.psi0.clone(),
            history: Vec::new(),
            recommendations: Vec::new(),
        })
    }

    fn label(&self, item: usize) -> String {
        let id = self.item_ids.original(item).map(str::to_string).unwrap_or_else(|| item.to_string());
        match self.names.and_then(|n| n.get(&id)) {
            Some(name) => format!("{name} [{id}]"),
            None => id,
        }
    }

    fn apply(&mut self, item: usize, vote: Vote) -> Result<()> {
        let next = self.model.update(&self.rep, item, vote)?;
        self.history.push(Step {
            item,
            before: std::mem::replace(&mut self.rep, next),
        });
        self.answers.insert(item, vote);
        Ok(())
    }

    fn undo(&mut self) -> Option<usize> {
        let step = self.history.pop()?;
        self.rep = step.before;
        self.answers.remove(step.item);
        Some(step.item)
    }

    /// Best `top_k` items that were neither asked nor rated, ties by index.
    pub fn recommend(&self) -> Vec<(usize, f64)> {
        let mut scored: Vec<(usize, f64)> = (0..self.model.num_items())
            .filter(|i| !self.questions.contains(i) && !self.answers.contains(*i))
            .map(|i| (i, self.model.score(&self.rep, i)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(self.top_k);
        scored
    }

    fn print_recs<W: Write>(&mut self, out: &mut W) -> std::io::Result<()> {
        let recs = self.recommend();
        writeln!(out, "recommendations:")?;
        for (rank, (i, s)) in recs.iter().enumerate() {
            writeln!(out, "{:>3}. {} ({s:+.4})", rank + 1, self.label(*i))?;
        }
        self.recommendations = recs.into_iter().map(|r| r.0).collect();
        Ok(())
    }

    fn save(&self, path: &str) -> Result<()> {
        let mut text = String::from("# answers\n");
        for &(i, v) in self.answers.entries() {
            let id = self.item_ids.original(i).map(str::to_string).unwrap_or_else(|| i.to_string());
            text.push_str(&format!("{id}\t{}\n", if v == Vote::Like { "+1" } else { "-1" }));
        }
        text.push_str("# representation\n");
        let values: Vec<String> = self.rep.iter().map(|x| format!("{x:e}")).collect();
        text.push_str(&values.join("\t"));
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Drives the whole session. Ends on `quit` or end of input.
    pub fn run<R: BufRead, W: Write>(mut self, input: &mut R, out: &mut W) -> Result<SessionOutcome> {
        let io = |e: std::io::Error| Error::io("<terminal>", e);
        let mut line = String::new();
        let total = self.questions.len();
        writeln!(out, "{total} interview questions; answer like, dislike or skip (done ends the interview)").map_err(io)?;
        let questions = self.questions.clone();
        let mut eof = false;
        'ask: for (n, &item) in questions.iter().enumerate() {
            loop {
                write!(out, "[{}/{total}] {} > ", n + 1, self.label(item)).map_err(io)?;
                out.flush().map_err(io)?;
                line.clear();
                if input.read_line(&mut line).map_err(io)? == 0 {
                    eof = true;
                    break 'ask;
                }
                match line.trim() {
                    "like" | "l" | "+" => self.apply(item, Vote::Like)?,
                    "dislike" | "d" | "-" => self.apply(item, Vote::Dislike)?,
                    "skip" | "s" | "" => {}
                    "done" => break 'ask,
                    other => {
                        writeln!(out, "unrecognized answer {other:?}; type like, dislike or skip").map_err(io)?;
                        continue;
                    }
                }
                break;
            }
        }
        writeln!(out).map_err(io)?;
        self.print_recs(out).map_err(io)?;
        let mut saved_to = None;
        if !eof {
            writeln!(out, "{HELP}").map_err(io)?;
            loop {
                write!(out, "> ").map_err(io)?;
                out.flush().map_err(io)?;
                line.clear();
                if input.read_line(&mut line).map_err(io)? == 0 {
                    break;
                }
                let mut words = line.split_whitespace();
                match (words.next(), words.next()) {
                    (None, _) => continue,
                    (Some(cmd @ ("like" | "dislike")), Some(id)) => {
                        let Some(item) = self.item_ids.get(id) else {
                            writeln!(out, "unknown item {id:?}").map_err(io)?;
                            continue;
                        };
                        if self.answers.contains(item) {
                            writeln!(out, "{} is already rated; undo first", self.label(item)).map_err(io)?;
                            continue;
                        }
                        let vote = if cmd == "like" { Vote::Like } else { Vote::Dislike };
                        self.apply(item, vote)?;
                        self.print_recs(out).map_err(io)?;
                    }
                    (Some("undo"), _) => match self.undo() {
                        Some(item) => {
                            writeln!(out, "removed {}", self.label(item)).map_err(io)?;
                            self.print_recs(out).map_err(io)?;
                        }
                        None => writeln!(out, "nothing to undo").map_err(io)?,
                    },
                    (Some("recs"), _) => self.print_recs(out).map_err(io)?,
                    (Some("quit"), path) => {
                        if let Some(p) = path {
                            self.save(p)?;
                            writeln!(out, "saved representation to {p}").map_err(io)?;
                            saved_to = Some(p.to_string());
                        }
                        break;
                    }
                    (Some("help"), _) => writeln!(out, "{HELP}").map_err(io)?,
                    (Some(other), _) => writeln!(out, "unrecognized command {other:?}; {HELP}").map_err(io)?,
                }
            }
        }
        Ok(SessionOutcome {
            answers: self.answers,
            representation: self.rep,
            last_recommendations: self.recommendations,
            saved_to,
        })
    }
}
