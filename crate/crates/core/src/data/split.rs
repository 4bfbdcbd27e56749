use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{SparseRatings, Vote};
use crate::error::{Error, Result};

const MANIFEST_MAGIC: &str = "iam-split 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UserSet {
    Train,
    Valid,
    Test,
}

impl UserSet {
    pub fn name(self) -> &'static str {
        match self {
            UserSet::Train => "train",
            UserSet::Valid => "valid",
            UserSet::Test => "test",
        }
    }
}

impl std::str::FromStr for UserSet {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(UserSet::Train),
            "valid" | "validation" => Ok(UserSet::Valid),
            "test" => Ok(UserSet::Test),
            other => Err(format!("unknown user set {other:?}")),
        }
    }
}

/// Partition of the users into train / validation / test pools.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserSplit {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl UserSplit {
    pub fn users(&self, set: UserSet) -> &[usize] {
        match set {
            UserSet::Train => &self.train,
            UserSet::Valid => &self.valid,
            UserSet::Test => &self.test,
        }
    }
}

pub const DEFAULT_FRACTIONS: (f64, f64) = (0.5, 0.25);

/// Seeded uniform shuffle of the users cut into `⌊f_train·U⌋`, `⌊f_valid·U⌋` and the remainder.
pub fn split_users(data: &SparseRatings, seed: u64, fractions: (f64, f64)) -> Result<UserSplit> {
    let n = data.num_users();
    if n < 4 {
        return Err(Error::TooFewUsers(n));
    }
    let (ft, fv) = fractions;
    let n_train = (ft * n as f64).floor() as usize;
    let n_valid = (fv * n as f64).floor() as usize;
    assert!(n_train + n_valid <= n, "fractions exceed one");
    let mut users: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    users.shuffle(&mut rng);
    let mut train = users[..n_train].to_vec();
    let mut valid = users[n_train..n_train + n_valid].to_vec();
    let mut test = users[n_train + n_valid..].to_vec();
    train.sort_unstable();
    valid.sort_unstable();
    test.sort_unstable();
    Ok(UserSplit {
        train,
        valid,
        test,
        seed,
    })
}

/// The full simulation protocol: user pools plus the Answer / Evaluation halves
/// of every validation and test user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub users: UserSplit,
    pub answers: BTreeMap<usize, Vec<(usize, Vote)>>,
    pub evaluation: BTreeMap<usize, Vec<(usize, Vote)>>,
    pub answer_seed: u64,
}

/// Cuts each evaluation user's shuffled ratings at `⌈fraction·n⌉`: the first part is
/// the Answer Set, the rest the Evaluation Set. Users with fewer than two ratings
/// only get an Evaluation Set.
pub fn split_answers(
    data: &SparseRatings,
    users: &UserSplit,
    seed: u64,
    fraction: f64,
) -> DatasetSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut eval_users: Vec<usize> = users.valid.iter().chain(&users.test).copied().collect();
    eval_users.sort_unstable();
    let mut answers = BTreeMap::new();
    let mut evaluation = BTreeMap::new();
    for u in eval_users {
        let mut ratings = data.user_ratings(u).to_vec();
        let cut = if ratings.len() < 2 {
            0
        } else {
            (fraction * ratings.len() as f64).ceil() as usize
        };
        ratings.shuffle(&mut rng);
        let mut a = ratings[..cut].to_vec();
        let mut e = ratings[cut..].to_vec();
        a.sort_unstable_by_key(|x| x.0);
        e.sort_unstable_by_key(|x| x.0);
        answers.insert(u, a);
        evaluation.insert(u, e);
    }
    DatasetSplit {
        users: users.clone(),
        answers,
        evaluation,
        answer_seed: seed,
    }
}

impl DatasetSplit {
    /// Both stages with the default fractions and one seed.
    pub fn protocol(data: &SparseRatings, seed: u64) -> Result<Self> {
        let users = split_users(data, seed, DEFAULT_FRACTIONS)?;
        Ok(split_answers(data, &users, seed, 0.5))
    }

    pub fn users(&self, set: UserSet) -> &[usize] {
        self.users.users(set)
    }

    pub fn answers_of(&self, user: usize) -> &[(usize, Vote)] {
        self.answers.get(&user).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn evaluation_of(&self, user: usize) -> &[(usize, Vote)] {
        self.evaluation.get(&user).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Ratings of the training users only.
    pub fn training_data(&self, data: &SparseRatings) -> SparseRatings {
        data.restrict_users(&self.users.train)
    }

    /// Training ratings plus the Answer-Set ratings of `set` accepted by `item_filter`.
    pub fn training_with_answers(
        &self,
        data: &SparseRatings,
        set: UserSet,
        item_filter: impl Fn(usize) -> bool,
    ) -> SparseRatings {
        let mut extra_users = vec![false; data.num_users()];
        for &u in self.users(set) {
            extra_users[u] = true;
        }
        let mut is_train = vec![false; data.num_users()];
        for &u in &self.users.train {
            is_train[u] = true;
        }
        data.filter(|t| {
            if is_train[t.user] {
                return true;
            }
            if !extra_users[t.user] || !item_filter(t.item) {
                return false;
            }
            self.answers_of(t.user)
                .binary_search_by_key(&t.item, |e| e.0)
                .is_ok()
        })
    }

    /// Text manifest; identical splits serialize to identical bytes.
    pub fn to_manifest(&self, data: &SparseRatings) -> String {
        let mut out = String::new();
        writeln!(out, "{MANIFEST_MAGIC}").unwrap();
        writeln!(out, "seed {} {}", self.users.seed, self.answer_seed).unwrap();
        writeln!(out, "shape {} {}", data.num_users(), data.num_items()).unwrap();
        for (name, list) in [
            ("train", &self.users.train),
            ("valid", &self.users.valid),
            ("test", &self.users.test),
        ] {
            out.push_str(name);
            for u in list {
                write!(out, " {u}").unwrap();
            }
            out.push('\n');
        }
        for (tag, map) in [("answers", &self.answers), ("evaluation", &self.evaluation)] {
            for (u, list) in map {
                write!(out, "{tag} {u}").unwrap();
                for (i, v) in list {
                    let s = if *v == Vote::Like { '+' } else { '-' };
                    write!(out, " {i}:{s}").unwrap();
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_manifest(text: &str) -> Result<(DatasetSplit, (usize, usize))> {
        let bad = |line: usize, msg: &str| Error::Parse {
            line,
            message: msg.to_string(),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == MANIFEST_MAGIC => {}
            _ => return Err(bad(1, "missing split manifest header")),
        }
        let mut seeds = None;
        let mut shape = None;
        let mut train = Vec::new();
        let mut valid = Vec::new();
        let mut test = Vec::new();
        let mut answers = BTreeMap::new();
        let mut evaluation = BTreeMap::new();
        for (n, line) in lines {
            let n = n + 1;
            let mut parts = line.split_whitespace();
            let Some(tag) = parts.next() else { continue };
            let nums = |parts: std::str::SplitWhitespace| -> Result<Vec<usize>> {
                parts
                    .map(|p| p.parse::<usize>().map_err(|_| bad(n, "invalid index")))
                    .collect()
            };
            match tag {
                "seed" => {
                    let v: Vec<u64> = parts
                        .map(|p| p.parse::<u64>().map_err(|_| bad(n, "invalid seed")))
                        .collect::<Result<_>>()?;
                    if v.len() != 2 {
                        return Err(bad(n, "seed line needs two values"));
                    }
                    seeds = Some((v[0], v[1]));
                }
                "shape" => {
                    let v = nums(parts)?;
                    if v.len() != 2 {
                        return Err(bad(n, "shape line needs two values"));
                    }
                    shape = Some((v[0], v[1]));
                }
                "train" => train = nums(parts)?,
                "valid" => valid = nums(parts)?,
                "test" => test = nums(parts)?,
                "answers" | "evaluation" => {
                    let user: usize = parts
                        .next()
                        .and_then(|p| p.parse().ok())
                        .ok_or_else(|| bad(n, "missing user"))?;
                    let mut list = Vec::new();
                    for p in parts {
                        let (i, s) = p.split_once(':').ok_or_else(|| bad(n, "expected item:sign"))?;
                        let i: usize = i.parse().map_err(|_| bad(n, "invalid item"))?;
                        let v = match s {
                            "+" => Vote::Like,
                            "-" => Vote::Dislike,
                            _ => return Err(bad(n, "sign must be + or -")),
                        };
                        list.push((i, v));
                    }
                    let map = if tag == "answers" {
                        &mut answers
                    } else {
                        &mut evaluation
                    };
                    map.insert(user, list);
                }
                _ => return Err(bad(n, "unknown manifest line")),
            }
        }
        let (user_seed, answer_seed) = seeds.ok_or_else(|| bad(0, "missing seed line"))?;
        let shape = shape.ok_or_else(|| bad(0, "missing shape line"))?;
        Ok((
            DatasetSplit {
                users: UserSplit {
                    train,
                    valid,
                    test,
                    seed: user_seed,
                },
                answers,
                evaluation,
                answer_seed,
            },
            shape,
        ))
    }

    pub fn save(&self, data: &SparseRatings, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_manifest(data)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(DatasetSplit, (usize, usize))> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_manifest(&text)
    }
}
