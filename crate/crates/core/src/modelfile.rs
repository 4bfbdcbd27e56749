//! Versioned binary container shared by every model kind.
//!
//! Layout (little-endian): 8-byte magic, `u32` version, `u8` kind, `u64` dims
//! `(U, I, N)`, the hyperparameters, named `f64` arrays, then the user and item id
//! tables. Floats are stored as raw bits, so a round trip is bitwise exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::data::IdMap;
use crate::error::{Error, Result};
use crate::hyper::Hyperparams;
use crate::iam::{IamModel, Interview, InterviewSource, Mode};
use crate::knn::{ItemKnn, ItemSimilarityMatrix};
use crate::linalg::Matrix;
use crate::mf::MfModel;

pub const MAGIC: &[u8; 8] = b"IAMMODEL";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Mf,
    IamWarm,
    IamCold,
    IamCsw,
    ItemKnn,
    Interview,
}

impl ModelKind {
    const ALL: [ModelKind; 6] = [
        ModelKind::Mf,
        ModelKind::IamWarm,
        ModelKind::IamCold,
        ModelKind::IamCsw,
        ModelKind::ItemKnn,
        ModelKind::Interview,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mf => "mf",
            ModelKind::IamWarm => "iam-warm",
            ModelKind::IamCold => "iam-cold",
            ModelKind::IamCsw => "iam-csw",
            ModelKind::ItemKnn => "itemknn",
            ModelKind::Interview => "interview",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    fn code(self) -> u8 {
        Self::ALL.iter().position(|&k| k == self).unwrap() as u8
    }

    fn from_code(c: u8) -> Result<Self> {
        Self::ALL
            .get(c as usize)
            .copied()
            .ok_or_else(|| Error::Format(format!("unknown model kind code {c}")))
    }

    fn of_mode(mode: Mode) -> Self {
        match mode {
            Mode::Warm => ModelKind::IamWarm,
            Mode::Cold => ModelKind::IamCold,
            Mode::Csw => ModelKind::IamCsw,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub kind: ModelKind,
    /// `(U or 0, I, N)`.
    pub dims: (usize, usize, usize),
    pub hyper: Hyperparams,
    pub arrays: Vec<(String, Vec<f64>)>,
    pub user_ids: IdMap,
    pub item_ids: IdMap,
}

/// A decoded model of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Mf(MfModel),
    Iam(IamModel),
    ItemKnn(ItemKnn),
    Interview(Interview),
}

fn bool_array(v: &[bool]) -> Vec<f64> {
    v.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
}

impl ModelFile {
    pub fn array(&self, name: &str) -> Result<&[f64]> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::Format(format!("missing array {name:?} in {} file", self.kind.name())))
    }

    fn sized(&self, name: &str, len: usize) -> Result<&[f64]> {
        let a = self.array(name)?;
        if a.len() != len {
            return Err(Error::Format(format!("array {name:?} has {} values, expected {len}", a.len())));
        }
        Ok(a)
    }

    fn scalar(&self, name: &str) -> Result<f64> {
        Ok(self.sized(name, 1)?[0])
    }

    pub fn from_mf(m: &MfModel, user_ids: &IdMap, item_ids: &IdMap) -> Self {
        ModelFile {
            kind: ModelKind::Mf,
            dims: (m.p.rows, m.q.rows, m.p.cols),
            hyper: m.hyper,
            arrays: vec![
                ("p".into(), m.p.data.clone()),
                ("q".into(), m.q.data.clone()),
                ("known_users".into(), bool_array(&m.known_users)),
            ],
            user_ids: user_ids.clone(),
            item_ids: item_ids.clone(),
        }
    }

    pub fn from_iam(m: &IamModel, item_ids: &IdMap) -> Self {
        ModelFile {
            kind: ModelKind::of_mode(m.mode),
            dims: (0, m.num_items(), m.latent_dim()),
            hyper: m.hyper,
            arrays: vec![
                ("q".into(), m.q.data.clone()),
                ("psi0".into(), m.psi0.clone()),
                ("psi_pos".into(), m.psi_pos.data.clone()),
                ("psi_neg".into(), m.psi_neg.data.clone()),
                ("alpha".into(), m.alpha.clone()),
            ],
            user_ids: IdMap::new(),
            item_ids: item_ids.clone(),
        }
    }

    pub fn from_knn(m: &ItemKnn, item_ids: &IdMap) -> Self {
        let (sims, support) = m.sims.raw();
        ModelFile {
            kind: ModelKind::ItemKnn,
            dims: (0, m.sims.num_items(), 0),
            hyper: Hyperparams::default(),
            arrays: vec![
                ("sims".into(), sims.to_vec()),
                ("support".into(), support.iter().map(|&s| s as f64).collect()),
                ("item_mean".into(), m.item_mean.clone()),
                ("global_mean".into(), vec![m.global_mean]),
                ("k".into(), vec![m.k.map_or(f64::NAN, |k| k as f64)]),
            ],
            user_ids: IdMap::new(),
            item_ids: item_ids.clone(),
        }
    }

    pub fn from_interview(iv: &Interview, num_items: usize, item_ids: &IdMap) -> Self {
        let source = [
            InterviewSource::LearnedAlpha,
            InterviewSource::Pop,
            InterviewSource::Helf,
            InterviewSource::Manual,
        ]
        .iter()
        .position(|&s| s == iv.source)
        .unwrap();
        ModelFile {
            kind: ModelKind::Interview,
            dims: (0, num_items, 0),
            hyper: Hyperparams::default(),
            arrays: vec![
                ("items".into(), iv.items.iter().map(|&i| i as f64).collect()),
                ("weights".into(), iv.weights.clone()),
                ("source".into(), vec![source as f64]),
            ],
            user_ids: IdMap::new(),
            item_ids: item_ids.clone(),
        }
    }

    pub fn decode(&self) -> Result<SavedModel> {
        let (u, i, n) = self.dims;
        Ok(match self.kind {
            ModelKind::Mf => SavedModel::Mf(MfModel {
                p: Matrix::from_vec(u, n, self.sized("p", u * n)?.to_vec()),
                q: Matrix::from_vec(i, n, self.sized("q", i * n)?.to_vec()),
                hyper: self.hyper,
                known_users: self.sized("known_users", u)?.iter().map(|&v| v != 0.0).collect(),
            }),
            ModelKind::IamWarm | ModelKind::IamCold | ModelKind::IamCsw => SavedModel::Iam(IamModel {
                q: Matrix::from_vec(i, n, self.sized("q", i * n)?.to_vec()),
                psi0: self.sized("psi0", n)?.to_vec(),
                psi_pos: Matrix::from_vec(i, n, self.sized("psi_pos", i * n)?.to_vec()),
                psi_neg: Matrix::from_vec(i, n, self.sized("psi_neg", i * n)?.to_vec()),
                alpha: self.sized("alpha", i)?.to_vec(),
                mode: match self.kind {
                    ModelKind::IamWarm => Mode::Warm,
                    ModelKind::IamCold => Mode::Cold,
                    _ => Mode::Csw,
                },
                hyper: self.hyper,
            }),
            ModelKind::ItemKnn => {
                let sims = self.sized("sims", i * i)?.to_vec();
                let support = self.sized("support", i * i)?.iter().map(|&s| s as u32).collect();
                let k = self.scalar("k")?;
                SavedModel::ItemKnn(ItemKnn {
                    sims: Arc::new(ItemSimilarityMatrix::from_raw(i, sims, support)),
                    item_mean: self.sized("item_mean", i)?.to_vec(),
                    global_mean: self.scalar("global_mean")?,
                    k: if k.is_nan() { None } else { Some(k as usize) },
                })
            }
            ModelKind::Interview => {
                let items: Vec<usize> = self.array("items")?.iter().map(|&v| v as usize).collect();
                let weights = self.sized("weights", items.len())?.to_vec();
                let source = match self.scalar("source")? as usize {
                    0 => InterviewSource::LearnedAlpha,
                    1 => InterviewSource::Pop,
                    2 => InterviewSource::Helf,
                    _ => InterviewSource::Manual,
                };
                SavedModel::Interview(Interview { items, weights, source })
            }
        })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        w.write_u8(self.kind.code())?;
        for d in [self.dims.0, self.dims.1, self.dims.2] {
            w.write_u64::<LE>(d as u64)?;
        }
        let h = &self.hyper;
        w.write_u64::<LE>(h.latent_dim as u64)?;
        w.write_f64::<LE>(h.learning_rate)?;
        w.write_f64::<LE>(h.lambda1)?;
        w.write_f64::<LE>(h.lambda2)?;
        w.write_u64::<LE>(h.epochs as u64)?;
        w.write_u64::<LE>(h.seed)?;
        w.write_u32::<LE>(self.arrays.len() as u32)?;
        for (name, values) in &self.arrays {
            write_str(w, name)?;
            w.write_u64::<LE>(values.len() as u64)?;
            for &v in values {
                w.write_u64::<LE>(v.to_bits())?;
            }
        }
        for ids in [&self.user_ids, &self.item_ids] {
            w.write_u64::<LE>(ids.len() as u64)?;
            for id in ids.ids() {
                write_str(w, id)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let fmt = |e: std::io::Error| Error::Format(format!("truncated or unreadable model file: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(fmt)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = r.read_u32::<LE>().map_err(fmt)?;
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        let kind = ModelKind::from_code(r.read_u8().map_err(fmt)?)?;
        let mut dims = [0usize; 3];
        for d in &mut dims {
            *d = r.read_u64::<LE>().map_err(fmt)? as usize;
        }
        let hyper = Hyperparams {
            latent_dim: r.read_u64::<LE>().map_err(fmt)? as usize,
            learning_rate: r.read_f64::<LE>().map_err(fmt)?,
            lambda1: r.read_f64::<LE>().map_err(fmt)?,
            lambda2: r.read_f64::<LE>().map_err(fmt)?,
            epochs: r.read_u64::<LE>().map_err(fmt)? as usize,
            seed: r.read_u64::<LE>().map_err(fmt)?,
        };
        let count = r.read_u32::<LE>().map_err(fmt)?;
        let mut arrays = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name = read_str(r)?;
            let len = r.read_u64::<LE>().map_err(fmt)? as usize;
            let mut values = Vec::with_capacity(len.min(1 << 28));
            for _ in 0..len {
                values.push(f64::from_bits(r.read_u64::<LE>().map_err(fmt)?));
            }
            arrays.push((name, values));
        }
        let mut maps = Vec::with_capacity(2);
        for _ in 0..2 {
            let len = r.read_u64::<LE>().map_err(fmt)? as usize;
            let mut ids = Vec::with_capacity(len.min(1 << 24));
            for _ in 0..len {
                ids.push(read_str(r)?);
            }
            maps.push(IdMap::from_ids(ids));
        }
        let item_ids = maps.pop().unwrap();
        let user_ids = maps.pop().unwrap();
        Ok(ModelFile {
            kind,
            dims: (dims[0], dims[1], dims[2]),
            hyper,
            arrays,
            user_ids,
            item_ids,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let fmt = |e: std::io::Error| Error::Format(format!("truncated string: {e}"));
    let len = r.read_u32::<LE>().map_err(fmt)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(fmt)?;
    String::from_utf8(buf).map_err(|_| Error::Format("string is not UTF-8".into()))
}
