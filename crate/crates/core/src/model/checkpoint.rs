//! Plain-text parameter container. Values are stored as the hexadecimal bit
//! pattern of each `f64`, so a write/read round trip is bit-exact.
//!
//! ```text
//! dacdr-checkpoint 1
//! variant <name>
//! meta <key> <value…>
//! vocab <name> <count>
//! <one id per line>
//! param <name> <rows> <cols> <trainable 0|1>
//! <one line of hex words per row>
//! end
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::autograd::Tensor;
use crate::data::{Vocab, Vocabularies};

use super::params::ParamStore;
use super::ModelError;

pub const CHECKPOINT_MAGIC: &str = "dacdr-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub variant: String,
    pub meta: BTreeMap<String, String>,
    pub vocab: Vocabularies,
    pub params: ParamStore,
}

const VOCAB_NAMES: [&str; 5] = ["users", "src_items", "tgt_items", "categories", "domains"];

fn vocab_slots(v: &Vocabularies) -> [&Vocab; 5] {
    [&v.users, &v.src_items, &v.tgt_items, &v.categories, &v.domains]
}

impl Checkpoint {
    pub fn to_text(&self) -> Result<String, ModelError> {
        let mut out = String::new();
        let bad = |what: &str, s: &str| {
            ModelError::Checkpoint(format!("{what} `{s}` contains a forbidden line break or space"))
        };
        writeln!(out, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}").unwrap();
        writeln!(out, "variant {}", self.variant).unwrap();
        for (k, v) in &self.meta {
            if k.contains(char::is_whitespace) || v.contains('\n') {
                return Err(bad("meta entry", k));
            }
            writeln!(out, "meta {k} {v}").unwrap();
        }
        for (name, vocab) in VOCAB_NAMES.iter().zip(vocab_slots(&self.vocab)) {
            writeln!(out, "vocab {name} {}", vocab.len()).unwrap();
            for id in vocab.ids() {
                if id.contains('\n') || id.contains('\r') {
                    return Err(bad("id", id));
                }
                writeln!(out, "{id}").unwrap();
            }
        }
        for id in self.params.ids() {
            let t = self.params.tensor(id);
            let trainable = self.params.is_trainable(id) as u8;
            writeln!(
                out,
                "param {} {} {} {trainable}",
                self.params.name(id),
                t.rows(),
                t.cols()
            )
            .unwrap();
            for r in 0..t.rows() {
                let row: Vec<String> = t.row(r).iter().map(|x| format!("{:016x}", x.to_bits())).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out.push_str("end\n");
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let err = |line: usize, msg: &str| ModelError::Checkpoint(format!("line {}: {msg}", line + 1));
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| ModelError::Checkpoint(format!("truncated checkpoint: expected {what}")))
        };

        let (n, head) = next("header")?;
        let version = head
            .strip_prefix(CHECKPOINT_MAGIC)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| err(n, "not a checkpoint file"))?;
        if version != CHECKPOINT_VERSION {
            return Err(err(n, &format!("unsupported checkpoint version {version}")));
        }
        let (n, line) = next("variant")?;
        let variant = line
            .strip_prefix("variant ")
            .ok_or_else(|| err(n, "expected `variant`"))?
            .to_string();

        let mut meta = BTreeMap::new();
        let mut vocabs: Vec<Vocab> = Vec::new();
        let mut params = ParamStore::new();
        loop {
            let (n, line) = next("`end`")?;
            if line == "end" {
                break;
            }
            let mut words = line.splitn(2, ' ');
            let tag = words.next().unwrap_or_default();
            let rest = words.next().unwrap_or_default();
            match tag {
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    meta.insert(k.to_string(), v.to_string());
                }
                "vocab" => {
                    let (name, count) = rest
                        .split_once(' ')
                        .ok_or_else(|| err(n, "malformed vocab header"))?;
                    if VOCAB_NAMES.get(vocabs.len()) != Some(&name) {
                        return Err(err(n, &format!("unexpected vocabulary `{name}`")));
                    }
                    let count: usize = count.parse().map_err(|_| err(n, "bad vocab count"))?;
                    let mut v = Vocab::new();
                    for _ in 0..count {
                        let (_, id) = next("vocabulary id")?;
                        v.intern(id);
                    }
                    if v.len() != count {
                        return Err(err(n, &format!("duplicate ids in vocabulary `{name}`")));
                    }
                    vocabs.push(v);
                }
                "param" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    if f.len() != 4 {
                        return Err(err(n, "malformed param header"));
                    }
                    let rows: usize = f[1].parse().map_err(|_| err(n, "bad row count"))?;
                    let cols: usize = f[2].parse().map_err(|_| err(n, "bad column count"))?;
                    let trainable = match f[3] {
                        "0" => false,
                        "1" => true,
                        _ => return Err(err(n, "bad trainable flag")),
                    };
                    let mut data = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        let (rn, row) = next("parameter row")?;
                        let before = data.len();
                        for w in row.split(' ').filter(|w| !w.is_empty()) {
                            let bits =
                                u64::from_str_radix(w, 16).map_err(|_| err(rn, "bad hex value"))?;
                            data.push(f64::from_bits(bits));
                        }
                        if data.len() - before != cols {
                            return Err(err(rn, &format!("expected {cols} values")));
                        }
                    }
                    let t = Tensor::new(rows, cols, data)?;
                    let id = params.insert(f[0], t)?;
                    params.set_trainable(id, trainable);
                }
                other => return Err(err(n, &format!("unknown section `{other}`"))),
            }
        }
        if vocabs.len() != VOCAB_NAMES.len() {
            return Err(ModelError::Checkpoint("missing vocabulary sections".into()));
        }
        let mut it = vocabs.into_iter();
        let vocab = Vocabularies {
            users: it.next().unwrap(),
            src_items: it.next().unwrap(),
            tgt_items: it.next().unwrap(),
            categories: it.next().unwrap(),
            domains: it.next().unwrap(),
        };
        Ok(Self {
            variant,
            meta,
            vocab,
            params,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_text()?).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn read(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text)
    }
}
