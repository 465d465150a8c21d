use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tokenize;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token index plus a frozen embedding table. Rows for `<pad>` and `<unk>`
/// are zero; the model owns a trainable vector for unknown tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    table: Vec<f32>,
}

impl Vocabulary {
    pub fn empty(dim: usize) -> Self {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
            dim,
            table: Vec::new(),
        };
        v.push(PAD_TOKEN, &vec![0.0; dim]);
        v.push(UNK_TOKEN, &vec![0.0; dim]);
        v
    }

    fn push(&mut self, token: &str, vector: &[f32]) -> bool {
        if self.index.contains_key(token) {
            return false;
        }
        self.index.insert(token.to_string(), self.tokens.len());
        self.tokens.push(token.to_string());
        self.table.extend_from_slice(vector);
        true
    }

    /// Adds a token with its vector. Returns `false` if already present.
    pub fn insert(&mut self, token: &str, vector: &[f32]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::dim("vocabulary", &[self.dim], &[vector.len()]));
        }
        Ok(self.push(token, vector))
    }

    /// Reads a whitespace-separated embedding file: a token followed by its
    /// vector components, one token per line. The first line fixes the
    /// dimension. With `keep`, only those tokens are retained.
    pub fn load(path: &Path, keep: Option<&HashSet<String>>) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut vocab: Option<Vocabulary> = None;
        let load_err = |line: usize, reason: String| Error::Load {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let mut values = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().unwrap();
            values.clear();
            for p in parts {
                let x: f32 = p
                    .parse()
                    .map_err(|_| load_err(lineno, format!("bad number {p:?}")))?;
                if !x.is_finite() {
                    return Err(load_err(lineno, format!("non-finite value {p:?}")));
                }
                values.push(x);
            }
            if values.is_empty() {
                return Err(load_err(lineno, "token has no vector".into()));
            }
            let v = vocab.get_or_insert_with(|| Vocabulary::empty(values.len()));
            if values.len() != v.dim {
                return Err(load_err(
                    lineno,
                    format!("expected {} values, found {}", v.dim, values.len()),
                ));
            }
            if token == PAD_TOKEN || token == UNK_TOKEN {
                continue;
            }
            if keep.is_none_or(|k| k.contains(token)) {
                v.push(token, &values);
            }
        }
        vocab.ok_or_else(|| load_err(0, "embedding file is empty".into()))
    }

    /// Seeded random vectors for every token in `tokens`, in first-seen
    /// order. Used when no pretrained embeddings are supplied.
    pub fn random<'a>(tokens: impl IntoIterator<Item = &'a str>, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = Vocabulary::empty(dim);
        let mut buf = vec![0.0f32; dim];
        for t in tokens {
            if v.index.contains_key(t) {
                continue;
            }
            buf.iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5));
            v.push(t, &buf);
        }
        v
    }

    /// Writes every token except `<pad>`/`<unk>` in the loadable format.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (i, tok) in self.tokens.iter().enumerate().skip(2) {
            out.push_str(tok);
            for x in self.vector(i) {
                write!(out, " {x}").unwrap();
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn vector(&self, id: usize) -> &[f32] {
        &self.table[id * self.dim..(id + 1) * self.dim]
    }

    /// Token ids for `text`; an empty text encodes as a single `<unk>`.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let ids: Vec<usize> = tokenize(text).iter().map(|t| self.id(t)).collect();
        if ids.is_empty() {
            vec![UNK]
        } else {
            ids
        }
    }
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    #[test]
    fn load_and_encode() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "true 0.1 0.2 0.3").unwrap();
        writeln!(f, "? -1 0 1").unwrap();
        writeln!(f, "true 9 9 9").unwrap();
        let v = Vocabulary::load(f.path(), None).unwrap();
        assert_eq!(v.dim(), 3);
        assert_eq!(v.len(), 4);
        assert_eq!(v.vector(v.id("true")), &[0.1, 0.2, 0.3]);
        assert_eq!(v.vector(PAD), &[0.0; 3]);
        assert_eq!(v.encode("@CP24 True?"), vec![UNK, v.id("true"), v.id("?")]);
        assert_eq!(v.encode(""), vec![UNK]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "a 1 2").unwrap();
        writeln!(f, "b 1 x").unwrap();
        match Vocabulary::load(f.path(), None) {
            Err(Error::Load { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "a 1 2").unwrap();
        writeln!(f, "b 1 2 3").unwrap();
        assert!(matches!(Vocabulary::load(f.path(), None), Err(Error::Load { line: 2, .. })));
    }

    #[test]
    fn save_roundtrip_and_filter() {
        let v = Vocabulary::random(["a", "b", "a", "c"], 4, 1);
        assert_eq!(v.len(), 5);
        let f = tempfile::NamedTempFile::new().unwrap();
        v.save(f.path()).unwrap();
        assert_eq!(Vocabulary::load(f.path(), None).unwrap(), v);
        let keep: HashSet<String> = ["c".to_string()].into();
        let w = Vocabulary::load(f.path(), Some(&keep)).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w.vector(w.id("c")), v.vector(v.id("c")));
    }
}
