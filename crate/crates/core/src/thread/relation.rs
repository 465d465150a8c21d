use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::Post;

/// How post `i` relates to post `j` in a chronologically ordered thread.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum Relation {
    /// `i` directly replies to `j`.
    Parent = 0,
    /// `j` directly replies to `i`.
    Child = 1,
    Before = 2,
    After = 3,
    #[serde(rename = "self")]
    Itself = 4,
}

impl Relation {
    pub const COUNT: usize = 5;
    pub const ALL: [Relation; 5] = [
        Relation::Parent,
        Relation::Child,
        Relation::Before,
        Relation::After,
        Relation::Itself,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> char {
        match self {
            Relation::Parent => 'P',
            Relation::Child => 'C',
            Relation::Before => 'B',
            Relation::After => 'A',
            Relation::Itself => 'S',
        }
    }

    pub fn from_code(c: char) -> Option<Relation> {
        Relation::ALL.into_iter().find(|r| r.code() == c)
    }

    pub fn inverse(self) -> Relation {
        match self {
            Relation::Parent => Relation::Child,
            Relation::Child => Relation::Parent,
            Relation::Before => Relation::After,
            Relation::After => Relation::Before,
            Relation::Itself => Relation::Itself,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Relation::Parent => "parent",
            Relation::Child => "child",
            Relation::Before => "before",
            Relation::After => "after",
            Relation::Itself => "self",
        };
        f.write_str(s)
    }
}

/// Label of the pair `(i, j)`. Rules apply in order: self, parent, child,
/// before, after.
pub fn relation_label(i: usize, j: usize, posts: &[Post]) -> Relation {
    if i == j {
        Relation::Itself
    } else if posts[i].parent_id.as_deref() == Some(posts[j].id.as_str()) {
        Relation::Parent
    } else if posts[j].parent_id.as_deref() == Some(posts[i].id.as_str()) {
        Relation::Child
    } else if i < j {
        Relation::Before
    } else {
        Relation::After
    }
}

/// Dense `n×n` relation labels, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationMatrix {
    n: usize,
    labels: Vec<Relation>,
}

impl RelationMatrix {
    pub fn build(posts: &[Post]) -> Self {
        let n = posts.len();
        let mut labels = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                labels.push(relation_label(i, j, posts));
            }
        }
        RelationMatrix { n, labels }
    }

    pub fn from_labels(n: usize, labels: Vec<Relation>) -> Option<Self> {
        (labels.len() == n * n).then_some(RelationMatrix { n, labels })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> Relation {
        self.labels[i * self.n + j]
    }

    pub fn labels(&self) -> &[Relation] {
        &self.labels
    }

    pub fn indices(&self) -> Vec<u8> {
        self.labels.iter().map(|&r| r as u8).collect()
    }

    /// Leading `k×k` block.
    pub fn truncate(&self, k: usize) -> RelationMatrix {
        let k = k.min(self.n);
        let mut labels = Vec::with_capacity(k * k);
        for i in 0..k {
            labels.extend_from_slice(&self.labels[i * self.n..i * self.n + k]);
        }
        RelationMatrix { n: k, labels }
    }

    /// Reorders rows and columns so that new position `a` holds old
    /// position `order[a]`.
    pub fn permute(&self, order: &[usize]) -> RelationMatrix {
        let n = self.n;
        let mut labels = Vec::with_capacity(n * n);
        for &oi in order {
            for &oj in order {
                labels.push(self.get(oi, oj));
            }
        }
        RelationMatrix { n, labels }
    }

    /// Checks the structural invariants: self on the diagonal, and each
    /// label's inverse at the transposed cell.
    pub fn is_consistent(&self) -> bool {
        (0..self.n).all(|i| {
            (0..self.n).all(|j| {
                let r = self.get(i, j);
                (i == j) == (r == Relation::Itself) && self.get(j, i) == r.inverse()
            })
        })
    }

    pub fn rows(&self) -> Vec<String> {
        self.labels
            .chunks(self.n.max(1))
            .take(self.n)
            .map(|row| row.iter().map(|r| r.code()).collect())
            .collect()
    }

    pub fn from_rows(rows: &[String]) -> Option<Self> {
        let n = rows.len();
        let mut labels = Vec::with_capacity(n * n);
        for row in rows {
            let before = labels.len();
            for c in row.chars() {
                labels.push(Relation::from_code(c)?);
            }
            if labels.len() - before != n {
                return None;
            }
        }
        Some(RelationMatrix { n, labels })
    }
}

impl Serialize for RelationMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for RelationMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<String>::deserialize(d)?;
        RelationMatrix::from_rows(&rows)
            .ok_or_else(|| serde::de::Error::custom("malformed relation matrix"))
    }
}
