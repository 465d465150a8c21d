use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thread::Thread;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Membership read from released split files.
    #[serde(alias = "fixed-splits")]
    Fixed,
    /// One fold per event, holding that event out entirely.
    EventCv,
    /// Seeded shuffle with `test_fraction` held out.
    Random,
}

fn default_val_fraction() -> f64 {
    0.1
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitPlan {
    pub mode: SplitMode,
    #[serde(default)]
    pub seed: u64,
    /// Share of each training set held out for early stopping.
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_file: Option<PathBuf>,
}

impl SplitPlan {
    pub fn random(seed: u64) -> Self {
        SplitPlan {
            mode: SplitMode::Random,
            seed,
            val_fraction: default_val_fraction(),
            test_fraction: default_test_fraction(),
            train_file: None,
            test_file: None,
        }
    }
}

/// Indices into the thread list for one train/validation/test partition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fold {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub held_out_event: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub train_events: Vec<String>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Claim ids, one per line; blank lines and `#` comments are skipped.
pub fn read_split_file(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

/// Moves a seeded share of `train` into a validation list. At least one
/// thread is held out whenever two or more are available.
fn hold_out(mut train: Vec<usize>, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    if train.len() < 2 || fraction <= 0.0 {
        return (train, Vec::new());
    }
    train.sort_unstable();
    train.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = ((train.len() as f64 * fraction).ceil() as usize).clamp(1, train.len() - 1);
    let val = train.split_off(train.len() - k);
    let (mut train, mut val) = (train, val);
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

pub fn make_splits(threads: &[Thread], plan: &SplitPlan) -> Result<Vec<Fold>> {
    if !(0.0..1.0).contains(&plan.val_fraction) {
        return Err(Error::Config(format!("val_fraction {} outside [0, 1)", plan.val_fraction)));
    }
    match plan.mode {
        SplitMode::Fixed => fixed(threads, plan),
        SplitMode::Random => random(threads, plan),
        SplitMode::EventCv => event_cv(threads, plan),
    }
}

fn fixed(threads: &[Thread], plan: &SplitPlan) -> Result<Vec<Fold>> {
    let (Some(train_file), Some(test_file)) = (&plan.train_file, &plan.test_file) else {
        return Err(Error::Config("fixed splits need train_file and test_file".into()));
    };
    let index: HashMap<&str, usize> = threads.iter().enumerate().map(|(i, t)| (t.claim_id.as_str(), i)).collect();
    let resolve = |path: &Path| -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for id in read_split_file(path)? {
            let i = index
                .get(id.as_str())
                .ok_or_else(|| Error::Data(format!("{}: unknown claim id {id}", path.display())))?;
            out.push(*i);
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    };
    let train = resolve(train_file)?;
    let test = resolve(test_file)?;
    if let Some(&dup) = test.iter().find(|i| train.binary_search(i).is_ok()) {
        return Err(Error::Data(format!("claim {} is in both split files", threads[dup].claim_id)));
    }
    let (train, val) = hold_out(train, plan.val_fraction, plan.seed);
    Ok(vec![Fold {
        name: "fixed".into(),
        held_out_event: None,
        train_events: Vec::new(),
        train,
        val,
        test,
    }])
}

fn random(threads: &[Thread], plan: &SplitPlan) -> Result<Vec<Fold>> {
    if !(0.0..1.0).contains(&plan.test_fraction) {
        return Err(Error::Config(format!("test_fraction {} outside [0, 1)", plan.test_fraction)));
    }
    let mut all: Vec<usize> = (0..threads.len()).collect();
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(plan.seed));
    let k = (threads.len() as f64 * plan.test_fraction).round() as usize;
    let mut test = all.split_off(threads.len() - k);
    test.sort_unstable();
    let (train, val) = hold_out(all, plan.val_fraction, plan.seed.wrapping_add(1));
    Ok(vec![Fold {
        name: "random".into(),
        held_out_event: None,
        train_events: Vec::new(),
        train,
        val,
        test,
    }])
}

fn event_cv(threads: &[Thread], plan: &SplitPlan) -> Result<Vec<Fold>> {
    let mut events = BTreeSet::new();
    for t in threads {
        match &t.event {
            Some(e) => {
                events.insert(e.as_str());
            }
            None => return Err(Error::Data(format!("claim {} has no event tag", t.claim_id))),
        }
    }
    if events.len() < 2 {
        return Err(Error::Data(format!("event-cv needs at least two events, found {}", events.len())));
    }
    Ok(events
        .iter()
        .enumerate()
        .map(|(f, &held)| {
            let in_event = |i: &usize| threads[*i].event.as_deref() == Some(held);
            let (test, train): (Vec<usize>, Vec<usize>) = (0..threads.len()).partition(in_event);
            let (train, val) = hold_out(train, plan.val_fraction, plan.seed.wrapping_add(f as u64));
            Fold {
                name: held.to_string(),
                held_out_event: Some(held.to_string()),
                train_events: events.iter().filter(|&&e| e != held).map(|e| e.to_string()).collect(),
                train,
                val,
                test,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;
    use crate::synth::random_thread;
    use crate::thread::Dataset;

    fn corpus(n: usize, events: usize) -> Vec<Thread> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        (0..n)
            .map(|i| {
                let mut t = random_thread(&mut rng, 3, Dataset::Pheme);
                t.claim_id = format!("c{i}");
                t.event = (events > 0).then(|| format!("event{}", i % events));
                t
            })
            .collect()
    }

    fn disjoint(f: &Fold) -> bool {
        let mut all: Vec<usize> = f.train.iter().chain(&f.val).chain(&f.test).copied().collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        all.len() == n
    }

    #[test]
    fn event_folds() {
        let threads = corpus(50, 5);
        let folds = make_splits(&threads, &SplitPlan { mode: SplitMode::EventCv, ..SplitPlan::random(0) }).unwrap();
        assert_eq!(folds.len(), 5);
        for f in &folds {
            assert!(disjoint(f));
            assert_eq!(f.train.len() + f.val.len() + f.test.len(), 50);
            let held = f.held_out_event.as_deref().unwrap();
            assert!(f.test.iter().all(|&i| threads[i].event.as_deref() == Some(held)));
            assert!(f.train.iter().chain(&f.val).all(|&i| threads[i].event.as_deref() != Some(held)));
            assert_eq!(f.train_events.len(), 4);
        }
        let untagged = corpus(5, 0);
        let plan = SplitPlan { mode: SplitMode::EventCv, ..SplitPlan::random(0) };
        assert!(matches!(make_splits(&untagged, &plan), Err(Error::Data(_))));
    }

    #[test]
    fn random_is_seeded() {
        let threads = corpus(40, 0);
        let a = make_splits(&threads, &SplitPlan::random(7)).unwrap();
        assert_eq!(a, make_splits(&threads, &SplitPlan::random(7)).unwrap());
        assert_ne!(a, make_splits(&threads, &SplitPlan::random(8)).unwrap());
        assert_eq!(a[0].test.len(), 8);
        assert_eq!(a[0].val.len(), 4);
        assert!(disjoint(&a[0]));
    }

    #[test]
    fn fixed_files() {
        let threads = corpus(10, 0);
        let mut train = tempfile::NamedTempFile::new().unwrap();
        let mut test = tempfile::NamedTempFile::new().unwrap();
        for i in 0..7 {
            writeln!(train, "c{i}").unwrap();
        }
        writeln!(test, "# held out\nc7\n\nc8\nc9").unwrap();
        let plan = SplitPlan {
            mode: SplitMode::Fixed,
            train_file: Some(train.path().into()),
            test_file: Some(test.path().into()),
            ..SplitPlan::random(1)
        };
        let f = &make_splits(&threads, &plan).unwrap()[0];
        assert_eq!(f.test, vec![7, 8, 9]);
        let mut tv: Vec<usize> = f.train.iter().chain(&f.val).copied().collect();
        tv.sort_unstable();
        assert_eq!(tv, (0..7).collect::<Vec<_>>());
        assert_eq!(f.val.len(), 1);

        writeln!(test, "nope").unwrap();
        assert!(matches!(make_splits(&threads, &plan), Err(Error::Data(_))));
    }
}
