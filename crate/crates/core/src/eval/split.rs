use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::WeldCategory;
use crate::error::{Error, Result};
use crate::rng;

/// Good-weld train share of the reference partition (576 of 819).
pub const TRAIN_GOOD_NUM: usize = 576;
pub const TRAIN_GOOD_DEN: usize = 819;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn id(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Sample indices per partition, each list ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Partition {
    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// Partition label of every sample index.
    pub fn assignments(&self, n: usize) -> Vec<Option<Split>> {
        let mut out = vec![None; n];
        for split in Split::ALL {
            for &i in self.get(split) {
                out[i] = Some(split);
            }
        }
        out
    }
}

/// Good-weld counts `(train, val, test)` for `n` goods: train is
/// `round(n * 576 / 819)` (half away from zero), the remainder is halved with
/// the odd one going to validation.
pub fn good_split_sizes(n: usize) -> (usize, usize, usize) {
    let train = (2 * n * TRAIN_GOOD_NUM + TRAIN_GOOD_DEN) / (2 * TRAIN_GOOD_DEN);
    let rest = n - train;
    (train, rest.div_ceil(2), rest / 2)
}

/// Assigns samples to train/validation/test.
///
/// Goods are shuffled and cut per [`good_split_sizes`]. Defects never enter
/// training: each category is shuffled and halved between validation and
/// test, and categories with an odd count alternate which side receives the
/// extra sample, test first.
pub fn apply_split(categories: &[WeldCategory], seed: u64) -> Result<Partition> {
    let goods: Vec<usize> = (0..categories.len())
        .filter(|&i| categories[i].is_good())
        .collect();
    let n_defects = categories.len() - goods.len();
    if goods.len() < 2 || n_defects < 2 {
        return Err(Error::data(format!(
            "a split needs at least 2 good and 2 defect samples, got {} and {n_defects}",
            goods.len()
        )));
    }
    let mut part = Partition {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };

    let mut goods = goods;
    goods.shuffle(&mut rng::derived(seed, "split/good"));
    let (n_train, n_val, _) = good_split_sizes(goods.len());
    part.train.extend_from_slice(&goods[..n_train]);
    part.val.extend_from_slice(&goods[n_train..n_train + n_val]);
    part.test.extend_from_slice(&goods[n_train + n_val..]);

    let mut extra_to_test = true;
    for cat in WeldCategory::defects() {
        let mut members: Vec<usize> = (0..categories.len())
            .filter(|&i| categories[i] == cat)
            .collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng::derived(seed, &format!("split/{}", cat.id())));
        let mut n_val = members.len() / 2;
        if members.len() % 2 == 1 {
            if !extra_to_test {
                n_val += 1;
            }
            extra_to_test = !extra_to_test;
        }
        part.val.extend_from_slice(&members[..n_val]);
        part.test.extend_from_slice(&members[n_val..]);
    }
    part.train.sort_unstable();
    part.val.sort_unstable();
    part.test.sort_unstable();
    Ok(part)
}
