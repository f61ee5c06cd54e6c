use rand::seq::SliceRandom;

use super::{DataError, Example, TextRecord};
use crate::rng::{stream_rng, Stream};

pub trait Labelled {
    fn label(&self) -> usize;
}

impl Labelled for Example {
    fn label(&self) -> usize {
        self.label
    }
}

impl Labelled for TextRecord {
    fn label(&self) -> usize {
        self.label
    }
}

#[derive(Clone, Debug)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    /// Classes too small to split.
    pub warnings: Vec<String>,
}

/// Seeded stratified split. The validation size is `round(fraction · N)`
/// over splittable classes, apportioned by largest remainder so each class
/// is within one example of its proportional share. Both halves keep the
/// input order.
pub fn split_validation<T: Labelled + Clone>(items: &[T], fraction: f64, seed: u64) -> Result<Split<T>, DataError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::InvalidFraction(fraction));
    }
    let n_classes = items.iter().map(|x| x.label() + 1).max().unwrap_or(0);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, x) in items.iter().enumerate() {
        by_class[x.label()].push(i);
    }

    let mut warnings = Vec::new();
    let mut quotas = vec![0usize; n_classes];
    let mut eligible = 0usize;
    for (c, members) in by_class.iter().enumerate() {
        match members.len() {
            0 => {}
            1 => warnings.push(format!("class {c} has fewer than 2 examples; kept in train")),
            n => eligible += n,
        }
    }
    let target = (fraction * eligible as f64).round() as usize;
    let mut remainders = Vec::new();
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < 2 {
            continue;
        }
        let exact = fraction * members.len() as f64;
        quotas[c] = (exact.floor() as usize).min(members.len() - 1);
        remainders.push((exact - exact.floor(), c));
    }
    // Largest remainder first; ties toward the lower class index.
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut assigned: usize = quotas.iter().sum();
    for &(_, c) in remainders.iter().cycle().take(remainders.len() * 2) {
        if assigned >= target {
            break;
        }
        if quotas[c] < by_class[c].len() - 1 {
            quotas[c] += 1;
            assigned += 1;
        }
    }

    let mut rng = stream_rng(seed, Stream::Split);
    let mut in_val = vec![false; items.len()];
    for (c, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        for &i in &members[..quotas[c]] {
            in_val[i] = true;
        }
    }
    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for (x, v) in items.iter().zip(in_val) {
        if v {
            validation.push(x.clone());
        } else {
            train.push(x.clone());
        }
    }
    Ok(Split {
        train,
        validation,
        warnings,
    })
}
