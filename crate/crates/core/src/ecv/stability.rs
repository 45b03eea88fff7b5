use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Candidate;
use crate::error::{invalid, Result};
use crate::rng::{derive, fork_seed, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityMode {
    /// The modal choice; ties go to the simpler candidate.
    MostFrequent,
    /// The mean value, rounded half up for `K` families.
    Average,
}

/// Combines the choices of repeated ECV runs into one.
pub fn stability_select(choices: &[Candidate], mode: StabilityMode) -> Result<Candidate> {
    let first = *choices
        .first()
        .ok_or_else(|| invalid("stability selection needs at least one choice"))?;
    match mode {
        StabilityMode::MostFrequent => {
            let mut counts: Vec<(Candidate, usize)> = Vec::new();
            for c in choices {
                match counts.iter_mut().find(|(x, _)| x == c) {
                    Some((_, n)) => *n += 1,
                    None => counts.push((*c, 1)),
                }
            }
            let top = counts.iter().map(|&(_, n)| n).max().expect("nonempty");
            Ok(counts
                .into_iter()
                .filter(|&(_, n)| n == top)
                .map(|(c, _)| c)
                .min_by(|a, b| a.simplicity(b))
                .expect("nonempty"))
        }
        StabilityMode::Average => {
            let family = first.family();
            if choices.iter().any(|c| c.family() != family) {
                return Err(invalid("cannot average choices from different families"));
            }
            let mean = choices.iter().map(Candidate::value).sum::<f64>() / choices.len() as f64;
            let value = if family.is_integer() {
                (mean + 0.5).floor()
            } else {
                mean
            };
            Candidate::from_value(family, value)
        }
    }
}

/// Frequency of each distinct choice, in order of first appearance.
pub fn choice_counts(choices: &[Candidate]) -> Vec<(Candidate, usize)> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut out: Vec<(Candidate, usize)> = Vec::new();
    for c in choices {
        let slot = *index.entry(c.to_string()).or_insert_with(|| {
            out.push((*c, 0));
            out.len() - 1
        });
        out[slot].1 += 1;
    }
    out
}

/// Runs `run` `reps` times on independent streams derived from `rng`, in
/// repetition order.
pub fn stability_runs<R, T, F>(reps: usize, rng: &mut R, run: F) -> Result<Vec<T>>
where
    R: Rng + ?Sized,
    T: Send,
    F: Fn(&mut StreamRng) -> Result<T> + Sync,
{
    if reps == 0 {
        return Err(invalid("stability selection needs at least one repetition"));
    }
    let base = fork_seed(rng);
    (0..reps)
        .into_par_iter()
        .map(|r| run(&mut derive(base, r as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn most_frequent_examples() {
        let ks = [Candidate::Rank(3), Candidate::Rank(3), Candidate::Rank(5)];
        assert_eq!(
            stability_select(&ks, StabilityMode::MostFrequent).unwrap(),
            Candidate::Rank(3)
        );
        let models = [Candidate::Sbm(3), Candidate::Dcsbm(3), Candidate::Sbm(3)];
        assert_eq!(
            stability_select(&models, StabilityMode::MostFrequent).unwrap(),
            Candidate::Sbm(3)
        );
        let tied = [
            Candidate::Dcsbm(3),
            Candidate::Sbm(4),
            Candidate::Sbm(4),
            Candidate::Dcsbm(3),
        ];
        assert_eq!(
            stability_select(&tied, StabilityMode::MostFrequent).unwrap(),
            Candidate::Dcsbm(3)
        );
    }

    #[test]
    fn average_examples() {
        let ks = [Candidate::Rank(3), Candidate::Rank(4), Candidate::Rank(4)];
        assert_eq!(
            stability_select(&ks, StabilityMode::Average).unwrap(),
            Candidate::Rank(4)
        );
        let half = [Candidate::Sbm(2), Candidate::Sbm(3)];
        assert_eq!(
            stability_select(&half, StabilityMode::Average).unwrap(),
            Candidate::Sbm(3)
        );
        let taus = [Candidate::TauReg(0.2), Candidate::TauReg(0.4)];
        match stability_select(&taus, StabilityMode::Average).unwrap() {
            Candidate::TauReg(t) => assert!((t - 0.3).abs() < 1e-15),
            other => panic!("unexpected {other}"),
        }
        let mixed = [Candidate::Sbm(2), Candidate::Dcsbm(2)];
        assert!(stability_select(&mixed, StabilityMode::Average).is_err());
        assert!(stability_select(&[], StabilityMode::MostFrequent).is_err());
    }

    #[test]
    fn runs_are_reproducible_and_independent() {
        use rand::SeedableRng;
        let draw = |r: &mut StreamRng| Ok(r.gen::<u64>());
        let a = stability_runs(5, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1), draw).unwrap();
        let b = stability_runs(5, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1), draw).unwrap();
        assert_eq!(a, b);
        let mut distinct = a.clone();
        distinct.dedup();
        assert_eq!(distinct.len(), 5);
        assert!(stability_runs(0, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1), draw).is_err());
    }

    #[test]
    fn counts_in_first_seen_order() {
        let c = [Candidate::Sbm(2), Candidate::Rank(1), Candidate::Sbm(2)];
        assert_eq!(
            choice_counts(&c),
            vec![(Candidate::Sbm(2), 2), (Candidate::Rank(1), 1)]
        );
    }
}
