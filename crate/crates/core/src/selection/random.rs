use crate::error::Result;
use crate::rng;

use super::{check_size, SelectionParams, Strategy, SubsetSelection};

/// Uniform sample of `m` distinct indices out of `0..n`.
pub fn select_random(n: usize, m: usize, seed: u64) -> Result<SubsetSelection> {
    check_size(m, n)?;
    let mut rng = rng::derive(seed, &[rng::tag::RANDOM_SUBSET]);
    let indices = rand::seq::index::sample(&mut rng, n, m).into_vec();
    Ok(SubsetSelection::new(
        Strategy::Random,
        seed,
        indices,
        None,
        SelectionParams::Random {},
    ))
}
