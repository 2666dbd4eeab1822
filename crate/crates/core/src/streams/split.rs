use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Dataset, Epoch, EventStream};

/// Cuts every stream at `fraction · T`. The test side is shifted so its clock
/// starts at zero.
pub fn split_by_time(dataset: &Dataset, fraction: f64) -> Result<(Dataset, Dataset), DataError> {
    check_fraction(fraction)?;
    let horizon = dataset.horizon();
    let cut = fraction * horizon;
    let mut train = Vec::with_capacity(dataset.streams().len());
    let mut test = Vec::with_capacity(dataset.streams().len());
    for s in dataset.streams() {
        let (before, after): (Vec<Epoch>, Vec<Epoch>) = s.epochs().iter().partition(|e| e.time < cut);
        let shifted = after.into_iter().map(|e| Epoch::new(e.time - cut, e.label)).collect();
        train.push(EventStream::new(s.id(), before, cut, s.label_count())?);
        test.push(EventStream::new(s.id(), shifted, horizon - cut, s.label_count())?);
    }
    let names = dataset.label_names().map(<[String]>::to_vec);
    Ok((
        Dataset::new(format!("{}-train", dataset.name()), train)?.with_label_names(names.clone()),
        Dataset::new(format!("{}-test", dataset.name()), test)?.with_label_names(names),
    ))
}

/// Puts a seeded uniformly random `⌈fraction · S⌉`-subset of the streams in
/// train and the rest in test. Original stream order is kept on both sides.
pub fn split_by_stream(
    dataset: &Dataset,
    fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    check_fraction(fraction)?;
    let n = dataset.streams().len();
    if n < 2 {
        return Err(DataError::TooFewStreams(n));
    }
    let n_train = train_count(n, fraction);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_train = vec![false; n];
    for &i in &idx[..n_train] {
        in_train[i] = true;
    }
    let (train, test): (Vec<_>, Vec<_>) = dataset
        .streams()
        .iter()
        .cloned()
        .zip(in_train)
        .partition(|(_, t)| *t);
    let names = dataset.label_names().map(<[String]>::to_vec);
    Ok((
        Dataset::new(format!("{}-train", dataset.name()), train.into_iter().map(|p| p.0).collect())?
            .with_label_names(names.clone()),
        Dataset::new(format!("{}-test", dataset.name()), test.into_iter().map(|p| p.0).collect())?
            .with_label_names(names),
    ))
}

/// `⌈fraction · n⌉` clamped to `[1, n − 1]`, tolerant of products such as
/// `0.7 · 10 = 7.000000000000001`.
fn train_count(n: usize, fraction: f64) -> usize {
    let raw = (fraction * n as f64 - 1e-9).ceil() as usize;
    raw.clamp(1, n - 1)
}

fn check_fraction(fraction: f64) -> Result<(), DataError> {
    if fraction > 0.0 && fraction < 1.0 {
        Ok(())
    } else {
        Err(DataError::BadFraction(fraction))
    }
}
