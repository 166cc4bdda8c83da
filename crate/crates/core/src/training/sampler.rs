use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::pipeline::Label;

/// Index batches for one epoch: `samples_per_epoch / 2` draws with replacement
/// from each class, shuffled together and cut into batches of `batch_size`
/// (the last one may be short).
pub fn balanced_epoch<R: Rng + ?Sized>(
    labels: &[Label],
    samples_per_epoch: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if samples_per_epoch == 0 || samples_per_epoch % 2 != 0 {
        return Err(Error::Parameter(format!(
            "samples per epoch must be a positive even number, got {samples_per_epoch}"
        )));
    }
    if batch_size == 0 {
        return Err(Error::Parameter("batch size must be positive".into()));
    }
    let pool = |l: Label| -> Vec<usize> { (0..labels.len()).filter(|&i| labels[i] == l).collect() };
    let pre = pool(Label::Preictal);
    let inter = pool(Label::Interictal);
    if pre.is_empty() || inter.is_empty() {
        return Err(Error::Data(format!(
            "balanced sampling needs both classes, got {} preictal and {} interictal windows",
            pre.len(),
            inter.len()
        )));
    }
    let half = samples_per_epoch / 2;
    let mut order = Vec::with_capacity(samples_per_epoch);
    for p in [&pre, &inter] {
        order.extend((0..half).map(|_| p[rng.random_range(0..p.len())]));
    }
    order.shuffle(rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}
