use rand::seq::SliceRandom;
use selftaught_splits::stream;

/// Index batches for one epoch. Order is shuffled from a stream keyed on
/// `(seed, epoch)` when `shuffle` is set. A trailing batch of one sample is
/// merged into the previous batch so batch statistics stay defined.
pub fn epoch_batches(n: usize, batch_size: usize, shuffle: bool, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        order.shuffle(&mut stream(seed, &format!("epoch/{epoch}")));
    }
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    if batches.len() >= 2 && batches.last().map(Vec::len) == Some(1) {
        let last = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(last);
    }
    batches
}
