use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use crate::datamodel::{DatasetSplit, ImageTensor, CHANNELS};
use crate::seed;

/// Resumable position of a [`BatchIterator`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchState {
    pub epoch: u64,
    pub cursor: usize,
}

/// Endless stream of index batches over a split.
///
/// Each epoch is a permutation seeded by `(seed, epoch)`; the trailing
/// partial batch of an epoch is dropped.
#[derive(Debug, Clone)]
pub struct BatchIterator {
    len: usize,
    batch_size: usize,
    seed: u64,
    shuffle: bool,
    state: BatchState,
    order: Vec<usize>,
}

impl BatchIterator {
    /// Returns `None` when the split cannot fill a single batch.
    pub fn new(len: usize, batch_size: usize, seed: u64, shuffle: bool) -> Option<Self> {
        if batch_size == 0 || batch_size > len {
            return None;
        }
        let mut it = Self {
            len,
            batch_size,
            seed,
            shuffle,
            state: BatchState { epoch: 0, cursor: 0 },
            order: Vec::new(),
        };
        it.order = it.permutation(0);
        Some(it)
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.len / self.batch_size
    }

    pub fn state(&self) -> BatchState {
        self.state
    }

    /// Jump to a previously recorded position.
    pub fn restore(&mut self, state: BatchState) {
        if state.epoch != self.state.epoch {
            self.order = self.permutation(state.epoch);
        }
        self.state = state;
    }

    fn permutation(&self, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len).collect();
        if self.shuffle {
            let mut rng = seed::rng(self.seed, &format!("batches/epoch/{epoch}"));
            order.shuffle(&mut rng);
        }
        order
    }

    /// Indices of the next batch.
    pub fn next_indices(&mut self) -> Vec<usize> {
        if self.state.cursor + self.batch_size > self.len {
            self.state.epoch += 1;
            self.state.cursor = 0;
            self.order = self.permutation(self.state.epoch);
        }
        let start = self.state.cursor;
        self.state.cursor += self.batch_size;
        self.order[start..start + self.batch_size].to_vec()
    }

    /// Indices of every full batch of the current epoch, then advance to the next.
    pub fn epoch(&mut self) -> Vec<Vec<usize>> {
        if self.state.cursor != 0 {
            self.restore(BatchState {
                epoch: self.state.epoch + 1,
                cursor: 0,
            });
        }
        let batches = (0..self.batches_per_epoch())
            .map(|_| self.next_indices())
            .collect();
        self.restore(BatchState {
            epoch: self.state.epoch + 1,
            cursor: 0,
        });
        batches
    }
}

/// Stack images into a `(n, 3, H, W)` float tensor.
pub fn images_to_tensor<'a, I>(images: I, kind: Kind) -> Tensor
where
    I: IntoIterator<Item = &'a ImageTensor>,
{
    let mut size = 0;
    let mut count = 0i64;
    let mut buf = Vec::new();
    for img in images {
        size = img.size();
        count += 1;
        buf.extend_from_slice(img.pixels());
    }
    let s = size as i64;
    Tensor::from_slice(&buf)
        .reshape([count, CHANNELS as i64, s, s])
        .to_kind(kind)
}

impl DatasetSplit {
    /// All images of the split as one `(n, 3, H, W)` tensor.
    pub fn to_tensor(&self, kind: Kind) -> Tensor {
        images_to_tensor(self.examples.iter().map(|e| &e.image), kind)
    }
}
