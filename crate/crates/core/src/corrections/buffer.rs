use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Fixed-capacity training set with insertion-age order. Replacement evicts
/// the least recently added rows first.
///
/// Storage is a ring: slot `head` holds the oldest entry. Slot indices are
/// stable until the slot is overwritten, so they serve as sample references
/// for preference pairs built on the current contents.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplacementBuffer {
    samples: Array2<f64>,
    seq: Vec<u64>,
    /// Ground-truth label for original data, `None` for injected samples.
    labels: Vec<Option<bool>>,
    head: usize,
    next_seq: u64,
}

impl ReplacementBuffer {
    pub fn new(samples: Array2<f64>, labels: Option<&[bool]>) -> Result<Self> {
        let n = samples.nrows();
        if n == 0 {
            return Err(Error::InvalidArgument("buffer needs at least one sample".into()));
        }
        if let Some(l) = labels {
            if l.len() != n {
                return Err(Error::shape(format!("{n} labels"), l.len()));
            }
        }
        Ok(Self {
            samples,
            seq: (0..n as u64).collect(),
            labels: match labels {
                Some(l) => l.iter().map(|&b| Some(b)).collect(),
                None => vec![None; n],
            },
            head: 0,
            next_seq: n as u64,
        })
    }

    pub fn capacity(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    /// Rows in slot order (not age order).
    pub fn samples(&self) -> ArrayView2<'_, f64> {
        self.samples.view()
    }

    pub fn row(&self, slot: usize) -> ArrayView1<'_, f64> {
        self.samples.row(slot)
    }

    pub fn sequence_numbers(&self) -> &[u64] {
        &self.seq
    }

    pub fn labels(&self) -> &[Option<bool>] {
        &self.labels
    }

    /// Slot indices from oldest to newest.
    pub fn age_order(&self) -> impl Iterator<Item = usize> + '_ {
        let n = self.len();
        (0..n).map(move |k| (self.head + k) % n)
    }

    /// Rows from oldest to newest.
    pub fn samples_by_age(&self) -> Array2<f64> {
        let order: Vec<usize> = self.age_order().collect();
        self.samples.select(Axis(0), &order)
    }

    pub fn gather(&self, slots: &[usize]) -> Array2<f64> {
        self.samples.select(Axis(0), slots)
    }

    /// Evicts the `new_samples.nrows()` oldest rows and appends the new ones
    /// as the newest entries, in row order.
    pub fn replace_oldest(&mut self, new_samples: ArrayView2<'_, f64>) -> Result<()> {
        let k = new_samples.nrows();
        if k > self.capacity() {
            return Err(Error::BufferOverflow {
                requested: k,
                capacity: self.capacity(),
            });
        }
        if k == 0 {
            return Ok(());
        }
        if new_samples.ncols() != self.dim() {
            return Err(Error::shape(
                format!("{} columns", self.dim()),
                format!("{} columns", new_samples.ncols()),
            ));
        }
        if !new_samples.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("replacement samples".into()));
        }
        let n = self.capacity();
        for (i, row) in new_samples.rows().into_iter().enumerate() {
            let slot = (self.head + i) % n;
            self.samples.row_mut(slot).assign(&row);
            self.seq[slot] = self.next_seq;
            self.labels[slot] = None;
            self.next_seq += 1;
        }
        self.head = (self.head + k) % n;
        Ok(())
    }
}
