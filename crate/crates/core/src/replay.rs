//! FIFO replay buffers with uniform sampling (with replacement).

use alloc::vec::Vec;

use crate::rng::{self, Rng};
use crate::{Error, Result};

pub const DEFAULT_TRANSITION_CAPACITY: usize = 100_000;
pub const DEFAULT_SELECTION_CAPACITY: usize = 100_000;
pub const DEFAULT_SEQUENCE_CAPACITY: usize = 10_000;

/// One GC-agent step `(x_h, h, a_h, x_{h+1}, loss_h, goal)`; `step` is 1-based.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionRecord {
    pub x: Vec<f64>,
    pub step: usize,
    pub selection: usize,
    pub x_next: Vec<f64>,
    pub loss: f64,
    pub goal: Vec<f64>,
}

/// `(x_h, h, a_h)` for the S-agent selection network; `step` is 1-based.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionRecord {
    pub x: Vec<f64>,
    pub step: usize,
    pub selection: usize,
}

/// The selections of one trajectory and the goal it aimed at.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceRecord {
    pub selections: Vec<usize>,
    pub goal: Vec<f64>,
}

/// Fixed-capacity ring buffer; once full, each push evicts the oldest record.
#[derive(Clone, Debug, PartialEq)]
pub struct RingBuffer<R> {
    capacity: usize,
    records: Vec<R>,
    /// Slot the next push writes to once the buffer is full.
    cursor: usize,
}

impl<R> RingBuffer<R> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        Ok(RingBuffer {
            capacity,
            records: Vec::new(),
            cursor: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: R) {
        if self.records.len() < self.capacity {
            self.records.push(record);
        } else {
            self.records[self.cursor] = record;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    /// Records from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &R> {
        let (newer, older) = self.records.split_at(self.cursor);
        older.iter().chain(newer)
    }

    /// `n` records drawn uniformly with replacement, or `None` when empty.
    pub fn sample_batch(&self, n: usize, rng: &mut Rng) -> Option<Vec<&R>> {
        if self.records.is_empty() {
            return None;
        }
        Some((0..n).map(|_| &self.records[rng::index(rng, self.records.len())]).collect())
    }

    /// Rebuild from records listed oldest first (as produced by [`Self::iter`]).
    pub fn from_records(capacity: usize, records: Vec<R>) -> Result<Self> {
        let mut buf = RingBuffer::new(capacity)?;
        if records.len() > capacity {
            return Err(Error::config("more records than capacity"));
        }
        buf.records = records;
        Ok(buf)
    }

    /// Records in storage order and the write cursor. Together with
    /// [`Self::from_slots`] this restores a buffer exactly, including which
    /// record each sample index hits.
    pub fn slots(&self) -> (&[R], usize) {
        (&self.records, self.cursor)
    }

    pub fn from_slots(capacity: usize, records: Vec<R>, cursor: usize) -> Result<Self> {
        let mut buf = RingBuffer::new(capacity)?;
        if records.len() > capacity {
            return Err(Error::config("more records than capacity"));
        }
        if cursor != 0 && (records.len() < capacity || cursor >= capacity) {
            return Err(Error::config("write cursor out of range"));
        }
        buf.records = records;
        buf.cursor = cursor;
        Ok(buf)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReplayCapacities {
    pub transitions: usize,
    pub selections: usize,
    pub sequences: usize,
}

impl Default for ReplayCapacities {
    fn default() -> Self {
        ReplayCapacities {
            transitions: DEFAULT_TRANSITION_CAPACITY,
            selections: DEFAULT_SELECTION_CAPACITY,
            sequences: DEFAULT_SEQUENCE_CAPACITY,
        }
    }
}

/// One buffer per network.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffers {
    /// Feeds the Q-network.
    pub transitions: RingBuffer<TransitionRecord>,
    /// Feeds the selection network.
    pub selections: RingBuffer<SelectionRecord>,
    /// Feeds the unfolded proposal network.
    pub sequences: RingBuffer<SequenceRecord>,
}

impl ReplayBuffers {
    pub fn new(capacities: ReplayCapacities) -> Result<Self> {
        Ok(ReplayBuffers {
            transitions: RingBuffer::new(capacities.transitions)?,
            selections: RingBuffer::new(capacities.selections)?,
            sequences: RingBuffer::new(capacities.sequences)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn slots_restore_sampling_exactly() {
        let mut buf = RingBuffer::new(4).unwrap();
        for v in 0..7u32 {
            buf.push(v);
        }
        let (records, cursor) = buf.slots();
        let copy = RingBuffer::from_slots(4, records.to_vec(), cursor).unwrap();
        assert_eq!(copy, buf);
        let (mut r1, mut r2) = (rng::seeded(1, 0), rng::seeded(1, 0));
        assert_eq!(buf.sample_batch(10, &mut r1), copy.sample_batch(10, &mut r2));
        assert!(RingBuffer::from_slots(4, vec![1u32, 2], 1).is_err());
    }

    #[test]
    fn fifo_examples() {
        let mut b = RingBuffer::new(2).unwrap();
        b.push('a');
        assert_eq!(b.len(), 1);
        b.push('b');
        b.push('c');
        assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec!['b', 'c']);
        assert_eq!(b.len(), 2);
        b.push('d');
        assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec!['c', 'd']);
        assert!(RingBuffer::<u8>::new(0).is_err());
    }

    #[test]
    fn sampling_a_singleton_repeats_it() {
        let mut b = RingBuffer::new(4).unwrap();
        b.push(7u32);
        let mut rng = rng::seeded(0, 0);
        assert_eq!(b.sample_batch(3, &mut rng).unwrap(), vec![&7, &7, &7]);
    }

    #[test]
    fn empty_buffer_is_not_ready() {
        let b: RingBuffer<u32> = RingBuffer::new(4).unwrap();
        assert!(b.sample_batch(3, &mut rng::seeded(0, 0)).is_none());
    }

    #[test]
    fn sampling_is_reproducible() {
        let mut b = RingBuffer::new(10).unwrap();
        for i in 0..10u32 {
            b.push(i);
        }
        let x = b.sample_batch(20, &mut rng::seeded(9, 1)).unwrap();
        let y = b.sample_batch(20, &mut rng::seeded(9, 1)).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn two_element_frequencies_are_balanced() {
        let mut b = RingBuffer::new(2).unwrap();
        b.push(0usize);
        b.push(1usize);
        let draws = b.sample_batch(10_000, &mut rng::seeded(4, 0)).unwrap();
        let ones = draws.iter().filter(|&&&v| v == 1).count() as f64 / 10_000.0;
        assert!((0.46..=0.54).contains(&ones));
    }

    #[test]
    fn from_records_round_trips_order() {
        let mut b = RingBuffer::new(3).unwrap();
        for i in 0..5u32 {
            b.push(i);
        }
        let records: Vec<u32> = b.iter().copied().collect();
        let mut c = RingBuffer::from_records(3, records.clone()).unwrap();
        assert_eq!(c.iter().copied().collect::<Vec<_>>(), records);
        b.push(5);
        c.push(5);
        assert_eq!(
            b.iter().collect::<Vec<_>>(),
            c.iter().collect::<Vec<_>>()
        );
    }

    proptest! {
        #[test]
        fn contents_are_the_last_capacity_pushes(cap in 1usize..20, pushes in 0usize..80) {
            let mut b = RingBuffer::new(cap).unwrap();
            for i in 0..pushes {
                b.push(i);
            }
            let want: Vec<usize> = (pushes.saturating_sub(cap)..pushes).collect();
            prop_assert_eq!(b.iter().copied().collect::<Vec<_>>(), want);
        }
    }
}
