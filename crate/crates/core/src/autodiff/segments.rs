use crate::error::{Error, Result};

/// A total, sorted map from rows to segment ids `0..count`.
///
/// Segment `s` owns the contiguous row range `offsets[s]..offsets[s + 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    ids: Vec<usize>,
    offsets: Vec<usize>,
}

impl Segments {
    pub fn new(ids: Vec<usize>, count: usize) -> Result<Self> {
        let mut offsets = vec![0usize; count + 1];
        let mut prev = 0usize;
        for (row, &id) in ids.iter().enumerate() {
            if id >= count {
                return Err(Error::Segment(format!(
                    "row {row} maps to segment {id}, only {count} segments"
                )));
            }
            if id < prev {
                return Err(Error::Segment(format!(
                    "row {row} maps to segment {id} after segment {prev}; ids must be sorted"
                )));
            }
            prev = id;
            offsets[id + 1] += 1;
        }
        for s in 0..count {
            offsets[s + 1] += offsets[s];
        }
        Ok(Segments { ids, offsets })
    }

    /// Every row in one segment.
    pub fn single(rows: usize) -> Self {
        Segments {
            ids: vec![0; rows],
            offsets: vec![0, rows],
        }
    }

    /// Segments from per-segment sizes, in order.
    pub fn from_sizes(sizes: &[usize]) -> Self {
        let mut ids = Vec::with_capacity(sizes.iter().sum());
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        offsets.push(0);
        for (s, &n) in sizes.iter().enumerate() {
            ids.extend(std::iter::repeat_n(s, n));
            offsets.push(ids.len());
        }
        Segments { ids, offsets }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn range(&self, segment: usize) -> std::ops::Range<usize> {
        self.offsets[segment]..self.offsets[segment + 1]
    }

    pub fn size(&self, segment: usize) -> usize {
        self.offsets[segment + 1] - self.offsets[segment]
    }

    pub fn sizes(&self) -> Vec<usize> {
        (0..self.count()).map(|s| self.size(s)).collect()
    }
}
