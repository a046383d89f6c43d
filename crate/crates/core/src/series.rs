//! Event-centered count series and windows relative to the event day.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Daily counts with a designated event index.
///
/// Immutable once built; construct through [`validate_series`] or
/// [`EventSeries::new`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSeries {
    counts: Vec<u64>,
    t0_index: usize,
    labels: Option<Vec<String>>,
}

/// Inclusive range of offsets `t - t0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
}

impl Window {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidWindow { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// Symmetric window `(-half, half)`.
    pub fn symmetric(half: u32) -> Self {
        Self {
            lo: -(half as i64),
            hi: half as i64,
        }
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    pub fn contains(&self, offset: i64) -> bool {
        self.lo <= offset && offset <= self.hi
    }

    pub fn offsets(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }
}

/// Checks raw counts and the event index and builds an [`EventSeries`].
pub fn validate_series(raw_counts: &[i64], t0_index: i64) -> Result<EventSeries> {
    if raw_counts.is_empty() {
        return Err(Error::EmptySeries);
    }
    if let Some(i) = raw_counts.iter().position(|&c| c < 0) {
        return Err(Error::NegativeCount(i));
    }
    let counts = raw_counts.iter().map(|&c| c as u64).collect();
    EventSeries::new(counts, t0_index)
}

impl EventSeries {
    pub fn new(counts: Vec<u64>, t0_index: i64) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptySeries);
        }
        if t0_index < 0 || t0_index as usize >= counts.len() {
            return Err(Error::T0OutOfRange {
                index: t0_index,
                len: counts.len(),
            });
        }
        Ok(Self {
            counts,
            t0_index: t0_index as usize,
            labels: None,
        })
    }

    /// Attaches per-point labels; they must match the number of counts.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.counts.len() {
            return Err(Error::InvalidConfig(format!(
                "{} labels for {} counts",
                labels.len(),
                self.counts.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn t0_index(&self) -> usize {
        self.t0_index
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Count on the event day.
    pub fn peak(&self) -> u64 {
        self.counts[self.t0_index]
    }

    /// Most negative offset available.
    pub fn min_offset(&self) -> i64 {
        -(self.t0_index as i64)
    }

    /// Most positive offset available.
    pub fn max_offset(&self) -> i64 {
        (self.counts.len() - 1 - self.t0_index) as i64
    }

    /// Number of points strictly after the event day.
    pub fn points_after(&self) -> usize {
        self.counts.len() - 1 - self.t0_index
    }

    /// Whole series as a window.
    pub fn full_window(&self) -> Window {
        Window {
            lo: self.min_offset(),
            hi: self.max_offset(),
        }
    }

    pub fn check_window(&self, window: Window) -> Result<()> {
        if window.lo > window.hi {
            return Err(Error::InvalidWindow {
                lo: window.lo,
                hi: window.hi,
            });
        }
        if window.lo < self.min_offset() || window.hi > self.max_offset() {
            return Err(Error::WindowOutOfRange {
                lo: window.lo,
                hi: window.hi,
            });
        }
        Ok(())
    }

    /// Count at offset `t - t0`, if present.
    pub fn at_offset(&self, offset: i64) -> Option<u64> {
        let idx = self.t0_index as i64 + offset;
        if idx < 0 {
            return None;
        }
        self.counts.get(idx as usize).copied()
    }

    /// `(t - t0, y_t)` pairs over the window, ascending in `t`.
    pub fn relative_window_slice(&self, window: Window) -> Result<Vec<(i64, u64)>> {
        self.check_window(window)?;
        let start = (self.t0_index as i64 + window.lo) as usize;
        let end = (self.t0_index as i64 + window.hi) as usize;
        Ok(self.counts[start..=end]
            .iter()
            .zip(window.lo..)
            .map(|(&c, t)| (t, c))
            .collect())
    }

    /// Counts `y_{t0}, y_{t0+1}, ..., y_{t0+horizon}`.
    pub fn after_event(&self, horizon: usize) -> Result<&[u64]> {
        let available = self.points_after();
        if horizon > available {
            return Err(Error::HorizonOutOfRange { horizon, available });
        }
        Ok(&self.counts[self.t0_index..=self.t0_index + horizon])
    }
}
