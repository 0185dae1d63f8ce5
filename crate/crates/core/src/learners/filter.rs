use std::collections::VecDeque;

use crate::error::{invalid_arg, Result};
use crate::scalar::Real;

pub const DEFAULT_FILTER_WINDOW: usize = 100;

/// Mean of the last `window` values, or of all values when fewer exist.
/// Returns `None` for an empty slice.
pub fn sample_mean_filter<T: Real>(values: &[T], window: usize) -> Option<T> {
    if values.is_empty() || window == 0 {
        return None;
    }
    let tail = &values[values.len().saturating_sub(window)..];
    Some(tail.iter().copied().sum::<T>() / T::from_count(tail.len()))
}

/// Sliding sample mean of corrected rewards, one window per pair.
#[derive(Debug, Clone)]
pub struct SampleMeanFilter<T> {
    window: usize,
    num_actions: usize,
    buffers: Vec<VecDeque<T>>,
}

impl<T: Real> SampleMeanFilter<T> {
    pub fn new(num_states: usize, num_actions: usize, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(invalid_arg("filter window must be at least 1"));
        }
        Ok(Self {
            window,
            num_actions,
            buffers: vec![VecDeque::with_capacity(window); num_states * num_actions],
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Adds `value` at `(s, a)` and returns the filtered value.
    pub fn push(&mut self, s: usize, a: usize, value: T) -> T {
        let buf = &mut self.buffers[s * self.num_actions + a];
        if buf.len() == self.window {
            buf.pop_front();
        }
        buf.push_back(value);
        // Summing the window each time avoids drift from a running total.
        buf.iter().copied().sum::<T>() / T::from_count(buf.len())
    }
}
