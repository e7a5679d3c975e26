// SPDX-License-Identifier: Apache-2.0

use std::sync::{Condvar, Mutex};

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
pub struct InFlightLimiter {
    cap: usize,
    active: Mutex<usize>,
    cv: Condvar,
    peak: Mutex<usize>,
}

pub struct Permit<'a> {
    limiter: &'a InFlightLimiter,
}

impl InFlightLimiter {
    pub fn new(cap: usize) -> Self {
        InFlightLimiter {
            cap: cap.max(1),
            active: Mutex::new(0),
            cv: Condvar::new(),
            peak: Mutex::new(0),
        }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// Blocks until a slot is free.
    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.active.lock().unwrap();
        while *n >= self.cap {
            n = self.cv.wait(n).unwrap();
        }
        *n += 1;
        let mut peak = self.peak.lock().unwrap();
        *peak = (*peak).max(*n);
        Permit { limiter: self }
    }

    /// Highest number of simultaneously held permits so far.
    pub fn peak(&self) -> usize {
        *self.peak.lock().unwrap()
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.limiter.active.lock().unwrap();
        *n -= 1;
        self.limiter.cv.notify_one();
    }
}
