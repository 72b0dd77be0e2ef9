//! Bounded retry with exponential backoff and deterministic jitter.

use crate::grading::BackendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base_delay_ms: 50 }
    }
}

impl RetryPolicy {
    /// Zero-delay policy for tests and offline backends.
    pub fn immediate() -> Self {
        RetryPolicy { attempts: 3, base_delay_ms: 0 }
    }

    fn delay_ms(&self, salt: u64, attempt: u32) -> u64 {
        if self.base_delay_ms == 0 {
            return 0;
        }
        let backoff = self.base_delay_ms << attempt.min(6);
        backoff + splitmix64(salt ^ u64::from(attempt)) % (self.base_delay_ms + 1)
    }
}

/// Run `f` up to `policy.attempts` times, sleeping between retryable
/// failures. The jitter is a pure function of `salt` and the attempt
/// number, so timing never depends on wall-clock randomness.
pub(crate) fn with_retry<T>(
    policy: &RetryPolicy,
    salt: u64,
    mut f: impl FnMut(u32) -> Result<T, BackendError>,
) -> Result<T, BackendError> {
    let attempts = policy.attempts.max(1);
    let mut attempt = 0;
    loop {
        match f(attempt) {
            Ok(value) => return Ok(value),
            Err(err) => {
                if !err.retryable() || attempt + 1 >= attempts {
                    return Err(err);
                }
                let delay = policy.delay_ms(salt, attempt);
                if delay > 0 {
                    std::thread::sleep(std::time::Duration::from_millis(delay));
                }
                attempt += 1;
            }
        }
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}
