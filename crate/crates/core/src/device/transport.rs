//! Adapter contract for driving a real device.
//!
//! The simulator covers desk-scale runs; deployments with actual emulators
//! implement this trait (shell exec, screenshots, file pull, snapshot tags).
//! Implementations must be side-effect-free on failure, and `load_snapshot`
//! must be idempotent so the runner can retry it blindly.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("transport timeout")]
    Timeout,
    #[error("transport closed")]
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecResult {
    pub exit: i32,
    pub stdout: Vec<u8>,
}

pub trait DeviceTransport {
    fn exec(&mut self, command: &str) -> Result<ExecResult, TransportError>;
    fn screenshot(&mut self) -> Result<Vec<u8>, TransportError>;
    fn pull(&mut self, path: &str) -> Result<Vec<u8>, TransportError>;
    fn load_snapshot(&mut self, tag: &str) -> Result<(), TransportError>;
    fn save_snapshot(&mut self, tag: &str) -> Result<(), TransportError>;
}

/// Runner retry policy: transient transport failures are retried up to
/// `attempts` times in total before surfacing as an infrastructure error.
pub fn with_retries<T>(
    attempts: usize,
    mut op: impl FnMut() -> Result<T, TransportError>,
) -> Result<T, TransportError> {
    let mut last = TransportError::Closed;
    for _ in 0..attempts.max(1) {
        match op() {
            Ok(v) => return Ok(v),
            Err(e) => last = e,
        }
    }
    Err(last)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Flaky {
        failures_left: usize,
        calls: usize,
    }

    impl Flaky {
        fn attempt(&mut self) -> Result<u32, TransportError> {
            self.calls += 1;
            if self.failures_left > 0 {
                self.failures_left -= 1;
                Err(TransportError::Timeout)
            } else {
                Ok(7)
            }
        }
    }

    #[test]
    fn retries_then_succeeds() {
        let mut t = Flaky { failures_left: 2, calls: 0 };
        assert_eq!(with_retries(3, || t.attempt()), Ok(7));
        assert_eq!(t.calls, 3);
    }

    #[test]
    fn gives_up_after_the_limit() {
        let mut t = Flaky { failures_left: 5, calls: 0 };
        assert_eq!(with_retries(3, || t.attempt()), Err(TransportError::Timeout));
        assert_eq!(t.calls, 3);
    }
}
