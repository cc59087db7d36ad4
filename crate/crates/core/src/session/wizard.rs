//! Rendezvous between the session loop and a human operator.
//!
//! The loop posts one request at a time and blocks until the operator
//! answers it, the deadline passes, or the channel closes. Answers carry the
//! request id so a late or duplicate click cannot land on a later decision.

use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::agent::ActionId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WizardRequest {
    pub request_id: u64,
    pub decision: usize,
    pub segment_id: String,
    pub questions: Vec<String>,
    /// Seconds the operator has to answer.
    pub deadline_s: f64,
    /// Action taken if the deadline passes.
    pub fallback: ActionId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WizardOutcome {
    Chosen(ActionId),
    TimedOut,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WizardReject {
    #[error("no action request is pending")]
    NoPending,
    #[error("request {0} was already answered")]
    AlreadyAnswered(u64),
    #[error("request {got} is not the pending request {pending}")]
    WrongRequest { pending: u64, got: u64 },
    #[error("wizard channel is closed")]
    Closed,
}

#[derive(Debug, Default)]
struct State {
    next_id: u64,
    pending: Option<WizardRequest>,
    answer: Option<(u64, ActionId)>,
    last_answered: Option<u64>,
    closed: bool,
}

/// Cloneable handle; the session loop and the operator side share it.
#[derive(Debug, Clone, Default)]
pub struct WizardChannel {
    inner: Arc<(Mutex<State>, Condvar)>,
}

impl WizardChannel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Posts a request and waits for the answer. Returns `Err(Closed)` if the
    /// channel is closed before or while waiting.
    pub fn request(
        &self,
        decision: usize,
        segment_id: &str,
        questions: &[String],
        timeout: Duration,
        fallback: ActionId,
        on_posted: impl FnOnce(&WizardRequest),
    ) -> Result<(u64, WizardOutcome), WizardReject> {
        let (lock, cond) = &*self.inner;
        let mut st = lock.lock().expect("wizard lock");
        if st.closed {
            return Err(WizardReject::Closed);
        }
        st.next_id += 1;
        let req = WizardRequest {
            request_id: st.next_id,
            decision,
            segment_id: segment_id.to_string(),
            questions: questions.to_vec(),
            deadline_s: timeout.as_secs_f64(),
            fallback,
        };
        let id = req.request_id;
        st.pending = Some(req.clone());
        st.answer = None;
        on_posted(&req);

        let deadline = Instant::now() + timeout;
        loop {
            if st.closed {
                st.pending = None;
                return Err(WizardReject::Closed);
            }
            if let Some((aid, act)) = st.answer.take() {
                if aid == id {
                    return Ok((id, WizardOutcome::Chosen(act)));
                }
            }
            let now = Instant::now();
            if now >= deadline {
                st.pending = None;
                st.last_answered = Some(id);
                return Ok((id, WizardOutcome::TimedOut));
            }
            st = cond.wait_timeout(st, deadline - now).expect("wizard lock").0;
        }
    }

    /// Operator side: answers the pending request. `request_id` may be
    /// omitted to target whatever is pending.
    pub fn answer(&self, request_id: Option<u64>, action: ActionId) -> Result<u64, WizardReject> {
        let (lock, cond) = &*self.inner;
        let mut st = lock.lock().expect("wizard lock");
        // a duplicate click reads as a duplicate even after the session ends
        if let (Some(id), Some(last)) = (request_id, st.last_answered) {
            if id <= last {
                return Err(WizardReject::AlreadyAnswered(id));
            }
        }
        if st.closed {
            return Err(WizardReject::Closed);
        }
        let Some(pending) = st.pending.as_ref() else {
            return Err(WizardReject::NoPending);
        };
        let id = pending.request_id;
        if let Some(got) = request_id {
            if got != id {
                return Err(if got < id {
                    WizardReject::AlreadyAnswered(got)
                } else {
                    WizardReject::WrongRequest { pending: id, got }
                });
            }
        }
        st.pending = None;
        st.last_answered = Some(id);
        st.answer = Some((id, action));
        cond.notify_all();
        Ok(id)
    }

    pub fn pending(&self) -> Option<WizardRequest> {
        self.inner.0.lock().expect("wizard lock").pending.clone()
    }

    /// Closes the channel, waking any waiting request.
    pub fn close(&self) {
        let (lock, cond) = &*self.inner;
        let mut st = lock.lock().expect("wizard lock");
        st.closed = true;
        st.pending = None;
        cond.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.inner.0.lock().expect("wizard lock").closed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;

    fn ask(ch: &WizardChannel, timeout_ms: u64) -> Result<(u64, WizardOutcome), WizardReject> {
        ch.request(0, "p1", &[], Duration::from_millis(timeout_ms), ActionId::ContinueStory, |_| {})
    }

    #[test]
    fn answer_reaches_waiting_request() {
        let ch = WizardChannel::new();
        let op = ch.clone();
        let h = thread::spawn(move || loop {
            if op.pending().is_some() {
                return op.answer(None, ActionId::Question);
            }
            thread::sleep(Duration::from_millis(1));
        });
        let (id, out) = ask(&ch, 5_000).unwrap();
        assert_eq!(out, WizardOutcome::Chosen(ActionId::Question));
        assert_eq!(h.join().unwrap(), Ok(id));
    }

    #[test]
    fn second_answer_rejected() {
        let ch = WizardChannel::new();
        let op = ch.clone();
        let h = thread::spawn(move || loop {
            if let Some(req) = op.pending() {
                let first = op.answer(Some(req.request_id), ActionId::Question);
                let second = op.answer(Some(req.request_id), ActionId::ContinueStory);
                return (first, second);
            }
            thread::sleep(Duration::from_millis(1));
        });
        ask(&ch, 5_000).unwrap();
        let (first, second) = h.join().unwrap();
        assert!(first.is_ok());
        assert!(matches!(second, Err(WizardReject::AlreadyAnswered(_))));
    }

    #[test]
    fn timeout_reports_fallback() {
        let ch = WizardChannel::new();
        let (_, out) = ask(&ch, 10).unwrap();
        assert_eq!(out, WizardOutcome::TimedOut);
        assert!(ch.pending().is_none());
        assert_eq!(ch.answer(None, ActionId::Question), Err(WizardReject::NoPending));
    }

    #[test]
    fn close_wakes_waiter() {
        let ch = WizardChannel::new();
        let closer = ch.clone();
        let h = thread::spawn(move || {
            thread::sleep(Duration::from_millis(20));
            closer.close();
        });
        assert_eq!(ask(&ch, 10_000), Err(WizardReject::Closed));
        h.join().unwrap();
    }
}
