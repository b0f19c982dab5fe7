//! Coordinator side of the notify-push bound exchange.
//!
//! Workers notify on strict refinements of their local bound; the
//! coordinator keeps the global bound at the minimum of the last-notified
//! values and pushes it to workers that fall behind on notifications.

#[derive(Debug)]
pub struct Coordinator {
    pub enabled: bool,
    deterministic: bool,
    threshold: u64,
    table: Vec<f64>,
    counters: Vec<u64>,
    s: f64,
    last_pushed: Vec<f64>,
    mailbox: Vec<Option<f64>>,
    barrier_queue: Vec<(usize, f64)>,
    pub notify_count: u64,
    pub push_count: u64,
    pub audit_violations: u64,
}

impl Coordinator {
    pub fn new(m: usize, enabled: bool, deterministic: bool, threshold: u64) -> Self {
        Coordinator {
            enabled,
            deterministic,
            threshold,
            table: vec![f64::INFINITY; m],
            counters: vec![0; m],
            s: f64::INFINITY,
            last_pushed: vec![f64::INFINITY; m],
            mailbox: vec![None; m],
            barrier_queue: Vec::new(),
            notify_count: 0,
            push_count: 0,
            audit_violations: 0,
        }
    }

    pub fn global_bound(&self) -> f64 {
        self.s
    }

    pub fn last_notified(&self, i: usize) -> f64 {
        self.table[i]
    }

    pub fn counter(&self, i: usize) -> u64 {
        self.counters[i]
    }

    /// Worker `i` reports a refined local bound. Stale reports are ignored
    /// idempotently. May trigger pushes per the notification-counter gap.
    pub fn notify(&mut self, i: usize, s: f64) {
        if !self.enabled {
            return;
        }
        self.notify_count += 1;
        if s >= self.table[i] {
            return;
        }
        self.table[i] = s;
        self.counters[i] += 1;
        let recomputed = self.table.iter().copied().fold(f64::INFINITY, f64::min);
        if recomputed > self.s || recomputed != self.s.min(s) {
            self.audit_violations += 1;
        }
        self.s = recomputed;
        self.drive_pushes();
    }

    /// Push the global bound to every worker whose notification counter lags
    /// by more than the threshold while its last-notified bound is loose.
    fn drive_pushes(&mut self) {
        let max_n = self.counters.iter().copied().max().unwrap_or(0);
        for j in 0..self.table.len() {
            if max_n - self.counters[j] > self.threshold
                && self.table[j] > self.s
                && self.last_pushed[j] != self.s
            {
                self.push(j);
            }
        }
    }

    fn push(&mut self, j: usize) {
        self.push_count += 1;
        self.last_pushed[j] = self.s;
        if self.deterministic {
            self.barrier_queue.push((j, self.s));
        } else {
            self.deliver(j, self.s);
        }
    }

    fn deliver(&mut self, j: usize, s: f64) {
        let slot = &mut self.mailbox[j];
        *slot = Some(slot.map_or(s, |old| old.min(s)));
    }

    /// Deferred pushes land at the superstep barrier in deterministic mode.
    pub fn apply_barrier(&mut self) {
        let queued = std::mem::take(&mut self.barrier_queue);
        for (j, s) in queued {
            self.deliver(j, s);
        }
    }

    /// Latest pushed bound for worker `j`, consumed at most once per value.
    pub fn take_push(&mut self, j: usize) -> Option<f64> {
        self.mailbox[j].take()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn notify_refines_global_min() {
        let mut c = Coordinator::new(3, true, false, 2);
        c.notify(0, 9.0);
        c.notify(2, 5.0);
        assert_eq!(c.global_bound(), 5.0);
        // stale notify is ignored
        c.notify(2, 7.0);
        assert_eq!(c.last_notified(2), 5.0);
        assert_eq!(c.global_bound(), 5.0);
        assert_eq!(c.audit_violations, 0);
    }

    #[test]
    fn min_is_order_independent() {
        let run = |order: &[(usize, f64)]| {
            let mut c = Coordinator::new(2, true, false, 2);
            for &(i, s) in order {
                c.notify(i, s);
            }
            c.global_bound()
        };
        assert_eq!(run(&[(0, 7.0), (1, 5.0)]), 5.0);
        assert_eq!(run(&[(1, 5.0), (0, 7.0)]), 5.0);
    }

    #[test]
    fn first_notify_updates_from_unbounded() {
        let mut c = Coordinator::new(2, true, false, 2);
        assert_eq!(c.global_bound(), f64::INFINITY);
        c.notify(1, 1000.0);
        assert_eq!(c.global_bound(), 1000.0);
    }

    #[test]
    fn counter_gap_pushes_exactly_the_laggard() {
        // counters end at [3, 0, 3]; threshold 2; only the silent worker 1
        // lags past the gap, so exactly worker 1 receives a push.
        let mut c = Coordinator::new(3, true, false, 2);
        for s in [30.0, 20.0, 10.0] {
            c.notify(0, s);
            c.notify(2, s + 1.0);
        }
        assert_eq!(c.counter(0), 3);
        assert_eq!(c.counter(1), 0);
        assert_eq!(c.counter(2), 3);
        assert!(c.take_push(0).is_none());
        assert!(c.take_push(2).is_none());
        assert_eq!(c.take_push(1), Some(10.0));
        assert!(c.take_push(1).is_none(), "consumed at most once per value");
    }

    #[test]
    fn push_trace_refines_laggard_bound() {
        // Worker 3 (index 2) notifies 5; worker 2 (index 1) sits at 6 and
        // lags, so it receives the pushed global bound 5.
        let mut c = Coordinator::new(3, true, false, 0);
        c.notify(0, 7.0);
        c.notify(1, 6.0);
        c.notify(0, 6.5);
        c.notify(2, 5.0);
        assert_eq!(c.global_bound(), 5.0);
        let pushed = c.take_push(1).expect("worker 2 lags behind");
        assert_eq!(pushed, 5.0);
        let s2 = 6.0f64.min(pushed);
        assert_eq!(s2, 5.0);
    }

    #[test]
    fn deterministic_mode_defers_to_barrier() {
        let mut c = Coordinator::new(2, true, true, 0);
        c.notify(0, 5.0);
        c.notify(0, 4.0);
        c.notify(0, 3.0);
        assert!(c.take_push(1).is_none(), "not delivered before the barrier");
        c.apply_barrier();
        assert_eq!(c.take_push(1), Some(3.0));
    }

    #[test]
    fn disabled_coordinator_ignores_traffic() {
        let mut c = Coordinator::new(2, false, false, 0);
        c.notify(0, 1.0);
        assert_eq!(c.global_bound(), f64::INFINITY);
        assert_eq!(c.notify_count, 0);
    }
}
