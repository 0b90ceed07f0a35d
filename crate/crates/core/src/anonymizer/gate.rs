use std::sync::{Condvar, Mutex};

/// Counting semaphore that caps simultaneous KDF evaluations, and with them
/// peak memory (`permits * memory_cost`).
#[derive(Debug)]
pub struct KdfGate {
    permits: usize,
    in_use: Mutex<usize>,
    released: Condvar,
}

impl KdfGate {
    pub fn new(permits: usize) -> Self {
        KdfGate {
            permits: permits.max(1),
            in_use: Mutex::new(0),
            released: Condvar::new(),
        }
    }

    /// As many permits as fit in `budget_kib`, never fewer than one.
    pub fn for_memory_budget(budget_kib: u64, memory_cost_kib: u32) -> Self {
        Self::new((budget_kib / memory_cost_kib.max(1) as u64) as usize)
    }

    pub fn permits(&self) -> usize {
        self.permits
    }

    pub fn in_use(&self) -> usize {
        *self.in_use.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut in_use = self.in_use.lock().unwrap_or_else(|e| e.into_inner());
        while *in_use >= self.permits {
            in_use = self
                .released
                .wait(in_use)
                .unwrap_or_else(|e| e.into_inner());
        }
        *in_use += 1;
        Permit { gate: self }
    }
}

pub struct Permit<'a> {
    gate: &'a KdfGate,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut in_use = self.gate.in_use.lock().unwrap_or_else(|e| e.into_inner());
        *in_use -= 1;
        self.gate.released.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;
    use std::thread;
    use std::time::Duration;

    use super::*;

    #[test]
    fn budget_to_permits() {
        assert_eq!(
            KdfGate::for_memory_budget(256 * 1024, 64 * 1024).permits(),
            4
        );
        assert_eq!(KdfGate::for_memory_budget(1024, 64 * 1024).permits(), 1);
    }

    #[test]
    fn never_exceeds_permits() {
        let gate = Arc::new(KdfGate::new(2));
        let peak = Arc::new(AtomicUsize::new(0));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let gate = Arc::clone(&gate);
                let peak = Arc::clone(&peak);
                thread::spawn(move || {
                    let _p = gate.acquire();
                    peak.fetch_max(gate.in_use(), Ordering::SeqCst);
                    thread::sleep(Duration::from_millis(5));
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
        assert_eq!(gate.in_use(), 0);
    }
}
