use cylfield_core::Executor;

/// Runs tasks on `workers` scoped OS threads. Task `i` goes to thread
/// `i % workers`; results come back in task order, so the reduction order
/// is fixed for a given worker count.
#[derive(Debug, Clone, Copy)]
pub struct Threaded {
    workers: usize,
}

impl Threaded {
    pub fn new(workers: usize) -> Self {
        Threaded {
            workers: workers.max(1),
        }
    }
}

impl Executor for Threaded {
    fn workers(&self) -> usize {
        self.workers
    }

    fn run<R, F>(&self, tasks: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync,
    {
        let n = self.workers.min(tasks);
        if n <= 1 {
            return (0..tasks).map(f).collect();
        }
        let f = &f;
        let mut slots: Vec<Option<R>> = (0..tasks).map(|_| None).collect();
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..n)
                .map(|w| {
                    s.spawn(move || (w..tasks).step_by(n).map(|i| (i, f(i))).collect::<Vec<_>>())
                })
                .collect();
            for h in handles {
                let done = h.join().unwrap_or_else(|p| std::panic::resume_unwind(p));
                for (i, r) in done {
                    slots[i] = Some(r);
                }
            }
        });
        slots
            .into_iter()
            .map(|r| r.expect("every task ran"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_in_task_order() {
        for workers in [1, 2, 3, 8] {
            let out = Threaded::new(workers).run(7, |i| i * i);
            assert_eq!(out, vec![0, 1, 4, 9, 16, 25, 36]);
        }
        assert!(Threaded::new(4).run(0, |i| i).is_empty());
    }
}
