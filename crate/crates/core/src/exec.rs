use alloc::vec::Vec;

/// Runs independent tasks and returns their results in task-index order.
///
/// Callers reduce the returned values front to back, so results only depend
/// on the number of tasks, never on scheduling.
pub trait Executor: Sync {
    fn workers(&self) -> usize;

    fn run<R, F>(&self, tasks: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync;
}

/// Runs every task on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Executor for Serial {
    fn workers(&self) -> usize {
        1
    }

    fn run<R, F>(&self, tasks: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync,
    {
        (0..tasks).map(f).collect()
    }
}

/// Splits `0..len` into `parts` contiguous ranges whose sizes differ by at most one.
pub fn chunk_ranges(len: usize, parts: usize) -> Vec<core::ops::Range<usize>> {
    let parts = parts.max(1);
    let base = len / parts;
    let extra = len % parts;
    let mut start = 0;
    (0..parts)
        .map(|i| {
            let size = base + usize::from(i < extra);
            let r = start..start + size;
            start += size;
            r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_range() {
        let r = chunk_ranges(10, 3);
        assert_eq!(r, alloc::vec![0..4, 4..7, 7..10]);
        assert_eq!(chunk_ranges(2, 4).iter().map(|r| r.len()).sum::<usize>(), 2);
    }
}
