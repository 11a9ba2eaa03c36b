//! Deterministic data parallelism over an index range.

/// Apply `f` to every index in `0..n` across up to `threads` scoped workers,
/// collecting results in index order. Output is identical for any thread
/// count; chunk boundaries never reorder results.
pub fn parallel_map<T, F>(n: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let threads = threads.max(1).min(n.max(1));
    if threads <= 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(threads);
    let mut out: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let mut slices: Vec<&mut [Option<T>]> = Vec::with_capacity(threads);
    let mut rest = out.as_mut_slice();
    while !rest.is_empty() {
        let take = chunk.min(rest.len());
        let (head, tail) = rest.split_at_mut(take);
        slices.push(head);
        rest = tail;
    }
    std::thread::scope(|scope| {
        for (t, slice) in slices.into_iter().enumerate() {
            let f = &f;
            scope.spawn(move || {
                let start = t * chunk;
                for (offset, slot) in slice.iter_mut().enumerate() {
                    *slot = Some(f(start + offset));
                }
            });
        }
    });
    out.into_iter().map(|v| v.expect("worker filled slot")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order_for_any_thread_count() {
        let expected: Vec<usize> = (0..103).map(|i| i * i).collect();
        for threads in [1, 2, 3, 8, 200] {
            assert_eq!(parallel_map(103, threads, |i| i * i), expected);
        }
    }

    #[test]
    fn empty_range() {
        let out: Vec<u32> = parallel_map(0, 4, |_| unreachable!());
        assert!(out.is_empty());
    }
}
