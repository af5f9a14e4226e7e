//! Execution-mode plumbing: data-parallel maps with a sequential fallback.
//!
//! Heavy stages (sphere certification, per-step solves, grid evaluation) are
//! embarrassingly parallel over an index range. Only the *map* runs in
//! parallel — reductions happen sequentially over the collected results in
//! index order, so both modes produce bit-identical output.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    /// Rayon work-stealing over the index range (needs the `parallel`
    /// feature; silently equals `Sequential` without it).
    #[default]
    Parallel,
    Sequential,
}

/// Map `f` over `0..len`, honoring `mode`, returning results in index order.
pub fn map_indexed<T, F>(mode: ExecMode, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if mode == ExecMode::Parallel {
            use rayon::prelude::*;
            return (0..len).into_par_iter().map(f).collect();
        }
    }
    let _ = mode;
    (0..len).map(f).collect()
}

/// Map `f` over a slice, honoring `mode`, preserving order.
pub fn map_slice<'a, S, T, F>(mode: ExecMode, items: &'a [S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&'a S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if mode == ExecMode::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
    }
    let _ = mode;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_bitwise() {
        // A reduction famous for order sensitivity: summing many magnitudes.
        // Because the reduction runs over the collected vector sequentially,
        // both modes must agree exactly, not just approximately.
        let work = |i: usize| ((i as f64) * 0.1).sin() / (i as f64 + 1.0);
        let a: Vec<f64> = map_indexed(ExecMode::Parallel, 10_000, work);
        let b: Vec<f64> = map_indexed(ExecMode::Sequential, 10_000, work);
        assert_eq!(a, b);
        let sa: f64 = a.iter().sum();
        let sb: f64 = b.iter().sum();
        assert_eq!(sa.to_bits(), sb.to_bits());
    }

    #[test]
    fn slice_map_preserves_order() {
        let items: Vec<u64> = (0..257).collect();
        let out = map_slice(ExecMode::Parallel, &items, |&x| x * 2);
        assert_eq!(out, (0..257).map(|x| x * 2).collect::<Vec<_>>());
    }
}
