//! Timing of the matrix-free Kronecker product against the dense product.

use std::alloc::{GlobalAlloc, Layout, System};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use anyhow::{bail, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use sparse_cps::kron::{KronOperator, LeadField};
use sparse_cps::rng::{substream, Stream};

/// Dense products above this size are not assembled.
pub const DENSE_LIMIT_BYTES: usize = 1 << 30;

/// System allocator that records peak live bytes while tracking is on.
pub struct CountingAllocator;

static TRACKING: AtomicBool = AtomicBool::new(false);
static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for CountingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let ptr = unsafe { System.alloc(layout) };
        if !ptr.is_null() && TRACKING.load(Ordering::Relaxed) {
            let live = LIVE.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(live, Ordering::Relaxed);
        }
        ptr
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        if TRACKING.load(Ordering::Relaxed) {
            LIVE.fetch_sub(layout.size().min(LIVE.load(Ordering::Relaxed)), Ordering::Relaxed);
        }
        unsafe { System.dealloc(ptr, layout) }
    }
}

fn peak_bytes<T>(f: impl FnOnce() -> T) -> (T, usize) {
    LIVE.store(0, Ordering::SeqCst);
    PEAK.store(0, Ordering::SeqCst);
    TRACKING.store(true, Ordering::SeqCst);
    let out = f();
    TRACKING.store(false, Ordering::SeqCst);
    (out, PEAK.load(Ordering::SeqCst))
}

/// Parses `MxN[,MxN...]`; an empty string is an empty grid.
pub fn parse_sizes(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let Some((m, n)) = s.split_once(['x', 'X']) else {
                bail!("size `{s}` must look like MxN");
            };
            let (m, n): (usize, usize) = (m.trim().parse()?, n.trim().parse()?);
            if m == 0 || n == 0 {
                bail!("size `{s}` must have m, n >= 1");
            }
            Ok((m, n))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub m: usize,
    pub n: usize,
    pub matrix_free: Duration,
    pub dense: Option<Duration>,
    /// Largest relative deviation between the two products.
    pub max_rel_diff: Option<f64>,
    pub matrix_free_peak_bytes: usize,
    pub dense_matrix_bytes: usize,
}

impl BenchRow {
    pub fn speedup(&self) -> Option<f64> {
        self.dense.map(|d| d.as_secs_f64() / self.matrix_free.as_secs_f64())
    }

    pub fn materializes_dense(&self) -> bool {
        self.matrix_free_peak_bytes >= self.dense_matrix_bytes
    }
}

fn best_of(repeats: usize, mut f: impl FnMut()) -> Duration {
    (0..repeats)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed()
        })
        .min()
        .unwrap_or_default()
}

pub fn run(sizes: &[(usize, usize)], seed: u64, repeats: usize) -> Result<Vec<BenchRow>> {
    let repeats = repeats.max(1);
    sizes
        .iter()
        .enumerate()
        .map(|(k, &(m, n))| {
            let mut rng = substream(seed, Stream::Bench, k as u64);
            let g = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
            let op = KronOperator::new(LeadField::new(g.clone())?);
            let dense_matrix_bytes = m * m * n * n * std::mem::size_of::<f64>();

            let (free_out, matrix_free_peak_bytes) = peak_bytes(|| op.apply(&x));
            let free_out = free_out?;
            let matrix_free = best_of(repeats, || {
                std::hint::black_box(op.apply(&x).ok());
            });

            let (dense, max_rel_diff) = if dense_matrix_bytes <= DENSE_LIMIT_BYTES {
                let mut dense_out = DVector::zeros(0);
                let t = best_of(repeats.min(3), || {
                    let big = g.kronecker(&g);
                    dense_out = &big * DVector::from_column_slice(&x);
                });
                let scale = dense_out.amax().max(f64::MIN_POSITIVE);
                let diff = free_out
                    .iter()
                    .zip(dense_out.iter())
                    .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
                (Some(t), Some(diff / scale))
            } else {
                (None, None)
            };
            Ok(BenchRow {
                m,
                n,
                matrix_free,
                dense,
                max_rel_diff,
                matrix_free_peak_bytes,
                dense_matrix_bytes,
            })
        })
        .collect()
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$e}")).unwrap_or_else(|| "skipped".into())
}

pub fn format_table(rows: &[BenchRow]) -> String {
    let mut out = String::from(
        "m\tn\tmatrix_free_s\tdense_s\tspeedup\tmax_rel_diff\tmatrix_free_peak_bytes\tdense_matrix_bytes\tmaterializes_dense\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{:.3e}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.m,
            r.n,
            r.matrix_free.as_secs_f64(),
            opt(r.dense.map(|d| d.as_secs_f64()), 3),
            r.speedup().map(|s| format!("{s:.1}")).unwrap_or_else(|| "skipped".into()),
            opt(r.max_rel_diff, 2),
            r.matrix_free_peak_bytes,
            r.dense_matrix_bytes,
            r.materializes_dense()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_grid_parsing() {
        assert_eq!(parse_sizes("4x4, 20x200").unwrap(), vec![(4, 4), (20, 200)]);
        assert!(parse_sizes("").unwrap().is_empty());
        assert!(parse_sizes("4").is_err());
        assert!(parse_sizes("0x3").is_err());
    }

    #[test]
    fn small_sizes_agree_with_dense() {
        let rows = run(&[(4, 4), (3, 5)], 1, 2).unwrap();
        for r in &rows {
            assert!(r.max_rel_diff.unwrap() <= 1e-12);
        }
        assert!(format_table(&[]).lines().count() == 1);
    }
}
