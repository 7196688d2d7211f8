//! Peak selection on a sampled spectrum.

/// Selected peaks and whether fewer than requested were found.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakSet {
    /// `(angle, magnitude)` pairs sorted by angle.
    pub peaks: Vec<(f64, f64)>,
    pub shortfall: bool,
}

/// Indices of local maxima. A bin must exceed both neighbours (a boundary bin
/// only its one neighbour); on a flat top the first bin of the plateau is
/// kept, provided the plateau is higher than what lies on both sides of it.
pub fn local_maxima(magnitudes: &[f64]) -> Vec<usize> {
    let n = magnitudes.len();
    let mut out = Vec::new();
    if n == 1 {
        out.push(0);
        return out;
    }
    let mut i = 0;
    while i < n {
        let v = magnitudes[i];
        let mut j = i;
        while j + 1 < n && magnitudes[j + 1] == v {
            j += 1;
        }
        let left_ok = i == 0 || magnitudes[i - 1] < v;
        let right_ok = j == n - 1 || magnitudes[j + 1] < v;
        // A whole-array plateau has no neighbour to beat.
        if left_ok && right_ok && !(i == 0 && j == n - 1) {
            out.push(i);
        }
        i = j + 1;
    }
    out
}

/// The `q` largest local maxima, returned in ascending angle order.
pub fn pick_peaks(magnitudes: &[f64], grid: &[f64], q: usize) -> PeakSet {
    assert_eq!(magnitudes.len(), grid.len(), "spectrum and grid lengths differ");
    let mut idx = local_maxima(magnitudes);
    // Stable sort keeps the lower angle first among equal heights.
    idx.sort_by(|&a, &b| magnitudes[b].total_cmp(&magnitudes[a]));
    let shortfall = idx.len() < q;
    idx.truncate(q);
    idx.sort_unstable();
    PeakSet {
        peaks: idx.iter().map(|&i| (grid[i], magnitudes[i])).collect(),
        shortfall,
    }
}

/// Every local maximum at or above `zeta` times the global maximum.
pub fn pick_peaks_threshold(magnitudes: &[f64], grid: &[f64], zeta: f64) -> Vec<(f64, f64)> {
    assert_eq!(magnitudes.len(), grid.len(), "spectrum and grid lengths differ");
    let top = magnitudes.iter().copied().fold(0.0, f64::max);
    local_maxima(magnitudes)
        .into_iter()
        .filter(|&i| magnitudes[i] >= zeta * top)
        .map(|i| (grid[i], magnitudes[i]))
        .collect()
}
