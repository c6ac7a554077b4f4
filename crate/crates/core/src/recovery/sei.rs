use super::RecoveryError;

/// Squared Euclidean imbalance of a byte histogram against the uniform
/// distribution: `Σ (count_x / N − 1/256)²`.
pub fn sei(histogram: &[u32; 256]) -> Result<f64, RecoveryError> {
    let n: u64 = histogram.iter().map(|&c| c as u64).sum();
    if n == 0 {
        return Err(RecoveryError::EmptyHistogram);
    }
    Ok(sei_unchecked(histogram, n))
}

#[inline]
pub(crate) fn sei_unchecked(histogram: &[u32; 256], n: u64) -> f64 {
    // Σ (c/N − 1/256)² = Σc²/N² − 1/256, since Σc = N.
    let sq: u64 = histogram.iter().map(|&c| (c as u64) * (c as u64)).sum();
    let n = n as f64;
    (sq as f64 / (n * n) - 1.0 / 256.0).max(0.0)
}
