//! Closed-form error rates and curve interpolation.

/// Gaussian tail probability `Q(x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Gray-mapped QPSK bit error probability for symbol energy `sigma_d2`
/// and complex Gaussian estimation error of variance `cee`.
pub fn qpsk_ber(sigma_d2: f64, cee: f64) -> f64 {
    q_function((sigma_d2 / cee).sqrt())
}

/// Predicted uncoded QPSK BER when every data symbol sees error variance
/// `cee` at the given noise level, averaged over the per-symbol variances.
pub fn qpsk_ber_mean(sigma_d2: f64, cee: &[f64]) -> f64 {
    cee.iter().map(|&v| qpsk_ber(sigma_d2, v)).sum::<f64>() / cee.len() as f64
}

/// Abscissa where a decreasing BER curve crosses `target`, interpolating
/// `log10(ber)` linearly in dB. Points with zero errors are skipped.
pub fn crossing_db(points: &[(f64, f64)], target: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, b)| *b > 0.0)
        .map(|&(x, b)| (x, b.log10()))
        .collect();
    let t = target.log10();
    pts.windows(2).find_map(|w| {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if (y0 - t) * (y1 - t) <= 0.0 && y0 != y1 {
            Some(x0 + (t - y0) * (x1 - x0) / (y1 - y0))
        } else {
            None
        }
    })
}

/// Horizontal distance in dB between two curves at BER `target`;
/// positive when `b` needs more energy than `a`.
pub fn gap_db(a: &[(f64, f64)], b: &[(f64, f64)], target: f64) -> Option<f64> {
    Some(crossing_db(b, target)? - crossing_db(a, target)?)
}
